import random
from fractions import Fraction

import numpy as np
import pytest

from mhdblowlab.timepoly import RationalParams


def random_fraction(rng: random.Random, lo=-6, hi=6, max_den=6,
                    exclude=()) -> Fraction:
    while True:
        num = rng.randint(lo, hi)
        den = rng.randint(1, max_den)
        f = Fraction(num, den)
        if f != 0 and f not in exclude:
            return f


def random_rational_params(rng: random.Random) -> RationalParams:
    a = random_fraction(rng, exclude=(Fraction(-1, 4),))
    k = random_fraction(rng)
    a_bar = random_fraction(rng)
    nu = Fraction(rng.randint(0, 4), rng.randint(1, 3))
    mu = Fraction(rng.randint(0, 4), rng.randint(1, 3))
    t_star = Fraction(rng.randint(1, 5), rng.randint(1, 3))
    return RationalParams(a=a, k=k, a_bar=a_bar, nu=nu, mu=mu, t_star=t_star)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def pyrng():
    return random.Random(20240811)
