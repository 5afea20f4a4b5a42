"""Exact certification and desk-scale stability lab for a closed-form singular MHD flow family.

Subpackages / modules:

- ``exact_fields``   closed-form velocity/magnetic/pressure evaluation in float
- ``timepoly``       exact polynomial ring with time-power coefficients, residual certifiers
- ``selfsim``        similarity change of variables between the shrinking box and the unit cube
- ``gridops``        finite-difference operators, sine-spectral solvers, Leray projection
- ``linsolver``      IMEX integrator for the linearized six-field system on the unit cube
- ``energy_monitor`` norms, decay fitting, energy bookkeeping, coefficient conditions
- ``nash_moser``     smoothing cutoffs, nonlinear residual operators, iteration driver
- ``cli``            command line front door (verify-exact / simulate-linear / ...)
"""

__version__ = "0.1.0"
