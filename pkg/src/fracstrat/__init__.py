"""Weighted extension problems, frequency analysis and quantitative stratification.

Modules:

* ``geometry``: grids, metric charts, constants and weighted quadrature.
* ``polynomials``: exact homogeneous solutions of the model equation.
* ``solver``: finite-volume extension solver and the two fractional-Laplacian routes.
* ``frequency``: frequency functionals, tangent maps and symmetry defects.
* ``strata``: nodal/critical/singular sets, strata, covers and dimension estimates.
* ``formats``, ``config``, ``experiments``, ``cli``: artifact plumbing.
"""

__version__ = "0.1.0"
