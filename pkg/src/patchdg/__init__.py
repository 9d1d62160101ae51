"""Multi-patch discontinuous Galerkin wave solvers on B-spline patch bases.

Subpackage layout:

- ``splines``: knot vectors, basis evaluation, knot smoothing and placement
- ``quadrature``: Gauss-Legendre and composite rules
- ``refops``: reference mass/stiffness/face operators, inequality constants
- ``geometry``: patch mappings, metric factors, multi-patch connectivity
- ``wadg``: weighted and weight-adjusted mass application per patch
- ``semidiscrete``: DG right-hand sides for advection and acoustic waves
- ``timeint``: low-storage Runge-Kutta stepping and timestep estimates
- ``analysis``: spectra, dispersion relations, eigenvalue and projection studies
- ``cli``: command-line entry point for the experiment drivers
"""

__version__ = "0.1.0"
