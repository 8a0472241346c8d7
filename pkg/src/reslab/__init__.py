"""reslab: numerical laboratory for zero-energy obstructions of
4D Schrodinger operators H = -Laplace + V.

Modules:
    specfun     Bessel/Hankel functions, free-resolvent kernel, expansion
                kernels and fitted expansion constants.
    operator    quadrature grids, potentials, dense operator assembly.
    spectral    classification of the zero-energy obstruction, direct and
                structured inversion, low-energy inverse expansions.
    propagator  Filon-type oscillatory quadrature, Stone-formula
                propagator kernels, and decay-law fits.
    oracle      independent cross-checks (radial reduction, exact free
                propagator).
    cli         command-line interface.
"""

__version__ = "0.1.0"
