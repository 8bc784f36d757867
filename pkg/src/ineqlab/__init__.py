"""Numerical laboratory for convex duality, L^p geometry and Sobolev/HLS stability.

Modules
-------
grid
    Periodic grids, grid functions and Fourier multipliers.
duality
    Tabulated convex functions, Legendre transforms and rate functions.
lp
    Geometry of ``||f||_p^2``: convexity gaps and gradient continuity.
sobolev
    Sobolev and HLS functionals, bubbles and stability transfer.
fdflow
    Radial fast diffusion and the Sobolev deficit along the flow.
suites, cli
    Verification suites and the ``ineqlab`` command.
"""

__version__ = "0.1.0"
