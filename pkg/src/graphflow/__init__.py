"""Gradient flows of interaction energies on weighted graphs.

Simulation of the upwind nonlocal continuity equation driven by interaction
and potential energies, the associated transport quasi-metric (exact on the
two-point space, numeric via a convex Benamou-Brenier discretization),
variational diagnostics, and discrete-to-continuum experiments.
"""

__version__ = "0.1.0"
