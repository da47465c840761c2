"""Grid-free turbulent wall models: spectral and finite-volume equilibrium
solvers, a 3D integral wall model, and an unstructured-surface gradient
sandbox."""

__version__ = "0.1.0"
