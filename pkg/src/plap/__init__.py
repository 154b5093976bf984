"""Dirichlet p-Laplacian eigenvalues on bounded and unbounded planar domains."""

__version__ = "0.1.0"
