"""Wiener sausage, Poisson obstacles and heat-kernel numerics on weighted graphs.

Submodules
----------
space        metric measure graphs, generators, balls, volumes and nets
spectral     Laplacian, heat kernels, Dirichlet eigenvalues and GE fits
walker       continuous-time random walk, sausage volumes, exit times
obstacles    Poisson obstacle fields, annealed survival, occupancy tails
asymptotics  exact interval DP, scaling experiment and certificates
cli          command-line front end (``python3 -m sausagelab``)
"""
__version__ = '0.1.0'

from ._core import BACKEND  # noqa: E402

__all__ = ["BACKEND", "__version__"]
