"""randns: pseudo-spectral Navier-Stokes with randomized rough initial data.

Simulates the periodic Navier-Stokes mild-solution construction for
Gaussian-randomized initial data of negative Sobolev order and verifies the
associated probabilistic norm and success-probability estimates by Monte
Carlo ensembles.
"""

__version__ = "0.1.0"
