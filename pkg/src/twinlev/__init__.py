"""Two charged levitated nanoparticles under continuous measurement and cold damping.

Submodules
----------
params        experimental inputs and derived rates
equilibrium   displaced equilibrium with a compensation field
gaussian      conditional covariance engine
filters       feedback filter models
spectra       record spectra, force sensitivity, standard quantum limit
entanglement  logarithmic negativity and damping optimisation
trajectory    stochastic trajectory simulator
cli           command-line interface
"""

from .params import DerivedParams, PhysicalConfig, derive, paper_config

__version__ = "0.1.0"

__all__ = ["DerivedParams", "PhysicalConfig", "derive", "paper_config", "__version__"]
