"""Wavelet renormalisation group for free lattice scalar fields.

Modules
-------
wavelets      Daubechies filter banks, scaling-function evaluation.
lattice       Dyadic torus lattices, harmonic Hamiltonian, ground states.
gaussian      Quasi-free states, Weyl operators, Wick products.
rg            Scaling maps, renormalised states, scaling limits.
dynamics      Lattice and continuum time evolution, light cones.
mera          MERA layers of the scaling map.
config        Run configuration.
experiments   Presets, data emission and manifests.
cli           Command-line front end (``waverg``).
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConvergenceError,
    CutoffError,
    DomainError,
    FitError,
    InfraredError,
    InstabilityError,
    InvalidFilterError,
    SobolevError,
    UnsupportedFamilyError,
    ValidationError,
    WaveRGError,
)
from .lattice import HarmonicModel, LatticeSpec  # noqa: F401
from .wavelets import FilterBank, daubechies_filter  # noqa: F401
