"""Generalized spatial modulation MIMO toolkit.

Combinadic bit-to-antenna-pattern encoding, Rayleigh channel simulation,
ML/MMSE/message-passing detection, Monte Carlo capacity bounds, and a
batch CLI that writes CSV result tables.
"""

from ._backend import HAVE_KERNELS
from .signal import Alphabet, GsmConfig, bpsk, make_alphabet, qam, spectral_efficiency

__version__ = "0.1.0"

__all__ = [
    "HAVE_KERNELS", "Alphabet", "GsmConfig", "bpsk", "qam",
    "make_alphabet", "spectral_efficiency", "__version__",
]
