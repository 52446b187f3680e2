"""GSM signalling layer: constellations, system configuration, bit codec.

A (N, M, R) generalized spatial modulation system activates R of N
transmit antennas per channel use.  floor(log2 C(N,R)) bits select the
active-antenna subset through the combinadic bijection and R*log2|A|
bits select one constellation point per active antenna, so a transmit
vector carries

    eta = R*floor(log2|A|) + floor(log2 C(N,R))   bits.

Bit layout (fixed here; encoder and BER counter must agree): the
antenna-index bits occupy the first (most significant) positions,
followed by the symbol bits grouped per active antenna in ascending
antenna order.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .combinadics import binomial, bits_to_int, int_to_bits, rank, unrank
from .errors import InfeasibleConfigError, InvalidPatternError, MalformedSymbolError

__all__ = [
    "Alphabet", "bpsk", "qam", "make_alphabet",
    "GsmConfig", "ActivationPattern",
    "spectral_efficiency", "activation_matrix", "pattern_set",
    "encode", "decode", "enumerate_signal_set",
]

SYMBOL_MATCH_TOL = 1e-6
DEFAULT_ENUM_CAP = 1 << 20


@dataclass(frozen=True)
class Alphabet:
    """A unit-average-energy constellation.

    ``points[t]`` is the point labelled by the little integer ``t``
    (i.e. by the bit group interpreted MSB-first), so the label map is
    implicit in the ordering.
    """

    name: str
    bits_per_symbol: int
    points: tuple

    def __post_init__(self):
        n = len(self.points)
        if n != 1 << self.bits_per_symbol:
            raise ValueError("alphabet size must be 2**bits_per_symbol")
        energy = sum(abs(p) ** 2 for p in self.points) / n
        if abs(energy - 1.0) > 1e-12:
            raise ValueError(f"alphabet must have unit average energy, got {energy!r}")

    @property
    def size(self) -> int:
        return len(self.points)

    def points_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.complex128)


def _gray_to_index(g: int) -> int:
    """Inverse of the binary-reflected Gray map index -> index ^ (index >> 1)."""
    b = g
    shift = 1
    while g >> shift:
        b ^= g >> shift
        shift += 1
    return b


def _pam_levels(bits: int) -> np.ndarray:
    """Gray-labelled amplitude levels {-(m-1), ..., m-1}; entry t is level for label t."""
    m = 1 << bits
    levels = np.empty(m)
    for t in range(m):
        levels[t] = 2 * _gray_to_index(t) - (m - 1)
    return levels


def bpsk() -> Alphabet:
    return Alphabet("bpsk", 1, (1 + 0j, -1 + 0j))


def qam(order: int) -> Alphabet:
    """Gray-labelled QAM on a rectangular grid, unit average energy.

    Even bit counts give the square constellation; odd bit counts (e.g.
    32-QAM) use the 2^ceil(k/2) x 2^floor(k/2) rectangle with per-axis
    Gray labels.  The first ceil(k/2) bits of a label index the in-phase
    level, the rest the quadrature level.
    """
    k = int(math.log2(order))
    if 1 << k != order or k < 2:
        raise ValueError(f"QAM order must be a power of two >= 4, got {order}")
    ki = (k + 1) // 2
    kq = k // 2
    ilev = _pam_levels(ki)
    qlev = _pam_levels(kq)
    mi, mq = 1 << ki, 1 << kq
    energy = ((mi * mi - 1) + (mq * mq - 1)) / 3.0
    scale = 1.0 / math.sqrt(energy)
    points = []
    for t in range(order):
        ti, tq = t >> kq, t & (mq - 1)
        points.append(complex(ilev[ti], qlev[tq]) * scale)
    return Alphabet(f"qam{order}", k, tuple(points))


def make_alphabet(name: str) -> Alphabet:
    """Parse an alphabet name: 'bpsk' or 'qamM' (e.g. qam4, qam16, qam32)."""
    name = name.strip().lower()
    if name == "bpsk":
        return bpsk()
    if name.startswith("qam"):
        return qam(int(name[3:]))
    raise ValueError(f"unknown alphabet {name!r} (expected 'bpsk' or 'qam<M>')")


class ActivationPattern(NamedTuple):
    """An allowed antenna subset: strictly increasing 0-based indices plus its rank."""

    indices: tuple
    rank: int


@dataclass(frozen=True)
class GsmConfig:
    """System parameters of a (n_tx, n_rx, n_rf)-GSM link.

    ``sigma2_x`` is the total transmit power (E||x||^2) and ``sigma2``
    the per-receive-antenna noise variance; SNR = sigma2_x / sigma2.
    """

    n_tx: int
    n_rx: int
    n_rf: int
    alphabet: Alphabet = field(default_factory=bpsk)
    sigma2_x: float = 1.0
    sigma2: float = 1.0

    def __post_init__(self):
        if not (1 <= self.n_rf <= self.n_tx):
            raise ValueError(f"need 1 <= n_rf <= n_tx, got n_rf={self.n_rf}, n_tx={self.n_tx}")
        if self.n_rx < 1:
            raise ValueError("n_rx must be >= 1")
        if self.sigma2_x <= 0:
            raise ValueError("sigma2_x must be positive")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be non-negative")

    @property
    def index_bits(self) -> int:
        """Antenna-index bits per channel use: floor(log2 C(n_tx, n_rf))."""
        return binomial(self.n_tx, self.n_rf).bit_length() - 1

    @property
    def num_patterns(self) -> int:
        """Size of the allowed activation-pattern set: 2**index_bits."""
        return 1 << self.index_bits

    @property
    def bits_per_use(self) -> int:
        return spectral_efficiency(self)

    @property
    def symbol_scale(self) -> float:
        """Per-symbol amplitude sqrt(sigma2_x / n_rf), so E(s s^H) = (sigma2_x/R) I."""
        return math.sqrt(self.sigma2_x / self.n_rf)

    def with_sigma2(self, sigma2: float) -> "GsmConfig":
        return GsmConfig(self.n_tx, self.n_rx, self.n_rf, self.alphabet, self.sigma2_x, sigma2)

    def with_snr_db(self, snr_db: float) -> "GsmConfig":
        """Set the noise variance from SNR[dB] = 10 log10(sigma2_x / sigma2)."""
        return self.with_sigma2(self.sigma2_x / 10.0 ** (snr_db / 10.0))


def spectral_efficiency(cfg: GsmConfig) -> int:
    """Bits per channel use: n_rf*floor(log2|A|) + floor(log2 C(n_tx, n_rf))."""
    return cfg.n_rf * cfg.alphabet.bits_per_symbol + cfg.index_bits


def activation_matrix(pattern, n_tx: int) -> np.ndarray:
    """The n_tx x R 0/1 matrix with A[I_r, r] = 1 for active indices I_r."""
    indices = pattern.indices if isinstance(pattern, ActivationPattern) else tuple(pattern)
    a = np.zeros((n_tx, len(indices)), dtype=np.int8)
    for r, i in enumerate(indices):
        a[i, r] = 1
    return a


def pattern_set(cfg: GsmConfig, cap: int = 1 << 22) -> list:
    """All allowed activation patterns in rank (colexicographic) order."""
    if cfg.num_patterns > cap:
        raise InfeasibleConfigError(
            f"pattern set has {cfg.num_patterns} elements, above cap {cap}")
    return [ActivationPattern(unrank(n, cfg.n_rf), n) for n in range(cfg.num_patterns)]


def encode(bits, cfg: GsmConfig) -> np.ndarray:
    """Map eta bits to the length-n_tx transmit vector x (exactly n_rf nonzeros)."""
    bits = [int(b) for b in bits]
    eta = cfg.bits_per_use
    if len(bits) != eta:
        raise ValueError(f"expected {eta} bits, got {len(bits)}")
    k = cfg.alphabet.bits_per_symbol
    g = bits_to_int(bits[:cfg.index_bits])
    support = unrank(g, cfg.n_rf)
    points = cfg.alphabet.points_array()
    x = np.zeros(cfg.n_tx, dtype=np.complex128)
    pos = cfg.index_bits
    for antenna in support:
        label = bits_to_int(bits[pos:pos + k])
        x[antenna] = points[label]
        pos += k
    return x * cfg.symbol_scale


def decode(x, cfg: GsmConfig) -> np.ndarray:
    """Recover the eta bits from a hard GSM vector; inverse of :func:`encode`.

    Raises InvalidPatternError when the support is not an allowed
    pattern and MalformedSymbolError when a nonzero entry is not a
    (scaled) constellation point.
    """
    x = np.asarray(x, dtype=np.complex128)
    support = tuple(int(i) for i in np.nonzero(x)[0])
    if len(support) != cfg.n_rf:
        raise InvalidPatternError(
            f"support size {len(support)} != n_rf {cfg.n_rf}")
    g = rank(support)
    if g >= cfg.num_patterns:
        raise InvalidPatternError(
            f"support {support} has rank {g} >= allowed set size {cfg.num_patterns}")
    bits = int_to_bits(g, cfg.index_bits)
    points = cfg.alphabet.points_array()
    k = cfg.alphabet.bits_per_symbol
    for antenna in support:
        s = x[antenna] / cfg.symbol_scale
        label = int(np.argmin(np.abs(s - points)))
        if abs(s - points[label]) > SYMBOL_MATCH_TOL:
            raise MalformedSymbolError(
                f"entry {x[antenna]!r} at antenna {antenna} is not a constellation point")
        bits.extend(int_to_bits(label, k))
    return np.asarray(bits, dtype=np.uint8)


def enumerate_signal_set(cfg: GsmConfig, cap: int = DEFAULT_ENUM_CAP) -> np.ndarray:
    """All |G| = L * |A|^R transmit vectors, row g = encode(bits of g).

    The row index equals the integer value of the encoded bit string,
    which makes exhaustive-search detection self-decoding.
    """
    size = cfg.num_patterns * cfg.alphabet.size ** cfg.n_rf
    if size > cap:
        raise InfeasibleConfigError(
            f"exhaustive enumeration infeasible: |G| = {size} exceeds cap {cap}")
    eta = cfg.bits_per_use
    vectors = np.empty((size, cfg.n_tx), dtype=np.complex128)
    for g in range(size):
        vectors[g] = encode(int_to_bits(g, eta), cfg)
    return vectors
