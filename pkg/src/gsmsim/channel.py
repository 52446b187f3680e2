"""Rayleigh MIMO channel with reproducible counter-based randomness.

Every Monte Carlo trial derives its generator from (master_seed,
stream_id), so a run partitioned over any number of workers draws
exactly the same numbers per trial.
"""

import numpy as np

__all__ = ["rng_stream", "sample_channel", "transmit"]


def rng_stream(master_seed: int, stream_id: int) -> np.random.Generator:
    """Independent generator for one trial, a pure function of its arguments."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(stream_id,))
    return np.random.default_rng(ss)


def sample_channel(n_rx: int, n_tx: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. CN(0,1) channel matrix: real/imag parts each N(0, 1/2)."""
    h = rng.standard_normal((n_rx, n_tx)) + 1j * rng.standard_normal((n_rx, n_tx))
    return h * np.sqrt(0.5)


def transmit(h: np.ndarray, x: np.ndarray, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """y = H x + w with w ~ CN(0, sigma2 I)."""
    m = h.shape[0]
    y = h @ x
    if sigma2 > 0:
        w = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) * np.sqrt(sigma2 / 2)
        y = y + w
    return y
