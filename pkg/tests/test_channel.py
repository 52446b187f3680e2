import numpy as np

from gsmsim.channel import rng_stream, sample_channel, transmit


def test_channel_moments():
    rng = rng_stream(1234, 0)
    h = sample_channel(1000, 1000, rng)  # 10^6 draws
    assert abs(np.mean(np.abs(h) ** 2) - 1.0) < 0.01
    assert abs(np.mean(h)) < 0.01
    assert abs(np.var(h.real) - 0.5) < 0.01
    assert abs(np.var(h.imag) - 0.5) < 0.01


def test_streams_are_deterministic():
    h1 = sample_channel(8, 8, rng_stream(42, 7))
    h2 = sample_channel(8, 8, rng_stream(42, 7))
    assert np.array_equal(h1, h2)
    h3 = sample_channel(8, 8, rng_stream(42, 8))
    assert not np.array_equal(h1, h3)


def test_streams_independent_of_order():
    # drawing stream 5 after heavy use of stream 4 changes nothing
    a = rng_stream(9, 4)
    a.standard_normal(10_000)
    h_after = sample_channel(4, 4, rng_stream(9, 5))
    h_fresh = sample_channel(4, 4, rng_stream(9, 5))
    assert np.array_equal(h_after, h_fresh)


def test_noiseless_transmit():
    rng = rng_stream(5, 0)
    h = sample_channel(6, 4, rng)
    x = np.arange(4) + 1j
    y = transmit(h, x, 0.0, rng)
    assert np.array_equal(y, h @ x)


def test_noise_only_variance():
    rng = rng_stream(6, 0)
    m, sigma2, trials = 4, 0.7, 100_000
    h = sample_channel(m, 3, rng)
    x = np.zeros(3, dtype=complex)
    ys = np.array([transmit(h, x, sigma2, rng) for _ in range(trials)])
    per_component = np.mean(np.abs(ys) ** 2, axis=0)
    assert np.all(np.abs(per_component / sigma2 - 1) < 0.03)


def test_received_energy_decomposition():
    rng = rng_stream(7, 0)
    m, sigma2 = 5, 0.3
    h = sample_channel(m, 4, rng)
    x = (np.arange(4) - 1.5) * (0.5 + 0.25j)
    signal = np.linalg.norm(h @ x) ** 2
    ys = np.array([transmit(h, x, sigma2, rng) for _ in range(100_000)])
    mean_energy = np.mean(np.sum(np.abs(ys) ** 2, axis=1))
    assert abs(mean_energy - (signal + m * sigma2)) / (signal + m * sigma2) < 0.01
