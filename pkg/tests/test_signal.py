import itertools
import math

import numpy as np
import pytest

from gsmsim.combinadics import binomial, int_to_bits
from gsmsim.errors import InfeasibleConfigError, InvalidPatternError, MalformedSymbolError
from gsmsim.signal import (
    ActivationPattern, GsmConfig, activation_matrix, bpsk, decode, encode,
    enumerate_signal_set, make_alphabet, pattern_set, qam, spectral_efficiency,
)


@pytest.mark.parametrize("name", ["bpsk", "qam4", "qam16", "qam32", "qam64"])
def test_alphabet_unit_energy(name):
    a = make_alphabet(name)
    energy = np.mean(np.abs(a.points_array()) ** 2)
    assert abs(energy - 1.0) < 1e-12


@pytest.mark.parametrize("name", ["qam4", "qam16", "qam32", "qam64"])
def test_alphabet_labels_distinct_points(name):
    a = make_alphabet(name)
    pts = a.points_array()
    assert len({(round(p.real, 12), round(p.imag, 12)) for p in pts}) == a.size


@pytest.mark.parametrize("name", ["qam4", "qam16", "qam64"])
def test_gray_labels_adjacent_levels_differ_one_bit(name):
    # nearest horizontal/vertical neighbours on the grid differ in exactly one label bit
    a = make_alphabet(name)
    pts = a.points_array()
    gap = np.min(np.abs(pts[1:] - pts[0]))
    for t1, t2 in itertools.combinations(range(a.size), 2):
        if abs(pts[t1] - pts[t2]) < gap * 1.001:
            assert bin(t1 ^ t2).count("1") == 1


def test_bpsk_points():
    a = bpsk()
    assert a.points == (1 + 0j, -1 + 0j)


def test_spectral_efficiency_headline_configs():
    q4 = qam(4)
    assert spectral_efficiency(GsmConfig(32, 32, 16, q4)) == 61
    assert spectral_efficiency(GsmConfig(64, 64, 16, q4)) == 80
    assert spectral_efficiency(GsmConfig(64, 64, 32, q4)) == 124


def test_spectral_efficiency_small_derived():
    # 2*1 + floor(log2 C(4,2)) = 2 + 2
    assert spectral_efficiency(GsmConfig(4, 4, 2, bpsk())) == 4


@pytest.mark.parametrize("n", [2, 3, 7, 8, 15])
def test_special_case_efficiencies(n):
    a = qam(4)
    # single active antenna: log2|A| + floor(log2 N)
    assert spectral_efficiency(GsmConfig(n, 1, 1, a)) == a.bits_per_symbol + int(math.log2(n))
    # all antennas active: N log2|A|
    assert spectral_efficiency(GsmConfig(n, 1, n, a)) == n * a.bits_per_symbol


def test_activation_matrix_worked_example():
    # active 1-based antennas (1, 3, 6, 8) in an 8-antenna system
    a = activation_matrix((0, 2, 5, 7), 8)
    expected = np.zeros((8, 4), dtype=np.int8)
    expected[0, 0] = expected[2, 1] = expected[5, 2] = expected[7, 3] = 1
    assert np.array_equal(a, expected)


def test_activation_matrix_single():
    assert np.array_equal(activation_matrix((0,), 1), np.array([[1]], dtype=np.int8))


def test_activation_matrix_orthonormal_columns():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(2, 24))
        r = int(rng.integers(1, n + 1))
        idx = tuple(sorted(rng.choice(n, size=r, replace=False).tolist()))
        a = activation_matrix(idx, n).astype(float)
        assert np.array_equal(a.T @ a, np.eye(r))
        assert np.count_nonzero(a.sum(axis=1)) == r


def test_pattern_set_n4_r2():
    cfg = GsmConfig(4, 4, 2, bpsk())
    pats = pattern_set(cfg)
    assert len(pats) == 4
    one_based = {tuple(i + 1 for i in p.indices) for p in pats}
    assert one_based == {(1, 2), (1, 3), (1, 4), (2, 3)}


def test_pattern_set_table_rows():
    cfg = GsmConfig(4, 4, 3, bpsk())
    pats = pattern_set(cfg)
    assert [p.indices for p in pats] == [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
    assert [p.rank for p in pats] == [0, 1, 2, 3]


def test_pattern_set_full_when_r_equals_n():
    cfg = GsmConfig(5, 1, 5, bpsk())
    pats = pattern_set(cfg)
    assert pats == [ActivationPattern((0, 1, 2, 3, 4), 0)]


def test_encode_antenna_selection_worked_example():
    # N=10, R=4: antenna bits 0010011 activate 1-based antennas (1,2,5,7)
    cfg = GsmConfig(10, 1, 4, bpsk())
    assert cfg.index_bits == 7
    bits = [0, 0, 1, 0, 0, 1, 1] + [0] * 4
    x = encode(bits, cfg)
    support = tuple(np.nonzero(x)[0] + 1)
    assert support == (1, 2, 5, 7)


def test_encode_table_row():
    cfg = GsmConfig(4, 1, 3, bpsk())
    x = encode([1, 1] + [0, 0, 0], cfg)
    assert tuple(np.nonzero(x)[0] + 1) == (2, 3, 4)


def test_decode_antenna_bits_worked_example():
    # detected 1-based support (3,4,5,6) -> antenna bits for decimal 14
    cfg = GsmConfig(10, 1, 4, bpsk())
    x = np.zeros(10, dtype=complex)
    x[[2, 3, 4, 5]] = cfg.symbol_scale  # label-0 BPSK point on each active antenna
    bits = decode(x, cfg)
    assert bits[:7].tolist() == [0, 0, 0, 1, 1, 1, 0]


def test_decode_all_zero_antenna_bits():
    cfg = GsmConfig(6, 1, 2, bpsk())
    x = encode([0] * cfg.bits_per_use, cfg)
    assert tuple(np.nonzero(x)[0]) == (0, 1)  # pattern rank 0


@pytest.mark.parametrize("cfg", [
    GsmConfig(4, 1, 2, bpsk()),          # eta 4
    GsmConfig(4, 1, 3, qam(4)),          # eta 8
    GsmConfig(10, 1, 4, bpsk()),         # eta 11
    GsmConfig(6, 1, 2, qam(16)),         # eta 11
    GsmConfig(8, 1, 2, qam(4)),          # eta 8
])
def test_codec_roundtrip_exhaustive(cfg):
    eta = cfg.bits_per_use
    assert eta <= 16
    for g in range(1 << eta):
        bits = int_to_bits(g, eta)
        x = encode(bits, cfg)
        assert np.count_nonzero(x) == cfg.n_rf
        out = decode(x, cfg)
        assert out.tolist() == bits


def test_codec_roundtrip_random_large():
    cfg = GsmConfig(16, 1, 8, qam(4), sigma2_x=2.0)
    eta = cfg.bits_per_use  # 29
    rng = np.random.default_rng(3)
    for _ in range(10_000):
        bits = rng.integers(0, 2, size=eta).tolist()
        assert decode(encode(bits, cfg), cfg).tolist() == bits


def test_encode_rejects_wrong_length():
    cfg = GsmConfig(4, 1, 2, bpsk())
    with pytest.raises(ValueError):
        encode([0, 1], cfg)


def test_decode_error_taxonomy():
    cfg = GsmConfig(4, 1, 2, bpsk())  # L = 4, patterns (0,1),(0,2),(1,2),(0,3)
    bad_support = np.zeros(4, dtype=complex)
    bad_support[[2, 3]] = cfg.symbol_scale  # rank 5 >= L
    with pytest.raises(InvalidPatternError):
        decode(bad_support, cfg)
    wrong_size = np.zeros(4, dtype=complex)
    wrong_size[0] = cfg.symbol_scale
    with pytest.raises(InvalidPatternError):
        decode(wrong_size, cfg)
    bad_symbol = np.zeros(4, dtype=complex)
    bad_symbol[[0, 1]] = 0.37 + 0.2j
    with pytest.raises(MalformedSymbolError):
        decode(bad_symbol, cfg)


def test_signal_set_n4_r2_bpsk_matches_display():
    cfg = GsmConfig(4, 4, 2, bpsk())
    got = {tuple(v) for v in enumerate_signal_set(cfg)}
    expected = set()
    for sup in [(0, 1), (0, 2), (0, 3), (1, 2)]:
        for s0, s1 in itertools.product((1, -1), repeat=2):
            v = [0j] * 4
            v[sup[0]] = s0 * cfg.symbol_scale
            v[sup[1]] = s1 * cfg.symbol_scale
            expected.add(tuple(v))
    assert got == expected
    assert len(got) == 16


def test_signal_set_degenerate():
    cfg = GsmConfig(1, 1, 1, bpsk())
    got = sorted(enumerate_signal_set(cfg).ravel(), key=lambda z: z.real)
    assert got == [-1, 1]


def test_signal_set_counts_random_configs():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(2, 7))
        r = int(rng.integers(1, n + 1))
        alph = bpsk() if rng.integers(2) else qam(4)
        cfg = GsmConfig(n, 1, r, alph)
        size = cfg.num_patterns * alph.size**r
        if size > 1 << 20:
            continue
        vs = enumerate_signal_set(cfg)
        assert vs.shape == (size, n)
        assert len({v.tobytes() for v in vs}) == size
        assert all(np.count_nonzero(v) == r for v in vs)


def test_signal_set_cap():
    cfg = GsmConfig(32, 1, 16, qam(4))
    with pytest.raises(InfeasibleConfigError):
        enumerate_signal_set(cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        GsmConfig(4, 4, 0, bpsk())
    with pytest.raises(ValueError):
        GsmConfig(4, 4, 5, bpsk())
    with pytest.raises(ValueError):
        GsmConfig(4, 0, 2, bpsk())
    with pytest.raises(ValueError):
        GsmConfig(4, 4, 2, bpsk(), sigma2_x=0.0)


def test_snr_helper():
    cfg = GsmConfig(4, 4, 2, bpsk()).with_snr_db(10.0)
    assert cfg.sigma2 == pytest.approx(0.1)
