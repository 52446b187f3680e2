import io
import itertools
import math

import numpy as np
import pytest

from gsmsim.detect import LampConfig
from gsmsim.errors import InfeasibleConfigError
from gsmsim.harness import (
    BerRow, ExperimentConfig, find_required_snr, run_ber, run_capacity,
    write_ber_csv, write_capacity_csv, write_required_snr_csv,
)
from gsmsim.signal import GsmConfig, bpsk, qam


def small_config(**kw):
    defaults = dict(
        system=GsmConfig(4, 4, 2, bpsk()),
        snr_grid_db=(6.0,),
        detector="ml",
        min_bit_errors=50,
        max_frames=4000,
        master_seed=11,
        threads=1,
    )
    defaults.update(kw)
    return ExperimentConfig(**defaults)


def ber_csv_text(config):
    rows = run_ber(config)
    buf = io.StringIO()
    write_ber_csv(buf, config, rows)
    return buf.getvalue()


def test_config_validation():
    with pytest.raises(ValueError):
        small_config(snr_grid_db=())
    with pytest.raises(ValueError):
        small_config(snr_grid_db=(4.0, 2.0))
    with pytest.raises(ValueError):
        small_config(min_bit_errors=0)
    with pytest.raises(ValueError):
        small_config(detector="zf")


def test_byte_identical_across_thread_counts():
    texts = {t: ber_csv_text(small_config(threads=t)) for t in (1, 2, 4)}
    assert texts[1] == texts[2] == texts[4]


def test_stop_rule_honored():
    cfg = small_config(snr_grid_db=(0.0, 25.0), min_bit_errors=60, max_frames=1500)
    for row in run_ber(cfg):
        assert row.bit_errors >= 60 or row.frames == 1500
        assert row.ber == row.bit_errors / (row.frames * cfg.system.bits_per_use)


def test_high_snr_ml_zero_errors():
    cfg = small_config(system=GsmConfig(4, 4, 2, bpsk()),
                       snr_grid_db=(200.0,), min_bit_errors=10, max_frames=10_000)
    row = run_ber(cfg)[0]
    assert row.frames == 10_000
    assert row.bit_errors == 0


def test_ber_matches_independent_single_file_simulator():
    # fully self-contained chain: own pattern table, own ML, own randomness
    import math as _math

    n, m, r, snr_db = 4, 4, 2, 4.0
    sigma2 = 10 ** (-snr_db / 10)
    scale = _math.sqrt(1.0 / r)
    combos = sorted(itertools.combinations(range(n), r),
                    key=lambda c: sum(_math.comb(v, i + 1) for i, v in enumerate(c)))
    big_l = 2 ** int(_math.log2(_math.comb(n, r)))
    patterns = combos[:big_l]
    cands = []
    cand_bits = []
    eta_a = int(_math.log2(big_l))
    for pi, pat in enumerate(patterns):
        for signs in itertools.product((0, 1), repeat=r):
            x = np.zeros(n, dtype=complex)
            for a, s in zip(pat, signs):
                x[a] = (1 - 2 * s) * scale
            cands.append(x)
            bits = [(pi >> (eta_a - 1 - b)) & 1 for b in range(eta_a)] + list(signs)
            cand_bits.append(np.array(bits))
    cands = np.array(cands)

    rng = np.random.default_rng(2024)
    frames, bit_errors = 6000, 0
    eta = eta_a + r
    for _ in range(frames):
        g = rng.integers(len(cands))
        h = (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))) / _math.sqrt(2)
        w = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) * _math.sqrt(sigma2 / 2)
        y = h @ cands[g] + w
        metrics = np.sum(np.abs(y[:, None] - h @ cands.T) ** 2, axis=0)
        bit_errors += int(np.sum(cand_bits[int(np.argmin(metrics))] != cand_bits[g]))
    oracle_ber = bit_errors / (frames * eta)

    cfg = small_config(snr_grid_db=(snr_db,), min_bit_errors=1_000_000, max_frames=6000)
    row = run_ber(cfg)[0]
    se = _math.sqrt(oracle_ber * (1 - oracle_ber) / (frames * eta)
                    + row.ber * (1 - row.ber) / (row.frames * eta))
    assert abs(row.ber - oracle_ber) < 3 * se


def test_ber_monotone_in_snr():
    cfg = small_config(snr_grid_db=(0.0, 4.0, 8.0, 12.0),
                       min_bit_errors=150, max_frames=30_000)
    rows = run_ber(cfg)
    bers = [r.ber for r in rows]
    for a, b in zip(bers, bers[1:]):
        # allow 3-sigma wiggle on the later (smaller) estimate
        se = math.sqrt(max(b, 1e-9) / (rows[1].frames * cfg.system.bits_per_use))
        assert b <= a + 3 * se


def test_infeasible_reported_before_work():
    cfg = small_config(system=GsmConfig(32, 32, 16, qam(4)), detector="ml")
    with pytest.raises(InfeasibleConfigError):
        run_ber(cfg)


def test_lamp_and_mmse_run_end_to_end():
    for det in ("mmse", "lamp"):
        cfg = small_config(detector=det, snr_grid_db=(10.0,),
                           min_bit_errors=20, max_frames=2000,
                           lamp=LampConfig(iterations=6))
        row = run_ber(cfg)[0]
        assert 0 <= row.ber <= 1
        assert row.frames <= 2000


def test_run_capacity_matches_capacity_bounds():
    from gsmsim.capacity import capacity_bounds
    system = GsmConfig(5, 2, 2, bpsk())
    res_pool = run_capacity(system, (2.0, 10.0), 40, master_seed=3, threads=2)
    for r, snr in zip(res_pool, (2.0, 10.0)):
        direct = capacity_bounds(system, snr, 40, master_seed=3)
        assert r.l1 == direct.l1
        assert r.u2 == direct.u2
        assert r.se_l2 == direct.se_l2


def test_required_snr_degenerate_target():
    cfg = small_config(snr_grid_db=(0.0,), min_bit_errors=10, max_frames=512)
    rows = find_required_snr(cfg, target_ber=1.0, m_grid=[4],
                             snr_min_db=-2.0, snr_max_db=6.0)
    assert rows == [(4, -2.0, rows[0][2], rows[0][3])]


def test_required_snr_unreachable():
    cfg = small_config(detector="mmse", system=GsmConfig(8, 2, 4, qam(4)),
                       min_bit_errors=30, max_frames=1024)
    rows = find_required_snr(cfg, target_ber=1e-9, m_grid=[2],
                             snr_min_db=0.0, snr_max_db=2.0)
    assert rows[0][1] is None


def test_required_snr_resolution_grid():
    cfg = small_config(min_bit_errors=40, max_frames=20_000)
    rows = find_required_snr(cfg, target_ber=3e-2, m_grid=[4],
                             snr_min_db=0.0, snr_max_db=16.0)
    m, snr, ber, _ = rows[0]
    assert snr is not None
    assert abs(snr / 0.25 - round(snr / 0.25)) < 1e-9
    assert ber <= 3e-2


def test_csv_shapes():
    cfg = small_config(min_bit_errors=10, max_frames=512)
    text = ber_csv_text(cfg)
    lines = text.strip().split("\n")
    comments = [l for l in lines if l.startswith("#")]
    assert any("seed = 11" in c for c in comments)
    assert any("snr_definition" in c for c in comments)
    header = next(l for l in lines if not l.startswith("#"))
    assert header == "snr_db,frames,bit_errors,ber,frame_errors"

    system = GsmConfig(4, 2, 2, bpsk())
    results = run_capacity(system, (5.0,), 20, master_seed=1, mc_samples=50)
    buf = io.StringIO()
    write_capacity_csv(buf, system, results, num_channels=20, master_seed=1,
                       scope="restricted", mc_samples=50)
    cap_lines = buf.getvalue().strip().split("\n")
    header = next(l for l in cap_lines if not l.startswith("#"))
    assert header.startswith("snr_db,L1,L2,U1,U2,L,U,C_mc")
    data = cap_lines[-1].split(",")
    assert len(data) == 15

    buf = io.StringIO()
    write_required_snr_csv(buf, cfg, 1e-3, [(4, 2.5, 0.0005, 1000), (2, None, 0.1, 512)])
    txt = buf.getvalue()
    assert "2,,0.1,512,target unreachable in range" in txt
    assert "4,2.5,0.0005,1000,ok" in txt
