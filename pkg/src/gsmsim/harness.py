"""Batch experiment engine: BER sweeps, capacity sweeps, required-SNR search.

Every frame of a BER run derives its randomness from (master_seed, frame
index) and frames are consumed in fixed-size batches in index order, so
results are byte-identical for any worker count.  The adaptive stop rule
(collect at least ``min_bit_errors`` or give up at ``max_frames``) is
evaluated only at batch boundaries for the same reason.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import capacity as cap
from .channel import rng_stream, sample_channel, transmit
from .detect import LampConfig, LampDetector, MlDetector, MmseDetector
from .errors import InfeasibleConfigError
from .signal import GsmConfig, decode, encode

__all__ = [
    "ExperimentConfig", "BerRow", "run_ber", "run_capacity",
    "find_required_snr", "write_ber_csv", "write_capacity_csv",
    "write_required_snr_csv", "default_threads",
]

DETECTORS = ("ml", "mmse", "lamp")
BATCH_FRAMES = 256


def default_threads() -> int:
    env = os.environ.get("GSMSIM_THREADS")
    return max(1, int(env)) if env else 1


@dataclass(frozen=True)
class ExperimentConfig:
    """A full BER experiment: system, SNR grid, detector, stop rule, seed."""

    system: GsmConfig
    snr_grid_db: tuple
    detector: str = "ml"
    lamp: LampConfig = field(default_factory=LampConfig)
    min_bit_errors: int = 200
    max_frames: int = 10_000_000
    master_seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if not self.snr_grid_db:
            raise ValueError("SNR grid must be nonempty")
        if list(self.snr_grid_db) != sorted(self.snr_grid_db):
            raise ValueError("SNR grid must be sorted ascending")
        if self.min_bit_errors < 1 or self.max_frames < 1:
            raise ValueError("stop-rule fields must be positive")
        if self.detector not in DETECTORS:
            raise ValueError(f"detector must be one of {DETECTORS}")


@dataclass
class BerRow:
    snr_db: float
    frames: int
    bit_errors: int
    ber: float
    frame_errors: int


def _build_detector(system: GsmConfig, detector: str, lamp_cfg: LampConfig):
    if detector == "ml":
        return MlDetector(system)
    if detector == "mmse":
        return MmseDetector(system)
    return LampDetector(system, lamp_cfg)


_WORKER_DETECTORS: dict = {}


def _ber_batch(args):
    """Simulate frames [start, stop) at one SNR; returns (frames, bit, frame errors)."""
    system, detector_name, lamp_cfg, master_seed, start, stop = args
    key = (system, detector_name, lamp_cfg)
    det = _WORKER_DETECTORS.get(key)
    if det is None:
        det = _WORKER_DETECTORS[key] = _build_detector(system, detector_name, lamp_cfg)
    eta = system.bits_per_use
    bit_errors = 0
    frame_errors = 0
    for idx in range(start, stop):
        rng = rng_stream(master_seed, idx)
        bits = rng.integers(0, 2, size=eta)
        x = encode(bits, system)
        h = sample_channel(system.n_rx, system.n_tx, rng)
        y = transmit(h, x, system.sigma2, rng)
        decided = det.detect(y, h).bits
        errs = int(np.count_nonzero(decided != bits))
        bit_errors += errs
        frame_errors += errs > 0
    return stop - start, bit_errors, frame_errors


def _consume_batches(task_fn, make_args, total_limit, stop_fn, threads):
    """Feed index batches to workers, folding results in index order.

    ``stop_fn(acc)`` is checked after each in-order batch; outstanding
    batches beyond the stopping one are discarded, so the folded prefix
    is independent of worker count.
    """
    acc = []
    starts = range(0, total_limit, BATCH_FRAMES)
    if threads <= 1:
        for start in starts:
            stop = min(start + BATCH_FRAMES, total_limit)
            acc.append(task_fn(make_args(start, stop)))
            if stop_fn(acc):
                break
        return acc
    with ProcessPoolExecutor(max_workers=threads) as pool:
        pending = []
        it = iter(starts)
        exhausted = False
        while True:
            while not exhausted and len(pending) < threads * 2:
                start = next(it, None)
                if start is None:
                    exhausted = True
                    break
                stop = min(start + BATCH_FRAMES, total_limit)
                pending.append(pool.submit(task_fn, make_args(start, stop)))
            if not pending:
                break
            fut = pending.pop(0)
            acc.append(fut.result())
            if stop_fn(acc):
                for p in pending:
                    p.cancel()
                break
    return acc


def _ber_point(config: ExperimentConfig, snr_db: float) -> BerRow:
    system = config.system.with_snr_db(snr_db)

    def make_args(start, stop):
        return (system, config.detector, config.lamp, config.master_seed, start, stop)

    def stop_fn(acc):
        return sum(b for _, b, _ in acc) >= config.min_bit_errors

    batches = _consume_batches(_ber_batch, make_args, config.max_frames,
                               stop_fn, config.threads)
    frames = sum(f for f, _, _ in batches)
    bit_errors = sum(b for _, b, _ in batches)
    frame_errors = sum(fe for _, _, fe in batches)
    eta = system.bits_per_use
    return BerRow(snr_db, frames, bit_errors, bit_errors / (frames * eta), frame_errors)


def run_ber(config: ExperimentConfig) -> list:
    """BER at every grid SNR, with the adaptive stop rule per point."""
    # construct the detector up front so infeasible combinations fail fast
    _build_detector(config.system, config.detector, config.lamp)
    return [_ber_point(config, snr) for snr in config.snr_grid_db]


# --- capacity sweeps ---

def _capacity_chunk(args):
    cfg, snr_db, start, stop, master_seed, scope, pair_budget, subsample, mc_samples = args
    return cap.channel_rows(cfg, snr_db, start, stop, master_seed, scope,
                            pair_budget, subsample, mc_samples)


def run_capacity(system: GsmConfig, snr_grid_db, num_channels: int,
                 master_seed: int = 0, *, scope: str = "restricted",
                 pair_budget: int = cap.DEFAULT_PAIR_BUDGET,
                 subsample=None, mc_samples: int = 0, threads: int = 1) -> list:
    """Capacity bounds at every grid SNR over shared channel realizations."""
    results = []
    for snr_db in snr_grid_db:
        def make_args(start, stop, _snr=snr_db):
            return (system, _snr, start, stop, master_seed, scope,
                    pair_budget, subsample, mc_samples)

        batches = _consume_batches(_capacity_chunk, make_args, num_channels,
                                   lambda acc: False, threads)
        rows = np.vstack([b[0] for b in batches])
        mc_rows = np.concatenate([b[1] for b in batches]) if mc_samples else None
        work = system.with_snr_db(snr_db)
        subsampled = bool(subsample) and cap._pairs_over_budget(work, scope, pair_budget)
        results.append(cap._summarize(rows, mc_rows, snr_db, subsampled=subsampled))
    return results


# --- required-SNR search ---

def find_required_snr(config: ExperimentConfig, target_ber: float, m_grid,
                      snr_min_db: float = 0.0, snr_max_db: float = 20.0,
                      resolution_db: float = 0.25) -> list:
    """Smallest SNR on a resolution grid meeting the target BER, per receive count.

    Bisects the [snr_min, snr_max] range with run_ber probes, assuming BER
    is nonincreasing in SNR.  Rows are (m, snr_db or None, ber, frames);
    snr_db is None when even snr_max misses the target.
    """
    rows = []
    steps = int(round((snr_max_db - snr_min_db) / resolution_db))
    for m in m_grid:
        probe_cfg = replace(config, system=replace(config.system, n_rx=int(m)))

        def ber_at(snr_db):
            return _ber_point(probe_cfg, snr_db)

        low = ber_at(snr_min_db)
        if low.ber <= target_ber:
            rows.append((int(m), snr_min_db, low.ber, low.frames))
            continue
        high = ber_at(snr_max_db)
        if high.ber > target_ber:
            rows.append((int(m), None, high.ber, high.frames))
            continue
        lo, hi = 0, steps
        best = high
        while hi - lo > 1:
            mid = (lo + hi) // 2
            probe = ber_at(snr_min_db + mid * resolution_db)
            if probe.ber <= target_ber:
                hi, best = mid, probe
            else:
                lo = mid
        rows.append((int(m), snr_min_db + hi * resolution_db, best.ber, best.frames))
    return rows


# --- CSV emission ---

def _write_comments(fh, echo: dict):
    for key, value in echo.items():
        fh.write(f"# {key} = {value}\n")


def _system_echo(system: GsmConfig) -> dict:
    return {
        "n_tx": system.n_tx,
        "n_rx": system.n_rx,
        "n_rf": system.n_rf,
        "alphabet": system.alphabet.name,
        "sigma2_x": repr(system.sigma2_x),
        "bits_per_use": system.bits_per_use,
        "snr_definition": "snr = sigma2_x / sigma2, E||x||^2 = sigma2_x",
    }


def write_ber_csv(fh, config: ExperimentConfig, rows) -> None:
    echo = _system_echo(config.system)
    echo.update({
        "detector": config.detector,
        "phi_method": config.lamp.phi_method,
        "iterations": config.lamp.iterations,
        "damping": repr(config.lamp.damping),
        "min_bit_errors": config.min_bit_errors,
        "max_frames": config.max_frames,
        "seed": config.master_seed,
    })
    _write_comments(fh, echo)
    fh.write("snr_db,frames,bit_errors,ber,frame_errors\n")
    for row in rows:
        fh.write(f"{row.snr_db!r},{row.frames},{row.bit_errors},"
                 f"{row.ber!r},{row.frame_errors}\n")


def write_capacity_csv(fh, system: GsmConfig, results, *, num_channels: int,
                       master_seed: int, scope: str, mc_samples: int = 0,
                       subsample=None) -> None:
    echo = _system_echo(system)
    echo.update({
        "channels": num_channels,
        "pattern_set": scope,
        "mc_samples": mc_samples,
        "seed": master_seed,
    })
    if subsample:
        echo["l1_pair_subsample"] = (
            f"{subsample} (plug-in estimate of the pair mean; log of a sampled "
            "mean is biased low relative to the exact l1 sum)")
    _write_comments(fh, echo)
    fh.write("snr_db,L1,L2,U1,U2,L,U,C_mc,"
             "se_L1,se_L2,se_U1,se_U2,se_L,se_U,se_C_mc\n")
    for r in results:
        c_mc = "" if r.c_mc is None else repr(r.c_mc)
        se_mc = "" if r.se_c_mc is None else repr(r.se_c_mc)
        fh.write(f"{r.snr_db!r},{r.l1!r},{r.l2!r},{r.u1!r},{r.u2!r},"
                 f"{r.lower!r},{r.upper!r},{c_mc},"
                 f"{r.se_l1!r},{r.se_l2!r},{r.se_u1!r},{r.se_u2!r},"
                 f"{r.se_lower!r},{r.se_upper!r},{se_mc}\n")


def write_required_snr_csv(fh, config: ExperimentConfig, target_ber: float,
                           rows) -> None:
    echo = _system_echo(config.system)
    echo.update({
        "detector": config.detector,
        "phi_method": config.lamp.phi_method,
        "target_ber": repr(target_ber),
        "min_bit_errors": config.min_bit_errors,
        "max_frames": config.max_frames,
        "seed": config.master_seed,
    })
    _write_comments(fh, echo)
    fh.write("n_rx,required_snr_db,ber,frames,status\n")
    for m, snr_db, ber, frames in rows:
        if snr_db is None:
            fh.write(f"{m},,{ber!r},{frames},target unreachable in range\n")
        else:
            fh.write(f"{m},{snr_db!r},{ber!r},{frames},ok\n")
