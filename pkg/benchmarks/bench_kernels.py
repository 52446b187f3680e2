"""Benchmark the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Covers the two hot paths: the message-passing detection loop (per-frame
cost of every BER experiment) and the weighted-Gram log-determinant batch
behind the capacity L1 pair sum.  The same inputs go through both
backends; the printed max deviation confirms they agree.
"""

import argparse
import time

import numpy as np

import gsmsim.capacity as capacity
import gsmsim.detect as detect
from gsmsim._backend import HAVE_KERNELS
from gsmsim.channel import rng_stream, sample_channel, transmit
from gsmsim.signal import GsmConfig, bpsk, encode, qam


def frame(cfg, seed):
    rng = rng_stream(seed, 0)
    bits = rng.integers(0, 2, size=cfg.bits_per_use).tolist()
    x = encode(bits, cfg)
    h = sample_channel(cfg.n_rx, cfg.n_tx, rng)
    y = transmit(h, x, cfg.sigma2, rng)
    return h, y


def time_fn(fn, repeats):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_lamp(repeats):
    print("message-passing detection (ms/frame)")
    cases = [
        ("(8,8,4)   bpsk", GsmConfig(8, 8, 4, bpsk()).with_snr_db(10.0)),
        ("(16,16,4) bpsk", GsmConfig(16, 16, 4, bpsk()).with_snr_db(8.0)),
        ("(32,32,16) qam4", GsmConfig(32, 32, 16, qam(4)).with_snr_db(12.0)),
    ]
    for name, cfg in cases:
        h, y = frame(cfg, 1)
        det = detect.LampDetector(cfg)
        t_compiled = time_fn(lambda: det.detect(y, h), repeats) if HAVE_KERNELS else None
        saved = detect.kernels
        detect.kernels = None
        try:
            t_python = time_fn(lambda: det.detect(y, h), max(1, repeats // 8))
        finally:
            detect.kernels = saved
        if t_compiled is None:
            print(f"  {name}: python {t_python * 1e3:8.2f}   (compiled kernels not built)")
        else:
            print(f"  {name}: compiled {t_compiled * 1e3:7.2f}   python {t_python * 1e3:8.2f}"
                  f"   speedup {t_python / t_compiled:5.1f}x")


def bench_logdets(repeats):
    print("capacity L1 pair determinants (s per channel realization)")
    h = sample_channel(16, 16, rng_stream(3, 0))
    wvecs, _ = capacity._pair_weight_table(16, 12, 1024, "restricted")
    coeff, ridge = 1.0 / 12, 0.02
    args = (np.ascontiguousarray(h), wvecs, coeff, ridge)

    def run():
        return capacity._weighted_gram_logdets(*args)

    t_compiled = ref = None
    if HAVE_KERNELS:
        t_compiled = time_fn(run, repeats)
        ref = run()
    saved = capacity.kernels
    capacity.kernels = None
    try:
        t_python = time_fn(run, 1)
        fallback = run()
    finally:
        capacity.kernels = saved
    if t_compiled is None:
        print(f"  (16,*,12) M=16, {len(wvecs)} matrices: python {t_python:6.2f}"
              "   (compiled kernels not built)")
    else:
        dev = np.max(np.abs(ref - fallback))
        print(f"  (16,*,12) M=16, {len(wvecs)} matrices: compiled {t_compiled:6.2f}"
              f"   python {t_python:6.2f}   speedup {t_python / t_compiled:4.1f}x"
              f"   max dev {dev:.1e}")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=24)
    args = parser.parse_args()
    print(f"compiled kernels available: {HAVE_KERNELS}")
    bench_lamp(args.repeats)
    bench_logdets(max(2, args.repeats // 8))


if __name__ == "__main__":
    main()
