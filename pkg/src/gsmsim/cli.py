"""Command-line front end.

Subcommands: encode, decode, ber, capacity, required-snr.  Every value a
flag can set may also live in a config file of flat `key = value` lines
(# starts a comment); flags win over the file.  Exit codes: 0 success,
1 usage error, 2 infeasible configuration, 3 numerical failure.
"""

import argparse
import sys

from .combinadics import binomial, bits_to_int, int_to_bits, rank, unrank
from .detect import LampConfig
from .errors import InfeasibleConfigError, NumericalError
from .harness import (
    ExperimentConfig, default_threads, find_required_snr, run_ber,
    run_capacity, write_ber_csv, write_capacity_csv, write_required_snr_csv,
)
from .signal import GsmConfig, make_alphabet

USAGE_ERROR, INFEASIBLE, NUMERICAL = 1, 2, 3

PHI_NAMES = {"deconv": "deconv", "fft": "fft", "gauss": "gauss"}


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message)


def parse_snr_grid(text: str) -> tuple:
    """Grids are `start:step:stop` (inclusive) or explicit comma lists."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise CliError(f"bad SNR grid {text!r}, expected start:step:stop")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise CliError("SNR grid step must be positive")
        count = int(round((stop - start) / step))
        grid = [start + i * step for i in range(count + 1)]
        return tuple(v for v in grid if v <= stop + 1e-9)
    return tuple(float(p) for p in text.split(","))


def load_config_file(path: str) -> dict:
    """Flat `key = value` pairs; later lines override earlier ones."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected `key = value`, got {raw!r}")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _merged(args, key, cast, fallback):
    """Flag value if given, else config-file value, else fallback."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    file_values = getattr(args, "_file_values", {})
    if key in file_values:
        raw = file_values[key]
        return cast(raw) if cast is not None else raw
    return fallback


def _add_common(sub):
    sub.add_argument("--out", default=None, help="output path (default stdout)")
    sub.add_argument("--seed", type=int, default=None, help="master seed")
    sub.add_argument("--threads", type=int, default=None,
                     help="worker processes (default $GSMSIM_THREADS or 1)")
    sub.add_argument("--config", default=None, help="flat key=value config file")


def _add_system(sub):
    sub.add_argument("--n", type=int, default=None, help="transmit antennas")
    sub.add_argument("--m", type=int, default=None, help="receive antennas")
    sub.add_argument("--r", type=int, default=None, help="RF chains (active antennas)")
    sub.add_argument("--alphabet", default=None, help="bpsk or qam<M> (e.g. qam4)")
    sub.add_argument("--sigma2-x", dest="sigma2_x", type=float, default=None,
                     help="total transmit power (default 1.0)")


def _add_detector(sub):
    sub.add_argument("--detector", choices=("ml", "mmse", "lamp"), default=None)
    sub.add_argument("--phi", choices=tuple(PHI_NAMES), default=None,
                     help="phi technique for the lamp detector")
    sub.add_argument("--iterations", type=int, default=None)
    sub.add_argument("--damping", type=float, default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="gsmsim", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    enc = subs.add_parser("encode", help="antenna-index bits to active antennas")
    enc.add_argument("--n", type=int, required=True)
    enc.add_argument("--r", type=int, required=True)
    enc.add_argument("--bits", required=True, help="bit string, MSB first")
    enc.add_argument("--out", default=None)

    dec = subs.add_parser("decode", help="active antennas to antenna-index bits")
    dec.add_argument("--n", type=int, required=True)
    dec.add_argument("--r", type=int, required=True)
    dec.add_argument("--antennas", required=True,
                     help="comma list of 1-based active antenna indices")
    dec.add_argument("--out", default=None)

    ber = subs.add_parser("ber", help="Monte Carlo bit-error-rate sweep")
    _add_system(ber)
    _add_detector(ber)
    ber.add_argument("--snr", default=None, help="grid: start:step:stop or list")
    ber.add_argument("--min-errors", dest="min_errors", type=int, default=None)
    ber.add_argument("--max-frames", dest="max_frames", type=int, default=None)
    _add_common(ber)

    capp = subs.add_parser("capacity", help="capacity bound sweep")
    _add_system(capp)
    capp.add_argument("--snr", default=None)
    capp.add_argument("--channels", type=int, default=None)
    capp.add_argument("--mc-samples", dest="mc_samples", type=int, default=None,
                      help="per-channel mutual-information samples (0 = off)")
    capp.add_argument("--pattern-set", dest="pattern_set",
                      choices=("restricted", "full"), default=None)
    capp.add_argument("--subsample-pairs", dest="subsample_pairs", type=int,
                      default=None, help="pair draws when the L1 sum exceeds budget")
    _add_common(capp)

    req = subs.add_parser("required-snr", help="SNR needed to hit a target BER vs M")
    _add_system(req)
    _add_detector(req)
    req.add_argument("--m-grid", dest="m_grid", default=None,
                     help="comma list of receive-antenna counts")
    req.add_argument("--target-ber", dest="target_ber", type=float, default=None)
    req.add_argument("--snr-min", dest="snr_min", type=float, default=None)
    req.add_argument("--snr-max", dest="snr_max", type=float, default=None)
    req.add_argument("--resolution", type=float, default=None,
                     help="bisection resolution in dB (default 0.25)")
    req.add_argument("--min-errors", dest="min_errors", type=int, default=None)
    req.add_argument("--max-frames", dest="max_frames", type=int, default=None)
    _add_common(req)
    return parser


def _system_from(args) -> GsmConfig:
    n = _merged(args, "n", int, None)
    m = _merged(args, "m", int, None)
    r = _merged(args, "r", int, None)
    if n is None or r is None:
        raise CliError("--n and --r are required (flag or config file)")
    if m is None:
        m = n
    alphabet = make_alphabet(_merged(args, "alphabet", str, "bpsk"))
    sigma2_x = _merged(args, "sigma2_x", float, 1.0)
    try:
        return GsmConfig(n, m, r, alphabet, sigma2_x=sigma2_x)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _experiment_from(args) -> ExperimentConfig:
    lamp = LampConfig(
        iterations=_merged(args, "iterations", int, 30),
        damping=_merged(args, "damping", float, 0.5),
        phi_method=_merged(args, "phi", str, "deconv"),
    )
    grid_text = _merged(args, "snr", str, None)
    grid = parse_snr_grid(grid_text) if grid_text is not None else (10.0,)
    return ExperimentConfig(
        system=_system_from(args),
        snr_grid_db=grid,
        detector=_merged(args, "detector", str, "ml"),
        lamp=lamp,
        min_bit_errors=_merged(args, "min_errors", int, 200),
        max_frames=_merged(args, "max_frames", int, 10_000_000),
        master_seed=_merged(args, "seed", int, 0),
        threads=_merged(args, "threads", int, default_threads()),
    )


def _open_out(args):
    path = getattr(args, "out", None)
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w"), True


def _cmd_encode(args) -> str:
    bits = [c for c in args.bits.strip() if not c.isspace()]
    if not bits or any(c not in "01" for c in bits):
        raise CliError(f"--bits must be a 0/1 string, got {args.bits!r}")
    eta_a = binomial(args.n, args.r).bit_length() - 1
    if len(bits) != eta_a:
        raise CliError(f"expected {eta_a} antenna-index bits for "
                       f"N={args.n}, R={args.r}, got {len(bits)}")
    g = bits_to_int(int(c) for c in bits)
    antennas = unrank(g, args.r)
    return "antennas: " + ",".join(str(a + 1) for a in antennas)


def _cmd_decode(args) -> str:
    try:
        antennas = sorted(int(p) for p in args.antennas.split(","))
    except ValueError as exc:
        raise CliError(f"bad --antennas list {args.antennas!r}") from exc
    if len(antennas) != args.r:
        raise CliError(f"expected {args.r} antennas, got {len(antennas)}")
    if antennas[0] < 1 or antennas[-1] > args.n:
        raise CliError(f"antenna indices must be in 1..{args.n}")
    if len(set(antennas)) != len(antennas):
        raise CliError("antenna indices must be distinct")
    g = rank(tuple(a - 1 for a in antennas))
    eta_a = binomial(args.n, args.r).bit_length() - 1
    if g >= 1 << eta_a:
        raise CliError(f"pattern {args.antennas} is outside the allowed "
                       f"signalling set (rank {g} >= 2^{eta_a})")
    return "bits: " + "".join(str(b) for b in int_to_bits(g, eta_a))


def _cmd_ber(args, fh):
    config = _experiment_from(args)
    rows = run_ber(config)
    write_ber_csv(fh, config, rows)


def _cmd_capacity(args, fh):
    system = _system_from(args)
    grid_text = _merged(args, "snr", str, None)
    grid = parse_snr_grid(grid_text) if grid_text is not None else (10.0,)
    channels = _merged(args, "channels", int, 1000)
    mc_samples = _merged(args, "mc_samples", int, 0)
    scope = _merged(args, "pattern_set", str, "restricted")
    subsample = _merged(args, "subsample_pairs", int, 0) or None
    seed = _merged(args, "seed", int, 0)
    threads = _merged(args, "threads", int, default_threads())
    results = run_capacity(system, grid, channels, seed, scope=scope,
                           subsample=subsample, mc_samples=mc_samples,
                           threads=threads)
    write_capacity_csv(fh, system, results, num_channels=channels,
                       master_seed=seed, scope=scope, mc_samples=mc_samples,
                       subsample=subsample)


def _cmd_required_snr(args, fh):
    config = _experiment_from(args)
    grid_text = _merged(args, "m_grid", str, None)
    if grid_text is None:
        raise CliError("--m-grid is required")
    m_grid = [int(p) for p in grid_text.split(",")]
    target = _merged(args, "target_ber", float, 1e-3)
    rows = find_required_snr(
        config, target, m_grid,
        snr_min_db=_merged(args, "snr_min", float, 0.0),
        snr_max_db=_merged(args, "snr_max", float, 20.0),
        resolution_db=_merged(args, "resolution", float, 0.25),
    )
    write_required_snr_csv(fh, config, target, rows)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            args._file_values = load_config_file(args.config)
        else:
            args._file_values = {}
        if args.command in ("encode", "decode"):
            text = _cmd_encode(args) if args.command == "encode" else _cmd_decode(args)
            fh, close = _open_out(args)
            fh.write(text + "\n")
            if close:
                fh.close()
            return 0
        fh, close = _open_out(args)
        try:
            if args.command == "ber":
                _cmd_ber(args, fh)
            elif args.command == "capacity":
                _cmd_capacity(args, fh)
            else:
                _cmd_required_snr(args, fh)
        finally:
            if close:
                fh.close()
        return 0
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except InfeasibleConfigError as exc:
        print(f"infeasible configuration: {exc}", file=sys.stderr)
        return INFEASIBLE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
