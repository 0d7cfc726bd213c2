"""Command-line front end: ``rrwm <command> ...``.

Exit codes: 0 success/PASS, 2 verification FAIL, 3 format error,
4 model or separability error.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import analysis
from .cell import TimingModel
from .device import DEFAULT_CELLS, Device
from .errors import (
    BudgetExceededError,
    CellFailureError,
    ImageFormatError,
    LayoutError,
    NonSeparableError,
    NotFreshError,
    TemperatureRangeError,
    UnreadableBitError,
)
from .watermark import (
    MeasurementSeries,
    Threshold,
    WatermarkLayout,
    bits_to_hex,
    calibrate_reference,
    calibrate_threshold,
    characterize,
    decode,
    extract,
    imprint,
    parse_watermark,
    read_bit_measurements,
    read_layout,
    write_layout,
)

EXIT_OK, EXIT_FAIL, EXIT_FORMAT, EXIT_MODEL = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _default_seed():
    env = os.environ.get("RRWM_SEED")
    return int(env, 0) if env else 0


def _overrides(pairs):
    out = {}
    for item in pairs or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"model override {item!r} is not key=value")
        if key not in TimingModel.field_names():
            raise UsageError(f"unknown model field {key!r}; choose from {', '.join(TimingModel.field_names())}")
        out[key] = float(value)
    return out


def _parse_addresses(spec, cell_count, count, seed):
    """``START:COUNT`` for a contiguous block, or ``random`` for ``count`` scattered cells."""
    if spec == "random":
        rng = np.random.default_rng(seed)
        return np.sort(rng.choice(cell_count, size=count, replace=False))
    start, sep, n = spec.partition(":")
    if not sep:
        raise UsageError("--addresses must be START:COUNT or 'random'")
    start, n = int(start, 0), int(n, 0)
    return np.arange(start, start + n)


def _layout(args, watermark=None):
    if args.layout:
        return read_layout(args.layout, watermark, getattr(args, "pairs", 0) or 0)
    bits = parse_watermark(watermark, args.bits) if watermark else np.zeros(args.bits, np.uint8)
    return WatermarkLayout.contiguous(bits, base=args.base, n_rep=args.n_rep, pairs=getattr(args, "pairs", 0) or 0)


def cmd_new(args):
    if os.path.exists(args.device) and not args.force:
        raise UsageError(f"{args.device} exists; use --force to overwrite")
    model = TimingModel().with_overrides(**_overrides(args.set))
    dev = Device.new(args.cells, seed=args.seed, model=model, regional_fraction=args.regional_fraction)
    dev.save(args.device)
    print(f"created {args.device}: {dev.cell_count} cells, seed={args.seed}")
    return EXIT_OK


def cmd_characterize(args):
    dev = Device.load(args.device)
    addr = _parse_addresses(args.addresses, dev.cell_count, args.count, args.seed)
    series = characterize(dev, addr, args.pairs, args.every, args.group_size, args.temp)
    if args.out:
        series.to_csv(args.out)
    else:
        series.to_csv(sys.stdout)
    if args.sweep_out:
        analysis.stress_sweep_report(series, args.sweep_out)
    dev.save(args.device)
    return EXIT_OK


def cmd_imprint(args):
    dev = Device.load(args.device)
    layout = _layout(args, args.watermark)
    report = imprint(dev, layout, args.temp)
    if args.save_layout:
        write_layout(layout, args.save_layout)
    dev.save(args.device)
    print(f"watermark={layout.hex}")
    print(f"popcount={report.popcount}")
    print(f"pairs={report.pairs}")
    print(f"pairs_applied={report.pairs_applied}")
    print(f"simulated_s={report.simulated_seconds:.6f}")
    print(f"popcount_formula_s={report.popcount_seconds:.6f}")
    print(f"all_bits_formula_s={report.formula_seconds:.6f}")
    return EXIT_OK


def cmd_calibrate(args):
    channel = args.channel
    if args.fresh and args.stressed:
        fresh = MeasurementSeries.from_csv(args.fresh)
        stressed = MeasurementSeries.from_csv(args.stressed)
        model = TimingModel().with_overrides(**_overrides(args.set))
        th = calibrate_threshold(fresh, stressed, channel, args.temp, model.temp_coeff)
    elif args.fresh or args.stressed:
        raise UsageError("--fresh and --stressed go together")
    else:
        model = Device.load(args.model_from).model if args.model_from else TimingModel()
        model = model.with_overrides(**_overrides(args.set))
        th = calibrate_reference(model, channel, args.pairs, args.groups, args.n_rep, args.seed, args.temp)
    th.save(args.out)
    print(th.to_text(), end="")
    return EXIT_OK


def _read(device_path, layout, temp, threshold):
    analysis.check_temperature(temp)
    dev = Device.load(device_path)
    ex = extract(dev, layout, temp)
    dev.save(device_path)
    bits = decode(ex, threshold.at_temperature(ex.temperature)) if threshold else None
    return ex, bits


def cmd_extract(args):
    layout = _layout(args)
    threshold = Threshold.load(args.threshold_file) if args.threshold_file else None
    ex, bits = _read(args.device, layout, args.temp, threshold)
    if args.out:
        ex.to_csv(args.out)
    else:
        ex.to_csv(sys.stdout)
    if bits is not None:
        print(f"decoded={bits_to_hex(bits)}", file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def _verify_one(path, layout, temp, threshold, expected):
    ex, bits = _read(path, layout, temp, threshold)
    values = ex.channel(threshold.channel)
    th = threshold.at_temperature(ex.temperature)
    mismatched = [int(i) for i in np.flatnonzero(bits != expected)]
    margin = float(np.min(np.abs(values - th.value)))
    return path, bits_to_hex(bits), mismatched, margin


def cmd_verify(args):
    layout = _layout(args)
    threshold = Threshold.load(args.threshold_file)
    expected = parse_watermark(args.expect, layout.n_bits)
    jobs = [(p, layout, args.temp, threshold, expected) for p in args.device]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_verify_one, *zip(*jobs)))
    else:
        results = [_verify_one(*j) for j in jobs]
    code = EXIT_OK
    for path, got, mismatched, margin in results:
        if mismatched:
            code = EXIT_FAIL
            print(f"{path}: FAIL read={got} expected={args.expect.upper().removeprefix('0X')} mismatched_bits={mismatched}")
        else:
            print(f"{path}: PASS read={got} channel={threshold.channel} min_margin_s={margin:.6g}")
    return code


def cmd_report(args):
    if not (args.estimates or args.sweep_csv or args.separation):
        raise UsageError("choose one of --estimates, --sweep-csv, --separation")
    if args.estimates:
        values = analysis.estimates(args.pairs, args.bits, args.t_pair, args.t_switch, args.n_rep, args.rated)
        sys.stdout.write(analysis.format_estimates(values))
    if args.sweep_csv:
        series = MeasurementSeries.from_csv(args.sweep_csv)
        analysis.stress_sweep_report(series, args.out or sys.stdout)
        for ch in ("set", "reset"):
            n = analysis.crossing_stress(series, ch) if series.stress[0] == 0 else None
            print(f"{ch}_crossing_stress={n}", file=sys.stderr)
    if args.separation:
        if not args.watermark:
            raise UsageError("--separation needs --watermark")
        code = EXIT_OK
        for path in args.separation:
            t_set, t_reset, stress = read_bit_measurements(path)
            bits = parse_watermark(args.watermark, len(t_set))
            values = t_set if args.channel == "set" else t_reset
            rep = analysis.separation(values, bits, args.channel, int(stress.max()))
            if args.out and len(args.separation) == 1:
                rep.to_csv(args.out)
            verdict = "degenerate" if rep.degenerate else ("separable" if rep.separable else "not-separable")
            print(f"{path}: channel={rep.channel} stress={rep.stress_count} min_d_s={rep.min_d:.6g} verdict={verdict}")
            if not rep.separable:
                code = EXIT_FAIL
        return code
    return EXIT_OK


def _add_layout_args(p):
    p.add_argument("--layout", help="layout file (bit_index, start_address, n_rep per line)")
    p.add_argument("--base", type=lambda s: int(s, 0), default=0, help="first address of a default contiguous layout")
    p.add_argument("--n-rep", type=int, default=256)
    p.add_argument("--bits", type=int, default=32)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=lambda s: int(s, 0), default=None, help="RNG seed (default: $RRWM_SEED or 0)")
    common.add_argument("--temp", type=float, default=25.0, help="operating temperature in C")
    parser = argparse.ArgumentParser(prog="rrwm", description="ReRAM wear-out watermarking simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("new", parents=[common], help="create a fresh device image")
    p.add_argument("device")
    p.add_argument("--cells", type=int, default=DEFAULT_CELLS)
    p.add_argument("--set", action="append", metavar="FIELD=VALUE", help="timing model override")
    p.add_argument("--regional-fraction", type=float, default=0.8)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_new)

    p = sub.add_parser("characterize", parents=[common], help="stress sweep with periodic timing")
    p.add_argument("device")
    p.add_argument("--addresses", default="random", help="START:COUNT or 'random'")
    p.add_argument("--count", type=int, default=2048, help="cell count for random addresses")
    p.add_argument("--pairs", type=int, required=True)
    p.add_argument("--every", type=int, default=1000)
    p.add_argument("--group-size", type=int, default=256)
    p.add_argument("--out", help="measurement CSV (default stdout)")
    p.add_argument("--sweep-out", help="min/mean/max sweep CSV")
    p.set_defaults(func=cmd_characterize)

    p = sub.add_parser("imprint", parents=[common], help="imprint a watermark")
    p.add_argument("device")
    p.add_argument("--watermark", required=True, help="hex string")
    p.add_argument("--pairs", type=int, default=10_000)
    p.add_argument("--save-layout")
    _add_layout_args(p)
    p.set_defaults(func=cmd_imprint)

    p = sub.add_parser("calibrate", parents=[common], help="produce a threshold file")
    p.add_argument("--out", required=True)
    p.add_argument("--channel", choices=["set", "reset"], default="set")
    p.add_argument("--fresh", help="measurement CSV of fresh groups")
    p.add_argument("--stressed", help="measurement CSV of stressed groups")
    p.add_argument("--model-from", help="device image whose timing model the reference chip uses")
    p.add_argument("--set", action="append", metavar="FIELD=VALUE")
    p.add_argument("--pairs", type=int, default=10_000)
    p.add_argument("--groups", type=int, default=32)
    p.add_argument("--n-rep", type=int, default=256)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("extract", parents=[common], help="read back per-bit averaged latencies")
    p.add_argument("device")
    p.add_argument("--threshold-file")
    p.add_argument("--out")
    _add_layout_args(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("verify", parents=[common], help="check devices carry the expected watermark")
    p.add_argument("device", nargs="+")
    p.add_argument("--threshold-file", required=True)
    p.add_argument("--expect", required=True, help="expected watermark, hex")
    p.add_argument("--jobs", type=int, default=1)
    _add_layout_args(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", parents=[common], help="estimates, sweep summaries, separation")
    p.add_argument("--estimates", action="store_true")
    p.add_argument("--sweep-csv")
    p.add_argument("--separation", nargs="+", metavar="EXTRACT_CSV")
    p.add_argument("--watermark")
    p.add_argument("--channel", choices=["set", "reset"], default="set")
    p.add_argument("--out")
    p.add_argument("--pairs", type=int, default=analysis.N_STRESS)
    p.add_argument("--bits", type=int, default=analysis.B_WMARK)
    p.add_argument("--t-pair", type=float, default=analysis.T_PAIR)
    p.add_argument("--t-switch", type=float, default=analysis.T_SWITCH)
    p.add_argument("--n-rep", type=int, default=analysis.N_REP)
    p.add_argument("--rated", type=float, default=analysis.RATED_PAIRS)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is None:
        args.seed = _default_seed()
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (ImageFormatError, LayoutError, ValueError, OSError) as exc:
        if isinstance(exc, (BudgetExceededError, TemperatureRangeError, NotFreshError)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_MODEL
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (NonSeparableError, UnreadableBitError, CellFailureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
