"""Command-line entry point: ``obsim {run,compare,sweep-threshold,sweep-weights,validate-config}``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import analysis
from .config import ConfigError, SimConfig, describe_keys
from .engine import Simulation
from .protocol import TraceLog

OUT_DIR_ENV = "OBSIM_OUT_DIR"


class UsageError(Exception):
    pass


def parse_floats(text):
    """``"0.1,0.5"`` or an inclusive range ``"start:stop:step"``."""
    text = text.strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise UsageError(f"bad range {text!r}; expected start:stop:step")
        start, stop, step = parts
        n = int(round((stop - start) / step))
        return [round(start + i * step, 12) for i in range(n + 1)]
    return [float(p) for p in text.split(",") if p.strip()]


def parse_ints(text):
    text = text.strip()
    if "-" in text and "," not in text:
        lo, hi = (int(p) for p in text.split("-"))
        return list(range(lo, hi + 1))
    return [int(p) for p in text.split(",") if p.strip()]


def parse_points(text):
    pts = []
    for item in text.split(","):
        b, u = item.split(":")
        pts.append((float(b), float(u)))
    return pts


def _epilog():
    return "configuration keys (file or --set KEY=VALUE):\n  " + "\n  ".join(describe_keys())


def _add_common(p):
    p.add_argument("--config", metavar="PATH", help="JSON scenario file")
    p.add_argument("--topology", help="nsfnet | cost239 | path to a topology JSON file")
    p.add_argument("--scheme", choices=["ahdr", "mlhdr", "retransmit", "deflect"])
    p.add_argument("--load", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float, help="simulated seconds")
    p.add_argument("--warmup", type=float, help="simulated seconds excluded from metrics")
    p.add_argument("--burst-scale", type=float, metavar="K",
                   help="multiply the mean burst size by K (desk-scale runs)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any configuration key")
    p.add_argument("--out", metavar="PATH", help=f"output CSV (default: ${OUT_DIR_ENV}/<command>.csv or stdout)")
    p.add_argument("--workers", type=int, default=1)


def build_parser():
    parser = argparse.ArgumentParser(prog="obsim", description=__doc__, epilog=_epilog(),
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    kw = dict(epilog=_epilog(), formatter_class=argparse.RawDescriptionHelpFormatter)

    p = sub.add_parser("run", help="single simulation", **kw)
    _add_common(p)
    p.add_argument("--trace", metavar="PATH", help="write the control-event trace here")

    p = sub.add_parser("compare", help="scheme x load x seed matrix", **kw)
    _add_common(p)
    p.add_argument("--schemes", default="ahdr,mlhdr")
    p.add_argument("--loads", default="0.2,0.5,0.8")
    p.add_argument("--seeds", default="1-5", help="comma list or inclusive range a-b")

    p = sub.add_parser("sweep-threshold", help="BLR versus pinned decision threshold", **kw)
    _add_common(p)
    p.add_argument("--thresholds", default="0:1:0.1")
    p.add_argument("--seeds", default="1-3")

    p = sub.add_parser("sweep-weights", help="BLR over (beta_blr, beta_u) grid", **kw)
    _add_common(p)
    p.add_argument("--beta-blr", default="0:1:0.2", help="values for a factorial grid")
    p.add_argument("--beta-u", default="0:1:0.2", help="values for a factorial grid")
    p.add_argument("--points", help="explicit grid 'b:u,b:u,...' (overrides the factorial grid)")
    p.add_argument("--skip-invalid", action="store_true",
                   help="drop factorial points with beta_blr + beta_u > 1 instead of failing")
    p.add_argument("--seeds", default="1-3")

    p = sub.add_parser("validate-config", help="resolve and check a configuration", **kw)
    _add_common(p)
    return parser


def resolve_config(args):
    cfg = SimConfig.from_file(args.config) if args.config else SimConfig()
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = None if v.strip().lower() in ("none", "null") else v.strip()
    for key in ("topology", "scheme", "load", "seed", "duration", "warmup"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    cfg = cfg.replace(**overrides)
    if args.burst_scale is not None:
        cfg = cfg.replace(mean_burst_size=cfg.effective_burst_size * args.burst_scale)
    return cfg.validate()


def _out_path(args):
    if args.out:
        return Path(args.out)
    env = os.environ.get(OUT_DIR_ENV)
    if env:
        return Path(env) / f"{args.command}.csv"
    return None


def _emit(args, text, config):
    path = _out_path(args)
    if path is None:
        sys.stdout.write(text)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    # resolved configuration next to the output, for provenance
    path.with_suffix(".config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")


def cmd_run(args):
    cfg = resolve_config(args)
    trace = None
    fh = None
    if args.trace:
        fh = open(args.trace, "w")
        trace = TraceLog(sink=fh, keep=False)
    try:
        m = Simulation(cfg, trace=trace).run()
    finally:
        if fh:
            fh.close()
    _emit(args, analysis.write_runs_csv([analysis.run_row(m)]), cfg)
    return 0


def cmd_compare(args):
    cfg = resolve_config(args)
    schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
    raw, agg = analysis.compare(cfg, schemes, parse_floats(args.loads), parse_ints(args.seeds), args.workers)
    _emit(args, analysis.write_runs_csv(raw + agg), cfg)
    return 0


def cmd_sweep_threshold(args):
    cfg = resolve_config(args)
    res = analysis.threshold_sweep(cfg, cfg.load, parse_floats(args.thresholds), parse_ints(args.seeds),
                                   args.workers)
    _emit(args, res.to_csv(), cfg)
    best = res.argmin()["pinned_threshold"]
    print(f"best threshold: {best}", file=sys.stderr)
    return 0


def cmd_sweep_weights(args):
    cfg = resolve_config(args)
    if args.points:
        grid = parse_points(args.points)
    else:
        grid = [(b, u) for b in parse_floats(args.beta_blr) for u in parse_floats(args.beta_u)]
        if args.skip_invalid:
            grid = [(b, u) for b, u in grid if b + u <= 1.0 + 1e-9]
    res = analysis.weight_sweep(cfg, grid, parse_ints(args.seeds), args.workers)
    _emit(args, res.to_csv(), cfg)
    return 0


def cmd_validate_config(args):
    cfg = resolve_config(args)
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return 0


COMMANDS = {
    "run": cmd_run,
    "compare": cmd_compare,
    "sweep-threshold": cmd_sweep_threshold,
    "sweep-weights": cmd_sweep_weights,
    "validate-config": cmd_validate_config,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"obsim: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except (UsageError, ValueError) as exc:
        print(f"obsim: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
