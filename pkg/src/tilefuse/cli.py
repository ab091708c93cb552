"""Command-line entry point: ``tilefuse {plan,run,probe,synth}``.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import geometry as geo
from .errors import ConfigError, TileFuseError
from .imageio import synth_image, write_ppm
from .pipeline import PROFILES, format_probe_csv, load_config, retention_probe, run

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _layers(text):
    text = text.strip()
    if text.lower() in ("", "none"):
        return ()
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated layer indices, got {text!r}")


def _common(p, inject_append=False):
    p.add_argument("--config", help="key = value config file (applied on top of --profile)")
    p.add_argument("--profile", choices=sorted(PROFILES), default="toy")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory for CSV report sections")
    p.add_argument("--plan-only", action="store_true", help="geometry only, skip the encoder")
    p.add_argument("--inject-layers", type=_layers, action="append" if inject_append else "store",
                   help="comma-separated decoder layers ('none' for no injection)")


def build_parser():
    parser = argparse.ArgumentParser(prog="tilefuse", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("plan", help="print the window plan for each scale"))
    _common(sub.add_parser("run", help="run the full pipeline and write a report"))
    probe = sub.add_parser("probe", help="paired retention sweep with and without injection")
    _common(probe, inject_append=True)
    probe.add_argument("--seeds", type=int, default=20)

    synth = sub.add_parser("synth", help="write a seeded synthetic PPM image")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--side", type=int, default=96)
    synth.add_argument("--min-side", type=int, default=1, help="reject sides below this (patch side)")
    synth.add_argument("--out", required=True, help="output .ppm path")
    return parser


def resolve_config(args):
    config = PROFILES[args.profile]
    if args.config:
        config = load_config(args.config, config)
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.out:
        kw["out"] = args.out
    if args.plan_only or args.command == "plan":
        kw["plan_only"] = True
    layers = args.inject_layers
    if layers is not None and args.command != "probe":
        kw["inject_layers"] = layers
    return config.replace(**kw)


def _emit(text_out, sections, out_dir):
    sys.stdout.write(text_out)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        for name, body in sections.items():
            with open(os.path.join(out_dir, f"{name}.csv"), "w") as fh:
                fh.write(body)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            write_ppm(args.out, synth_image(args.seed, args.side, args.min_side))
            return EXIT_OK
        config = resolve_config(args)
        if args.command in ("plan", "run"):
            report = run(config)
            if config.plan_only:
                _emit(geo.format_plan_text(report.plan_rows), {"plan": geo.format_plan_csv(report.plan_rows)},
                      config.out)
            else:
                _emit(report.to_text(), report.sections(), config.out)
        else:
            rows = retention_probe(config, args.seeds, args.inject_layers)
            body = format_probe_csv(rows)
            _emit(body, {"probe": body}, config.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TileFuseError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
