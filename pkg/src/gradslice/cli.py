"""Command line interface: ``gradslice slice|simulate|bench|preview``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import tempfile
import time
import warnings

from . import fixtures
from .errors import (ConfigError, EmissionError, GeometryError, GradsliceError, PlanningError,
                     SimulationError)
from .gcode import emit_gcode, emit_layer_svg, parse_gcode
from .layer import prepare_design
from .palette import build_palette
from .profile import load_profile, tomllib
from .simulator import (CALIBRATION_MATERIALS, calibration_design, calibration_plan, chamber_for,
                        moves_from_gcode, moves_from_plans, realized_boundary_error, simulate)
from .slicer import GradientSlicer, check_lookahead, check_settings
from .strategy import LayerPlan, bed_offset
from .vcad import bounding_box, to_source

log = logging.getLogger("gradslice")

EXIT_OK, EXIT_CONFIG, EXIT_GEOMETRY, EXIT_EMISSION = 0, 2, 3, 4


def exit_code_for(exc):
    if isinstance(exc, EmissionError):
        return EXIT_EMISSION
    if isinstance(exc, (GeometryError, PlanningError, SimulationError)):
        return EXIT_GEOMETRY
    return EXIT_CONFIG


def _add_slicing_args(p):
    p.add_argument("design", nargs="?", help="design file (.vcad) or @fixture name")
    p.add_argument("--profile", help="machine profile (TOML)")
    p.add_argument("--strategy", type=int, choices=(1, 2), default=1)
    p.add_argument("--colors", type=int, default=4, help="palette size N")
    p.add_argument("--zipper-beta", type=float, default=0.0, metavar="PCT",
                   help="zipper band width in percent of the gradient range")
    p.add_argument("--layer-height", type=float, default=0.2, metavar="MM")
    p.add_argument("--bead-width", type=float, default=0.4, metavar="MM")
    p.add_argument("--resolution", type=float, default=None, metavar="MM")
    p.add_argument("--perimeters", type=int, default=3)
    p.add_argument("--fill", choices=("concentric", "rectilinear"), default="concentric")
    p.add_argument("--lookahead", default="auto", metavar="MM|auto")
    p.add_argument("--purge-threshold", type=float, default=None)
    p.add_argument("--max-layers", type=int, default=None)


def _resolve_design(arg, workdir):
    """Return (source text, base directory) for a path or ``@fixture``."""
    if not arg:
        raise ConfigError("no design given")
    if arg.startswith("@"):
        name = arg[1:]
        if name == "palette":
            path = fixtures.write_palette_fixture(workdir)
            with open(path) as fh:
                return fh.read(), workdir
        if name == "calibration":
            return to_source(calibration_design()), None
        if name not in fixtures.FIXTURES:
            raise ConfigError(f"unknown fixture {name!r}; choose from "
                              f"{sorted(fixtures.FIXTURES) + ['calibration', 'palette']}")
        return fixtures.FIXTURES[name](), None
    if not os.path.exists(arg):
        raise ConfigError(f"design file not found: {arg}")
    with open(arg, encoding="utf-8") as fh:
        return fh.read(), os.path.dirname(os.path.abspath(arg))


def _slicer_from_args(args, profile):
    return GradientSlicer(strategy=args.strategy, n_colors=args.colors, zipper_beta=args.zipper_beta / 100.0,
                          layer_height=args.layer_height, bead_width=args.bead_width,
                          resolution=args.resolution, perimeters=args.perimeters, fill=args.fill,
                          lookahead=args.lookahead, purge_threshold=args.purge_threshold, profile=profile,
                          max_layers=args.max_layers)


def _write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_slice(args):
    profile = load_profile(args.profile)
    if args.calibration:
        settings = check_settings(args.layer_height, args.bead_width)
        look = check_lookahead(args.lookahead, profile, settings)
        design, plans = calibration_plan(profile, settings, lookahead=look)
        palette = build_palette(2, CALIBRATION_MATERIALS)
        b = bounding_box(design)
        text = emit_gcode(plans, profile, settings, palette, bed_offset((b[0], b[1], b[3], b[4]), profile))
        _write(args.output, text)
        report = {"calibration": True, "lookahead": look, "layers": 1}
    else:
        with tempfile.TemporaryDirectory() as work:
            source, base = _resolve_design(args.design, work)
            slicer = _slicer_from_args(args, profile)
            slicer.base_dir = base
            slicer.fit(source)
        text = slicer.to_gcode()
        _write(args.output, text)
        if args.svg:
            os.makedirs(args.svg, exist_ok=True)
            for i in range(len(slicer.plans_)):
                _write(os.path.join(args.svg, f"layer_{i:04d}.svg"), slicer.layer_svg(i))
        report = slicer.report().as_dict()
    if args.report:
        _write(args.report, json.dumps(report, indent=2, sort_keys=True) + "\n")
    log.info("wrote %s", args.output)
    return EXIT_OK


def cmd_simulate(args):
    profile = load_profile(args.profile)
    with open(args.gcode, encoding="utf-8") as fh:
        program = parse_gcode(fh.read())
    design = None
    offset = (0.0, 0.0)
    materials = None
    if args.calibration:
        design = calibration_design(height=args.layer_height)
        materials = list(CALIBRATION_MATERIALS)
    elif args.design:
        with tempfile.TemporaryDirectory() as work:
            source, base = _resolve_design(args.design, work)
            model = prepare_design(source, base)
        design, materials = model.design, model.materials
    if design is not None:
        b = bounding_box(design)
        if b is not None:
            offset = bed_offset((b[0], b[1], b[3], b[4]), profile)
    stream = moves_from_gcode(program, profile, offset, -args.layer_height / 2)
    segments = simulate(stream, chamber_for(profile, args.model))
    error = None
    if design is not None and segments:
        try:
            error = realized_boundary_error(segments, design, None, materials)
        except SimulationError as exc:
            log.warning("%s", exc)
    report = {
        "segments": len(segments),
        "volume": sum(s.volume for s in segments),
        "boundary_error": error,
        "table": [_row(s) for s in segments] if args.table else [],
    }
    text = json.dumps(report, indent=2) + "\n"
    if args.report:
        _write(args.report, text)
    else:
        sys.stdout.write(text)
    if args.svg:
        _simulated_svgs(args, segments, program, profile, design, materials, offset)
    return EXIT_OK


def _row(seg):
    commanded = seg.commanded[1] if len(seg.commanded) > 1 else 0.0
    return [round(v, 6) for v in (*seg.start, *seg.end, seg.volume, commanded, seg.fraction)]


def _simulated_svgs(args, segments, program, profile, design, materials, offset):
    os.makedirs(args.svg, exist_ok=True)
    palette = build_palette(2, materials or ("a", "b"))
    settings = check_settings(args.layer_height, args.bead_width)
    zs = sorted({round(s.z, 6) for s in segments})
    for i, z in enumerate(zs):
        layer_segs = [s for s in segments if round(s.z, 6) == z]
        svg = emit_layer_svg(LayerPlan(z, i, []), palette, profile, settings, "simulated", layer_segs, offset)
        _write(os.path.join(args.svg, f"layer_{i:04d}.svg"), svg)


def cmd_preview(args):
    profile = load_profile(args.profile)
    with tempfile.TemporaryDirectory() as work:
        source, base = _resolve_design(args.design, work)
        slicer = _slicer_from_args(args, profile)
        slicer.base_dir = base
        slicer.fit(source)
    i = args.layer
    if not 0 <= i < len(slicer.plans_):
        raise ConfigError(f"layer {i} out of range (0..{len(slicer.plans_) - 1})")
    segments = None
    if args.mode == "simulated":
        stream = moves_from_plans(slicer.plans_, slicer.settings_, slicer.palette_, profile)
        z = slicer.plans_[i].z
        segments = [s for s in simulate(stream, chamber_for(profile)) if abs(s.z - z) < 1e-9]
    _write(args.output, slicer.layer_svg(i, args.mode, segments))
    return EXIT_OK


DEFAULT_BENCH = [
    # (case label, strategy, colors, zipper percent)
    ("palette", 1, 4, 0.0), ("palette", 1, 8, 0.0), ("palette", 1, 12, 0.0), ("palette", 1, 16, 0.0),
    ("palette", 1, 16, 2.0),
    ("palette", 2, 12, 0.0), ("palette", 2, 24, 0.0), ("palette", 2, 36, 0.0), ("palette", 2, 48, 0.0),
]


def _bench_cases(path):
    if not path:
        return DEFAULT_BENCH
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return [(c.get("object", "palette"), int(c["strategy"]), int(c["colors"]), float(c.get("zipper", 0.0)))
            for c in data.get("case", [])]


def run_bench(cases, profile, max_layers=None, workdir=None):
    rows = []
    with tempfile.TemporaryDirectory() as tmp:
        work = workdir or tmp
        for obj, strategy, colors, zipper in cases:
            source, base = _resolve_design("@" + obj, work)
            slicer = GradientSlicer(strategy=strategy, n_colors=colors, zipper_beta=zipper / 100.0,
                                    profile=profile, max_layers=max_layers, base_dir=base)
            t0 = time.perf_counter()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                slicer.fit(source)
                slicer.to_gcode()
            dt = time.perf_counter() - t0
            b = slicer.model_.bounds
            rows.append({"object": obj,
                         "dimensions": f"{b[3] - b[0]:g} x {b[4] - b[1]:g} x {b[5] - b[2]:g}",
                         "layers": len(slicer.plans_), "strategy": strategy, "colors": colors,
                         "zippering": ("Yes" if zipper > 0 else "No") if strategy == 1 else "NA",
                         "seconds": round(dt, 3)})
    return rows


def cmd_bench(args):
    profile = load_profile(args.profile)
    rows = run_bench(_bench_cases(args.suite), profile, args.max_layers)
    fields = ["object", "dimensions", "layers", "strategy", "colors", "zippering", "seconds"]
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.output:
            out.close()
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="gradslice", description="Gradient-aware multi-material slicer")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("slice", help="slice a design to G-code")
    _add_slicing_args(p)
    p.add_argument("-o", "--output", default="out.gcode")
    p.add_argument("--svg", metavar="DIR", help="write one commanded-colour SVG per layer")
    p.add_argument("--report", metavar="FILE", help="JSON summary report")
    p.add_argument("--calibration", action="store_true", help="emit the look-ahead calibration object")
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("simulate", help="simulate melt-chamber dead volume over G-code")
    p.add_argument("gcode")
    p.add_argument("--profile")
    p.add_argument("--design", help="design used to measure the realised boundary error")
    p.add_argument("--calibration", action="store_true", help="measure against the calibration object")
    p.add_argument("--model", choices=("plug_flow", "perfect_mix", "thermal"), default=None)
    p.add_argument("--layer-height", type=float, default=0.2, metavar="MM")
    p.add_argument("--bead-width", type=float, default=0.4, metavar="MM")
    p.add_argument("--report", metavar="FILE")
    p.add_argument("--table", action="store_true", help="include the per-segment table")
    p.add_argument("--svg", metavar="DIR", help="write simulated-colour SVGs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="time the slicer on the palette object")
    p.add_argument("--suite", help="TOML file with [[case]] object/strategy/colors/zipper entries")
    p.add_argument("--profile")
    p.add_argument("--max-layers", type=int, default=None)
    p.add_argument("-o", "--output", help="CSV file (default stdout)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("preview", help="render one layer as SVG")
    _add_slicing_args(p)
    p.add_argument("--layer", type=int, default=0)
    p.add_argument("--mode", choices=("commanded", "simulated"), default="commanded")
    p.add_argument("-o", "--output", default="layer.svg")
    p.set_defaults(func=cmd_preview)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except GradsliceError as exc:
        kind = type(exc).__name__
        print(json.dumps({"error": kind, "message": str(exc)}), file=sys.stderr)
        return exit_code_for(exc)
    except OSError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
