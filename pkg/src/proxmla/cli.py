"""Command-line entry point.

Exit codes: 0 ok, 2 config/usage error, 3 parse error, 4 numerical error,
5 range or monotonicity error. Failures print one line to stderr::

    error code=3 kind=parse message="line 4: non-numeric value 'x'"
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, ProxmlaError
from .formats import (
    RunConfig,
    config_echo,
    export_heightmap,
    export_image,
    format_config,
    METRIC_COLUMNS,
    format_table,
    import_heightmap,
    load_config,
    metrics_row,
)
from .mask import MaskSpec
from .metrology import measure_profile
from .resist import PDMS_INDEX, SurfaceProfile
from .studio import Simulator, calibrate, check_design_rules, inverse_gap, sweep

log = logging.getLogger("proxmla")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"usage: {message}")


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class _Run:
    """Collects stage timings and outputs for the run manifest."""

    def __init__(self, command: str, out_dir: Path | None):
        self.command = command
        self.out_dir = out_dir
        self.timings: dict[str, float] = {}
        self.outputs: list[str] = []
        self.inputs: dict[str, str] = {}
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)

    def stage(self, name):
        run = self

        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[name] = round(time.perf_counter() - self.t0, 6)

        return _Timer()

    def input(self, path):
        self.inputs[str(path)] = _digest(path)

    def write_text(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        path.write_text(text, encoding="utf-8", newline="\n")
        self.outputs.append(name)
        return path

    def register(self, name: str):
        self.outputs.append(name)

    def manifest(self, cfg: RunConfig | None = None, extra: dict | None = None):
        if self.out_dir is None:
            return
        missing = [o for o in self.outputs if not (self.out_dir / o).exists()]
        if missing:
            raise ProxmlaError(f"outputs missing after run: {missing}")
        doc = {
            "tool": "proxmla",
            "version": __version__,
            "command": self.command,
            "recipe": config_echo(cfg) if cfg is not None else None,
            "inputs": self.inputs,
            "timings_s": self.timings,
            "outputs": sorted(self.outputs + ["manifest.json"]),
        }
        if extra:
            doc.update(extra)
        (self.out_dir / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "gap", None) is not None:
        cfg.recipe = cfg.recipe.with_(gap_um=args.gap)
    if getattr(args, "dx", None) is not None:
        cfg.dx_um = args.dx
    return cfg


def _simulator(cfg: RunConfig) -> Simulator:
    return Simulator(cfg.dx_um, cfg.allow_undersampling, cfg.thresholds)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    run = _Run("simulate", Path(args.out))
    if args.config:
        run.input(args.config)
    sim = _simulator(cfg)
    with run.stage("expose_develop"):
        mold = sim.mold(cfg.mask, cfg.recipe)
    with run.stage("cast_metrology"):
        result = sim.measure(cfg.mask, cfg.recipe, mold)
    export_heightmap(result.mold, run.out_dir / "mold.hmap")
    run.register("mold.hmap")
    export_heightmap(result.replica, run.out_dir / "replica.hmap")
    run.register("replica.hmap")
    table = format_table([metrics_row(f"{cfg.recipe.gap_um:g}", result.metrics)])
    run.write_text("metrics.tsv", table)
    if args.images:
        export_image(result.mold, run.out_dir / "mold.pgm")
        run.register("mold.pgm")
        export_image(result.replica, run.out_dir / "replica.pgm")
        run.register("replica.pgm")
    run.manifest(cfg, {"regime": str(result.report.regime)})
    sys.stdout.write(table)
    return 0


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_sweep(args) -> int:
    cfg = _config(args)
    run = _Run("sweep", Path(args.out))
    if args.config:
        run.input(args.config)
    with run.stage("sweep"):
        res = sweep(cfg.recipe, args.axis, _floats(args.values), cfg.mask, _simulator(cfg), args.workers)
    rows = [metrics_row(f"{p.value:g}", p.metrics) for p in res.points]
    columns = METRIC_COLUMNS if args.axis == "gap" else ("pitch_um",) + METRIC_COLUMNS[1:]
    text = format_table(rows, columns)
    run.write_text("sweep.tsv", text)
    errors = {f"{p.value:g}": p.error for p in res.points if p.error}
    run.manifest(cfg, {"errors": errors})
    sys.stdout.write(text)
    return 0


def _observation(text: str) -> tuple[float, float]:
    try:
        gap, sag = text.split(":")
        return float(gap), float(sag)
    except ValueError:
        raise ConfigError(f"observation must read GAP:SAG, got {text!r}") from None


def _bound(text: str):
    try:
        name, rng = text.split("=")
        lo, hi = rng.split(":")
        return name.strip(), (float(lo), float(hi))
    except ValueError:
        raise ConfigError(f"bound must read NAME=LO:HI, got {text!r}") from None


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    run = _Run("calibrate", Path(args.out))
    if args.config:
        run.input(args.config)
    obs = [_observation(o) for o in args.observation] or [(360.0, 6.11)]
    bounds = dict(_bound(b) for b in args.bound)
    with run.stage("calibrate"):
        res = calibrate(cfg.recipe, obs, bounds, cfg.mask, _simulator(cfg), max_iter=args.max_iter)
    rows = [[k, repr(v)] for k, v in res.fitted.items()]
    rows += [["residual_um", repr(res.residual)], ["iterations", str(res.iterations)]]
    text = format_table(rows, ("parameter", "value"))
    run.write_text("calibration.tsv", text)
    run.write_text("calibrated.cfg", format_config(replace(cfg, recipe=res.recipe)))
    run.manifest(cfg, {"calibration": {**res.fitted, "residual_um": res.residual, "iterations": res.iterations}})
    sys.stdout.write(text)
    return 0


def cmd_invert(args) -> int:
    cfg = _config(args)
    gap = inverse_gap(
        cfg.recipe, args.target_sag, (args.gap_min, args.gap_max), cfg.mask, _simulator(cfg), gap_tol_um=args.gap_tol
    )
    sys.stdout.write(f"gap_um\t{gap:.4f}\n")
    return 0


def cmd_analyze(args) -> int:
    profile = import_heightmap(args.heightmap)
    spec = MaskSpec(args.aperture, args.pitch)
    origin = (args.origin_x, args.origin_y)
    if args.origin_x is None or args.origin_y is None:
        origin = _auto_origin(profile)
    periodic = {"auto": None, "yes": True, "no": False}[args.periodic]
    report = measure_profile(
        profile, spec, n=args.index, resist_thickness_um=args.thickness, origin=origin, periodic=periodic
    )
    rows = [metrics_row(args.label, report.summary)]
    if args.per_lens:
        rows += [metrics_row(f"lens{i}", m) for i, m in enumerate(report.lenses)]
    text = format_table(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    sys.stdout.write(text)
    return 0


def _auto_origin(profile: SurfaceProfile) -> tuple[float, float]:
    """Lattice origin at the deepest dimple (mold) or highest cap (replica)."""
    h = profile.heights_um if profile.orientation == "mold-concave" else -profile.heights_um
    j, i = np.unravel_index(np.argmin(h), h.shape)
    return (i * profile.grid.dx_um, j * profile.grid.dy_um)


def cmd_rules(args) -> int:
    report = check_design_rules(MaskSpec(args.aperture, args.pitch), args.gap, args.closeness)
    for r in report.rules:
        sys.stdout.write(f"rule {r.name}\t{'pass' if r.passed else 'fail'}\tmargin_um={r.margin:g}\t{r.description}\n")
    return 0


def cmd_export_image(args) -> int:
    export_image(import_heightmap(args.heightmap), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="proxmla", description="Proximity-printing microlens mold simulator and metrology")
    p.add_argument("--version", action="version", version=f"proxmla {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_config(sp):
        sp.add_argument("--config", help="recipe config (key = value)")
        sp.add_argument("--dx", type=float, help="override grid.dx_um")

    s = sub.add_parser("simulate", help="mask -> exposure -> development -> replica -> metrics")
    with_config(s)
    s.add_argument("--gap", type=float, help="override recipe.gap_um")
    s.add_argument("--out", required=True)
    s.add_argument("--images", action="store_true", help="also write 16-bit PGM images")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="pipeline over gaps or pitches")
    with_config(s)
    s.add_argument("--axis", choices=("gap", "pitch"), default="gap")
    s.add_argument("--values", required=True, help="comma-separated values in um")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("calibrate", help="fit resist parameters to observed sags")
    with_config(s)
    s.add_argument("--observation", action="append", default=[], metavar="GAP:SAG")
    s.add_argument("--bound", action="append", default=[], metavar="NAME=LO:HI")
    s.add_argument("--max-iter", type=int, default=500)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("invert", help="printing gap for a target sag")
    with_config(s)
    s.add_argument("--target-sag", type=float, required=True)
    s.add_argument("--gap-min", type=float, default=240.0)
    s.add_argument("--gap-max", type=float, default=720.0)
    s.add_argument("--gap-tol", type=float, default=1.0)
    s.set_defaults(func=cmd_invert)

    s = sub.add_parser("analyze", help="metrology on an imported height map")
    s.add_argument("--heightmap", required=True)
    s.add_argument("--pitch", type=float, required=True)
    s.add_argument("--aperture", type=float, default=80.0)
    s.add_argument("--index", type=float, default=PDMS_INDEX)
    s.add_argument("--thickness", type=float, default=18.0, help="resist thickness for the regime test")
    s.add_argument("--origin-x", type=float)
    s.add_argument("--origin-y", type=float)
    s.add_argument("--periodic", choices=("auto", "yes", "no"), default="auto")
    s.add_argument("--label", default="scan")
    s.add_argument("--per-lens", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("rules", help="design-rule check")
    s.add_argument("--pitch", type=float, required=True)
    s.add_argument("--aperture", type=float, required=True)
    s.add_argument("--gap", type=float, required=True)
    s.add_argument("--closeness", type=float, default=0.25)
    s.set_defaults(func=cmd_rules)

    s = sub.add_parser("export-image", help="height map to 16-bit PGM")
    s.add_argument("--heightmap", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_export_image)
    return p


def _fail(exc: ProxmlaError) -> int:
    msg = str(exc).replace("\n", " ").replace('"', "'")
    sys.stderr.write(f'error code={exc.exit_code} kind={exc.kind} message="{msg}"\n')
    return exc.exit_code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return args.func(args)
    except ProxmlaError as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
