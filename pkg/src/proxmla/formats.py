"""Text file formats: recipe config, height maps, metrics tables, 16-bit PGM images."""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError
from .mask import GridSpec, MaskSpec
from .metrology import LensMetrics, RegimeThresholds
from .propagate import Spectrum
from .resist import ORIENTATIONS, ProcessRecipe, SurfaceProfile
from .studio import REFERENCE_MASK

HMAP_MAGIC = "HMAP 1"

# ---------------------------------------------------------------------------
# height maps


def _fmt(v: float) -> str:
    return f"{v + 0.0:.12g}"


def format_heightmap(profile: SurfaceProfile) -> str:
    g = profile.grid
    lines = [HMAP_MAGIC, f"{g.nx} {g.ny} {g.dx_um!r} {g.dy_um!r} {profile.orientation}"]
    for row in profile.heights_um:
        lines.append(" ".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def export_heightmap(profile: SurfaceProfile, path) -> None:
    Path(path).write_text(format_heightmap(profile), encoding="utf-8", newline="\n")


def _number(token: str, lineno: int) -> float:
    try:
        v = float(token)
    except ValueError:
        raise ParseError(f"non-numeric value {token!r}", lineno) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {token!r}", lineno)
    return v


def parse_heightmap(text: str) -> SurfaceProfile:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].rstrip("\r") != HMAP_MAGIC:
        raise ParseError(f"bad magic, expected {HMAP_MAGIC!r}", 1)
    if len(lines) < 2:
        raise ParseError("missing header", 2)
    head = lines[1].split()
    if len(head) != 5:
        raise ParseError("header must read 'nx ny dx_um dy_um orientation'", 2)
    try:
        nx, ny = int(head[0]), int(head[1])
    except ValueError:
        raise ParseError("nx and ny must be integers", 2) from None
    dx, dy = _number(head[2], 2), _number(head[3], 2)
    orientation = head[4]
    if nx < 1 or ny < 1 or dx <= 0 or dy <= 0:
        raise ParseError("grid dimensions and spacings must be positive", 2)
    if orientation not in ORIENTATIONS:
        raise ParseError(f"unknown orientation {orientation!r}", 2)
    rows = lines[2:]
    if len(rows) != ny:
        raise ParseError(f"expected {ny} rows of heights, found {len(rows)}", 3 + min(len(rows), ny))
    heights = np.empty((ny, nx))
    for j, line in enumerate(rows):
        lineno = j + 3
        tokens = line.split()
        if len(tokens) != nx:
            raise ParseError(f"expected {nx} values, found {len(tokens)}", lineno)
        heights[j] = [_number(t, lineno) for t in tokens]
    grid = GridSpec(nx, ny, dx, dy, nx * dx, ny * dy)
    return SurfaceProfile(grid, heights, orientation)


def import_heightmap(path) -> SurfaceProfile:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise ParseError("file is not UTF-8") from None
    return parse_heightmap(text)


# ---------------------------------------------------------------------------
# images


def heights_to_gray16(heights: np.ndarray) -> np.ndarray:
    """Linear map min -> 0, max -> 65535; a constant map gives mid-gray 32768."""
    h = np.asarray(heights, dtype=float)
    lo, hi = h.min(), h.max()
    if hi == lo:
        return np.full(h.shape, 32768, dtype=np.uint16)
    return np.rint((h - lo) / (hi - lo) * 65535).astype(np.uint16)


def export_image(profile: SurfaceProfile, path) -> None:
    """Binary 16-bit PGM (P5, big-endian); image row 0 is the first height row."""
    if profile.heights_um.size == 0:
        raise ConfigError("empty profile")
    gray = heights_to_gray16(profile.heights_um)
    ny, nx = gray.shape
    payload = f"P5\n{nx} {ny}\n65535\n".encode("ascii") + gray.astype(">u2").tobytes()
    try:
        Path(path).write_bytes(payload)
    except OSError as exc:
        raise ConfigError(f"cannot write image {path}: {exc.strerror}") from None


def read_pgm16(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ParseError("not a binary PGM", 1)
    nx, ny = map(int, parts[1].split())
    if int(parts[2]) != 65535:
        raise ParseError("expected maxval 65535", 3)
    return np.frombuffer(parts[3], dtype=">u2").reshape(ny, nx).astype(np.uint16)


# ---------------------------------------------------------------------------
# metrics tables

METRIC_COLUMNS = ("gap_um", "D_um", "h_um", "RC_um", "f_um", "NA", "fill_factor", "sphere_rms_um", "regime")


def metrics_row(label, m: LensMetrics | None) -> list[str]:
    if m is None:
        return [str(label)] + ["nan"] * 7 + ["-"]
    return [
        str(label),
        f"{m.D_um:.4f}",
        f"{m.h_um:.4f}",
        f"{m.RC_um:.4f}",
        f"{m.f_um:.4f}",
        f"{m.NA:.6f}",
        f"{m.fill_factor:.6f}",
        f"{m.sphere_rms_um:.6f}",
        str(m.regime),
    ]


def format_table(rows, columns=METRIC_COLUMNS) -> str:
    out = ["\t".join(columns)]
    out.extend("\t".join(r) for r in rows)
    return "\n".join(out) + "\n"


def parse_table(text: str) -> list[dict[str, str]]:
    lines = [l for l in text.split("\n") if l]
    if not lines:
        return []
    head = lines[0].split("\t")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != len(head):
            raise ParseError(f"expected {len(head)} columns", i)
        rows.append(dict(zip(head, cells)))
    return rows


# ---------------------------------------------------------------------------
# run configuration

_UNIT_SUFFIX = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?\s*[A-Za-zµμ]+$")


@dataclass
class RunConfig:
    mask: MaskSpec = REFERENCE_MASK
    recipe: ProcessRecipe = field(default_factory=ProcessRecipe)
    dx_um: float = 0.4
    allow_undersampling: bool = False
    thresholds: RegimeThresholds = RegimeThresholds()


_MASK_KEYS = {f.name for f in dataclasses.fields(MaskSpec)}
_RECIPE_KEYS = {f.name for f in dataclasses.fields(ProcessRecipe)} - {"spectrum"}
_REGIME_KEYS = {f.name for f in dataclasses.fields(RegimeThresholds)}
_INT_KEYS = {"z_slices"}


def _value(key: str, raw: str, lineno: int) -> float:
    raw = raw.strip()
    if _UNIT_SUFFIX.match(raw):
        raise ConfigError(f"line {lineno}: {key} carries a unit; units are fixed by the key (um, s, 1/um)")
    try:
        v = float(raw)
    except ValueError:
        raise ConfigError(f"line {lineno}: {key} = {raw!r} is not a number") from None
    if not math.isfinite(v):
        raise ConfigError(f"line {lineno}: {key} must be finite")
    return v


def _bool(key: str, raw: str, lineno: int) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ConfigError(f"line {lineno}: {key} must be true or false")


def parse_config(text: str) -> RunConfig:
    """Flat ``section.key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    mask_kw, recipe_kw, regime_kw = {}, {}, {}
    wavelengths = weights = None
    dx, undersample = 0.4, False
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        seen.add(key)
        section, _, name = key.partition(".")
        if section == "mask" and name in _MASK_KEYS:
            mask_kw[name] = _value(key, raw, lineno)
        elif section == "recipe" and name in _RECIPE_KEYS:
            v = _value(key, raw, lineno)
            if name in _INT_KEYS:
                if v != int(v):
                    raise ConfigError(f"line {lineno}: {key} must be an integer")
                v = int(v)
            recipe_kw[name] = v
        elif section == "spectrum" and name == "wavelengths_um":
            wavelengths = [_value(key, t, lineno) for t in raw.split(",")]
        elif section == "spectrum" and name == "weights":
            weights = [_value(key, t, lineno) for t in raw.split(",")]
        elif key == "grid.dx_um":
            dx = _value(key, raw, lineno)
            if not dx > 0:
                raise ConfigError(f"line {lineno}: grid.dx_um must be positive")
        elif key == "grid.allow_undersampling":
            undersample = _bool(key, raw, lineno)
        elif section == "regime" and name in _REGIME_KEYS:
            regime_kw[name] = _value(key, raw, lineno)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")

    if weights is not None and wavelengths is None:
        raise ConfigError("spectrum.weights given without spectrum.wavelengths_um")
    if wavelengths is not None:
        if weights is None:
            spectrum = Spectrum.uniform(wavelengths)
        elif len(weights) != len(wavelengths):
            raise ConfigError("spectrum.weights and spectrum.wavelengths_um differ in length")
        else:
            spectrum = Spectrum(tuple(zip(wavelengths, weights)))
        recipe_kw["spectrum"] = spectrum
    if not mask_kw:
        mask = REFERENCE_MASK
    else:
        missing = {"aperture_diameter_um", "pitch_um"} - set(mask_kw)
        if missing:
            raise ConfigError(f"mask section lacks {sorted(missing)}")
        mask = MaskSpec(**mask_kw)
    return RunConfig(mask, ProcessRecipe(**recipe_kw), dx, undersample, RegimeThresholds(**regime_kw))


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise ConfigError(f"config {path} is not UTF-8") from None
    return parse_config(text)


def _canon(name: str, v) -> str:
    return str(int(v)) if name in _INT_KEYS else repr(float(v))


def format_config(cfg: RunConfig) -> str:
    """Canonical config text; ``parse_config(format_config(c))`` reproduces ``c``."""
    lines = []
    for f in dataclasses.fields(MaskSpec):
        lines.append(f"mask.{f.name} = {_canon(f.name, getattr(cfg.mask, f.name))}")
    r = cfg.recipe
    for f in dataclasses.fields(ProcessRecipe):
        if f.name == "spectrum":
            continue
        lines.append(f"recipe.{f.name} = {_canon(f.name, getattr(r, f.name))}")
    lines.append("spectrum.wavelengths_um = " + ", ".join(_canon("", w) for w, _ in r.spectrum.lines))
    lines.append("spectrum.weights = " + ", ".join(_canon("", a) for _, a in r.spectrum.lines))
    lines.append(f"grid.dx_um = {_canon('', cfg.dx_um)}")
    lines.append(f"grid.allow_undersampling = {'true' if cfg.allow_undersampling else 'false'}")
    for f in dataclasses.fields(RegimeThresholds):
        lines.append(f"regime.{f.name} = {_canon(f.name, getattr(cfg.thresholds, f.name))}")
    return "\n".join(lines) + "\n"


def config_echo(cfg: RunConfig) -> dict:
    out = {}
    for line in format_config(cfg).splitlines():
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out
