"""Experiment orchestration: pipeline runs, sweeps, calibration, gap inversion, design rules."""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import CalibrationError, ConfigError, MonotonicityError, ProxmlaError, RangeError
from .mask import GridSpec, MaskSpec, rasterize
from .metrology import LensMetrics, ProfileReport, RegimeThresholds, measure_profile
from .propagate import default_z_samples, exposure_volume, intensity_volume
from .resist import ProcessRecipe, SurfaceProfile, cast_replica, develop_profile

log = logging.getLogger(__name__)

REFERENCE_MASK = MaskSpec(aperture_diameter_um=80.0, pitch_um=120.0)

# measured lenses: gap (um) -> (D, h, RC, f, NA) of the PDMS replica lenses
LENS_TABLE = {
    240: (111.8, 8.58, 186.39, 423.61, 0.1320),
    360: (116.16, 6.11, 279.10, 634.32, 0.0916),
    480: (116.26, 5.97, 285.99, 649.98, 0.0894),
    600: (118.46, 5.92, 299.26, 680.14, 0.0871),
    720: (122.5, 4.9, 385.26, 875.60, 0.0700),
}

CALIBRATED_FIELDS = ("exposure_scale", "contrast_gamma", "absorption_per_um", "rate_max_um_per_s")


@dataclass
class PipelineResult:
    mask: MaskSpec
    recipe: ProcessRecipe
    mold: SurfaceProfile
    replica: SurfaceProfile
    report: ProfileReport

    @property
    def metrics(self) -> LensMetrics | None:
        return self.report.summary

    @property
    def sag_um(self) -> float:
        return self.report.summary.h_um if self.report.summary is not None else 0.0


class Simulator:
    """Runs mask -> exposure -> development -> replica -> metrology.

    The lossless intensity volume depends only on the mask, gap, spectrum, resist
    index and slicing, so it is cached; calibration varies only the parameters
    applied after it.
    """

    def __init__(
        self,
        dx_um: float = 0.4,
        allow_undersampling: bool = False,
        thresholds: RegimeThresholds = RegimeThresholds(),
        cache_size: int = 4,
    ):
        self.dx_um = dx_um
        self.allow_undersampling = allow_undersampling
        self.thresholds = thresholds
        self.cache_size = cache_size
        self._cache: OrderedDict = OrderedDict()

    def _intensity(self, spec: MaskSpec, recipe: ProcessRecipe):
        key = (spec, recipe.gap_um, recipe.spectrum, recipe.resist_index, recipe.resist_thickness_um, recipe.z_slices)
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        grid = GridSpec.for_mask(spec, self.dx_um)
        mask = rasterize(spec, grid)
        z = default_z_samples(recipe.resist_thickness_um, recipe.z_slices)
        value = (mask, intensity_volume(mask, recipe, z, self.allow_undersampling))
        self._cache[key] = value
        while len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return value

    def mold(self, spec: MaskSpec, recipe: ProcessRecipe) -> SurfaceProfile:
        mask, intensity = self._intensity(spec, recipe)
        volume = exposure_volume(mask, recipe, intensity=intensity)
        return develop_profile(volume, recipe)

    def run(self, spec: MaskSpec, recipe: ProcessRecipe) -> PipelineResult:
        return self.measure(spec, recipe, self.mold(spec, recipe))

    def measure(self, spec: MaskSpec, recipe: ProcessRecipe, mold: SurfaceProfile) -> PipelineResult:
        replica = cast_replica(mold)
        report = measure_profile(
            replica,
            spec,
            n=recipe.pdms_index,
            resist_thickness_um=recipe.resist_thickness_um,
            thresholds=self.thresholds,
            origin=(0.0, 0.0),
            periodic=True,
        )
        return PipelineResult(spec, recipe, mold, replica, report)

    def sag(self, spec: MaskSpec, recipe: ProcessRecipe) -> float:
        return self.run(spec, recipe).sag_um


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepPoint:
    value: float
    metrics: LensMetrics | None
    error: str | None = None


@dataclass
class SweepResult:
    axis: str
    points: list[SweepPoint]

    def values(self) -> list[float]:
        return [p.value for p in self.points]

    def sags(self) -> list[float]:
        return [p.metrics.h_um if p.metrics else math.nan for p in self.points]


def _point_setup(spec: MaskSpec, recipe: ProcessRecipe, axis: str, value: float):
    if axis == "gap":
        return spec, recipe.with_(gap_um=float(value))
    if axis == "pitch":
        return replace(spec, pitch_um=float(value), row_offset_um=None, row_spacing_um=None), recipe
    raise ConfigError(f"unknown sweep axis {axis!r}; expected 'gap' or 'pitch'")


def sweep(
    recipe: ProcessRecipe,
    axis: str,
    values: Sequence[float],
    spec: MaskSpec = REFERENCE_MASK,
    simulator: Simulator | None = None,
    max_workers: int = 1,
) -> SweepResult:
    """Full pipeline per value; per-point failures are recorded, not raised.

    A pitch sweep keeps the aperture and rebuilds the lattice as equilateral.
    """
    if not len(values):
        raise ConfigError("sweep needs at least one value")
    if any(not v > 0 for v in values):
        raise ConfigError("sweep values must be positive")
    if axis not in ("gap", "pitch"):
        raise ConfigError(f"unknown sweep axis {axis!r}; expected 'gap' or 'pitch'")
    sim = simulator or Simulator()

    def one(value):
        try:
            s, r = _point_setup(spec, recipe, axis, value)
            # a fresh simulator per point keeps the shared cache out of concurrent use
            worker = sim if max_workers == 1 else Simulator(sim.dx_um, sim.allow_undersampling, sim.thresholds, 1)
            result = worker.run(s, r)
            if result.metrics is None:
                return SweepPoint(float(value), None, "no lens could be extracted")
            return SweepPoint(float(value), result.metrics)
        except ProxmlaError as exc:
            return SweepPoint(float(value), None, f"{type(exc).__name__}: {exc}")

    ordered = sorted(float(v) for v in values)
    if max_workers == 1:
        points = [one(v) for v in ordered]
    else:
        with ThreadPoolExecutor(max_workers) as pool:
            points = list(pool.map(one, ordered))
    return SweepResult(axis, points)


# ---------------------------------------------------------------------------
# calibration


@dataclass
class CalibrationResult:
    fitted: dict[str, float]
    residual: float
    iterations: int
    recipe: ProcessRecipe
    history: list[float] = field(default_factory=list, repr=False)


DEFAULT_BOUNDS = {
    "exposure_scale": (0.05, 50.0),
    "contrast_gamma": (1.0, 8.0),
    "absorption_per_um": (1e-3, 1.0),
    "rate_max_um_per_s": (1e-3, 5.0),
}


def calibrate(
    recipe: ProcessRecipe,
    observations: Sequence[tuple[float, float]],
    bounds: dict[str, tuple[float, float]] | None = None,
    spec: MaskSpec = REFERENCE_MASK,
    simulator: Simulator | None = None,
    xtol: float = 1e-3,
    max_iter: int = 500,
) -> CalibrationResult:
    """Fit exposure scale, contrast, absorption and maximum rate to observed sags.

    Nelder-Mead in log-parameter space starting from ``recipe``; the simplex is
    the start point plus a 10 % step along each free parameter, so the search is
    deterministic. Stops when the simplex spans less than ``xtol`` relative or
    after ``max_iter`` iterations. Parameters whose bounds coincide stay fixed.
    """
    if not observations:
        raise ConfigError("calibration needs at least one observation")
    bounds = {**DEFAULT_BOUNDS, **(bounds or {})}
    for name, (lo, hi) in bounds.items():
        if name not in CALIBRATED_FIELDS:
            raise ConfigError(f"unknown calibration parameter {name!r}")
        if not (0 < lo <= hi):
            raise ConfigError(f"bounds for {name} must satisfy 0 < lower <= upper")
    sim = simulator or Simulator()
    gaps = [float(g) for g, _ in observations]
    targets = np.array([t for _, t in observations], dtype=float)

    start = {}
    for name in CALIBRATED_FIELDS:
        lo, hi = bounds[name]
        start[name] = min(max(getattr(recipe, name), lo), hi)
    free = [n for n in CALIBRATED_FIELDS if bounds[n][0] < bounds[n][1]]

    def recipe_at(u) -> ProcessRecipe:
        params = dict(start)
        for name, ui in zip(free, u):
            lo, hi = bounds[name]
            params[name] = float(np.clip(start[name] * math.exp(ui), lo, hi))
        return recipe.with_(**params)

    def sags(r: ProcessRecipe) -> np.ndarray:
        return np.array([sim.sag(spec, r.with_(gap_um=g)) for g in gaps])

    def objective(u) -> float:
        return float(np.sum((sags(recipe_at(u)) - targets) ** 2))

    f0 = objective(np.zeros(len(free)))
    if not math.isfinite(f0):
        raise CalibrationError("objective is not finite at the initial parameters")

    history = [f0]
    iterations = 0
    u_best = np.zeros(len(free))
    if free:
        lo_u = np.array([math.log(bounds[n][0] / start[n]) for n in free])
        hi_u = np.array([math.log(bounds[n][1] / start[n]) for n in free])
        simplex = [np.zeros(len(free))]
        for i in range(len(free)):
            v = np.zeros(len(free))
            # step inward when the start sits on its upper bound
            v[i] = 0.1 if hi_u[i] >= 0.1 else -0.1
            simplex.append(v)

        def track(xk):
            history.append(objective(xk))

        res = minimize(
            objective,
            np.zeros(len(free)),
            method="Nelder-Mead",
            bounds=list(zip(lo_u, hi_u)),
            callback=track,
            options={
                "initial_simplex": np.array(simplex),
                "xatol": math.log1p(xtol),
                "fatol": math.inf,
                "maxiter": max_iter,
            },
        )
        u_best, iterations = res.x, int(res.nit)
    best = recipe_at(u_best)
    residual = float(np.sqrt(np.mean((sags(best) - targets) ** 2)))
    fitted = {name: getattr(best, name) for name in CALIBRATED_FIELDS}
    log.info("calibrated %s residual=%.3g um after %d iterations", fitted, residual, iterations)
    return CalibrationResult(fitted, residual, iterations, best, history)


# ---------------------------------------------------------------------------
# inverse design


def inverse_gap(
    recipe: ProcessRecipe,
    target_sag_um: float,
    gap_bounds: tuple[float, float] = (240.0, 720.0),
    spec: MaskSpec = REFERENCE_MASK,
    simulator: Simulator | None = None,
    sag_tol_um: float = 0.0,
    gap_tol_um: float = 1.0,
    n_check: int = 8,
) -> float:
    """Printing gap that yields ``target_sag_um``, by bisection on simulated sag.

    Sag is sampled at ``n_check`` gaps across the bounds first and must decrease
    strictly. Bisection runs until the bracket is narrower than ``gap_tol_um``;
    a positive ``sag_tol_um`` also stops it once a midpoint matches the target
    that closely, which is cheaper but can leave the gap far from the bracket
    tolerance where sag varies slowly.
    """
    lo, hi = map(float, gap_bounds)
    if not 0 <= lo < hi:
        raise ConfigError("gap bounds must satisfy 0 <= lower < upper")
    sim = simulator or Simulator()

    def sag(g):
        return sim.sag(spec, recipe.with_(gap_um=g))

    probe = np.linspace(lo, hi, n_check)
    sags = [sag(g) for g in probe]
    if np.any(np.diff(sags) >= 0):
        raise MonotonicityError(
            "simulated sag is not strictly decreasing over the gap bounds: "
            + ", ".join(f"{g:.0f}:{s:.3f}" for g, s in zip(probe, sags))
        )
    s_lo, s_hi = sags[0], sags[-1]
    if not (s_hi <= target_sag_um <= s_lo):
        raise RangeError(
            f"target sag {target_sag_um} um outside achievable range [{s_hi:.4f}, {s_lo:.4f}] um",
            achievable=(s_hi, s_lo),
        )
    # narrow the bracket with the probes before bisecting
    k = int(np.searchsorted(-np.array(sags), -target_sag_um))
    if k < len(probe) and sags[k] == target_sag_um:
        return float(probe[k])
    a, b = probe[max(k - 1, 0)], probe[min(k, len(probe) - 1)]
    while b - a > gap_tol_um:
        mid = 0.5 * (a + b)
        s = sag(mid)
        if sag_tol_um > 0 and abs(s - target_sag_um) <= sag_tol_um:
            return float(mid)
        if s > target_sag_um:
            a = mid
        else:
            b = mid
    return float(0.5 * (a + b))


# ---------------------------------------------------------------------------
# design rules


@dataclass(frozen=True)
class Rule:
    name: str
    passed: bool
    margin: float
    description: str


@dataclass(frozen=True)
class RuleReport:
    rules: tuple[Rule, ...]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rules)


def check_design_rules(spec: MaskSpec, gap_um: float, closeness: float = 0.25) -> RuleReport:
    """Gap at least twice the pitch (A); pitch within ``closeness`` of the aperture (B).

    Margins are positive when a rule passes: ``gap - 2 p`` and ``(1 + closeness) d - p``.
    """
    p, d = spec.pitch_um, spec.aperture_diameter_um
    a_margin = gap_um - 2 * p
    b_margin = (1 + closeness) * d - p
    return RuleReport(
        (
            Rule("A", a_margin >= 0, a_margin, f"gap {gap_um:g} >= 2 x pitch {p:g}"),
            Rule("B", b_margin >= 0, b_margin, f"pitch {p:g} <= {1 + closeness:g} x aperture {d:g}"),
        )
    )
