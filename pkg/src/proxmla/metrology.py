"""Lens geometry from height maps: sag, diameter, sphere fit, fill factor, roughness, regime."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DomainError, ExtractionError, SingularFitError
from .mask import GridSpec, MaskSpec, covering_radius, lattice_sites, rasterize, unit_cell
from .resist import MOLD, PDMS_INDEX, SurfaceProfile


class Regime(str, enum.Enum):
    FLAT_TOP = "FlatTop"
    CONCAVE = "Concave"
    BLURRED = "Blurred"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class RegimeThresholds:
    """Defaults for :func:`classify_regime`.

    plateau_level : fraction of the sag above the cell minimum that counts as plateau
    plateau_fraction : plateau diameter / lens diameter above which a lens is flat-topped
    min_modulation : sag / resist thickness below which relief is considered washed out
    max_rms_ratio : sphere-fit rms / sag above which a lens is not a spherical cap
    """

    plateau_level: float = 0.05
    plateau_fraction: float = 0.30
    min_modulation: float = 0.02
    max_rms_ratio: float = 0.25


@dataclass(frozen=True)
class LensMetrics:
    D_um: float
    h_um: float
    RC_um: float
    f_um: float
    NA: float
    fill_factor: float
    sphere_rms_um: float
    regime: Regime
    sphere_radius_um: float = math.nan
    center_um: tuple[float, float] = (math.nan, math.nan)


@dataclass(frozen=True)
class RoughnessReport:
    ra_nm: float
    patch_um: tuple[float, float]


@dataclass(frozen=True)
class SphereFit:
    center: np.ndarray
    radius_um: float
    rms_um: float


def lens_metrics(D_um: float, h_um: float, n: float = PDMS_INDEX) -> tuple[float, float, float]:
    """Radius of curvature, focal length and NA of a spherical cap of diameter D and sag h."""
    if not D_um > 0:
        raise DomainError("lens diameter must be positive")
    if not h_um > 0:
        raise DomainError("sag must be positive; radius of curvature is unbounded at h = 0")
    if not n > 1:
        raise DomainError("refractive index must exceed 1")
    rc = (h_um**2 + D_um**2 / 4) / (2 * h_um)
    f = rc / (n - 1)
    na = D_um / (2 * f)
    return rc, f, na


def fit_sphere(points) -> SphereFit:
    """Algebraic least-squares sphere through ``(N, 3)`` points.

    Solves ``x^2 + y^2 + z^2 = 2ax + 2by + 2cz + d`` on centered, scaled
    coordinates; the reported rms is the geometric distance to the sphere.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 4:
        raise SingularFitError("sphere fit needs at least 4 points in 3D")
    mean = pts.mean(axis=0)
    q = pts - mean
    scale = np.sqrt((q**2).sum(axis=1).mean())
    if scale == 0:
        raise SingularFitError("all points coincide")
    q = q / scale
    A = np.column_stack([2 * q, np.ones(len(q))])
    b = (q**2).sum(axis=1)
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise SingularFitError("points are coplanar or otherwise degenerate")
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    c = sol[:3]
    r2 = sol[3] + c @ c
    if not r2 > 0:
        raise SingularFitError("fit produced an imaginary radius")
    radius = math.sqrt(r2) * scale
    center = c * scale + mean
    dist = np.linalg.norm(pts - center, axis=1)
    rms = math.sqrt(np.mean((dist - radius) ** 2))
    return SphereFit(center, radius, rms)


# ---------------------------------------------------------------------------
# per-lens extraction


@dataclass
class LensExtraction:
    index: int
    center_um: tuple[float, float]
    D_um: float = math.nan
    h_um: float = math.nan
    rim_um: float = math.nan
    apex_um: float = math.nan
    plateau_diameter_um: float = math.nan
    points: np.ndarray | None = field(default=None, repr=False)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class _Layout:
    sites: np.ndarray  # (n, 2) sites owning a complete Voronoi cell in the profile
    images: np.ndarray  # (m, 2) all site positions (incl. periodic copies) that bound cells
    owner: np.ndarray  # (m,) index into ``sites`` or -1 for sites outside the profile
    labels: np.ndarray  # (ny, nx) owning site per pixel, -1 if not a complete cell
    periodic: bool
    period: tuple[float, float]


def _is_periodic(grid: GridSpec, spec: MaskSpec) -> bool:
    cell = unit_cell(spec)
    mx = grid.cell_width_um / cell.width_um
    my = grid.cell_height_um / cell.height_um
    return abs(mx - round(mx)) < 1e-6 and abs(my - round(my)) < 1e-6 and round(mx) >= 1 and round(my) >= 1


def _layout(grid: GridSpec, spec: MaskSpec, origin, periodic: bool) -> _Layout:
    W, H = grid.cell_width_um, grid.cell_height_um
    x, y = grid.coords()
    if periodic:
        raw = lattice_sites(spec, W, H, origin, margin_um=max(W, H))
        wrapped = np.column_stack([np.mod(raw[:, 0], W), np.mod(raw[:, 1], H)])
        wrapped = np.where(np.isclose(wrapped, [W, H]), 0.0, wrapped)
        keys = np.round(wrapped / [grid.dx_um, grid.dy_um], 6)
        _, first = np.unique(keys, axis=0, return_index=True)
        sites = wrapped[np.sort(first)]
        # row-major by position
        sites = sites[np.lexsort((sites[:, 0], sites[:, 1]))]
        shifts = np.array([(i * W, j * H) for j in (-1, 0, 1) for i in (-1, 0, 1)])
        images = (sites[None, :, :] + shifts[:, None, :]).reshape(-1, 2)
        owner = np.tile(np.arange(len(sites)), len(shifts))
    else:
        reach = covering_radius(spec)
        xmax, ymax = x[-1], y[-1]
        images = lattice_sites(spec, xmax, ymax, origin, margin_um=2 * reach)
        images = images[np.lexsort((images[:, 0], images[:, 1]))]
        owner = np.arange(len(images))
        sites = images

    best = np.full(grid.shape, np.inf)
    labels = np.full(grid.shape, -1, dtype=int)
    for (sx, sy), o in zip(images, owner):
        d2 = (y[:, None] - sy) ** 2 + (x[None, :] - sx) ** 2
        closer = d2 < best
        best[closer] = d2[closer]
        labels[closer] = o

    if not periodic:
        border = np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]]))
        present = np.unique(labels)
        complete = np.setdiff1d(present, border)
        keep = np.isin(labels, complete)
        remap = np.full(len(sites), -1)
        remap[complete] = np.arange(len(complete))
        labels = np.where(keep, remap[labels], -1)
        owner = remap[owner]
        sites = sites[complete]
    return _Layout(sites, images, owner, labels, periodic, (W, H))


def _boundary(mask: np.ndarray, periodic: bool) -> np.ndarray:
    """Pixels of ``mask`` with a 4-neighbour outside it."""
    if periodic:
        inner = mask.copy()
        for axis in (0, 1):
            for shift in (-1, 1):
                inner &= np.roll(mask, shift, axis=axis)
    else:
        inner = ndimage.binary_erosion(mask, border_value=1)
    return mask & ~inner


def _ray_limits(center, images, angles) -> np.ndarray:
    """Distance along each ray from ``center`` to the edge of its Voronoi cell."""
    others = images[np.hypot(*(images - center).T) > 1e-9] - center
    u = np.column_stack([np.cos(angles), np.sin(angles)])
    proj = u @ others.T  # (rays, others)
    norm2 = (others**2).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(proj > 1e-12, norm2[None, :] / (2 * proj), np.inf)
    return t.min(axis=1)


def extract_lens(
    profile: SurfaceProfile,
    spec: MaskSpec,
    origin=(0.0, 0.0),
    periodic: bool | None = None,
    level_fraction: float = 0.05,
    n_rays: int = 72,
    fit_fraction: float = 0.8,
    plateau_level: float = 0.05,
    rim_extrapolation: bool = True,
    min_sag_um: float = 1e-6,
) -> list[LensExtraction]:
    """Sag, diameter and sphere-fit samples for every lens cell in ``profile``.

    Work is done in mold orientation (lenses as dimples): the rim is the highest
    point on the cell's Voronoi boundary and the sag is rim minus cell minimum.
    The diameter is found along ``n_rays`` directions from the lattice site where
    the surface climbs back to ``level_fraction * h`` below the rim, or where the
    ray meets the neighbouring lens. With ``rim_extrapolation`` each level-set
    radius ``r`` is carried up to rim height along the sphere through the apex,
    ``r0^2 = r^2 / (1 - level_fraction) - level_fraction * h^2``, so that an exact
    spherical cap returns its true diameter.

    Failures are reported per lens in ``LensExtraction.error``; nothing is raised.
    """
    grid = profile.grid
    if periodic is None:
        periodic = _is_periodic(grid, spec)
    w = profile.heights_um if profile.orientation == MOLD else -profile.heights_um
    lay = _layout(grid, spec, origin, periodic)
    x, y = grid.coords()
    W, H = lay.period
    angles = np.arange(n_rays) * (2 * np.pi / n_rays)
    step = min(grid.dx_um, grid.dy_um) / 2
    mode = "grid-wrap" if periodic else "nearest"

    results = []
    for j, (cx, cy) in enumerate(lay.sites):
        res = LensExtraction(j, (float(cx), float(cy)))
        results.append(res)
        cell = lay.labels == j
        if not cell.any():
            res.error = "lens cell holds no samples"
            continue
        edge = _boundary(cell, periodic)
        if not edge.any():
            res.error = "lens cell has no boundary"
            continue
        rim = float(w[edge].max())
        apex = float(w[cell].min())
        h = rim - apex
        res.rim_um, res.apex_um = rim, apex
        if not h > min_sag_um:
            res.error = "no identifiable rim: cell relief is flat"
            continue
        res.h_um = h
        level = rim - level_fraction * h
        center_val = ndimage.map_coordinates(w, [[cy / grid.dy_um], [cx / grid.dx_um]], order=1, mode=mode)[0]
        if center_val >= level:
            res.error = "no identifiable rim: lattice site lies outside the lens"
            continue

        limits = _ray_limits(np.array([cx, cy]), lay.images, angles)
        n_steps = int(np.ceil(limits.max() / step)) + 1
        r = np.arange(n_steps) * step
        px = cx + np.cos(angles)[:, None] * r[None, :]
        py = cy + np.sin(angles)[:, None] * r[None, :]
        vals = ndimage.map_coordinates(w, [py / grid.dy_um, px / grid.dx_um], order=1, mode=mode)
        radii = np.empty(n_rays)
        for k in range(n_rays):
            inside = r < limits[k]
            hit = np.nonzero((vals[k] >= level) & inside)[0]
            if hit.size == 0:
                radii[k] = limits[k]
                continue
            i = hit[0]
            v0, v1 = vals[k, i - 1], vals[k, i]
            rk = r[i - 1] + (level - v0) / (v1 - v0) * step if v1 != v0 else r[i]
            if rim_extrapolation:
                rk = math.sqrt(max(rk**2 / (1 - level_fraction) - level_fraction * h**2, 0.0))
            radii[k] = min(rk, limits[k])
        res.D_um = float(2 * radii.mean())

        ddx = x[None, :] - cx
        ddy = y[:, None] - cy
        if periodic:
            ddx = (ddx + W / 2) % W - W / 2
            ddy = (ddy + H / 2) % H - H / 2
        dist = np.hypot(ddx, ddy)
        take = cell & (dist <= fit_fraction * res.D_um / 2)
        res.points = np.column_stack(
            [np.broadcast_to(ddx, grid.shape)[take], np.broadcast_to(ddy, grid.shape)[take], profile.heights_um[take]]
        )
        flat = cell & (w <= apex + plateau_level * h)
        area = flat.sum() * grid.dx_um * grid.dy_um
        res.plateau_diameter_um = 2 * math.sqrt(area / math.pi)
    return results


# ---------------------------------------------------------------------------
# fill factor, roughness


def fill_factor(D_um: float, spec: MaskSpec, dx_um: float = 0.1) -> float:
    """Area fraction covered by lattice-placed discs of diameter ``D_um``.

    Counted on a raster of spacing ``dx_um``; exactly 1 once the discs cover the plane.
    """
    if not D_um > 0:
        raise DomainError("lens diameter must be positive")
    if D_um / 2 >= covering_radius(spec) * (1 - 1e-12):
        return 1.0
    discs = MaskSpec(
        D_um,
        spec.pitch_um,
        spec.row_offset_um,
        spec.row_spacing_um,
        transmission_open=1.0,
        transmission_dark=0.0,
    )
    grid = GridSpec.for_mask(discs, dx_um)
    # pixel centers at half-sample offsets avoid systematic bias from samples on the lattice sites
    cell = unit_cell(discs)
    x = (np.arange(grid.nx) + 0.5) * grid.dx_um
    y = (np.arange(grid.ny) + 0.5) * grid.dy_um
    r2 = (D_um / 2) ** 2
    covered = np.zeros(grid.shape, dtype=bool)
    for cx, cy in cell.centers:
        for j in (-1, 0, 1):
            for i in (-1, 0, 1):
                covered |= (y[:, None] - cy - j * cell.height_um) ** 2 + (x[None, :] - cx - i * cell.width_um) ** 2 <= r2
    return float(covered.mean())


def fill_factor_raster(
    profile: SurfaceProfile, spec: MaskSpec, lenses: list[LensExtraction] | None = None, **extract_kwargs
) -> float:
    """Fraction of the measured cells lying inside a lens (below the diameter level)."""
    if lenses is None:
        lenses = extract_lens(profile, spec, **extract_kwargs)
    level_fraction = extract_kwargs.get("level_fraction", 0.05)
    periodic = extract_kwargs.get("periodic")
    if periodic is None:
        periodic = _is_periodic(profile.grid, spec)
    lay = _layout(profile.grid, spec, extract_kwargs.get("origin", (0.0, 0.0)), periodic)
    w = profile.heights_um if profile.orientation == MOLD else -profile.heights_um
    lensed = total = 0
    for lens in lenses:
        cell = lay.labels == lens.index
        total += int(cell.sum())
        if lens.ok:
            lensed += int((cell & (w <= lens.rim_um - level_fraction * lens.h_um)).sum())
    if total == 0:
        raise ExtractionError("no complete lens cell in profile")
    return lensed / total


def roughness_ra(patch, dx_um: float = 1.0, dy_um: float | None = None) -> RoughnessReport:
    """Arithmetic mean deviation from the least-squares plane.

    ``patch`` is a 2D height array in um (or a :class:`SurfaceProfile`).
    """
    if isinstance(patch, SurfaceProfile):
        dx_um, dy_um = patch.grid.dx_um, patch.grid.dy_um
        patch = patch.heights_um
    dy_um = dx_um if dy_um is None else dy_um
    z = np.asarray(patch, dtype=float)
    if z.size == 0:
        raise DomainError("empty roughness patch")
    if z.ndim == 1:
        z = z[None, :]
    ny, nx = z.shape
    yy, xx = np.mgrid[0:ny, 0:nx]
    A = np.column_stack([np.ones(z.size), xx.ravel() * dx_um, yy.ravel() * dy_um])
    coef, *_ = np.linalg.lstsq(A, z.ravel(), rcond=None)
    ra = float(np.mean(np.abs(z.ravel() - A @ coef)))
    return RoughnessReport(ra * 1000.0, (nx * dx_um, ny * dy_um))


# ---------------------------------------------------------------------------
# regime classification and full report


@dataclass
class ProfileReport:
    lenses: list[LensMetrics]
    failures: list[LensExtraction]
    regime: Regime
    summary: LensMetrics | None
    plateau_ratio: float = math.nan
    modulation: float = math.nan
    rms_ratio: float = math.nan


def _regime_from_stats(plateau_ratio, modulation, rms_ratio, th: RegimeThresholds) -> Regime:
    if not modulation >= th.min_modulation:
        return Regime.BLURRED
    if plateau_ratio > th.plateau_fraction:
        return Regime.FLAT_TOP
    if rms_ratio > th.max_rms_ratio:
        return Regime.BLURRED
    return Regime.CONCAVE


def measure_profile(
    profile: SurfaceProfile,
    spec: MaskSpec,
    n: float = PDMS_INDEX,
    resist_thickness_um: float = 18.0,
    thresholds: RegimeThresholds = RegimeThresholds(),
    fill_dx_um: float | None = None,
    **extract_kwargs,
) -> ProfileReport:
    """Per-lens metrics, profile regime and a summary row (mean D and h).

    Lenses are listed row-major by lattice site; the regime is decided on
    lens-averaged statistics.
    """
    extract_kwargs.setdefault("plateau_level", thresholds.plateau_level)
    found = extract_lens(profile, spec, **extract_kwargs)
    good = [e for e in found if e.ok]
    bad = [e for e in found if not e.ok]
    if not good:
        return ProfileReport([], bad, Regime.BLURRED, None)

    fits = []
    for e in good:
        try:
            fits.append(fit_sphere(e.points))
        except SingularFitError:
            fits.append(SphereFit(np.full(3, np.nan), math.inf, math.inf))
    plateau_ratio = float(np.mean([e.plateau_diameter_um / e.D_um for e in good]))
    modulation = float(np.mean([e.h_um for e in good])) / resist_thickness_um
    rms_ratio = float(np.mean([s.rms_um / e.h_um for e, s in zip(good, fits)]))
    regime = _regime_from_stats(plateau_ratio, modulation, rms_ratio, thresholds)

    fill_dx = fill_dx_um if fill_dx_um is not None else min(profile.grid.dx_um, profile.grid.dy_um)
    lenses = []
    for e, s in zip(good, fits):
        rc, f, na = lens_metrics(e.D_um, e.h_um, n)
        lenses.append(
            LensMetrics(e.D_um, e.h_um, rc, f, na, fill_factor(e.D_um, spec, fill_dx), s.rms_um, regime, s.radius_um, e.center_um)
        )
    D = float(np.mean([m.D_um for m in lenses]))
    h = float(np.mean([m.h_um for m in lenses]))
    rc, f, na = lens_metrics(D, h, n)
    summary = LensMetrics(
        D,
        h,
        rc,
        f,
        na,
        fill_factor(D, spec, fill_dx),
        float(np.mean([m.sphere_rms_um for m in lenses])),
        regime,
        float(np.mean([m.sphere_radius_um for m in lenses])),
    )
    return ProfileReport(lenses, bad, regime, summary, plateau_ratio, modulation, rms_ratio)


def classify_regime(
    profile: SurfaceProfile,
    spec: MaskSpec,
    resist_thickness_um: float = 18.0,
    thresholds: RegimeThresholds = RegimeThresholds(),
    **extract_kwargs,
) -> Regime:
    """FlatTop, Concave or Blurred; total, falls back to Blurred when no lens is found."""
    return measure_profile(profile, spec, resist_thickness_um=resist_thickness_um, thresholds=thresholds, **extract_kwargs).regime
