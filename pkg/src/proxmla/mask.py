"""Aperture-array photomask: lattice geometry and rasterization on a periodic cell."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

_TILE_RTOL = 1e-9


@dataclass(frozen=True)
class MaskSpec:
    """Circular apertures on an ortho-triangular (alternating-row) lattice.

    Row ``k`` holds apertures at ``x = i * pitch + (k % 2) * row_offset``,
    ``y = k * row_spacing``. Leaving ``row_offset_um`` / ``row_spacing_um`` unset
    gives the equilateral hexagonal lattice (offset p/2, spacing sqrt(3) p/2).
    """

    aperture_diameter_um: float
    pitch_um: float
    row_offset_um: float | None = None
    row_spacing_um: float | None = None
    transmission_open: float = 1.0
    transmission_dark: float = 0.0

    def __post_init__(self):
        if self.row_offset_um is None:
            object.__setattr__(self, "row_offset_um", self.pitch_um / 2)
        if self.row_spacing_um is None:
            object.__setattr__(self, "row_spacing_um", math.sqrt(3) * self.pitch_um / 2)
        if not (self.aperture_diameter_um > 0 and self.pitch_um > 0):
            raise ConfigError("aperture_diameter_um and pitch_um must be positive")
        if not (0 <= self.row_offset_um < self.pitch_um):
            raise ConfigError("row_offset_um must lie in [0, pitch_um)")
        if not self.row_spacing_um > 0:
            raise ConfigError("row_spacing_um must be positive")
        t_open, t_dark = self.transmission_open, self.transmission_dark
        if not (0 <= t_dark <= 1 and 0 <= t_open <= 1):
            raise ConfigError("transmissions must lie in [0, 1]")
        # an all-dark mask (open == dark == 0) is allowed as a degenerate case
        if not (t_dark < t_open or t_open == t_dark == 0):
            raise ConfigError("transmission_dark must be below transmission_open")


@dataclass(frozen=True)
class UnitCell:
    width_um: float
    height_um: float
    centers: tuple[tuple[float, float], ...]

    @property
    def area_um2(self) -> float:
        return self.width_um * self.height_um


def unit_cell(spec: MaskSpec) -> UnitCell:
    """Rectangular periodic cell (pitch x 2 row spacings) holding two aperture centers."""
    return UnitCell(
        width_um=spec.pitch_um,
        height_um=2 * spec.row_spacing_um,
        centers=((0.0, 0.0), (spec.row_offset_um, spec.row_spacing_um)),
    )


@dataclass(frozen=True)
class GridSpec:
    """Sample lattice ``x_i = i*dx``, ``y_j = j*dy`` tiling one periodic cell exactly."""

    nx: int
    ny: int
    dx_um: float
    dy_um: float
    cell_width_um: float
    cell_height_um: float

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ConfigError("grid needs at least one sample per axis")
        if self.dx_um <= 0 or self.dy_um <= 0:
            raise ConfigError("grid spacings must be positive")
        if not math.isclose(self.nx * self.dx_um, self.cell_width_um, rel_tol=_TILE_RTOL) or not math.isclose(
            self.ny * self.dy_um, self.cell_height_um, rel_tol=_TILE_RTOL
        ):
            raise ConfigError(
                f"grid {self.nx}x{self.ny} at ({self.dx_um}, {self.dy_um}) um does not tile "
                f"the {self.cell_width_um} x {self.cell_height_um} um cell"
            )

    @classmethod
    def for_cell(cls, width_um: float, height_um: float, dx_um: float, even: bool = True) -> "GridSpec":
        """Finest grid with spacing <= ``dx_um`` on each axis.

        With ``even`` the sample counts are rounded up to even numbers so that the
        second aperture of a hexagonal cell (at half width, half height) lands on a sample.
        """
        # the small slack keeps e.g. 120/0.4 from rounding up to 301
        nx = max(1, math.ceil(width_um / dx_um - 1e-9))
        ny = max(1, math.ceil(height_um / dx_um - 1e-9))
        if even:
            nx += nx % 2
            ny += ny % 2
        return cls(nx, ny, width_um / nx, height_um / ny, width_um, height_um)

    @classmethod
    def for_mask(cls, spec: MaskSpec, dx_um: float) -> "GridSpec":
        cell = unit_cell(spec)
        return cls.for_cell(cell.width_um, cell.height_um, dx_um)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        return np.arange(self.nx) * self.dx_um, np.arange(self.ny) * self.dy_um

    def frequencies(self) -> tuple[np.ndarray, np.ndarray]:
        """Spatial frequencies (cycles/um) of the discrete Fourier lattice, FFT order."""
        return np.fft.fftfreq(self.nx, self.dx_um), np.fft.fftfreq(self.ny, self.dy_um)


@dataclass(frozen=True)
class TransmissionGrid:
    grid: GridSpec
    values: np.ndarray = field(repr=False)


def _image_range(radius: float, period: float) -> range:
    k = math.ceil(radius / period) + 1
    return range(-k, k + 1)


def rasterize(spec: MaskSpec, grid: GridSpec) -> TransmissionGrid:
    """Binary amplitude transmission sampled at grid points (pixel-center test).

    Discs are closed: a sample exactly on the rim counts as open.
    """
    cell = unit_cell(spec)
    if not (
        math.isclose(grid.cell_width_um, cell.width_um, rel_tol=_TILE_RTOL)
        and math.isclose(grid.cell_height_um, cell.height_um, rel_tol=_TILE_RTOL)
    ):
        raise ConfigError(
            f"grid cell {grid.cell_width_um} x {grid.cell_height_um} um does not match mask cell "
            f"{cell.width_um} x {cell.height_um} um"
        )
    x, y = grid.coords()
    r2 = (spec.aperture_diameter_um / 2) ** 2
    open_ = np.zeros(grid.shape, dtype=bool)
    for cx, cy in cell.centers:
        for iy in _image_range(spec.aperture_diameter_um / 2, cell.height_um):
            dy2 = (y - cy - iy * cell.height_um) ** 2
            rows = dy2 <= r2
            if not rows.any():
                continue
            for ix in _image_range(spec.aperture_diameter_um / 2, cell.width_um):
                dx2 = (x - cx - ix * cell.width_um) ** 2
                cols = dx2 <= r2
                if not cols.any():
                    continue
                sub = dy2[rows, None] + dx2[None, cols] <= r2
                open_[np.ix_(rows, cols)] |= sub
    values = np.where(open_, math.sqrt(spec.transmission_open), math.sqrt(spec.transmission_dark))
    return TransmissionGrid(grid, values)


def lattice_sites(spec: MaskSpec, width_um: float, height_um: float, origin=(0.0, 0.0), margin_um: float = 0.0):
    """Aperture centers within ``[-margin, width+margin] x [-margin, height+margin]``.

    Returned as an ``(n, 2)`` array sorted row-major (by row index, then x).
    """
    ox, oy = origin
    p, s, off = spec.pitch_um, spec.row_spacing_um, spec.row_offset_um
    k0 = math.floor((-margin_um - oy) / s) - 1
    k1 = math.ceil((height_um + margin_um - oy) / s) + 1
    sites = []
    for k in range(k0, k1 + 1):
        y = oy + k * s
        if not (-margin_um <= y <= height_um + margin_um):
            continue
        shift = ox + (k % 2) * off
        i0 = math.floor((-margin_um - shift) / p) - 1
        i1 = math.ceil((width_um + margin_um - shift) / p) + 1
        for i in range(i0, i1 + 1):
            x = shift + i * p
            if -margin_um <= x <= width_um + margin_um:
                sites.append((x, y))
    return np.array(sites, dtype=float).reshape(-1, 2)


def covering_radius(spec: MaskSpec) -> float:
    """Largest distance from any point of the plane to its nearest aperture center."""
    from scipy.spatial import Voronoi

    cell = unit_cell(spec)
    pts = lattice_sites(spec, cell.width_um, cell.height_um, margin_um=2 * max(cell.width_um, cell.height_um))
    vor = Voronoi(pts)
    v = vor.vertices
    inside = (v[:, 0] >= 0) & (v[:, 0] <= cell.width_um) & (v[:, 1] >= 0) & (v[:, 1] <= cell.height_um)
    v = v[inside]
    d2 = ((v[:, None, :] - pts[None, :, :]) ** 2).sum(-1).min(axis=1)
    return float(np.sqrt(d2.max()))
