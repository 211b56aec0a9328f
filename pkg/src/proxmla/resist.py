"""Positive-resist development (vertical, column-wise) and PDMS replica casting."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ContractError
from .mask import GridSpec
from .propagate import ExposureVolume, Spectrum, slice_edges

MOLD = "mold-concave"
REPLICA = "replica-convex"
ORIENTATIONS = (MOLD, REPLICA)

PDMS_INDEX = 1.44


@dataclass(frozen=True)
class ProcessRecipe:
    """Printing and development parameters.

    Exposure scale, contrast, absorption and maximum rate are calibration
    parameters; the defaults develop an at-clear column through 18 um in 120 s.
    """

    gap_um: float = 360.0
    spectrum: Spectrum = field(default_factory=Spectrum)
    exposure_scale: float = 1.0
    resist_thickness_um: float = 18.0
    resist_index: float = 1.65
    absorption_per_um: float = 0.05
    develop_time_s: float = 120.0
    rate_max_um_per_s: float = 0.15
    dose_to_clear: float = 1.0
    contrast_gamma: float = 2.0
    pdms_index: float = PDMS_INDEX
    z_slices: int = 64

    def __post_init__(self):
        if self.gap_um < 0:
            raise ConfigError("gap_um must be non-negative")
        if self.absorption_per_um < 0:
            raise ConfigError("absorption_per_um must be non-negative")
        for name in (
            "exposure_scale",
            "resist_thickness_um",
            "resist_index",
            "develop_time_s",
            "rate_max_um_per_s",
            "dose_to_clear",
            "pdms_index",
        ):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.contrast_gamma < 1:
            raise ConfigError("contrast_gamma must be >= 1")
        if self.z_slices < 1:
            raise ConfigError("z_slices must be >= 1")

    def with_(self, **changes) -> "ProcessRecipe":
        return replace(self, **changes)


@dataclass(frozen=True)
class SurfaceProfile:
    grid: GridSpec
    heights_um: np.ndarray = field(repr=False)
    orientation: str = MOLD

    def __post_init__(self):
        if self.orientation not in ORIENTATIONS:
            raise ContractError(f"unknown orientation {self.orientation!r}")
        if self.heights_um.shape != self.grid.shape:
            raise ConfigError(f"height shape {self.heights_um.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.heights_um)):
            raise ConfigError("heights must be finite")

    def relief(self) -> np.ndarray:
        return self.heights_um - self.heights_um.min()


def development_rate(dose, recipe: ProcessRecipe):
    """Power-law dissolution rate, rate_max * (dose / dose_to_clear) ** gamma."""
    dose = np.asarray(dose, dtype=float)
    if np.any(dose < 0):
        raise ConfigError("dose must be non-negative")
    return recipe.rate_max_um_per_s * (dose / recipe.dose_to_clear) ** recipe.contrast_gamma


def removal_depth(volume: ExposureVolume, recipe: ProcessRecipe) -> np.ndarray:
    """Depth reached by the dissolution front after ``develop_time_s``, per column.

    The dose is taken constant over the slice around each sample (see
    :func:`~proxmla.propagate.slice_edges`); with the default slice-center
    samples this is the midpoint rule. The front starts at the surface and stops
    at the substrate.
    """
    thickness = volume.thickness_um
    edges = slice_edges(volume.z_samples, thickness)
    widths = np.diff(edges)
    rate = development_rate(volume.dose, recipe)
    with np.errstate(divide="ignore", over="ignore"):
        slice_time = np.where(rate > 0, widths[:, None, None] / rate, np.inf)
    elapsed = np.cumsum(slice_time, axis=0)
    t = recipe.develop_time_s
    # first slice whose cumulative time reaches t holds the front
    k = np.argmax(elapsed >= t, axis=0)
    through = elapsed[-1] < t
    k_safe = np.where(through, 0, k)
    before = np.where(k_safe > 0, np.take_along_axis(elapsed, np.maximum(k_safe - 1, 0)[None], 0)[0], 0.0)
    r_k = np.take_along_axis(rate, k_safe[None], 0)[0]
    depth = edges[k_safe] + (t - before) * r_k
    depth = np.minimum(depth, edges[k_safe + 1])
    depth = np.where(through, thickness, depth)
    return np.clip(depth, 0.0, thickness)


def develop_profile(volume: ExposureVolume, recipe: ProcessRecipe) -> SurfaceProfile:
    """Mold surface height above the substrate, thickness minus removal depth."""
    depth = removal_depth(volume, recipe)
    return SurfaceProfile(volume.grid, volume.thickness_um - depth, MOLD)


def cast_replica(profile: SurfaceProfile) -> SurfaceProfile:
    """Negative replica: ``max(h) - h`` with the orientation flipped.

    Casting a replica gives back a mold with the original relief.
    """
    if profile.orientation not in ORIENTATIONS:
        raise ContractError(f"cannot cast a profile with orientation {profile.orientation!r}")
    flipped = REPLICA if profile.orientation == MOLD else MOLD
    h = profile.heights_um
    return SurfaceProfile(profile.grid, h.max() - h, flipped)
