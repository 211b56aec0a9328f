"""Angular-spectrum propagation of the mask field across the gap and into the resist."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np
import scipy.fft

from .errors import ConfigError, DomainError, NumericalError, SamplingError
from .mask import GridSpec, TransmissionGrid

if TYPE_CHECKING:
    from .resist import ProcessRecipe

NUV_BAND_UM = (0.350, 0.450)
MERCURY_LINES_UM = (0.365, 0.405, 0.436)


@dataclass(frozen=True)
class Spectrum:
    """Incoherent set of spectral lines; weights are normalized to sum to one."""

    lines: tuple[tuple[float, float], ...] = tuple((w, 1 / 3) for w in MERCURY_LINES_UM)
    band_um: tuple[float, float] | None = NUV_BAND_UM

    def __post_init__(self):
        lines = tuple((float(w), float(a)) for w, a in self.lines)
        if not lines:
            raise ConfigError("spectrum needs at least one line")
        for wl, weight in lines:
            if not wl > 0 or weight < 0:
                raise ConfigError(f"invalid spectral line ({wl}, {weight})")
            if self.band_um is not None and not (self.band_um[0] <= wl <= self.band_um[1]):
                raise ConfigError(f"wavelength {wl} um outside band {self.band_um}")
        total = math.fsum(a for _, a in lines)
        if not math.isclose(total, 1.0, rel_tol=1e-9):
            raise ConfigError(f"spectral weights sum to {total}, expected 1")
        object.__setattr__(self, "lines", lines)

    @classmethod
    def uniform(cls, wavelengths_um: Sequence[float], **kwargs) -> "Spectrum":
        n = len(wavelengths_um)
        return cls(tuple((w, 1 / n) for w in wavelengths_um), **kwargs)

    @classmethod
    def single(cls, wavelength_um: float, **kwargs) -> "Spectrum":
        return cls(((wavelength_um, 1.0),), **kwargs)

    @property
    def min_wavelength_um(self) -> float:
        return min(w for w, _ in self.lines)


@dataclass(frozen=True)
class SampledField:
    grid: GridSpec
    wavelength_um: float
    medium_index: float
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.amplitudes.shape != self.grid.shape:
            raise ConfigError(f"amplitude shape {self.amplitudes.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.amplitudes)):
            raise NumericalError("field contains non-finite amplitudes")

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def power(self) -> float:
        """Total power, sum |u|^2 dx dy."""
        return float(np.sum(self.intensity) * self.grid.dx_um * self.grid.dy_um)


@dataclass(frozen=True)
class ExposureVolume:
    """Normalized dose sampled at depths ``z_samples`` below the resist top (index order z, y, x).

    Each sample stands for the slice between the midpoints to its neighbours;
    the first slice starts at the surface and the last ends at the substrate.
    """

    grid: GridSpec
    z_samples: np.ndarray
    dose: np.ndarray = field(repr=False)
    thickness_um: float

    def __post_init__(self):
        z = np.asarray(self.z_samples, dtype=float)
        if z.ndim != 1 or z.size == 0 or np.any(np.diff(z) <= 0):
            raise ConfigError("z_samples must be strictly increasing")
        if z[0] < 0 or z[-1] > self.thickness_um:
            raise ConfigError("z_samples must lie within the resist")
        if self.dose.shape != (z.size,) + self.grid.shape:
            raise ConfigError("dose shape does not match z_samples x grid")
        object.__setattr__(self, "z_samples", z)


def _axial_wavenumber(grid: GridSpec, wavelength_um: float, medium_index: float) -> np.ndarray:
    """Complex kz/(2 pi) per frequency sample; imaginary for evanescent components."""
    fx, fy = grid.frequencies()
    kmax2 = (medium_index / wavelength_um) ** 2
    arg = kmax2 - fy[:, None] ** 2 - fx[None, :] ** 2
    return np.sqrt(arg.astype(complex))


def transfer_function(grid: GridSpec, wavelength_um: float, medium_index: float, distance_um: float) -> np.ndarray:
    """exp(i 2 pi z kz): unit modulus for propagating waves, decaying for evanescent ones."""
    kz = _axial_wavenumber(grid, wavelength_um, medium_index)
    return np.exp(2j * np.pi * distance_um * kz)


def angular_spectrum_step(field: SampledField, distance_um: float) -> SampledField:
    """Propagate a periodic field by ``distance_um`` through its own medium."""
    if distance_um < 0:
        raise DomainError("propagation distance must be non-negative")
    if distance_um == 0:
        return SampledField(field.grid, field.wavelength_um, field.medium_index, field.amplitudes.copy())
    spectrum = scipy.fft.fft2(field.amplitudes)
    spectrum *= transfer_function(field.grid, field.wavelength_um, field.medium_index, distance_um)
    out = scipy.fft.ifft2(spectrum, overwrite_x=True)
    return SampledField(field.grid, field.wavelength_um, field.medium_index, out)


def on_axis_reference(aperture_radius_um: float, wavelength_um: float, z_um: float) -> float:
    """Paraxial on-axis intensity behind a circular aperture, unit plane-wave illumination."""
    if z_um <= 0:
        raise DomainError("on-axis reference needs z > 0")
    k = 2 * math.pi / wavelength_um
    return 4 * math.sin(k * aperture_radius_um**2 / (4 * z_um)) ** 2


def on_axis_exact(aperture_radius_um: float, wavelength_um: float, z_um: float) -> float:
    """Non-paraxial (Rayleigh-Sommerfeld) on-axis intensity for the same geometry."""
    if z_um <= 0:
        raise DomainError("on-axis reference needs z > 0")
    k = 2 * math.pi / wavelength_um
    r = math.hypot(z_um, aperture_radius_um)
    return abs(1 - (z_um / r) * np.exp(1j * k * (r - z_um))) ** 2


def default_z_samples(thickness_um: float, n_slices: int = 64) -> np.ndarray:
    """Centers of ``n_slices`` equal slices through the resist."""
    return (np.arange(n_slices) + 0.5) * (thickness_um / n_slices)


def slice_edges(z_samples: np.ndarray, thickness_um: float) -> np.ndarray:
    """Slice boundaries for samples ``z``: midpoints between samples, closed by 0 and the thickness."""
    z = np.asarray(z_samples, dtype=float)
    return np.concatenate([[0.0], 0.5 * (z[1:] + z[:-1]), [thickness_um]])


def check_sampling(grid: GridSpec, wavelength_um: float) -> None:
    required = wavelength_um / 2
    worst = max(grid.dx_um, grid.dy_um)
    if worst > required * (1 + 1e-12):
        raise SamplingError(
            f"grid spacing {worst:.6g} um too coarse for wavelength {wavelength_um} um; "
            f"required dx <= {required:.6g} um"
        )


def intensity_volume(
    mask: TransmissionGrid,
    recipe: "ProcessRecipe",
    z_samples: np.ndarray | None = None,
    allow_undersampling: bool = False,
) -> np.ndarray:
    """Spectrally weighted intensity in the resist, before absorption and dose scaling.

    Returns an array of shape ``(nz, ny, nx)``.
    """
    grid = mask.grid
    if recipe.gap_um < 0:
        raise ConfigError("gap must be non-negative")
    if not allow_undersampling:
        check_sampling(grid, recipe.spectrum.min_wavelength_um)
    if z_samples is None:
        z_samples = default_z_samples(recipe.resist_thickness_um, recipe.z_slices)
    z_samples = np.asarray(z_samples, dtype=float)

    mask_spectrum = scipy.fft.fft2(mask.values.astype(complex))
    out = np.zeros((z_samples.size,) + grid.shape)
    # fixed line order keeps the reduction bit-reproducible
    for wavelength, weight in recipe.spectrum.lines:
        if weight == 0:
            continue
        top = mask_spectrum * transfer_function(grid, wavelength, 1.0, recipe.gap_um)
        kz = _axial_wavenumber(grid, wavelength, recipe.resist_index)
        for iz, z in enumerate(z_samples):
            u = scipy.fft.ifft2(top * np.exp(2j * np.pi * z * kz))
            out[iz] += weight * (u.real**2 + u.imag**2)
    return out


def exposure_volume(
    mask: TransmissionGrid,
    recipe: "ProcessRecipe",
    z_samples: np.ndarray | None = None,
    allow_undersampling: bool = False,
    intensity: np.ndarray | None = None,
) -> ExposureVolume:
    """Normalized dose volume ``exposure_scale * exp(-alpha z) * sum_lines w |u|^2``.

    ``intensity`` may carry a precomputed :func:`intensity_volume` for the same
    mask, gap, spectrum and slices; absorption and scale are applied here.
    """
    if recipe.resist_thickness_um <= 0:
        raise ConfigError("resist thickness must be positive")
    if z_samples is None:
        z_samples = default_z_samples(recipe.resist_thickness_um, recipe.z_slices)
    z_samples = np.asarray(z_samples, dtype=float)
    if intensity is None:
        intensity = intensity_volume(mask, recipe, z_samples, allow_undersampling)
    atten = recipe.exposure_scale * np.exp(-recipe.absorption_per_um * z_samples)
    dose = intensity * atten[:, None, None]
    return ExposureVolume(mask.grid, z_samples, dose, recipe.resist_thickness_um)
