"""Simulation and metrology of concave microlens-array molds made by UV proximity printing."""

__version__ = "0.1.0"

from .mask import GridSpec, MaskSpec, TransmissionGrid, rasterize, unit_cell
from .metrology import (
    LensMetrics,
    Regime,
    RegimeThresholds,
    classify_regime,
    extract_lens,
    fill_factor,
    fill_factor_raster,
    fit_sphere,
    lens_metrics,
    measure_profile,
    roughness_ra,
)
from .propagate import (
    ExposureVolume,
    SampledField,
    Spectrum,
    angular_spectrum_step,
    exposure_volume,
    on_axis_reference,
)
from .resist import ProcessRecipe, SurfaceProfile, cast_replica, develop_profile, development_rate
from .studio import Simulator, calibrate, check_design_rules, inverse_gap, sweep
