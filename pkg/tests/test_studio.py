import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from proxmla.errors import CalibrationError, ConfigError, MonotonicityError, RangeError
from proxmla.mask import MaskSpec
from proxmla.metrology import lens_metrics
from proxmla.resist import ProcessRecipe
from proxmla.studio import (
    CALIBRATED_FIELDS,
    LENS_TABLE,
    Simulator,
    calibrate,
    check_design_rules,
    inverse_gap,
    sweep,
)

# Small, fast configuration: isolated 10 um apertures on a 60 um lattice in 6 um of
# resist. Beyond the last axial maximum the sag falls steadily with gap, which
# makes the inverse problem well posed over 110-160 um.
SMALL = MaskSpec(10, 60)
RECIPE = ProcessRecipe(resist_thickness_um=6, z_slices=32, exposure_scale=0.15, contrast_gamma=1)


@pytest.fixture(scope="module")
def sim():
    return Simulator(dx_um=0.18, cache_size=16)


def test_lens_table_is_self_consistent():
    for D, h, rc, f, na in LENS_TABLE.values():
        assert lens_metrics(D, h) == pytest.approx((rc, f, na), rel=5e-3)
    sags = [LENS_TABLE[g][1] for g in sorted(LENS_TABLE)]
    assert all(b < a for a, b in zip(sags, sags[1:]))


@pytest.mark.parametrize(
    "p,d,gap,expect",
    [(120, 80, 360, (True, False)), (120, 80, 120, (False, False)), (90, 80, 360, (True, True))],
)
def test_design_rules(p, d, gap, expect):
    rep = check_design_rules(MaskSpec(d, p), gap)
    assert tuple(r.passed for r in rep.rules) == expect
    assert [r.name for r in rep.rules] == ["A", "B"]
    assert rep.rules[0].margin == gap - 2 * p
    assert rep.rules[1].margin == pytest.approx(1.25 * d - p)


def test_design_rule_closeness_configurable():
    assert check_design_rules(MaskSpec(80, 120), 360, closeness=0.5).passed


@given(st.floats(1, 200), st.floats(1, 300), st.floats(0, 1000))
def test_design_rules_pure(d, p, gap):
    spec = MaskSpec(d, p)
    assert check_design_rules(spec, gap) == check_design_rules(spec, gap)


def test_sweep_singleton_equals_standalone(sim):
    res = sweep(RECIPE, "gap", [140.0], SMALL, sim)
    alone = Simulator(dx_um=0.18).run(SMALL, RECIPE.with_(gap_um=140.0)).metrics
    assert len(res.points) == 1 and res.points[0].metrics == alone


def test_sweep_sorted_parallel_identical(sim):
    values = [160.0, 120.0, 140.0]
    seq = sweep(RECIPE, "gap", values, SMALL, sim)
    par = sweep(RECIPE, "gap", values, SMALL, sim, max_workers=3)
    assert seq.values() == [120.0, 140.0, 160.0]
    assert seq.points == par.points


def test_sweep_records_point_errors(sim):
    # dx far coarser than half a wavelength without the opt-in: every point fails, nothing raises
    res = sweep(RECIPE, "gap", [120.0, 130.0], SMALL, Simulator(dx_um=1.0))
    assert [p.metrics for p in res.points] == [None, None]
    assert all("SamplingError" in p.error for p in res.points)


@pytest.mark.parametrize("kw", [dict(axis="gap", values=[]), dict(axis="gap", values=[-1.0]), dict(axis="tilt", values=[1.0])])
def test_sweep_rejects(kw):
    with pytest.raises(ConfigError):
        sweep(RECIPE, spec=SMALL, **kw)


def test_inverse_gap_round_trip(sim):
    target = sim.sag(SMALL, RECIPE.with_(gap_um=135.0))
    gap = inverse_gap(RECIPE, target, (110.0, 160.0), SMALL, sim)
    assert abs(gap - 135.0) <= 1.0


def test_inverse_gap_range_error(sim):
    with pytest.raises(RangeError) as info:
        inverse_gap(RECIPE, 10.0, (110.0, 160.0), SMALL, sim)
    lo, hi = info.value.achievable
    assert lo < hi < 10.0


def test_inverse_gap_monotonicity_error(sim):
    # near contact the sag dips and recovers before the resist clears through
    with pytest.raises(MonotonicityError):
        inverse_gap(RECIPE, 5.0, (20.0, 160.0), SMALL, sim, n_check=15)


def test_calibrate_empty_box_returns_fixed_point(sim):
    fixed = {n: (getattr(RECIPE, n),) * 2 for n in CALIBRATED_FIELDS}
    res = calibrate(RECIPE, [(130.0, 4.0)], fixed, SMALL, sim)
    assert res.fitted == {n: getattr(RECIPE, n) for n in CALIBRATED_FIELDS}
    assert res.iterations == 0
    assert res.residual == pytest.approx(abs(sim.sag(SMALL, RECIPE.with_(gap_um=130.0)) - 4.0))


def test_calibrate_rejects_bad_input(sim):
    with pytest.raises(ConfigError):
        calibrate(RECIPE, [], spec=SMALL, simulator=sim)
    with pytest.raises(ConfigError):
        calibrate(RECIPE, [(130.0, 4.0)], {"exposure_scale": (2.0, 1.0)}, SMALL, sim)
    with pytest.raises(ConfigError):
        calibrate(RECIPE, [(130.0, 4.0)], {"develop_time_s": (1.0, 2.0)}, SMALL, sim)


def test_calibrate_non_finite_objective(sim):
    with pytest.raises(CalibrationError):
        calibrate(RECIPE, [(130.0, math.nan)], spec=SMALL, simulator=sim)


@pytest.fixture(scope="module")
def self_fit(sim):
    truth = RECIPE.with_(exposure_scale=0.17)
    obs = [(g, sim.sag(SMALL, truth.with_(gap_um=g))) for g in (120.0, 150.0)]
    fixed = {n: (getattr(RECIPE, n),) * 2 for n in CALIBRATED_FIELDS if n != "exposure_scale"}
    return calibrate(RECIPE, obs, fixed, SMALL, sim, xtol=1e-9)


def test_calibrate_recovers_model_parameters(self_fit):
    assert self_fit.residual < 1e-6
    assert self_fit.fitted["exposure_scale"] == pytest.approx(0.17, rel=1e-4)
    assert self_fit.fitted["contrast_gamma"] == RECIPE.contrast_gamma
    assert self_fit.iterations > 0


def test_calibrate_history_non_increasing(self_fit):
    h = np.array(self_fit.history)
    assert np.all(np.diff(h) <= 0)
    assert h[-1] == pytest.approx(self_fit.residual**2 * 2, abs=1e-12)


def test_calibrated_values_within_bounds(sim):
    bounds = {"exposure_scale": (0.1, 0.12), "contrast_gamma": (1.0, 1.0), "absorption_per_um": (0.05, 0.05),
              "rate_max_um_per_s": (0.15, 0.15)}
    res = calibrate(RECIPE, [(130.0, 5.9)], bounds, SMALL, sim, max_iter=20)
    assert 0.1 <= res.fitted["exposure_scale"] <= 0.12
    assert res.residual >= 0


# resist parameters fitted to the gap-360 sag at dx = 0.4 um (see scripts/calibrate_and_sweep.py)
FITTED = ProcessRecipe(exposure_scale=0.518, contrast_gamma=2.612, absorption_per_um=0.0736, rate_max_um_per_s=0.1595)


@pytest.mark.slow
def test_pitch_sweep_fill_factor_non_increasing():
    sim = Simulator(dx_um=0.4, allow_undersampling=True)
    res = sweep(FITTED, "pitch", [120.0, 90.0, 105.0], MaskSpec(80, 120), sim)
    ff = [p.metrics.fill_factor for p in res.points]
    assert res.values() == [90.0, 105.0, 120.0]
    assert all(b <= a for a, b in zip(ff, ff[1:]))
