import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cattrap import potential as pot
from cattrap.potential import FIG2_STAGE_I, FIG4_STAGE_II, Schedule, TrapConfig


def test_single_well_peak_and_width():
    x = np.array([0.0, 0.5])
    v = pot.single_well(x, 0.0, 10.0, 0.5)
    assert v[0] == -10.0
    assert v[1] == pytest.approx(-10.0 * math.exp(-0.5))


def test_stage_layouts():
    assert np.allclose(FIG2_STAGE_I.with_d(2.0).centers(), [-2.0, 0.0, 2.0])
    assert np.allclose(FIG4_STAGE_II.with_d(3.0).centers(), [-1.5, 1.5])
    shifted = FIG2_STAGE_I.replace(origin=1.5).with_d(1.0)
    assert np.allclose(shifted.centers(), [0.5, 1.5, 2.5])


def test_stage_two_deeper_well_is_right():
    x = np.array([-1.5, 1.5])
    v = pot.stage_potential(FIG4_STAGE_II.with_d(3.0), x)
    assert v[1] < v[0]


def test_serial_layout_matches_equal_spacing():
    cfg = TrapConfig("III", 10, 0.5, (0, 0, 0, 0), 1.0, 10, 4, split_levels=(2.0, 1.0))
    assert np.allclose(np.sort(cfg.centers()), [-1.5, -0.5, 0.5, 1.5])


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(stage="IV"),
        dict(V0=-1.0),
        dict(sigma=0.0),
        dict(d=-1.0),
        dict(N=0),
        dict(q=(0.6, 0.0, 0.0)),
        dict(q=()),
        dict(stage="II"),
        dict(split_levels=(1.0,)),
    ],
)
def test_config_validation(kwargs):
    base = FIG2_STAGE_I.to_dict()
    base.update(kwargs)
    with pytest.raises(ValueError):
        TrapConfig.from_dict(base)


def test_config_dict_round_trip():
    assert TrapConfig.from_dict(FIG4_STAGE_II.to_dict()) == FIG4_STAGE_II


def test_merged_trap_depth_adds_up():
    v = pot.stage_potential(FIG2_STAGE_I.with_d(0.0), np.array([0.0]))
    assert v[0] == pytest.approx(-30.0, abs=1e-9)


@given(d0=st.floats(0, 2), span=st.floats(0.1, 3), v=st.floats(0.01, 2), frac=st.floats(0, 1))
def test_schedule_linear(d0, span, v, frac):
    s = Schedule(d0, d0 + span, v)
    assert s.duration == pytest.approx(span / v)
    assert s.d_at(frac * s.duration) == pytest.approx(d0 + frac * span)
    assert s.d_at(2 * s.duration + 1) == pytest.approx(d0 + span)


def test_schedule_rejects_bad_speed():
    with pytest.raises(ValueError):
        Schedule(0, 3, 0.0)


def test_energy_scales_stage_two():
    sc = pot.energy_scales(FIG4_STAGE_II)
    sigma0 = (30 / 0.25) ** 0.25
    assert sc.E_asym == pytest.approx(3 * 1e-4 * 30)
    assert sc.E_int == pytest.approx(2 * 4 / sigma0)
    assert sc.E_int == pytest.approx(2.417, abs=1e-3)
    assert sc.E_D == pytest.approx((math.pi / 2) ** 2)
    assert pot.hierarchy_satisfied(sc, 10)


def test_energy_scales_stage_one():
    sc = pot.energy_scales(FIG2_STAGE_I)
    assert sc.E_asym == pytest.approx(1e-3)
    assert sc.E_D == pytest.approx((math.pi / 3) ** 2)
    assert pot.hierarchy_satisfied(sc, 10)


def test_hierarchy_fails_for_large_asymmetry():
    sc = pot.energy_scales(FIG4_STAGE_II.replace(q=(0.0, 0.2)))
    assert not pot.hierarchy_satisfied(sc)
    with pytest.raises(ValueError):
        pot.hierarchy_satisfied(sc, margin=1.0)
    with pytest.raises(ValueError):
        pot.energy_scales(FIG4_STAGE_II.replace(V0=0.0))


def test_lz_estimate_and_dephasing_bound():
    est = pot.lz_estimate(2.4, FIG2_STAGE_I)
    assert est.slope == pytest.approx(math.sqrt(30) / 0.25)
    assert est.v_ad == pytest.approx(2.4**2 / est.slope)
    assert pot.lz_estimate(0.0, FIG2_STAGE_I).v_ad == 0.0
    with pytest.raises(ValueError):
        pot.lz_estimate(-1, FIG2_STAGE_I)
    assert pot.dephasing_bound(FIG4_STAGE_II, 0.1, 3.0) == pytest.approx(3 * 1e-4 * 30 * 3 / 0.1)


def test_potential_csv(tmp_path):
    x = np.linspace(-1, 1, 5)
    text = pot.write_potential_csv(FIG4_STAGE_II, x, tmp_path / "v.csv")
    assert text.splitlines()[0] == "x,V"
    assert len(text.splitlines()) == 6
    assert (tmp_path / "v.csv").read_text() == text
