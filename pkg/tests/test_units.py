import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cattrap import units
from cattrap.units import RUBIDIUM, SODIUM, Species


def test_unit_system_scales():
    u = units.make_unit_system(SODIUM)
    assert u.energy_unit == pytest.approx(units.HBAR**2 / (2 * SODIUM.mass * 4e-12))
    assert u.time_unit * u.energy_unit == pytest.approx(units.HBAR)
    assert u.velocity_unit == pytest.approx(2e-6 / u.time_unit)


@pytest.mark.parametrize("species", [SODIUM, RUBIDIUM])
@given(v=st.floats(0, 10))
def test_velocity_round_trip(species, v):
    back = units.velocity_to_dimensionless(units.velocity_to_physical(v, species), species)
    assert back == pytest.approx(v, rel=1e-12, abs=1e-15)


@given(e=st.floats(-100, 100))
def test_energy_round_trip(e):
    back = units.energy_to_dimensionless(units.energy_to_physical(e, RUBIDIUM), RUBIDIUM)
    assert back == pytest.approx(e, rel=1e-12, abs=1e-12)


def test_negative_speed_rejected():
    with pytest.raises(ValueError):
        units.velocity_to_physical(-0.1, SODIUM)


def test_heavier_species_is_slower():
    assert units.velocity_to_physical(0.35, RUBIDIUM) < units.velocity_to_physical(0.35, SODIUM)


def test_omega_perp_sign_and_zero():
    assert units.omega_perp(-4, SODIUM) == units.omega_perp(4, SODIUM)
    with pytest.raises(ValueError):
        units.omega_perp(0.0, SODIUM)


def test_species_validation():
    with pytest.raises(ValueError):
        Species("X", 0.0, 1e-9)
    with pytest.raises(ValueError):
        Species("X", 1e-26, 0.0)


def test_table_rows_and_reference():
    rows = units.emit_table1([SODIUM, RUBIDIUM])
    assert [r.quantity for r in rows] == [k for k, _ in units.TABLE1_ROWS]
    by = {r.quantity: r for r in rows}
    assert by["v_cI2"].values["Na"] == pytest.approx(242.0, rel=5e-3)
    # the transverse frequency is reported against the table, not adjusted to it
    assert by["omega_perp"].ratio("Na") == pytest.approx(2.0, rel=0.01)


def test_table_empty_and_custom():
    assert units.emit_table1([]) == []
    ca = Species.from_atomic_units("Ca", 40.0, 100.0)
    rows = units.emit_table1([ca])
    assert all(r.reference == {} for r in rows)
    assert math.isnan(rows[0].ratio("Ca"))
    text = units.table1_csv(rows)
    assert text.splitlines()[0] == "quantity,unit,Ca,Ca_table,Ca_ratio"


def test_table_text_lists_both_columns():
    text = units.table1_text(units.emit_table1([SODIUM]))
    assert "Na table" in text and "ratio" in text
