"""Atomic species and the scaled unit system used throughout the package.

Lengths are measured in ``L_u = 2 um``, energies in ``E_u = hbar**2 / (2 M L_u**2)``
and times in ``t_u = hbar / E_u``, so the one-particle kinetic operator is
simply ``-d^2/dx^2``.  Everything in this module is a pure function of
immutable values.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

from scipy import constants

HBAR = constants.hbar
PLANCK = constants.h
ATOMIC_MASS = constants.atomic_mass
BOHR_RADIUS = constants.physical_constants["Bohr radius"][0]

LENGTH_UNIT = 2e-6  # m


@dataclass(frozen=True)
class Species:
    """An atomic species: mass in kg, scattering length in m."""

    name: str
    mass: float
    scattering_length: float

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"species {self.name!r}: mass must be positive")
        if self.scattering_length == 0:
            raise ValueError(f"species {self.name!r}: scattering length must be nonzero")

    @classmethod
    def from_atomic_units(cls, name: str, mass_u: float, scattering_a0: float) -> "Species":
        return cls(name, mass_u * ATOMIC_MASS, scattering_a0 * BOHR_RADIUS)


# triplet, zero-field scattering lengths
SODIUM = Species.from_atomic_units("Na", 22.98977, 65.0)
RUBIDIUM = Species.from_atomic_units("Rb", 86.90918, 106.0)

SPECIES = {s.name: s for s in (SODIUM, RUBIDIUM)}


@dataclass(frozen=True)
class UnitSystem:
    """Scaled units for one species.  Build with :func:`make_unit_system`."""

    species: Species
    length_unit: float
    energy_unit: float
    time_unit: float
    velocity_unit: float


def make_unit_system(species: Species, length_unit: float = LENGTH_UNIT) -> UnitSystem:
    energy = HBAR**2 / (2.0 * species.mass * length_unit**2)
    time = HBAR / energy
    return UnitSystem(species, length_unit, energy, time, length_unit / time)


def velocity_to_physical(v: float, species: Species) -> float:
    """Dimensionless separation speed -> um/s."""
    if v < 0:
        raise ValueError("speed must be non-negative")
    return v * make_unit_system(species).velocity_unit * 1e6


def velocity_to_dimensionless(v_um_per_s: float, species: Species) -> float:
    return v_um_per_s * 1e-6 / make_unit_system(species).velocity_unit


def energy_to_physical(energy: float, species: Species) -> float:
    """Dimensionless energy -> frequency E/h in kHz."""
    return energy * make_unit_system(species).energy_unit / PLANCK * 1e-3


def energy_to_dimensionless(khz: float, species: Species) -> float:
    return khz * 1e3 * PLANCK / make_unit_system(species).energy_unit


def omega_perp(U0: float, species: Species) -> float:
    """Transverse trap frequency (rad/s) giving the 1D contact strength ``U0``.

    Evaluated as ``U0 * hbar / (4 |a| M L_u)`` with no correction factor.
    The sign of ``U0`` only selects the sign of the scattering length, so the
    magnitude is returned.
    """
    if U0 == 0:
        raise ValueError("U0 must be nonzero")
    u = make_unit_system(species)
    return abs(U0) * HBAR / (4.0 * abs(species.scattering_length) * species.mass * u.length_unit)


# Reference values printed in the published parameter table, per species.
TABLE1_REFERENCE = {
    "Na": {"omega_perp": 79.9, "v_cI1": 62.2, "v_cI2": 242.0, "v_cII1": 117.0, "v_cII2": 186.0, "V0_II": 2.47},
    "Rb": {"omega_perp": 13.0, "v_cI1": 16.5, "v_cI2": 64.0, "v_cII1": 31.1, "v_cII2": 49.4, "V0_II": 0.665},
}

TABLE1_ROWS = (
    ("omega_perp", "2pi kHz"),
    ("v_cI1", "um/s"),
    ("v_cI2", "um/s"),
    ("v_cII1", "um/s"),
    ("v_cII2", "um/s"),
    ("V0_II", "h x kHz"),
)

DEFAULT_CRITICAL = {"v_cI1": 0.09, "v_cI2": 0.35, "v_cII1": 0.169, "v_cII2": 0.27}


@dataclass(frozen=True)
class TableRow:
    quantity: str
    unit: str
    values: dict  # species name -> computed value
    reference: dict  # species name -> published value (missing for custom species)

    def ratio(self, name: str) -> float:
        ref = self.reference.get(name)
        return math.nan if ref is None else self.values[name] / ref


def emit_table1(species_list, critical=None, V0_II: float = 30.0, U0: float = 10.0) -> list[TableRow]:
    """Compute the physical-unit parameter table.

    Parameters
    ----------
    species_list : sequence of Species
        One column per species.  Empty input gives an empty table.
    critical : dict, optional
        Dimensionless critical speeds keyed ``v_cI1, v_cI2, v_cII1, v_cII2``.
    V0_II, U0 : float
        Stage-II well depth and the interaction used for the transverse frequency.

    Returns
    -------
    list of TableRow
        Rows in the published order.  ``reference`` carries the published
        numbers for Na and Rb so that discrepancies stay visible.
    """
    species_list = list(species_list)
    if not species_list:
        return []
    crit = dict(DEFAULT_CRITICAL)
    if critical:
        crit.update(critical)
    rows = []
    for key, unit in TABLE1_ROWS:
        values = {}
        for sp in species_list:
            if key == "omega_perp":
                values[sp.name] = omega_perp(U0, sp) / (2 * math.pi) * 1e-3
            elif key == "V0_II":
                values[sp.name] = energy_to_physical(V0_II, sp)
            else:
                values[sp.name] = velocity_to_physical(crit[key], sp)
        ref = {sp.name: TABLE1_REFERENCE[sp.name][key] for sp in species_list if sp.name in TABLE1_REFERENCE}
        rows.append(TableRow(key, unit, values, ref))
    return rows


def table1_csv(rows: list[TableRow]) -> str:
    """CSV with computed value, published value and their ratio per species."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if not rows:
        return ""
    names = list(rows[0].values)
    header = ["quantity", "unit"]
    for n in names:
        header += [n, f"{n}_table", f"{n}_ratio"]
    w.writerow(header)
    for r in rows:
        line = [r.quantity, r.unit]
        for n in names:
            ref = r.reference.get(n)
            line += [f"{r.values[n]:.17g}", "" if ref is None else f"{ref:.17g}", "" if ref is None else f"{r.ratio(n):.17g}"]
        w.writerow(line)
    return buf.getvalue()


def table1_text(rows: list[TableRow]) -> str:
    if not rows:
        return ""
    names = list(rows[0].values)
    head = f"{'quantity':<12}{'unit':<10}" + "".join(f"{n:>12}{n + ' table':>12}{'ratio':>8}" for n in names)
    lines = [head, "-" * len(head)]
    for r in rows:
        s = f"{r.quantity:<12}{r.unit:<10}"
        for n in names:
            ref = r.reference.get(n)
            s += f"{r.values[n]:>12.4g}"
            s += f"{'':>12}{'':>8}" if ref is None else f"{ref:>12.4g}{r.ratio(n):>8.3f}"
        lines.append(s)
    return "\n".join(lines) + "\n"
