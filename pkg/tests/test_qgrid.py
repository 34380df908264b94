import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cattrap.potential import FIG2_STAGE_I
from cattrap.qgrid import (
    DegenerateInputError,
    FockSector,
    Grid,
    GridMismatchError,
    WaveFunction,
    boundary_density,
    observables,
    overlap,
    product_state,
    region_population,
    symmetrize,
)


def random_wf(rng, grid, n):
    a = rng.normal(size=(grid.points,) * n) + 1j * rng.normal(size=(grid.points,) * n)
    return WaveFunction(grid, n, a).normalized()


def test_grid_basics():
    g = Grid.symmetric(1.0, 0.25)
    assert g.points == 9 and g.spacing == pytest.approx(0.25)
    assert g.x[0] == -1.0 and g.x[-1] == 1.0
    with pytest.raises(ValueError):
        Grid(1.0, 0.0, 5)
    with pytest.raises(ValueError):
        Grid(-1.0, 1.0, 4).validate()


def test_grid_for_trap_holds_all_wells():
    g = Grid.for_trap(FIG2_STAGE_I, d_max=3.0, spacing=0.1)
    assert g.contains_wells(FIG2_STAGE_I.with_d(3.0))
    assert g.x_max == pytest.approx(5.5)
    with pytest.raises(ValueError):
        Grid(-1, 1, 21).validate(FIG2_STAGE_I.with_d(3.0))


@pytest.mark.parametrize("M,n", [(5, 1), (6, 2), (5, 3), (4, 4)])
def test_sector_dimension_and_multiplicity(M, n):
    s = FockSector(M, n)
    assert s.dim == math.comb(M + n - 1, n)
    # orderings of all sorted tuples add up to the full product space
    assert s.n_perm.sum() == pytest.approx(M**n)


def test_sector_round_trip(rng):
    g = Grid(-1, 1, 6)
    psi = symmetrize(random_wf(rng, g, 3))
    c = psi.sector()
    back = WaveFunction.from_sector(g, 3, c)
    assert np.allclose(back.amplitudes, psi.amplitudes, atol=1e-12)
    assert np.linalg.norm(c) == pytest.approx(psi.norm(), rel=1e-12)


def test_hopping_matches_dense_laplacian():
    M, n, h = 5, 2, 0.5
    s = FockSector(M, n)
    g = Grid(0, (M - 1) * h, M)
    K = s.hopping(h).toarray()
    lap = (-np.eye(M, k=1) - np.eye(M, k=-1)) / h**2
    full = np.kron(lap, np.eye(M)) + np.kron(np.eye(M), lap)
    # compare <i|K|j> through expand/compress
    for j in range(s.dim):
        e = np.zeros(s.dim)
        e[j] = 1.0
        v = WaveFunction.from_sector(g, n, e).amplitudes.reshape(-1)
        Kv = (full @ v).reshape((M,) * n)
        assert np.allclose(s.compress(Kv, h), K[:, j], atol=1e-12)


def test_mirror_is_involution():
    s = FockSector(7, 3)
    m = s.mirror()
    assert np.array_equal(m[m], np.arange(s.dim))


def test_symmetrize_and_swap(rng):
    g = Grid(-1, 1, 5)
    psi = random_wf(rng, g, 3)
    assert psi.swap_deviation() > 1e-3
    sym = symmetrize(psi)
    assert sym.swap_deviation() < 1e-14
    assert sym.norm() == pytest.approx(1.0)


def test_symmetrize_antisymmetric_is_degenerate(rng):
    g = Grid(-1, 1, 5)
    a = rng.normal(size=(5, 5))
    with pytest.raises(DegenerateInputError):
        symmetrize(WaveFunction(g, 2, a - a.T))


def test_product_state_density_counts_particles():
    g = Grid(-3, 3, 61)
    w1 = np.exp(-((g.x + 1) ** 2))
    w2 = np.exp(-((g.x - 1) ** 2))
    w1 /= math.sqrt(np.sum(w1**2) * g.spacing)
    w2 /= math.sqrt(np.sum(w2**2) * g.spacing)
    psi = product_state([w1, w2], g, 2)
    assert psi.norm() == pytest.approx(1.0)
    assert np.sum(psi.density()) * g.spacing == pytest.approx(2.0)
    with pytest.raises(ValueError):
        product_state([w1], g, 2)


@given(shift=st.floats(0.0, 2 * math.pi))
def test_overlap_phase(shift):
    g = Grid(-1, 1, 5)
    a = WaveFunction(g, 2, np.ones((5, 5))).normalized()
    b = WaveFunction(g, 2, a.amplitudes * np.exp(1j * shift))
    assert overlap(a, b) == pytest.approx(np.exp(1j * shift))


def test_overlap_grid_mismatch():
    a = WaveFunction(Grid(-1, 1, 5), 1, np.ones(5))
    b = WaveFunction(Grid(-1, 1, 6), 1, np.ones(6))
    with pytest.raises(GridMismatchError):
        overlap(a, b)


def test_region_populations_of_split_state():
    g = Grid(-2, 2, 41)
    loc = np.where(g.x < 0, 1.0, 0.0)
    psi = product_state([loc, loc], g, 2)
    all_in, marg = region_population(psi, (-2, -0.05))
    assert all_in == pytest.approx(1.0) and marg == pytest.approx(1.0)
    obs = observables(psi, centers=[-1.0, 1.0])
    assert obs.left_population == pytest.approx(1.0)
    assert obs.right_population == pytest.approx(0.0)
    assert obs.well_populations == pytest.approx((1.0, 0.0))


def test_boundary_density_small_for_bound_state():
    g = Grid(-3, 3, 61)
    w = np.exp(-(g.x**2) * 2)
    assert boundary_density(product_state([w], g, 1)) < 1e-6


def test_dump_load_round_trip(tmp_path, rng):
    g = Grid(-1.5, 1.5, 7)
    psi = random_wf(rng, g, 2)
    psi.dump(tmp_path / "psi.bin")
    back = WaveFunction.load(tmp_path / "psi.bin")
    assert back.grid.points == 7 and back.grid.spacing == pytest.approx(g.spacing)
    assert np.array_equal(back.amplitudes, psi.amplitudes)
    raw = (tmp_path / "psi.bin").read_bytes()
    assert len(raw) == 32 + 16 * 49


def test_density_csv_columns():
    g = Grid(-1, 1, 3)
    text = WaveFunction(g, 1, np.ones(3)).normalized().density_csv()
    assert text.splitlines()[0] == "x,rho"
    assert len(text.splitlines()) == 4


def test_wrong_shape_rejected():
    with pytest.raises(ValueError):
        WaveFunction(Grid(-1, 1, 4), 2, np.ones((4, 3)))


def test_sector_index_lookup():
    s = FockSector(4, 2)
    idx = s.index_of([[0, 0], [1, 3]])
    assert list(s.conf[idx[1]]) == [1, 3]
    with pytest.raises(KeyError):
        s.index_of([[3, 1]])
