import math
import warnings

import numpy as np
import pytest

from cattrap.potential import FIG2_STAGE_I, FIG3_STAGE_III, FIG4_STAGE_II
from cattrap.protocol import (
    BracketError,
    CriticalVelocities,
    Metric,
    PreparationWarning,
    ProtocolRun,
    find_critical_velocity,
    mi_orbitals,
    mi_state_preparation,
    run_protocol,
)
from cattrap.qgrid import Grid

PAIR_Q = (-1e-4, 1e-4)


def pair_run(mode="parallel", q_II=None, **kw):
    I = FIG2_STAGE_I.replace(N=2, q=PAIR_Q)
    III = FIG3_STAGE_III.replace(N=2, q=PAIR_Q)
    II = FIG4_STAGE_II.replace(N=2)
    if q_II is not None:
        II = II.replace(q=q_II)
    if mode == "serial-splitting":
        I = I.replace(split_levels=(3.0,))
        III = III.replace(split_levels=(3.0,))
    opts = dict(handoff="adiabatic", dt=0.02, spacing=0.25)
    opts.update(kw)
    return ProtocolRun(cfg_I=I, cfg_II=II, cfg_III=III, mode=mode, **opts)


@pytest.fixture(scope="module")
def pair_report():
    return run_protocol(pair_run())


def linear_metric(v_c, sense="ge"):
    calls = []

    def evaluate(v):
        calls.append(v)
        return 1.0 - v / v_c * 0.5  # crosses 0.5 at v_c

    if sense == "le":
        return Metric("loss", lambda v: -evaluate(v), -0.5, "le"), calls
    return Metric("keep", evaluate, 0.5, "ge"), calls


@pytest.mark.parametrize("sense", ["ge", "le"])
def test_bisection_finds_crossing(sense):
    m, calls = linear_metric(0.27, sense)
    res = find_critical_velocity(m, (0.01, 3.0), rel_width=0.01)
    assert res.lower <= 0.27 <= res.upper
    assert res.upper / res.lower <= 1.01
    assert res.v == pytest.approx(0.27, rel=0.01)
    assert calls[:2] == [0.01, 3.0]
    assert [v for v, _ in res.evaluations] == calls


def test_refinement_keeps_the_crossing_inside():
    m, _ = linear_metric(0.169)
    coarse = find_critical_velocity(m, (0.05, 1.0), rel_width=0.2)
    fine = find_critical_velocity(m, (0.05, 1.0), rel_width=0.01)
    assert coarse.lower <= fine.lower and fine.upper <= coarse.upper
    assert fine.v == pytest.approx(0.169, rel=0.01)


def test_bracket_without_crossing_raises():
    m, _ = linear_metric(0.5)
    with pytest.raises(BracketError):
        find_critical_velocity(m, (0.01, 0.1))
    with pytest.raises(ValueError):
        find_critical_velocity(m, (0.0, 1.0))


def test_window():
    assert CriticalVelocities(0.1, 0.3).window_nonempty
    assert not CriticalVelocities(0.3, 0.1).window_nonempty


def test_mi_state_single_atom_is_well_orbital():
    cfg = FIG2_STAGE_I.replace(N=1, q=(0.0,))
    grid = Grid.for_trap(cfg, spacing=0.1)
    psi = mi_state_preparation(cfg, grid)
    orbs, S = mi_orbitals(cfg, grid)
    assert np.allclose(psi.amplitudes, orbs[0])
    assert S[0, 0] == pytest.approx(1.0)
    assert psi.norm() == pytest.approx(1.0)


def test_mi_state_overlap_and_warning():
    cfg = FIG2_STAGE_I.with_d(3.0)
    grid = Grid.for_trap(cfg, spacing=0.2)
    _, S = mi_orbitals(cfg, grid)
    assert np.allclose(np.diag(S), 1.0)
    # neighbouring orbitals still touch at 6 sigma
    assert 1e-3 < S[0, 1] < 5e-2
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        mi_state_preparation(cfg, grid)
    with pytest.warns(PreparationWarning, match="overlap"):
        mi_state_preparation(cfg.with_d(1.5), grid)
    with pytest.raises(ValueError):
        mi_state_preparation(FIG4_STAGE_II, grid)


def test_run_validation():
    with pytest.raises(ValueError):
        pair_run(mode="sideways")
    with pytest.raises(ValueError):
        pair_run(handoff="slow")
    with pytest.raises(ValueError):
        ProtocolRun(cfg_II=FIG4_STAGE_II.replace(N=2))
    with pytest.raises(ValueError):
        ProtocolRun(mode="serial-splitting")
    with pytest.raises(ValueError):
        ProtocolRun(phases=(0.1,))
    assert ProtocolRun().branch_offset == pytest.approx(1e-4)
    assert ProtocolRun(q_offset=3e-4).branch_offset == 3e-4


def test_hierarchy_violation_rejected():
    run = pair_run()
    run.cfg_II = run.cfg_II.replace(q=(0.0, 0.1))
    with pytest.raises(ValueError, match="energy scales"):
        run_protocol(run)


def test_pair_protocol_succeeds(pair_report):
    r = pair_report
    assert r.success
    assert r.failed_stage is None
    names = {(m.stage, m.name) for m in r.metrics}
    for key in [("I", "merge_ground_probability"), ("II", "doublet_weight"), ("III", "branch_phase"), ("IV", "fringe_amplitude")]:
        assert key in names
    assert r.theta_total == pytest.approx(r.theta_II + r.branch_delta)
    assert r.fringe.amplitude == pytest.approx(r.visibility, abs=1e-12)
    assert r.to_text().rstrip().endswith("result: success")
    assert r.metrics_csv().splitlines()[0] == "stage,metric,value,floor,ok"


def test_serial_equals_parallel_for_two_atoms(pair_report):
    serial = run_protocol(pair_run("serial-splitting"))
    a = {(m.stage, m.name): m.value for m in pair_report.metrics}
    b = {(m.stage, m.name): m.value for m in serial.metrics}
    assert a.keys() == b.keys()
    for key in a:
        assert b[key] == pytest.approx(a[key], rel=1e-6, abs=1e-9), key


def test_symmetric_protocol_has_no_phase():
    r = run_protocol(pair_run(q_II=(0.0, 0.0)))
    assert r.branch_delta == pytest.approx(0.0, abs=1e-10)
    assert r.theta_II == pytest.approx(0.0, abs=1e-10)
    assert r.cat.alpha == pytest.approx(r.cat.beta, abs=1e-8)


def test_sampling_and_local_phases():
    r = run_protocol(pair_run(shots=500, seed=3, phases=(0.5, 0.25)))
    assert r.samples.records.shape == (500, 2)
    assert r.model.delta == pytest.approx(0.75)
    assert math.isfinite(r.samples.mean)


def test_fast_split_fails_and_reports_stage():
    r = run_protocol(pair_run(v_II=5.0))
    assert not r.success
    assert r.failed_stage == "II"
    assert r.to_text().rstrip().endswith("failure at stage II")
