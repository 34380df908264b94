"""Command-line front end.

Exit codes: 0 success, 1 simulation or protocol failure, 2 usage or
configuration error.  CSV files go to the output directory (``--output-dir``,
else ``$CATTRAP_OUTPUT_DIR``, else the config's ``[output] dir``).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from dataclasses import replace

from . import config as cfgmod
from .config import ConfigError, RunConfig, parse_range
from .dynamics import DYNAMICS_SPACING, PropagationError, sweep_csv, theta_vs_speed
from .hamiltonian import SolverError, scan_levels
from .interference import (
    MeasurementModel,
    expectation_product,
    fringe_scan,
    marginal_distribution,
    sample_outcomes,
)
from .protocol import (
    BracketError,
    ProtocolRun,
    dephasing_metric,
    doublet_metric,
    find_critical_velocity,
    retention_metric,
    run_protocol,
    theta_metric,
)
from .qgrid import Grid
from .units import emit_table1, table1_csv, table1_text

log = logging.getLogger("cattrap")

SPECTRUM_SPACING = 0.1


class SimulationFailure(RuntimeError):
    pass


def write_atomic(directory: str, name: str, text: str) -> str:
    """Write ``text`` to ``directory/name`` via a temporary file and rename."""
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, name)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _common(p):
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--preset", choices=cfgmod.PRESET_NAMES, help="published parameter set")
    p.add_argument("--output-dir", help="directory for CSV output")
    p.add_argument("--threads", type=int, help="cap on worker processes / threads")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cattrap", description="Cat-state preparation in movable microtraps")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="adiabatic levels versus separation")
    _common(p)
    p.add_argument("--stage", required=True, choices=("I", "II", "III"))
    p.add_argument("--d", help="separations, e.g. 0:3:31")
    p.add_argument("--k", type=int, help="number of levels")
    p.add_argument("--spacing", type=float, help=f"grid spacing (default {SPECTRUM_SPACING})")

    p = sub.add_parser("sweep", help="split at a list of speeds and project on final levels")
    _common(p)
    p.add_argument("--stage", required=True, choices=("II", "III"))
    p.add_argument("--v", help="speeds, e.g. 0.02:1.0:log20")
    p.add_argument("--dt", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--spacing", type=float, help=f"grid spacing (default {DYNAMICS_SPACING})")

    p = sub.add_parser("protocol", help="run stages I-IV end to end")
    _common(p)
    p.add_argument("--v-I", dest="v_I", type=float)
    p.add_argument("--v-II", dest="v_II", type=float)
    p.add_argument("--v-III", dest="v_III", type=float)
    p.add_argument("--mode", choices=("parallel", "serial-splitting"))
    p.add_argument("--handoff", choices=("sudden", "adiabatic"))
    p.add_argument("--floor", type=float, help="retention floor per stage")
    p.add_argument("--phases", help="per-atom phases, comma separated")
    p.add_argument("--delta-scan", type=int, help="points in the fringe scan")
    p.add_argument("--shots", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--spacing", type=float)

    p = sub.add_parser("table1", help="parameter table in physical units")
    _common(p)
    p.add_argument("--species", help="comma separated species names (Na, Rb)")
    p.add_argument("--custom-species", action="append", help="name:mass_u:scattering_a0")

    p = sub.add_parser("interfere", help="coincidence statistics of a cat")
    _common(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--visibility", type=float, help="use normalised amplitudes with this visibility")
    p.add_argument("--theta", type=float)
    p.add_argument("--n-atoms", type=int)
    p.add_argument("--delta-scan", type=int)
    p.add_argument("--subset", help="1-based atom numbers, e.g. 1,2")
    p.add_argument("--shots", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("criticalv", help="locate a critical speed by bisection")
    _common(p)
    p.add_argument("--stage", required=True, choices=("II", "III"))
    p.add_argument("--metric", required=True, choices=("retention", "doublet", "theta", "dephasing"))
    p.add_argument("--bracket", required=True, help="lo:hi")
    p.add_argument("--rel-width", type=float, default=0.05)
    p.add_argument("--dt", type=float)
    p.add_argument("--spacing", type=float)
    return ap


_OVERRIDES = {
    "k": "k", "dt": "dt", "spacing": "spacing", "v_I": "v_I", "v_II": "v_II", "v_III": "v_III",
    "mode": "mode", "handoff": "handoff", "floor": "floor", "delta_scan": "delta_scan", "shots": "shots",
    "seed": "seed", "alpha": "alpha", "beta": "beta", "visibility": "visibility", "theta": "theta",
    "n_atoms": "n_atoms", "threads": "threads",
}


def effective_config(args) -> RunConfig:
    """Preset, then config file, then flags."""
    cfg = cfgmod.preset(args.preset) if args.preset else RunConfig()
    if args.config:
        with open(args.config) as fh:
            cfg = cfgmod.loads(fh.read(), cfg)
    changes = {}
    for flag, attr in _OVERRIDES.items():
        val = getattr(args, flag, None)
        if val is not None:
            changes[attr] = val
    if getattr(args, "d", None):
        changes["d_range"] = parse_range(args.d)
    if getattr(args, "v", None):
        changes["v"] = parse_range(args.v)
    if getattr(args, "phases", None):
        changes["phases"] = tuple(float(x) for x in args.phases.split(","))
    if getattr(args, "subset", None):
        changes["subset"] = tuple(int(x) for x in args.subset.split(","))
    if getattr(args, "species", None):
        changes["species"] = tuple(s.strip() for s in args.species.split(",") if s.strip())
    if getattr(args, "custom_species", None):
        changes["custom_species"] = tuple(args.custom_species)
        if not getattr(args, "species", None):
            changes["species"] = ()
    return replace(cfg, **changes).validate()


def cmd_spectrum(cfg: RunConfig, args, out: str) -> int:
    trap = cfg.stages[args.stage]
    spacing = cfg.spacing or SPECTRUM_SPACING
    grid = Grid.for_trap(trap, d_max=max(cfg.d_range), spacing=spacing)
    curve = scan_levels(trap, cfg.d_range, cfg.k, grid)
    path = write_atomic(out, f"spectrum_stage{args.stage}.csv", curve.to_csv())
    print(f"{len(curve.d)} separations, {curve.levels} levels, grid {grid.points} points -> {path}")
    if curve.ambiguous:
        print(f"tracking ambiguities at {len(curve.ambiguous)} points (resolved by energy order)")
    return 0


def cmd_sweep(cfg: RunConfig, args, out: str) -> int:
    trap = cfg.stages[args.stage]
    rows = theta_vs_speed(
        trap, cfg.v, cfg.d_start, cfg.d_end, cfg.k, cfg.dt, cfg.spacing or DYNAMICS_SPACING, workers=cfg.threads
    )
    path = write_atomic(out, f"sweep_stage{args.stage}.csv", sweep_csv(rows))
    for r in rows:
        print(f"v={r.v:.5g}  p0={r.projections[0]:.6f}  theta={r.theta:.6g}  visibility={r.visibility:.6f}")
    print(f"-> {path}")
    return 0


def cmd_protocol(cfg: RunConfig, args, out: str) -> int:
    stages = cfg.stages
    run = ProtocolRun(
        stages["I"], stages["II"], stages["III"], cfg.v_I, cfg.v_II, cfg.v_III, cfg.d_end, cfg.phases,
        cfg.mode, cfg.handoff, cfg.dt, cfg.spacing or DYNAMICS_SPACING, cfg.floor,
        fringe_points=cfg.delta_scan, shots=cfg.shots, seed=cfg.seed,
    )
    rep = run_protocol(run)
    text = rep.to_text()
    write_atomic(out, "protocol_report.txt", text)
    write_atomic(out, "protocol_metrics.csv", rep.metrics_csv())
    write_atomic(out, "protocol_fringe.csv", rep.fringe.to_csv())
    if rep.samples is not None:
        write_atomic(out, "protocol_outcomes.csv", rep.samples.to_csv())
    sys.stdout.write(text)
    if not rep.success:
        print(f"protocol failed at stage {rep.failed_stage}", file=sys.stderr)
        return 1
    return 0


def cmd_table1(cfg: RunConfig, args, out: str) -> int:
    rows = emit_table1(cfg.species_objects())
    path = write_atomic(out, "table1.csv", table1_csv(rows))
    sys.stdout.write(table1_text(rows))
    print(f"-> {path}")
    return 0


def _model(cfg: RunConfig) -> MeasurementModel:
    if cfg.visibility is not None:
        return MeasurementModel.from_visibility(cfg.n_atoms, cfg.visibility, cfg.theta)
    if cfg.alpha is None or cfg.beta is None:
        raise ConfigError("interfere: give --alpha and --beta, or --visibility")
    try:
        return MeasurementModel(cfg.n_atoms, cfg.alpha, cfg.beta, cfg.theta)
    except ValueError as exc:
        raise ConfigError(f"interfere: {exc}") from exc


def cmd_interfere(cfg: RunConfig, args, out: str) -> int:
    model = _model(cfg)
    fringe = fringe_scan(model, cfg.delta_scan)
    write_atomic(out, "fringe.csv", fringe.to_csv())
    print(f"visibility {model.visibility:.6f}  fringe amplitude {fringe.amplitude:.6f}")
    if cfg.subset:
        idx = [i - 1 for i in cfg.subset]
        try:
            dist = marginal_distribution(model, idx)
        except ValueError as exc:
            raise ConfigError(f"interfere.subset: {exc}") from exc
        lines = ["outcome,probability"]
        for key, p in dist.items():
            lines.append(f"{' '.join('%+d' % s for s in key)},{p:.17g}")
        write_atomic(out, "marginal.csv", "\n".join(lines) + "\n")
        print(f"marginal over atoms {','.join(map(str, cfg.subset))}:")
        for line in lines[1:]:
            print("  " + line)
    if cfg.shots:
        st = sample_outcomes(model, cfg.shots, cfg.seed)
        write_atomic(out, "outcomes.csv", st.to_csv())
        print(f"{cfg.shots} shots (seed {cfg.seed}): product mean {st.mean:.6f} +- {st.stderr:.6f}; exact {expectation_product(model):.6f}")
    return 0


def cmd_criticalv(cfg: RunConfig, args, out: str) -> int:
    trap = cfg.stages[args.stage]
    spacing = cfg.spacing or DYNAMICS_SPACING
    common = dict(d_start=cfg.d_start, d_end=cfg.d_end, dt=cfg.dt, spacing=spacing)
    if args.metric == "retention":
        metric = retention_metric(trap, **common)
    elif args.metric == "doublet":
        metric = doublet_metric(trap, **common)
    elif args.metric == "theta":
        metric = theta_metric(trap, **common)
    else:
        metric = dephasing_metric(trap, **common)
    lo, hi = (float(x) for x in args.bracket.split(":"))
    res = find_critical_velocity(metric, (lo, hi), args.rel_width)
    lines = ["v,value"] + [f"{v:.17g},{val:.17g}" for v, val in res.evaluations]
    write_atomic(out, f"criticalv_{args.metric}_stage{args.stage}.csv", "\n".join(lines) + "\n")
    print(f"critical speed ({metric.name} threshold {metric.threshold:g}): {res.v:.5g}  bracket [{res.lower:.5g}, {res.upper:.5g}]")
    return 0


COMMANDS = {
    "spectrum": cmd_spectrum,
    "sweep": cmd_sweep,
    "protocol": cmd_protocol,
    "table1": cmd_table1,
    "interfere": cmd_interfere,
    "criticalv": cmd_criticalv,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = effective_config(args)
        out = cfg.resolved_output_dir(args.output_dir)
        if args.threads:
            import numba

            numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
        return COMMANDS[args.command](cfg, args, out)
    except (ConfigError, OSError) as exc:
        print(f"cattrap: error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, PropagationError, BracketError, SimulationFailure) as exc:
        print(f"cattrap: simulation failed: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        # precondition violations on validated-looking input (e.g. trap hierarchy)
        print(f"cattrap: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
