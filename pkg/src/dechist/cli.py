"""Command-line entry point.

Exit codes: 0 success, 1 validation error, 2 numerical-invariant failure
(including failed scenario checks), 3 I/O error. Errors and warnings are
written to stderr as single-line JSON records.
"""
from __future__ import annotations

import argparse
import dataclasses
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from . import __version__
from .checks import run_checks
from .classical import LangevinParams, energy_drift, langevin_trajectory, newton_trajectory
from .config import (ClassicalConfig, ConfigError, EvolveConfig, HistoriesConfig, MasterConfig,
                     SCENARIO_CONFIGS, SweepConfig, from_dict, load_json, scenario_config, to_dict)
from .errors import DechistError, InvariantViolation, ValidationError
from .grid import gaussian_packet, mixed_density, pure_density, superpose
from .histories import (HistorySpec, PositionGates, additivity_violation,
                        consistency_measure, decoherence_functional, energy_band_partition, group_by)
from .io import (RunManifest, config_hash, dump_json, write_curve, write_outputs,
                 write_snapshot_binary, write_snapshot_csv)
from .open_system import MasterStepper, evolve_open
from .scenarios import run_scenario
from .unitary import UnitaryStepper, evolve

EXIT_OK, EXIT_VALIDATION, EXIT_INVARIANT, EXIT_IO = 0, 1, 2, 3


class _JsonLogHandler(logging.Handler):
    def __init__(self):
        super().__init__()
        self.records: list[str] = []

    def emit(self, record):
        msg = record.getMessage()
        self.records.append(msg)
        print(json.dumps({"level": record.levelname.lower(), "message": msg}), file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message, "argv")


def _emit_error(kind: str, exc: BaseException, field: str | None = None) -> None:
    rec = {"error": kind, "message": str(exc)}
    if field:
        rec["field"] = field
    print(json.dumps(rec), file=sys.stderr)


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--out", type=Path, help="output directory (default: $DECHIST_OUT or ./dechist_out)")
    p.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    p.add_argument("--threads", type=int, default=1, help="FFT/sweep worker threads, 0 = auto")
    p.add_argument("--strict", action="store_true", help="promote warnings to errors")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="dechist", description="Decoherent histories on a 1D grid.")
    parser.add_argument("--version", action="version", version=f"dechist {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("evolve", parents=[common], help="unitary trajectory")
    sub.add_parser("master", parents=[common], help="open-system trajectory")
    sub.add_parser("histories", parents=[common], help="decoherence functional of a history spec")
    sub.add_parser("classical", parents=[common], help="Newton or Langevin trajectory")
    sc = sub.add_parser("scenario", parents=[common], help="run a named scenario")
    sc.add_argument("scenario_id", choices=sorted(SCENARIO_CONFIGS))
    sub.add_parser("sweep", parents=[common], help="parameter grid over a scenario")
    sub.add_parser("check", parents=[common], help="run the invariant suite")
    return parser


# ---------------------------------------------------------------------------
# helpers


def _read(args) -> tuple[dict, bytes]:
    if args.config is None:
        return {}, b""
    raw = args.config.read_bytes()
    return load_json(args.config), raw


def _out_dir(args) -> Path:
    if args.out is not None:
        return args.out
    return Path(os.environ.get("DECHIST_OUT", "dechist_out"))


def _seeded(data: dict, seed: int | None) -> dict:
    if seed is None:
        return data
    if not 0 <= seed < 2**64:
        raise ValidationError("--seed must be an unsigned 64-bit integer", "seed")
    return {**data, "seed": seed}


def _initial_pure(cfg, grid, params):
    packets = [gaussian_packet(grid, params, p.x0, p.p0, p.sigma) for p in cfg.packets]
    psi = packets[0]
    for other in packets[1:]:
        psi = superpose(psi, other, 1, 1)
    return psi, packets


# ---------------------------------------------------------------------------
# subcommands; each returns (files, checks, config object, warnings)


def cmd_evolve(data, out: Path):
    cfg = from_dict(EvolveConfig, data)
    grid = cfg.grid.build()
    params = cfg.params.build(grid)
    psi = gaussian_packet(grid, params, cfg.packet.x0, cfg.packet.p0, cfg.packet.sigma)
    traj = evolve(UnitaryStepper(grid, params, cfg.dt), psi, cfg.t_final, cfg.sample_times)
    cols = {"t": traj.times}
    for name in ("norm", "mean_x", "mean_p", "delta_x", "delta_p", "mean_energy"):
        cols[name] = traj.series(name)
    cols["boundary_leak"] = np.array([s.boundary_leak for s in traj.snapshots])
    write_curve(cols, out / "evolve_observables.csv")
    final = {k: v for k, v in traj.snapshots[-1].observables.as_dict().items()}
    dump_json({"config": to_dict(cfg), "final": final, "warnings": traj.warnings}, out / "evolve.json")
    norm_err = float(np.max(np.abs(cols["norm"] - 1)))
    return ["evolve.json", "evolve_observables.csv"], {"norm_conservation": norm_err < 1e-10}, cfg, traj.warnings


def cmd_master(data, out: Path):
    cfg = from_dict(MasterConfig, data)
    grid = cfg.grid.build()
    params = cfg.params.build(grid)
    psi, packets = _initial_pure(cfg, grid, params)
    rho = pure_density(psi) if cfg.coherent else mixed_density([(1 / len(packets), p) for p in packets])
    stepper = MasterStepper(grid, params, cfg.dt, d_override=cfg.D)
    traj = evolve_open(stepper, rho, cfg.t_final, cfg.sample_times)
    cols = {"t": traj.times}
    for name in ("trace", "purity", "coherence_length", "hermiticity_error", "min_eigenvalue", "boundary_leak"):
        cols[name] = traj.series(name)
    write_curve(cols, out / "master_diagnostics.csv")
    files = ["master.json", "master_diagnostics.csv"]
    final = traj.snapshots[-1].rho
    if cfg.outputs.snapshots == "binary":
        write_snapshot_binary(final, out / "master_rho_final.dhqc")
        files.append("master_rho_final.dhqc")
    elif cfg.outputs.snapshots == "csv":
        write_snapshot_csv(final, out / "master_rho_final.csv")
        files.append("master_rho_final.csv")
    pur = cols["purity"]
    checks = {
        "trace_conservation": bool(np.max(np.abs(cols["trace"] - cols["trace"][0])) < 1e-10),
        "hermiticity": bool(np.max(cols["hermiticity_error"]) < 1e-10),
        "purity_nonincreasing": bool(np.all(np.diff(pur) <= 1e-12)),
    }
    dump_json({"config": to_dict(cfg), "provenance": traj.provenance, "final_purity": pur[-1],
               "warnings": traj.warnings, "checks": checks}, out / "master.json")
    return files, checks, cfg, traj.warnings


def cmd_histories(data, out: Path):
    cfg = from_dict(HistoriesConfig, data)
    grid = cfg.grid.build()
    params = cfg.params.build(grid)
    psi, _ = _initial_pure(cfg, grid, params)
    parts = []
    for i, p in enumerate(cfg.partitions):
        if p.kind == "position":
            parts.append(PositionGates(tuple(p.breakpoints)))
        else:
            parts.append(energy_band_partition(params, grid, p.edges()))
    if cfg.propagation == "unitary":
        prop, init = UnitaryStepper(grid, params, cfg.dt), psi
    else:
        prop, init = MasterStepper(grid, params, cfg.dt, d_override=cfg.D), pure_density(psi)
    spec = HistorySpec(tuple(cfg.times), tuple(parts), prop, init, cfg.prune_threshold, cfg.cap)
    dfunc = decoherence_functional(spec)
    cons = consistency_measure(dfunc)
    result = {
        "config": to_dict(cfg),
        "labels": [list(lab) for lab in dfunc.labels],
        "probabilities": dfunc.probabilities,
        "matrix_re": dfunc.matrix.real,
        "matrix_im": dfunc.matrix.imag,
        "pruned": [list(lab) for lab in dfunc.pruned],
        "epsilon": cons.epsilon,
        "epsilon_pair": None if cons.pair is None else [list(x) for x in cons.pair],
        "decoherent": cons.decoherent(),
    }
    checks = {"hermiticity": dfunc.hermiticity_error() < 1e-10}
    if cfg.coarse_grain_time is not None:
        k = cfg.coarse_grain_time
        if not 0 <= k < len(cfg.times):
            raise ConfigError("coarse_grain_time out of range", "coarse_grain_time")
        add = additivity_violation(dfunc, group_by(dfunc, lambda lab: lab[:k] + lab[k + 1:]))
        result["additivity"] = {"violation": add.violation, "bound": add.bound,
                                "group": None if add.group is None else [list(g) for g in add.group]}
        checks["additivity_bound"] = add.bound_holds
    result["checks"] = checks
    dump_json(result, out / "histories.json")
    write_curve({"index": np.arange(len(dfunc.labels), dtype=float), "probability": dfunc.probabilities},
                out / "histories_probabilities.csv")
    return ["histories.json", "histories_probabilities.csv"], checks, cfg, []


def cmd_classical(data, out: Path):
    cfg = from_dict(ClassicalConfig, data)
    if cfg.params.potential.kind == "tabulated":
        raise ConfigError("tabulated potentials are not supported by the classical subcommand",
                          "params.potential.kind")
    params = cfg.params.build()
    if cfg.langevin:
        lp = LangevinParams(params.gamma, params.temperature, cfg.seed)
        traj = langevin_trajectory(params, lp, cfg.x0, cfg.p0, cfg.t_final, cfg.dt, cfg.record_every)
        meta = lp.metadata()
    else:
        traj = newton_trajectory(params, cfg.x0, cfg.p0, cfg.t_final, cfg.dt, cfg.record_every)
        meta = {}
    e = traj.energy(params)
    write_curve({"t": traj.t, "x": traj.x, "p": traj.p, "energy": e}, out / "classical.csv")
    result = {"config": to_dict(cfg), "rng": meta, "final": {"x": traj.x[-1], "p": traj.p[-1]}}
    checks = {}
    if not cfg.langevin and len(e) >= 20 and abs(e[0]) > 0:
        drift = energy_drift(traj, params, max(2, len(e) // 10))
        result["energy_drift"] = drift
    result["checks"] = checks
    dump_json(result, out / "classical.json")
    return ["classical.json", "classical.csv"], checks, cfg, []


def _run_scenario_to(data: dict, scenario: str, out: Path, prefix: str | None = None):
    cfg = scenario_config(scenario, data)
    report = run_scenario(cfg)
    outputs = getattr(cfg, "outputs", None)
    files = write_outputs(report, out, snapshots=outputs.snapshots if outputs else "binary",
                          curves=outputs.curves if outputs else True, prefix=prefix)
    return files, report.checks, cfg, report.warnings, report


def cmd_scenario(data, out: Path, scenario: str, seed: int | None):
    if "seed" in {f.name for f in dataclasses.fields(SCENARIO_CONFIGS[scenario])}:
        data = _seeded(data, seed)
    files, checks, cfg, warnings, _ = _run_scenario_to(data, scenario, out)
    return files, checks, cfg, warnings


def _set_path(data: dict, dotted: str, value):
    keys = dotted.split(".")
    cur = data
    for k in keys[:-1]:
        cur = cur.setdefault(k, {})
        if not isinstance(cur, dict):
            raise ConfigError(f"cannot set {dotted}: {k} is not an object", dotted)
    cur[keys[-1]] = value


def cmd_sweep(data, out: Path, threads: int):
    cfg = from_dict(SweepConfig, data)
    names = list(cfg.parameters)
    points = list(itertools.product(*(cfg.parameters[n] for n in names)))
    configs = []
    for pt in points:
        d = json.loads(json.dumps(cfg.base))
        for n, v in zip(names, pt):
            _set_path(d, n, v)
        configs.append(d)
    # validate everything before running anything
    for d in configs:
        scenario_config(cfg.scenario, d)

    def job(i):
        sub = out / f"point_{i:03d}"
        return _run_scenario_to(configs[i], cfg.scenario, sub)

    workers = os.cpu_count() if threads == 0 else max(1, threads)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(job, range(len(points))))
    files, checks, rows, warnings = [], {}, [], []
    for i, (pt, (f, c, _, w, report)) in enumerate(zip(points, results)):
        files += [f"point_{i:03d}/{x}" for x in f]
        checks.update({f"point_{i:03d}.{k}": v for k, v in c.items()})
        warnings += [f"point_{i:03d}: {x}" for x in w]
        rows.append({"point": i, "parameters": dict(zip(names, pt)),
                     "scalars": {k: s.value for k, s in report.scalars.items()}, "passed": report.passed})
    dump_json({"config": to_dict(cfg), "points": rows}, out / "sweep.json")
    return ["sweep.json"] + files, checks, cfg, warnings


def cmd_check(out: Path):
    results = run_checks()
    dump_json({"checks": [r.as_dict() for r in results]}, out / "check.json")
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.value:.6g} ({r.tolerance}) {r.seconds:.2f}s")
    return ["check.json"], {r.name: r.passed for r in results}, None, []


# ---------------------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    handler = _JsonLogHandler()
    root = logging.getLogger("dechist")
    root.addHandler(handler)
    root.setLevel(logging.WARNING)
    root.propagate = False
    try:
        return _main(argv, handler)
    except InvariantViolation as exc:
        _emit_error("invariant", exc, exc.check)
        return EXIT_INVARIANT
    except ValidationError as exc:
        _emit_error("validation", exc, exc.field)
        return EXIT_VALIDATION
    except OSError as exc:
        _emit_error("io", exc)
        return EXIT_IO
    except DechistError as exc:
        _emit_error("validation", exc)
        return EXIT_VALIDATION
    finally:
        root.removeHandler(handler)


def _main(argv, handler: _JsonLogHandler) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 0:
        raise ValidationError("--threads must be >= 0", "threads")
    data, raw = _read(args)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    workers = -1 if args.threads == 0 else args.threads
    with sfft.set_workers(workers):
        if args.command == "evolve":
            files, checks, cfg, warnings = cmd_evolve(data, out)
        elif args.command == "master":
            files, checks, cfg, warnings = cmd_master(data, out)
        elif args.command == "histories":
            files, checks, cfg, warnings = cmd_histories(data, out)
        elif args.command == "classical":
            files, checks, cfg, warnings = cmd_classical(_seeded(data, args.seed), out)
        elif args.command == "scenario":
            files, checks, cfg, warnings = cmd_scenario(data, out, args.scenario_id, args.seed)
        elif args.command == "sweep":
            files, checks, cfg, warnings = cmd_sweep(data, out, args.threads)
        else:
            files, checks, cfg, warnings = cmd_check(out)
    warnings = list(dict.fromkeys(list(warnings) + handler.records))
    echoed = to_dict(cfg) if cfg is not None else {}
    manifest = RunManifest(args.command, config_hash(raw) if raw else config_hash(echoed), files,
                           {k: bool(v) for k, v in checks.items()})
    manifest.verify(out)
    dump_json({**manifest.as_dict(), "config": echoed, "warnings": warnings}, out / "manifest.json")
    if not all(checks.values()):
        failed = sorted(k for k, v in checks.items() if not v)
        _emit_error("invariant", RuntimeError(f"checks failed: {', '.join(failed)}"), failed[0])
        return EXIT_INVARIANT
    if args.strict and warnings:
        _emit_error("invariant", RuntimeError(f"warning promoted by --strict: {warnings[0]}"), "strict")
        return EXIT_INVARIANT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
