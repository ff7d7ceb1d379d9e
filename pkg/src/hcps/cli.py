"""Command-line front end.

    hcps gate      --config <path>   synthesize the gate, write gate_report.json
    hcps validate  --config <path>   run the invariant suite, one PASS/FAIL per line
    hcps coeffs    --config <path>   coefficient table CSV over a time grid
    hcps sweep     --config <path>   gate pipeline over a parameter grid, CSV
    hcps lindblad  --config <path>   open-system fidelity over a rate-scale grid, CSV

Common flags: --out <dir> (default .), --fock N (override the cutoff),
--eta <val>|auto (override the gate phase).  The literal config name
``paper_preset`` loads the bundled feasibility parameter set.

Exit codes: 0 success, 1 configuration error, 2 numerical failure
(non-convergence or no commensurate time; the message carries the best
rational approximation found).

Outputs are deterministic: identical configs produce byte-identical JSON
and CSV files, including under parallel sweeps (results are assembled in
grid order regardless of completion order).  Floats in CSVs are written
with 17 significant digits.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .gates import GateReport, schedule_for_eta, synthesize_gate, u1, u2, u3
from .hamiltonians import (
    SystemParams, h_charge_qubit, h_drive, h_eff, h_interaction, h_nv, h_T, h_total_lab,
)
from .hilbert import Operator, SpaceLayout, basis_state, commutator, matrix_exponential
from .open_system import gate_fidelity_open, write_lindblad_csv
from .propagation import PropagationSettings, evolve_propagator, write_trajectory_csv
from .wei_norman import (
    CommensurabilityError,
    closed_form_A,
    coefficients_closed_form,
    coefficients_oracle,
    commensurate_time,
    dressed_transform,
    joint_step_unitaries,
    oracle_at_periods,
    oracle_grid,
    write_coefficients_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


def _prop_settings(cfg: RunConfig, t1: float, t0: float = 0.0) -> PropagationSettings:
    return PropagationSettings(t0=t0, t1=t1, steps=cfg.propagation.steps,
                               tolerance=cfg.propagation.tolerance,
                               max_refinements=cfg.propagation.max_refinements)


def report_to_json(report: GateReport) -> dict:
    return {
        "fidelity_avg": report.fidelity_avg,
        "phase_distance": report.phase_distance,
        "leakage": report.leakage,
        "eta_used": report.eta_used,
        "eta_paper": report.eta_paper,
        "gate_time_ns": report.gate_time_ns,
        "relabeling": report.relabeling,
        "discrepancy_notes": [dict(note) for note in report.discrepancy_notes],
    }


def _write_json(path, payload: dict):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, indent=2, sort_keys=True))
        fh.write("\n")


def _run_gate(cfg: RunConfig, fock: int, eta: float | None) -> GateReport:
    layout = SpaceLayout(fock)
    return synthesize_gate(
        cfg.system, layout,
        target_name=cfg.gate.target,
        eta=eta,
        max_n=cfg.gate.max_n,
        max_periods=cfg.gate.max_periods,
        eta_paper_m=cfg.gate.eta_paper_m,
        settings=_prop_settings(cfg, 1.0),
        condition_tol=cfg.gate.condition_tol,
        commensurability_tol=cfg.commensurability_tol,
    )


# ----------------------------------------------------------------------
# gate
# ----------------------------------------------------------------------

def cmd_gate(cfg: RunConfig, out_dir, fock: int, eta: float | None,
             trajectory: bool = False) -> int:
    report = _run_gate(cfg, fock, eta)
    _write_json(f"{out_dir}/gate_report.json", report_to_json(report))

    comm = commensurate_time(cfg.system.omega, cfg.system.Delta, cfg.gate.max_n,
                             cfg.commensurability_tol)
    periods = round(report.schedule.t_int / comm.t)
    print(f"disentangling time = {comm.t:.6f} ns (n={comm.n}, p={comm.p}); "
          f"sequence accumulates {periods} of them")
    print(f"gate_time_ns   = {report.gate_time_ns:.6f} "
          f"(t_int {report.schedule.t_int:.6f} over n={report.schedule.n}, p={report.schedule.p})")
    print(f"fidelity_avg   = {report.fidelity_avg:.9f}  vs target '{cfg.gate.target}' "
          f"(relabeling {report.relabeling})")
    print(f"phase_distance = {report.phase_distance:.3e}")
    print(f"leakage        = {report.leakage:.3e}   "
          f"top-level Fock population = {report.top_level_population:.3e}")
    print(f"eta_used       = {report.eta_used:.9f}   eta_paper = {report.eta_paper:.9f} "
          f"(ideal-form fidelity {report.fidelity_paper_eta:.6f})")
    for note in report.discrepancy_notes:
        print(f"discrepancy[{note['code']}]: {note['detail']}")
    print(f"wrote {out_dir}/gate_report.json")

    if trajectory:
        layout = SpaceLayout(fock)
        psi0 = basis_state(layout, 0, 0, 0)
        times, states = _heff_trajectory(cfg.system, layout, psi0.amplitudes,
                                         report.schedule.t_int)
        write_trajectory_csv(f"{out_dir}/trajectory.csv", times, states)
        print(f"wrote {out_dir}/trajectory.csv")
    return EXIT_OK if report.converged else EXIT_NUMERICAL


def _heff_trajectory(params: SystemParams, layout: SpaceLayout, psi0: np.ndarray,
                     duration: float, points: int = 512):
    """Sampled state trajectory of the interaction leg, via the fast
    sector-block step unitaries (export accuracy, not gate accuracy)."""
    steps = max(4096, 64 * int(math.ceil(duration)))
    stride = max(1, steps // points)
    trans = dressed_transform(layout)
    psi = trans @ psi0
    times = [0.0]
    traj = [psi0.copy()]
    k = 0
    for u in joint_step_unitaries(params, layout, duration, steps):
        psi = u @ psi
        k += 1
        if k % stride == 0 or k == steps:
            times.append(duration * k / steps)
            traj.append(trans @ psi)
    return np.array(times), np.array(traj)


# ----------------------------------------------------------------------
# validate
# ----------------------------------------------------------------------

def _validate_checks(cfg: RunConfig, fock: int):
    params = cfg.system
    layout = SpaceLayout(fock)
    rng = np.random.default_rng(20260808)

    # 1. every Hamiltonian builder Hermitian at sampled times
    defect = 0.0
    for t in (0.0, 0.3, 1.7):
        for build in (h_total_lab, h_interaction, h_drive, h_T, h_eff):
            defect = max(defect, build(params, layout, t).hermiticity_defect())
    for op in (h_charge_qubit(params, layout), h_nv(params, layout)):
        defect = max(defect, op.hermiticity_defect())
    yield ("hamiltonians hermitian", defect < 1e-12, f"max defect {defect:.2e}")

    # 2. propagator unitarity over one base period, full space; the generic
    #    integrator is exactly unitary per step, so a relaxed convergence
    #    tolerance does not soften the unitarity statement
    comm = commensurate_time(params.omega, params.Delta, cfg.gate.max_n,
                             cfg.commensurability_tol)
    cross_tol = max(1e-6, cfg.propagation.tolerance)
    res = evolve_propagator(lambda t: h_eff(params, layout, t),
                            _prop_settings(cfg, comm.t).replace(tolerance=cross_tol))
    yield ("propagator unitary", res.converged and res.unitarity_defect < 1e-9,
           f"defect {res.unitarity_defect:.2e}, converged {res.converged}")

    # 3. sector-assembled oracle propagator agrees with the direct one
    oracle = coefficients_oracle(params, comm.t, fock)
    cross = float(np.abs(oracle.numeric_unitary - res.unitary.entries).max())
    yield ("sector assembly cross-check", cross < 50 * cross_tol,
           f"max diff {cross:.2e}")

    # 4. oracle B and C reproduce the closed forms in the single-coupling limits
    worst = 0.0
    ts = np.linspace(comm.t / 12, 1.5 * comm.t, 12)
    for variant, label in ((params.replace(G=0.0), "B"), (params.replace(g=0.0), "C")):
        rows = oracle_grid(variant, ts, min(fock, 16))
        for row in rows:
            ref = coefficients_closed_form(variant, row.t)
            got = row.coeffs.B if label == "B" else row.coeffs.C
            want = ref.B if label == "B" else ref.C
            worst = max(worst, abs(got - want))
    yield ("oracle matches closed-form B, C", worst < 1e-6, f"max |diff| {worst:.2e}")

    # 5. factorization residual inside the trusted window
    yield ("factorization residual", oracle.residual < 1e-5,
           f"residual {oracle.residual:.2e} (window fock <= {oracle.fock_window})")

    # 6. the closed-form A discrepancy must fire at the disentangling time
    a_closed = closed_form_A(params, comm.t)
    fired = abs(a_closed) < 1e-9 and abs(oracle.coeffs.A) > 1e-6
    yield ("closed-form A discrepancy fires", fired,
           f"closed-form {a_closed:.2e}, oracle {oracle.coeffs.A:.6f}")

    # 7. U1, U2, U3 mutually commute
    ops = (u1(params.zeta, 0.37, layout), u2(params.xi, 0.11, layout), u3(0.6, layout))
    cdef = max(commutator(a, b).norm_max()
               for i, a in enumerate(ops) for b in ops[i + 1:])
    yield ("pulse unitaries commute", cdef < 1e-12, f"max commutator {cdef:.2e}")

    # 8. exp of a random anti-Hermitian matrix is unitary
    m = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    m = m - m.conj().T
    u = matrix_exponential(Operator(SpaceLayout(2), m))
    yield ("matrix exponential unitary", u.unitarity_defect() < 1e-12,
           f"defect {u.unitarity_defect():.2e}")

    # 9. doubling the Fock cutoff leaves the gate fidelity unchanged
    probe = oracle_at_periods(params, comm, 1, fock,
                              settings=_prop_settings(cfg, comm.t))
    fixed = PropagationSettings(t0=0.0, t1=comm.t, steps=probe.steps_used,
                                tolerance=cfg.propagation.tolerance, max_refinements=0)
    reports = []
    for n_fock in (fock, 2 * fock):
        layout_n = SpaceLayout(n_fock)
        reports.append(synthesize_gate(
            params, layout_n, target_name=cfg.gate.target,
            max_n=cfg.gate.max_n, max_periods=cfg.gate.max_periods,
            settings=fixed, condition_tol=cfg.gate.condition_tol))
    drift = abs(reports[0].fidelity_avg - reports[1].fidelity_avg)
    yield ("fock-cutoff doubling stable", drift < 1e-8,
           f"fidelity change {drift:.2e} ({fock} -> {2 * fock})")


def cmd_validate(cfg: RunConfig, out_dir, fock: int) -> int:
    all_ok = True
    for name, ok, metric in _validate_checks(cfg, fock):
        all_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {metric}")
    return EXIT_OK if all_ok else EXIT_NUMERICAL


# ----------------------------------------------------------------------
# coeffs
# ----------------------------------------------------------------------

def cmd_coeffs(cfg: RunConfig, out_dir, fock: int) -> int:
    params = cfg.system
    t_max = cfg.coeffs.t_max_periods * 2.0 * math.pi / params.omega
    pts = cfg.coeffs.points
    times = np.linspace(t_max / pts, t_max, pts)
    rows = oracle_grid(params, times, fock, settings=_prop_settings(cfg, t_max))
    path = f"{out_dir}/coefficients.csv"
    write_coefficients_csv(path, rows)
    print(f"wrote {path} ({len(rows)} rows, t up to {t_max:.6f} ns)")
    return EXIT_OK


# ----------------------------------------------------------------------
# sweep
# ----------------------------------------------------------------------

SWEEP_CSV_HEADER = ("parameter,factor,value_rad_per_ns,fidelity_avg,phase_distance,"
                    "leakage,eta_used,gate_time_ns")


def _sweep_point(cfg: RunConfig, fock: int, factor: float) -> tuple[float, GateReport]:
    base = getattr(cfg.system, cfg.sweep.parameter)
    value = base * factor
    system = cfg.system.replace(**{cfg.sweep.parameter: value})
    sub = replace(cfg, system=system)
    return value, _run_gate(sub, fock, cfg.gate.eta)


def cmd_sweep(cfg: RunConfig, out_dir, fock: int) -> int:
    factors = cfg.sweep.factors
    workers = cfg.sweep.workers or min(8, len(factors))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda f: _sweep_point(cfg, fock, f), factors))

    path = f"{out_dir}/sweep.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(SWEEP_CSV_HEADER + "\n")
        for factor, (value, rep) in zip(factors, results):
            cells = (factor, value, rep.fidelity_avg, rep.phase_distance,
                     rep.leakage, rep.eta_used, rep.gate_time_ns)
            fh.write(cfg.sweep.parameter + "," + ",".join(f"{x:.17g}" for x in cells) + "\n")

    fids = [rep.fidelity_avg for _, rep in results]
    if all(b >= a for a, b in zip(fids, fids[1:])):
        trend = "nondecreasing"
    elif all(b <= a for a, b in zip(fids, fids[1:])):
        trend = "nonincreasing"
    else:
        trend = "mixed"
    print(f"wrote {path} ({len(results)} rows); fidelity trend over "
          f"{cfg.sweep.parameter}: {trend}")
    return EXIT_OK if all(rep.converged for _, rep in results) else EXIT_NUMERICAL


# ----------------------------------------------------------------------
# lindblad
# ----------------------------------------------------------------------

def cmd_lindblad(cfg: RunConfig, out_dir, fock: int) -> int:
    if cfg.decoherence is None:
        raise ConfigError("lindblad pipeline needs a 'decoherence' section")
    params = cfg.system
    fock_dm = min(fock, 12)    # density-matrix runs cap the cutoff for memory
    layout = SpaceLayout(fock_dm)
    comm = commensurate_time(params.omega, params.Delta, cfg.gate.max_n,
                             cfg.commensurability_tol)
    periods = cfg.lindblad.periods
    oracle = oracle_at_periods(params, comm, periods, fock_dm,
                               settings=_prop_settings(cfg, comm.t))
    schedule = schedule_for_eta(params, oracle.coeffs.A, comm, periods)

    rows = []
    converged = True
    dm_tol = max(cfg.propagation.tolerance, 1e-7)   # density runs do not need 1e-8
    for factor in cfg.lindblad.scale_factors:
        res = gate_fidelity_open(params, schedule, cfg.decoherence.scaled(factor), layout,
                                 settings=_prop_settings(cfg, 1.0).replace(tolerance=dm_tol))
        rows.append((factor, res.fidelity_avg, res.trace_defect))
        converged &= res.converged
        print(f"scale {factor:g}: fidelity {res.fidelity_avg:.9f} "
              f"(loss {res.fidelity_loss:.3e}), trace defect {res.trace_defect:.2e}")
    path = f"{out_dir}/lindblad.csv"
    write_lindblad_csv(path, rows)
    print(f"wrote {path}")
    return EXIT_OK if converged else EXIT_NUMERICAL


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hcps",
        description="Hybrid-system controlled-phase gate simulator")
    parser.add_argument("--version", action="version", version=f"hcps {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("gate", "synthesize the controlled-phase gate and write the report"),
        ("validate", "run the full invariant suite"),
        ("coeffs", "export the factorization coefficient table"),
        ("sweep", "run the gate pipeline over a parameter grid"),
        ("lindblad", "open-system gate fidelity over a rate-scale grid"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True,
                       help="path to a JSON run config, or 'paper_preset'")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--fock", type=int, default=None, help="override the Fock cutoff")
        p.add_argument("--eta", default=None,
                       help="override the gate phase: a number, or 'auto'")
        if name == "gate":
            p.add_argument("--trajectory", action="store_true",
                           help="also export the interaction-leg state trajectory CSV")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        fock = args.fock if args.fock is not None else cfg.fock_cutoff
        if fock < 2:
            raise ConfigError("--fock must be at least 2")
        eta = cfg.gate.eta
        if args.eta is not None:
            eta = None if args.eta == "auto" else float(args.eta)

        if args.command == "gate":
            return cmd_gate(cfg, args.out, fock, eta, trajectory=args.trajectory)
        if args.command == "validate":
            return cmd_validate(cfg, args.out, fock)
        if args.command == "coeffs":
            return cmd_coeffs(cfg, args.out, fock)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.out, fock)
        if args.command == "lindblad":
            return cmd_lindblad(cfg, args.out, fock)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        if isinstance(exc, CommensurabilityError):
            print(f"numerical error: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
