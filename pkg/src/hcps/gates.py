"""Three-step controlled-phase gate: composition, calibration and scoring.

The sequence is three commuting rotations,

    U1 = exp(i zeta sigma_x tau1 / 2)   charge qubit, Josephson rotation
    U2 = exp(i xi S_x tau2 / 2)         spin qubit, microwave rotation
    U3 = exp(-i A sigma_x S_x)          joint phase from the resonator bus

and under the phase conditions zeta*tau1/2 = xi*tau2/2 = A = eta (each mod
2 pi) it collapses to exp[i eta (sigma_x + S_x - sigma_x S_x)].  In the
dressed basis (joint x eigenbasis, order gg, ge, eg, ee with g the -1
eigenstate) that is diag(e^{-3i eta}, e^{i eta}, e^{i eta}, e^{i eta}), a
controlled-phase gate with corner phase e^{-4i eta} up to a global factor.

eta is therefore the whole game:

* e^{-4i eta} = -1, i.e. eta = pi/4 + k pi/2, gives the controlled-Z matrix
  diag(1, 1, 1, -1);
* eta = pi/8 + m pi/2, the branch this construction is usually quoted
  with, gives corner phase -i instead, a controlled-S-dagger pattern.
  Both values are computed and reported so the conflict is visible.

calibrate_eta adjudicates by direct scan; compose_sequence builds the gate
with the numerically extracted joint phase A and scores it.  The corner
carrying the special phase is a labeling convention (gg here, ee in the
usual controlled-Z matrix); fidelity and phase distance are optimized over
the deterministic relabeling g <-> e on both qubits and the choice is
reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .hamiltonians import SystemParams
from .hilbert import Operator, SLOT_CHARGE, SLOT_SPIN, SpaceLayout, build_spin_ops, expm_matrix
from .propagation import PropagationSettings
from .wei_norman import (
    CommensurateTime,
    OracleResult,
    closed_form_A,
    commensurate_time,
    factorized_propagator,
    oracle_at_periods,
)

TWO_PI = 2.0 * math.pi

ETA_PAPER_BASE = math.pi / 8.0   # quoted branch eta = pi/8 + m pi/2

UNITARY_INPUT_TOL = 1e-6


class ScheduleConditionError(ValueError):
    """A phase condition of the composed sequence is violated beyond tolerance."""


@dataclass(frozen=True)
class PulseSchedule:
    """Durations and phase bookkeeping for one gate run.

    n and p witness commensurability of the interaction time t_int; m is the
    branch index of the quoted eta = pi/8 + m pi/2 comparison value.
    """

    tau1: float
    tau2: float
    t_int: float
    eta: float
    m: int = 0
    n: int = 1
    p: int = 1

    def __post_init__(self):
        if self.tau1 <= 0 or self.tau2 <= 0 or self.t_int <= 0:
            raise ValueError("all schedule durations must be positive")


class EtaCalibration(NamedTuple):
    eta_star: float
    fidelity_star: float
    relabeling: str
    eta_paper: float
    fidelity_paper: float


@dataclass(frozen=True)
class GateReport:
    """Synthesized two-qubit block, its score against the target, diagnostics."""

    synthesized: np.ndarray = field(repr=False)
    target: np.ndarray = field(repr=False)
    fidelity_avg: float
    phase_distance: float
    leakage: float
    eta_used: float
    eta_paper: float
    gate_time_ns: float
    relabeling: str
    discrepancy_notes: tuple[dict, ...]
    diagnostics: str
    schedule: PulseSchedule
    oracle_residual: float
    fidelity_paper_eta: float
    top_level_population: float = 0.0
    converged: bool = True


# ----------------------------------------------------------------------
# elementary unitaries
# ----------------------------------------------------------------------

def u1(zeta: float, tau: float, layout: SpaceLayout) -> Operator:
    """Charge-qubit rotation exp(i zeta sigma_x tau / 2)."""
    sx = build_spin_ops(layout, SLOT_CHARGE).x
    return Operator(layout, expm_matrix(sx.entries, 0.5j * zeta * tau))


def u2(xi: float, tau: float, layout: SpaceLayout) -> Operator:
    """Spin-qubit rotation exp(i xi S_x tau / 2)."""
    Sx = build_spin_ops(layout, SLOT_SPIN).x
    return Operator(layout, expm_matrix(Sx.entries, 0.5j * xi * tau))


def u3(a_phase: float, layout: SpaceLayout) -> Operator:
    """Joint phase exp(-i A sigma_x S_x); equals cos A - i sin A sigma_x S_x."""
    sx = build_spin_ops(layout, SLOT_CHARGE).x.entries
    Sx = build_spin_ops(layout, SLOT_SPIN).x.entries
    return Operator(layout, expm_matrix(Sx @ sx, -1j * a_phase))


# ----------------------------------------------------------------------
# dressed basis and targets
# ----------------------------------------------------------------------

def dressed_basis() -> np.ndarray:
    """Columns map dressed order (gg, ge, eg, ee) to lab (spin x charge) coords.

    g = (|up> - |down>)/sqrt(2) is the -1 eigenstate of the x operator on
    each qubit, e the +1 eigenstate; first letter is the spin qubit.
    """
    q = np.array([[1.0, 1.0], [-1.0, 1.0]], dtype=np.complex128) / math.sqrt(2.0)
    return np.kron(q, q)


def eq_phase_form(eta: float) -> np.ndarray:
    """Ideal dressed-basis gate exp[i eta (sx + Sx - sx Sx)] = diag pattern."""
    return np.diag(np.exp(1j * eta * np.array([-3.0, 1.0, 1.0, 1.0])))


def ideal_cp_target() -> np.ndarray:
    """Controlled-Z pattern diag(1, 1, 1, -1)."""
    return np.diag([1.0, 1.0, 1.0, -1.0]).astype(np.complex128)


def controlled_minus_i_target() -> np.ndarray:
    """Controlled phase with -i corner, the gate the quoted eta branch realizes."""
    return np.diag([1.0, 1.0, 1.0, -1.0j]).astype(np.complex128)


TARGETS = {
    "cz": ideal_cp_target,
    "controlled_minus_i": controlled_minus_i_target,
}

_RELABEL = np.eye(4)[[3, 2, 1, 0]].astype(np.complex128)   # g <-> e on both qubits


def relabel_corners(u: np.ndarray) -> np.ndarray:
    return _RELABEL @ u @ _RELABEL


# ----------------------------------------------------------------------
# scoring
# ----------------------------------------------------------------------

def _check_unitary(u: np.ndarray, name: str):
    u = np.asarray(u)
    d = u.shape[0]
    defect = np.abs(u.conj().T @ u - np.eye(d)).max()
    if defect >= UNITARY_INPUT_TOL:
        raise ValueError(f"{name} is not unitary to {UNITARY_INPUT_TOL} (defect {defect:.3e})")


def gate_fidelity(u: np.ndarray, v: np.ndarray) -> float:
    """Average gate fidelity (|Tr(V'U)|^2 + d) / (d(d+1)); phase invariant."""
    _check_unitary(u, "first argument")
    _check_unitary(v, "second argument")
    d = u.shape[0]
    tr = np.trace(v.conj().T @ u)
    return float((abs(tr) ** 2 + d) / (d * (d + 1)))


def phase_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Frobenius distance min over a global phase of the first argument."""
    _check_unitary(u, "first argument")
    _check_unitary(v, "second argument")
    d = u.shape[0]
    tr = abs(np.trace(v.conj().T @ u))
    return float(math.sqrt(max(0.0, 2.0 * d - 2.0 * tr)))


def _best_relabeling(u: np.ndarray, target: np.ndarray) -> tuple[float, float, str]:
    """(fidelity, phase_distance, label) optimized over the corner relabeling."""
    fid_id = gate_fidelity(u, target)
    fid_sw = gate_fidelity(relabel_corners(u), target)
    if fid_sw > fid_id:
        return fid_sw, phase_distance(relabel_corners(u), target), "swap_ge"
    return fid_id, phase_distance(u, target), "identity"


def vacuum_block(u_full: Operator) -> tuple[np.ndarray, float]:
    """4x4 two-qubit block at resonator vacuum, plus worst-case leakage.

    Leakage of a column is the population the corresponding vacuum input
    loses to nonzero Fock states; the maximum over the four inputs is
    returned.
    """
    n = u_full.layout.fock_cutoff
    idx = np.arange(4) * n     # (spin, charge) x |vac>
    block = u_full.entries[np.ix_(idx, idx)]
    leakage = float(max(0.0, 1.0 - (np.abs(block) ** 2).sum(axis=0).min()))
    return block, leakage


def top_level_population(u_full: Operator) -> float:
    """Worst population at the highest retained Fock level over vacuum inputs.

    The truncation proxy every pipeline run reports: if the evolution from
    the gate-relevant inputs reaches the top of the ladder, the cutoff is
    too small to trust.
    """
    n = u_full.layout.fock_cutoff
    cols = np.arange(4) * n
    rows = np.arange(4) * n + (n - 1)
    return float((np.abs(u_full.entries[np.ix_(rows, cols)]) ** 2).sum(axis=0).max())


# ----------------------------------------------------------------------
# eta calibration
# ----------------------------------------------------------------------

def _relabeled_fidelity(eta: float, target: np.ndarray) -> float:
    u = eq_phase_form(eta)
    return max(gate_fidelity(u, target), gate_fidelity(relabel_corners(u), target))


def calibrate_eta(target: np.ndarray, *, grid: int = 768, refine_tol: float = 1e-10,
                  eta_paper_m: int = 0) -> EtaCalibration:
    """Scan eta in [0, pi) maximizing ideal-form fidelity against the target.

    Grid scan followed by golden-section refinement; the quoted branch
    eta = pi/8 + m pi/2 is evaluated side by side for comparison.
    """
    etas = np.linspace(0.0, math.pi, grid, endpoint=False)
    scores = [_relabeled_fidelity(e, target) for e in etas]
    k = int(np.argmax(scores))
    lo = etas[max(0, k - 1)]
    hi = etas[min(grid - 1, k + 1)]

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = _relabeled_fidelity(c, target), _relabeled_fidelity(d, target)
    while b - a > refine_tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = _relabeled_fidelity(c, target)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = _relabeled_fidelity(d, target)
    eta_star = 0.5 * (a + b)
    fid_star = _relabeled_fidelity(eta_star, target)

    eta_paper = ETA_PAPER_BASE + eta_paper_m * math.pi / 2.0
    u_paper = eq_phase_form(eta_paper)
    fid_paper = max(gate_fidelity(u_paper, target),
                    gate_fidelity(relabel_corners(u_paper), target))
    relabeling = ("swap_ge"
                  if gate_fidelity(relabel_corners(eq_phase_form(eta_star)), target)
                  >= gate_fidelity(eq_phase_form(eta_star), target) else "identity")
    return EtaCalibration(eta_star=float(eta_star), fidelity_star=fid_star,
                          relabeling=relabeling, eta_paper=eta_paper,
                          fidelity_paper=fid_paper)


# ----------------------------------------------------------------------
# schedule construction and composition
# ----------------------------------------------------------------------

def wrap_angle(x: float, period: float = TWO_PI) -> float:
    """Wrap into [-period/2, period/2)."""
    return (x + 0.5 * period) % period - 0.5 * period


def duration_for_phase(coef: float, eta: float) -> float:
    """Smallest tau > 0 with coef * tau / 2 = eta (mod 2 pi).

    Exploits 2 pi periodicity of the accumulated phase, so a negative coef
    (for example xi = -Omega) still admits a positive duration.
    """
    if coef == 0.0:
        raise ValueError("cannot accumulate a phase with a zero rotation rate")
    period = 2.0 * TWO_PI / abs(coef)
    tau = (2.0 * eta / coef) % period
    if tau <= 0.0:
        tau += period
    return tau


def schedule_for_eta(params: SystemParams, eta: float, comm: CommensurateTime,
                     periods: int = 1, m: int = 0) -> PulseSchedule:
    """Durations realizing the phase conditions for a given eta.

    The two qubit rotations get independent durations; the single shared
    duration of the idealized description would force zeta = xi, which
    realistic parameter sets violate.
    """
    if periods < 1:
        raise ValueError("periods must be >= 1")
    return PulseSchedule(
        tau1=duration_for_phase(params.zeta, eta),
        tau2=duration_for_phase(params.xi, eta),
        t_int=comm.t * periods,
        eta=eta,
        m=m,
        n=comm.n * periods,
        p=comm.p * periods,
    )


def _condition_report(params: SystemParams, schedule: PulseSchedule,
                      oracle_A: float) -> list[tuple[str, float]]:
    return [
        ("zeta*tau1/2 = eta (mod 2pi)",
         abs(wrap_angle(params.zeta * schedule.tau1 / 2.0 - schedule.eta))),
        ("xi*tau2/2 = eta (mod 2pi)",
         abs(wrap_angle(params.xi * schedule.tau2 / 2.0 - schedule.eta))),
        ("A(t_int) = eta",
         abs(wrap_angle(oracle_A - schedule.eta))),
    ]


def compose_sequence(schedule: PulseSchedule, params: SystemParams, layout: SpaceLayout, *,
                     target: np.ndarray | None = None,
                     oracle: OracleResult | None = None,
                     settings: PropagationSettings | None = None,
                     calibration: EtaCalibration | None = None,
                     condition_tol: float = 1e-6,
                     strict: bool = True) -> GateReport:
    """Compose U1 U2 U3, dress, and score against the controlled-phase target.

    U3 comes from the factorized propagator with oracle coefficients at
    t_int; leakage is measured on the brute-force propagator underlying the
    oracle.  With strict=True a violated phase condition raises
    ScheduleConditionError naming the equality and the miss; with
    strict=False it is demoted to a discrepancy note and the gate is scored
    anyway (used to audit externally imposed eta values).
    """
    target = ideal_cp_target() if target is None else np.asarray(target, dtype=np.complex128)
    if oracle is None:
        comm = commensurate_time(params.omega, params.Delta, max_n=max(64, schedule.n))
        periods = max(1, round(schedule.t_int / comm.t))
        if abs(periods * comm.t - schedule.t_int) > 1e-9 * max(1.0, schedule.t_int):
            raise ValueError(
                f"t_int = {schedule.t_int} is not an integer multiple of the base "
                f"disentangling time {comm.t}")
        oracle = oracle_at_periods(params, comm, periods, layout.fock_cutoff,
                                   settings=settings)

    notes: list[dict] = []
    failures = [(name, miss) for name, miss in
                _condition_report(params, schedule, oracle.coeffs.A) if miss > condition_tol]
    if failures:
        detail = "; ".join(f"{name} violated by {miss:.3e}" for name, miss in failures)
        if strict:
            raise ScheduleConditionError(detail)
        notes.append({"code": "schedule_condition_violated", "detail": detail})

    u_seq = u1(params.zeta, schedule.tau1, layout) \
        @ u2(params.xi, schedule.tau2, layout) \
        @ factorized_propagator(oracle.coeffs, layout)
    block, _ = vacuum_block(u_seq)
    numeric_op = Operator(layout, oracle.numeric_unitary)
    _, leakage = vacuum_block(numeric_op)
    top_pop = top_level_population(numeric_op)

    v = dressed_basis()
    dressed = v.conj().T @ block @ v
    fidelity, distance, relabeling = _best_relabeling(dressed, target)

    calibration = calibration or calibrate_eta(target, eta_paper_m=schedule.m)

    a_closed = closed_form_A(params, schedule.t_int)
    if abs(a_closed) < 1e-9 and abs(oracle.coeffs.A) > 1e-6:
        notes.append({
            "code": "closed_form_A_vanishes",
            "detail": (f"closed-form A({schedule.t_int:.6g} ns) = {a_closed:.3e} while the "
                       f"extracted joint phase is {oracle.coeffs.A:.9g}; the closed form is "
                       "dimensionally a rate and yields zero at every disentangling time, "
                       "so gate synthesis rests on the numerically extracted phase"),
        })
    if calibration.fidelity_paper < 0.999:
        notes.append({
            "code": "quoted_eta_misses_target",
            "detail": (f"eta = pi/8 + m pi/2 = {calibration.eta_paper:.9g} scores ideal-form "
                       f"fidelity {calibration.fidelity_paper:.6f} against this target "
                       f"(corner phase -i, not -1); calibrated eta* = "
                       f"{calibration.eta_star:.9g} scores {calibration.fidelity_star:.6f}"),
        })
    if abs(oracle.coeffs.A) < 1e-6 and schedule.t_int > 0:
        notes.append({
            "code": "no_entangling_phase",
            "detail": ("the joint phase does not accumulate at disentangling times unless "
                       "Delta = omega; with these parameters the sequence cannot entangle"),
        })
    if oracle.flagged:
        notes.append({
            "code": "factorization_residual_flagged",
            "detail": f"oracle residual {oracle.residual:.3e} above threshold",
        })

    diagnostics = (
        f"eta_used={schedule.eta:.9g}, eta_star={calibration.eta_star:.9g}, "
        f"A_oracle={oracle.coeffs.A:.9g}, A_closed_form={a_closed:.3e}, "
        f"|B|={abs(oracle.coeffs.B):.3e}, |C|={abs(oracle.coeffs.C):.3e}, "
        f"residual={oracle.residual:.3e}, top_level_population={top_pop:.3e}, "
        f"relabeling={relabeling}"
    )
    return GateReport(
        synthesized=dressed,
        target=target,
        fidelity_avg=fidelity,
        phase_distance=distance,
        leakage=leakage,
        eta_used=schedule.eta,
        eta_paper=calibration.eta_paper,
        gate_time_ns=schedule.tau1 + schedule.tau2 + schedule.t_int,
        relabeling=relabeling,
        discrepancy_notes=tuple(notes),
        diagnostics=diagnostics,
        schedule=schedule,
        oracle_residual=oracle.residual,
        fidelity_paper_eta=calibration.fidelity_paper,
        top_level_population=top_pop,
        converged=oracle.converged,
    )


def _pick_periods(a_base: float, eta_target: float, max_periods: int,
                  grid_period: float) -> int:
    """Integer period count whose accumulated phase best matches the target.

    grid_period is the equivalence period of the target phase: pi/2 when any
    corner branch of the controlled-phase pattern is acceptable (projective
    equivalence), 2 pi when the exact eta value must be met.
    """
    if a_base == 0.0:
        return 1
    best_k, best_miss = 1, float("inf")
    for k in range(1, max_periods + 1):
        miss = abs(wrap_angle(k * a_base - eta_target, grid_period))
        if miss < best_miss - 1e-15:
            best_k, best_miss = k, miss
    return best_k


def synthesize_gate(params: SystemParams, layout: SpaceLayout, *,
                    target_name: str = "cz",
                    eta: float | None = None,
                    max_n: int = 64,
                    max_periods: int = 64,
                    eta_paper_m: int = 0,
                    settings: PropagationSettings | None = None,
                    condition_tol: float = 1e-6,
                    commensurability_tol: float = 1e-9) -> GateReport:
    """End-to-end pipeline: disentangling time, oracle phase, composition.

    With eta = None the schedule phase is the accumulated joint phase at the
    best integer number of disentangling periods (up to max_periods), judged
    against the calibrated eta* modulo the pi/2 equivalence of the target
    pattern.  A forced eta fixes the qubit rotations to that value and the
    run is scored as-is, letting condition violations surface in the report.
    """
    if target_name not in TARGETS:
        raise ValueError(f"unknown target {target_name!r}; choose from {sorted(TARGETS)}")
    target = TARGETS[target_name]()
    comm = commensurate_time(params.omega, params.Delta, max_n=max_n,
                             tol=commensurability_tol)
    calibration = calibrate_eta(target, eta_paper_m=eta_paper_m)

    base = oracle_at_periods(params, comm, 1, layout.fock_cutoff, settings=settings)
    a_base = base.coeffs.A

    if eta is None:
        periods = _pick_periods(a_base, calibration.eta_star, max_periods,
                                grid_period=math.pi / 2.0)
        oracle = (base if periods == 1 else
                  oracle_at_periods(params, comm, periods, layout.fock_cutoff,
                                    settings=settings))
        eta_used = oracle.coeffs.A
        strict = True
    else:
        periods = _pick_periods(a_base, eta, max_periods, grid_period=TWO_PI)
        oracle = (base if periods == 1 else
                  oracle_at_periods(params, comm, periods, layout.fock_cutoff,
                                    settings=settings))
        eta_used = float(eta)
        strict = False

    schedule = schedule_for_eta(params, eta_used, comm, periods, m=eta_paper_m)
    return compose_sequence(schedule, params, layout, target=target, oracle=oracle,
                            settings=settings, calibration=calibration,
                            condition_tol=condition_tol, strict=strict)
