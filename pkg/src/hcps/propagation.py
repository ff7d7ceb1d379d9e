"""Time-ordered propagation of time-dependent Hamiltonians.

This module is the brute-force oracle the analytic machinery is checked
against, so it stays deliberately simple: piecewise-constant midpoint
exponentials

    U(t1, t0) = prod_k exp(-i H(t_k^mid) dt)

which are unconditionally unitary per step and second-order accurate, with
step-doubling until two successive resolutions agree to the requested
max-norm tolerance.  No cleverness that could share a failure mode with the
factorized propagator it is meant to audit.

Each run is single-threaded and deterministic; independent runs may execute
in parallel with no shared mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .hilbert import Operator, StateVector

SAMPLE_HERMITIAN_TOL = 1e-10


class NonHermitianSampleError(ValueError):
    """A sampled Hamiltonian was not Hermitian to tolerance."""


@dataclass(frozen=True)
class PropagationSettings:
    """Integration window and convergence control.

    steps is the initial grid; the grid is doubled until two successive
    propagators differ by less than tolerance in entrywise max-norm, up to
    max_refinements doublings.
    """

    t0: float
    t1: float
    steps: int = 256
    tolerance: float = 1e-8
    max_refinements: int = 12

    def __post_init__(self):
        if not (self.t1 > self.t0):
            raise ValueError(f"need t1 > t0, got [{self.t0}, {self.t1}]")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not (self.tolerance > 0):
            raise ValueError("tolerance must be positive")

    def replace(self, **changes) -> "PropagationSettings":
        return replace(self, **changes)


@dataclass(frozen=True)
class PropagatorResult:
    unitary: Operator
    unitarity_defect: float
    converged: bool
    steps_used: int


@dataclass(frozen=True)
class StateResult:
    state: StateVector
    converged: bool
    steps_used: int
    times: np.ndarray | None = field(default=None, repr=False)
    trajectory: np.ndarray | None = field(default=None, repr=False)


# ----------------------------------------------------------------------
# raw cores (plain ndarrays; used on full-space and sector-block problems)
# ----------------------------------------------------------------------

def _check_hermitian(h: np.ndarray, t: float):
    if np.abs(h - h.conj().T).max() >= SAMPLE_HERMITIAN_TOL:
        raise NonHermitianSampleError(f"Hamiltonian sample at t={t} is not Hermitian")


def _step_unitary(h: np.ndarray, dt: float) -> np.ndarray:
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * dt)) @ v.conj().T


def propagate_matrix(h_mat: Callable[[float], np.ndarray], t0: float, t1: float,
                     steps: int) -> np.ndarray:
    """Fixed-grid midpoint-exponential propagator on raw matrices."""
    dim = np.asarray(h_mat(t0)).shape[0]
    u = np.eye(dim, dtype=np.complex128)
    dt = (t1 - t0) / steps
    for k in range(steps):
        tm = t0 + (k + 0.5) * dt
        h = np.asarray(h_mat(tm), dtype=np.complex128)
        _check_hermitian(h, tm)
        u = _step_unitary(h, dt) @ u
    return u


def propagate_matrix_checkpoints(h_mat: Callable[[float], np.ndarray], t0: float,
                                 times: Sequence[float], steps_total: int
                                 ) -> list[np.ndarray]:
    """Propagate through an increasing time grid, snapshotting U(t_k, t0).

    steps_total is distributed over the segments proportionally to their
    duration, at least one midpoint step per segment.
    """
    times = list(times)
    if not times or any(b <= a for a, b in zip([t0] + times[:-1], times)):
        raise ValueError("checkpoint times must be strictly increasing and above t0")
    span = times[-1] - t0
    dim = np.asarray(h_mat(t0)).shape[0]
    u = np.eye(dim, dtype=np.complex128)
    snapshots = []
    prev = t0
    for tk in times:
        seg_steps = max(1, round(steps_total * (tk - prev) / span))
        dt = (tk - prev) / seg_steps
        for k in range(seg_steps):
            tm = prev + (k + 0.5) * dt
            h = np.asarray(h_mat(tm), dtype=np.complex128)
            _check_hermitian(h, tm)
            u = _step_unitary(h, dt) @ u
        snapshots.append(u.copy())
        prev = tk
    return snapshots


def adaptive_propagate_checkpoints(h_mat: Callable[[float], np.ndarray], t0: float,
                                   times: Sequence[float], settings: PropagationSettings
                                   ) -> tuple[list[np.ndarray], bool, int]:
    """Step-doubled checkpoint propagation; convergence judged on the final U."""
    steps = max(settings.steps, len(list(times)))
    snaps = propagate_matrix_checkpoints(h_mat, t0, times, steps)
    converged = False
    for _ in range(settings.max_refinements):
        finer = propagate_matrix_checkpoints(h_mat, t0, times, 2 * steps)
        diff = float(np.abs(finer[-1] - snaps[-1]).max())
        snaps, steps = finer, 2 * steps
        if diff < settings.tolerance:
            converged = True
            break
    return snaps, converged, steps


def adaptive_propagate(h_mat: Callable[[float], np.ndarray], settings: PropagationSettings
                       ) -> tuple[np.ndarray, bool, int]:
    snaps, converged, steps = adaptive_propagate_checkpoints(
        h_mat, settings.t0, [settings.t1], settings)
    return snaps[-1], converged, steps


# ----------------------------------------------------------------------
# typed wrappers
# ----------------------------------------------------------------------

def evolve_propagator(h_fun: Callable[[float], Operator],
                      settings: PropagationSettings) -> PropagatorResult:
    """Propagator U(t1, t0) for a time-dependent Hermitian generator.

    Non-convergence is reported through the converged flag, not raised; a
    non-Hermitian sample raises NonHermitianSampleError.
    """
    probe = h_fun(settings.t0)
    layout = probe.layout

    def h_mat(t: float) -> np.ndarray:
        return h_fun(t).entries

    u, converged, steps = adaptive_propagate(h_mat, settings)
    op = Operator(layout, u)
    return PropagatorResult(
        unitary=op,
        unitarity_defect=op.unitarity_defect(),
        converged=converged,
        steps_used=steps,
    )


def evolve_state(h_fun: Callable[[float], Operator], psi0: StateVector,
                 settings: PropagationSettings,
                 trajectory_stride: int | None = None) -> StateResult:
    """Evolve a normalized state; optionally sample the trajectory.

    With trajectory_stride = m, the state is recorded every m steps of the
    accepted grid (plus the final point) for CSV export.
    """
    if abs(psi0.norm() - 1.0) > 1e-9:
        raise ValueError(f"initial state norm {psi0.norm()} is not 1")
    layout = psi0.layout

    def h_mat(t: float) -> np.ndarray:
        return h_fun(t).entries

    def run(steps: int) -> np.ndarray:
        psi = psi0.amplitudes.copy()
        dt = (settings.t1 - settings.t0) / steps
        for k in range(steps):
            tm = settings.t0 + (k + 0.5) * dt
            h = h_mat(tm)
            _check_hermitian(h, tm)
            psi = _step_unitary(h, dt) @ psi
        return psi

    steps = settings.steps
    psi = run(steps)
    converged = False
    for _ in range(settings.max_refinements):
        finer = run(2 * steps)
        diff = float(np.abs(finer - psi).max())
        psi, steps = finer, 2 * steps
        if diff < settings.tolerance:
            converged = True
            break

    times = trajectory = None
    if trajectory_stride is not None:
        if trajectory_stride < 1:
            raise ValueError("trajectory_stride must be >= 1")
        dt = (settings.t1 - settings.t0) / steps
        psi_t = psi0.amplitudes.copy()
        rec_t, rec_psi = [settings.t0], [psi_t.copy()]
        for k in range(steps):
            tm = settings.t0 + (k + 0.5) * dt
            psi_t = _step_unitary(h_mat(tm), dt) @ psi_t
            if (k + 1) % trajectory_stride == 0 or k == steps - 1:
                rec_t.append(settings.t0 + (k + 1) * dt)
                rec_psi.append(psi_t.copy())
        times = np.array(rec_t)
        trajectory = np.array(rec_psi)
        psi = psi_t

    return StateResult(
        state=StateVector(layout, psi),
        converged=converged,
        steps_used=steps,
        times=times,
        trajectory=trajectory,
    )


def frame_rotate(u: Operator, generator: Operator, angle_fun: Callable[[float], float],
                 t: float) -> Operator:
    """Rotate a propagator into the frame exp(+i angle(t) generator).

    Used to compare dynamics generated with and without a co-rotating term:
    exp(+i angle_fun(t) G) @ U.
    """
    if not generator.is_hermitian(SAMPLE_HERMITIAN_TOL):
        raise ValueError("frame generator must be Hermitian")
    w, v = np.linalg.eigh(generator.entries)
    rot = (v * np.exp(1j * float(angle_fun(t)) * w)) @ v.conj().T
    return Operator(u.layout, rot @ u.entries)


def write_trajectory_csv(path, times: np.ndarray, trajectory: np.ndarray):
    """Trajectory CSV: t_ns, then one (re, im) column pair per basis index."""
    n = trajectory.shape[1]
    header = ["t_ns"]
    for j in range(n):
        header += [f"re_amp_{j}", f"im_amp_{j}"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for t, row in zip(times, trajectory):
            cells = [f"{t:.17g}"]
            for amp in row:
                cells += [f"{amp.real:.17g}", f"{amp.imag:.17g}"]
            fh.write(",".join(cells) + "\n")
