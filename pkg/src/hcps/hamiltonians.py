"""Hamiltonian builders for the spin-qubit / charge-qubit / resonator system.

Every builder returns a Hermitian :class:`~hcps.hilbert.Operator` on the
composite space (or a scalar for pure parameter formulas).  All frequencies
are ANGULAR, in rad/ns, with hbar = 1; config-file unit tags are converted
once at load time (see :mod:`hcps.config`) so nothing here ever touches a
unit string.

The model, bottom up:

* charge qubit biased near its degeneracy point, Josephson energy tuned by
  an external flux:  H_q = -4 E_c (1/2 - n_g) sigma_z - (1/2) E_J(Phi) sigma_x
  with E_J(Phi) = E_J0 cos(pi Phi/Phi_0);
* spin qubit in the frame rotating at its microwave drive frequency:
  H_s = (omega_0 - omega_r)|up><up| + (Omega/2) S_x, resonantly reduced to
  (Omega/2) S_x;
* both qubits couple transversally to one resonator mode.  In the
  interaction picture after the rotating-wave approximation the qubit-mode
  couplings oscillate at omega (charge side) and Delta = omega - omega_r
  (spin side);
* a strong resonator drive enters only through the effective spin Rabi rate
  Omega' = G eps / Delta, and averaging over the fast Omega' rotation leaves
  the effective generator h_eff used for gate synthesis.

h_eff commutes with both sigma_x and S_x at all times, which is what makes
the propagator factorizable (see :mod:`hcps.wei_norman`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .hilbert import (
    Operator,
    SLOT_CHARGE,
    SLOT_SPIN,
    SpaceLayout,
    build_annihilation,
    build_spin_ops,
)

_PARAM_FIELDS = (
    "E_c", "n_g", "E_J0", "flux_ratio", "D_gs", "gamma_B", "omega_r",
    "Omega_mw", "omega", "g", "G", "eps", "omega_d",
)


def ej_of_flux(E_J0: float, flux_ratio: float) -> float:
    """Flux-tuned Josephson energy E_J0 * cos(pi * Phi/Phi_0).

    Even and 2-periodic in flux_ratio; zero at half-integer flux, which is
    the idle setting for unselected charge qubits.
    """
    return E_J0 * math.cos(math.pi * flux_ratio)


@dataclass(frozen=True)
class SystemParams:
    """Physical constants and frame conventions for one run (rad/ns, hbar=1).

    Attributes
    ----------
    E_c : float
        Charge-qubit charging energy.
    n_g : float
        Dimensionless gate charge; 1/2 is the degeneracy point.
    E_J0, flux_ratio : float
        Bare Josephson energy and Phi/Phi_0 through the qubit loop.
    D_gs, gamma_B : float
        Spin-qubit zero-field splitting and Zeeman shift (gamma*|B|); the
        qubit gap is omega_0 = D_gs + gamma_B.
    omega_r, Omega_mw : float
        Spin microwave drive frequency and Rabi rate Omega.
    omega : float
        Resonator frequency.
    g, G : float
        Charge-resonator and spin-resonator coupling strengths.
    eps, omega_d : float
        Resonator drive amplitude (constant over a run) and drive frequency.
        The drive enters the default pipeline only through the effective
        Rabi rate Omega' = G*eps/Delta.
    """

    E_c: float
    n_g: float
    E_J0: float
    flux_ratio: float
    D_gs: float
    gamma_B: float
    omega_r: float
    Omega_mw: float
    omega: float
    g: float
    G: float
    eps: float = 0.0
    omega_d: float = 0.0

    def __post_init__(self):
        for name in _PARAM_FIELDS:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"SystemParams.{name} must be finite, got {value!r}")

    # -- derived quantities ---------------------------------------------

    @property
    def zeta(self) -> float:
        """Working Josephson energy E_J(Phi)."""
        return ej_of_flux(self.E_J0, self.flux_ratio)

    @property
    def xi(self) -> float:
        """Spin rotation rate, xi = -Omega."""
        return -self.Omega_mw

    @property
    def Delta(self) -> float:
        """Spin-side interaction-picture detuning, omega - omega_r."""
        return self.omega - self.omega_r

    @property
    def omega_0(self) -> float:
        """Spin qubit gap D_gs + gamma*|B|."""
        return self.D_gs + self.gamma_B

    def replace(self, **changes) -> "SystemParams":
        return replace(self, **changes)


def effective_rabi(params: SystemParams) -> float:
    """Effective spin Rabi rate Omega' = G * eps / Delta of the strong drive."""
    if params.Delta == 0.0:
        raise ValueError("effective Rabi rate undefined at Delta = 0")
    return params.G * params.eps / params.Delta


@lru_cache(maxsize=8)
def _cached_ops(layout: SpaceLayout):
    """Constant operator pieces reused across time samples."""
    spin = build_spin_ops(layout, SLOT_SPIN)
    charge = build_spin_ops(layout, SLOT_CHARGE)
    a = build_annihilation(layout)
    ad = a.dagger()
    return {
        "Sx": spin.x, "Sp": spin.plus, "Sm": spin.minus,
        "up_proj": 0.5 * (spin.z + _identity_like(spin.z)),
        "sx": charge.x, "sz": charge.z,
        "a": a, "ad": ad, "n": ad @ a,
        "ad_Sm": ad @ spin.minus, "a_Sp": a @ spin.plus,
        "a_plus_ad": a + ad,
    }


def _identity_like(op: Operator) -> Operator:
    return Operator(op.layout, np.eye(op.layout.total_dim))


# ----------------------------------------------------------------------
# builders
# ----------------------------------------------------------------------

def h_charge_qubit(params: SystemParams, layout: SpaceLayout) -> Operator:
    """Charge qubit alone: -4 E_c (1/2 - n_g) sigma_z - (zeta/2) sigma_x.

    At the degeneracy point n_g = 1/2 the sigma_z term vanishes identically
    and the qubit rotates purely about x.
    """
    ops = _cached_ops(layout)
    return (-4.0 * params.E_c * (0.5 - params.n_g)) * ops["sz"] - 0.5 * params.zeta * ops["sx"]


def h_nv(params: SystemParams, layout: SpaceLayout) -> Operator:
    """Spin qubit in its microwave rotating frame.

    (omega_0 - omega_r)|up><up| + (Omega/2) S_x; on resonance this is just
    (Omega/2) S_x.
    """
    ops = _cached_ops(layout)
    detuning = params.omega_0 - params.omega_r
    return detuning * ops["up_proj"] + 0.5 * params.Omega_mw * ops["Sx"]


def h_total_lab(params: SystemParams, layout: SpaceLayout, t: float) -> Operator:
    """Full lab-frame Hamiltonian of the coupled system at time t.

    omega a'a - (zeta/2) sigma_x - (xi/2) S_x + g (a + a') sigma_x
      + G (a + a') (S+ e^{i omega_r t} + S- e^{-i omega_r t})
    """
    ops = _cached_ops(layout)
    phase = np.exp(1j * params.omega_r * t)
    spin_coupling = phase * ops["Sp"] + np.conj(phase) * ops["Sm"]
    return (
        params.omega * ops["n"]
        - 0.5 * params.zeta * ops["sx"]
        - 0.5 * params.xi * ops["Sx"]
        + params.g * (ops["a_plus_ad"] @ ops["sx"])
        + params.G * (ops["a_plus_ad"] @ spin_coupling)
    )


def h_interaction(params: SystemParams, layout: SpaceLayout, t: float) -> Operator:
    """Interaction-picture Hamiltonian after the rotating-wave approximation.

    g (a' e^{i omega t} + a e^{-i omega t}) sigma_x
      + G (a' S- e^{i Delta t} + a S+ e^{-i Delta t})
    """
    ops = _cached_ops(layout)
    pw = np.exp(1j * params.omega * t)
    pd = np.exp(1j * params.Delta * t)
    charge_part = params.g * ((pw * ops["ad"] + np.conj(pw) * ops["a"]) @ ops["sx"])
    spin_part = params.G * (pd * ops["ad_Sm"] + np.conj(pd) * ops["a_Sp"])
    return charge_part + spin_part


def h_drive(params: SystemParams, layout: SpaceLayout, t: float) -> Operator:
    """External resonator drive eps (a' e^{-i omega_d t} + a e^{i omega_d t}).

    Kept for validation runs; the default pipeline folds the drive into the
    effective Rabi rate Omega' instead of integrating it directly.
    """
    ops = _cached_ops(layout)
    ph = np.exp(-1j * params.omega_d * t)
    return params.eps * (ph * ops["ad"] + np.conj(ph) * ops["a"])


def h_T(params: SystemParams, layout: SpaceLayout, t: float) -> Operator:
    """Driven interaction Hamiltonian: h_interaction + Omega' S_x."""
    ops = _cached_ops(layout)
    return h_interaction(params, layout, t) + effective_rabi(params) * ops["Sx"]


def h_eff(params: SystemParams, layout: SpaceLayout, t: float) -> Operator:
    """Effective generator after averaging over the strong Omega' rotation.

    g (a' e^{i omega t} + a e^{-i omega t}) sigma_x
      + (G/2) (a' e^{i Delta t} + a e^{-i Delta t}) S_x

    Both qubit operators appear only through sigma_x and S_x, so h_eff
    commutes with each of them at every time and is block-diagonal in their
    joint eigenbasis; within one (s1, s2) eigensector it is a linearly
    driven oscillator.  See :func:`hcps.wei_norman.sector_amplitude`.
    """
    ops = _cached_ops(layout)
    pw = np.exp(1j * params.omega * t)
    pd = np.exp(1j * params.Delta * t)
    charge_part = params.g * ((pw * ops["ad"] + np.conj(pw) * ops["a"]) @ ops["sx"])
    spin_part = 0.5 * params.G * ((pd * ops["ad"] + np.conj(pd) * ops["a"]) @ ops["Sx"])
    return charge_part + spin_part
