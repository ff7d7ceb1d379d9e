import math

import numpy as np
import pytest

from hcps.hamiltonians import h_eff
from hcps.hilbert import (
    Operator,
    SLOT_CHARGE,
    SLOT_SPIN,
    SpaceLayout,
    basis_state,
    build_number,
    build_spin_ops,
    identity,
)
from hcps.propagation import (
    NonHermitianSampleError,
    PropagationSettings,
    evolve_propagator,
    evolve_state,
    frame_rotate,
    write_trajectory_csv,
)
from hcps.wei_norman import coefficients_closed_form, factorized_propagator

from test_hamiltonians import make_params

TWO_PI = 2.0 * math.pi


def test_zero_hamiltonian_gives_identity():
    lay = SpaceLayout(3)
    res = evolve_propagator(lambda t: 0.0 * identity(lay),
                            PropagationSettings(t0=0.0, t1=1.0, steps=8))
    assert (res.unitary - identity(lay)).norm_max() < 1e-14
    assert res.unitarity_defect < 1e-14


def test_constant_number_hamiltonian_phases():
    lay = SpaceLayout(4)
    omega, t = 0.9, 2.3
    n_op = build_number(lay)
    res = evolve_propagator(lambda _: omega * n_op,
                            PropagationSettings(t0=0.0, t1=t, steps=64))
    want = np.diag([np.exp(-1j * omega * k * t)
                    for s in range(2) for c in range(2) for k in range(4)])
    assert np.abs(res.unitary.entries - want).max() < 1e-9


def test_rabi_pi_pulse_flips_qubit():
    lay = SpaceLayout(2)
    omega_rabi = 2.0
    sx = build_spin_ops(lay, SLOT_CHARGE).x
    down = basis_state(lay, 0, 1, 0)
    up = basis_state(lay, 0, 0, 0)
    res = evolve_state(lambda t: 0.5 * omega_rabi * sx, down,
                       PropagationSettings(t0=0.0, t1=np.pi / omega_rabi, steps=64))
    assert res.state.fidelity_to(up) > 1 - 1e-9


def test_state_matches_propagator():
    lay = SpaceLayout(5)
    p = make_params()
    psi0 = basis_state(lay, 0, 1, 0)
    settings = PropagationSettings(t0=0.0, t1=1.7, steps=1024, tolerance=1e-9,
                                   max_refinements=0)
    u = evolve_propagator(lambda t: h_eff(p, lay, t), settings)
    s = evolve_state(lambda t: h_eff(p, lay, t), psi0, settings)
    assert np.abs((u.unitary @ psi0).amplitudes - s.state.amplitudes).max() < 1e-9
    assert abs(s.state.norm() - 1.0) < 1e-9


def test_propagator_composition():
    lay = SpaceLayout(4)
    p = make_params()

    def h(t):
        return h_eff(p, lay, t)

    tol = 1e-9
    u_full = evolve_propagator(h, PropagationSettings(0.0, 2.0, 256, tol))
    u_a = evolve_propagator(h, PropagationSettings(0.0, 0.8, 128, tol))
    u_b = evolve_propagator(h, PropagationSettings(0.8, 2.0, 128, tol))
    diff = (u_b.unitary @ u_a.unitary - u_full.unitary).norm_max()
    assert diff < 5e-9


def test_converged_propagator_is_unitary():
    # every midpoint factor is exactly unitary, so the defect sits at the
    # rounding floor regardless of the convergence tolerance
    lay = SpaceLayout(6)
    p = make_params()
    res = evolve_propagator(lambda t: h_eff(p, lay, t),
                            PropagationSettings(0.0, TWO_PI, 512, 1e-6))
    assert res.converged
    assert res.unitarity_defect < 1e-9


def test_second_order_convergence():
    # halving the step roughly quarters the distance to the converged limit
    lay = SpaceLayout(4)
    p = make_params()

    def run(steps):
        return evolve_propagator(
            lambda t: h_eff(p, lay, t),
            PropagationSettings(0.0, 3.0, steps, 1e-30, max_refinements=0)).unitary.entries

    ref = run(16384)
    e1 = np.abs(run(256) - ref).max()
    e2 = np.abs(run(512) - ref).max()
    assert 3.0 < e1 / e2 < 5.0


def test_h_eff_conserves_x_expectations():
    lay = SpaceLayout(6)
    p = make_params()
    plus_plus = np.zeros(lay.total_dim, dtype=complex)
    for s in range(2):
        for c in range(2):
            plus_plus[lay.index(s, c, 0)] = 0.5
    psi0 = basis_state(lay, 0, 0, 0).__class__(lay, plus_plus)
    res = evolve_state(lambda t: h_eff(p, lay, t), psi0,
                       PropagationSettings(0.0, 2.0, 512, 1e-9))
    sx = build_spin_ops(lay, SLOT_CHARGE).x.entries
    Sx = build_spin_ops(lay, SLOT_SPIN).x.entries
    amp = res.state.amplitudes
    for op in (sx, Sx):
        assert np.vdot(amp, op @ amp).real == pytest.approx(1.0, abs=1e-8)


def test_charge_only_limit_matches_factorized_form():
    # with the spin coupling off, the propagator is the two displacement
    # factors plus the scalar, with closed-form coefficients; compared on
    # the truncation-trusted input columns at a fixed fine grid
    n = 25
    lay = SpaceLayout(n)
    p = make_params(G=0.0, omega=1.0, g=0.12, omega_r=0.0)
    t = 1.9
    res = evolve_propagator(
        lambda s: h_eff(p, lay, s),
        PropagationSettings(0.0, t, 8192, 1e-30, max_refinements=0))
    coeffs = coefficients_closed_form(p, t)
    fact = factorized_propagator(coeffs, lay)
    cols = [lay.index(s, c, k) for s in range(2) for c in range(2) for k in range(7)]
    diff = np.abs(fact.entries[:, cols] - res.unitary.entries[:, cols]).max()
    assert diff < 1e-7


def test_frame_rotate_zero_angle_is_noop():
    lay = SpaceLayout(3)
    p = make_params()
    u = evolve_propagator(lambda t: h_eff(p, lay, t),
                          PropagationSettings(0.0, 1.0, 64, 1e-7))
    rotated = frame_rotate(u.unitary, build_spin_ops(lay, SLOT_SPIN).x, lambda t: 0.0, 1.0)
    assert (rotated - u.unitary).norm_max() < 1e-14


def test_frame_rotate_inverts_bare_rotation():
    lay = SpaceLayout(2)
    rate = 3.7
    Sx = build_spin_ops(lay, SLOT_SPIN).x
    t = 1.3
    res = evolve_propagator(lambda _: rate * Sx, PropagationSettings(0.0, t, 64, 1e-9))
    rotated = frame_rotate(res.unitary, Sx, lambda s: rate * s, t)
    assert (rotated - identity(lay)).norm_max() < 1e-9


def test_non_hermitian_sample_raises():
    lay = SpaceLayout(2)
    bad = Operator(lay, np.triu(np.ones((8, 8))))
    with pytest.raises(NonHermitianSampleError):
        evolve_propagator(lambda t: bad, PropagationSettings(0.0, 1.0, 4))


def test_trajectory_csv_format(tmp_path):
    lay = SpaceLayout(2)
    sx = build_spin_ops(lay, SLOT_CHARGE).x
    psi0 = basis_state(lay, 0, 1, 0)
    res = evolve_state(lambda t: sx, psi0,
                       PropagationSettings(0.0, 1.0, 64, 1e-7),
                       trajectory_stride=16)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(path, res.times, res.trajectory)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("t_ns,re_amp_0,im_amp_0")
    assert len(lines[0].split(",")) == 1 + 2 * lay.total_dim
    assert len(lines) == 1 + len(res.times)
    ts = [float(row.split(",")[0]) for row in lines[1:]]
    assert ts == sorted(ts)
