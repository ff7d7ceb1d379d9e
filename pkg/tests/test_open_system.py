import math

import numpy as np
import pytest

from hcps.gates import schedule_for_eta
from hcps.hamiltonians import h_eff
from hcps.hilbert import SpaceLayout, basis_state, identity
from hcps.open_system import (
    DecoherenceParams,
    DensityMatrix,
    collapse_ops,
    evolve_master,
    gate_fidelity_open,
    pure_dephasing_rate,
    standard_input_states,
    write_lindblad_csv,
)
from hcps.propagation import PropagationSettings, evolve_state
from hcps.wei_norman import commensurate_time, oracle_at_periods

from test_hamiltonians import make_params

TWO_PI = 2.0 * math.pi


# ----------------------------------------------------------------------
# parameters and rates
# ----------------------------------------------------------------------

def test_rejects_unphysical_coherence():
    with pytest.raises(ValueError):
        DecoherenceParams(T1_charge_us=1.0, T2_charge_us=2.5)


def test_lifetime_limited_coherence_has_no_dephasing():
    assert pure_dephasing_rate(1.0, 2.0) == 0.0


def test_dephasing_time_from_quoted_pair():
    # 1/T_phi = 1/2.05 - 1/3.0 gives T_phi = 6.4737 us
    rate = pure_dephasing_rate(1.5, 2.05)
    assert 1.0 / (rate * 1e3) == pytest.approx(6.47368421, rel=1e-8)


def test_rate_scaling():
    dec = DecoherenceParams(T1_charge_us=2.0, T2_charge_us=3.0, kappa_res=0.5)
    doubled = dec.scaled(2.0)
    assert doubled.T1_charge_us == 1.0
    assert doubled.kappa_res == 1.0
    off = dec.scaled(0.0)
    assert off.T1_charge_us == math.inf and off.kappa_res == 0.0


def test_collapse_ops_empty_when_rates_vanish():
    dec = DecoherenceParams(T1_charge_us=math.inf, T2_charge_us=math.inf,
                            T2_spin_us=math.inf, T1_spin_us=math.inf, kappa_res=0.0)
    assert collapse_ops(dec, SpaceLayout(2)) == []


def test_collapse_ops_channel_count():
    lay = SpaceLayout(2)
    dec = DecoherenceParams(T1_charge_us=1.5, T2_charge_us=2.05,
                            T2_spin_us=350.0, T1_spin_us=math.inf, kappa_res=0.1)
    ops = collapse_ops(dec, lay)
    # charge relaxation + charge dephasing + spin dephasing + resonator decay
    assert len(ops) == 4
    for _, rate in ops:
        assert rate > 0


# ----------------------------------------------------------------------
# density matrices
# ----------------------------------------------------------------------

def test_density_matrix_validation():
    lay = SpaceLayout(2)
    good = DensityMatrix.from_state(basis_state(lay, 0, 0, 0))
    assert good.trace_defect() < 1e-15
    with pytest.raises(ValueError):
        DensityMatrix(lay, 0.5 * np.eye(8))          # trace 4
    bad = np.zeros((8, 8), dtype=complex)
    bad[0, 1] = 1.0
    bad[0, 0] = 1.0
    with pytest.raises(ValueError):
        DensityMatrix(lay, bad)                       # not Hermitian


# ----------------------------------------------------------------------
# master equation
# ----------------------------------------------------------------------

def test_closed_limit_matches_state_propagation():
    lay = SpaceLayout(4)
    p = make_params()
    psi0 = basis_state(lay, 0, 1, 0)
    settings = PropagationSettings(0.0, 1.5, 256, 1e-8)
    pure = evolve_state(lambda t: h_eff(p, lay, t), psi0, settings)
    mixed = evolve_master(lambda t: h_eff(p, lay, t),
                          DensityMatrix.from_state(psi0), [], settings)
    assert mixed.converged
    want = np.outer(pure.state.amplitudes, pure.state.amplitudes.conj())
    assert np.abs(mixed.rho.entries - want).max() < 1e-7


def test_pure_dephasing_decay_law():
    # off-diagonal element decays as exp(-t/T_phi) with relaxation off
    lay = SpaceLayout(2)
    t_phi_us = 1.0 / (pure_dephasing_rate(1.5, 2.05) * 1e3)
    dec = DecoherenceParams(T1_charge_us=math.inf, T2_charge_us=t_phi_us,
                            T2_spin_us=math.inf, T1_spin_us=math.inf)
    up = basis_state(lay, 0, 0, 0).amplitudes
    down = basis_state(lay, 0, 1, 0).amplitudes
    plus = (up + down) / math.sqrt(2.0)
    rho0 = DensityMatrix(lay, np.outer(plus, plus.conj()))
    t = 6.283185307179586
    res = evolve_master(lambda _: 0.0 * identity(lay), rho0,
                        collapse_ops(dec, lay),
                        PropagationSettings(0.0, t, 64, 1e-10, max_refinements=10),
                        constant_hamiltonian=True)
    assert res.converged
    got = 2.0 * abs(res.rho.entries[0, lay.index(0, 1, 0)])
    want = math.exp(-t / (t_phi_us * 1e3))
    assert abs(got - want) / want < 1e-6
    assert want == pytest.approx(0.999030, abs=5e-7)


def test_maximally_mixed_is_dephasing_fixed_point():
    lay = SpaceLayout(2)
    dec = DecoherenceParams(T1_charge_us=math.inf, T2_charge_us=5.0,
                            T2_spin_us=5.0, T1_spin_us=math.inf)
    rho0 = DensityMatrix(lay, np.eye(8) / 8.0)
    res = evolve_master(lambda _: 0.0 * identity(lay), rho0,
                        collapse_ops(dec, lay),
                        PropagationSettings(0.0, 5.0, 64, 1e-9),
                        constant_hamiltonian=True)
    assert np.abs(res.rho.entries - np.eye(8) / 8.0).max() < 1e-12


def test_relaxation_empties_excited_state():
    lay = SpaceLayout(2)
    dec = DecoherenceParams(T1_charge_us=1e-3, T2_charge_us=2e-3,
                            T2_spin_us=math.inf, T1_spin_us=math.inf)
    rho0 = DensityMatrix.from_state(basis_state(lay, 0, 0, 0))   # charge up
    t = 5.0   # five T1 periods
    res = evolve_master(lambda _: 0.0 * identity(lay), rho0,
                        collapse_ops(dec, lay),
                        PropagationSettings(0.0, t, 128, 1e-9),
                        constant_hamiltonian=True)
    pop_up = res.rho.entries[0, 0].real
    assert pop_up == pytest.approx(math.exp(-5.0), rel=1e-5)
    assert res.trace_defect < 1e-10


def test_trace_and_hermiticity_preserved():
    lay = SpaceLayout(3)
    p = make_params()
    dec = DecoherenceParams()
    psi0 = standard_input_states(lay)[4]
    res = evolve_master(lambda t: h_eff(p, lay, t), DensityMatrix.from_state(psi0),
                        collapse_ops(dec, lay),
                        PropagationSettings(0.0, TWO_PI, 512, 1e-7))
    assert res.trace_defect < 1e-8
    assert np.abs(res.rho.entries - res.rho.entries.conj().T).max() < 1e-10


# ----------------------------------------------------------------------
# full-sequence open fidelity
# ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def preset_schedule(preset_params):
    comm = commensurate_time(preset_params.omega, preset_params.Delta, 4)
    oracle = oracle_at_periods(preset_params, comm, 1, 6,
                               settings=PropagationSettings(0.0, comm.t, 2048, 1e-8))
    return schedule_for_eta(preset_params, oracle.coeffs.A, comm, 1)


def test_standard_inputs_are_normalized():
    states = standard_input_states(SpaceLayout(4))
    assert len(states) == 6
    for s in states:
        assert abs(s.norm() - 1.0) < 1e-14


def test_open_fidelity_zero_rates_is_exact(preset_params, preset_schedule):
    lay = SpaceLayout(6)
    dec = DecoherenceParams().scaled(0.0)
    res = gate_fidelity_open(preset_params, preset_schedule, dec, lay)
    assert res.fidelity_avg == pytest.approx(1.0, abs=1e-9)


def test_open_fidelity_decreases_with_rates(preset_params, preset_schedule):
    lay = SpaceLayout(6)
    dec = DecoherenceParams()
    losses = []
    for factor in (1.0, 2.0, 4.0):
        res = gate_fidelity_open(preset_params, preset_schedule, dec.scaled(factor), lay)
        assert res.converged
        losses.append(res.fidelity_loss)
    assert 0 < losses[0] < losses[1] < losses[2]
    assert losses[0] < 0.01


def test_lindblad_csv_format(tmp_path):
    path = tmp_path / "lind.csv"
    write_lindblad_csv(path, [(0.0, 1.0, 1e-12), (1.0, 0.9976, 2e-12)])
    lines = path.read_text().splitlines()
    assert lines[0] == "scale_factor,fidelity_avg,trace_defect"
    assert len(lines) == 3
    assert float(lines[2].split(",")[1]) == pytest.approx(0.9976)
