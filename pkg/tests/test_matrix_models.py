import math

import numpy as np
import pytest

from zeno_lab.analysis import fit_exponential, fit_short_time
from zeno_lab.errors import ConfigurationWarning, ContractViolation
from zeno_lab.linops import HermitianOperator, projector_from_indices, unitary_matrix
from zeno_lab.matrix_models import (
    ToyModel,
    ZenoRunSpec,
    build_decoupled_blocks,
    build_friedrichs,
    build_two_level,
    friedrichs_rate,
    projective_zeno,
    survival_series,
    verify_intertwining,
)


def rabi(omega, g, t):
    w2 = omega**2 + g**2 / 4
    return 1 - omega**2 / w2 * np.sin(np.sqrt(w2) * t) ** 2


@pytest.fixture(scope="module")
def friedrichs():
    return build_friedrichs()


def test_two_level_free_survival():
    m = build_two_level(1.0)
    t = np.linspace(0, 4, 81)
    s = survival_series(m, 0.0, t)
    np.testing.assert_allclose(s.values, np.cos(t) ** 2, atol=1e-12)
    assert s.values[0] == 1.0
    assert survival_series(m, 0.0, [np.pi / 2]).values[0] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("omega,g", [(1.0, 2.0), (0.7, 3.0), (1.0, 10.0)])
def test_direct_measurement_matches_rabi(omega, g):
    t = np.linspace(0, 5, 101)
    s = survival_series(build_two_level(omega), g, t)
    np.testing.assert_allclose(s.values, rabi(omega, g, t), atol=1e-12)


def test_rabi_half_point():
    t = np.pi / (2 * math.sqrt(2))
    assert survival_series(build_two_level(1.0), 2.0, [t]).values[0] == pytest.approx(0.5, abs=1e-12)


def test_strong_direct_measurement_freezes():
    g = 1e3
    s = survival_series(build_two_level(1.0), g, np.linspace(0, 10, 2001))
    assert s.values.min() >= 1 - 4 / g**2


@pytest.mark.parametrize("g", [10.0, 100.0])
def test_direct_freezing_envelope(g):
    omega = 1.0
    period = math.pi / math.sqrt(omega**2 + g**2 / 4)
    s = survival_series(build_two_level(omega), g, np.linspace(0, period, 1001))
    assert s.values.min() >= 1 - omega**2 / (omega**2 + g**2 / 4) - 1e-12


def test_two_level_rejects_nonpositive():
    with pytest.raises(ContractViolation):
        build_two_level(0.0)


def test_projective_closed_form():
    s = projective_zeno(build_two_level(1.0), ZenoRunSpec.from_interval(0.1, 10))
    assert len(s) == 11
    assert s.values[-1] == pytest.approx(math.cos(0.1) ** 20, abs=1e-12)
    assert s.values[-1] == pytest.approx(math.exp(-0.1), rel=5e-3)
    assert np.all(np.diff(s.values) <= 0)


def test_projective_without_interaction_never_decays():
    z = HermitianOperator.zeros(3)
    m = ToyModel(HermitianOperator(np.diag([0.0, 1.0, 2.0])), z, HermitianOperator(np.diag([0, 1, 1.0])), 0)
    for n in (1, 7, 50):
        s = projective_zeno(m, ZenoRunSpec.from_total(2.0, n))
        np.testing.assert_array_equal(s.values, 1.0)


def test_zeno_monotone_in_n():
    omega = 1.0
    ns = [2**k for k in range(9)]
    finals = [projective_zeno(build_two_level(omega), ZenoRunSpec.from_total(1.0, n)).values[-1] for n in ns]
    assert all(b >= a for a, b in zip(finals, finals[1:]))
    for n, s in zip(ns, finals):
        if n >= 8:
            assert s >= 1 - 1.1 * omega**2 / n


def test_run_spec_consistency():
    with pytest.raises(ContractViolation):
        ZenoRunSpec(1.0, 0.3, 3)
    with pytest.raises(ContractViolation):
        ZenoRunSpec(1.0, -1.0, 1)


def test_toy_model_invariants():
    z = HermitianOperator.zeros(2)
    with pytest.raises(ContractViolation):
        ToyModel(z, z, HermitianOperator(np.eye(2)), 0)
    with pytest.raises(ContractViolation):
        ToyModel(HermitianOperator([[0, 1], [1, 0]]), z, z, 0)


def test_friedrichs_structure(friedrichs):
    assert friedrichs.dim == 401
    assert friedrichs.E_o == 0.0
    assert friedrichs.alpha == pytest.approx(0.1**2 * 4.0, rel=1e-12)


def test_friedrichs_uncoupled():
    m = build_friedrichs(64, 0.0, 4.0)
    s = survival_series(m, 0.0, np.linspace(0, 100, 11))
    np.testing.assert_allclose(s.values, 1.0, atol=1e-14)


def test_friedrichs_golden_rule(friedrichs):
    gamma = friedrichs_rate(0.1)
    t = np.linspace(0, 60, 601)
    fit = fit_exponential(survival_series(friedrichs, 0.0, t), (0.5 / gamma, 3 / gamma))
    assert fit.quality_flag == "ok"
    assert fit.estimate == pytest.approx(gamma, rel=0.05)


def test_friedrichs_warns_on_early_recurrence():
    with pytest.warns(ConfigurationWarning):
        build_friedrichs(32, 0.05, 4.0)
    with pytest.raises(ContractViolation):
        build_friedrichs(16, 0.1, 4.0)


def richardson_alpha(m, dts=(1e-2, 5e-3, 2.5e-3)):
    a = [(1 - survival_series(m, 0.0, [dt]).values[0]) / dt**2 for dt in dts]
    # (1 - s)/dt^2 = alpha + c dt^2 + O(dt^4)
    r1 = (4 * a[1] - a[0]) / 3
    r2 = (4 * a[2] - a[1]) / 3
    return (16 * r2 - r1) / 15


@pytest.mark.parametrize(
    "model", [build_two_level(1.0), build_two_level(2.5), build_friedrichs(), build_friedrichs(64, 0.3, 2.0)]
)
def test_short_time_universality(model):
    assert richardson_alpha(model) == pytest.approx(model.alpha, rel=1e-3)


@pytest.mark.parametrize("model", [build_two_level(1.0), build_friedrichs()])
def test_fit_short_time_recovers_alpha(model):
    hi = 0.05 / math.sqrt(model.alpha)
    s = survival_series(model, 0.0, np.linspace(0, hi, 26))
    fit = fit_short_time(s, (0, hi))
    assert fit.estimate == pytest.approx(model.alpha, rel=0.01)


def test_friedrichs_short_time_alpha(friedrichs):
    s = survival_series(friedrichs, 0.0, np.linspace(0, 0.05, 26))
    assert fit_short_time(s, (0, 0.05)).estimate == pytest.approx(0.04, rel=0.01)


def test_intertwining_identical_maps():
    rng = np.random.default_rng(0)
    H, Hm, P = build_decoupled_blocks(3, 4, rng)
    U = unitary_matrix(H, 0.1)
    probes = [np.eye(7)[0], np.eye(7)[5]]
    rep = verify_intertwining(U, U, P, 20, probes, 0.0)
    assert rep.max_deviation == 0.0 and rep.passed


def test_intertwining_decoupled_blocks():
    rng = np.random.default_rng(1)
    H, Hm, P = build_decoupled_blocks(4, 6, rng)
    U0 = unitary_matrix(H, 0.05)
    Ug = unitary_matrix(H + Hm.scaled(50.0), 0.05)
    probes = []
    for _ in range(10):
        v = rng.normal(size=10) + 1j * rng.normal(size=10)
        probes.append(v / np.linalg.norm(v))
    rep = verify_intertwining(Ug, U0, P, 200, probes, 1e-12)
    assert rep.passed, rep
    again = verify_intertwining(Ug, U0, P, 200, probes[::-1], 1e-12)
    assert again.max_deviation == rep.max_deviation


def test_intertwining_detects_direct_coupling():
    m = build_two_level(1.0)
    P = projector_from_indices([0], 2)
    U0 = unitary_matrix(m.hamiltonian(0.0), 0.1)
    Ug = unitary_matrix(m.hamiltonian(5.0), 0.1)
    rep = verify_intertwining(Ug, U0, P, 20, [np.array([1, 0], dtype=complex)], 1e-6)
    assert not rep.passed


def test_intertwining_contract():
    H, _, P = build_decoupled_blocks(2, 2, np.random.default_rng(2))
    U = unitary_matrix(H, 0.1)
    V = unitary_matrix(HermitianOperator(np.eye(3)), 0.1)
    with pytest.raises(ContractViolation):
        verify_intertwining(U, V, P, 3, [np.eye(4)[0]], 1e-12)
    with pytest.raises(ContractViolation):
        verify_intertwining(U, U, P, 3, [2 * np.eye(4)[0]], 1e-12)
