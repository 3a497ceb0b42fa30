import math

import numpy as np
import pytest
from scipy.integrate import quad

from zeno_lab.analysis import compare_survival, fit_exponential
from zeno_lab.errors import ConfigurationError, ConfigurationWarning, ContractViolation, HorizonError
from zeno_lab.field_model import (
    DetectorConfig,
    FieldModelConfig,
    KernelSpec,
    build_field_model,
    core_norm,
    init_excited,
    nogo_sweep,
    random_wave_probe,
    run_experiment,
    semidirect_control,
    step,
    wavezone_leakage,
)
from zeno_lab.matrix_models import verify_intertwining

DEFAULT = FieldModelConfig()
WAVE_DET = DetectorConfig()
OVERLAP_DET = DetectorConfig(x_minus=0.0, x_plus=1.0, semidirect=True)


@pytest.fixture(scope="module")
def free_run():
    return run_experiment(build_field_model(DEFAULT))


def continuum_deficit(t, omega=5.0, g0=1.0, d=1.0):
    """Leading-order 1 - s(t) for the constant kernel.

    The pair amplitude overlaps its own source after a lag tau on an area
    (d - c tau)^2, so the memory kernel is g0^2 (d - tau)^2 for tau < d.
    """
    f = lambda tau: (t - tau) * g0**2 * (d - tau) ** 2 * math.cos(omega * tau)
    return 2 * quad(f, 0, t, epsabs=1e-16, epsrel=1e-12)[0]


def test_default_model_layout():
    m = build_field_model(DEFAULT)
    assert m.n_core == 16
    assert m.dt == pytest.approx(1 / 16)
    assert m.n_r == m.n_l == 16 + 128 + 2
    assert m.dim == 1 + m.n_r * m.n_l
    assert len(m.partition.core) == 1 + 16 * 16
    assert m.alpha == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("h", [0.3, 1 / 3, 0.5])
def test_grid_must_resolve_core(h):
    with pytest.raises(ConfigurationError):
        FieldModelConfig(h=h)


def test_detector_must_be_in_wave_zone():
    with pytest.raises(ConfigurationError):
        build_field_model(DEFAULT, DetectorConfig(x_minus=0.5, x_plus=1.5))
    build_field_model(DEFAULT, DetectorConfig(x_minus=0.5, x_plus=1.5, semidirect=True))


def test_detector_snapping_warns():
    with pytest.warns(ConfigurationWarning):
        m = build_field_model(DEFAULT, DetectorConfig(x_minus=1.03, x_plus=2.0))
    assert m.det_lo == pytest.approx(1.0625)
    assert np.all(m.x_r[m.det_rows] > 1.03)


def test_init_excited():
    m = build_field_model(DEFAULT, WAVE_DET)
    s = init_excited(m)
    assert m.norm(s) == 1.0 and s.survival == 1.0
    assert not s.F.any() and not s.D.any() and s.time == 0.0


def test_uncoupled_step_is_transport_plus_phase():
    cfg = FieldModelConfig(kernel=KernelSpec(g0=0.0))
    m = build_field_model(cfg)
    s = step(init_excited(m), m)
    assert s.C == pytest.approx(np.exp(-1j * cfg.omega * m.dt), abs=1e-14)
    assert abs(s.C) == pytest.approx(1.0, abs=1e-15)
    assert not s.F.any()


def test_point_excitation_shifts_one_cell():
    m = build_field_model(DEFAULT)
    s = m.zero_state()
    i, j = m.n_core + 3, m.n_l - 5
    s.F[i, j] = 4.0 - 1.0j
    out = step(s, m)
    assert out.F[i + 1, j - 1] == 4.0 - 1.0j
    assert np.count_nonzero(out.F) == 1 and out.C == 0


def test_norm_conservation_per_step_and_run():
    for det in (None, WAVE_DET.with_scale(10.0), OVERLAP_DET.with_scale(5.0)):
        m = build_field_model(DEFAULT, det)
        s = init_excited(m)
        for _ in range(40):
            prev = m.norm(s)
            s = step(s, m)
            assert abs(m.norm(s) - prev) <= 1e-11
        assert run_experiment(m).norm_drift <= 1e-9


def test_zero_scale_detector_is_invisible():
    a, b = build_field_model(DEFAULT), build_field_model(DEFAULT, WAVE_DET.with_scale(0.0))
    sa, sb = init_excited(a), init_excited(b)
    for _ in range(60):
        sa, sb = step(sa, a), step(sb, b)
    assert sa.C == sb.C
    # the detector grid is wider by the detector width; extra rows stay empty
    np.testing.assert_array_equal(sa.F, sb.F[: a.n_r])
    assert not sb.F[a.n_r :].any()


def test_packed_step_map_is_unitary():
    m = build_field_model(FieldModelConfig(h=0.25, T=2.0), DetectorConfig(n_k=4, x_plus=1.5))
    s = random_wave_probe(m, np.random.default_rng(0), 1)
    s.C = 0.3
    v = m.pack(s)
    v /= np.linalg.norm(v)
    out = m.step_map()(v)
    assert abs(np.linalg.norm(out) - 1.0) < 1e-12
    back = m.unpack(v)
    assert back.C == v[0]
    np.testing.assert_allclose(m.pack(back), v)


def test_short_time_matches_second_moment():
    h = 1 / 1024
    res = run_experiment(build_field_model(FieldModelConfig(h=h, T=8 * h)))
    for t, s in zip(res.series.times[1:], res.series.values[1:]):
        assert 1 - s == pytest.approx(continuum_deficit(t), rel=0.01)
        # leading behaviour is alpha t^2 with alpha = g0^2 d^2
        assert (1 - s) / t**2 == pytest.approx(1.0, rel=0.02)


def test_uncoupled_run_never_decays():
    res = run_experiment(build_field_model(FieldModelConfig(kernel=KernelSpec(g0=0.0))), sample_every=8)
    np.testing.assert_allclose(res.series.values, 1.0, rtol=0, atol=1e-12)


def test_decay_rate_converges_under_refinement(free_run):
    fine = run_experiment(build_field_model(FieldModelConfig(h=1 / 32)), sample_every=2)
    a = fit_exponential(free_run.series, (2, 8))
    b = fit_exponential(fine.series, (2, 8))
    assert a.ok and b.ok
    assert a.estimate == pytest.approx(b.estimate, rel=0.01)
    # survival envelope decays
    assert free_run.series.values[-1] < 0.5


def test_split_step_second_order(free_run):
    runs = [free_run.series.values]
    for h, every in ((1 / 32, 2), (1 / 64, 4)):
        runs.append(run_experiment(build_field_model(FieldModelConfig(h=h)), sample_every=every).series.values)
    e1 = np.max(np.abs(runs[0] - runs[1]))
    e2 = np.max(np.abs(runs[1] - runs[2]))
    assert 3.0 < e1 / e2 < 5.0
    assert e1 <= 0.5 * DEFAULT.h**2


def test_integral_solution_in_free_region():
    m = build_field_model(FieldModelConfig(T=2.0))
    s = init_excited(m)
    history = [s.C]
    n = 24
    for _ in range(n):
        s = step(s, m)
        history.append(s.C)
    g = np.zeros((m.n_r, m.n_l), dtype=complex)
    g[m.core_r, m.core_l] = m.kernel
    free = ~m.region_masks()["core"] & (np.abs(s.F) > 0)
    cells = np.argwhere(free)
    rng = np.random.default_rng(7)
    scale = np.max(np.abs(s.F))
    for i, j in cells[rng.choice(len(cells), 10, replace=False)]:
        # trapezoid rule along the characteristic through (i, j)
        acc = 0j
        for lag in range(n + 1):
            w = 0.5 if lag in (0, n) else 1.0
            if i - lag >= 0 and j + lag < m.n_l:
                acc += w * g[i - lag, j + lag] * history[n - lag]
        assert abs(-1j * m.dt * acc - s.F[i, j]) <= DEFAULT.h * scale


def test_detector_leaves_core_untouched_every_step():
    a = build_field_model(DEFAULT, WAVE_DET.with_scale(0.0))
    b = build_field_model(DEFAULT, WAVE_DET.with_scale(7.0))
    sa, sb = init_excited(a), init_excited(b)
    core = a.core_mask()
    for _ in range(a.cfg.horizon_steps):
        sa, sb = step(sa, a), step(sb, b)
        assert abs(sa.C - sb.C) <= 1e-10
        assert np.max(np.abs(sa.F[core] - sb.F[core])) <= 1e-10
    assert b.detector_population(sb) > 1e-4


def test_detector_scale_does_not_change_survival():
    base = run_experiment(build_field_model(DEFAULT, WAVE_DET.with_scale(0.0)))
    strong = run_experiment(build_field_model(DEFAULT, WAVE_DET.with_scale(10.0)))
    assert compare_survival(base.series, strong.series).max_abs <= 1e-10


def test_running_past_horizon_aborts():
    m = build_field_model(FieldModelConfig(T=1.0))
    with pytest.raises(HorizonError):
        run_experiment(m, 2.0)
    s = init_excited(m)
    with pytest.raises(HorizonError):
        for _ in range(200):
            s = step(s, m)


@pytest.fixture(scope="module")
def probe_model():
    n_steps = 100
    cfg = FieldModelConfig(T=(n_steps + 16) * DEFAULT.h)
    return build_field_model(cfg, WAVE_DET.with_scale(10.0)), n_steps


@pytest.mark.parametrize("region", ["R", "ML", "any"])
def test_wavezone_leakage(probe_model, region):
    m, n_steps = probe_model
    probe = random_wave_probe(m, np.random.default_rng(3), n_steps, region)
    assert wavezone_leakage(m, n_steps, [probe]) <= 1e-13


def test_outgoing_pair_leaks_exactly_nothing(probe_model):
    m, n_steps = probe_model
    probe = random_wave_probe(m, np.random.default_rng(4), n_steps, "RL")
    assert wavezone_leakage(m, n_steps, [probe]) == 0.0


def test_leakage_rejects_core_probe(probe_model):
    m, _ = probe_model
    with pytest.raises(ContractViolation):
        wavezone_leakage(m, 1, [init_excited(m)])


def test_one_way_transport_exhaustive():
    m = build_field_model(FieldModelConfig(h=0.25, T=2.0), DetectorConfig(x_minus=1.0, x_plus=1.5, n_k=4, scale=3.0))
    regions = m.region_masks()
    allowed = {"R": ("R", "RL"), "L": ("L", "RL"), "RL": ("RL",)}
    checked = 0
    for name, targets in allowed.items():
        ok = np.any([regions[t] for t in targets], axis=0)
        for i, j in np.argwhere(regions[name]):
            if i >= m.n_r - 2 or j < 2:
                continue
            s = m.zero_state()
            s.F[i, j] = 1.0
            out = step(s, m)
            assert core_norm(m, out) == 0.0
            assert not out.F[~ok].any()
            checked += 1
    ml_ok = regions["R"] | regions["RL"]
    for k, j in np.ndindex(m.n_k, m.n_l):
        if j < 2:
            continue
        s = m.zero_state()
        s.D[k, j] = 1.0
        out = step(s, m)
        assert core_norm(m, out) == 0.0
        assert not out.F[~ml_ok].any()
        checked += 1
    assert checked >= 200


def test_intertwining_on_field_step_maps():
    n_steps = 40
    cfg = FieldModelConfig(T=(n_steps + 16) * DEFAULT.h)
    free = build_field_model(cfg, WAVE_DET.with_scale(0.0))
    measured = build_field_model(cfg, WAVE_DET.with_scale(25.0))
    rng = np.random.default_rng(11)
    probes = [free.pack(init_excited(free))]
    for _ in range(3):
        s = random_wave_probe(free, rng, n_steps)
        s.C = 0.5
        v = free.pack(s)
        probes.append(v / np.linalg.norm(v))
    rep = verify_intertwining(measured.step_map(), free.step_map(), free.partition.core, n_steps, probes, 1e-10)
    assert rep.passed, rep


def test_nogo_sweep_trivial_scale():
    rep = nogo_sweep(DEFAULT, WAVE_DET, [0.0])
    assert rep.deviations == [0.0] and rep.passed


@pytest.mark.parametrize("dispersion", ["linear", "quadratic"])
def test_nogo_sweep_independent_of_scale(dispersion):
    det = DetectorConfig(dispersion=dispersion)
    rep = nogo_sweep(DEFAULT, det, [0.0, 1.0, 10.0, 100.0])
    assert rep.passed
    assert rep.max_deviation <= 1e-9
    assert rep.detector_populations[2] > 1e-4
    assert max(rep.norm_drifts) <= 1e-9


def test_nogo_sweep_with_gaussian_kernel():
    cfg = FieldModelConfig(kernel=KernelSpec("gaussian", g0=2.0, sigma=0.2), T=4.0)
    rep = nogo_sweep(cfg, WAVE_DET, [0.0, 30.0])
    assert rep.passed and rep.detector_populations[1] > 1e-4


def test_nogo_sweep_rejects_overlap():
    with pytest.raises(ConfigurationError):
        nogo_sweep(DEFAULT, OVERLAP_DET, [0.0, 1.0])


def test_semidirect_control():
    rep = semidirect_control(DEFAULT, OVERLAP_DET, [0.0, 1.0, 2.0, 5.0])
    assert rep.deviations[0] == 0.0
    d1, d2, d5 = rep.deviations[1:]
    assert d1 < d2 < d5
    assert d5 > 1e-3
    assert rep.passed
    # regression fixture from this implementation, not an independent value
    assert d5 == pytest.approx(0.016213761875863486, rel=1e-6)
