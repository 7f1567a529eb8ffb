from fractions import Fraction

import numpy as np
import pytest
from scipy import stats as sps

from sfflab import kernels
from sfflab.errors import ParameterError
from sfflab.models import SpinModelSpec, build_heisenberg, sample_disorder
from sfflab.protocol import (
    DiagonalEnsemble,
    FloquetTask,
    HamiltonianTask,
    PrepConfig,
    ShotPlan,
    copies_needed,
    estimate_heisenberg,
    estimate_k,
    estimate_plateau,
    k_threshold,
    measure_phases,
    measure_sff_point,
    min_runs_per_point,
    n_run_accounting,
    prepare_mc,
    readout_probability,
    recycled_weights,
    run_experiment,
    run_realization,
    run_with_recycling,
    sample_prep_trajectory,
    sample_prepared_copies,
    snr,
    variance_model,
)
from sfflab.sff import exact_sff
from sfflab.spectra import Spectrum, eig_hermitian, mean_level_spacing

from .oracles import exact_mean_estimator, filter_product


def _l8(seed=0, w=2.0):
    spec = SpinModelSpec(8, w=w)
    return eig_hermitian(build_heisenberg(spec, sample_disorder(spec, seed=seed)), want_vectors=False)


def test_readout_examples():
    assert readout_probability(1.0, 5.0, delta=1.0) == 1.0
    assert readout_probability(np.pi, 1.0) == pytest.approx(0.0, abs=1e-30)
    rng = np.random.default_rng(0)
    E, t, d = rng.normal(size=100), rng.uniform(0, 50, 100), rng.normal(size=100)
    tot = readout_probability(E, t, d, "+") + readout_probability(E, t, d, "-")
    np.testing.assert_allclose(tot, 1.0, atol=1e-15)
    with pytest.raises(ParameterError):
        readout_probability(0.0, 1.0, outcome="0")


def test_no_filter_keeps_input():
    s = _l8()
    ens, p = prepare_mc(s, PrepConfig(M=0))
    assert p == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(ens.weights, 1 / s.dim)


def test_resonant_single_level():
    ens, p = prepare_mc(Spectrum(np.array([0.4])), PrepConfig(M=7, delta=0.4))
    assert p == pytest.approx(1.0)


def test_prepared_weights_follow_cosine_product():
    s = _l8(1)
    prep = PrepConfig(M=4)
    ens, p = prepare_mc(s, prep)
    M, t0, d = prep.resolve(s)
    raw = filter_product(s.eigenvalues - d, M, t0) / s.dim
    assert p == pytest.approx(raw.sum(), rel=1e-12)
    np.testing.assert_allclose(ens.weights, raw / raw.sum(), atol=1e-14)


def test_success_probability_order_of_inverse_power():
    # centred filter on a peaked density of states sits above 2^-M (see notes)
    _, p = prepare_mc(_l8(), PrepConfig(M=3))
    assert 2.0 ** -3 / 2 < p < 2.0 ** -3 * 2


def test_oversized_t0_rejected():
    s = _l8()
    _, t0, _ = PrepConfig().resolve(s)
    with pytest.raises(ParameterError):
        prepare_mc(s, PrepConfig(t0=1.5 * t0))


def test_sequential_trajectory_rate():
    s = _l8(2)
    prep = PrepConfig(M=3)
    _, p = prepare_mc(s, prep)
    rng = np.random.default_rng(11)
    rho = DiagonalEnsemble.infinite_temperature(s.dim)
    n = 20_000
    ok = sum(sample_prep_trajectory(s, prep, rho, rng)[0] for _ in range(n))
    assert abs(ok - n * p) < 3 * np.sqrt(n * p * (1 - p))


def test_batched_preparation_statistics():
    s = _l8(3)
    prep = PrepConfig(M=3)
    ens, p = prepare_mc(s, prep)
    rng = np.random.default_rng(12)
    rho = DiagonalEnsemble.infinite_temperature(s.dim)
    idx, attempts = sample_prepared_copies(s, prep, rho, 20_000, rng)
    rate = len(idx) / attempts
    assert abs(rate - p) < 3 * np.sqrt(p * (1 - p) / attempts)
    counts = np.bincount(idx, minlength=s.dim)
    expected = ens.weights * len(idx)
    keep = expected >= 5
    obs = np.append(counts[keep], counts[~keep].sum())
    exp = np.append(expected[keep], expected[~keep].sum())
    assert sps.chisquare(obs, exp).pvalue > 0.01


def test_no_filter_always_succeeds():
    s = _l8()
    rho = DiagonalEnsemble.infinite_temperature(s.dim)
    idx, attempts = sample_prepared_copies(s, PrepConfig(M=0), rho, 500, np.random.default_rng(0))
    assert attempts == 500 and len(idx) == 500


def test_static_eigenstate_always_plus():
    mx, my = measure_sff_point(0.0, 3.0, 64, np.random.default_rng(0))
    assert mx == 1.0


def test_quadrature_means_reproduce_sff():
    e = np.array([0.0, 1.0, 2.3])
    f = np.array([0.2, 0.5, 0.3])
    tau, N = 0.7, 100_000
    mx, my = measure_sff_point((e, DiagonalEnsemble(f)), tau, N, np.random.default_rng(5))
    ex, ey = np.dot(f, np.cos(e * tau)), np.dot(f, np.sin(e * tau))
    assert abs(mx - ex) < 4 / np.sqrt(N)
    assert abs(my - ey) < 4 / np.sqrt(N)
    assert ex ** 2 + ey ** 2 == pytest.approx(exact_sff(e, f, [tau]).K[0], abs=1e-14)


def test_estimator_unbiased_by_enumeration_pure_phase():
    # one level at tau = 0: sigma^x always +1, sigma^y a fair coin; K = 1
    assert exact_mean_estimator(Fraction(1), Fraction(1, 2), 2) == 1


@pytest.mark.parametrize("N", [2, 3])
def test_estimator_unbiased_by_enumeration(N):
    e, f, tau = np.array([0.0, 1.0, 2.3]), np.full(3, 1 / 3), 0.7
    px = Fraction(0.5 + 0.5 * float(np.dot(f, np.cos(e * tau))))
    py = Fraction(0.5 + 0.5 * float(np.dot(f, np.sin(e * tau))))
    K = (2 * px - 1) ** 2 + (2 * py - 1) ** 2
    assert exact_mean_estimator(px, py, N) == K


def test_estimator_zero_means():
    assert estimate_k(0.0, 0.0, 100) == pytest.approx(-2 / 99)
    with pytest.raises(ParameterError):
        estimate_k(0.0, 0.0, 1)


def test_estimator_monte_carlo_three_levels():
    e, f, tau, N = np.array([0.0, 1.0, 2.3]), np.full(3, 1 / 3), 0.7, 50
    K = exact_sff(e, f, [tau]).K[0]
    rng = np.random.default_rng(21)
    px = 0.5 + 0.5 * np.dot(f, np.cos(e * tau))
    py = 0.5 + 0.5 * np.dot(f, np.sin(e * tau))
    trials = 100_000
    mx = (2 * rng.binomial(N, px, trials) - N) / N
    my = (2 * rng.binomial(N, py, trials) - N) / N
    k = estimate_k(mx, my, N)
    assert abs(k.mean() - K) < 3 * k.std(ddof=1) / np.sqrt(trials)


def test_threshold_has_unit_snr():
    for N in (10, 100, 10_000):
        assert snr(2 * (1 + np.sqrt(2)) / N, N) == pytest.approx(1.0, rel=1e-12)
    assert k_threshold(10_000, 100) == pytest.approx(4.83e-5, rel=1e-3)
    assert variance_model(0.25, 100) == pytest.approx(0.01 + 4e-4)


def test_outcome_average_leaves_ensemble():
    rng = np.random.default_rng(3)
    w = rng.dirichlet(np.ones(50))
    e = rng.normal(size=50)
    for tau in (0.1, 3.0, 91.0):
        np.testing.assert_allclose(recycled_weights(w, e, tau, 0.2), w, rtol=0, atol=1e-15)


def test_recycled_outcomes_have_analytic_covariance():
    e = np.array([0.0, 1.0, 2.3])
    f = np.array([0.2, 0.5, 0.3])
    t1, t2 = 0.9, 2.4
    rng = np.random.default_rng(8)
    n = 40_000
    ell = rng.choice(3, size=n, p=f)
    # one copy per trial, serving both times (slots are time-fastest)
    phase = np.column_stack([e[ell] * t1, e[ell] * t2]).ravel()
    quad = np.zeros(2 * n, dtype=np.int64)
    tidx = np.arange(2 * n, dtype=np.int64)
    u = rng.random(2 * n)
    x = kernels.shot_tally(phase, quad, tidx, u, 2 * n)[:, 0].reshape(n, 2)
    c1, c2 = np.cos(e * t1), np.cos(e * t2)
    analytic = np.dot(f, c1 * c2) - np.dot(f, c1) * np.dot(f, c2)
    emp = np.cov(x[:, 0], x[:, 1])[0, 1]
    assert abs(emp - analytic) < 3 / np.sqrt(n)


def test_single_use_copies_match_slot_by_slot_path():
    e = np.array([-1.0, 0.2, 0.9, 1.4])
    times = np.array([0.5, 1.5, 4.0])
    N = 7
    nc = copies_needed(len(times), N, 1)
    assert nc == N * len(times)
    draw = np.random.default_rng(4)
    ex, ey = draw.integers(0, 4, nc), draw.integers(0, 4, nc)
    mx, my = measure_phases(e, ex, ey, times, N, 1, np.random.default_rng(99))
    u = np.random.default_rng(99).random(2 * nc)
    tally = np.zeros((len(times), 2))
    for q, ells in enumerate((ex, ey)):
        for k in range(nc):
            ph = e[ells[k]] * times[k % len(times)]
            p = 0.5 * (1 + (np.cos(ph) if q == 0 else np.sin(ph)))
            tally[k % len(times), q] += 1 if u[q * nc + k] < p else -1
    np.testing.assert_array_equal(mx, tally[:, 0] / N)
    np.testing.assert_array_equal(my, tally[:, 1] / N)


def test_recycling_single_eigenstate():
    mx, my = run_with_recycling(0.0, [0.0, 1.0, 2.0], 20, np.random.default_rng(0))
    np.testing.assert_array_equal(mx, 1.0)


def test_heisenberg_time_estimate_on_picket_fence():
    d, D = 0.1, 400
    s = Spectrum(d * np.arange(D))
    prep = PrepConfig(M=6)
    _, p = prepare_mc(s, prep)
    M, t0, _ = prep.resolve(s)
    assert estimate_heisenberg(p, M, t0, D) == pytest.approx(2 * np.pi / d, rel=0.10)


def test_estimators_on_disordered_instance():
    s = _l8(0)
    prep = PrepConfig(M=4)
    ens, p = prepare_mc(s, prep)
    M, t0, _ = prep.resolve(s)
    assert estimate_heisenberg(p, M, t0, s.dim) == pytest.approx(mean_level_spacing(s)[1], rel=0.2)
    assert estimate_plateau(p, s.dim) == pytest.approx(np.dot(ens.weights, ens.weights), rel=0.2)


def test_run_budget_formulas():
    assert n_run_accounting(100, 200, 0.2, 10) == pytest.approx(1e4)
    assert min_runs_per_point(8, 100, 10) == pytest.approx(256.0)
    with pytest.raises(ParameterError):
        estimate_plateau(0.0, 10)


def test_shot_plan_validation():
    with pytest.raises(ParameterError):
        ShotPlan(N=0)
    with pytest.raises(ParameterError):
        DiagonalEnsemble(np.array([0.5, 0.6]))


def test_realization_is_deterministic_and_valid():
    task = HamiltonianTask(SpinModelSpec(8, delta=0.8, j2=0.02, delta2=0.06, w=2.0))
    plan = ShotPlan(N=20, n_disorder=2, n_reuse=5, master_seed=9)
    t = np.geomspace(0.1, 50, 12)
    a = run_realization(task, plan, t, 1)
    b = run_realization(task, plan, t, 1)
    assert a.ok and a.copies == 2 * copies_needed(12, 20, 5)
    np.testing.assert_array_equal(a.K_hat, b.K_hat)
    assert a.p_mc_measured == a.copies / a.attempts
    assert a.tau_H > 0 and a.K_inf == pytest.approx(estimate_plateau(a.p_mc, a.dim), rel=0.3)


def test_worker_count_does_not_change_results():
    task = HamiltonianTask(SpinModelSpec(8, w=3.0), PrepConfig(M=2))
    plan = ShotPlan(N=10, n_disorder=4, n_reuse=3, master_seed=2)
    t = np.geomspace(0.1, 30, 8)
    one = run_experiment(task, plan, t, workers=1)
    two = run_experiment(task, plan, t, workers=2)
    assert one.curve.to_csv() == two.curve.to_csv()
    assert one.exact.to_csv() == two.exact.to_csv()


def test_smallest_shot_count_runs():
    task = HamiltonianTask(SpinModelSpec(8, w=2.0))
    res = run_experiment(task, ShotPlan(N=2, n_disorder=2), np.geomspace(0.1, 10, 5))
    assert res.complete and len(res.failed) == 0
    assert np.all(np.isfinite(res.curve.K))


@pytest.mark.parametrize("model", ["kicked-ising-2", "kicked-ising-3", "floquet-heisenberg"])
@pytest.mark.parametrize("sampling", ["eigenbasis", "product"])
def test_floquet_runs(model, sampling):
    task = FloquetTask(model, 4, 1.0, sampling)
    res = run_experiment(task, ShotPlan(N=50, n_disorder=3), np.arange(0, 17.0))
    assert res.exact.K[0] == pytest.approx(1.0)
    assert abs(res.curve.K[0] - 1.0) < 0.2


def test_small_period_smoke():
    res = run_experiment(FloquetTask("kicked-ising-2", 4, 0.01), ShotPlan(N=10, n_disorder=2),
                         np.arange(0, 17.0))
    assert res.complete


def test_floquet_size_limits():
    with pytest.raises(ParameterError):
        FloquetTask("kicked-ising-2", 13, 1.0)
