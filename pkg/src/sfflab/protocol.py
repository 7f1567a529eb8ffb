"""Shot-level Monte Carlo of the clock-qubit SFF protocol.

Every state that occurs is diagonal in the energy eigenbasis, so a prepared
copy is simulated as a sampled eigenstate index plus independent Bernoulli
readouts conditioned on its energy. No state vectors are propagated.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DegenerateFilterError, ParameterError
from .sff import auto_t0, pea_filter


def readout_probability(E, t, delta=0.0, outcome="+"):
    """Probability of reading the clock qubit in |+> (or |->) after QND time t."""
    c = np.cos(0.5 * (np.asarray(E, dtype=float) - delta) * t)
    p_plus = c * c
    if outcome == "+":
        return p_plus
    if outcome == "-":
        s = np.sin(0.5 * (np.asarray(E, dtype=float) - delta) * t)
        return s * s
    raise ParameterError(f"outcome must be '+' or '-', got {outcome!r}")


@dataclass(frozen=True, eq=False)
class DiagonalEnsemble:
    """Weights over energy eigenstates; ``total`` keeps the pre-normalisation mass."""

    weights: np.ndarray
    total: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0):
            raise ParameterError("ensemble weights must be non-negative")
        s = w.sum()
        if abs(s - 1.0) > 1e-12:
            raise ParameterError(f"weights must sum to 1 (got {s!r}); use normalized()")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def normalized(cls, raw):
        raw = np.asarray(raw, dtype=float)
        total = float(raw.sum())
        if not total > 0:
            raise DegenerateFilterError("ensemble has no weight")
        return cls(raw / total, total)

    @classmethod
    def infinite_temperature(cls, dim):
        return cls(np.full(dim, 1.0 / dim))

    @property
    def dim(self):
        return len(self.weights)

    def mean_energy(self, spectrum):
        return float(np.dot(self.weights, spectrum.eigenvalues))


@dataclass(frozen=True)
class PrepConfig:
    """Filtering by M postselected readouts.

    Step m multiplies the weights by cos^2(2^m t0 (E - delta)), i.e. a
    readout after QND time 2 t_m with t_m = 2^m t0. ``t0=None`` picks
    pi / (2 |E - delta|_max); ``delta=None`` the spectrum's centre.
    """

    M: int = 3
    t0: float | None = None
    delta: float | None = None

    def __post_init__(self):
        if self.M < 0:
            raise ParameterError("M must be >= 0")
        if self.t0 is not None and self.t0 <= 0:
            raise ParameterError("t0 must be positive")

    def resolve(self, spectrum):
        """Concrete ``(M, t0, delta)`` for ``spectrum``."""
        e = spectrum.eigenvalues
        delta = spectrum.center if self.delta is None else float(self.delta)
        t0_max = auto_t0(e, delta)
        if self.t0 is None:
            t0 = t0_max
        else:
            t0 = float(self.t0)
            if t0 > t0_max * (1 + 1e-12):
                raise ParameterError(
                    f"t0={t0:.4g} aliases the spectrum; need t0 <= {t0_max:.4g}"
                )
        return self.M, t0, delta

    def interaction_times(self, t0):
        return [2.0 ** (m + 1) * t0 for m in range(self.M)]


@dataclass(frozen=True)
class ShotPlan:
    N: int
    n_disorder: int = 1
    n_reuse: int = 1
    master_seed: int = 0

    def __post_init__(self):
        for name in ("N", "n_disorder", "n_reuse"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1")


@dataclass
class MeasurementRecord:
    times: np.ndarray
    m_x: np.ndarray
    m_y: np.ndarray
    K_hat: np.ndarray
    variance: np.ndarray
    attempts: int
    copies: int
    meta: dict = field(default_factory=dict)


def prepare_mc(spectrum, prep, rho_in=None):
    """Filtered ensemble and its success probability ``p_mc``."""
    e = spectrum.eigenvalues
    if rho_in is None:
        rho_in = DiagonalEnsemble.infinite_temperature(len(e))
    if rho_in.dim != len(e):
        raise ParameterError("ensemble and spectrum differ in size")
    M, t0, delta = prep.resolve(spectrum)
    raw = pea_filter(e - delta, M, t0) * rho_in.weights
    p_mc = float(raw.sum())
    if not p_mc >= 1e-300:
        raise DegenerateFilterError(f"filter misses the spectrum (p_mc={p_mc:.3g})")
    return DiagonalEnsemble(raw / p_mc, p_mc), p_mc


def _sample_indices(weights, n, rng):
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    return np.minimum(idx, len(weights) - 1)


def sample_prep_trajectory(spectrum, prep, rho_in, rng):
    """One attempt: draw l ~ rho_in, then M sequential readouts.

    Returns ``(success, l)``; ``l`` is the sampled eigenstate either way.
    """
    M, t0, delta = prep.resolve(spectrum)
    ell = int(_sample_indices(rho_in.weights, 1, rng)[0])
    x = spectrum.eigenvalues[ell] - delta
    for t in prep.interaction_times(t0):
        if rng.random() >= readout_probability(x, t):
            return False, ell
    return True, ell


def sample_prepared_copies(spectrum, prep, rho_in, n_copies, rng, batch=None):
    """Eigenstate indices of ``n_copies`` successful preparations.

    Returns ``(indices, attempts)``; ``attempts`` counts every run up to the
    last success used.
    """
    M, t0, delta = prep.resolve(spectrum)
    e = np.ascontiguousarray(spectrum.eigenvalues, dtype=float)
    if M == 0:
        return _sample_indices(rho_in.weights, n_copies, rng), n_copies
    _, p_mc = prepare_mc(spectrum, prep, rho_in)
    found = []
    n_found = 0
    attempts = 0
    while n_found < n_copies:
        need = n_copies - n_found
        size = batch or int(min(max(1.2 * need / p_mc + 64, 256), 4_000_000))
        ell = _sample_indices(rho_in.weights, size, rng)
        u = rng.random((size, M))
        ok = kernels.prep_accept(e[ell] - delta, u, t0)
        hits = np.flatnonzero(ok)
        if len(hits) >= need:
            hits = hits[:need]
            attempts += int(hits[-1]) + 1
        else:
            attempts += size
        found.append(ell[hits])
        n_found += len(hits)
    return np.concatenate(found), attempts


def estimate_k(m_x, m_y, N):
    """Unbiased K from quadrature means of N shots each."""
    if N < 2:
        raise ParameterError("estimator needs N >= 2")
    m_x, m_y = np.asarray(m_x, dtype=float), np.asarray(m_y, dtype=float)
    return N / (N - 1) * (m_x * m_x + m_y * m_y - 2.0 / N)


def variance_model(K, N):
    """Large-N shot-noise variance of the K estimator."""
    return 4.0 * np.asarray(K, dtype=float) / N + 4.0 / N ** 2


def snr(K, N):
    return np.asarray(K, dtype=float) / np.sqrt(variance_model(K, N))


def k_threshold(N, n_disorder=1):
    """Smallest K resolved with SNR 1 after averaging over ``n_disorder``."""
    return 2 * (1 + math.sqrt(2)) / N / math.sqrt(n_disorder)


def _slot_layout(n_times, N, n_reuse):
    """Per-quadrature shot slots and the prepared copy serving each.

    Slots run time-fastest, so consecutive slots of one copy hit distinct
    times (round robin, ``min(n_reuse, n_times)`` slots per copy).
    """
    r = max(1, min(n_reuse, n_times))
    per_quad = N * n_times
    k = np.arange(per_quad)
    tidx = k % n_times
    copy = k // r
    n_copies = -(-per_quad // r)
    return tidx, copy, n_copies, r


def measure_phases(energies, copy_ell_x, copy_ell_y, times, N, n_reuse, rng, delta=0.0):
    """Tally N readouts per quadrature and time for sampled copies.

    ``copy_ell_x``/``copy_ell_y`` give the eigenstate of every prepared copy
    used for sigma^x/sigma^y. Returns ``(m_x, m_y)`` arrays over ``times``.
    """
    times = np.asarray(times, dtype=float)
    T = len(times)
    tidx, copy, n_copies, _ = _slot_layout(T, N, n_reuse)
    if len(copy_ell_x) != n_copies or len(copy_ell_y) != n_copies:
        raise ParameterError(f"need {n_copies} copies per quadrature")
    e = np.asarray(energies, dtype=float) - delta
    phase = np.concatenate([e[copy_ell_x[copy]], e[copy_ell_y[copy]]]) * np.tile(times[tidx], 2)
    quad = np.repeat(np.array([0, 1], dtype=np.int64), len(tidx))
    tt = np.tile(tidx, 2).astype(np.int64)
    u = rng.random(len(phase))
    acc = kernels.shot_tally(phase, quad, tt, u, T)
    return acc[:, 0] / N, acc[:, 1] / N


def copies_needed(n_times, N, n_reuse):
    return _slot_layout(n_times, N, n_reuse)[2]


def measure_sff_point(source, tau, N, rng, delta=0.0):
    """``(m_x, m_y)`` from N shots per quadrature at time ``tau``.

    ``source`` is either ``(energies, DiagonalEnsemble)`` (fresh eigenstate per
    shot) or a single energy (every shot on the same eigenstate).
    """
    if N < 1:
        raise ParameterError("N must be >= 1")
    if isinstance(source, tuple):
        energies, ens = source
        ex = np.asarray(energies)[_sample_indices(ens.weights, N, rng)]
        ey = np.asarray(energies)[_sample_indices(ens.weights, N, rng)]
    else:
        ex = ey = np.full(N, float(source))
    m = measure_phases(
        np.concatenate([ex, ey]), np.arange(N), N + np.arange(N), [tau], N, 1, rng, delta
    )
    return float(m[0][0]), float(m[1][0])


def run_with_recycling(energy, taus, N, rng, delta=0.0):
    """Per-tau ``(m_x, m_y)`` with every shot conditioned on one eigenstate."""
    taus = np.asarray(taus, dtype=float)
    n_copies = copies_needed(len(taus), N, len(taus))
    same = np.zeros(n_copies, dtype=np.int64)
    return measure_phases(np.array([energy]), same, same, taus, N, len(taus), rng, delta)


def recycled_weights(weights, energies, tau, delta=0.0):
    """Outcome-averaged ensemble after one QND readout at ``tau``."""
    w = np.asarray(weights, dtype=float)
    p_plus = readout_probability(energies, tau, delta, "+")
    p_minus = readout_probability(energies, tau, delta, "-")
    return p_plus * w + p_minus * w


def estimate_heisenberg(p_mc, M, t0, dim):
    """Heisenberg time from the preparation success probability."""
    if not 0 < p_mc <= 1:
        raise ParameterError("p_mc must be in (0, 1]")
    return 2.0 ** (M + 1) * t0 * dim * p_mc


def estimate_plateau(p_mc, dim):
    """Late-time plateau from the preparation success probability."""
    if not 0 < p_mc <= 1:
        raise ParameterError("p_mc must be in (0, 1]")
    return (2.0 / 3.0) / (dim * p_mc)


def n_run_accounting(n_disorder, N, p_mc, n_reuse):
    """Experimental runs per data point, N_d N / (p_mc N_reuse)."""
    return n_disorder * N / (p_mc * n_reuse)


# ---------------------------------------------------------------------------
# Disorder-averaged experiments

FLOQUET_MODELS = ("floquet-heisenberg", "kicked-ising-2", "kicked-ising-3")
FLOQUET_SAMPLING = ("eigenbasis", "product")


@dataclass(frozen=True)
class HamiltonianTask:
    """Disordered XXZ ring measured after microcanonical preparation."""

    spec: object
    prep: PrepConfig = PrepConfig()
    law: str = "uniform"
    sector: int | None = 0


@dataclass(frozen=True)
class FloquetTask:
    """Periodically driven ring measured from the infinite-temperature state."""

    model: str
    L: int
    theta: float
    sampling: str = "eigenbasis"

    def __post_init__(self):
        if self.model not in FLOQUET_MODELS:
            raise ParameterError(f"unknown floquet model {self.model!r}")
        if self.sampling not in FLOQUET_SAMPLING:
            raise ParameterError(f"unknown sampling mode {self.sampling!r}")
        if self.theta <= 0:
            raise ParameterError("driving period must be positive")
        if not 3 <= self.L <= 12:
            raise ParameterError("floquet drives need 3 <= L <= 12")


def floquet_spectrum(task, seed, want_vectors=False):
    """Quasienergy spectrum (period ``task.theta``) of one disorder draw."""
    from .models import (build_floquet_halves, kicked_ising_layers, sample_fields)
    from .spectra import floquet_operator, quasienergies

    L, th = task.L, task.theta
    if task.model == "floquet-heisenberg":
        dis = sample_fields(L, 1.0, "normal", seed, ("x", "y", "z"))
        h1, h2 = build_floquet_halves(L, dis)
        U = floquet_operator([(h1, th / 2), (h2, th / 2)])
    else:
        dis = sample_fields(L, 1.0, "uniform", seed, ("x", "y", "z"))
        layers = kicked_ising_layers(L, dis, int(task.model[-1]))
        U = floquet_operator([(h, th) for h in layers])
    return quasienergies(U, th, want_vectors=want_vectors)


@dataclass
class RealizationResult:
    index: int
    seed: int
    ok: bool
    error: str | None = None
    K_exact: np.ndarray | None = None
    K_hat: np.ndarray | None = None
    dim: int = 0
    p_mc: float | None = None
    p_mc_measured: float | None = None
    attempts: int = 0
    copies: int = 0
    t0: float | None = None
    delta: float | None = None
    M: int = 0
    tau_H: float | None = None
    K_inf: float | None = None
    tau_H_est: float | None = None
    K_inf_est: float | None = None

    def summary(self):
        keys = ("index", "seed", "ok", "error", "dim", "p_mc", "p_mc_measured",
                "attempts", "copies", "t0", "delta", "M", "tau_H", "K_inf",
                "tau_H_est", "K_inf_est")
        return {k: getattr(self, k) for k in keys}


def _hamiltonian_realization(task, plan, times, index, measure):
    from .models import build_heisenberg, sample_disorder
    from .rng import derived_seed, stream
    from .spectra import eig_hermitian, mean_level_spacing

    seed = derived_seed(plan.master_seed, "disorder", index)
    dis = sample_disorder(task.spec, task.law, seed)
    spectrum = eig_hermitian(build_heisenberg(task.spec, dis, task.sector), want_vectors=False)
    M, t0, delta = task.prep.resolve(spectrum)
    rho_in = DiagonalEnsemble.infinite_temperature(spectrum.dim)
    rho_mc, p_mc = prepare_mc(spectrum, task.prep, rho_in)
    res = RealizationResult(index, seed, True, dim=spectrum.dim, p_mc=p_mc, t0=t0,
                            delta=delta, M=M)
    try:
        res.tau_H = mean_level_spacing(spectrum)[1]
    except ParameterError:
        res.tau_H = None
    res.K_inf = float(np.dot(rho_mc.weights, rho_mc.weights))
    res.K_exact = sff_curve_values(spectrum.eigenvalues - delta, rho_mc.weights, times)
    res.tau_H_est = estimate_heisenberg(p_mc, M, t0, spectrum.dim)
    res.K_inf_est = estimate_plateau(p_mc, spectrum.dim)
    if not measure:
        return res
    rng = stream(plan.master_seed, "shots", index, 0)
    n_copies = copies_needed(len(times), plan.N, plan.n_reuse)
    ell, attempts = sample_prepared_copies(spectrum, task.prep, rho_in, 2 * n_copies, rng)
    mx, my = measure_phases(spectrum.eigenvalues, ell[:n_copies], ell[n_copies:], times,
                            plan.N, plan.n_reuse, rng, delta)
    res.K_hat = estimate_k(mx, my, plan.N)
    res.attempts, res.copies = attempts, 2 * n_copies
    res.p_mc_measured = 2 * n_copies / attempts
    res.tau_H_est = estimate_heisenberg(res.p_mc_measured, M, t0, spectrum.dim)
    res.K_inf_est = estimate_plateau(res.p_mc_measured, spectrum.dim)
    return res


def _floquet_realization(task, plan, times, index, measure):
    from .rng import derived_seed, stream

    seed = derived_seed(plan.master_seed, "disorder", index)
    product = task.sampling == "product"
    spectrum = floquet_spectrum(task, seed, want_vectors=measure and product)
    phases = spectrum.eigenvalues * spectrum.period
    d = spectrum.dim
    res = RealizationResult(index, seed, True, dim=d, p_mc=1.0, M=0, tau_H=float(d),
                            K_inf=1.0 / d)
    res.K_exact = sff_curve_values(phases, np.full(d, 1.0 / d), times)
    if not measure:
        return res
    rng = stream(plan.master_seed, "shots", index, 0)
    if product:
        mx, my = _product_state_shots(spectrum, times, plan.N, rng)
        res.copies = 2 * plan.N * len(times)
    else:
        n_copies = copies_needed(len(times), plan.N, plan.n_reuse)
        ell = _sample_indices(np.full(d, 1.0 / d), 2 * n_copies, rng)
        mx, my = measure_phases(phases, ell[:n_copies], ell[n_copies:], times,
                                plan.N, plan.n_reuse, rng)
        res.copies = 2 * n_copies
    res.attempts = res.copies
    res.p_mc_measured = 1.0
    res.K_hat = estimate_k(mx, my, plan.N)
    return res


def _product_state_shots(spectrum, times, N, rng):
    """Fresh random basis state per shot; readout bias from <s|U^t|s>."""
    v = spectrum.eigenvectors
    occ = (v.conj() * v).real
    phases = spectrum.eigenvalues * spectrum.period
    z = occ @ np.exp(-1j * np.outer(phases, times))
    d, T = z.shape
    s = rng.integers(0, d, size=(2, N, T))
    u = rng.random((2, N, T))
    cols = np.arange(T)
    px = 0.5 * (1 + z[s[0], cols].real)
    py = 0.5 * (1 - z[s[1], cols].imag)
    mx = np.where(u[0] < px, 1.0, -1.0).sum(axis=0) / N
    my = np.where(u[1] < py, 1.0, -1.0).sum(axis=0) / N
    return mx, my


def sff_curve_values(energies, weights, times):
    from .sff import sff_values

    return sff_values(energies, weights, times)


def run_realization(task, plan, times, index, measure=True):
    """One disorder realization; numerical failures are captured, not raised."""
    from .errors import NumericalError

    try:
        if isinstance(task, FloquetTask):
            return _floquet_realization(task, plan, times, index, measure)
        return _hamiltonian_realization(task, plan, times, index, measure)
    except (NumericalError, DegenerateFilterError) as exc:
        from .rng import derived_seed

        seed = derived_seed(plan.master_seed, "disorder", index)
        return RealizationResult(index, seed, False, error=f"{type(exc).__name__}: {exc}")


@dataclass
class ExperimentResult:
    curve: object
    exact: object
    realizations: list
    complete: bool = True

    @property
    def failed(self):
        return [r for r in self.realizations if not r.ok]

    def manifest_summary(self):
        return dict(self.curve.meta)


def _call(args):
    return run_realization(*args)


def run_experiment(task, plan, times, workers=1, measure=True, t_coh=None, progress=None):
    """Disorder-averaged measured and exact SFF curves.

    Realizations are independent and folded in index order, so the result
    does not depend on ``workers``. A ``KeyboardInterrupt`` stops the run and
    returns what finished, with ``complete=False``.
    """
    from .sff import SffCurve
    from .stats import Welford

    times = np.asarray(times, dtype=float)
    jobs = [(task, plan, times, i, measure) for i in range(plan.n_disorder)]
    results = {}
    complete = True
    try:
        if workers <= 1:
            for job in jobs:
                results[job[3]] = _call(job)
                if progress:
                    progress(len(results), len(jobs))
        else:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=workers) as pool:
                for r in pool.map(_call, jobs, chunksize=max(1, len(jobs) // (4 * workers))):
                    results[r.index] = r
                    if progress:
                        progress(len(results), len(jobs))
    except KeyboardInterrupt:
        complete = False
    done = [results[i] for i in sorted(results)]
    ok = [r for r in done if r.ok]
    exact_acc, meas_acc = Welford(len(times)), Welford(len(times))
    for r in ok:
        exact_acc.push(r.K_exact)
        if measure:
            meas_acc.push(r.K_hat)
    meta = _summarise(task, plan, ok, done, measure, t_coh, complete)
    exact = SffCurve(times, exact_acc.mean, exact_acc.stderr, exact_acc.n, meta=dict(meta))
    curve = None
    if measure:
        curve = SffCurve(times, meas_acc.mean, meas_acc.stderr, meas_acc.n, meta=dict(meta))
    return ExperimentResult(curve, exact, done, complete)


def _mean(vals):
    vals = [v for v in vals if v is not None]
    return float(np.mean(vals)) if vals else None


def _summarise(task, plan, ok, done, measure, t_coh, complete):
    meta = {
        "n_disorder_requested": plan.n_disorder,
        "n_disorder_ok": len(ok),
        "failed": [{"index": r.index, "seed": r.seed, "error": r.error} for r in done if not r.ok],
        "complete": complete,
        "N": plan.N,
        "n_reuse": plan.n_reuse,
        "master_seed": plan.master_seed,
        "tau_H": _mean(r.tau_H for r in ok),
        "K_inf": _mean(r.K_inf for r in ok),
        "p_mc": _mean(r.p_mc for r in ok),
        "tau_H_est": _mean(r.tau_H_est for r in ok),
        "K_inf_est": _mean(r.K_inf_est for r in ok),
        "dim": ok[0].dim if ok else None,
    }
    if measure and ok:
        p_meas = _mean(r.p_mc_measured for r in ok)
        meta["p_mc_measured"] = p_meas
        meta["K_star"] = k_threshold(plan.N, len(ok))
        meta["total_attempts"] = int(sum(r.attempts for r in ok))
        meta["n_run_per_point"] = n_run_accounting(len(ok), plan.N, p_meas, plan.n_reuse)
        meta["shots_per_point"] = 2 * plan.N * len(ok)
    if t_coh is not None:
        meta["t_coh"] = float(t_coh)
    return meta


def min_runs_per_point(L, n_disorder, n_reuse=1):
    """Run budget needed for the threshold K* to reach the plateau scale 2^-L."""
    return 2.0 ** L * math.sqrt(n_disorder) / n_reuse
