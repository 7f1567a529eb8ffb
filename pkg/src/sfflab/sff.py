"""Spectral form factors, spectral filters and random-matrix baselines."""
import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DegenerateFilterError, ParameterError

FILTER_KINDS = ("gaussian", "pea", "flat")
ENSEMBLES = ("GOE", "GUE", "COE", "CUE")
CSV_COLUMNS = ("time", "K", "stderr", "n_disorder")


@dataclass(frozen=True)
class FilterSpec:
    """Spectral filter around ``center``.

    ``gaussian``: exp(-(E - center)^2 / (2 width^2)); ``width=None`` means
    one sixth of the spectrum's width. ``pea``: the M-step phase-estimation
    filter with base time ``t0``. ``flat``: equal weights.
    """

    kind: str = "pea"
    center: float | None = None
    width: float | None = None
    M: int = 3
    t0: float | None = None

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ParameterError(f"unknown filter kind {self.kind!r}")
        if self.kind == "pea":
            if self.M < 0:
                raise ParameterError("M must be >= 0")
            if self.t0 is not None and self.t0 <= 0:
                raise ParameterError("t0 must be positive")
        if self.kind == "gaussian" and self.width is not None and self.width <= 0:
            raise ParameterError("gaussian width must be positive")


def pea_filter(x, M, t0):
    """``[sin(2^M t0 x) / (2^M sin(t0 x))]^2``, exact at the removable points.

    The ratio only depends on ``t0 x`` modulo pi (2^M is even for M >= 1),
    so the argument is reduced to [-pi/2, pi/2] and evaluated as a ratio of
    normalised sincs, which equals 1 at the origin without special-casing.
    """
    a = np.asarray(x, dtype=float) * t0
    if M == 0:
        return np.ones_like(a)
    eps = a - np.pi * np.round(a / np.pi)
    n = 2.0 ** M
    r = n * eps / np.pi
    return (np.sinc(r) / np.sinc(eps / np.pi)) ** 2


def auto_t0(energies, center):
    """Largest base time keeping the filter's aliases off the spectrum."""
    xmax = float(np.max(np.abs(np.asarray(energies) - center)))
    if xmax == 0:
        return 1.0
    return np.pi / (2 * xmax)


def filter_values(spec, spectrum):
    """Normalised weights f(E_l) of ``spec`` on ``spectrum``."""
    e = np.asarray(getattr(spectrum, "eigenvalues", spectrum), dtype=float)
    if e.size == 0:
        raise ParameterError("empty spectrum")
    center = 0.5 * (e.min() + e.max()) if spec.center is None else spec.center
    if spec.kind == "flat":
        raw = np.ones_like(e)
    elif spec.kind == "gaussian":
        width = spec.width if spec.width is not None else (e.max() - e.min()) / 6
        if width <= 0:
            raise DegenerateFilterError("gaussian width collapses on a single level")
        raw = np.exp(-0.5 * ((e - center) / width) ** 2)
    else:
        t0 = spec.t0 if spec.t0 is not None else auto_t0(e, center)
        raw = pea_filter(e - center, spec.M, t0)
    total = raw.sum()
    if not total > 1e-300:
        raise DegenerateFilterError(f"{spec.kind} filter misses the spectrum")
    return raw / total


def k_infinity(weights):
    w = np.asarray(weights, dtype=float)
    return float(np.dot(w, w))


@dataclass(eq=False)
class SffCurve:
    times: np.ndarray
    K: np.ndarray
    stderr: np.ndarray
    n_disorder: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.K = np.asarray(self.K, dtype=float)
        n = len(self.times)
        self.stderr = np.broadcast_to(np.asarray(self.stderr, dtype=float), (n,)).copy()
        self.n_disorder = np.broadcast_to(np.asarray(self.n_disorder, dtype=np.int64), (n,)).copy()
        if self.K.shape != (n,):
            raise ParameterError("K and times differ in length")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise ParameterError("times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for t, k, s, n in zip(self.times, self.K, self.stderr, self.n_disorder):
            w.writerow([f"{t:.17g}", f"{k:.17g}", f"{s:.17g}", int(n)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, meta=None):
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != CSV_COLUMNS:
            raise ParameterError(f"curve CSV header must be {','.join(CSV_COLUMNS)}")
        body = rows[1:]
        for r in body:
            if len(r) != len(CSV_COLUMNS):
                raise ParameterError(f"malformed curve row {r!r}")
        cols = list(zip(*body)) if body else [(), (), (), ()]
        return cls(
            times=np.array(cols[0], dtype=float),
            K=np.array(cols[1], dtype=float),
            stderr=np.array(cols[2], dtype=float),
            n_disorder=np.array(cols[3], dtype=np.int64),
            meta=dict(meta or {}),
        )

    def to_json(self):
        return json.dumps(
            {
                "columns": dict(
                    time=self.times.tolist(),
                    K=self.K.tolist(),
                    stderr=self.stderr.tolist(),
                    n_disorder=self.n_disorder.tolist(),
                ),
                "meta": self.meta,
            },
            indent=2,
            sort_keys=True,
            default=_json_default,
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        c = d["columns"]
        return cls(c["time"], c["K"], c["stderr"], c["n_disorder"], d.get("meta", {}))


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"{type(o).__name__} is not JSON serialisable")


def filtered_trace(energies, weights, times):
    """``sum_l w_l exp(-i E_l t)`` for every ``t``."""
    return kernels.filtered_trace(
        np.ascontiguousarray(energies, dtype=float),
        np.ascontiguousarray(weights, dtype=float),
        np.ascontiguousarray(np.atleast_1d(times), dtype=float),
    )


def sff_values(energies, weights, times):
    z = filtered_trace(energies, weights, times)
    return z.real ** 2 + z.imag ** 2


def exact_sff(spectrum, weights, times):
    """Single-realization K(tau) = |sum_l f_l e^{-i E_l tau}|^2."""
    e = np.asarray(getattr(spectrum, "eigenvalues", spectrum), dtype=float)
    w = np.asarray(weights, dtype=float)
    if w.shape != e.shape:
        raise ParameterError("one weight per level is required")
    times = np.asarray(times, dtype=float)
    return SffCurve(times, sff_values(e, w, times), 0.0, 1)


def exact_sff_floquet(spectrum, weights=None, t_max=None, times=None):
    """K(t) = |sum_l f_l e^{-i lambda_l theta t}|^2 on integer periods.

    ``spectrum`` is a floquet :class:`Spectrum` or a unitary (then the
    quasienergy phases are taken with period 1). ``weights=None`` is the
    infinite-temperature ensemble 1/D.
    """
    from .spectra import quasienergies

    if getattr(spectrum, "kind", None) != "floquet":
        spectrum = quasienergies(spectrum, 1.0)
    phases = spectrum.eigenvalues * spectrum.period
    d = len(phases)
    w = np.full(d, 1.0 / d) if weights is None else np.asarray(weights, dtype=float)
    if times is None:
        if t_max is None:
            raise ParameterError("need t_max or times")
        times = np.arange(int(t_max) + 1)
    times = np.asarray(times, dtype=float)
    return SffCurve(times, sff_values(phases, w, times), 0.0, 1)


def goe_form(s):
    """K_GOE / K_infinity as a function of s = tau / tau_H >= 0."""
    s = np.abs(np.asarray(s, dtype=float))
    out = np.empty_like(s)
    lo = s <= 1
    out[lo] = 2 * s[lo] - s[lo] * np.log1p(2 * s[lo])
    hi = ~lo
    sh = s[hi]
    out[hi] = 2 - sh * np.log((2 * sh + 1) / (2 * sh - 1))
    return out


def gue_form(s):
    s = np.abs(np.asarray(s, dtype=float))
    return np.minimum(s, 1.0)


def rmt_values(ensemble, times, tau_h=None, k_inf=None, dim=None):
    times = np.asarray(times, dtype=float)
    ens = ensemble.upper()
    if ens in ("GOE", "GUE"):
        if tau_h is None or tau_h <= 0:
            raise ParameterError("tau_H must be positive")
        if k_inf is None or not 0 < k_inf <= 1:
            raise ParameterError("K_inf must be in (0, 1]")
        scale, s = k_inf, times / tau_h
    elif ens in ("COE", "CUE"):
        if dim is None or dim < 2:
            raise ParameterError("circular ensembles need dimension >= 2")
        scale, s = 1.0 / dim, times / dim
    else:
        raise ParameterError(f"unknown ensemble {ensemble!r}")
    form = goe_form if ens in ("GOE", "COE") else gue_form
    return scale * form(s)


def rmt_baseline(ensemble, times, tau_h=None, k_inf=None, dim=None):
    """Random-matrix K on ``times``.

    GOE/GUE are scaled by (tau_H, K_inf); COE/CUE use tau_H = D and
    K_inf = 1/D, i.e. [2t - t ln(1 + 2t/D)]/D^2 and t/D^2 for t <= D.
    """
    vals = rmt_values(ensemble, times, tau_h, k_inf, dim)
    meta = {"ensemble": ensemble.upper(), "tau_H": tau_h, "K_inf": k_inf, "D": dim}
    return SffCurve(times, vals, 0.0, 0, meta={k: v for k, v in meta.items() if v is not None})


def thouless_time(curve, baseline, eps=0.3, sustain=5):
    """Earliest grid time from which |K/K_rmt - 1| < eps holds for ``sustain``
    consecutive points; ``None`` if it never does."""
    if eps <= 0 or sustain < 1:
        raise ParameterError("need eps > 0 and sustain >= 1")
    t1, t2 = np.asarray(curve.times), np.asarray(baseline.times)
    if t1.shape != t2.shape or not np.allclose(t1, t2, rtol=1e-12, atol=0):
        raise ParameterError("curve and baseline must share a time grid")
    kb = np.asarray(baseline.K)
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = (kb > 0) & (np.abs(np.asarray(curve.K) / kb - 1) < eps)
    run = 0
    for i, good in enumerate(ok):
        run = run + 1 if good else 0
        if run == sustain:
            return float(t1[i - sustain + 1])
    return None


def time_grid(t_min, t_max, points, spacing="log"):
    if points < 2 or t_max <= t_min:
        raise ParameterError("grid needs points >= 2 and t_max > t_min")
    if spacing == "log":
        if t_min <= 0:
            raise ParameterError("log grid needs t_min > 0")
        g = np.geomspace(t_min, t_max, points)
    elif spacing == "linear":
        g = np.linspace(t_min, t_max, points)
    else:
        raise ParameterError(f"unknown spacing {spacing!r}")
    return g
