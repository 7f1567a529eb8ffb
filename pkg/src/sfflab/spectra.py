"""Eigendecompositions, propagators and Floquet quasienergies."""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericalError, ParameterError

UNITARITY_TOL = 1e-9
RECONSTRUCTION_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ascending energies (or quasienergies in [0, 2pi/period)).

    ``eigenvectors[:, l]`` is the eigenvector of ``eigenvalues[l]`` when
    present.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = field(default=None, repr=False)
    kind: str = "hamiltonian"
    period: float | None = None

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        if np.any(np.diff(ev) < 0):
            raise ParameterError("eigenvalues must be ascending")
        if self.kind == "floquet":
            if not self.period or self.period <= 0:
                raise ParameterError("floquet spectrum needs a positive period")
            if ev.size and (ev[0] < 0 or ev[-1] >= 2 * np.pi / self.period):
                raise ParameterError("quasienergies outside [0, 2pi/period)")
        elif self.kind != "hamiltonian":
            raise ParameterError(f"unknown spectrum kind {self.kind!r}")
        ev.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)
        if self.eigenvectors is not None:
            v = np.asarray(self.eigenvectors, dtype=np.complex128)
            v.setflags(write=False)
            object.__setattr__(self, "eigenvectors", v)

    def __len__(self):
        return len(self.eigenvalues)

    @property
    def dim(self):
        return len(self.eigenvalues)

    @property
    def width(self):
        return float(self.eigenvalues[-1] - self.eigenvalues[0])

    @property
    def center(self):
        return 0.5 * float(self.eigenvalues[-1] + self.eigenvalues[0])


@dataclass(frozen=True, eq=False)
class UnitaryOperator:
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ParameterError("unitary must be a square matrix")
        res = unitarity_error(m)
        if res >= UNITARITY_TOL:
            raise NumericalError(f"operator is not unitary (residual {res:.3g})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self):
        return self.matrix.shape[0]


def unitarity_error(m):
    return float(np.abs(m.conj().T @ m - np.eye(m.shape[0])).max(initial=0.0))


def eig_hermitian(H, want_vectors=True):
    """Dense Hermitian eigensolve of a :class:`HermitianOperator` or array."""
    m = getattr(H, "matrix", H)
    m = np.asarray(m)
    try:
        if want_vectors:
            w, v = np.linalg.eigh(m)
        else:
            w, v = np.linalg.eigvalsh(m), None
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed for {m.shape} matrix: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise NumericalError("eigensolver returned non-finite eigenvalues")
    if v is not None:
        scale = max(1.0, float(np.abs(w).max(initial=0.0)))
        res = float(np.abs(m - (v * w) @ v.conj().T).max(initial=0.0))
        if res >= RECONSTRUCTION_TOL * scale:
            raise NumericalError(f"eigendecomposition residual {res:.3g} too large")
    return Spectrum(w, v)


def propagator(spectrum, t):
    """``exp(-i H t)`` from a spectrum carrying eigenvectors."""
    if spectrum.eigenvectors is None:
        raise ParameterError("propagator needs eigenvectors")
    v = spectrum.eigenvectors
    return UnitaryOperator((v * np.exp(-1j * spectrum.eigenvalues * t)) @ v.conj().T)


def floquet_operator(layers):
    """``prod_k exp(-i tau_k H_k)`` for ``layers = [(H_1, tau_1), ...]``.

    Matrix-product order follows the list, so the last layer acts first on a
    state (``[(H1, a), (H2, b)]`` gives ``e^{-i a H1} e^{-i b H2}``).
    """
    if not layers:
        raise ParameterError("need at least one layer")
    dim = layers[0][0].dim
    u = np.eye(dim, dtype=np.complex128)
    for H, tau in layers:
        if H.dim != dim:
            raise ParameterError(f"layer dimension {H.dim} != {dim}")
        if tau <= 0:
            raise ParameterError("layer durations must be positive")
        u = u @ propagator(eig_hermitian(H), tau).matrix
    return UnitaryOperator(u)


def quasienergies(U, period, want_vectors=False):
    """Quasienergies ``-arg(z)/period`` folded into ``[0, 2pi/period)``."""
    m = getattr(U, "matrix", U)
    res = unitarity_error(np.asarray(m))
    if res >= UNITARITY_TOL:
        raise NumericalError(f"operator is not unitary (residual {res:.3g})")
    if want_vectors:
        # complex Schur form of a normal matrix is diagonal with unitary Z
        T, Z = scipy.linalg.schur(m, output="complex")
        z = np.diag(T)
    else:
        z, Z = np.linalg.eigvals(m), None
    theta = np.mod(-np.angle(z), 2 * np.pi)
    theta[theta >= 2 * np.pi] = 0.0
    order = np.argsort(theta, kind="stable")
    vecs = None if Z is None else Z[:, order]
    return Spectrum(theta[order] / period, vecs, kind="floquet", period=float(period))


def mean_level_spacing(spectrum, window_fraction=1 / 3, min_levels=10):
    """Mean gap over the central ``window_fraction`` of levels (by index).

    Returns ``(delta_E, tau_H)`` with ``tau_H = 2 pi / delta_E``.
    """
    if not 0 < window_fraction <= 1:
        raise ParameterError("window_fraction must be in (0, 1]")
    e = spectrum.eigenvalues
    n = len(e)
    k = int(round(window_fraction * n))
    if k < max(min_levels, 2):
        raise ParameterError(f"only {k} levels in the window, need {max(min_levels, 2)}")
    lo = (n - k) // 2
    window = e[lo:lo + k]
    delta_e = float(window[-1] - window[0]) / (k - 1)
    if delta_e <= 0:
        raise NumericalError("degenerate window: zero mean level spacing")
    return delta_e, 2 * np.pi / delta_e
