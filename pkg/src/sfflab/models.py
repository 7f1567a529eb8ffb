"""Spin Hamiltonians on a periodic ring.

Conventions: J = 1, basis states are bit patterns in ascending order with
bit ``i`` describing site ``i`` (1 = up, sigma^z = +1).
"""
from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import kernels
from .errors import IncompatibleBasisError, ParameterError

HERMITICITY_TOL = 1e-12

DISORDER_LAWS = ("uniform", "normal")


@dataclass(frozen=True)
class SpinModelSpec:
    """Disordered J1-J2 XXZ ring (J = 1).

    ``delta`` is the nearest-neighbour zz anisotropy, ``j2`` the
    next-nearest xy coupling and ``delta2`` the next-nearest zz coupling,
    all in units of J; ``w`` is the disorder strength.
    """

    L: int
    delta: float = 1.0
    j2: float = 0.0
    delta2: float = 0.0
    w: float = 0.0

    def __post_init__(self):
        if int(self.L) != self.L or self.L % 2 or not 4 <= self.L <= 14:
            raise ParameterError(f"L must be even with 4 <= L <= 14, got {self.L}")
        if self.w < 0:
            raise ParameterError(f"disorder strength must be >= 0, got {self.w}")

    def bonds(self):
        """``(i, j, J_xy, J_z)`` for every nearest and next-nearest bond."""
        out = []
        for i in range(self.L):
            out.append((i, (i + 1) % self.L, 1.0, self.delta))
        for i in range(self.L):
            out.append((i, (i + 2) % self.L, self.j2, self.delta2))
        return out


@dataclass(frozen=True)
class DisorderRealization:
    seed: int
    fields_z: np.ndarray
    fields_x: np.ndarray | None = None
    fields_y: np.ndarray | None = None

    @property
    def L(self):
        return len(self.fields_z)

    def has_transverse(self):
        return any(
            f is not None and np.any(f != 0) for f in (self.fields_x, self.fields_y)
        )


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def sample_disorder(spec, law="uniform", seed=0, components=("z",)):
    """Draw on-site fields for ``spec`` (uses ``spec.L`` and ``spec.w``)."""
    return sample_fields(spec.L, spec.w, law, seed, components)


def sample_fields(L, w, law="uniform", seed=0, components=("z",)):
    """Draw on-site fields for an ``L``-site ring.

    ``uniform``: h_i in [-w, w]. ``normal``: mean 0, standard deviation w
    (w = 1 gives the unit-variance fields of the Floquet Heisenberg drive).
    ``components`` picks which of x, y, z are drawn; missing z means zeros.
    """
    if law not in DISORDER_LAWS:
        raise ParameterError(f"unknown disorder law {law!r}")
    if w < 0:
        raise ParameterError(f"disorder strength must be >= 0, got {w}")
    rng = np.random.Generator(np.random.Philox(int(seed)))
    out = {}
    for comp in ("x", "y", "z"):
        if comp not in components:
            continue
        if law == "uniform":
            vals = w * (2.0 * rng.random(L) - 1.0)
        else:
            vals = w * rng.standard_normal(L)
        out[comp] = _frozen(vals)
    return DisorderRealization(
        seed=int(seed),
        fields_z=out.get("z", _frozen(np.zeros(L))),
        fields_x=out.get("x"),
        fields_y=out.get("y"),
    )


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Bit patterns with a fixed total sigma^z (``sz=None``: full space)."""

    L: int
    sz: int | None
    states: np.ndarray = field(repr=False)
    lookup: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return len(self.states)

    @property
    def is_full(self):
        return self.sz is None


def _popcount(a):
    a = a.copy()
    c = np.zeros_like(a)
    while np.any(a):
        c += a & 1
        a >>= 1
    return c


def _make_basis(L, sz, states):
    lookup = np.full(1 << L, -1, dtype=np.int64)
    lookup[states] = np.arange(len(states))
    states = states.astype(np.int64)
    states.setflags(write=False)
    lookup.setflags(write=False)
    return SectorBasis(L=L, sz=sz, states=states, lookup=lookup)


def sector_basis(L, sz=0):
    """Basis of the sector with total sigma^z eigenvalue ``sz``."""
    if L % 2 or L < 2 or abs(sz) > L or (L + sz) % 2:
        raise ParameterError(f"no sector with Sz={sz} for L={L}")
    n_up = (L + sz) // 2
    allstates = np.arange(1 << L, dtype=np.int64)
    states = allstates[_popcount(allstates) == n_up]
    assert len(states) == comb(L, n_up)
    return _make_basis(L, sz, states)


def full_basis(L):
    return _make_basis(L, None, np.arange(1 << L, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    matrix: np.ndarray = field(repr=False)
    basis: SectorBasis

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != self.basis.dim:
            raise ParameterError("matrix shape does not match basis")
        err = hermiticity_error(m)
        if err >= HERMITICITY_TOL * max(1.0, np.abs(m).max(initial=0.0)):
            raise ParameterError(f"operator is not Hermitian (residual {err:.3g})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def __add__(self, other):
        return HermitianOperator(self.matrix + other.matrix, self.basis)

    def scaled(self, c):
        return HermitianOperator(c * self.matrix, self.basis)


def hermiticity_error(m):
    return float(np.abs(m - m.conj().T).max(initial=0.0))


def _resolve_basis(L, sector):
    if sector is None or sector == "full":
        return full_basis(L)
    if isinstance(sector, SectorBasis):
        if sector.L != L:
            raise ParameterError("sector basis built for a different L")
        return sector
    return sector_basis(L, int(sector))


def build_xxz(L, couplings, hz, sector=None, phases=None):
    """Generic XXZ Hamiltonian from a bond table.

    ``couplings`` is an iterable of ``(i, j, J_xy, J_z)``; the bond term is
    ``J_xy (x_i x_j + y_i y_j) + J_z z_i z_j``. With ``phases`` the flip-flop
    part becomes ``2 J_xy (e^{i(phi_i - phi_j)} s+_i s-_j + h.c.)``.
    """
    basis = _resolve_basis(L, sector)
    bonds = list(couplings)
    bi = np.array([b[0] for b in bonds], dtype=np.int64)
    bj = np.array([b[1] for b in bonds], dtype=np.int64)
    jxy = np.array([b[2] for b in bonds], dtype=float)
    jz = np.array([b[3] for b in bonds], dtype=float)
    if np.any(bi == bj):
        raise ParameterError("bond connects a site to itself")
    hz = np.asarray(hz, dtype=float)
    if hz.shape != (L,):
        raise ParameterError(f"need {L} z-fields, got {hz.shape}")
    ph = np.zeros(L) if phases is None else np.asarray(phases, dtype=float)
    if ph.shape != (L,):
        raise ParameterError(f"need {L} phases, got {ph.shape}")
    m = kernels.xxz_matrix(basis.states, basis.lookup, bi, bj, jxy, jz, hz, ph)
    return HermitianOperator(m, basis)


def build_heisenberg(spec, dis, sector=0, phases=None):
    """Disordered J1-J2 XXZ ring of ``spec`` with the z-fields of ``dis``.

    ``sector``: an integer total S_z, a :class:`SectorBasis`, or
    ``None``/``"full"`` for the 2^L space. Transverse fields are only allowed
    in the full space.
    """
    if dis.L != spec.L:
        raise ParameterError(f"disorder has {dis.L} sites, model has {spec.L}")
    full = sector is None or sector == "full" or (
        isinstance(sector, SectorBasis) and sector.is_full
    )
    if dis.has_transverse() and not full:
        raise IncompatibleBasisError("x/y fields do not conserve S_z")
    op = build_xxz(spec.L, spec.bonds(), dis.fields_z, sector, phases)
    if dis.has_transverse():
        terms = []
        for axis, f in (("x", dis.fields_x), ("y", dis.fields_y)):
            if f is not None:
                terms += [(f[i], {i: axis}) for i in range(spec.L)]
        op = op + pauli_sum(spec.L, terms)
    return op


def pauli_sum(L, terms):
    """Full-space operator ``sum_k c_k prod_{site} sigma^{axis}_{site}``.

    ``terms``: iterable of ``(coefficient, {site: 'x'|'y'|'z'})``.
    """
    dim = 1 << L
    states = np.arange(dim, dtype=np.int64)
    m = np.zeros((dim, dim), dtype=np.complex128)
    for coef, ops in terms:
        if coef == 0:
            continue
        flip = 0
        amp = np.full(dim, complex(coef))
        for site, axis in ops.items():
            bit = (states >> site) & 1
            if axis == "x":
                flip |= 1 << site
            elif axis == "y":
                flip |= 1 << site
                amp = amp * np.where(bit == 1, 1j, -1j)
            elif axis == "z":
                amp = amp * np.where(bit == 1, 1.0, -1.0)
            else:
                raise ParameterError(f"unknown Pauli axis {axis!r}")
        np.add.at(m, (states ^ flip, states), amp)
    return HermitianOperator(m, full_basis(L))


# (coupling axis, field axis) for the kicked Ising layers
_ISING_AXES = {"x": "y", "y": "z", "z": "x"}


def build_ising_layer(axis, L, field_values):
    """``sum_i (s^a_i s^a_{i+1} + h_i s^b_i)`` with (a, b) = (x,y), (y,z), (z,x)."""
    if axis not in _ISING_AXES:
        raise ParameterError(f"axis must be x, y or z, got {axis!r}")
    if L < 3:
        raise ParameterError("periodic ring needs L >= 3")
    h = np.asarray(field_values, dtype=float)
    if h.shape != (L,):
        raise ParameterError(f"need {L} field values")
    b = _ISING_AXES[axis]
    terms = [(1.0, {i: axis, (i + 1) % L: axis}) for i in range(L)]
    terms += [(h[i], {i: b}) for i in range(L)]
    return pauli_sum(L, terms)


def build_floquet_halves(L, dis):
    """The two Heisenberg halves of the COE/CUE crossover drive.

    H1 = sum_i [s_i.s_{i+1} + (h^x_i x_i + h^y_i y_i)/2]
    H2 = sum_i [s_i.s_{i+1} + (h^z_i z_i - h^y_i y_i)/2]
    """
    if L < 3:
        raise ParameterError("periodic ring needs L >= 3")
    hx, hy, hz = (
        np.zeros(L) if f is None else np.asarray(f, dtype=float)
        for f in (dis.fields_x, dis.fields_y, dis.fields_z)
    )
    bonds = [(i, (i + 1) % L, 1.0, 1.0) for i in range(L)]
    heis = build_xxz(L, bonds, np.zeros(L), None)
    t1 = [(0.5 * hx[i], {i: "x"}) for i in range(L)] + [(0.5 * hy[i], {i: "y"}) for i in range(L)]
    t2 = [(0.5 * hz[i], {i: "z"}) for i in range(L)] + [(-0.5 * hy[i], {i: "y"}) for i in range(L)]
    return heis + pauli_sum(L, t1), heis + pauli_sum(L, t2)


def kicked_ising_layers(L, dis, n_layers):
    """``[H_x, H_y]`` (two layers) or ``[H_x, H_y, H_z]`` (three layers)."""
    if n_layers not in (2, 3):
        raise ParameterError("kicked Ising drive has 2 or 3 layers")
    hx, hy, hz = dis.fields_x, dis.fields_y, dis.fields_z
    layers = [build_ising_layer("x", L, hy), build_ising_layer("y", L, hz)]
    if n_layers == 3:
        layers.append(build_ising_layer("z", L, hx))
    return layers
