"""Effective spin couplings of Rydberg-dressed atoms on a tweezer ring.

Units are MHz for energies and rates and micrometres for lengths. C6-type
constants are inputs in MHz um^6; they are not computed from atomic data.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, ParameterError, ResonanceError

POLE_TOL = 1e-6
L_MAX_CAP = 10_000


@dataclass(frozen=True)
class RydbergConfig:
    """Dressing parameters shared by both simulator states.

    ``xi`` is Omega/Delta. ``gamma_d``/``gamma_dp`` are the Rydberg decay
    rates of simulator and control atoms.
    """

    C6: float
    C6_tilde: float
    C6_prime: float
    delta: float
    xi: float
    delta_B: float = 0.0
    gamma_d: float = 0.0
    gamma_dp: float = 0.0

    def __post_init__(self):
        if not 0 < self.xi < 0.5:
            raise ParameterError(f"xi must lie in (0, 0.5), got {self.xi}")
        if self.delta == 0:
            raise ParameterError("dressing detuning must be nonzero")
        if self.gamma_d < 0 or self.gamma_dp < 0:
            raise ParameterError("decay rates must be >= 0")


@dataclass(frozen=True)
class RingGeometry:
    L: int
    R: float
    r_c: float = 2.4
    r_c_prime: float | None = None

    def __post_init__(self):
        if self.L < 2:
            raise GeometryError("ring needs at least two atoms")
        if self.R <= 0:
            raise GeometryError("ring radius must be positive")

    def positions(self):
        a = 2 * np.pi * np.arange(self.L) / self.L
        return self.R * np.column_stack([np.cos(a), np.sin(a)])

    def pairs(self):
        return [(i, j) for i in range(self.L) for j in range(i + 1, self.L)]

    def distance(self, i, j):
        return 2 * self.R * math.sin(math.pi * abs(i - j) / self.L)

    def azimuth(self, i, j):
        """In-plane angle of the bond vector from atom i to atom j."""
        p = self.positions()
        d = p[j] - p[i]
        return math.atan2(d[1], d[0])

    @property
    def nearest_distance(self):
        return 2 * self.R * math.sin(math.pi / self.L)

    def validity_warnings(self, r_b=None):
        out = []
        if self.nearest_distance < self.r_c:
            out.append(
                f"nearest spacing {self.nearest_distance:.3f} um below r_c = {self.r_c} um"
            )
        if r_b is not None and self.R > 0.75 * r_b:
            out.append(f"R = {self.R} um exceeds 0.75 R_b = {0.75 * r_b:.3f} um")
        return out


@dataclass(frozen=True)
class PairCouplings:
    i: int
    j: int
    distance: float
    W_pp: float
    W_pm: float
    V_pm: float
    V_pp: complex
    warnings: tuple = ()

    @property
    def V_mm(self):
        return self.V_pp.conjugate()

    @property
    def W_mm(self):
        return self.W_pp

    @property
    def W_mp(self):
        return self.W_pm

    def matrix(self):
        """4x4 interaction in the (++, +-, -+, --) basis."""
        return np.array(
            [
                [self.W_pp, 0, 0, self.V_pp],
                [0, self.W_pm, self.V_pm, 0],
                [0, self.V_pm, self.W_pm, 0],
                [self.V_mm, 0, 0, self.W_pp],
            ],
            dtype=complex,
        )


@dataclass(frozen=True)
class DecoherenceBudget:
    kappa1: float
    kappa2: float
    kappa3: float
    kappa3_analytic: float
    t_coh_us: float
    t_coh_J: float | None
    R_b: float
    H_range: float
    Hp_range: float
    implied_H_range: float | None = None

    def as_dict(self):
        return dict(self.__dict__)


def d0_matrix(theta, phi, hermitian=False):
    """Angular structure of the anisotropic vdW term.

    ``hermitian=False`` returns the entries as printed, where the (2,1) and
    (3,1) entries lack the factor 4 of their (1,2)/(1,3) partners;
    ``hermitian=True`` restores it so the matrix is Hermitian for every theta.
    """
    c2, s2, ss = math.cos(2 * theta), math.sin(2 * theta), math.sin(theta) ** 2
    e1, e2 = np.exp(1j * phi), np.exp(2j * phi)
    low = 4 if hermitian else 1
    return np.array(
        [
            [(3 * c2 - 1) / 81, 4 * s2 / (27 * e1), 4 * s2 / (27 * e1), 2 * ss / (27 * e2)],
            [low * e1 * s2 / 27, (1 - 3 * c2) / 81, (-5 - 3 * c2) / 81, -4 * s2 / (27 * e1)],
            [low * e1 * s2 / 27, (-5 - 3 * c2) / 81, (1 - 3 * c2) / 81, -4 * s2 / (27 * e1)],
            [2 * e2 * ss / 27, -4 * e1 * s2 / 27, -4 * e1 * s2 / 27, (3 * c2 - 1) / 81],
        ],
        dtype=complex,
    )


def vdw_matrix(C6, C6_tilde, r, theta, phi, hermitian=False):
    """``(C6 I - C6_tilde D0) / r^6``."""
    if r <= 0:
        raise ParameterError("distance must be positive")
    return (C6 * np.eye(4) - C6_tilde * d0_matrix(theta, phi, hermitian)) / r ** 6


def vdw_pair(C6, C6_tilde, r, phi, r_c=None, i=0, j=1):
    """W/V elements of one pair at distance ``r`` (theta = pi/2)."""
    if r <= 0:
        raise ParameterError("distance must be positive")
    r6 = r ** 6
    warn = ()
    if r_c is not None and r < r_c:
        warn = (f"pair ({i},{j}) at {r:.3f} um is inside r_c = {r_c} um",)
    return PairCouplings(
        i=i,
        j=j,
        distance=float(r),
        W_pp=(C6 - 4 * C6_tilde / 81) / r6,
        W_pm=(C6 + 4 * C6_tilde / 81) / r6,
        V_pm=-(2 / 81) * C6_tilde / r6,
        V_pp=complex(-(2 / 27) * C6_tilde / r6 * np.exp(-2j * phi)),
        warnings=warn,
    )


def blockade(C6_prime, r, delta):
    """Control-atom level shift at ``r`` and the blockade radius."""
    if r <= 0:
        raise ParameterError("distance must be positive")
    if delta == 0:
        raise ParameterError("detuning must be nonzero")
    return C6_prime / r ** 6, abs(C6_prime / delta) ** (1 / 6)


def dressed_couplings(pair, delta, xi):
    """``(J_xy, J_z, beta)`` of a pair in the strong-field XXZ regime."""
    W_pp, W_pm, V = pair.W_pp, pair.W_pm, pair.V_pm
    d2 = 2 * delta
    f_a = V - W_pm - d2
    f_b = d2 + V + W_pm
    f_c = d2 + W_pm
    f_d = d2 + W_pp
    scale = abs(d2) ** 3
    for name, prod in (("J_z", f_a * f_b * f_c), ("beta", f_a * f_b * f_d)):
        if abs(prod) < POLE_TOL * scale:
            raise ResonanceError(
                f"dressing resonance in {name} for pair ({pair.i},{pair.j}) "
                f"at r = {pair.distance:.4f} um (Delta = {delta:g})"
            )
    x4 = xi ** 4
    J_xy = -2 * delta ** 2 * x4 * V / (f_a * f_b)
    J_z = -2 * delta ** 2 * x4 * (V ** 2 - f_c * (W_pm - W_pp)) / (f_c * f_a * f_b)
    num = V ** 2 * (3 * delta + 2 * W_pp) - f_c * (
        4 * delta ** 2 + 3 * delta * (W_pm + W_pp) + 2 * W_pm * W_pp
    )
    beta = -2 * delta * xi ** 2 + 2 * delta * x4 * num / (f_d * f_a * f_b)
    return J_xy, J_z, beta


@dataclass
class RingModel:
    """Pair tables for both control-qubit states of one ring."""

    geometry: RingGeometry
    table: list = field(repr=False)
    delta_prime: float = 0.0
    xi_prime: float = 0.0
    delta_offset: float = 0.0
    R_b: float = 0.0
    warnings: list = field(default_factory=list)

    def columns(self):
        keys = ("i", "j", "distance", "J_xy", "J_z", "beta", "Jp_xy", "Jp_z", "beta_p")
        return {k: np.array([row[k] for row in self.table]) for k in keys}

    @property
    def J_nearest(self):
        """|J_xy| of a nearest-neighbour pair; the dimensionless unit J = 1."""
        for row in self.table:
            if (row["j"] - row["i"]) in (1, self.geometry.L - 1):
                return abs(row["J_xy"])
        raise GeometryError("ring has no nearest-neighbour pair")

    def bonds(self, which="spin", scale=None):
        """``(i, j, J_xy, J_z)`` in units of ``scale`` (default |J_xy| nearest)."""
        if which not in ("spin", "prime"):
            raise ParameterError("which must be 'spin' or 'prime'")
        s = self.J_nearest if scale is None else scale
        kx, kz = ("J_xy", "J_z") if which == "spin" else ("Jp_xy", "Jp_z")
        return [(row["i"], row["j"], row[kx] / s, row[kz] / s) for row in self.table]

    def coupling_matrix(self, which="spin", component="xy"):
        L = self.geometry.L
        key = {("spin", "xy"): "J_xy", ("spin", "z"): "J_z",
               ("prime", "xy"): "Jp_xy", ("prime", "z"): "Jp_z"}[(which, component)]
        m = np.zeros((L, L))
        for row in self.table:
            m[row["i"], row["j"]] = m[row["j"], row["i"]] = row[key]
        return m


def build_ring_model(config, geom, electronic_offset=0.0):
    """Couplings of every ring pair for H_spin (Delta) and H'_spin (Delta - C6'/R^6)."""
    shift, r_b = blockade(config.C6_prime, geom.R, config.delta)
    delta_p = config.delta - shift
    if delta_p == 0:
        raise ResonanceError("control-atom shift cancels the dressing detuning")
    # the Rabi frequency is fixed, so the dressing ratio follows the detuning
    xi_p = abs(config.xi * config.delta / delta_p)
    warnings = geom.validity_warnings(r_b)
    if xi_p >= 0.5:
        warnings.append(f"shifted dressing ratio {xi_p:.3g} leaves the perturbative regime")
    table = []
    offset = float(electronic_offset)
    for i, j in geom.pairs():
        r = geom.distance(i, j)
        pair = vdw_pair(config.C6, config.C6_tilde, r, geom.azimuth(i, j), geom.r_c, i, j)
        warnings.extend(pair.warnings)
        J_xy, J_z, beta = dressed_couplings(pair, config.delta, config.xi)
        Jp_xy, Jp_z, beta_p = dressed_couplings(pair, delta_p, xi_p)
        offset += beta_p - beta
        table.append(dict(i=i, j=j, distance=r, J_xy=J_xy, J_z=J_z, beta=beta,
                          Jp_xy=Jp_xy, Jp_z=Jp_z, beta_p=beta_p))
    return RingModel(geom, table, delta_p, xi_p, offset, r_b, warnings)


def spectral_range(model, which="spin", sector=0):
    """max - min eigenvalue (MHz) of the exported XXZ model in a S_z sector."""
    from .models import build_xxz
    from .spectra import eig_hermitian

    L = model.geometry.L
    if L < 2 or L > 14:
        raise ParameterError("spectral range needs 2 <= L <= 14")
    bonds = model.bonds(which, scale=1.0)
    H = build_xxz(L, bonds, np.zeros(L), sector)
    e = eig_hermitian(H, want_vectors=False).eigenvalues
    return float(e[-1] - e[0])


def decoherence_budget(config, geom, H_range, Hp_range, L=None, J_unit=None,
                       kappa1_reference=None):
    """Dimensionless error rates and the coherence time they allow.

    ``J_unit`` (MHz) converts t_coh to units of 1/J. With
    ``kappa1_reference`` the spectral range implied by that kappa1 is
    reported for cross-checking.
    """
    if H_range <= 0:
        raise ParameterError("spectral range of H_spin must be positive")
    if Hp_range < 0:
        raise ParameterError("spectral range of H'_spin must be >= 0")
    L = geom.L if L is None else L
    _, r_b = blockade(config.C6_prime, geom.R, config.delta)
    k1 = config.gamma_dp / H_range
    k2 = config.xi ** 2 * config.gamma_d * L / H_range
    k3 = Hp_range / H_range
    kmax = max(k1, k2, k3)
    t_us = math.inf if kmax == 0 else 1.0 / (H_range * kmax)
    implied = None
    if kappa1_reference:
        implied = config.gamma_dp / kappa1_reference
    return DecoherenceBudget(
        kappa1=k1, kappa2=k2, kappa3=k3,
        kappa3_analytic=kappa3_analytic(geom.R, r_b),
        t_coh_us=t_us,
        t_coh_J=None if J_unit is None else t_us * J_unit,
        R_b=r_b, H_range=H_range, Hp_range=Hp_range, implied_H_range=implied,
    )


def kappa3_analytic(R, r_b):
    return (R / r_b) ** 24


def max_ring_atoms(r_c, R_max):
    """Largest ring whose nearest spacing stays above ``r_c``."""
    if r_c <= 0:
        raise GeometryError("r_c must be positive")
    if r_c >= 2 * R_max:
        raise GeometryError(f"r_c = {r_c} does not fit a ring of radius {R_max}")
    n = math.pi / math.asin(r_c / (2 * R_max))
    if n > L_MAX_CAP:
        raise GeometryError(f"r_c/R_max too small: L_max ~ {n:.3g} exceeds {L_MAX_CAP}")
    return int(math.floor(n + 1e-9))


def stroboscopic_phase(omega, omega_lg, t1, t2, phi):
    """Magnitude and phase of the period-averaged Rabi frequency.

    The average is (t1 Omega + t2 Omega_LG e^{i phi}) / T with T = t1 + t2;
    for Omega = Omega_LG its phase obeys
    tan phi_eff = sin phi / (cos phi + t1/t2).
    """
    if t1 < 0 or t2 < 0 or t1 + t2 <= 0:
        raise ParameterError("need t1, t2 >= 0 and t1 + t2 > 0")
    T = t1 + t2
    re = t1 * omega + t2 * omega_lg * math.cos(phi)
    im = t2 * omega_lg * math.sin(phi)
    return math.hypot(re, im) / T, math.atan2(im, re)
