"""Hot inner loops.

Every kernel exists twice: an explicit loop compiled with numba (``*_loop``)
and a vectorised numpy version (``*_np``). The public name picks one
according to :mod:`sfflab._accel`. Both paths consume the same pre-drawn
uniforms, so they agree bit-for-bit on every integer/boolean output and to
rounding on floating sums.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# XXZ-type Hamiltonian in a bit-pattern basis


def _xxz_matrix_loop(states, lookup, bi, bj, jxy, jz, hz, phases):
    dim = states.shape[0]
    L = hz.shape[0]
    H = np.zeros((dim, dim), dtype=np.complex128)
    nb = bi.shape[0]
    for col in range(dim):
        s = states[col]
        diag = 0.0
        for k in range(L):
            if (s >> k) & 1:
                diag += hz[k]
            else:
                diag -= hz[k]
        for b in range(nb):
            i = bi[b]
            j = bj[b]
            si = (s >> i) & 1
            sj = (s >> j) & 1
            if si == sj:
                diag += jz[b]
            else:
                diag -= jz[b]
                if jxy[b] != 0.0:
                    t = s ^ ((1 << i) | (1 << j))
                    row = lookup[t]
                    dphi = phases[i] - phases[j]
                    if si == 0:
                        # sigma_i^+ sigma_j^-
                        amp = np.exp(1j * dphi)
                    else:
                        amp = np.exp(-1j * dphi)
                    H[row, col] += 2.0 * jxy[b] * amp
        H[col, col] += diag
    return H


def _xxz_matrix_np(states, lookup, bi, bj, jxy, jz, hz, phases):
    dim = states.shape[0]
    L = hz.shape[0]
    H = np.zeros((dim, dim), dtype=np.complex128)
    cols = np.arange(dim)
    spins = ((states[:, None] >> np.arange(L)) & 1) * 2 - 1
    diag = spins @ hz
    for b in range(bi.shape[0]):
        i, j = bi[b], bj[b]
        same = spins[:, i] == spins[:, j]
        diag = diag + np.where(same, jz[b], -jz[b])
        if jxy[b] == 0.0:
            continue
        flip = ~same
        s = states[flip]
        rows = lookup[s ^ ((1 << i) | (1 << j))]
        dphi = phases[i] - phases[j]
        amp = np.where(spins[flip, i] < 0, np.exp(1j * dphi), np.exp(-1j * dphi))
        np.add.at(H, (rows, cols[flip]), 2.0 * jxy[b] * amp)
    H[cols, cols] += diag
    return H


# ---------------------------------------------------------------------------
# Filtered traces sum_l w_l exp(-i E_l t)


def _filtered_trace_loop(energies, weights, times):
    out = np.empty(times.shape[0], dtype=np.complex128)
    for k in range(times.shape[0]):
        re = 0.0
        im = 0.0
        t = times[k]
        for l in range(energies.shape[0]):
            ph = energies[l] * t
            re += weights[l] * np.cos(ph)
            im -= weights[l] * np.sin(ph)
        out[k] = re + 1j * im
    return out


def _filtered_trace_np(energies, weights, times, chunk=256):
    out = np.empty(times.shape[0], dtype=np.complex128)
    for a in range(0, times.shape[0], chunk):
        ph = np.outer(times[a:a + chunk], energies)
        out[a:a + chunk] = np.cos(ph) @ weights - 1j * (np.sin(ph) @ weights)
    return out


# ---------------------------------------------------------------------------
# Preparation: M sequential "+" readouts per attempt


def _prep_accept_loop(x, uniforms, t0):
    n, M = uniforms.shape
    ok = np.ones(n, dtype=np.bool_)
    for a in range(n):
        for m in range(M):
            c = np.cos((2.0 ** m) * t0 * x[a])
            if uniforms[a, m] >= c * c:
                ok[a] = False
                break
    return ok


def _prep_accept_np(x, uniforms, t0):
    M = uniforms.shape[1]
    scale = 2.0 ** np.arange(M)
    c = np.cos(np.outer(x, scale) * t0)
    return np.all(uniforms < c * c, axis=1)


# ---------------------------------------------------------------------------
# Shot tallies: each slot is one +-1 readout of sigma^x (quad 0) or
# sigma^y (quad 1) at phase phi; returns sum of outcomes per (time, quad)


def _shot_tally_loop(phase, quad, tidx, uniforms, n_times):
    acc = np.zeros((n_times, 2), dtype=np.int64)
    for s in range(phase.shape[0]):
        if quad[s] == 0:
            p = 0.5 * (1.0 + np.cos(phase[s]))
        else:
            p = 0.5 * (1.0 + np.sin(phase[s]))
        if uniforms[s] < p:
            acc[tidx[s], quad[s]] += 1
        else:
            acc[tidx[s], quad[s]] -= 1
    return acc


def _shot_tally_np(phase, quad, tidx, uniforms, n_times):
    p = 0.5 * (1.0 + np.where(quad == 0, np.cos(phase), np.sin(phase)))
    out = np.where(uniforms < p, 1, -1).astype(np.int64)
    flat = np.bincount(tidx * 2 + quad, weights=out, minlength=2 * n_times)
    return np.rint(flat).astype(np.int64).reshape(n_times, 2)


xxz_matrix_loop = njit(_xxz_matrix_loop)
filtered_trace_loop = njit(_filtered_trace_loop)
prep_accept_loop = njit(_prep_accept_loop)
shot_tally_loop = njit(_shot_tally_loop)

if USE_NUMBA:
    xxz_matrix = xxz_matrix_loop
    filtered_trace = filtered_trace_loop
    prep_accept = prep_accept_loop
    shot_tally = shot_tally_loop
else:
    xxz_matrix = _xxz_matrix_np
    filtered_trace = _filtered_trace_np
    prep_accept = _prep_accept_np
    shot_tally = _shot_tally_np

xxz_matrix_np = _xxz_matrix_np
filtered_trace_np = _filtered_trace_np
prep_accept_np = _prep_accept_np
shot_tally_np = _shot_tally_np
