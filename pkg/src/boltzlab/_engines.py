"""Numba-compiled sweeps for the collision operator and the x-shift.

Optional: importing this module fails gracefully when numba is unavailable
and the callers fall back to pure numpy.  Each output cell is accumulated by
a single thread, so parallel execution is bit-deterministic.
"""

import math

import numpy as np

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        return wrap

    prange = range


@njit(parallel=True, cache=True)
def mc_q_grid(values, h, X, x2, evj,
              idx_p, w_p, idx_sp, w_sp, idx_star, w_star,
              coef_js, wsum_p, wvec_p, ws_star, wv_star,
              alpha, coef):
    """Monte Carlo collision sweep with precomputed geometry.

    values/h: (nx^3, nv^3); per-(v-cell, sample) stencils and coefficient
    tables are flattened to (nv^3 * m, .); the only per-x work left is the
    stencil gathers and one exponential per sample.
    """
    nxt = X.shape[0]
    nvt = evj.shape[0]
    m = ws_star.shape[0]
    out = np.empty((nxt, nvt))
    for i in prange(nxt):
        x0 = X[i, 0]
        x1 = X[i, 1]
        x2_ = X[i, 2]
        x2i = x2[i]
        h_i = h[i]
        hstar = np.empty(m)
        envstar = np.empty(m)
        for s in range(m):
            acc = 0.0
            for k in range(8):
                acc += w_star[s, k] * h_i[idx_star[s, k]]
            hstar[s] = acc
            envstar[s] = math.exp(-alpha * (
                x2i - 2.0 * (x0 * wv_star[s, 0] + x1 * wv_star[s, 1]
                             + x2_ * wv_star[s, 2]) + ws_star[s]))
        for j in range(nvt):
            fij = values[i, j]
            ev = evj[j]
            base = j * m
            acc = 0.0
            for s in range(m):
                r = base + s
                hp = 0.0
                hsp = 0.0
                for k in range(8):
                    hp += w_p[r, k] * h_i[idx_p[r, k]]
                    hsp += w_sp[r, k] * h_i[idx_sp[r, k]]
                envp = math.exp(-alpha * (
                    2.0 * x2i - 2.0 * (x0 * wvec_p[r, 0] + x1 * wvec_p[r, 1]
                                       + x2_ * wvec_p[r, 2]) + wsum_p[r]))
                acc += coef_js[r] * (hp * hsp * envp * ev
                                     - fij * hstar[s] * envstar[s])
            out[i, j] = coef * acc
    return out


@njit(parallel=True, cache=True)
def quad_q_grid(values, h, X, V, om, w_half, a0, dv, nv,
                gamma, b_kind, b_coef, b_pow, alpha, beta, kappa, t):
    """Deterministic collision sweep (midpoint in v*, folded sphere rule)."""
    nxt = X.shape[0]
    nvt = V.shape[0]
    nw = om.shape[0]
    out = np.empty((nxt, nvt))
    dv3 = dv * dv * dv
    # exp(-beta(|v'|^2 + |v*'|^2)) == exp(-beta(|v|^2 + |v*|^2)) by energy
    # conservation; using the pre-collision factors keeps the Maxwellian
    # gain/loss cancellation exact nodewise.
    evv = np.empty(nvt)
    for j in range(nvt):
        evv[j] = math.exp(-beta * (V[j, 0] ** 2 + V[j, 1] ** 2 + V[j, 2] ** 2))
    for i in prange(nxt):
        x0 = X[i, 0]
        x1 = X[i, 1]
        x2 = X[i, 2]
        h_i = h[i]
        for j in range(nvt):
            v0 = V[j, 0]
            v1 = V[j, 1]
            v2 = V[j, 2]
            fij = values[i, j]
            acc = 0.0
            for j2 in range(nvt):
                u0 = v0 - V[j2, 0]
                u1 = v1 - V[j2, 1]
                u2 = v2 - V[j2, 2]
                un2 = u0 * u0 + u1 * u1 + u2 * u2
                if un2 == 0.0:
                    if gamma != 0.0:
                        continue
                    kern = 1.0
                    un = 0.0
                else:
                    un = math.sqrt(un2)
                    kern = 1.0 if gamma == 0.0 else un ** gamma
                fstar = values[i, j2]
                for k in range(nw):
                    w0 = om[k, 0]
                    w1 = om[k, 1]
                    w2 = om[k, 2]
                    c = u0 * w0 + u1 * w1 + u2 * w2
                    cos = 1.0 if un == 0.0 else abs(c) / un
                    if cos > 1.0:
                        cos = 1.0
                    b = _b_eval(b_kind, b_coef, b_pow, cos)
                    vp0 = v0 - c * w0
                    vp1 = v1 - c * w1
                    vp2 = v2 - c * w2
                    vs0 = V[j2, 0] + c * w0
                    vs1 = V[j2, 1] + c * w1
                    vs2 = V[j2, 2] + c * w2
                    hp = _interp3(h_i, a0, dv, nv, vp0, vp1, vp2)
                    hsp = _interp3(h_i, a0, dv, nv, vs0, vs1, vs2)
                    dp0 = x0 - t * vp0
                    dp1 = x1 - t * vp1
                    dp2 = x2 - t * vp2
                    ds0 = x0 - t * vs0
                    ds1 = x1 - t * vs1
                    ds2 = x2 - t * vs2
                    envp = math.exp(-alpha * (dp0 * dp0 + dp1 * dp1 + dp2 * dp2
                                              + ds0 * ds0 + ds1 * ds1 + ds2 * ds2))
                    acc += kern * b * w_half[k] * (hp * hsp * envp * evv[j] * evv[j2]
                                                   - fij * fstar)
            out[i, j] = acc * dv3 / kappa
    return out


@njit(inline="always")
def _b_eval(kind, coef, power, cos):
    if kind == 0:
        return coef
    return coef * cos ** power


@njit(inline="always")
def _interp3(h_slice, a0, dv, nv, p0, p1, p2):
    # trilinear with zero extension; h_slice is a flattened (nv, nv, nv) block
    t0 = (p0 - a0) / dv
    t1 = (p1 - a0) / dv
    t2 = (p2 - a0) / dv
    k0 = int(math.floor(t0))
    k1 = int(math.floor(t1))
    k2 = int(math.floor(t2))
    l0 = t0 - k0
    l1 = t1 - k1
    l2 = t2 - k2
    acc = 0.0
    for c0 in range(2):
        w0 = l0 if c0 == 1 else 1.0 - l0
        i0 = k0 + c0
        if i0 < 0 or i0 >= nv or w0 == 0.0:
            continue
        for c1 in range(2):
            w1 = l1 if c1 == 1 else 1.0 - l1
            i1 = k1 + c1
            if i1 < 0 or i1 >= nv or w1 == 0.0:
                continue
            base = (i0 * nv + i1) * nv
            for c2 in range(2):
                w2 = l2 if c2 == 1 else 1.0 - l2
                i2 = k2 + c2
                if i2 < 0 or i2 >= nv:
                    continue
                acc += w0 * w1 * w2 * h_slice[base + i2]
    return acc


@njit(parallel=True, cache=True)
def shift_x_apply(values, S0, S1, S2, T0, T1, T2, E0, E1, E2, out):
    """Apply the separable envelope-factored x-shift.

    values, out: (nx, nx, nx, nv^3).  S_a: (nx, 2, nv) int64 source x-index
    per (target index, tap, v-axis index); T_a: matching coefficient
    (weight * source envelope * mask); E_a: (nx, nv) target envelope.
    """
    nx = values.shape[0]
    nvt = values.shape[3]
    nv = E0.shape[1]
    nv2 = nv * nv
    for flat in prange(nx * nx * nx):
        i0 = flat // (nx * nx)
        rem = flat - i0 * nx * nx
        i1 = rem // nx
        i2 = rem - i1 * nx
        row = out[i0, i1, i2]
        for jv in range(nvt):
            row[jv] = 0.0
        for c0 in range(2):
            for c1 in range(2):
                for c2 in range(2):
                    for jv in range(nvt):
                        j0 = jv // nv2
                        r = jv - j0 * nv2
                        j1 = r // nv
                        j2 = r - j1 * nv
                        w = T0[i0, c0, j0] * T1[i1, c1, j1] * T2[i2, c2, j2]
                        if w == 0.0:
                            continue
                        row[jv] += w * values[S0[i0, c0, j0], S1[i1, c1, j1],
                                              S2[i2, c2, j2], jv]
        for jv in range(nvt):
            j0 = jv // nv2
            r = jv - j0 * nv2
            j1 = r // nv
            j2 = r - j1 * nv
            row[jv] *= E0[i0, j0] * E1[i1, j1] * E2[i2, j2]
    return out
