"""Collision transform, cutoff/regularized kernels, and the collision operator.

The gain, loss and full operators are evaluated at a single phase cell either
by deterministic quadrature (velocity-grid midpoint sum times a product-Gauss
sphere rule) or by Monte Carlo with the Gaussian importance density dictated
by the sandwich envelope.  Gain and loss always share quadrature nodes, so on
a travelling Maxwellian the cancellation Q(M, M) = 0 holds nodewise up to
interpolation of the gain factors.

Hemisphere convention: the collision integrand is even under omega -> -omega
(the projection [(v - v*) . omega] omega is unchanged), so full-sphere rules
and uniform full-sphere sampling are folded onto S^2_+ by halving the weight
and using theta = arccos(|cos|); this realizes the (v - v*) . omega >= 0
restriction without a discontinuous indicator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .phase import LAB, _sumsq, interp_v

try:
    from . import _engines

    HAVE_NUMBA = _engines.HAVE_NUMBA
except Exception:  # pragma: no cover - numba missing or broken
    _engines = None
    HAVE_NUMBA = False


class DiagonalSingularityError(ValueError):
    """Raised when the kernel is evaluated at v = v* with gamma < 0."""


@dataclass(frozen=True)
class CollisionPair:
    """Pre/post collision velocities for one impact direction omega in S^2_+."""

    v: np.ndarray
    v_star: np.ndarray
    v_prime: np.ndarray
    v_star_prime: np.ndarray
    omega: np.ndarray
    reflected: bool = False


def collide_pair(v, v_star, omega, unit_tol=1e-12):
    """Elastic collision transform v' = v - [(v - v*) . w] w, v*' = v* + [(v - v*) . w] w.

    ``omega`` must be a unit vector within ``unit_tol``; if (v - v*) . omega
    is negative, omega is reflected into S^2_+ and the reflection recorded.
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    omega = np.asarray(omega, dtype=float)
    nrm = math.sqrt(float(_sumsq(omega)))
    if abs(nrm - 1.0) > unit_tol:
        raise ValueError(f"omega must be a unit vector (|omega| = {nrm!r})")
    reflected = False
    c = float(np.dot(v - v_star, omega))
    if c < 0.0:
        omega = -omega
        c = -c
        reflected = True
    v_prime = v - c * omega
    v_star_prime = v_star + c * omega
    return CollisionPair(v=v, v_star=v_star, v_prime=v_prime,
                         v_star_prime=v_star_prime, omega=omega, reflected=reflected)


def collide_velocities(v, v_star, omega):
    """Vectorized post-collision velocities; arrays broadcast over leading axes."""
    c = np.sum((v - v_star) * omega, axis=-1, keepdims=True)
    return v - c * omega, v_star + c * omega


def kernel_eval(v_rel, omega, spec):
    """Cutoff kernel B(v - v*, omega) = |v - v*|^gamma * b_gamma(theta) at one node."""
    v_rel = np.asarray(v_rel, dtype=float)
    omega = np.asarray(omega, dtype=float)
    un = math.sqrt(float(_sumsq(v_rel)))
    if un == 0.0:
        if spec.gamma < 0:
            raise DiagonalSingularityError("kernel singular at v = v* for gamma < 0")
        if spec.gamma > 0:
            return 0.0
        theta = 0.0
    else:
        cos = float(np.dot(v_rel, omega)) / un
        theta = math.acos(min(1.0, max(-1.0, cos)))
    return un ** spec.gamma * float(spec.b_gamma(np.asarray(theta)))


@dataclass(frozen=True)
class RegularizedKernelParams:
    """Exponent and envelope data of the regularized kernel A_{mu,alpha,beta}."""

    mu: float
    maxwellian: MaxwellianParams
    kernel: KernelSpec

    def __post_init__(self):
        if not 0.0 < self.mu < 1.0:
            raise ValueError("mu must lie strictly between 0 and 1")


def regularized_kernel_eval(v, v_star, x, t, params):
    """Regularized kernel |v - v*|^gamma * exp(-(1-mu)(alpha|x - t(v-v*)|^2 + beta|v*|^2)).

    The exponential factor is assembled in log space (a single exponent, one
    exp call), so it neither overflows nor loses the Gaussian structure.
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    x = np.asarray(x, dtype=float)
    u = v - v_star
    un2 = _sumsq(u)
    mw = params.maxwellian
    gamma = params.kernel.gamma
    log_factor = -(1.0 - params.mu) * (
        mw.alpha * _sumsq(x - t * u) + mw.beta * _sumsq(v_star)
    )
    if np.ndim(un2) == 0:
        if un2 == 0.0:
            if gamma < 0:
                raise DiagonalSingularityError("kernel singular at v = v* for gamma < 0")
            return (1.0 if gamma == 0 else 0.0) * math.exp(float(log_factor))
        return float(un2) ** (0.5 * gamma) * math.exp(float(log_factor))
    with np.errstate(divide="ignore"):
        rad = np.where(un2 > 0, un2 ** (0.5 * gamma), 0.0 if gamma != 0 else 1.0)
    return rad * np.exp(log_factor)


@dataclass(frozen=True)
class QuadratureScheme:
    """Sphere rule (full-sphere nodes/weights) plus Monte Carlo sampling controls.

    The velocity integral uses the grid-cell midpoint sum; the sphere rule is
    folded onto the hemisphere as described in the module docstring.  The MC
    backend draws v* from the Gaussian envelope exp(-beta|v*|^2) and omega
    uniformly; it requires an explicit per-call seed.
    """

    sphere_nodes: np.ndarray
    sphere_weights: np.ndarray
    mc_samples: int = 0
    seed: int | None = None

    def __post_init__(self):
        nodes = np.asarray(self.sphere_nodes, dtype=float)
        weights = np.asarray(self.sphere_weights, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 3 or weights.shape != (nodes.shape[0],):
            raise ValueError("sphere rule must be (n, 3) nodes with (n,) weights")
        if not np.all(weights > 0):
            raise ValueError("sphere weights must be positive")
        total = float(weights.sum())
        if abs(total - 4.0 * np.pi) > 1e-10:
            raise ValueError(f"full-sphere weights sum to {total!r}, expected 4*pi")
        object.__setattr__(self, "sphere_nodes", nodes)
        object.__setattr__(self, "sphere_weights", weights)

    @staticmethod
    def product_gauss(n_polar=4, n_azimuth=None, mc_samples=0, seed=None):
        """Product Gauss-Legendre (cos theta) x uniform (phi) rule on the full sphere."""
        if n_azimuth is None:
            n_azimuth = 2 * n_polar
        mu, wmu = np.polynomial.legendre.leggauss(n_polar)
        phi = (np.arange(n_azimuth) + 0.5) * 2.0 * np.pi / n_azimuth
        wphi = 2.0 * np.pi / n_azimuth
        MU, PHI = np.meshgrid(mu, phi, indexing="ij")
        st = np.sqrt(1.0 - MU ** 2)
        nodes = np.stack([st * np.cos(PHI), st * np.sin(PHI), MU], axis=-1).reshape(-1, 3)
        weights = np.broadcast_to(wmu[:, None] * wphi, MU.shape).reshape(-1).copy()
        return QuadratureScheme(sphere_nodes=nodes, sphere_weights=weights,
                                mc_samples=mc_samples, seed=seed)


class QEval(NamedTuple):
    """One collision-operator evaluation: value, MC standard error, excluded diagonal measure."""

    value: float
    stderr: float
    excluded_measure: float


def _lab_ratio_slice(field, grid, params, ix):
    """Envelope ratio h(v) = f(x,v) * exp(+alpha|x - t v|^2 + beta|v|^2) for one x cell."""
    x = grid.x_center(ix)
    V = grid.v_points()
    fx = field.values[ix].reshape(-1)
    log_env = -(params.alpha * _sumsq(x[None, :] - field.time * V)
                + params.beta * _sumsq(V))
    with np.errstate(divide="ignore"):
        h = np.exp(np.where(fx > 0, np.log(np.where(fx > 0, fx, 1.0)) - log_env, -np.inf))
    return h.reshape(grid.nv, grid.nv, grid.nv), x, V


def _lab_envelope(x, t, v_pts, params):
    return np.exp(-(params.alpha * _sumsq(x[None, :] - t * v_pts)
                    + params.beta * _sumsq(v_pts)))


def _cell_quadrature(field, cell, spec, quad, params, grid, want_gain, want_loss):
    ix, iv = cell
    if field.frame != LAB:
        raise ValueError("collision operators act on lab-frame fields")
    h3, x, V = _lab_ratio_slice(field, grid, params, ix)
    t = field.time
    v = grid.v_center(iv)
    fx = field.values[ix].reshape(-1)
    u = v[None, :] - V
    un = np.sqrt(_sumsq(u))
    diagonal = un == 0.0
    with np.errstate(divide="ignore"):
        kern = np.where(diagonal, 1.0 if spec.gamma == 0 else 0.0, un ** spec.gamma)
    excluded = 0.0
    if spec.gamma < 0:
        kern = np.where(diagonal, 0.0, kern)
        excluded = float(np.count_nonzero(diagonal)) * grid.dv ** 3

    om = quad.sphere_nodes
    w_half = 0.5 * quad.sphere_weights
    dots = u @ om.T
    with np.errstate(invalid="ignore"):
        cos = np.where(diagonal[:, None], 1.0, np.abs(dots) / np.where(un == 0, 1.0, un)[:, None])
    theta = np.arccos(np.clip(cos, -1.0, 1.0))
    b_vals = np.asarray(spec.b_gamma(theta))

    dv3 = grid.dv ** 3
    loss = 0.0
    if want_loss:
        loss = float(fx[np.ravel_multi_index(iv, (grid.nv,) * 3)]
                     * np.sum(kern * fx * (b_vals @ w_half)) * dv3 / spec.kappa)
    gain = 0.0
    if want_gain:
        for k in range(om.shape[0]):
            c = dots[:, k]
            vp = v[None, :] - c[:, None] * om[k][None, :]
            vsp = V + c[:, None] * om[k][None, :]
            fp = interp_v(h3, grid, vp) * _lab_envelope(x, t, vp, params)
            fsp = interp_v(h3, grid, vsp) * _lab_envelope(x, t, vsp, params)
            gain += float(np.sum(kern * b_vals[:, k] * fp * fsp)) * w_half[k]
        gain *= dv3 / spec.kappa
    return gain, loss, excluded


def _sphere_uniform(rng, m):
    g = rng.normal(size=(m, 3))
    nrm = np.sqrt(_sumsq(g))
    nrm = np.where(nrm == 0, 1.0, nrm)
    return g / nrm[:, None]


def _cell_mc(field, cell, spec, quad, params, grid, seed, want_gain, want_loss):
    if quad.mc_samples <= 0:
        raise ValueError("Monte Carlo backend needs mc_samples > 0")
    if seed is None:
        seed = quad.seed
    if seed is None:
        raise ValueError("Monte Carlo backend requires an explicit per-call seed")
    ix, iv = cell
    h3, x, _ = _lab_ratio_slice(field, grid, params, ix)
    t = field.time
    v = grid.v_center(iv)
    f_cell = float(field.values[ix + iv])

    rng = np.random.default_rng(seed)
    m = quad.mc_samples
    v_star = rng.normal(scale=math.sqrt(0.5 / params.beta), size=(m, 3))
    om = _sphere_uniform(rng, m)

    u = v[None, :] - v_star
    un = np.sqrt(_sumsq(u))
    c = np.sum(u * om, axis=-1)
    safe = np.where(un == 0, 1.0, un)
    theta = np.arccos(np.clip(np.abs(c) / safe, -1.0, 1.0))
    with np.errstate(divide="ignore"):
        kern = np.where(un == 0, 1.0 if spec.gamma == 0 else 0.0, un ** spec.gamma)
    b_vals = np.asarray(spec.b_gamma(theta))
    # uniform full-sphere sampling folded to S^2_+ (2*pi) and the Gaussian
    # v* proposal normalization (pi/beta)^{3/2}; exp(+beta|v*|^2) cancels
    # against the interpolation envelopes analytically.
    coef = 2.0 * np.pi * (np.pi / params.beta) ** 1.5 / spec.kappa
    base = coef * kern * b_vals

    gain_s = np.zeros(m)
    loss_s = np.zeros(m)
    if want_gain:
        vp = v[None, :] - c[:, None] * om
        vsp = v_star + c[:, None] * om
        hp = interp_v(h3, grid, vp)
        hsp = interp_v(h3, grid, vsp)
        log_fac = -params.alpha * (_sumsq(x[None, :] - t * vp)
                                   + _sumsq(x[None, :] - t * vsp)) \
            - params.beta * float(_sumsq(v))
        gain_s = base * hp * hsp * np.exp(log_fac)
    if want_loss:
        hstar = interp_v(h3, grid, v_star)
        loss_s = base * f_cell * hstar * np.exp(-params.alpha * _sumsq(x[None, :] - t * v_star))
    return gain_s, loss_s


def _mc_result(samples):
    m = samples.size
    value = float(samples.mean())
    stderr = float(samples.std(ddof=1) / math.sqrt(m)) if m > 1 else float("inf")
    return value, stderr


def q_gain(field, cell, spec, quad, params, grid, method="quadrature", seed=None):
    """Gain term (1/kappa) int B(v-v*,w) f(x,v') f(x,v*') dw dv* at one cell.

    Off-grid post-collision values use envelope-factored trilinear
    interpolation in v.  ``method`` selects the deterministic quadrature or
    the seeded Monte Carlo backend.
    """
    if method == "quadrature":
        gain, _, excluded = _cell_quadrature(field, cell, spec, quad, params, grid, True, False)
        return QEval(gain, 0.0, excluded)
    if method == "mc":
        gain_s, _ = _cell_mc(field, cell, spec, quad, params, grid, seed, True, False)
        value, stderr = _mc_result(gain_s)
        return QEval(value, stderr, 0.0)
    raise ValueError(f"unknown method {method!r}")


def q_loss(field, cell, spec, quad, params, grid, method="quadrature", seed=None):
    """Loss magnitude (1/kappa) f(x,v) int B f(x,v*) dw dv*; callers apply the sign."""
    if method == "quadrature":
        _, loss, excluded = _cell_quadrature(field, cell, spec, quad, params, grid, False, True)
        return QEval(loss, 0.0, excluded)
    if method == "mc":
        _, loss_s = _cell_mc(field, cell, spec, quad, params, grid, seed, False, True)
        value, stderr = _mc_result(loss_s)
        return QEval(value, stderr, 0.0)
    raise ValueError(f"unknown method {method!r}")


def q_full(field, cell, spec, quad, params, grid, method="quadrature", seed=None):
    """Full collision operator gain - loss with shared nodes (exact Maxwellian cancellation)."""
    if method == "quadrature":
        gain, loss, excluded = _cell_quadrature(field, cell, spec, quad, params, grid, True, True)
        return QEval(gain - loss, 0.0, excluded)
    if method == "mc":
        gain_s, loss_s = _cell_mc(field, cell, spec, quad, params, grid, seed, True, True)
        value, stderr = _mc_result(gain_s - loss_s)
        return QEval(value, stderr, 0.0)
    raise ValueError(f"unknown method {method!r}")


def _b_numba_form(spec):
    # (kind, coef, power): constant b = coef, or b = coef * cos^power(theta)
    if spec.b_name == "constant":
        return (0, spec.B_gamma / (2.0 * np.pi), 0.0)
    if spec.b_name.startswith("cos^"):
        k = float(spec.b_name[4:])
        return (1, spec.B_gamma * (k + 1.0) / (2.0 * np.pi), k)
    return None


def _grid_ratio(field, grid, params):
    """Envelope ratio of a full lab-frame field, shape (nx^3, nv^3)."""
    X = grid.x_points()
    V = grid.v_points()
    t = field.time
    vals = field.values.reshape(X.shape[0], V.shape[0])
    # |x - t v|^2 expanded to keep the intermediate at (nx^3, nv^3)
    log_env = -(params.alpha * (_sumsq(X)[:, None] - 2.0 * t * (X @ V.T)
                                + t * t * _sumsq(V)[None, :])
                + params.beta * _sumsq(V)[None, :])
    with np.errstate(divide="ignore"):
        h = np.exp(np.where(vals > 0, np.log(np.where(vals > 0, vals, 1.0)) - log_env, -np.inf))
    return h


def q_full_grid_mc(field, spec, quad, params, grid, seed):
    """Monte Carlo full collision operator on every cell of the grid.

    One shared (v*, omega) sample set per call keeps the evaluation
    vectorizable; sequential runs with the same seed are bit-identical.
    Returns (rate array shaped like the field, per-cell standard error bound).
    """
    if quad.mc_samples <= 0:
        raise ValueError("Monte Carlo backend needs mc_samples > 0")
    if seed is None:
        seed = quad.seed
    if seed is None:
        raise ValueError("Monte Carlo backend requires an explicit per-call seed")
    if field.frame != LAB:
        raise ValueError("collision operators act on lab-frame fields")
    rng = np.random.default_rng(seed)
    m = quad.mc_samples
    v_star = rng.normal(scale=math.sqrt(0.5 / params.beta), size=(m, 3))
    om = _sphere_uniform(rng, m)

    X = grid.x_points()
    V = grid.v_points()
    h = _grid_ratio(field, grid, params)
    values = field.values.reshape(X.shape[0], V.shape[0])

    if not HAVE_NUMBA:
        return _q_full_grid_mc_numpy(values, h, X, V, v_star, om, spec, params,
                                     grid, field.time).reshape(grid.shape)

    # geometry, kernel factors and interpolation stencils are x-independent:
    # precompute them over (v-cell, sample) and leave only gathers and one
    # exponential per sample to the compiled sweep
    t = field.time
    u = V[:, None, :] - v_star[None, :, :]
    un = np.sqrt(_sumsq(u))
    c = np.einsum("jsk,sk->js", u, om)
    with np.errstate(divide="ignore"):
        kern = np.where(un == 0, 1.0 if spec.gamma == 0 else 0.0, un ** spec.gamma)
    theta = np.arccos(np.clip(np.abs(c) / np.where(un == 0, 1.0, un), 0.0, 1.0))
    b_vals = np.asarray(spec.b_gamma(theta))
    vp = (V[:, None, :] - c[:, :, None] * om[None, :, :]).reshape(-1, 3)
    vsp = (v_star[None, :, :] + c[:, :, None] * om[None, :, :]).reshape(-1, 3)

    idx_p, w_p = _interp_stencil(vp, grid)
    idx_sp, w_sp = _interp_stencil(vsp, grid)
    idx_star, w_star = _interp_stencil(v_star, grid)

    coef_js = (kern * b_vals).reshape(-1)
    wsum_p = t * t * (_sumsq(vp) + _sumsq(vsp))
    wvec_p = t * (vp + vsp)
    ws_star = t * t * _sumsq(v_star)
    wv_star = t * v_star
    evj = np.exp(-params.beta * _sumsq(V))
    coef = 2.0 * np.pi * (np.pi / params.beta) ** 1.5 / (spec.kappa * m)
    out = _engines.mc_q_grid(values, h, X, _sumsq(X), evj,
                             idx_p, w_p, idx_sp, w_sp, idx_star, w_star,
                             coef_js, wsum_p, wvec_p, ws_star, wv_star,
                             params.alpha, coef)
    return out.reshape(grid.shape)


def _q_full_grid_mc_numpy(values, h, X, V, v_star, om, spec, params, grid, t):
    """Pure-numpy fallback for q_full_grid_mc, vectorized over x for each v cell."""
    m = v_star.shape[0]
    nxt = X.shape[0]
    out = np.empty((nxt, V.shape[0]))
    coef = 2.0 * np.pi * (np.pi / params.beta) ** 1.5 / (spec.kappa * m)
    x2 = _sumsq(X)

    # v*-dependent pieces shared by every (x, v) cell
    idx_star, w_star = _interp_stencil(v_star, grid)
    hstar = _gather(h, idx_star, w_star)            # (nx^3, m)
    env_star = np.exp(-params.alpha * (x2[:, None] - 2 * t * (X @ v_star.T)
                                       + t * t * _sumsq(v_star)[None, :]))

    for j in range(V.shape[0]):
        v = V[j]
        u = v[None, :] - v_star
        un = np.sqrt(_sumsq(u))
        c = np.sum(u * om, axis=-1)
        safe = np.where(un == 0, 1.0, un)
        cos = np.clip(np.abs(c) / safe, 0.0, 1.0)
        with np.errstate(divide="ignore"):
            kern = np.where(un == 0, 1.0 if spec.gamma == 0 else 0.0, un ** spec.gamma)
        b_vals = np.asarray(spec.b_gamma(np.arccos(cos)))
        base = kern * b_vals                         # (m,)

        vp = v[None, :] - c[:, None] * om
        vsp = v_star + c[:, None] * om
        idx_p, w_p = _interp_stencil(vp, grid)
        idx_sp, w_sp = _interp_stencil(vsp, grid)
        hp = _gather(h, idx_p, w_p)                  # (nx^3, m)
        hsp = _gather(h, idx_sp, w_sp)
        log_fac = -params.alpha * ((x2[:, None] - 2 * t * (X @ vp.T) + t * t * _sumsq(vp)[None, :])
                                   + (x2[:, None] - 2 * t * (X @ vsp.T) + t * t * _sumsq(vsp)[None, :])) \
            - params.beta * float(_sumsq(v))
        gain = hp * hsp * np.exp(log_fac)
        loss = values[:, j][:, None] * hstar * env_star
        out[:, j] = coef * ((gain - loss) * base[None, :]).sum(axis=1)
    return out


def _interp_stencil(v_pts, grid):
    """Flattened 8-corner stencil (idx, weights) into an (nv^3,) velocity slice."""
    from .phase import _axis_weights

    a0 = grid.v_axis()[0]
    nv = grid.nv
    per_axis = [_axis_weights(v_pts[:, ax], a0, grid.dv, nv) for ax in range(3)]
    m = v_pts.shape[0]
    idx = np.empty((m, 8), dtype=np.int64)
    w = np.empty((m, 8))
    k = 0
    for c0 in range(2):
        for c1 in range(2):
            for c2 in range(2):
                idx[:, k] = (per_axis[0][0][:, c0] * nv + per_axis[1][0][:, c1]) * nv + per_axis[2][0][:, c2]
                w[:, k] = per_axis[0][1][:, c0] * per_axis[1][1][:, c1] * per_axis[2][1][:, c2]
                k += 1
    return idx, w


def _gather(h, idx, w):
    # h: (nx^3, nv^3); idx/w: (m, 8) -> (nx^3, m)
    return np.einsum("xmk,mk->xm", h[:, idx], w, optimize=True)


def q_full_grid_quadrature(field, spec, quad, params, grid):
    """Deterministic full collision operator on every cell (small grids only)."""
    nb = _b_numba_form(spec)
    X = grid.x_points()
    V = grid.v_points()
    if HAVE_NUMBA and nb is not None:
        h = _grid_ratio(field, grid, params)
        values = field.values.reshape(X.shape[0], V.shape[0])
        out = _engines.quad_q_grid(values, h, X, V,
                                   quad.sphere_nodes, 0.5 * quad.sphere_weights,
                                   grid.v_axis()[0], grid.dv, grid.nv,
                                   spec.gamma, nb[0], nb[1], nb[2],
                                   params.alpha, params.beta, spec.kappa, field.time)
        return out.reshape(grid.shape)
    out = np.empty(grid.shape)
    for fx in range(grid.nx ** 3):
        ix = np.unravel_index(fx, (grid.nx,) * 3)
        for fv in range(grid.nv ** 3):
            iv = np.unravel_index(fv, (grid.nv,) * 3)
            gain, loss, _ = _cell_quadrature(field, (ix, iv), spec, quad, params, grid, True, True)
            out[ix + iv] = gain - loss
    return out


def collision_frequency_bound(spec, params, grid):
    """Upper bound on the loss frequency (1/kappa) int B f* dw dv* over the sandwich set."""
    beta = params.beta
    if spec.gamma == 0:
        integral = (np.pi / beta) ** 1.5
    elif spec.gamma < 0:
        # split |u|^gamma <= 1_{|u|<=1}|u|^gamma + 1 against the Gaussian
        integral = 4.0 * np.pi / (spec.gamma + 3.0) + (np.pi / beta) ** 1.5
    else:
        # |u|^gamma <= 1 + |u| <= 1 + |v| + |v*| for gamma in (0, 1]
        vmax = math.sqrt(3.0) * grid.v_extent
        integral = (1.0 + vmax) * (np.pi / beta) ** 1.5 + 2.0 * np.pi / beta ** 2
    return params.a_M * spec.B_gamma * integral / spec.kappa


def q_lipschitz_bound(spec, params, grid):
    """Estimated Lipschitz constant of f -> Q(f, f) on the sandwich set (gain + loss)."""
    return 2.0 * collision_frequency_bound(spec, params, grid)
