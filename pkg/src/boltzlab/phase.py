"""Phase-space grids, distribution fields, Maxwellian envelopes and L^p diagnostics.

Conventions used throughout the package:

* position and velocity domains are centered cubes ``[-x_extent, x_extent]^3``
  and ``[-v_extent, v_extent]^3`` with cell-centered uniform grids,
* field storage is a 6-d array of shape ``(nx, nx, nx, nv, nv, nv)`` in C
  order, so the velocity index runs fastest within each position cell,
* ``p = math.inf`` denotes the L^infinity exponent; on a grid this is the
  cell-wise maximum and is reported as a "grid-sup" everywhere,
* the quasi-norm formula for ``0 < p < 1`` is computed with the same
  expression as for ``p >= 1``; no code path relies on the triangle
  inequality for ``p < 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _sumsq(pts):
    return np.sum(np.square(pts), axis=-1)


@dataclass(frozen=True)
class MaxwellianParams:
    """Parameters of the travelling Maxwellian envelope exp(-alpha|x|^2 - beta|v|^2)
    together with the sandwich amplitudes a_m <= a_M."""

    alpha: float
    beta: float
    a_m: float = 1.0
    a_M: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("decay rates alpha, beta must be strictly positive")
        if not (0 < self.a_m):
            raise ValueError("lower sandwich amplitude a_m must be positive")
        if self.a_m > self.a_M:
            raise ValueError("sandwich amplitudes inverted: a_m > a_M")


def maxwellian_eval(x, v, params):
    """Evaluate exp(-alpha|x|^2 - beta|v|^2) at one point or arrays of points.

    ``x`` and ``v`` are arrays whose last axis has length 3; broadcasting
    across leading axes is supported.  Underflows quietly to 0.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.exp(-params.alpha * _sumsq(x) - params.beta * _sumsq(v))


def _angular_integral(b_gamma, n_nodes=200):
    # integral of b(theta) over the hemisphere S^2_+, i.e.
    # 2*pi * int_0^{pi/2} b(theta) sin(theta) dtheta, by Gauss-Legendre
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    theta = 0.25 * np.pi * (nodes + 1.0)
    w = 0.25 * np.pi * weights
    return 2.0 * np.pi * float(np.sum(w * np.asarray(b_gamma(theta)) * np.sin(theta)))


@dataclass(frozen=True)
class KernelSpec:
    """Cutoff collision kernel |v - v*|^gamma * b_gamma(theta).

    ``b_gamma`` is a vectorized callable of the angle theta in [0, pi/2]
    between v - v* and omega; ``B_gamma`` is its integral over the
    hemisphere S^2_+ and is revalidated by quadrature on construction.
    ``kappa`` is the Knudsen number scaling 1/kappa in front of Q.
    """

    gamma: float
    b_gamma: object
    B_gamma: float
    kappa: float = 1.0
    b_name: str = "custom"

    def __post_init__(self):
        if not (-3.0 < self.gamma <= 1.0):
            raise ValueError(f"gamma={self.gamma} outside the admissible range (-3, 1]")
        if not (np.isfinite(self.B_gamma) and self.B_gamma > 0):
            raise ValueError("B_gamma must be finite and positive")
        if not self.kappa > 0:
            raise ValueError("Knudsen number kappa must be positive")
        recomputed = _angular_integral(self.b_gamma)
        if abs(recomputed - self.B_gamma) > 1e-6 * abs(self.B_gamma):
            raise ValueError(
                f"angular factor integrates to {recomputed:.9g} over the hemisphere, "
                f"inconsistent with stored B_gamma={self.B_gamma:.9g}"
            )


def constant_kernel(gamma, B_gamma=1.0, kappa=1.0):
    """Kernel with constant angular factor b = B_gamma / (2*pi)."""
    c = B_gamma / (2.0 * np.pi)
    return KernelSpec(gamma=gamma, b_gamma=lambda theta: np.full_like(np.asarray(theta, dtype=float), c),
                      B_gamma=B_gamma, kappa=kappa, b_name="constant")


def cos_power_kernel(gamma, k, B_gamma=1.0, kappa=1.0):
    """Kernel with b(theta) = B_gamma * (k+1) * cos^k(theta) / (2*pi)."""
    if k < 0:
        raise ValueError("cosine power must be nonnegative")
    c = B_gamma * (k + 1) / (2.0 * np.pi)
    return KernelSpec(gamma=gamma, b_gamma=lambda theta: c * np.cos(theta) ** k,
                      B_gamma=B_gamma, kappa=kappa, b_name=f"cos^{k}")


@dataclass(frozen=True)
class PhaseGrid:
    """Cell-centered truncation of R^3_x x R^3_v to a pair of cubes."""

    x_extent: float
    v_extent: float
    nx: int
    nv: int

    def __post_init__(self):
        if self.nx < 2 or self.nv < 2:
            raise ValueError("need at least 2 cells per axis")
        if not (self.x_extent > 0 and self.v_extent > 0):
            raise ValueError("grid extents must be strictly positive")

    @property
    def dx(self):
        return 2.0 * self.x_extent / self.nx

    @property
    def dv(self):
        return 2.0 * self.v_extent / self.nv

    @property
    def cell_volume(self):
        """Phase-space cell volume dx^3 * dv^3."""
        return self.dx ** 3 * self.dv ** 3

    @property
    def shape(self):
        return (self.nx,) * 3 + (self.nv,) * 3

    def x_axis(self):
        return -self.x_extent + (np.arange(self.nx) + 0.5) * self.dx

    def v_axis(self):
        return -self.v_extent + (np.arange(self.nv) + 0.5) * self.dv

    def x_points(self):
        """All position cell centers, shape (nx^3, 3)."""
        a = self.x_axis()
        return np.stack(np.meshgrid(a, a, a, indexing="ij"), axis=-1).reshape(-1, 3)

    def v_points(self):
        """All velocity cell centers, shape (nv^3, 3)."""
        a = self.v_axis()
        return np.stack(np.meshgrid(a, a, a, indexing="ij"), axis=-1).reshape(-1, 3)

    def x_center(self, ix):
        a = self.x_axis()
        return np.array([a[ix[0]], a[ix[1]], a[ix[2]]])

    def v_center(self, iv):
        a = self.v_axis()
        return np.array([a[iv[0]], a[iv[1]], a[iv[2]]])

    def validate_truncation(self, params, truncation_tol=1e-12):
        """Check that the Maxwellian envelope is below truncation_tol at the box faces."""
        ex = math.exp(-params.alpha * self.x_extent ** 2)
        ev = math.exp(-params.beta * self.v_extent ** 2)
        if not (ex < truncation_tol and ev < truncation_tol):
            raise ValueError(
                "grid truncation not admissible: envelope at the box faces is "
                f"(x: {ex:.3e}, v: {ev:.3e}), not below {truncation_tol:.3e}"
            )

    @staticmethod
    def for_params(params, nx, nv, truncation_tol=1e-12):
        """Smallest admissible centered cube grid for the given envelope."""
        ext_x = math.sqrt(math.log(1.0 / truncation_tol) / params.alpha) * (1 + 1e-9)
        ext_v = math.sqrt(math.log(1.0 / truncation_tol) / params.beta) * (1 + 1e-9)
        grid = PhaseGrid(x_extent=ext_x, v_extent=ext_v, nx=nx, nv=nv)
        grid.validate_truncation(params, truncation_tol)
        return grid


LAB = "lab"
SHARP = "sharp"


@dataclass
class DistributionField:
    """Discretized distribution function on a PhaseGrid.

    ``frame`` records whether ``values`` represent f (lab) or f^sharp; the
    two are related by f^sharp(x, v, t) = f(x + t v, v, t) and conversions
    live in the transport module.  Values are a number density and must be
    nonnegative and finite.
    """

    values: np.ndarray
    frame: str = SHARP
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 6:
            raise ValueError("field values must be a 6-d array (3 position + 3 velocity axes)")
        if self.frame not in (LAB, SHARP):
            raise ValueError(f"unknown frame {self.frame!r}")
        if self.time < 0:
            raise ValueError("time must be nonnegative")
        mn = self.values.min()
        if not mn >= 0.0:
            raise ValueError(f"distribution values must be nonnegative (min={mn!r})")

    def copy(self):
        return DistributionField(self.values.copy(), self.frame, self.time)


def _require_finite(values):
    if not np.isfinite(values).all():
        bad = np.argwhere(~np.isfinite(values))[0]
        raise ValueError(f"non-finite field value at cell {tuple(int(i) for i in bad)}")


def _as_values(field):
    return field.values if isinstance(field, DistributionField) else np.asarray(field, dtype=float)


def lp_norm(field, p, grid):
    """L^p norm (quasi-norm for p < 1, grid-sup for p = inf) of a field.

    For finite p returns (sum |f|^p dx^3 dv^3)^(1/p); the computation is
    scaled by the field maximum so that large and fractional exponents do
    not overflow.
    """
    if not p > 0:
        raise ValueError("Lebesgue exponent must be positive")
    values = _as_values(field)
    _require_finite(values)
    a = np.abs(values)
    if math.isinf(p):
        return float(a.max()) if a.size else 0.0
    m = float(a.max())
    if m == 0.0:
        return 0.0
    s = float(np.sum((a / m) ** p))
    return m * (s * grid.cell_volume) ** (1.0 / p)


def envelope_log(grid, params):
    """log M on the grid: -(alpha|x|^2 + beta|v|^2), shape (nx,nx,nx,nv,nv,nv) by broadcasting."""
    x2 = _sumsq(grid.x_points()).reshape(grid.nx, grid.nx, grid.nx, 1, 1, 1)
    v2 = _sumsq(grid.v_points()).reshape(1, 1, 1, grid.nv, grid.nv, grid.nv)
    return -(params.alpha * x2 + params.beta * v2)


def weighted_lp_norm(field, p, params, grid):
    """L^p_M norm: the L^p norm of f^sharp / M_{alpha,beta}.

    The ratio is formed in log space so the inverse Maxwellian never
    overflows at the grid corners; zero field values map to a zero ratio.
    Accepts a sharp-frame DistributionField or a raw (possibly signed)
    array, in which case |values| is used.
    """
    if isinstance(field, DistributionField) and field.frame != SHARP:
        raise ValueError("weighted norm is defined on sharp-frame fields")
    values = _as_values(field)
    _require_finite(values)
    with np.errstate(divide="ignore"):
        log_ratio = np.log(np.abs(values)) - envelope_log(grid, params)
    ratio = np.exp(log_ratio)
    return lp_norm(ratio, p, grid)


def maxwellian_field(grid, params, frame=SHARP, time=0.0, amplitude=1.0):
    """The travelling Maxwellian sampled on the grid.

    In the sharp frame this is amplitude * M(x, v) independent of time; in
    the lab frame it is amplitude * M(x - t v, v).
    """
    X = grid.x_points().reshape(grid.nx, grid.nx, grid.nx, 1, 1, 1, 3)
    V = grid.v_points().reshape(1, 1, 1, grid.nv, grid.nv, grid.nv, 3)
    if frame == SHARP:
        vals = amplitude * np.exp(-params.alpha * _sumsq(X) - params.beta * _sumsq(V))
    else:
        vals = amplitude * np.exp(-params.alpha * _sumsq(X - time * V) - params.beta * _sumsq(V))
    return DistributionField(vals, frame=frame, time=time)


@dataclass(frozen=True)
class SandwichReport:
    """Outcome of the two-sided Maxwellian sandwich check."""

    passed: bool
    margin: float
    cell: tuple
    lower_margin: float
    upper_margin: float

    def __bool__(self):
        return self.passed


def sandwich_check(field, params, grid):
    """Verify a_m * M <= f^sharp <= a_M * M cellwise.

    Returns the minimal absolute slack over all cells and its location;
    failure is a report state, not an exception.
    """
    if field.frame != SHARP:
        raise ValueError("the sandwich condition applies to sharp-frame fields")
    M = np.exp(envelope_log(grid, params))
    lower = field.values - params.a_m * M
    upper = params.a_M * M - field.values
    slack = np.minimum(lower, upper)
    flat = int(np.argmin(slack))
    cell = tuple(int(i) for i in np.unravel_index(flat, slack.shape))
    margin = float(slack.reshape(-1)[flat])
    return SandwichReport(
        passed=margin >= 0.0,
        margin=margin,
        cell=cell,
        lower_margin=float(lower.min()),
        upper_margin=float(upper.min()),
    )


def random_sandwiched_field(grid, params, seed, n_modes=4, fill=0.9):
    """Smooth random sharp-frame field strictly inside the sandwich.

    The field is M * (mid + amp * s) where s is a normalized sum of
    n_modes low-wavenumber cosines over (x, v) with seeded random phases,
    |s| <= 1, mid the sandwich midpoint and amp = fill * half-width.
    """
    if not 0 < fill <= 1:
        raise ValueError("fill must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    X = grid.x_points().reshape(grid.nx, grid.nx, grid.nx, 1, 1, 1, 3)
    V = grid.v_points().reshape(1, 1, 1, grid.nv, grid.nv, grid.nv, 3)
    s = np.zeros(grid.shape)
    coeffs = rng.uniform(0.3, 1.0, size=n_modes)
    for k in range(n_modes):
        kx = rng.uniform(-1.0, 1.0, size=3) * (np.pi / (2 * grid.x_extent)) * rng.integers(1, 3)
        kv = rng.uniform(-1.0, 1.0, size=3) * (np.pi / (2 * grid.v_extent)) * rng.integers(1, 3)
        phase = rng.uniform(0.0, 2 * np.pi)
        s = s + coeffs[k] * np.cos(X @ kx + V @ kv + phase)
    s /= np.sum(coeffs)
    mid = 0.5 * (params.a_m + params.a_M)
    amp = 0.5 * (params.a_M - params.a_m) * fill
    M = np.exp(envelope_log(grid, params))
    return DistributionField(M * (mid + amp * s), frame=SHARP, time=0.0)


# ---------------------------------------------------------------------------
# Envelope-factored interpolation.
#
# Sandwiched fields span many orders of magnitude across the box, which makes
# plain multilinear interpolation of raw values useless (the interpolant of a
# Gaussian overshoots by the cell-wise dynamic range).  All off-grid field
# evaluations therefore interpolate the bounded ratio h = f / E, where E is
# the Maxwellian envelope in the field's own frame
#       sharp:  E(x, v) = exp(-alpha|x|^2 - beta|v|^2)
#       lab:    E(x, v) = exp(-alpha|x - t v|^2 - beta|v|^2)
# and multiply the exact envelope back at the target point.
# ---------------------------------------------------------------------------


def _axis_weights(pts, origin, step, n):
    """Linear interpolation stencils along one axis with zero extension."""
    t = (np.asarray(pts, dtype=float) - origin) / step
    k = np.floor(t).astype(np.int64)
    lam = t - k
    idx = np.stack([k, k + 1], axis=-1)
    w = np.stack([1.0 - lam, lam], axis=-1)
    inside = (idx >= 0) & (idx < n)
    w = np.where(inside, w, 0.0)
    idx = np.clip(idx, 0, n - 1)
    return idx, w


def interp_v(values_v, grid, v_pts):
    """Trilinear interpolation of per-x velocity data at points (m, 3).

    ``values_v`` has shape (..., nv, nv, nv); the result has shape
    (..., m).  Points outside the velocity box evaluate to zero.
    """
    a0 = grid.v_axis()[0]
    idx, w = zip(*(_axis_weights(v_pts[:, ax], a0, grid.dv, grid.nv) for ax in range(3)))
    out = 0.0
    for c0 in range(2):
        for c1 in range(2):
            for c2 in range(2):
                ww = w[0][:, c0] * w[1][:, c1] * w[2][:, c2]
                out = out + ww * values_v[..., idx[0][:, c0], idx[1][:, c1], idx[2][:, c2]]
    return out


def interp_phase(values, grid, x_pts, v_pts):
    """Hexalinear (3+3 dimensional) interpolation of a 6-d field at points.

    ``x_pts`` and ``v_pts`` are (m, 3); zero extension outside the box.
    """
    x0 = grid.x_axis()[0]
    v0 = grid.v_axis()[0]
    ix, wx = zip(*(_axis_weights(x_pts[:, ax], x0, grid.dx, grid.nx) for ax in range(3)))
    iv, wv = zip(*(_axis_weights(v_pts[:, ax], v0, grid.dv, grid.nv) for ax in range(3)))
    out = np.zeros(len(x_pts))
    for c0 in range(2):
        for c1 in range(2):
            for c2 in range(2):
                wwx = wx[0][:, c0] * wx[1][:, c1] * wx[2][:, c2]
                if not np.any(wwx):
                    continue
                for d0 in range(2):
                    for d1 in range(2):
                        for d2 in range(2):
                            ww = wwx * wv[0][:, d0] * wv[1][:, d1] * wv[2][:, d2]
                            out += ww * values[ix[0][:, c0], ix[1][:, c1], ix[2][:, c2],
                                               iv[0][:, d0], iv[1][:, d1], iv[2][:, d2]]
    return out


def envelope_ratio(field, grid, params):
    """h = f / E with E the frame-appropriate Maxwellian envelope (exact at nodes)."""
    values = _as_values(field)
    if isinstance(field, DistributionField) and field.frame == LAB:
        X = grid.x_points().reshape(grid.nx, grid.nx, grid.nx, 1, 1, 1, 3)
        V = grid.v_points().reshape(1, 1, 1, grid.nv, grid.nv, grid.nv, 3)
        log_env = -(params.alpha * _sumsq(X - field.time * V) + params.beta * _sumsq(V))
    else:
        log_env = envelope_log(grid, params)
    return values * np.exp(-log_env)


def eval_sharp_field(ratio, grid, params, x_pts, v_pts):
    """Evaluate a sharp-frame field off-grid from its envelope ratio.

    ``ratio`` is the output of :func:`envelope_ratio`; the exact envelope
    exp(-alpha|x|^2 - beta|v|^2) is multiplied back at the target points.
    """
    h = interp_phase(ratio, grid, x_pts, v_pts)
    return h * np.exp(-params.alpha * _sumsq(x_pts) - params.beta * _sumsq(v_pts))
