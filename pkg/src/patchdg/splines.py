"""B-spline spaces on [-1, 1]: knot vectors, basis evaluation, knot placement.

All spaces use open knot vectors (ends repeated degree+1 times) with simple
interior knots, so bases have maximal smoothness, interpolate at the
endpoints, and form a partition of unity.  Three interior-knot layouts are
supported: uniform, smoothed (fixed-point redistribution toward equispaced
collocation averages), and the eigenfunction-root layout that minimizes the
worst-case best-approximation error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import brentq

from .quadrature import composite_rule

KNOT_FAMILIES = ("uniform", "smoothed", "optimal")

_DOMAIN_SLACK = 1e-12
SMOOTHING_TOL = 1e-8
SMOOTHING_MAX_ITER = 10000
MAX_EIGENFUNCTION_ORDER = 5


class ConvergenceError(RuntimeError):
    """An iterative routine failed to reach its tolerance."""


@dataclass(frozen=True)
class KnotVector:
    """Open knot vector of a univariate spline space.

    Attributes
    ----------
    degree : int
        Polynomial degree p >= 0.
    knots : ndarray
        Full non-decreasing knot list of length 2p + K + 1 whose first and
        last entries repeat p + 1 times; interior knots are simple.
    """

    degree: int
    knots: np.ndarray

    def __post_init__(self):
        knots = np.ascontiguousarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", knots)
        p = self.degree
        if p < 0:
            raise ValueError(f"degree must be non-negative, got {p}")
        if knots.ndim != 1 or knots.size < 2 * p + 2:
            raise ValueError("knot list too short for an open vector")
        if np.any(np.diff(knots) < 0):
            raise ValueError("knots must be non-decreasing")
        if np.any(knots[: p + 1] != knots[0]) or np.any(knots[-(p + 1):] != knots[-1]):
            raise ValueError("ends of an open knot vector must repeat degree+1 times")
        interior = knots[p: knots.size - p]
        if np.any(np.diff(interior) <= 0):
            raise ValueError("interior knots must be strictly increasing (simple)")

    @property
    def num_spans(self) -> int:
        return self.knots.size - 2 * self.degree - 1

    @property
    def dim(self) -> int:
        return self.knots.size - self.degree - 1

    @property
    def breakpoints(self) -> np.ndarray:
        p = self.degree
        return self.knots[p: self.knots.size - p]

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    def to_dict(self) -> dict:
        return {"degree": self.degree, "knots": self.knots.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "KnotVector":
        return cls(int(data["degree"]), np.asarray(data["knots"], dtype=float))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "KnotVector":
        return cls.from_dict(json.loads(text))


def make_open_uniform_knots(p, K) -> KnotVector:
    """Open knot vector with K uniform spans on [-1, 1] and degree p."""
    if p < 0:
        raise ValueError(f"degree must be non-negative, got {p}")
    if K < 1:
        raise ValueError(f"need at least one span, got K={K}")
    return open_knots_from_breakpoints(p, np.linspace(-1.0, 1.0, K + 1))


def open_knots_from_breakpoints(p, breakpoints) -> KnotVector:
    """Open knot vector of degree p over given strictly increasing breakpoints."""
    bp = np.asarray(breakpoints, dtype=float)
    knots = np.concatenate([np.full(p, bp[0]), bp, np.full(p, bp[-1])])
    return KnotVector(p, knots)


def make_knots(family, p, K, **kwargs) -> KnotVector:
    """Build a knot vector of one of the supported families.

    ``family`` is one of ``"uniform"``, ``"smoothed"``, ``"optimal"``.
    Extra keyword arguments are forwarded to the family constructor.
    """
    if family == "uniform":
        return make_open_uniform_knots(p, K)
    if family == "smoothed":
        return smooth_knots(p, K, **kwargs)
    if family == "optimal":
        return optimal_knots(p, K, **kwargs)
    raise ValueError(f"unknown knot family {family!r}; expected one of {KNOT_FAMILIES}")


def _check_domain(kv: KnotVector, x: np.ndarray) -> np.ndarray:
    lo, hi = kv.domain
    if x.size and (x.min() < lo - _DOMAIN_SLACK or x.max() > hi + _DOMAIN_SLACK):
        bad = x[(x < lo - _DOMAIN_SLACK) | (x > hi + _DOMAIN_SLACK)][0]
        raise ValueError(f"evaluation point {bad!r} outside [{lo}, {hi}]")
    return np.clip(x, lo, hi)


def find_spans(kv: KnotVector, x) -> np.ndarray:
    """Indices i with knots[i] <= x < knots[i+1], clipped to valid spans."""
    x = _check_domain(kv, np.atleast_1d(np.asarray(x, dtype=float)))
    p = kv.degree
    span = np.searchsorted(kv.knots, x, side="right") - 1
    return np.clip(span, p, p + kv.num_spans - 1)


def _local_basis(kv: KnotVector, x: np.ndarray):
    """Nonzero basis values at each point (Cox-de Boor, vectorized).

    Returns ``(span, N)`` with ``N[m, j] = B_{span[m]-p+j}(x[m])``.
    """
    p = kv.degree
    t = kv.knots
    span = find_spans(kv, x)
    x = np.clip(x, *kv.domain)
    n = x.size
    N = np.zeros((n, p + 1))
    N[:, 0] = 1.0
    left = np.empty((n, p + 1))
    right = np.empty((n, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - t[span + 1 - j]
        right[:, j] = t[span + j] - x
        saved = np.zeros(n)
        for r in range(j):
            temp = N[:, r] / (right[:, r + 1] + left[:, j - r])
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved
    return span, N


def derivative_operator(kv: KnotVector):
    """Coefficient map of d/dx onto the degree-(p-1) space with the same breakpoints.

    Returns ``(D, lower)`` so that a spline with coefficients ``c`` on ``kv``
    has derivative coefficients ``D @ c`` on ``lower``.
    """
    p = kv.degree
    if p < 1:
        raise ValueError("derivative_operator requires degree >= 1")
    t = kv.knots
    n = kv.dim
    lower = KnotVector(p - 1, t[1:-1])
    D = np.zeros((n - 1, n))
    denom = t[p + 1: p + n] - t[1:n]
    D[np.arange(n - 1), np.arange(n - 1)] = -p / denom
    D[np.arange(n - 1), np.arange(1, n)] = p / denom
    return D, lower


def _basis_matrix(kv: KnotVector, x, order=0) -> np.ndarray:
    """Dense (n_points, dim) matrix of basis values or derivatives of any order."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if order < 0:
        raise ValueError(f"order must be non-negative, got {order}")
    if order > kv.degree:
        return np.zeros((x.size, kv.dim))
    chain = None
    cur = kv
    for _ in range(order):
        D, cur = derivative_operator(cur)
        chain = D if chain is None else D @ chain
    span, N = _local_basis(cur, x)
    B = np.zeros((x.size, cur.dim))
    cols = span[:, None] - cur.degree + np.arange(cur.degree + 1)[None, :]
    np.put_along_axis(B, cols, N, axis=1)
    return B if chain is None else B @ chain


def eval_basis(kv: KnotVector, x, order=0) -> np.ndarray:
    """Values (order 0) or first derivatives (order 1) of all basis functions.

    Parameters
    ----------
    kv : KnotVector
    x : float or array_like
        Points inside the knot vector's domain (a small roundoff slack is
        clipped; anything beyond raises ``ValueError``).
    order : {0, 1}

    Returns
    -------
    ndarray of shape (dim,) for scalar x, else (len(x), dim).
    """
    if order not in (0, 1):
        raise ValueError(f"order must be 0 or 1, got {order}")
    scalar = np.ndim(x) == 0
    B = _basis_matrix(kv, x, order)
    return B[0] if scalar else B


def eval_spline(kv: KnotVector, coefficients, x, order=0) -> np.ndarray:
    """Evaluate one spline (or its derivative) without forming the dense basis."""
    c = np.asarray(coefficients, dtype=float)
    if c.shape != (kv.dim,):
        raise ValueError(f"expected {kv.dim} coefficients, got shape {c.shape}")
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    cur, ccur = kv, c
    for _ in range(min(order, kv.degree)):
        D, cur = derivative_operator(cur)
        ccur = D @ ccur
    if order > kv.degree:
        out = np.zeros(x.size)
    else:
        span, N = _local_basis(cur, x)
        cols = span[:, None] - cur.degree + np.arange(cur.degree + 1)[None, :]
        out = np.einsum("ij,ij->i", N, ccur[cols])
    return float(out[0]) if scalar else out


def greville_abscissae(kv: KnotVector) -> np.ndarray:
    """Knot averages tau_j = (xi_{j+1} + ... + xi_{j+p}) / p.

    These are the coefficients that reproduce the identity map:
    sum_j tau_j B_j(x) = x.
    """
    p = kv.degree
    if p < 1:
        raise ValueError("Greville abscissae require degree >= 1")
    t = kv.knots
    idx = np.arange(kv.dim)[:, None] + np.arange(1, p + 1)[None, :]
    return t[idx].mean(axis=1)


def smooth_knots(p, K, tol=SMOOTHING_TOL, max_iter=SMOOTHING_MAX_ITER,
                 return_history=False):
    """Fixed-point knot redistribution toward equispaced collocation averages.

    Starting from the uniform open vector, each sweep re-evaluates every
    original uniform knot through the current basis with equispaced target
    coefficients and takes the result as the next knot vector:

        xi_i  <-  sum_j  xhat_j B_j(xi_i^uniform; current knots),

    with xhat_j the p+K equispaced points on [-1, 1].  Iteration stops when
    the 2-norm of the knot update falls below ``tol``.

    For p = 1 the uniform vector is already the exact fixed point.

    Returns the smoothed KnotVector; with ``return_history=True`` also the
    list of update norms (one per sweep).
    """
    uniform = make_open_uniform_knots(p, K)
    if p < 1:
        raise ValueError("knot smoothing requires degree >= 1")
    x_eval = uniform.knots.copy()
    targets = np.linspace(-1.0, 1.0, p + K)
    cur = uniform.knots.copy()
    history = []
    for _ in range(max_iter):
        B = _basis_matrix(KnotVector(p, cur), x_eval, 0)
        new = B @ targets
        if np.any(np.diff(new) < -1e-14):
            raise RuntimeError("internal error: smoothing sweep broke knot ordering")
        delta = float(np.linalg.norm(new - cur))
        history.append(delta)
        cur = new
        if delta < tol:
            kv = KnotVector(p, cur)
            return (kv, history) if return_history else kv
    raise ConvergenceError(
        f"knot smoothing (p={p}, K={K}) did not reach {tol:g} within {max_iter} sweeps"
    )


def _eigenfunction_roots(p, K, r, resolution):
    """Interior roots of the K-th eigenfunction of (-1)^r y^(2r) = lambda y.

    Fully clamped conditions y^(k)(+-1) = 0 for k < r; discretized with a
    Galerkin spline space of degree max(p, r+1) on ``resolution`` uniform
    spans.  The K-th eigenfunction carries exactly K-1 interior sign changes.
    """
    q = max(p, r + 1)
    fine = make_open_uniform_knots(q, resolution)
    x, w = composite_rule(fine)
    B0 = _basis_matrix(fine, x, 0)
    Br = _basis_matrix(fine, x, r)
    M = (B0 * w[:, None]).T @ B0
    A = (Br * w[:, None]).T @ Br
    # strong clamped conditions: drop the first and last r basis functions
    sl = slice(r, fine.dim - r)
    hi = min(K + 2, fine.dim - 2 * r - 1)
    _, vecs = eigh(A[sl, sl], M[sl, sl], subset_by_index=[0, hi])

    grid = np.linspace(-1.0, 1.0, 10 * resolution + 1)
    target = K - 1
    # On the symmetric domain the K-th eigenfunction has parity (-1)^(K-1).
    # Projecting onto that parity removes floating-point mixing with the
    # neighbouring opposite-parity modes, which otherwise dominates the root
    # error once the extreme discrete eigenvalues approach 1/eps (large r).
    parity = 1.0 if target % 2 == 0 else -1.0
    for idx in sorted(range(vecs.shape[1]), key=lambda i: abs(i - target)):
        coef = np.zeros(fine.dim)
        coef[sl] = vecs[:, idx]
        vals = eval_spline(fine, coef, grid)
        vsym = 0.5 * (vals + parity * vals[::-1])
        if np.linalg.norm(vsym) < 0.5 * np.linalg.norm(vals):
            continue  # candidate has the wrong parity
        sign = np.sign(vsym)
        nz = sign != 0
        s = sign[nz]
        g = grid[nz]
        flips = np.nonzero(s[:-1] * s[1:] < 0)[0]
        if flips.size != target:
            continue

        def f(t):
            return 0.5 * (eval_spline(fine, coef, t)
                          + parity * eval_spline(fine, coef, -t))

        roots = np.array([
            brentq(f, g[i], g[i + 1], xtol=1e-13, rtol=8.9e-16)
            for i in flips
        ])
        roots.sort()
        sym = 0.5 * (roots - roots[::-1])
        assert np.max(np.abs(roots - sym)) < 1e-6, "eigenfunction roots not symmetric"
        return sym
    raise RuntimeError(
        f"no eigenfunction with {target} interior sign changes near index {target}"
    )


def optimal_knots(p, K, resolution=None, r=None) -> KnotVector:
    """Knot vector with interior knots at eigenfunction roots.

    The interior knots are the K-1 roots of the K-th eigenfunction of the
    boundary eigenproblem (-1)^r y^(2r) = lambda y with clamped conditions
    y^(k)(+-1) = 0 for k < r; by default r = p.  This placement minimizes the
    worst-case L^2 best-approximation error over the unit ball of C^{r-1}
    functions.  Orders r > 5 are rejected (the discretized eigenproblem is
    too ill-conditioned to trust).

    ``resolution`` is the span count of the fine Galerkin space used for the
    eigensolve; it must be at least 8K and defaults to max(16K, 128).
    """
    if r is None:
        r = p
    if r < 1 or p < 1:
        raise ValueError("optimal_knots requires p >= 1 and r >= 1")
    if r > MAX_EIGENFUNCTION_ORDER:
        raise ValueError(
            f"eigenfunction order r={r} unsupported (limit {MAX_EIGENFUNCTION_ORDER})"
        )
    if K < 1:
        raise ValueError(f"need at least one span, got K={K}")
    if K == 1:
        return make_open_uniform_knots(p, K)
    if resolution is None:
        resolution = max(16 * K, 128)
    if resolution < 8 * K:
        raise ValueError(f"resolution {resolution} below the minimum {8 * K}")
    roots = _eigenfunction_roots(p, K, r, int(resolution))
    breakpoints = np.concatenate([[-1.0], roots, [1.0]])
    return open_knots_from_breakpoints(p, breakpoints)


@dataclass(frozen=True)
class KnotDeltas:
    """Normalized distances of the smoothed layout from the eigenroot layout."""

    delta_knot: float
    delta_greville: float


def knot_deltas(p, K, resolution=None) -> KnotDeltas:
    """How close smoothing gets to the eigenroot-optimal knots.

    Both distances are sup-norm differences normalized by the corresponding
    uniform-vs-optimal difference, so a value of zero means smoothing
    recovered the optimal layout and one means it did no better than the
    uniform layout.  Requires p >= 2 (for p = 1 the optimal layout is itself
    uniform and the normalization degenerates).
    """
    if p < 2:
        raise ValueError("knot_deltas requires p >= 2")
    uni = make_open_uniform_knots(p, K)
    smo = smooth_knots(p, K)
    opt = optimal_knots(p, K, resolution=resolution)
    dk = np.max(np.abs(smo.knots - opt.knots)) / np.max(np.abs(uni.knots - opt.knots))
    dg = (np.max(np.abs(greville_abscissae(smo) - greville_abscissae(opt)))
          / np.max(np.abs(greville_abscissae(uni) - greville_abscissae(opt))))
    return KnotDeltas(float(dk), float(dg))
