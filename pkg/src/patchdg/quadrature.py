"""Gauss-Legendre quadrature on [-1, 1] and composite rules over knot spans."""

import numpy as np

MAX_GAUSS_POINTS = 30
_NEWTON_TOL = 1e-15
_gauss_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _legendre_and_derivative(n, x):
    """Evaluate P_n and P_n' at x via the three-term recurrence."""
    p_prev = np.ones_like(x)
    p = x.copy()
    for j in range(2, n + 1):
        p_prev, p = p, ((2 * j - 1) * x * p - (j - 1) * p_prev) / j
    # derivative from P_n and P_{n-1}; x is strictly inside (-1, 1) here
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


def gauss_legendre(n):
    """Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].

    Nodes are found by Newton iteration on the Legendre polynomial P_n,
    then symmetrized about the origin.  Weights sum to 2 and are positive.

    Parameters
    ----------
    n : int
        Number of points, 1 <= n <= 30.

    Returns
    -------
    (x, w) : pair of ndarray, each of shape (n,)
    """
    if not 1 <= n <= MAX_GAUSS_POINTS:
        raise ValueError(f"gauss_legendre: n={n} outside [1, {MAX_GAUSS_POINTS}]")
    if n in _gauss_cache:
        x, w = _gauss_cache[n]
        return x.copy(), w.copy()
    if n == 1:
        x = np.zeros(1)
        w = np.full(1, 2.0)
    else:
        i = np.arange(n)
        x = np.cos(np.pi * (4 * i + 3) / (4 * n + 2))
        for _ in range(100):
            p, dp = _legendre_and_derivative(n, x)
            dx = p / dp
            x -= dx
            if np.max(np.abs(dx)) < _NEWTON_TOL:
                break
        else:  # pragma: no cover - Newton converges in a handful of steps
            raise RuntimeError(f"gauss_legendre: Newton failed to converge for n={n}")
        x = 0.5 * (x - x[::-1])  # enforce exact symmetry
        x.sort()
        _, dp = _legendre_and_derivative(n, x)
        w = 2.0 / ((1.0 - x * x) * dp * dp)
    _gauss_cache[n] = (x, w)
    return x.copy(), w.copy()


def composite_rule(knots, points_per_span=None):
    """Composite Gauss rule over the spans of a knot vector.

    Parameters
    ----------
    knots : KnotVector or array_like
        A knot vector (its breakpoints are used) or a 1D array of
        breakpoints.  Degenerate (zero-length) spans are skipped.
    points_per_span : int, optional
        Gauss points per span.  Defaults to degree + 1 when a knot vector
        is given; required for a raw breakpoint array.

    Returns
    -------
    (x, w) : pair of ndarray
        Concatenated nodes and weights; weights sum to the total length.
    """
    breakpoints = getattr(knots, "breakpoints", None)
    if breakpoints is None:
        breakpoints = np.asarray(knots, dtype=float)
        if points_per_span is None:
            raise ValueError("composite_rule: points_per_span required for raw breakpoints")
    elif points_per_span is None:
        points_per_span = knots.degree + 1
    xg, wg = gauss_legendre(points_per_span)
    a = breakpoints[:-1]
    b = breakpoints[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    if a.size == 0:
        raise ValueError("composite_rule: no non-degenerate spans")
    mid = 0.5 * (a + b)[:, None]
    half = 0.5 * (b - a)[:, None]
    x = (mid + half * xg[None, :]).ravel()
    w = (half * wg[None, :]).ravel()
    return x, w


def tensor_rule(rules):
    """Tensor product of 1D rules.

    Parameters
    ----------
    rules : sequence of (x, w) pairs, one per axis.

    Returns
    -------
    (points, weights) : points has shape (d, N) with axis 0 varying slowest
        in the flattened C ordering; weights has shape (N,).
    """
    axes_x = [np.asarray(r[0]) for r in rules]
    axes_w = [np.asarray(r[1]) for r in rules]
    grids = np.meshgrid(*axes_x, indexing="ij")
    points = np.stack([g.ravel() for g in grids])
    weights = axes_w[0]
    for w in axes_w[1:]:
        weights = np.multiply.outer(weights, w)
    return points, weights.ravel()
