"""Low-storage explicit Runge-Kutta time integration and step-size rules."""

from __future__ import annotations

import numpy as np

# five-stage fourth-order low-storage coefficients (Carpenter/Kennedy)
_RK4A = np.array([
    0.0,
    -567301805773.0 / 1357537059087.0,
    -2404267990393.0 / 2016746695238.0,
    -3550918686646.0 / 2091501179385.0,
    -1275806237668.0 / 842570457699.0,
])
_RK4B = np.array([
    1432997174477.0 / 9575080441755.0,
    5161836677717.0 / 13612068292357.0,
    1720146321549.0 / 2090206949498.0,
    3134564353537.0 / 4481467310338.0,
    2277821191437.0 / 14882151754819.0,
])
_RK4C = np.array([
    0.0,
    1432997174477.0 / 9575080441755.0,
    2526269341429.0 / 6820363962896.0,
    2006345519317.0 / 3224310063776.0,
    2802321613138.0 / 2924317926251.0,
])

NUM_STAGES = 5


def lsrk45_step(rhs, t, y, dt):
    """Advance one step with the two-register low-storage scheme."""
    residual = np.zeros_like(y)
    for a, b, c in zip(_RK4A, _RK4B, _RK4C):
        residual = a * residual + dt * rhs(t + c * dt, y)
        y = y + b * residual
    return y


def integrate(rhs, y0, t_final, dt, t0=0.0, callback=None):
    """Integrate to ``t_final`` exactly, shrinking dt to fit a whole number
    of steps; ``callback(t, y)`` runs after every step when given."""
    if t_final <= t0:
        return np.array(y0, copy=True)
    num_steps = max(1, int(np.ceil((t_final - t0) / dt - 1e-12)))
    dt = (t_final - t0) / num_steps
    y = np.array(y0, copy=True)
    t = t0
    for k in range(num_steps):
        y = lsrk45_step(rhs, t, y, dt)
        t = t0 + (k + 1) * dt
        if callback is not None:
            callback(t, y)
    return y


def butcher_tableau():
    """Equivalent explicit Butcher arrays (A, b, c) of the low-storage scheme.

    Stage j accumulates earlier stage derivatives through the recurrence
    residual_{j} = a_j residual_{j-1} + dt f_j, giving
    A[j, l] = sum_{m=l}^{j-1} b_m prod_{i=l+1}^{m} a_i.
    """
    s = NUM_STAGES
    A = np.zeros((s, s))
    for j in range(s):
        for l in range(j):
            total = 0.0
            for m in range(l, j):
                prod = 1.0
                for i in range(l + 1, m + 1):
                    prod *= _RK4A[i]
                total += _RK4B[m] * prod
            A[j, l] = total
    b = np.zeros(s)
    for l in range(s):
        total = 0.0
        for m in range(l, s):
            prod = 1.0
            for i in range(l + 1, m + 1):
                prod *= _RK4A[i]
            total += _RK4B[m] * prod
        b[l] = total
    return A, b, _RK4C.copy()


def estimate_dt(grid, constants, order=1, speed=1.0, c_t=0.5, c_tau=1.0):
    """Heuristic stable step for the DG wave operators.

    First-order systems use the combined patch constant; the second-order
    form uses the root-sum-square of trace and derivative constants.  ``H``
    is the patch extent, so the estimate scales like a CFL condition on the
    patch subdivision.
    """
    H = grid.patch_extent
    if order == 1:
        return c_t * H / (constants.patch_constant * speed)
    if order == 2:
        denom = np.sqrt(constants.trace_constant**2
                        + constants.inverse_constant**2)
        return c_t * c_tau * H / (denom * speed)
    raise ValueError(f"order must be 1 or 2, got {order}")
