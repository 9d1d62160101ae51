"""Low-storage RK scheme and timestep estimation."""

import numpy as np
import pytest

from patchdg.geometry import build_cartesian_multipatch
from patchdg.refops import build_ref_operators, compute_constants
from patchdg.semidiscrete import AdvectionOperator
from patchdg.splines import make_open_uniform_knots
from patchdg.timeint import (
    NUM_STAGES,
    butcher_tableau,
    estimate_dt,
    integrate,
    lsrk45_step,
)


def test_zero_rhs_leaves_state_unchanged():
    y = np.array([1.0, -2.0, 3.5])
    out = lsrk45_step(lambda t, u: np.zeros_like(u), 0.0, y.copy(), 0.1)
    assert np.array_equal(out, y)


def test_linear_decay_order_four():
    # u' = -u, exact e^{-T}
    errs = []
    for dt in (0.1, 0.05, 0.025):
        y = integrate(lambda t, u: -u, np.array([1.0]), 1.0, dt)
        errs.append(abs(y[0] - np.exp(-1.0)))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(np.abs(orders - 4.0) <= 0.1)


def test_oscillator_energy_drift_small():
    def rhs(t, y):
        return np.array([y[1], -y[0]])

    y = integrate(rhs, np.array([1.0, 0.0]), 10.0, 0.01)
    energy = y[0] ** 2 + y[1] ** 2
    assert abs(energy - 1.0) < 1e-10


def test_low_storage_matches_butcher_form():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((6, 6))
    A = A - A.T  # skew keeps the exact flow bounded
    y0 = rng.standard_normal(6)
    dt = 0.03

    def rhs(t, y):
        return A @ y

    tab_a, tab_b, tab_c = butcher_tableau()
    ks = []
    for j in range(NUM_STAGES):
        yj = y0 + dt * sum(tab_a[j, l] * ks[l] for l in range(j))
        ks.append(rhs(0.0 + tab_c[j] * dt, yj))
    ref = y0 + dt * sum(b * k for b, k in zip(tab_b, ks))
    low = lsrk45_step(rhs, 0.0, y0.copy(), dt)
    assert np.abs(low - ref).max() < 1e-14


def test_integrate_shrinks_dt_to_hit_final_time():
    seen = []
    integrate(lambda t, u: -u, np.array([1.0]), 1.0, 0.3,
              callback=lambda t, y: seen.append(t))
    assert len(seen) == 4  # ceil(1.0/0.3) steps
    assert seen[-1] == pytest.approx(1.0, abs=1e-14)


def test_integrate_no_time_to_cover_returns_copy():
    y0 = np.array([2.0])
    out = integrate(lambda t, u: -u, y0, 0.0, 0.1)
    assert out is not y0 and out[0] == 2.0


class TestEstimateDt:
    def _setup(self, p=3, K=16):
        ops = build_ref_operators(make_open_uniform_knots(p, K))
        grid = build_cartesian_multipatch([ops], [[-1.0, 1.0]], (2,),
                                          periodic=(True,))
        return ops, grid

    def test_identity_first_order_formula(self):
        ops = build_ref_operators(make_open_uniform_knots(2, 4))
        grid = build_cartesian_multipatch([ops], [[0.0, 1.0]], (1,))
        c = compute_constants(ops)
        dt = estimate_dt(grid, c, order=1, c_t=1.0)
        assert dt == pytest.approx(1.0 / c.patch_constant, rel=1e-13)

    def test_doubling_spans_roughly_halves_dt(self):
        ops8, grid8 = self._setup(K=8)
        ops16, grid16 = self._setup(K=16)
        dt8 = estimate_dt(grid8, compute_constants(ops8), order=1)
        dt16 = estimate_dt(grid16, compute_constants(ops16), order=1)
        assert 1.6 < dt8 / dt16 < 2.4

    def test_halving_patch_size_halves_dt(self):
        ops = build_ref_operators(make_open_uniform_knots(2, 4))
        c = compute_constants(ops)
        big = build_cartesian_multipatch([ops], [[0.0, 2.0]], (1,))
        small = build_cartesian_multipatch([ops], [[0.0, 1.0]], (1,))
        assert estimate_dt(big, c, 1) == pytest.approx(
            2.0 * estimate_dt(small, c, 1), rel=1e-13)

    def test_estimated_dt_stable_for_advection(self):
        ops, grid = self._setup(p=3, K=16)
        op = AdvectionOperator(grid, [1.0], tau=0.5)
        dt = estimate_dt(grid, compute_constants(ops), order=1, c_t=0.9)
        y = op.project_initial(lambda x: np.sin(np.pi * x[0]))
        e0 = op.l2_energy(op.split(y))
        for k in range(1000):
            y = lsrk45_step(op.rhs, k * dt, y, dt)
        assert np.all(np.isfinite(y))
        assert op.l2_energy(op.split(y)) <= 1.01 * e0

    def test_scaled_spectrum_inside_stability_region(self):
        # every eigenvalue of dt*A_h must satisfy |R(z)| <= 1
        from patchdg.analysis import advection_operator_matrix
        ops = build_ref_operators(make_open_uniform_knots(2, 8))
        grid = build_cartesian_multipatch([ops], [[-1.0, 1.0]], (1,),
                                          periodic=(True,))
        dt = estimate_dt(grid, compute_constants(ops), order=1)
        A = advection_operator_matrix(2, 8, tau=1.0)
        lam = np.linalg.eigvals(A)
        tab_a, tab_b, _ = butcher_tableau()
        z = dt * lam
        amp = np.empty(z.size, complex)
        eye = np.eye(NUM_STAGES)
        ones = np.ones(NUM_STAGES)
        for i, zi in enumerate(z):
            amp[i] = 1.0 + zi * tab_b @ np.linalg.solve(eye - zi * tab_a, ones)
        assert np.abs(amp).max() <= 1.0 + 1e-8
