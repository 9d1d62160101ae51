"""Operator assembly, spectra, dispersion, eigenvalue study helpers."""

import numpy as np
import pytest

from patchdg.analysis import (
    SPECTRUM_PENALTY,
    advection_operator_matrix,
    assemble_operator_matrix,
    bendixson_bounds,
    count_tail_outliers,
    dispersion_error,
    fit_slope,
    fit_slope_through_origin,
    ipdg_spectrum_penalty,
    laplace_eigenstudy,
    observed_orders,
    run_convergence_1d,
    spectral_radius,
    wave2_operator_matrix,
)
from patchdg.geometry import build_cartesian_multipatch
from patchdg.refops import build_ref_operators
from patchdg.semidiscrete import AdvectionOperator
from patchdg.splines import make_open_uniform_knots


class TestAssembly:
    def test_refuses_desk_scale_overrun(self):
        with pytest.raises(ValueError):
            assemble_operator_matrix(lambda v: v, 20001)

    def test_columns_match_matrix_free_application(self):
        ops = build_ref_operators(make_open_uniform_knots(2, 5))
        grid = build_cartesian_multipatch([ops], [[-1.0, 1.0]], (2,),
                                          periodic=(True,))
        op = AdvectionOperator(grid, [1.0], tau=0.7)
        A = assemble_operator_matrix(lambda u: op.rhs(0.0, u), op.num_dofs)
        rng = np.random.default_rng(13)
        for _ in range(50):
            v = rng.standard_normal(op.num_dofs)
            assert np.abs(A @ v - op.rhs(0.0, v)).max() < 1e-12

    def test_operator_linearity(self):
        A = advection_operator_matrix(2, 6)
        rng = np.random.default_rng(29)
        x = rng.standard_normal(A.shape[0])
        y = rng.standard_normal(A.shape[0])
        assert np.abs(A @ (x + y) - (A @ x + A @ y)).max() < 1e-12

    def test_central_flux_spectrum_imaginary(self):
        A = advection_operator_matrix(3, 8, tau=0.0)
        lam = np.linalg.eigvals(A)
        assert np.abs(lam.real).max() < 1e-8

    def test_upwind_eigenvalues_in_bendixson_box(self):
        A = advection_operator_matrix(2, 8, tau=1.0)
        lo, hi, sim = bendixson_bounds(A)
        lam = np.linalg.eigvals(A)
        assert np.all(lam.real >= lo - 1e-9)
        assert np.all(lam.real <= hi + 1e-9)
        assert np.all(np.abs(lam.imag) <= sim + 1e-9)
        assert lam.real.max() <= 1e-9  # dissipative: nothing grows


class TestSpectra:
    def test_spectral_radius_of_known_matrix(self):
        m = np.array([[0.0, 2.0], [-2.0, 0.0]])
        assert spectral_radius(m) == pytest.approx(2.0)

    @pytest.mark.parametrize("p", [3, 4])
    def test_smoothed_knots_shrink_radius(self, p):
        # at the half-strength flux the end-span clustering controls rho
        rho_u = spectral_radius(advection_operator_matrix(p, 32, "uniform",
                                                          tau=0.5))
        rho_s = spectral_radius(advection_operator_matrix(p, 32, "smoothed",
                                                          tau=0.5))
        assert rho_s < rho_u

    def test_wave2_matrix_negative_semidefinite(self):
        A = wave2_operator_matrix(2, 16)
        lam = np.linalg.eigvals(A)
        assert np.abs(lam.imag).max() < 1e-8
        assert lam.real.max() < 1e-8

    def test_spectrum_penalty_table_covers_study(self):
        for family in ("uniform", "smoothed"):
            for p in (2, 3, 4, 5):
                a, b = SPECTRUM_PENALTY[(family, p)]
                assert ipdg_spectrum_penalty(p, 64, family) == pytest.approx(
                    a * 64 + b)


class TestFits:
    def test_through_origin_recovers_exact_slope(self):
        x = np.array([1.0, 2.0, 3.0])
        assert fit_slope_through_origin(x, 2.5 * x) == pytest.approx(2.5)

    def test_affine_fit_ignores_offset(self):
        x = np.array([1.0, 2.0, 4.0])
        assert fit_slope(x, 3.0 * x + 7.0) == pytest.approx(3.0)

    def test_observed_orders_on_synthetic_errors(self):
        errs = np.array([1.0, 1.0 / 8.0, 1.0 / 64.0])
        assert np.allclose(observed_orders(errs), [3.0, 3.0])


class TestDispersion:
    def test_resolved_mode_has_tiny_error(self):
        err = dispersion_error(4, 4, 2.0 * np.pi * 0.75)
        assert err < 1e-4

    def test_error_grows_with_wavenumber(self):
        errs = [dispersion_error(4, 4, 2.0 * np.pi * s) for s in (0.75, 1.5)]
        assert errs[1] > 10.0 * errs[0]


class TestEigenstudy:
    def test_first_eigenvalue_and_outliers(self):
        study = laplace_eigenstudy(4, 16)
        assert study.relative_errors[0] < 1e-8
        assert count_tail_outliers(study) >= 1
        # spectrum sorted ascending and positive
        assert np.all(np.diff(study.eigenvalues) >= 0)
        assert study.eigenvalues[0] > 0

    def test_exact_targets_are_dirichlet_laplacian(self):
        study = laplace_eigenstudy(3, 12)
        k = np.arange(1, study.exact.size + 1)
        assert np.allclose(study.exact, (k * np.pi) ** 2)


class TestConvergenceDriver:
    def test_first_order_errors_drop_at_expected_order(self):
        errs = run_convergence_1d("first", 2, knot_counts=(4, 8, 16))
        orders = observed_orders(errs)
        assert np.all(np.diff(errs) < 0)
        assert abs(orders[-1] - 3.0) < 0.5
