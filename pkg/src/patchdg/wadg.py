"""Weight-adjusted mass operators on curvilinear (and rational) patches.

The curvilinear mass matrix weighted by the Jacobian determinant is never
assembled in the solvers.  Its inverse is approximated by the weight-adjusted
form  M_J^{-1} ~ Mhat^{-1} M_{1/J} Mhat^{-1},  which is symmetric positive
definite, exact for constant J, and applied matrix-free with Kronecker mass
solves plus one weighted quadrature product.  Rational (NURBS-style) patch
weights enter through the modified weight J / w^2 after the diagonal basis
scaling is pulled out of the mass matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .quadrature import composite_rule, tensor_rule
from .refops import apply_basis, apply_basis_transpose, ref_mass_inverse_apply
from .splines import eval_basis


def weighted_mass_apply(ops_list, weight, coefs):
    """Apply the weighted mass matrix  B^T diag(q * weight) B  matrix-free.

    ``weight`` holds samples at the tensor quadrature points; the reference
    quadrature weights are taken from the operator sets.
    """
    _, qw = tensor_rule([(o.points, o.weights) for o in ops_list])
    vals = apply_basis(ops_list, coefs)
    return apply_basis_transpose(ops_list, qw * weight * vals)


def assemble_weighted_mass(ops_list, weight):
    """Dense weighted mass matrix; oracle/companion of the matrix-free path."""
    _, qw = tensor_rule([(o.points, o.weights) for o in ops_list])
    B = ops_list[0].basis
    for o in ops_list[1:]:
        B = np.kron(B, o.basis)
    return (B * (qw * weight)[:, None]).T @ B


@dataclass
class WeightAdjustedMass:
    """Matrix-free weighted mass product and weight-adjusted inverse.

    ``weight`` is sampled at the patch's tensor quadrature points: the
    Jacobian determinant for plain spline patches, J / w^2 for rational
    patches with weight function w.
    """

    ops: list
    weight: np.ndarray

    def __post_init__(self):
        if np.any(self.weight <= 0):
            raise ValueError("mass weight must be strictly positive")

    def apply(self, coefs: np.ndarray) -> np.ndarray:
        return weighted_mass_apply(self.ops, self.weight, coefs)

    def inverse_apply(self, rhs: np.ndarray) -> np.ndarray:
        """Weight-adjusted approximate inverse: Mhat^{-1} M_{1/w} Mhat^{-1}."""
        t = ref_mass_inverse_apply(self.ops, rhs)
        t = weighted_mass_apply(self.ops, 1.0 / self.weight, t)
        return ref_mass_inverse_apply(self.ops, t)

    def energy_apply(self, coefs: np.ndarray) -> np.ndarray:
        """Apply the SPD operator that ``inverse_apply`` inverts.

        That operator is Mhat M_{1/w}^{-1} Mhat, the weight-adjusted mass
        itself; it defines the discrete energy of weight-adjusted solvers.
        Uses a lazily cached dense factorization of M_{1/w}.
        """
        if not hasattr(self, "_recip_factor"):
            recip = assemble_weighted_mass(self.ops, 1.0 / self.weight)
            self._recip_factor = cho_factor(recip)
        from .refops import kron_apply

        mats = [o.mass for o in self.ops]
        t = kron_apply(mats, coefs)
        t = cho_solve(self._recip_factor, t)
        return kron_apply(mats, t)

    @classmethod
    def from_geometry(cls, geo, rational_weight=None):
        w = geo.det_jacobian
        if rational_weight is not None:
            wq = apply_basis(geo.ops, rational_weight)
            if np.any(wq <= 0):
                raise ValueError("rational weight must be positive on the patch")
            w = w / wq**2
        return cls(ops=list(geo.ops), weight=w)


@dataclass
class ExactWeightedMass:
    """Dense factorized weighted mass matrix, the exact counterpart."""

    ops: list
    weight: np.ndarray

    def __post_init__(self):
        self.matrix = assemble_weighted_mass(self.ops, self.weight)
        self._factor = cho_factor(self.matrix)

    def apply(self, coefs: np.ndarray) -> np.ndarray:
        return self.matrix @ coefs

    def inverse_apply(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve(self._factor, rhs)

    def energy_apply(self, coefs: np.ndarray) -> np.ndarray:
        return self.matrix @ coefs

    @classmethod
    def from_geometry(cls, geo, rational_weight=None):
        w = geo.det_jacobian
        if rational_weight is not None:
            wq = apply_basis(geo.ops, rational_weight)
            w = w / wq**2
        return cls(ops=list(geo.ops), weight=w)


def projection_rhs(geo, f) -> np.ndarray:
    """Moment vector  B^T diag(q J) f(x)  of a physical-space function."""
    vals = f(geo.phys)
    return apply_basis_transpose(geo.ops, geo.weights * geo.det_jacobian * vals)


def project(geo, f, mass=None) -> np.ndarray:
    """L2 projection of ``f`` onto the patch space in the curved metric.

    ``mass`` chooses the inverse: any object with ``inverse_apply`` (defaults
    to the exact dense mass).
    """
    if mass is None:
        mass = ExactWeightedMass.from_geometry(geo)
    return mass.inverse_apply(projection_rhs(geo, f))


def _fine_eval(geo, points_per_span):
    """Per-axis basis matrices, tensor weights, physical points, and J on a
    refined quadrature grid, for error measurement."""
    rules = [composite_rule(o.space, points_per_span or o.space.degree + 3)
             for o in geo.ops]
    pts, wts = tensor_rule(rules)
    jac = geo.chart.jacobian(pts)
    a = np.moveaxis(jac, -1, 0)
    det = np.linalg.det(a)
    mats = [eval_basis(o.space, r[0]) for o, r in zip(geo.ops, rules)]
    return mats, wts, geo.chart(pts), det


def patch_l2_error(geo, coefs, f, points_per_span=None) -> float:
    """Squared L2 error of a coefficient vector against ``f`` on one patch.

    Integrated on a refined rule (degree+3 points per span by default) so the
    measurement is not biased by the assembly quadrature.
    """
    from .refops import kron_apply

    mats, wts, phys, det = _fine_eval(geo, points_per_span)
    vals = kron_apply(mats, coefs)
    diff = vals - f(phys)
    return float(np.sum(wts * det * diff**2))


def grid_l2_error(grid, coef_list, f, points_per_span=None) -> float:
    """L2 error over a multipatch grid."""
    total = 0.0
    for geo, c in zip(grid.patches, coef_list):
        total += patch_l2_error(geo, c, f, points_per_span)
    return float(np.sqrt(total))
