"""Reference-interval operators for spline bases and their tensor products.

Everything here lives on the reference interval [-1, 1] (or its tensor
powers): mass, stiffness, and endpoint (face) mass matrices, factorized mass
solves, Kronecker application helpers, and the extremal generalized
eigenvalues that bound trace and derivative norms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import (cho_factor, cho_solve, cholesky_banded,
                          cho_solve_banded, cholesky, solve_triangular, eigvalsh)

from .quadrature import composite_rule
from .splines import KnotVector, eval_basis

# switch the mass factorization to banded storage above this dimension
BANDED_DIM_THRESHOLD = 64

_SYM_TOL = 1e-14


@dataclass
class RefOperators1D:
    """Quadrature-assembled operators of one spline space on [-1, 1].

    Attributes
    ----------
    space : KnotVector
    points, weights : composite Gauss rule used for every integral
    basis, dbasis : (n_q, dim) values and first derivatives at the rule
    mass, stiffness, face_mass : (dim, dim) Galerkin matrices
    left_values, right_values : basis traces at the endpoints
    left_derivatives, right_derivatives : basis derivative traces
    mass_mode : "dense" or "banded" factorization path
    """

    space: KnotVector
    points: np.ndarray
    weights: np.ndarray
    basis: np.ndarray
    dbasis: np.ndarray
    mass: np.ndarray
    stiffness: np.ndarray
    face_mass: np.ndarray
    left_values: np.ndarray
    right_values: np.ndarray
    left_derivatives: np.ndarray
    right_derivatives: np.ndarray
    mass_mode: str
    _factor: object = field(repr=False, default=None)

    @property
    def dim(self) -> int:
        return self.space.dim

    def mass_solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve mass @ x = rhs; rhs may be (dim,) or (dim, k)."""
        if self.mass_mode == "dense":
            return cho_solve(self._factor, rhs)
        return cho_solve_banded((self._factor, False), rhs)


def build_ref_operators(kv: KnotVector, points_per_span=None,
                        mass_mode=None) -> RefOperators1D:
    """Assemble reference operators with a composite Gauss rule.

    The rule defaults to degree+1 points per span, exact through degree
    2p+1, so the mass and stiffness integrands are integrated exactly.
    ``mass_mode`` forces the factorization path; by default dimensions above
    ``BANDED_DIM_THRESHOLD`` use banded Cholesky storage.
    """
    x, w = composite_rule(kv, points_per_span)
    B0 = eval_basis(kv, x, 0)
    B1 = eval_basis(kv, x, 1)
    M = (B0 * w[:, None]).T @ B0
    S = (B1 * w[:, None]).T @ B1
    scale = np.abs(M).max()
    assert np.abs(M - M.T).max() <= _SYM_TOL * scale, "mass matrix not symmetric"
    assert np.abs(S - S.T).max() <= _SYM_TOL * max(np.abs(S).max(), 1.0), \
        "stiffness matrix not symmetric"
    M = 0.5 * (M + M.T)
    S = 0.5 * (S + S.T)
    lo, hi = kv.domain
    length = hi - lo
    assert abs(M.sum() - length) < 1e-12 * max(length, 1.0), \
        "mass entries must sum to the interval length"
    assert np.abs(S @ np.ones(kv.dim)).max() < 1e-11 * max(np.abs(S).max(), 1.0), \
        "stiffness must annihilate constants"
    el = eval_basis(kv, lo, 0)
    er = eval_basis(kv, hi, 0)
    dl = eval_basis(kv, lo, 1)
    dr = eval_basis(kv, hi, 1)
    Mf = np.outer(el, el) + np.outer(er, er)
    if mass_mode is None:
        mass_mode = "banded" if kv.dim > BANDED_DIM_THRESHOLD else "dense"
    if mass_mode == "dense":
        factor = cho_factor(M, lower=False)
    elif mass_mode == "banded":
        factor = cholesky_banded(_to_upper_banded(M, kv.degree), lower=False)
    else:
        raise ValueError(f"unknown mass_mode {mass_mode!r}")
    return RefOperators1D(
        space=kv, points=x, weights=w, basis=B0, dbasis=B1,
        mass=M, stiffness=S, face_mass=Mf,
        left_values=el, right_values=er,
        left_derivatives=dl, right_derivatives=dr,
        mass_mode=mass_mode, _factor=factor,
    )


def _to_upper_banded(A: np.ndarray, bandwidth: int) -> np.ndarray:
    """Pack a symmetric banded matrix into LAPACK upper-banded storage."""
    n = A.shape[0]
    ab = np.zeros((bandwidth + 1, n))
    for k in range(bandwidth + 1):
        ab[bandwidth - k, k:] = np.diagonal(A, offset=k)
    return ab


def generalized_sym_eigenvalues(A: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Eigenvalues of A x = lambda M x for symmetric A and SPD M.

    Reduced to a standard symmetric problem through the Cholesky factor of
    M: with M = L L^T the eigenvalues equal those of L^{-1} A L^{-T}.
    """
    L = cholesky(M, lower=True)
    tmp = solve_triangular(L, A, lower=True)
    reduced = solve_triangular(L, tmp.T, lower=True).T
    return eigvalsh(0.5 * (reduced + reduced.T))


@dataclass(frozen=True)
class InequalityConstants:
    """Extremal generalized eigenvalues controlling trace and derivative norms.

    ``trace_eigenvalue`` is the largest eigenvalue of the endpoint (face)
    mass matrix against the mass matrix; it is the square of the conventional
    trace constant, and is unchanged by tensorization.  ``stiffness_eigenvalue``
    is the largest eigenvalue of the stiffness matrix against the mass
    matrix, scaled by the spatial dimension (for tensor spaces the extremal
    value is d times the one-dimensional one).
    """

    degree: int
    num_spans: int
    dimension: int
    trace_eigenvalue: float
    stiffness_eigenvalue: float

    @property
    def trace_constant(self) -> float:
        """Constant multiplying boundary norms: the raw trace eigenvalue."""
        return self.trace_eigenvalue

    @property
    def inverse_constant(self) -> float:
        """Constant multiplying derivative norms: sqrt of the stiffness eigenvalue."""
        return float(np.sqrt(self.stiffness_eigenvalue))

    @property
    def patch_constant(self) -> float:
        """max(trace/2, inverse): the combined CFL constant of a patch."""
        return max(0.5 * self.trace_constant, self.inverse_constant)


def compute_constants(ops: RefOperators1D, dimension=1) -> InequalityConstants:
    """Trace and derivative inequality constants of a tensor spline space.

    The one-dimensional generalized eigenproblems are solved by Cholesky
    reduction; the d-dimensional extremal values follow from the Kronecker
    structure (trace eigenvalue unchanged, stiffness eigenvalue times d).
    """
    if dimension < 1:
        raise ValueError(f"dimension must be positive, got {dimension}")
    lam_face = generalized_sym_eigenvalues(ops.face_mass, ops.mass)[-1]
    lam_stiff = generalized_sym_eigenvalues(ops.stiffness, ops.mass)[-1]
    return InequalityConstants(
        degree=ops.space.degree,
        num_spans=ops.space.num_spans,
        dimension=dimension,
        trace_eigenvalue=float(lam_face),
        stiffness_eigenvalue=float(dimension * lam_stiff),
    )


def kron_apply(mats, x: np.ndarray) -> np.ndarray:
    """Apply a Kronecker product of per-axis matrices to a tensor.

    ``mats[k]`` has shape (n_k, m_k) and acts along axis k of ``x``.  ``x``
    may be given flat (C order) or with explicit tensor shape; the result
    matches the input layout.
    """
    in_dims = tuple(m.shape[1] for m in mats)
    out_dims = tuple(m.shape[0] for m in mats)
    flat = x.ndim == 1
    t = x.reshape(in_dims) if flat else x
    if t.shape != in_dims:
        raise ValueError(f"operand shape {t.shape} does not match factors {in_dims}")
    for ax, A in enumerate(mats):
        t = np.moveaxis(np.tensordot(A, t, axes=(1, ax)), 0, ax)
    return t.reshape(-1) if flat else t.reshape(out_dims)


def ref_mass_inverse_apply(ops_list, x: np.ndarray) -> np.ndarray:
    """Apply the inverse of the tensor-product mass matrix via 1D solves."""
    dims = tuple(ops.dim for ops in ops_list)
    flat = x.ndim == 1
    t = x.reshape(dims) if flat else x
    for ax, ops in enumerate(ops_list):
        t = np.moveaxis(t, ax, 0)
        shape = t.shape
        t = ops.mass_solve(t.reshape(shape[0], -1)).reshape(shape)
        t = np.moveaxis(t, 0, ax)
    return t.reshape(-1) if flat else t


def apply_basis(ops_list, coefs: np.ndarray, deriv_axis=None) -> np.ndarray:
    """Evaluate a tensor spline at the tensor quadrature points.

    Uses the per-axis basis (or derivative, on ``deriv_axis``) matrices in a
    sum-factorized sweep.  Flat input/output in C order, axis 0 slowest,
    matching ``quadrature.tensor_rule``.
    """
    mats = [ops.dbasis if ax == deriv_axis else ops.basis
            for ax, ops in enumerate(ops_list)]
    return kron_apply(mats, coefs)


def apply_basis_transpose(ops_list, qvals: np.ndarray, deriv_axis=None) -> np.ndarray:
    """Adjoint of :func:`apply_basis`: quadrature values to coefficient space."""
    mats = [(ops.dbasis if ax == deriv_axis else ops.basis).T
            for ax, ops in enumerate(ops_list)]
    return kron_apply(mats, qvals)


def axis_slice(t: np.ndarray, dims, axis: int, side: int) -> np.ndarray:
    """Boundary slice of a flat tensor: index 0 (side 0) or -1 (side 1) on axis.

    Because open knot vectors interpolate at the endpoints, this slice holds
    the coefficients of the trace spline in the remaining axes.
    """
    idx = 0 if side == 0 else -1
    return np.take(t.reshape(dims), idx, axis=axis).reshape(-1)


def axis_scatter(face: np.ndarray, dims, axis: int, side: int) -> np.ndarray:
    """Adjoint of :func:`axis_slice`: embed face data back into a zero tensor."""
    face = np.asarray(face)
    out = np.zeros(dims, dtype=face.dtype)
    idx = 0 if side == 0 else -1
    sl = [slice(None)] * len(dims)
    sl[axis] = idx
    rest = dims[:axis] + dims[axis + 1:]
    out[tuple(sl)] = face.reshape(rest)
    return out.reshape(-1)


def axis_contract(t: np.ndarray, dims, axis: int, vec: np.ndarray) -> np.ndarray:
    """Contract one tensor axis with a vector (e.g. an endpoint derivative)."""
    return np.tensordot(vec, t.reshape(dims), axes=(0, axis)).reshape(-1)


def axis_expand(face: np.ndarray, dims, axis: int, vec: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`axis_contract`: outer-product a face tensor with a vector."""
    rest = dims[:axis] + dims[axis + 1:]
    out = np.multiply.outer(vec, face.reshape(rest))
    return np.moveaxis(out, 0, axis).reshape(-1)
