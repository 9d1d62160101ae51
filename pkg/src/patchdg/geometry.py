"""Patch charts, metric data, and Cartesian multipatch connectivity.

A patch is the image of the reference cube [-1, 1]^d under a chart: an
axis-aligned affine box map, optionally composed with a smooth volume warp.
All metric quantities (Jacobian, its determinant and inverse, surface
Jacobians, outward normals) are sampled at tensor quadrature points; normals
follow from the cofactor (Nanson) formula n J^s = det(J) J^{-T} N.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quadrature import tensor_rule
from .refops import RefOperators1D

# interfaces of a conforming multipatch grid must agree to this tolerance
INTERFACE_TOL = 1e-10


@dataclass(frozen=True)
class AffineBoxMap:
    """Axis-aligned box chart: x = origin + lengths * (xhat + 1) / 2."""

    origin: np.ndarray
    lengths: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", np.atleast_1d(np.asarray(self.origin, float)))
        object.__setattr__(self, "lengths", np.atleast_1d(np.asarray(self.lengths, float)))
        if np.any(self.lengths <= 0):
            raise ValueError("box lengths must be positive")

    @property
    def dim(self) -> int:
        return self.origin.size

    def __call__(self, xhat: np.ndarray) -> np.ndarray:
        return self.origin[:, None] + self.lengths[:, None] * (xhat + 1.0) / 2.0

    def jacobian(self, xhat: np.ndarray) -> np.ndarray:
        n = xhat.shape[1]
        jac = np.zeros((self.dim, self.dim, n))
        for i in range(self.dim):
            jac[i, i] = self.lengths[i] / 2.0
        return jac


@dataclass(frozen=True)
class Warp2D:
    """Smooth planar warp that moves the interior of [-1, 1]^2 but keeps
    every boundary edge on its original line.

    x' = x + a*cos(3*pi*y/2)*cos(pi*x/2), y' = y + a*sin(3*pi*x/2)*cos(pi*y/2).
    """

    alpha: float = 0.125

    def __call__(self, xy: np.ndarray) -> np.ndarray:
        x, y = xy
        a = self.alpha
        return np.stack([
            x + a * np.cos(1.5 * np.pi * y) * np.cos(0.5 * np.pi * x),
            y + a * np.sin(1.5 * np.pi * x) * np.cos(0.5 * np.pi * y),
        ])

    def jacobian(self, xy: np.ndarray) -> np.ndarray:
        x, y = xy
        a = self.alpha
        jac = np.empty((2, 2, x.size))
        jac[0, 0] = 1.0 - a * 0.5 * np.pi * np.cos(1.5 * np.pi * y) * np.sin(0.5 * np.pi * x)
        jac[0, 1] = -a * 1.5 * np.pi * np.sin(1.5 * np.pi * y) * np.cos(0.5 * np.pi * x)
        jac[1, 0] = a * 1.5 * np.pi * np.cos(1.5 * np.pi * x) * np.cos(0.5 * np.pi * y)
        jac[1, 1] = 1.0 - a * 0.5 * np.pi * np.sin(1.5 * np.pi * x) * np.sin(0.5 * np.pi * y)
        return jac


@dataclass(frozen=True)
class ComposedMap:
    """Affine box chart followed by an optional volume warp."""

    box: AffineBoxMap
    warp: object = None

    @property
    def dim(self) -> int:
        return self.box.dim

    def __call__(self, xhat: np.ndarray) -> np.ndarray:
        mid = self.box(xhat)
        return mid if self.warp is None else self.warp(mid)

    def jacobian(self, xhat: np.ndarray) -> np.ndarray:
        ja = self.box.jacobian(xhat)
        if self.warp is None:
            return ja
        jw = self.warp.jacobian(self.box(xhat))
        return np.einsum("ikn,kjn->ijn", jw, ja)


def _det_inv(jac: np.ndarray):
    """Determinants and inverses of a stack of small matrices (d, d, n)."""
    a = np.moveaxis(jac, -1, 0)
    det = np.linalg.det(a)
    inv = np.moveaxis(np.linalg.inv(a), 0, -1)
    return det, inv


@dataclass
class PatchFace:
    """Quadrature data of one reference-cube face mapped to physical space."""

    axis: int
    side: int
    points: np.ndarray
    weights: np.ndarray
    phys: np.ndarray
    normal: np.ndarray
    surface_jacobian: np.ndarray
    det_jacobian: np.ndarray
    inv_jacobian: np.ndarray


@dataclass
class PatchGeometry:
    """Metric data of a single patch at its tensor quadrature points."""

    ops: list
    chart: ComposedMap
    points: np.ndarray
    weights: np.ndarray
    phys: np.ndarray
    jacobian: np.ndarray
    det_jacobian: np.ndarray
    inv_jacobian: np.ndarray
    faces: list = field(default_factory=list)

    @property
    def sdim(self) -> int:
        return len(self.ops)

    @property
    def shape(self) -> tuple:
        return tuple(ops.dim for ops in self.ops)

    @property
    def num_dofs(self) -> int:
        return int(np.prod(self.shape))

    def face(self, axis: int, side: int) -> PatchFace:
        return self.faces[2 * axis + side]

    @property
    def max_surface_jacobian(self) -> float:
        return max(f.surface_jacobian.max() for f in self.faces)

    @property
    def max_inv_det(self) -> float:
        return float((1.0 / self.det_jacobian).max())


def build_patch_geometry(ops_list, chart: ComposedMap) -> PatchGeometry:
    """Sample a chart's metric data at the patch's tensor quadrature points.

    Raises ValueError if the sampled Jacobian determinant is not strictly
    positive (the chart folds over within the patch).
    """
    d = len(ops_list)
    if chart.dim != d:
        raise ValueError(f"chart dimension {chart.dim} != {d} operator axes")
    pts, wts = tensor_rule([(o.points, o.weights) for o in ops_list])
    jac = chart.jacobian(pts)
    det, inv = _det_inv(jac)
    if det.min() <= 0.0:
        raise ValueError(
            f"chart is not orientation preserving: min det J = {det.min():.3e}"
        )
    geo = PatchGeometry(
        ops=list(ops_list), chart=chart, points=pts, weights=wts,
        phys=chart(pts), jacobian=jac, det_jacobian=det, inv_jacobian=inv,
    )
    for axis in range(d):
        for side in (0, 1):
            geo.faces.append(_build_face(ops_list, chart, axis, side))
    return geo


def _build_face(ops_list, chart, axis: int, side: int) -> PatchFace:
    d = len(ops_list)
    rest = [o for k, o in enumerate(ops_list) if k != axis]
    if rest:
        fpts, fwts = tensor_rule([(o.points, o.weights) for o in rest])
    else:
        fpts, fwts = np.zeros((0, 1)), np.ones(1)
    nf = fwts.size
    ref = np.empty((d, nf))
    ref[axis] = -1.0 if side == 0 else 1.0
    keep = [k for k in range(d) if k != axis]
    for j, k in enumerate(keep):
        ref[k] = fpts[j]
    jac = chart.jacobian(ref)
    det, inv = _det_inv(jac)
    if det.min() <= 0.0:
        raise ValueError(
            f"chart folds over on face ({axis}, {side}): min det J = {det.min():.3e}"
        )
    nhat = np.zeros(d)
    nhat[axis] = -1.0 if side == 0 else 1.0
    # Nanson: n J^s = det(J) J^{-T} nhat, J^s relative to the reference face
    v = det * np.einsum("jin,j->in", inv, nhat)
    if d == 1:
        js = np.ones(1)
        normal = np.sign(v)
    else:
        js = np.linalg.norm(v, axis=0)
        normal = v / js
    return PatchFace(axis=axis, side=side, points=fpts, weights=fwts,
                     phys=chart(ref), normal=normal, surface_jacobian=js,
                     det_jacobian=det, inv_jacobian=inv)


@dataclass(frozen=True)
class InteriorLink:
    """Connection of one patch face to a neighbour's opposite face."""

    neighbor: int
    neighbor_face: int
    shift: np.ndarray  # physical translation neighbour face -> this face


@dataclass(frozen=True)
class BoundaryFace:
    """Patch face lying on the domain boundary."""

    axis: int
    side: int


@dataclass
class MultipatchGrid:
    """Conforming Cartesian arrangement of patches with face connectivity."""

    patches: list
    links: list  # links[patch][face] is an InteriorLink or BoundaryFace
    layout: tuple
    bounds: np.ndarray

    @property
    def sdim(self) -> int:
        return len(self.layout)

    @property
    def num_patches(self) -> int:
        return len(self.patches)

    @property
    def num_dofs(self) -> int:
        return sum(p.num_dofs for p in self.patches)

    @property
    def patch_extent(self) -> float:
        """Largest physical axis length of a patch before warping."""
        return float(max(
            (self.bounds[i, 1] - self.bounds[i, 0]) / self.layout[i]
            for i in range(self.sdim)
        ))


def build_cartesian_multipatch(ops_per_axis, bounds, layout, warp=None,
                               periodic=None) -> MultipatchGrid:
    """Tile a box with identical patches and connect their faces.

    Parameters
    ----------
    ops_per_axis : per-axis RefOperators1D shared by every patch
    bounds : (d, 2) physical box
    layout : patches per axis
    warp : optional volume warp applied to the whole box
    periodic : per-axis periodicity flags

    Interface quadrature points of linked faces must coincide (after the
    periodic shift, if any) to ``INTERFACE_TOL``; the build checks this.
    """
    bounds = np.atleast_2d(np.asarray(bounds, float))
    layout = tuple(int(n) for n in np.atleast_1d(layout))
    d = len(layout)
    if bounds.shape != (d, 2):
        raise ValueError(f"bounds shape {bounds.shape} does not match layout {layout}")
    if len(ops_per_axis) != d:
        raise ValueError("need one operator set per axis")
    if periodic is None:
        periodic = (False,) * d
    periodic = tuple(bool(b) for b in np.atleast_1d(periodic))
    lengths = (bounds[:, 1] - bounds[:, 0]) / np.array(layout)
    if np.any(lengths <= 0):
        raise ValueError("bounds must have positive extent")

    patches = []
    cells = list(np.ndindex(*layout))
    for cell in cells:
        origin = bounds[:, 0] + lengths * np.array(cell)
        chart = ComposedMap(AffineBoxMap(origin, lengths), warp)
        patches.append(build_patch_geometry(ops_per_axis, chart))

    links = []
    for pid, cell in enumerate(cells):
        row = []
        for axis in range(d):
            for side in (0, 1):
                step = -1 if side == 0 else 1
                nbr_cell = list(cell)
                nbr_cell[axis] += step
                shift = np.zeros(d)
                if nbr_cell[axis] < 0 or nbr_cell[axis] >= layout[axis]:
                    if not periodic[axis]:
                        row.append(BoundaryFace(axis=axis, side=side))
                        continue
                    nbr_cell[axis] %= layout[axis]
                    shift[axis] = step * (bounds[axis, 1] - bounds[axis, 0])
                nbr = int(np.ravel_multi_index(nbr_cell, layout))
                row.append(InteriorLink(neighbor=nbr,
                                        neighbor_face=2 * axis + (1 - side),
                                        shift=shift))
        links.append(row)

    grid = MultipatchGrid(patches=patches, links=links, layout=layout,
                          bounds=bounds)
    _check_interfaces(grid)
    return grid


def _check_interfaces(grid: MultipatchGrid):
    for pid, row in enumerate(grid.links):
        for fid, link in enumerate(row):
            if not isinstance(link, InteriorLink):
                continue
            mine = grid.patches[pid].faces[fid].phys
            theirs = grid.patches[link.neighbor].faces[link.neighbor_face].phys
            gap = np.abs(mine - (theirs + link.shift[:, None])).max()
            if gap > INTERFACE_TOL:
                raise ValueError(
                    f"interface mismatch between patch {pid} face {fid} and "
                    f"patch {link.neighbor}: max gap {gap:.3e}"
                )
