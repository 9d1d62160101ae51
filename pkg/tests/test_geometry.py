"""Patch geometry and multipatch connectivity checks."""

import numpy as np
import pytest

from patchdg.geometry import (
    INTERFACE_TOL,
    AffineBoxMap,
    BoundaryFace,
    ComposedMap,
    InteriorLink,
    Warp2D,
    build_cartesian_multipatch,
    build_patch_geometry,
)
from patchdg.refops import build_ref_operators
from patchdg.splines import make_open_uniform_knots


def _ops(p=2, K=3):
    return build_ref_operators(make_open_uniform_knots(p, K))


class TestMaps:
    def test_affine_maps_corners(self):
        chart = AffineBoxMap(origin=[1.0, -2.0], lengths=[2.0, 4.0])
        lo = chart(np.array([[-1.0], [-1.0]]))
        hi = chart(np.array([[1.0], [1.0]]))
        assert np.allclose(lo[:, 0], [1.0, -2.0])
        assert np.allclose(hi[:, 0], [3.0, 2.0])

    def test_affine_jacobian_is_half_lengths(self):
        chart = AffineBoxMap(origin=[0.0, 0.0, 0.0], lengths=[2.0, 1.0, 4.0])
        jac = chart.jacobian(np.zeros((3, 5)))
        assert np.allclose(jac[0, 0], 1.0)
        assert np.allclose(jac[1, 1], 0.5)
        assert np.allclose(jac[2, 2], 2.0)
        assert np.allclose(jac[0, 1], 0.0)

    def test_warp_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        warp = Warp2D(alpha=0.125)
        pts = rng.uniform(-0.9, 0.9, size=(2, 40))
        jac = warp.jacobian(pts)
        eps = 1e-6
        for axis in range(2):
            shift = np.zeros((2, 1))
            shift[axis] = eps
            fd = (warp(pts + shift) - warp(pts - shift)) / (2 * eps)
            assert np.allclose(jac[:, axis], fd, atol=5e-9)

    def test_warp_keeps_positive_determinant(self):
        warp = Warp2D(alpha=0.125)
        g = np.linspace(-1.0, 1.0, 21)
        pts = np.stack(np.meshgrid(g, g)).reshape(2, -1)
        jac = warp.jacobian(pts)
        det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
        assert det.min() > 0.1

    def test_composed_map_chains_jacobians(self):
        rng = np.random.default_rng(3)
        inner = AffineBoxMap(origin=[-1.0, 0.0], lengths=[1.0, 1.0])
        chart = ComposedMap(inner, Warp2D(0.125))
        pts = rng.uniform(-1.0, 1.0, size=(2, 11))
        eps = 1e-6
        jac = chart.jacobian(pts)
        for axis in range(2):
            shift = np.zeros((2, 1))
            shift[axis] = eps
            fd = (chart(pts + shift) - chart(pts - shift)) / (2 * eps)
            assert np.allclose(jac[:, axis], fd, atol=5e-9)


class TestPatchGeometry:
    def test_volume_of_affine_box(self):
        ops = _ops()
        chart = ComposedMap(AffineBoxMap([0.0, 0.0], [3.0, 0.5]))
        geo = build_patch_geometry([ops, ops], chart)
        vol = np.sum(geo.weights * geo.det_jacobian)
        assert vol == pytest.approx(1.5, rel=1e-13)

    def test_volume_invariant_under_warp(self):
        # the warp is area preserving in aggregate on the symmetric box
        ops = _ops(3, 4)
        plain = build_patch_geometry(
            [ops, ops], ComposedMap(AffineBoxMap([-1, -1], [2, 2])))
        warped = build_patch_geometry(
            [ops, ops],
            ComposedMap(AffineBoxMap([-1, -1], [2, 2]), Warp2D(0.125)))
        v0 = np.sum(plain.weights * plain.det_jacobian)
        v1 = np.sum(warped.weights * warped.det_jacobian)
        assert v1 == pytest.approx(v0, rel=1e-12)

    def test_inverse_jacobian_inverts_jacobian(self):
        ops = _ops(2, 2)
        chart = ComposedMap(AffineBoxMap([-1, -1], [2, 2]), Warp2D(0.1))
        geo = build_patch_geometry([ops, ops], chart)
        prod = np.einsum("ikn,kjn->ijn", geo.jacobian, geo.inv_jacobian)
        eye = np.eye(2)[:, :, None]
        assert np.max(np.abs(prod - eye)) < 1e-13

    @pytest.mark.parametrize("axis,side", [(0, 0), (0, 1), (1, 0), (1, 1)])
    def test_face_normals_point_outward_unit(self, axis, side):
        ops = _ops()
        chart = ComposedMap(AffineBoxMap([-1, -1], [2, 2]), Warp2D(0.125))
        geo = build_patch_geometry([ops, ops], chart)
        face = geo.face(axis, side)
        norms = np.linalg.norm(face.normal, axis=0)
        assert np.allclose(norms, 1.0, atol=1e-13)
        # outward test: pulled back to the reference cube, the normal must
        # have a positive component along the face's outward axis
        sign = 1.0 if side == 1 else -1.0
        pulled = np.einsum("kin,in->kn", face.inv_jacobian, face.normal)
        assert np.all(pulled[axis] * sign > 0)

    def test_surface_jacobian_measures_edge_length(self):
        ops = _ops()
        chart = ComposedMap(AffineBoxMap([0.0, 0.0], [3.0, 0.5]))
        geo = build_patch_geometry([ops, ops], chart)
        top = geo.face(1, 1)
        assert np.sum(top.weights * top.surface_jacobian) == pytest.approx(3.0)
        right = geo.face(0, 1)
        assert np.sum(right.weights * right.surface_jacobian) == pytest.approx(0.5)


class TestMultipatch:
    def test_two_patch_links_are_mutual(self):
        ops = _ops()
        grid = build_cartesian_multipatch([ops, ops], [[0, 2], [0, 1]], (2, 1))
        link = grid.links[0][1]  # axis 0, right face of patch 0
        assert isinstance(link, InteriorLink)
        assert link.neighbor == 1
        back = grid.links[1][0]
        assert isinstance(back, InteriorLink) and back.neighbor == 0
        assert isinstance(grid.links[0][0], BoundaryFace)

    def test_interface_quadrature_points_coincide(self):
        ops = _ops(3, 2)
        grid = build_cartesian_multipatch(
            [ops, ops], [[-1, 1], [-1, 1]], (2, 2), warp=Warp2D(0.125))
        for pid, patch_links in enumerate(grid.links):
            for fid, link in enumerate(patch_links):
                if not isinstance(link, InteriorLink):
                    continue
                mine = grid.patches[pid].faces[fid].phys
                theirs = grid.patches[link.neighbor].faces[link.neighbor_face].phys
                gap = np.abs(mine - theirs - link.shift[:, None]).max()
                assert gap <= INTERFACE_TOL

    def test_periodic_links_carry_shift(self):
        ops = _ops()
        grid = build_cartesian_multipatch(
            [ops], [[0.0, 2.0]], (2,), periodic=(True,))
        wrap = grid.links[0][0]
        assert isinstance(wrap, InteriorLink)
        assert wrap.neighbor == 1
        assert wrap.shift[0] == pytest.approx(-2.0)

    def test_warp_with_periodic_rejected(self):
        ops = _ops()
        with pytest.raises(ValueError):
            build_cartesian_multipatch(
                [ops, ops], [[-1, 1], [-1, 1]], (2, 2),
                warp=Warp2D(0.1), periodic=(True, False))

    def test_patch_extent_uses_coarse_boxes(self):
        ops = _ops()
        grid = build_cartesian_multipatch(
            [ops, ops], [[0, 4], [0, 1]], (2, 1))
        assert grid.patch_extent == pytest.approx(2.0)
        assert grid.num_dofs == 2 * ops.dim**2

    def test_3d_box_has_six_faces_per_patch(self):
        ops = _ops(1, 2)
        grid = build_cartesian_multipatch(
            [ops, ops, ops], [[0, 2], [0, 1], [0, 1]], (2, 1, 1))
        assert grid.sdim == 3
        for patch in grid.patches:
            assert len(patch.faces) == 6
        interior = sum(isinstance(l, InteriorLink)
                       for links in grid.links for l in links)
        assert interior == 2
