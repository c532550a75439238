"""Horizontal differentials, dilatation, Beltrami quotients, contact factors."""

import math

import numpy as np
import pytest

from heismod.heis import (
    ORIGIN,
    HeisPoint,
    LegendrianPolyline,
    MetricK,
    curve_length,
    flow_x,
)
from heismod.qcmaps import (
    ContactMapSample,
    NotContactError,
    OrientationReversedError,
    beltrami,
    builtin_map,
    contact_factor,
    dilatation,
    extremal_map,
    horizontal_differential,
    push_curve,
)


def rand_pts(rng, n, scale=2.0):
    return [HeisPoint(*rng.uniform(-scale, scale, 3)) for _ in range(n)]


def rotation(phi):
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def x_segment(start, length, n=9):
    svals = np.linspace(0.0, length, n)
    pts = np.array([flow_x(start, sv).as_array() for sv in svals])
    return LegendrianPolyline(svals, pts)


class TestHorizontalDifferential:
    def test_identity_analytic(self):
        f = builtin_map("identity")
        M = horizontal_differential(f, HeisPoint(0.3, -0.2, 0.7))
        assert np.array_equal(M, np.eye(2))

    def test_t_translation_by_finite_differences(self):
        # drop the analytic differential to exercise the FD fallback
        base = builtin_map("t-translation", c=0.8)
        f = ContactMapSample(forward=base.forward, name="t-translation-fd")
        rng = np.random.default_rng(3)
        for q in rand_pts(rng, 10):
            M = horizontal_differential(f, q)
            assert np.allclose(M, np.eye(2), atol=1e-9)

    def test_fd_converges_quadratically_or_better(self):
        # both maps are affine, so central differences are exact up to roundoff
        for name in ("identity", "t-translation"):
            base = builtin_map(name, c=0.4)
            for h in (1e-3, 1e-4):
                f = ContactMapSample(forward=base.forward, fd_step=h)
                M = horizontal_differential(f, HeisPoint(0.5, 0.4, -0.3))
                assert np.allclose(M, np.eye(2), atol=1e-9)

    def test_flow_x_small_shift_unit_determinant(self):
        # p -> p * (s, 0, 0) leaks eta at rate s; below tolerance it passes
        # the contact gate and volume preservation pins det M to 1
        f = builtin_map("flow-x", s=1e-7)
        M = horizontal_differential(f, ORIGIN)
        assert abs(np.linalg.det(M) - 1.0) < 1e-6

    def test_flow_x_large_shift_not_contact(self):
        f = builtin_map("flow-x", s=0.5)
        with pytest.raises(NotContactError) as err:
            horizontal_differential(f, ORIGIN)
        assert err.value.residual > 1e-2

    def test_t_doubling_not_contact(self):
        f = builtin_map("t-doubling")
        with pytest.raises(NotContactError):
            horizontal_differential(f, HeisPoint(0.0, 1.0, 0.0))

    def test_dilation_frame_matrix(self):
        f = builtin_map("dilation", r=3.0)
        fd = ContactMapSample(forward=f.forward, name="dilation-fd")
        rng = np.random.default_rng(5)
        for q in rand_pts(rng, 5):
            assert np.array_equal(horizontal_differential(f, q), 3.0 * np.eye(2))
            assert np.allclose(horizontal_differential(fd, q), 3.0 * np.eye(2), atol=1e-8)


class TestDilatation:
    def test_identity_conformal(self):
        rep = dilatation(np.eye(2), MetricK(1.0))
        assert rep.K_at_q == 1.0
        assert rep.mu == 0.0
        assert rep.jacobian == pytest.approx(1.0)

    def test_stretch_k4(self):
        rep = dilatation(np.eye(2), MetricK(4.0))
        assert rep.K_at_q == pytest.approx(4.0, rel=1e-14)
        assert rep.lambda1 == pytest.approx(2.0)
        assert rep.lambda2 == pytest.approx(0.5)
        assert rep.jacobian == pytest.approx(1.0)

    def test_rotations_are_isometries(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            rep = dilatation(rotation(rng.uniform(0, 2 * math.pi)), MetricK(1.0))
            assert rep.K_at_q == pytest.approx(1.0, rel=1e-12)

    def test_rotation_invariance_of_ratio(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            M = rng.normal(size=(2, 2))
            if abs(np.linalg.det(M)) < 0.05:
                continue
            base = dilatation(M).K_at_q
            pre = dilatation(M @ rotation(rng.uniform(0, 7))).K_at_q
            post = dilatation(rotation(rng.uniform(0, 7)) @ M).K_at_q
            assert pre == pytest.approx(base, rel=1e-10)
            assert post == pytest.approx(base, rel=1e-10)

    def test_degenerate_rejected(self):
        from heismod.qcmaps import DegenerateDifferentialError

        with pytest.raises(DegenerateDifferentialError):
            dilatation(np.array([[1.0, 0.0], [0.0, 0.0]]))


class TestBeltrami:
    def test_identity_mu_zero(self):
        assert beltrami(np.eye(2), MetricK(1.0)) == 0.0

    def test_stretch_mu_real(self):
        for K in (1.0, 2.0, 4.0):
            mu = beltrami(np.eye(2), MetricK(K))
            assert mu.imag == 0.0
            assert mu.real == pytest.approx((K - 1.0) / (K + 1.0), rel=1e-14)
        mu = beltrami(np.eye(2), MetricK(4.0))
        assert (1 + abs(mu)) / (1 - abs(mu)) == pytest.approx(4.0, rel=1e-14)

    def test_consistency_with_singular_values(self):
        rng = np.random.default_rng(11)
        checked = 0
        while checked < 100:
            M = rng.normal(size=(2, 2))
            det = np.linalg.det(M)
            if abs(det) < 0.05:
                continue
            if det < 0:
                M = M[:, ::-1].copy()
            for K in (1.0, 2.0, 4.0):
                rep = dilatation(M, MetricK(K))
                mu = beltrami(M, MetricK(K))
                assert abs(mu) < 1.0
                assert (1 + abs(mu)) / (1 - abs(mu)) == pytest.approx(
                    rep.K_at_q, abs=1e-9, rel=1e-9
                )
            checked += 1

    def test_orientation_reversal_rejected(self):
        with pytest.raises(OrientationReversedError):
            beltrami(np.array([[1.0, 0.0], [0.0, -1.0]]))


class TestExtremalMap:
    def test_k1_is_conformal(self):
        f = extremal_map(1.0)
        M = horizontal_differential(f, ORIGIN)
        assert dilatation(M, f.target_metric).K_at_q == 1.0

    def test_k4_report(self):
        f = extremal_map(4.0)
        rng = np.random.default_rng(13)
        for q in rand_pts(rng, 10):
            rep = dilatation(horizontal_differential(f, q), f.target_metric)
            assert rep.K_at_q == pytest.approx(4.0, rel=1e-14)
            assert rep.mu == pytest.approx(0.6)

    def test_pushed_x_segment_length(self):
        a = 1.0
        f = extremal_map(4.0)
        seg = x_segment(HeisPoint(0.1, 0.4, 0.0), 2 * a)
        image = push_curve(f, seg)
        assert curve_length(image, f.target_metric) == pytest.approx(
            2.0 * math.sqrt(4.0) * a, rel=1e-12
        )


class TestContactFactor:
    def test_identity(self):
        assert contact_factor(builtin_map("identity"), ORIGIN) == pytest.approx(1.0)

    def test_f0_any_k(self):
        f = extremal_map(4.0)
        rng = np.random.default_rng(17)
        for q in rand_pts(rng, 5):
            lam = contact_factor(f, q)
            assert lam == pytest.approx(1.0, abs=1e-9)
            rep = dilatation(horizontal_differential(f, q), MetricK(1.0))
            assert rep.lambda1 * rep.lambda2 == pytest.approx(abs(lam), abs=1e-9)

    def test_dilation_factor_r_squared(self):
        rng = np.random.default_rng(19)
        for r in (0.5, 2.0, 3.0):
            f = builtin_map("dilation", r=r)
            for q in rand_pts(rng, 3):
                lam = contact_factor(f, q)
                assert lam == pytest.approx(r * r, rel=1e-7)
                rep = dilatation(horizontal_differential(f, q), MetricK(1.0))
                assert rep.lambda1 * rep.lambda2 == pytest.approx(abs(lam), rel=1e-7)

    def test_left_translation_factor_one(self):
        f = builtin_map("left-translation", gx=0.5, gy=-0.3, gt=0.2)
        assert contact_factor(f, HeisPoint(0.1, 0.2, 0.3)) == pytest.approx(1.0, abs=1e-10)

    def test_non_contact_rejected(self):
        with pytest.raises(NotContactError):
            contact_factor(builtin_map("t-doubling"), HeisPoint(0, 1, 0))


class TestJacobianConsistency:
    def coordinate_jacobian(self, forward, q, h=1e-5):
        J = np.empty((3, 3))
        for j, e in enumerate(np.eye(3)):
            plus = forward(HeisPoint(*(q.as_array() + h * e))).as_array()
            minus = forward(HeisPoint(*(q.as_array() - h * e))).as_array()
            J[:, j] = (plus - minus) / (2 * h)
        return abs(np.linalg.det(J))

    def test_contact_maps_match_volume_jacobian(self):
        rng = np.random.default_rng(23)
        cases = [
            builtin_map("identity"),
            builtin_map("t-translation", c=0.7),
            builtin_map("left-translation", gx=0.4, gy=0.1, gt=-0.2),
            builtin_map("dilation", r=1.7),
        ]
        for f in cases:
            for q in rand_pts(rng, 3):
                rep = dilatation(horizontal_differential(f, q), MetricK(1.0))
                coord = self.coordinate_jacobian(f.forward, q)
                assert rep.jacobian == pytest.approx(coord, rel=1e-4)


class TestPushCurve:
    def test_identity_same(self):
        seg = x_segment(HeisPoint(0.0, 0.3, 0.0), 1.0)
        out = push_curve(builtin_map("identity"), seg)
        assert np.array_equal(out.points, seg.points)

    def test_t_translation_preserves_lengths(self):
        seg = x_segment(HeisPoint(0.2, -0.4, 0.1), 1.5)
        out = push_curve(builtin_map("t-translation", c=0.9), seg)
        assert out.horizontality_residual <= 1e-12
        assert curve_length(out) == pytest.approx(curve_length(seg), abs=1e-12)
        assert np.allclose(out.points[:, 2], seg.points[:, 2] + 0.9)

    def test_non_contact_image_flagged(self):
        seg = x_segment(HeisPoint(0.0, 1.0, 0.0), 1.0)
        out = push_curve(builtin_map("t-doubling"), seg)
        assert out.horizontality_residual > 1e-6

    def test_affine_builtin_roundtrip(self):
        f = builtin_map(
            "affine",
            matrix=np.eye(3).ravel(),
            offset=(0.0, 0.0, 0.5),
        )
        seg = x_segment(HeisPoint(0.1, 0.2, 0.0), 0.5)
        out = push_curve(f, seg)
        assert np.allclose(out.points[:, 2], seg.points[:, 2] + 0.5)
