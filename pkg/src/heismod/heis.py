"""Heisenberg group algebra, contact form, frames, and horizontal curves.

Coordinates are (x, y, t) with the group product

    (x, y, t) * (u, v, s) = (x + u, y + v, t + s + 2*y*u - 2*x*v).

The contact form is eta = -y/2 dx + x/2 dy + 1/4 dt, with horizontal frame
X = d/dx + 2y d/dt and Y = d/dy - 2x d/dt spanning Ker(eta).  All lengths
use the one-parameter stretch metric `MetricK`, whose K = 1 member makes
{X, Y} orthonormal.  The coordinate volume convention is dx dy dt.

Everything in this module is a pure function of its inputs; there is no
shared mutable state, so concurrent use is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "HeisPoint",
    "TangentVector",
    "HorizontalVector",
    "MetricK",
    "LegendrianPolyline",
    "NonLegendrianError",
    "OutOfDomainError",
    "group_mul",
    "group_inv",
    "eta",
    "frame_at",
    "flow_x",
    "flow_y",
    "dilate",
    "curve_length",
    "line_integral",
]

#: Default bound on |eta(chord)| / |chord| for a polyline to count as horizontal.
HORIZONTALITY_TOL = 1e-6


class NonLegendrianError(ValueError):
    """Curve is not horizontal within tolerance (its length is +inf)."""


class OutOfDomainError(ValueError):
    """A curve sample fell outside the domain of a sampled scalar field."""


@dataclass(frozen=True)
class HeisPoint:
    """A point (x, y, t) of the 3-dimensional Heisenberg group."""

    x: float
    y: float
    t: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.t)):
            raise ValueError(f"non-finite coordinates: {(self.x, self.y, self.t)}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.t], dtype=float)

    @staticmethod
    def from_array(a: Sequence[float]) -> "HeisPoint":
        return HeisPoint(float(a[0]), float(a[1]), float(a[2]))


ORIGIN = HeisPoint(0.0, 0.0, 0.0)


def group_mul(p: HeisPoint, q: HeisPoint) -> HeisPoint:
    """Group product p * q."""
    return HeisPoint(
        p.x + q.x,
        p.y + q.y,
        p.t + q.t + 2.0 * p.y * q.x - 2.0 * p.x * q.y,
    )


def group_inv(p: HeisPoint) -> HeisPoint:
    """Group inverse; group_mul(p, group_inv(p)) is the origin exactly."""
    return HeisPoint(-p.x, -p.y, -p.t)


def mul_array(p: HeisPoint, pts: np.ndarray) -> np.ndarray:
    """Left-translate an (n, 3) array of points by p."""
    out = np.empty_like(pts, dtype=float)
    out[:, 0] = p.x + pts[:, 0]
    out[:, 1] = p.y + pts[:, 1]
    out[:, 2] = p.t + pts[:, 2] + 2.0 * p.y * pts[:, 0] - 2.0 * p.x * pts[:, 1]
    return out


@dataclass(frozen=True)
class TangentVector:
    """Coordinate tangent vector (dx, dy, dt) based at a point."""

    base: HeisPoint
    dx: float
    dy: float
    dt: float


@dataclass(frozen=True)
class HorizontalVector:
    """a*X + b*Y at a base point; embeds into TangentVector with eta = 0."""

    base: HeisPoint
    a: float
    b: float

    def as_tangent(self) -> TangentVector:
        return TangentVector(
            self.base,
            self.a,
            self.b,
            2.0 * self.base.y * self.a - 2.0 * self.base.x * self.b,
        )


def eta(v: TangentVector) -> float:
    """Contact form -y/2 dx + x/2 dy + 1/4 dt evaluated at v.base."""
    return -0.5 * v.base.y * v.dx + 0.5 * v.base.x * v.dy + 0.25 * v.dt


def frame_at(p: HeisPoint) -> tuple[TangentVector, TangentVector]:
    """Left-invariant horizontal frame (X, Y) at p; eta vanishes on both."""
    return (
        TangentVector(p, 1.0, 0.0, 2.0 * p.y),
        TangentVector(p, 0.0, 1.0, -2.0 * p.x),
    )


def flow_x(p: HeisPoint, s: float) -> HeisPoint:
    """Time-s flow of X: (x, y, t) -> (x + s, y, t + 2 s y)."""
    return HeisPoint(p.x + s, p.y, p.t + 2.0 * s * p.y)


def flow_y(p: HeisPoint, s: float) -> HeisPoint:
    """Time-s flow of Y: (x, y, t) -> (x, y + s, t - 2 s x)."""
    return HeisPoint(p.x, p.y + s, p.t - 2.0 * s * p.x)


def dilate(p: HeisPoint, r: float) -> HeisPoint:
    """Parabolic dilation (x, y, t) -> (r x, r y, r^2 t); scales CC distance by r."""
    if r <= 0.0:
        raise ValueError(f"dilation factor must be positive, got {r}")
    return HeisPoint(r * p.x, r * p.y, r * r * p.t)


@dataclass(frozen=True)
class MetricK:
    """Stretch metric with orthonormal frame {X/sqrt(K), sqrt(K) Y}.

    |X|_K = sqrt(K) and |Y|_K = 1/sqrt(K); K = 1 is the Levi metric.
    """

    K: float = 1.0

    def __post_init__(self):
        if not (self.K >= 1.0 and math.isfinite(self.K)):
            raise ValueError(f"stretch factor must satisfy K >= 1, got {self.K}")

    def norm(self, a: float, b: float) -> float:
        """Norm of a*X + b*Y."""
        return math.sqrt(self.K * a * a + b * b / self.K)

    def norm_array(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.sqrt(self.K * a * a + b * b / self.K)


class LegendrianPolyline:
    """Sampled horizontal curve with per-segment frame coefficients.

    Each chord from p to q is decomposed via the group displacement
    d = p^{-1} q = (a, b, tau): (a, b) are the frame coefficients at p and
    tau/4 is the eta-component.  `horizontality_residual` is the maximal
    |eta(chord)| / |chord| ratio over segments (0 for exact frame paths).
    """

    def __init__(self, params: Sequence[float], points: Sequence[Sequence[float]]):
        params = np.asarray(params, dtype=float)
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError("points must be an (n, 3) array")
        if params.shape != (points.shape[0],):
            raise ValueError("params and points length mismatch")
        if params.size >= 2 and not np.all(np.diff(params) > 0):
            raise ValueError("params must be strictly increasing")
        if not (np.all(np.isfinite(params)) and np.all(np.isfinite(points))):
            raise ValueError("non-finite samples")
        self.params = params
        self.points = points
        a, b, tau = self._segment_displacements()
        self._seg_a = a
        self._seg_b = b
        self._seg_eta = 0.25 * tau
        hlen = np.hypot(a, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(
                hlen > 0,
                np.abs(self._seg_eta) / np.where(hlen > 0, hlen, 1.0),
                np.where(np.abs(self._seg_eta) > 0, np.inf, 0.0),
            )
        self.horizontality_residual = float(ratio.max()) if ratio.size else 0.0

    def _segment_displacements(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        p = self.points[:-1]
        q = self.points[1:]
        a = q[:, 0] - p[:, 0]
        b = q[:, 1] - p[:, 1]
        tau = (q[:, 2] - p[:, 2]) - 2.0 * p[:, 1] * a + 2.0 * p[:, 0] * b
        return a, b, tau

    @property
    def n_samples(self) -> int:
        return self.points.shape[0]

    @property
    def n_segments(self) -> int:
        return max(self.points.shape[0] - 1, 0)

    def start(self) -> HeisPoint:
        return HeisPoint.from_array(self.points[0])

    def end(self) -> HeisPoint:
        return HeisPoint.from_array(self.points[-1])

    @staticmethod
    def from_points(points: Sequence[Sequence[float]], params: Sequence[float] | None = None) -> "LegendrianPolyline":
        points = np.asarray(points, dtype=float)
        if params is None:
            params = np.arange(points.shape[0], dtype=float)
        return LegendrianPolyline(params, points)

    @staticmethod
    def empty() -> "LegendrianPolyline":
        return LegendrianPolyline(np.empty(0), np.empty((0, 3)))

    def translated(self, g: HeisPoint) -> "LegendrianPolyline":
        """Left-translate the whole curve by g (exact frame coefficients)."""
        return LegendrianPolyline(self.params, mul_array(g, self.points))

    def refined(self) -> "LegendrianPolyline":
        """Insert coordinate midpoints of every segment."""
        if self.n_segments == 0:
            return self
        mid_pts = 0.5 * (self.points[:-1] + self.points[1:])
        mid_par = 0.5 * (self.params[:-1] + self.params[1:])
        pts = np.empty((self.n_samples + self.n_segments, 3))
        par = np.empty(self.n_samples + self.n_segments)
        pts[0::2] = self.points
        pts[1::2] = mid_pts
        par[0::2] = self.params
        par[1::2] = mid_par
        return LegendrianPolyline(par, pts)


def _require_horizontal(c: LegendrianPolyline, tol: float) -> None:
    if c.horizontality_residual > tol:
        raise NonLegendrianError(
            f"polyline is not horizontal: residual {c.horizontality_residual:.3e} "
            f"exceeds tolerance {tol:.3e} (length is +inf by convention)"
        )


def curve_length(
    c: LegendrianPolyline,
    metric: MetricK = MetricK(1.0),
    tol: float = HORIZONTALITY_TOL,
) -> float:
    """Length of a horizontal polyline under the stretch metric.

    Each chord is projected onto the frame at its start point; the metric
    norm of the (a, b) coefficients is summed.  Raises NonLegendrianError
    when the eta-residual exceeds `tol`.
    """
    if c.n_segments == 0:
        return 0.0
    _require_horizontal(c, tol)
    return float(np.sum(metric.norm_array(c._seg_a, c._seg_b)))


def line_integral(
    c: LegendrianPolyline,
    field: Callable[[float, float, float], float],
    metric: MetricK = MetricK(1.0),
    tol: float = HORIZONTALITY_TOL,
) -> float:
    """Length-weighted integral of a scalar field along a horizontal polyline.

    The field is sampled at segment midpoints, so a field constant on each
    segment integrates exactly.  Raises OutOfDomainError on non-finite field
    values and NonLegendrianError for non-horizontal curves.
    """
    if c.n_segments == 0:
        return 0.0
    _require_horizontal(c, tol)
    lengths = metric.norm_array(c._seg_a, c._seg_b)
    mids = 0.5 * (c.points[:-1] + c.points[1:])
    total = 0.0
    for (mx, my, mt), seg in zip(mids, lengths):
        val = field(float(mx), float(my), float(mt))
        if not math.isfinite(val):
            raise OutOfDomainError(f"field value {val} at ({mx}, {my}, {mt})")
        total += val * seg
    return float(total)


def concatenate(curves: Iterable[LegendrianPolyline]) -> LegendrianPolyline:
    """Join polylines end-to-start, re-parametrised by cumulative offsets."""
    curves = [c for c in curves if c.n_samples > 0]
    if not curves:
        return LegendrianPolyline.empty()
    pts = [curves[0].points]
    pars = [curves[0].params]
    for c in curves[1:]:
        if not np.allclose(pts[-1][-1], c.points[0], atol=1e-12):
            raise ValueError("curves do not join end-to-start")
        offset = pars[-1][-1] - c.params[0]
        pts.append(c.points[1:])
        pars.append(c.params[1:] + offset)
    return LegendrianPolyline(np.concatenate(pars), np.concatenate(pts))
