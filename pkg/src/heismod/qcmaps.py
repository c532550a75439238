"""Contact maps, horizontal differentials, dilatation, and Beltrami quotients.

The horizontal differential of a map f at q is the 2x2 frame matrix M with
f_*(a X + b Y) = (M @ (a, b)) . (X, Y) at f(q).  Its dilatation against the
stretch metric MetricK is the singular-value ratio of D @ M with
D = diag(sqrt(K), 1/sqrt(K)); the Beltrami quotient mu is the
anticonformal-to-conformal ratio of the same plane map, and
(1 + |mu|) / (1 - |mu|) reproduces the dilatation.

The candidate extremal map is the identity between the K = 1 and K metrics:
its differential is the identity matrix and its dilatation is K everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .heis import (
    HeisPoint,
    LegendrianPolyline,
    MetricK,
    TangentVector,
    dilate,
    eta,
    flow_x,
    flow_y,
    group_mul,
)

__all__ = [
    "ContactMapSample",
    "DilatationReport",
    "NotContactError",
    "OrientationReversedError",
    "DegenerateDifferentialError",
    "horizontal_differential",
    "dilatation",
    "beltrami",
    "extremal_map",
    "contact_factor",
    "push_curve",
    "builtin_map",
    "BUILTIN_MAP_NAMES",
]

#: Allowed eta-component of a pushed frame vector, relative to its horizontal norm.
CONTACT_TOL = 1e-6


class NotContactError(ValueError):
    """The differential does not map the contact plane into the contact plane."""

    def __init__(self, message: str, residual: float = math.nan):
        super().__init__(message)
        self.residual = residual


class OrientationReversedError(ValueError):
    """Beltrami quotients are only defined for orientation-preserving maps."""


class DegenerateDifferentialError(ValueError):
    """The horizontal differential is singular."""


PointMap = Callable[[HeisPoint], HeisPoint]
FrameDifferential = Callable[[HeisPoint], np.ndarray]


@dataclass(frozen=True)
class ContactMapSample:
    """A point map with an optional analytic frame differential.

    When `differential` is absent the frame matrix falls back to
    Richardson-extrapolated central differences along frame trajectories
    with step `fd_step`.
    """

    forward: PointMap
    differential: Optional[FrameDifferential] = None
    fd_step: float = 1e-4
    name: str = ""
    target_metric: Optional[MetricK] = None


@dataclass(frozen=True)
class DilatationReport:
    """Pointwise stretch data: lambda1 >= lambda2, K = ratio, |mu| < 1."""

    lambda1: float
    lambda2: float
    K_at_q: float
    mu: Optional[complex]
    jacobian: float


def _fd_frame_columns(f: ContactMapSample, q: HeisPoint, h: float) -> np.ndarray:
    """3-vector columns (df X, df Y) by central differences along frame flows."""
    cols = np.empty((3, 2))
    for col, flow in enumerate((flow_x, flow_y)):
        plus = f.forward(flow(q, h)).as_array()
        minus = f.forward(flow(q, -h)).as_array()
        cols[:, col] = (plus - minus) / (2.0 * h)
    return cols


def _frame_matrix_and_residuals(
    f: ContactMapSample, q: HeisPoint
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(2x2 frame matrix, eta residuals, horizontal norms) at q."""
    fq = f.forward(q)
    if f.differential is not None:
        M = np.asarray(f.differential(q), dtype=float)
        if M.shape != (2, 2):
            raise ValueError(f"analytic differential must be 2x2, got {M.shape}")
        residuals = np.zeros(2)
        norms = np.hypot(M[0], M[1])
        return M, residuals, norms
    h = f.fd_step
    coarse = _fd_frame_columns(f, q, h)
    fine = _fd_frame_columns(f, q, 0.5 * h)
    cols = (4.0 * fine - coarse) / 3.0
    M = cols[:2, :].copy()
    residuals = np.array(
        [abs(eta(TangentVector(fq, *cols[:, j]))) for j in range(2)]
    )
    norms = np.hypot(M[0], M[1])
    return M, residuals, norms


def horizontal_differential(
    f: ContactMapSample, q: HeisPoint, contact_tol: float = CONTACT_TOL
) -> np.ndarray:
    """Frame matrix of f at q; raises NotContactError on eta leakage.

    The eta-components of the pushed frame vectors must stay below
    `contact_tol` relative to their horizontal norms.
    """
    M, residuals, norms = _frame_matrix_and_residuals(f, q)
    rel = residuals / np.maximum(norms, 1e-300)
    if rel.max() > contact_tol:
        raise NotContactError(
            f"map {f.name or '<anonymous>'} is not contact at "
            f"({q.x:.6g}, {q.y:.6g}, {q.t:.6g}): eta residuals {residuals} "
            f"exceed {contact_tol} relative to horizontal norms {norms}",
            residual=float(rel.max()),
        )
    return M


def _stretch_matrix(target: MetricK) -> np.ndarray:
    rk = math.sqrt(target.K)
    return np.array([[rk, 0.0], [0.0, 1.0 / rk]])


def beltrami(M: np.ndarray, target: MetricK = MetricK(1.0)) -> complex:
    """Beltrami quotient of the plane map D @ M, written z -> alpha z + beta conj(z).

    Requires det(D @ M) > 0; then |mu| < 1 and
    (1 + |mu|) / (1 - |mu|) equals the singular-value ratio.
    """
    A = _stretch_matrix(target) @ np.asarray(M, dtype=float)
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if det <= 0.0:
        raise OrientationReversedError(
            f"determinant {det:.6g} is not positive; mu is undefined for "
            "orientation-reversing maps"
        )
    alpha = complex(A[0, 0] + A[1, 1], A[1, 0] - A[0, 1]) * 0.5
    beta = complex(A[0, 0] - A[1, 1], A[1, 0] + A[0, 1]) * 0.5
    return beta / alpha


def dilatation(M: np.ndarray, target: MetricK = MetricK(1.0)) -> DilatationReport:
    """Singular-value report of D @ M with D = diag(sqrt(K), 1/sqrt(K)).

    lambda1 and lambda2 are the extremal stretches of unit horizontal
    vectors, K_at_q their ratio, and jacobian = (lambda1 * lambda2)^2.  The
    Beltrami quotient is included for orientation-preserving maps.
    """
    A = _stretch_matrix(target) @ np.asarray(M, dtype=float)
    s = np.linalg.svd(A, compute_uv=False)
    s1, s2 = float(s[0]), float(s[1])
    if s2 <= 0.0:
        raise DegenerateDifferentialError("singular frame differential (lambda2 = 0)")
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    mu = beltrami(M, target) if det > 0.0 else None
    return DilatationReport(
        lambda1=s1,
        lambda2=s2,
        K_at_q=s1 / s2,
        mu=mu,
        jacobian=(s1 * s2) ** 2,
    )


def extremal_map(K: float) -> ContactMapSample:
    """The stretch candidate: identity point map aimed at the K metric.

    Its analytic frame differential is the identity, so the dilatation
    against MetricK(K) is exactly K at every point.
    """
    metric = MetricK(K)
    return ContactMapSample(
        forward=lambda p: p,
        differential=lambda q: np.eye(2),
        name="f0",
        target_metric=metric,
    )


def contact_factor(
    f: ContactMapSample,
    q: HeisPoint,
    contact_tol: float = CONTACT_TOL,
) -> float:
    """Factor lam with f^* eta = lam eta at q, via the characteristic flow.

    Computed as eta(f_* T) for the Reeb field T = 4 d/dt (which has
    eta(T) = 1).  |lam| equals lambda1 * lambda2 of the K = 1 report; the
    identity is exercised by the test suite.  Raises NotContactError when
    f is not contact at q.
    """
    horizontal_differential(f, q, contact_tol=contact_tol)
    h = f.fd_step

    def reeb_push(step: float) -> np.ndarray:
        plus = f.forward(HeisPoint(q.x, q.y, q.t + 4.0 * step)).as_array()
        minus = f.forward(HeisPoint(q.x, q.y, q.t - 4.0 * step)).as_array()
        return (plus - minus) / (2.0 * step)

    coarse = reeb_push(h)
    fine = reeb_push(0.5 * h)
    v = (4.0 * fine - coarse) / 3.0
    fq = f.forward(q)
    return eta(TangentVector(fq, v[0], v[1], v[2]))


def push_curve(f: ContactMapSample, c: LegendrianPolyline) -> LegendrianPolyline:
    """Pointwise image of a polyline with recomputed horizontality residual."""
    if c.n_samples == 0:
        return c
    image = np.empty_like(c.points)
    for idx, pt in enumerate(c.points):
        img = f.forward(HeisPoint(pt[0], pt[1], pt[2]))
        image[idx] = (img.x, img.y, img.t)
    return LegendrianPolyline(c.params, image)


# ---------------------------------------------------------------------------
# built-in test maps
# ---------------------------------------------------------------------------

BUILTIN_MAP_NAMES = (
    "identity",
    "f0",
    "t-translation",
    "left-translation",
    "flow-x",
    "dilation",
    "t-doubling",
    "affine",
)


def builtin_map(name: str, **params) -> ContactMapSample:
    """Named test maps for the command-line driver.

    identity / f0          identity (analytic differential = I)
    t-translation          p -> p + (0, 0, c); contact, frame-preserving
    left-translation       p -> g * p for g = (gx, gy, gt); contact
    flow-x                 p -> p * (s, 0, 0); volume-preserving, NOT contact
    dilation               (x, y, t) -> (r x, r y, r^2 t); contact factor r^2
    t-doubling             (x, y, t) -> (x, y, 2 t); NOT contact
    affine                 p -> matrix @ p + offset (12 numbers); generic
    """
    if name in ("identity", "f0"):
        return ContactMapSample(
            forward=lambda p: p, differential=lambda q: np.eye(2), name=name
        )
    if name == "t-translation":
        c = float(params.get("c", 0.5))
        return ContactMapSample(
            forward=lambda p: HeisPoint(p.x, p.y, p.t + c),
            differential=lambda q: np.eye(2),
            name=name,
        )
    if name == "left-translation":
        g = HeisPoint(
            float(params.get("gx", 0.0)),
            float(params.get("gy", 0.0)),
            float(params.get("gt", 0.0)),
        )
        return ContactMapSample(
            forward=lambda p: group_mul(g, p),
            differential=lambda q: np.eye(2),
            name=name,
        )
    if name == "flow-x":
        s = float(params.get("s", 0.5))
        shift = HeisPoint(s, 0.0, 0.0)
        return ContactMapSample(
            forward=lambda p: group_mul(p, shift), name=name
        )
    if name == "dilation":
        r = float(params.get("r", 2.0))
        return ContactMapSample(
            forward=lambda p: dilate(p, r),
            differential=lambda q: r * np.eye(2),
            name=name,
        )
    if name == "t-doubling":
        return ContactMapSample(
            forward=lambda p: HeisPoint(p.x, p.y, 2.0 * p.t), name=name
        )
    if name == "affine":
        matrix = np.asarray(params["matrix"], dtype=float).reshape(3, 3)
        offset = np.asarray(params.get("offset", (0.0, 0.0, 0.0)), dtype=float)

        def forward(p: HeisPoint) -> HeisPoint:
            v = matrix @ p.as_array() + offset
            return HeisPoint(v[0], v[1], v[2])

        return ContactMapSample(forward=forward, name=name)
    raise ValueError(f"unknown builtin map {name!r}; choose from {BUILTIN_MAP_NAMES}")
