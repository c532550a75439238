"""Discrete 4-modulus of horizontal curve families on the lattice quotient.

The modulus program  minimize sum_c v_c sigma_c^4  subject to  L sigma >= 1,
sigma >= 0  is solved in the dual: with cell weights w = L^T lam the inner
minimizer is sigma_c = (w_c / (4 v_c))^{1/3} and the dual objective

    g(lam) = sum_i lam_i - (3 / 4^{4/3}) * sum_c w_c^{4/3} / v_c^{1/3}

is maximized over lam >= 0 by cyclic coordinate ascent (exact 1-D updates)
preceded by a closed-form rescaling step.  The returned density is rescaled
so the tightest curve constraint is exactly 1, making the primal value a
certified upper bound and g(lam) a certified lower bound.

Solves are deterministic: assembly uses a canonical (curve, cell) order and
all reductions run in fixed sequence.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .heis import HeisPoint, LegendrianPolyline, MetricK, OutOfDomainError, flow_x
from .heis import HORIZONTALITY_TOL
from .lattice import GroupWord, LatticeSpec, reduce_polyline

__all__ = [
    "Grid",
    "QuotientCurve",
    "CurveFamilySample",
    "ConstraintMatrix",
    "ModulusResult",
    "QuasiInvarianceReport",
    "InfeasibleError",
    "NotConvergedError",
    "assemble_constraints",
    "solve_modulus",
    "solve_density_program",
    "analytic_modulus_fibration",
    "family_x_lines",
    "verify_quasi_invariance",
]

_DUAL_CONST = 3.0 / 4.0 ** (4.0 / 3.0)


class InfeasibleError(ValueError):
    """A zero-length curve admits no admissible density (modulus is +inf)."""


class NotConvergedError(RuntimeError):
    """Solver hit the iteration cap; `.result` holds the best primal/dual pair."""

    def __init__(self, message: str, result: "ModulusResult"):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class Grid:
    """Uniform cells over the fundamental box in (x, y/tau, t) coordinates."""

    lattice: LatticeSpec
    nx: int
    ny: int
    nt: int

    def __post_init__(self):
        if min(self.nx, self.ny, self.nt) < 1:
            raise ValueError("grid resolution must be positive")

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny * self.nt

    @property
    def cell_volume(self) -> float:
        return self.lattice.volume() / self.n_cells

    def cell_index(self, ix: int, iy: int, it: int) -> int:
        return (ix * self.ny + iy) * self.nt + it

    def cell_of(self, x: float, y: float, t: float) -> int:
        u = (x, y / self.lattice.tau, t)
        idx = []
        for coord, n in zip(u, (self.nx, self.ny, self.nt)):
            i = int(math.floor(coord * n))
            idx.append(min(max(i, 0), n - 1))
        return self.cell_index(*idx)

    def density_field(self, values: np.ndarray):
        """Per-cell density as a callable for line integrals over box curves."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_cells,):
            raise ValueError(f"expected {self.n_cells} cell values")

        def field(x: float, y: float, t: float) -> float:
            u, v, w = x, y / self.lattice.tau, t
            if not (0.0 <= u < 1.0 and 0.0 <= v < 1.0 and 0.0 <= w < 1.0):
                raise OutOfDomainError(f"point ({x}, {y}, {t}) outside the fundamental cell")
            return float(values[self.cell_of(x, y, t)])

        return field

    def split_polyline(self, poly: LegendrianPolyline) -> LegendrianPolyline:
        """Insert samples at every cell-plane crossing.

        On the result, segment midpoints determine cells unambiguously, so
        midpoint line integrals of per-cell densities are exact and agree
        with the assembled constraint rows.
        """
        pts = [poly.points[0]]
        pars = [poly.params[0]]
        for i in range(poly.n_segments):
            p = poly.points[i]
            q = poly.points[i + 1]
            for s in _cell_plane_cuts(self, p, q):
                if 0.0 < s < 1.0:
                    pts.append(p + s * (q - p))
                    pars.append(poly.params[i] + s * (poly.params[i + 1] - poly.params[i]))
            pts.append(q)
            pars.append(poly.params[i + 1])
        pars_a = np.asarray(pars)
        keep = np.concatenate(([True], np.diff(pars_a) > 0))
        return LegendrianPolyline(pars_a[keep], np.asarray(pts)[keep])


@dataclass
class QuotientCurve:
    """A curve on the quotient: in-box pieces with their deck words."""

    pieces: list[tuple[LegendrianPolyline, GroupWord]]
    residual: float

    def length(self, metric: MetricK = MetricK(1.0)) -> float:
        total = 0.0
        for poly, _ in self.pieces:
            total += float(np.sum(metric.norm_array(poly._seg_a, poly._seg_b)))
        return total

    @property
    def rectifiable(self) -> bool:
        return self.residual <= HORIZONTALITY_TOL


@dataclass
class CurveFamilySample:
    """Finitely many sampled curves standing in for a curve family."""

    lattice: LatticeSpec
    curves: list[QuotientCurve]

    @staticmethod
    def from_cover_polylines(
        lattice: LatticeSpec, polylines: list[LegendrianPolyline]
    ) -> "CurveFamilySample":
        curves = []
        for poly in polylines:
            pieces = reduce_polyline(lattice, poly)
            curves.append(QuotientCurve(pieces=pieces, residual=poly.horizontality_residual))
        return CurveFamilySample(lattice=lattice, curves=curves)

    @property
    def n_rectifiable(self) -> int:
        return sum(1 for c in self.curves if c.rectifiable)

    def subfamily(self, indices) -> "CurveFamilySample":
        return CurveFamilySample(self.lattice, [self.curves[i] for i in indices])


@dataclass(frozen=True)
class ConstraintMatrix:
    """Sparse curves-by-cells matrix of in-cell lengths (canonical COO order)."""

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    n_rows: int
    n_cols: int

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.rows, weights=self.vals, minlength=self.n_rows)

    def matvec(self, sigma: np.ndarray) -> np.ndarray:
        return np.bincount(self.rows, weights=self.vals * sigma[self.cols], minlength=self.n_rows)

    def rmatvec(self, lam: np.ndarray) -> np.ndarray:
        return np.bincount(self.cols, weights=self.vals * lam[self.rows], minlength=self.n_cols)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n_rows, self.n_cols))
        np.add.at(dense, (self.rows, self.cols), self.vals)
        return dense


def _cell_plane_cuts(grid: Grid, p, q) -> list[float]:
    """Sorted params in [0, 1] where the segment p -> q crosses cell planes."""
    tau = grid.lattice.tau
    res = (grid.nx, grid.ny, grid.nt)
    u0 = (p[0], p[1] / tau, p[2])
    u1 = (q[0], q[1] / tau, q[2])
    cuts = [0.0, 1.0]
    for a, b, n in zip(u0, u1, res):
        ca, cb = a * n, b * n
        kmin = int(math.floor(min(ca, cb))) + 1
        kmax = int(math.ceil(max(ca, cb))) - 1
        if kmax >= kmin and cb != ca:
            for k in range(kmin, kmax + 1):
                s = (k - ca) / (cb - ca)
                if 0.0 < s < 1.0:
                    cuts.append(s)
    return sorted(set(cuts))


def _clip_piece_to_cells(grid: Grid, poly: LegendrianPolyline, metric: MetricK):
    """Yield (cell, length) for one in-box polyline, split at cell planes."""
    pts = poly.points
    for i in range(poly.n_segments):
        p = pts[i]
        q = pts[i + 1]
        seg_len = metric.norm(q[0] - p[0], q[1] - p[1])
        if seg_len == 0.0:
            continue
        cuts = _cell_plane_cuts(grid, p, q)
        for s0, s1 in zip(cuts[:-1], cuts[1:]):
            if s1 <= s0:
                continue
            sm = 0.5 * (s0 + s1)
            mx = p[0] + sm * (q[0] - p[0])
            my = p[1] + sm * (q[1] - p[1])
            mt = p[2] + sm * (q[2] - p[2])
            yield grid.cell_of(mx, my, mt), seg_len * (s1 - s0)


def assemble_constraints(
    fam: CurveFamilySample,
    grid: Grid,
    metric: MetricK = MetricK(1.0),
) -> ConstraintMatrix:
    """In-cell length matrix for the rectifiable members of the family.

    Rows are indexed by rectifiable curves in family order; row sums equal
    curve lengths.  Curves with zero length raise InfeasibleError and
    curves shorter than a cell diagonal trigger a near-singular-row warning.
    """
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    diag = metric.norm(1.0 / grid.nx, abs(grid.lattice.tau) / grid.ny)
    row = 0
    for curve in fam.curves:
        if not curve.rectifiable:
            continue
        total = 0.0
        for poly, _ in curve.pieces:
            for cell, length in _clip_piece_to_cells(grid, poly, metric):
                rows.append(row)
                cols.append(cell)
                vals.append(length)
                total += length
        if total == 0.0:
            raise InfeasibleError(
                f"curve {row} has zero length: no admissible density exists"
            )
        if total < diag:
            warnings.warn(
                f"curve {row} is shorter than one cell diagonal ({total:.3e} < {diag:.3e}); "
                "its constraint row is near-singular",
                stacklevel=2,
            )
        row += 1
    rows_a = np.asarray(rows, dtype=np.int64)
    cols_a = np.asarray(cols, dtype=np.int64)
    vals_a = np.asarray(vals, dtype=float)
    # coalesce duplicates in canonical (row, col) order
    if rows_a.size:
        key = rows_a * grid.n_cells + cols_a
        order = np.argsort(key, kind="stable")
        key = key[order]
        vals_a = vals_a[order]
        uniq, start = np.unique(key, return_index=True)
        sums = np.add.reduceat(vals_a, start)
        rows_a = (uniq // grid.n_cells).astype(np.int64)
        cols_a = (uniq % grid.n_cells).astype(np.int64)
        vals_a = sums
    return ConstraintMatrix(rows_a, cols_a, vals_a, n_rows=row, n_cols=grid.n_cells)


@dataclass
class ModulusResult:
    """Primal value with density, dual lower bound, and certificate residuals."""

    value: float
    density: np.ndarray
    dual_bound: float
    gap: float
    iterations: int
    converged: bool = True
    nonrectifiable: bool = False


def solve_density_program(
    matrix: ConstraintMatrix,
    cell_volume: float,
    tol: float = 1e-6,
    max_iter: int = 100_000,
) -> ModulusResult:
    """Dual coordinate ascent for min sum v sigma^4 s.t. L sigma >= 1, sigma >= 0.

    One iteration = a closed-form dual rescaling plus one Gauss-Seidel pass
    of exact per-curve maximizations.  Terminates when the certified
    relative duality gap drops below `tol`; raises NotConvergedError (with
    the best pair attached) at the iteration cap.
    """
    n_curves = matrix.n_rows
    n_cells = matrix.n_cols
    if n_curves == 0:
        return ModulusResult(0.0, np.zeros(n_cells), 0.0, 0.0, 0, converged=True)

    order = np.argsort(matrix.rows, kind="stable")
    r = matrix.rows[order]
    c = matrix.cols[order]
    L = matrix.vals[order]
    starts = np.searchsorted(r, np.arange(n_curves + 1))
    base = (4.0 * cell_volume) ** (1.0 / 3.0)

    lam = np.ones(n_curves)
    w = np.bincount(c, weights=L * lam[r], minlength=n_cells)

    best_primal = math.inf
    best_dual = -math.inf
    density = np.zeros(n_cells)
    gap = math.inf
    sweeps = 0
    for sweep in range(max_iter):
        sweeps = sweep + 1
        s1 = float(lam.sum())
        s2 = _DUAL_CONST * float(np.sum(w ** (4.0 / 3.0))) / cell_volume ** (1.0 / 3.0)
        if s1 > 0.0 and s2 > 0.0:
            scale = (3.0 * s1 / (4.0 * s2)) ** 3
            lam *= scale
            w *= scale
        for i in range(n_curves):
            lo_i, hi_i = starts[i], starts[i + 1]
            Li = L[lo_i:hi_i]
            ci = c[lo_i:hi_i]
            wm = np.maximum(w[ci] - lam[i] * Li, 0.0)
            slack = 1.0 - float(np.sum(Li * np.cbrt(wm))) / base
            if slack <= 0.0:
                u = 0.0
            else:
                u = (float(np.sum(Li ** (4.0 / 3.0))) / base) ** -3.0
                lo, hi = 0.0, u
                for _ in range(60):
                    h = 1.0 - float(np.sum(Li * np.cbrt(wm + hi * Li))) / base
                    if h < 0.0:
                        break
                    lo = hi
                    hi *= 2.0
                u = 0.5 * (lo + hi)
                for _ in range(60):
                    cube = np.cbrt(wm + u * Li)
                    h = 1.0 - float(np.sum(Li * cube)) / base
                    if h > 0.0:
                        lo = u
                    else:
                        hi = u
                    dh = -float(np.sum(Li * Li / np.maximum(cube * cube, 1e-300))) / (3.0 * base)
                    nxt = u - h / dh if dh < 0.0 else 0.5 * (lo + hi)
                    if not (lo < nxt < hi):
                        nxt = 0.5 * (lo + hi)
                    if abs(nxt - u) < 1e-13 * (1.0 + u):
                        u = nxt
                        break
                    u = nxt
            w[ci] = np.maximum(w[ci] + (u - lam[i]) * Li, 0.0)
            lam[i] = u
        sigma = np.cbrt(w / (4.0 * cell_volume))
        mins = matrix.matvec(sigma).min()
        dual = float(lam.sum()) - _DUAL_CONST * float(np.sum(w ** (4.0 / 3.0))) / cell_volume ** (
            1.0 / 3.0
        )
        if dual > best_dual:
            best_dual = dual
        if mins > 0.0:
            primal = float(np.sum(cell_volume * sigma**4)) / mins**4
            if primal < best_primal:
                best_primal = primal
                density = sigma / mins
        gap = (best_primal - best_dual) / max(best_primal, 1e-300)
        if gap <= tol:
            return ModulusResult(best_primal, density, best_dual, gap, sweeps)
    result = ModulusResult(best_primal, density, best_dual, gap, sweeps, converged=False)
    raise NotConvergedError(
        f"duality gap {gap:.3e} above tolerance {tol:.3e} after {sweeps} sweeps", result
    )


def solve_modulus(
    fam: CurveFamilySample,
    grid: Grid,
    tol: float = 1e-6,
    max_iter: int = 100_000,
    metric: MetricK = MetricK(1.0),
) -> ModulusResult:
    """Discrete modulus of a sampled curve family on a grid.

    Non-rectifiable members impose no constraint (they drop out of the
    program); a family whose members are all non-rectifiable has modulus 0
    and is flagged.  An empty family has modulus 0 with sigma = 0.
    """
    if fam.curves and fam.n_rectifiable == 0:
        return ModulusResult(
            0.0, np.zeros(grid.n_cells), 0.0, 0.0, 0, converged=True, nonrectifiable=True
        )
    matrix = assemble_constraints(fam, grid, metric)
    return solve_density_program(matrix, grid.cell_volume, tol=tol, max_iter=max_iter)


def analytic_modulus_fibration(a: float, vol: float) -> float:
    """Exact modulus of the full horizontal-line fibration: (1/(2a))^4 * vol."""
    if a <= 0.0:
        raise ValueError(f"half-length a must be positive, got {a}")
    return (0.5 / a) ** 4 * vol


def family_x_lines(
    lattice: LatticeSpec,
    a: float,
    m: int = 1,
    n: int = 16,
    samples_per_unit: int = 8,
) -> CurveFamilySample:
    """Sampled fibration by horizontal-flow segments of parameter length 2a.

    Start points form an m x n x n grid at cell centers of the fundamental
    box: x0 = (i+1/2)/m, y0 = (j+1/2) tau / n, t0 = (k+1/2)/n.  Members are
    exact frame trajectories, so their residual is zero and their K = 1
    length is exactly 2a.
    """
    if a <= 0.0 or m < 1 or n < 1:
        raise ValueError("need a > 0 and m, n >= 1")
    n_pts = max(2, int(math.ceil(2.0 * a * samples_per_unit)) + 1)
    svals = np.linspace(-a, a, n_pts)
    polylines = []
    for i in range(m):
        x0 = (i + 0.5) / m
        for j in range(n):
            y0 = (j + 0.5) * lattice.tau / n
            for k in range(n):
                t0 = (k + 0.5) / n
                pts = np.empty((n_pts, 3))
                pts[:, 0] = x0 + svals
                pts[:, 1] = y0
                pts[:, 2] = t0 + 2.0 * svals * y0
                polylines.append(LegendrianPolyline(svals + a, pts))
    return CurveFamilySample.from_cover_polylines(lattice, polylines)


def push_family(fam: CurveFamilySample, forward) -> CurveFamilySample:
    """Image family under a point map, re-reduced to the fundamental box."""
    pushed = []
    for curve in fam.curves:
        pieces: list[tuple[LegendrianPolyline, GroupWord]] = []
        residual = 0.0
        for poly, _ in curve.pieces:
            image = np.empty_like(poly.points)
            for idx, pt in enumerate(poly.points):
                img = forward(HeisPoint(pt[0], pt[1], pt[2]))
                image[idx] = (img.x, img.y, img.t)
            image_poly = LegendrianPolyline(poly.params, image)
            residual = max(residual, image_poly.horizontality_residual)
            pieces.extend(reduce_polyline(fam.lattice, image_poly))
        pushed.append(QuotientCurve(pieces=pieces, residual=residual))
    return CurveFamilySample(lattice=fam.lattice, curves=pushed)


@dataclass(frozen=True)
class QuasiInvarianceReport:
    """Measured two-sided modulus bound for a contact map of dilatation <= K."""

    mod_source: float
    mod_target: float
    ratio: float
    K: float
    lower: float
    upper: float
    ok: bool
    gap_source: float
    gap_target: float


def verify_quasi_invariance(
    forward,
    fam: CurveFamilySample,
    K: float,
    grid: Grid,
    tol: float = 1e-6,
    margin: float = 0.1,
) -> QuasiInvarianceReport:
    """Check Mod(fam)/K^2 <= Mod(image family, K-metric) <= K^2 Mod(fam).

    `forward` is the point map; the image family is measured in the
    stretch metric MetricK(K).  The slack combines the reported duality
    gaps with the discretization margin.
    """
    source = solve_modulus(fam, grid, tol=tol)
    image = push_family(fam, forward)
    target = solve_modulus(image, grid, tol=tol, metric=MetricK(K))
    slack_rel = margin + source.gap + target.gap
    lower = source.value / (K * K) * (1.0 - slack_rel)
    upper = source.value * K * K * (1.0 + slack_rel)
    ratio = source.value / target.value if target.value > 0 else math.inf
    ok = lower <= target.value <= upper
    return QuasiInvarianceReport(
        mod_source=source.value,
        mod_target=target.value,
        ratio=ratio,
        K=K,
        lower=lower,
        upper=upper,
        ok=ok,
        gap_source=source.gap,
        gap_target=target.gap,
    )
