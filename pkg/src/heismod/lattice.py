"""Lattice subgroups of the Heisenberg group and their compact quotients.

The lattice is generated by A = (1, 0, 0), B = (sigma, tau, 0) and
C = (0, 0, 1), acting by *left* group translation (the action that
preserves the contact form and the horizontal frame exactly).  Closure of
the word group forces 4*tau to be an integer: the A, B commutator shifts
t by 4*tau, and configurations violating this are rejected.

Words (n1, n2, m) stand for A^n1 B^n2 C^m and compose as

    (n1, n2, m) o (n1', n2', m') = (n1+n1', n2+n2', m+m' + 4*tau*n1'*n2).

The fundamental cell is the half-open box x in [0,1), y/tau in [0,1),
t in [0,1); its coordinate volume (dx dy dt) is |tau|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

from .heis import HeisPoint, LegendrianPolyline, MetricK, group_inv, group_mul
from .geodesics import cc_distance, cc_distance_scaled

__all__ = ["GroupWord", "LatticeSpec", "QuotientPoint", "ReducedSegment"]

IDENTITY_WORD: "GroupWord"


@dataclass(frozen=True)
class GroupWord:
    """Integer word A^n1 B^n2 C^m of the lattice."""

    n1: int
    n2: int
    m: int

    def is_identity(self) -> bool:
        return self.n1 == 0 and self.n2 == 0 and self.m == 0


IDENTITY_WORD = GroupWord(0, 0, 0)


@dataclass(frozen=True)
class QuotientPoint:
    """Canonical representative in the fundamental cell plus its deck word."""

    rep: HeisPoint
    word: GroupWord


@dataclass(frozen=True)
class LatticeSpec:
    """Lattice parameters; immutable and safe for concurrent use."""

    sigma: float = 0.0
    tau: float = 0.25

    def __post_init__(self):
        if self.tau == 0.0 or not math.isfinite(self.tau):
            raise ValueError(f"tau must be nonzero and finite, got {self.tau}")
        if not math.isfinite(self.sigma):
            raise ValueError(f"sigma must be finite, got {self.sigma}")
        four_tau = 4.0 * self.tau
        if abs(four_tau - round(four_tau)) > 1e-12 or round(four_tau) == 0:
            raise ValueError(
                f"4*tau = {four_tau!r} is not a (nonzero) integer: the word group "
                "generated by left translations is not discrete; choose tau with "
                "4*tau in Z"
            )

    @property
    def four_tau(self) -> int:
        return round(4.0 * self.tau)

    @property
    def gen_a(self) -> HeisPoint:
        return HeisPoint(1.0, 0.0, 0.0)

    @property
    def gen_b(self) -> HeisPoint:
        return HeisPoint(self.sigma, self.tau, 0.0)

    @property
    def gen_c(self) -> HeisPoint:
        return HeisPoint(0.0, 0.0, 1.0)

    # -- word algebra ------------------------------------------------------

    def element(self, w: GroupWord) -> HeisPoint:
        """The group element A^n1 B^n2 C^m = (n1 + n2 s, n2 tau, m - 2 n1 n2 tau)."""
        return HeisPoint(
            w.n1 + w.n2 * self.sigma,
            w.n2 * self.tau,
            w.m - 2.0 * w.n1 * w.n2 * self.tau,
        )

    def compose(self, w: GroupWord, v: GroupWord) -> GroupWord:
        extra = self.four_tau * v.n1 * w.n2
        return GroupWord(w.n1 + v.n1, w.n2 + v.n2, w.m + v.m + extra)

    def invert_word(self, w: GroupWord) -> GroupWord:
        return GroupWord(-w.n1, -w.n2, -w.m + self.four_tau * w.n1 * w.n2)

    # -- action and reduction ----------------------------------------------

    def act(self, w: GroupWord, p: HeisPoint) -> HeisPoint:
        """Left translation of p by the word element; preserves eta and frame."""
        return group_mul(self.element(w), p)

    def cell_coords(self, p: HeisPoint) -> tuple[float, float, float]:
        """Coordinates (x, y/tau, t) used for the fundamental box."""
        return (p.x, p.y / self.tau, p.t)

    def reduce(self, p: HeisPoint) -> QuotientPoint:
        """Canonical representative: y/tau first, then x, then t, each to [0,1)."""
        n2 = math.floor(p.y / self.tau)
        n1 = math.floor(p.x - n2 * self.sigma)
        partial = group_mul(group_inv(self.element(GroupWord(n1, n2, 0))), p)
        m = math.floor(partial.t)
        word = GroupWord(n1, n2, m)  # (n1,n2,0) o (0,0,m) has no commutator term
        rep = HeisPoint(partial.x, partial.y, partial.t - m)
        for _ in range(3):
            u, v, wcoord = self.cell_coords(rep)
            dn1 = math.floor(u)
            dn2 = math.floor(v)
            dm = math.floor(wcoord)
            if dn1 == 0 and dn2 == 0 and dm == 0:
                break
            adjust = self.compose(GroupWord(dn1, dn2, 0), GroupWord(0, 0, dm))
            word = self.compose(word, adjust)
            rep = group_mul(group_inv(self.element(adjust)), rep)
        return QuotientPoint(rep=rep, word=word)

    def volume(self) -> float:
        """Coordinate volume (dx dy dt) of the fundamental cell: |tau|."""
        return abs(self.tau)

    # -- quotient metric -----------------------------------------------------

    def words_in_radius(self, radius: int):
        rng = range(-radius, radius + 1)
        for n1, n2, m in product(rng, rng, rng):
            yield GroupWord(n1, n2, m)

    def quotient_distance(
        self,
        p: QuotientPoint,
        q: QuotientPoint,
        radius: int = 2,
        return_word: bool = False,
    ):
        """CC distance on the quotient: min over lattice lifts of q.

        Nonincreasing in `radius` and stabilizes once the search window
        exceeds a distance-dependent bound; the minimizing word is returned
        on request so callers can warn when it touches the window boundary.
        """
        if radius < 1:
            raise ValueError(f"radius must be >= 1, got {radius}")
        best = math.inf
        best_word = IDENTITY_WORD
        for w in self.words_in_radius(radius):
            dist = cc_distance(p.rep, self.act(w, q.rep))
            if dist < best:
                best = dist
                best_word = w
        if return_word:
            return best, best_word
        return best

    def homotopy_min_length(
        self,
        p: QuotientPoint,
        q: QuotientPoint,
        cls: GroupWord,
        metric: MetricK = MetricK(1.0),
    ) -> float:
        """Infimum of length over the fixed-endpoint class with deck word cls.

        On the universal cover the class pins the lift of the endpoint, so
        the infimum is exactly the scaled CC distance to that lift; no
        search is involved.
        """
        return cc_distance_scaled(metric, p.rep, self.act(cls, q.rep))


# ---------------------------------------------------------------------------
# polyline reduction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReducedSegment:
    """One straight piece inside the fundamental box, with its deck word."""

    start: tuple[float, float, float]
    end: tuple[float, float, float]
    word: GroupWord
    param_span: tuple[float, float]


def _act_tuple(lattice: LatticeSpec, w: GroupWord, pt) -> tuple[float, float, float]:
    g = lattice.element(w)
    x, y, t = pt
    return (g.x + x, g.y + y, g.t + t + 2.0 * g.y * x - 2.0 * g.x * y)


def reduce_segment(
    lattice: LatticeSpec,
    p0: tuple[float, float, float],
    p1: tuple[float, float, float],
    s0: float,
    s1: float,
    max_splits: int = 256,
) -> list[ReducedSegment]:
    """Split a straight segment at lattice wraps; pieces lie in the box.

    Left translations are affine in coordinates, so each transformed piece
    is again a straight segment and lengths are preserved exactly.
    """
    out: list[ReducedSegment] = []
    for _ in range(max_splits):
        # pick the box from the start point, nudged off faces along the travel
        probe = tuple(pa + 1e-9 * (pb - pa) for pa, pb in zip(p0, p1))
        qp = lattice.reduce(HeisPoint(*probe))
        winv = lattice.invert_word(qp.word)
        a = _act_tuple(lattice, winv, p0)
        b = _act_tuple(lattice, winv, p1)
        # earliest exit of the box in normalized coords (x, y/tau, t)
        ua = (a[0], a[1] / lattice.tau, a[2])
        ub = (b[0], b[1] / lattice.tau, b[2])
        s_exit = 1.0
        for ca, cb in zip(ua, ub):
            dc = cb - ca
            if dc > 0 and cb > 1.0:
                s_exit = min(s_exit, (1.0 - ca) / dc)
            elif dc < 0 and cb < 0.0:
                s_exit = min(s_exit, (0.0 - ca) / dc)
        s_exit = max(s_exit, 0.0)
        cut = tuple(pa + s_exit * (pb - pa) for pa, pb in zip(a, b))
        s_cut = s0 + s_exit * (s1 - s0)
        if s_exit > 0.0:
            out.append(ReducedSegment(start=a, end=cut, word=qp.word, param_span=(s0, s_cut)))
        if s_exit >= 1.0:
            return out
        # continue past the cut; nudge to avoid re-splitting at the same face
        frac = min(1.0, s_exit + 1e-12)
        p0 = tuple(pa + frac * (pb - pa) for pa, pb in zip(p0, p1))
        s0 = s0 + frac * (s1 - s0)
        if frac >= 1.0:
            return out
    raise RuntimeError("segment reduction did not terminate (too many wraps)")


def reduce_polyline(
    lattice: LatticeSpec, curve: LegendrianPolyline
) -> list[tuple[LegendrianPolyline, GroupWord]]:
    """Reduce a cover polyline to in-box pieces, merging runs with equal words."""
    pieces: list[tuple[LegendrianPolyline, GroupWord]] = []
    run_pts: list[tuple[float, float, float]] = []
    run_par: list[float] = []
    run_word: GroupWord | None = None

    def flush():
        nonlocal run_pts, run_par, run_word
        if run_word is not None and len(run_pts) >= 2:
            pieces.append((LegendrianPolyline(run_par, run_pts), run_word))
        run_pts, run_par, run_word = [], [], None

    pts = curve.points
    pars = curve.params
    for i in range(curve.n_segments):
        segs = reduce_segment(
            lattice,
            tuple(pts[i]),
            tuple(pts[i + 1]),
            float(pars[i]),
            float(pars[i + 1]),
        )
        for seg in segs:
            if run_word is not None and seg.word == run_word and run_pts:
                run_pts.append(seg.end)
                run_par.append(seg.param_span[1])
            else:
                flush()
                run_word = seg.word
                run_pts = [seg.start, seg.end]
                run_par = [seg.param_span[0], seg.param_span[1]]
    flush()
    return pieces
