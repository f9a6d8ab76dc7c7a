"""Monotone extension of a mixed-monotone map to a bounding rectangle.

The construction works in a canonical frame where F decreases in x and
increases in y.  Maps with the opposite mixed signature are handled by
swapping coordinates on the way in and out.

The boundary of the domain is split at the four axis-extreme points
(taking flat midpoints, so the split is symmetric under the coordinate
transforms used below) into four chains:

  SW: left extreme -> bottom extreme, x non-decreasing, y non-increasing
  SE: bottom -> right, x and y non-decreasing
  NE: right -> top, x non-increasing, y non-decreasing
  NW: top -> left, x and y non-increasing

The exterior of the domain inside the rectangle is tiled by pieces:

  * below the SW chain: vertical-ray pieces (constant along rays up to
    the boundary) plus graft rectangles next to each vertical flat of
    the chain, where a boundary profile is added to keep continuity;
  * right of / below the SE chain: a windowed-minimum rule — the
    minimum of boundary values between the horizontal and vertical
    projections onto the chain (the two-projection minimum formula,
    generalized to non-convex chains by taking the exact minimum over
    the boundary arc between the projections);
  * left of / above the NW chain: the mirrored windowed-maximum rule;
  * right of the NE chain: horizontal-ray pieces plus grafts (the
    mirror image of the SW side);
  * the two remaining rectangle corners: graft pieces fed by the
    adjacent windowed pieces.

Sector intrusions on the SE chain (boundary backtracking in x while y
still increases) are closed by a vertical chord and filled first —
linear interpolation when the two arc restrictions run in opposite
directions, a windowed minimum when they run in the same direction.
The outer construction then sees the closed domain, reading boundary
values on the chord from the sector fill.

All exterior rules evaluate the base map at exactly-projected boundary
points, so agreement on the domain, continuity across piece borders and
weak monotonicity hold to floating-point accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import (
    NonMonotoneInducedEdge,
    OutsideRect,
    SectorOrderViolation,
    UnsupportedDomain,
)
from .map_model import Box, Direction, MapSpec, MonotoneSignature, DEC_INC, INC_DEC
from .geometry import DomainSpec, DomainKind

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Range-minimum / range-maximum queries over chain value arrays.
# ---------------------------------------------------------------------------


class _SparseTable:
    """O(1) windowed min/max over a fixed array (inclusive index ranges)."""

    def __init__(self, values: np.ndarray):
        v = np.asarray(values, dtype=float)
        self.n = len(v)
        self.mins = [v]
        self.maxs = [v]
        k = 1
        while (1 << k) <= self.n:
            half = 1 << (k - 1)
            prev_min, prev_max = self.mins[-1], self.maxs[-1]
            self.mins.append(np.minimum(prev_min[:-half], prev_min[half:]))
            self.maxs.append(np.maximum(prev_max[:-half], prev_max[half:]))
            k += 1

    def query(self, lo: np.ndarray, hi: np.ndarray, want_max: bool):
        """Vectorized min/max over inclusive [lo, hi]; empty ranges give
        +inf (min) or -inf (max)."""
        lo = np.asarray(lo, dtype=np.int64)
        hi = np.asarray(hi, dtype=np.int64)
        out = np.full(lo.shape, -np.inf if want_max else np.inf)
        ok = lo <= hi
        if not np.any(ok):
            return out
        length = hi[ok] - lo[ok] + 1
        k = np.int64(np.floor(np.log2(length)))
        table = self.maxs if want_max else self.mins
        a = np.empty(length.shape)
        b = np.empty(length.shape)
        for level in np.unique(k):
            m = k == level
            t = table[int(level)]
            a[m] = t[lo[ok][m]]
            b[m] = t[hi[ok][m] - (1 << int(level)) + 1]
        out[ok] = np.maximum(a, b) if want_max else np.minimum(a, b)
        return out


# ---------------------------------------------------------------------------
# Chain tables: refined polylines with boundary values.
# ---------------------------------------------------------------------------


def _insert_breakpoints(pts: np.ndarray, srcs: np.ndarray, valfuncs, tol: float):
    """Refine polyline edges until the boundary value is monotone on each
    edge.  Splits an edge at the interior extremum of the value function
    (found by ternary search) and repeats."""
    srcs = np.asarray(srcs, dtype=int)[: max(len(pts) - 1, 0)]
    for _ in range(12):
        p0, p1 = pts[:-1], pts[1:]
        probes = []
        for lam in (0.25, 0.5, 0.75):
            q = p0 + lam * (p1 - p0)
            probes.append(_eval_src(q[:, 0], q[:, 1], srcs, valfuncs))
        f0 = _eval_src(pts[:-1, 0], pts[:-1, 1], srcs, valfuncs)
        f1 = _eval_src(pts[1:, 0], pts[1:, 1], srcs, valfuncs)
        seq = np.stack([f0] + probes + [f1])
        d = np.diff(seq, axis=0)
        pos = d > tol
        neg = d < -tol
        bad = np.nonzero(np.any(pos, axis=0) & np.any(neg, axis=0))[0]
        if bad.size == 0:
            return pts, srcs
        new_pts = []
        new_srcs = []
        bad_set = set(bad.tolist())
        for i in range(len(pts) - 1):
            new_pts.append(pts[i])
            new_srcs.append(srcs[i])
            if i in bad_set:
                kind = 1 if (np.argmax(seq[:, i]) not in (0, 4)) else -1
                lam = _edge_extremum(pts[i], pts[i + 1], srcs[i], valfuncs, kind)
                new_pts.append(pts[i] + lam * (pts[i + 1] - pts[i]))
                new_srcs.append(srcs[i])
        new_pts.append(pts[-1])
        pts = np.array(new_pts)
        srcs = np.array(new_srcs, dtype=int)
    return pts, srcs


def _edge_extremum(p0, p1, src, valfuncs, kind, iters=120):
    """Ternary search for the value extremum along a straight edge."""
    f = valfuncs[src]
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        m1 = lo + (hi - lo) / 3
        m2 = hi - (hi - lo) / 3
        q1 = p0 + m1 * (p1 - p0)
        q2 = p0 + m2 * (p1 - p0)
        v1 = float(f(np.array([q1[0]]), np.array([q1[1]]))[0])
        v2 = float(f(np.array([q2[0]]), np.array([q2[1]]))[0])
        if kind > 0:  # maximum
            if v1 < v2:
                lo = m1
            else:
                hi = m2
        else:
            if v1 > v2:
                lo = m1
            else:
                hi = m2
    return 0.5 * (lo + hi)


def _eval_src(x, y, srcs, valfuncs):
    """Evaluate points whose values come from different source functions
    (base map or a sector fill, per originating edge)."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape)
    srcs = np.asarray(srcs)
    if srcs.size == 0:
        return out
    for s in np.unique(srcs):
        m = srcs == s
        out[m] = valfuncs[int(s)](x[m], np.asarray(y)[m])
    return out


class _ChainTable:
    """A chain polyline with per-vertex boundary values and windowed
    min/max support.  Coordinates are weakly monotone along the chain."""

    @classmethod
    def from_state(cls, state: dict, valfuncs) -> "_ChainTable":
        obj = cls.__new__(cls)
        obj.xs = np.asarray(state["xs"], dtype=float)
        obj.ys = np.asarray(state["ys"], dtype=float)
        obj.fs = np.asarray(state["fs"], dtype=float)
        obj.edge_srcs = np.asarray(state["edge_srcs"], dtype=int)
        obj.valfuncs = valfuncs
        obj.rmq = _SparseTable(obj.fs)
        return obj

    def __init__(self, pts: np.ndarray, srcs: np.ndarray, valfuncs, tol: float):
        pts, srcs = _dedupe_polyline(pts, srcs, tol)
        pts, srcs = _insert_breakpoints(pts, srcs, valfuncs, tol)
        self.xs = pts[:, 0].copy()
        self.ys = pts[:, 1].copy()
        self.edge_srcs = np.asarray(srcs[: len(pts) - 1], dtype=int)
        self.valfuncs = valfuncs
        # a vertex shared by two sources sits on the domain boundary,
        # where the sources agree; use the incoming edge's source
        vs = (
            np.concatenate([self.edge_srcs[:1], self.edge_srcs])
            if len(self.edge_srcs)
            else np.zeros(len(pts), dtype=int)
        )
        self.fs = _eval_src(self.xs, self.ys, vs, valfuncs)
        self.rmq = _SparseTable(self.fs)

    # crossing helpers -------------------------------------------------

    def _cross(self, coord: np.ndarray, q: np.ndarray, first: bool):
        """Edge index + interpolated point for the first param with
        coord >= q (first=True) or the last with coord <= q."""
        n = len(coord)
        if first:
            i = np.searchsorted(coord, q, side="left")
            i = np.clip(i, 0, n - 1)
            j = np.maximum(i - 1, 0)
            denom = coord[i] - coord[j]
            lam = np.where(denom > 0, (q - coord[j]) / np.where(denom > 0, denom, 1), 1.0)
            lam = np.where(i == 0, 0.0, np.clip(lam, 0.0, 1.0))
            base = np.where(i == 0, 0, j)
            x = self.xs[base] + lam * (self.xs[np.minimum(base + 1, n - 1)] - self.xs[base])
            y = self.ys[base] + lam * (self.ys[np.minimum(base + 1, n - 1)] - self.ys[base])
            interior_from = i  # first vertex at/after the crossing
            edge = np.where(i == 0, 0, j)
            return edge, interior_from, x, y
        else:
            i = np.searchsorted(coord, q, side="right") - 1
            i = np.clip(i, 0, n - 1)
            nxt = np.minimum(i + 1, n - 1)
            denom = coord[nxt] - coord[i]
            lam = np.where(denom > 0, (q - coord[i]) / np.where(denom > 0, denom, 1), 0.0)
            lam = np.where(i == n - 1, 0.0, np.clip(lam, 0.0, 1.0))
            x = self.xs[i] + lam * (self.xs[nxt] - self.xs[i])
            y = self.ys[i] + lam * (self.ys[nxt] - self.ys[i])
            interior_to = i  # last vertex at/before the crossing
            return i, interior_to, x, y

    def value_at(self, edge, x, y):
        return _eval_src(x, y, self.edge_srcs[np.minimum(edge, len(self.edge_srcs) - 1)]
                         if len(self.edge_srcs) else np.zeros_like(x, dtype=int),
                         self.valfuncs)

    def window(self, q_first_coord, q_first, q_last_coord, q_last, want_max):
        """Extremum of the boundary value between the crossing where
        q_first_coord first reaches q_first and the crossing where
        q_last_coord last stays within q_last."""
        coord_a = self.ys if q_first_coord == "y" else self.xs
        coord_b = self.xs if q_last_coord == "x" else self.ys
        ea, ia, xa, ya = self._cross(coord_a, q_first, first=True)
        eb, ib, xb, yb = self._cross(coord_b, q_last, first=False)
        fa = self.value_at(ea, xa, ya)
        fb = self.value_at(eb, xb, yb)
        inner = self.rmq.query(ia, ib, want_max)
        if want_max:
            return np.maximum(np.maximum(fa, fb), inner)
        return np.minimum(np.minimum(fa, fb), inner)

    def to_state(self):
        return {
            "xs": self.xs.tolist(),
            "ys": self.ys.tolist(),
            "fs": self.fs.tolist(),
            "edge_srcs": self.edge_srcs.tolist(),
        }


def _dedupe_polyline(pts, srcs, tol):
    keep = [0]
    for i in range(1, len(pts)):
        if np.hypot(*(pts[i] - pts[keep[-1]])) > 1e-14 + 0 * tol:
            keep.append(i)
    pts2 = pts[keep]
    srcs2 = np.asarray(srcs)[np.minimum(keep, len(srcs) - 1)] if len(srcs) else np.asarray(srcs)
    return pts2, srcs2


def _interp_mono(knot_q, knot_v, q):
    """Piecewise-linear interpolation on weakly monotone increasing
    knots (ties collapse to the earlier knot)."""
    n = len(knot_q)
    i = np.clip(np.searchsorted(knot_q, q, side="left"), 1, n - 1)
    d = knot_q[i] - knot_q[i - 1]
    lam = np.where(d > 0, (q - knot_q[i - 1]) / np.where(d > 0, d, 1), 0.0)
    lam = np.clip(lam, 0.0, 1.0)
    return knot_v[i - 1] + lam * (knot_v[i] - knot_v[i - 1])


# ---------------------------------------------------------------------------
# Sector fills (intrusions on the SE chain).
# ---------------------------------------------------------------------------


class _Sector:
    """A boundary intrusion closed by a vertical chord.

    arc1 runs from the chord bottom to the apex (x decreasing, y
    increasing: its boundary value is forced non-decreasing); arc2 runs
    from the apex back to the chord top (x and y increasing, value
    free).  Filled linearly when arc2's value decreases, by a windowed
    minimum when it increases.
    """

    @classmethod
    def from_state(cls, state: dict, func) -> "_Sector":
        obj = cls.__new__(cls)
        obj.arc1 = np.asarray(state["arc1"], dtype=float)
        obj.arc2 = np.asarray(state["arc2"], dtype=float)
        obj.func = func
        obj.mode = state["mode"]
        obj.chord_x = float(obj.arc1[0, 0])
        obj.y_lo = float(obj.arc1[0, 1])
        obj.y_apex = float(obj.arc1[-1, 1])
        obj.y_hi = float(obj.arc2[-1, 1])
        obj.apex = obj.arc1[-1]
        obj.polygon = np.vstack([obj.arc1, obj.arc2[1:]])
        return obj

    def __init__(self, arc1: np.ndarray, arc2: np.ndarray, func, tol_val: float):
        self.arc1 = arc1  # (n,2), x weakly decreasing, y weakly increasing
        self.arc2 = arc2  # (m,2), x weakly increasing, y weakly increasing
        self.func = func
        self.chord_x = float(arc1[0, 0])
        self.y_lo = float(arc1[0, 1])
        self.y_apex = float(arc1[-1, 1])
        self.y_hi = float(arc2[-1, 1])
        self.apex = arc1[-1]
        self.polygon = np.vstack([arc1, arc2[1:]])
        f2 = np.asarray(func(arc2[:, 0], arc2[:, 1]), dtype=float)
        d2 = np.diff(f2)
        if np.all(d2 >= -tol_val):
            self.mode = "min_window"
        elif np.all(d2 <= tol_val):
            self.mode = "linear"
            # monotone fill needs the upper graph to dominate the lower
            xs = np.linspace(self.apex[0], self.chord_x, 64)
            lo = _interp_mono(self._a1_x(), self._a1_y(), xs)
            hi = _interp_mono(self.arc2[:, 0], self.arc2[:, 1], xs)
            vlo = np.asarray(func(xs, lo), dtype=float)
            vhi = np.asarray(func(xs, hi), dtype=float)
            if np.any(vhi < vlo - tol_val):
                k = int(np.argmin(vhi - vlo))
                raise SectorOrderViolation(
                    f"sector fill would break monotonicity near x={xs[k]:.6g}"
                )
        else:
            raise NonMonotoneInducedEdge(
                "boundary value oscillates along a sector arc"
            )

    # arc1 sorted by increasing x for interpolation
    def _a1_x(self):
        return self.arc1[::-1, 0]

    def _a1_y(self):
        return self.arc1[::-1, 1]

    def lower_y(self, x):
        return _interp_mono(self._a1_x(), self._a1_y(), x)

    def upper_y(self, x):
        return _interp_mono(self.arc2[:, 0], self.arc2[:, 1], x)

    def eval(self, x, y):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if self.mode == "linear":
            y1 = self.lower_y(x)
            y2 = self.upper_y(x)
            g1 = np.asarray(self.func(x, y1), dtype=float)
            g2 = np.asarray(self.func(x, y2), dtype=float)
            d = y2 - y1
            lam = np.where(d > 0, (y - y1) / np.where(d > 0, d, 1), 0.0)
            lam = np.clip(lam, 0.0, 1.0)
            return (1 - lam) * g1 + lam * g2
        # both arc values increase along the boundary, so the windowed
        # minimum over the arc between the two projections collapses to
        # the horizontal projection onto the wedge's far boundary
        ys_all = np.concatenate([self.arc1[:, 1], self.arc2[1:, 1]])
        xs_all = np.concatenate([self.arc1[:, 0], self.arc2[1:, 0]])
        yq = np.clip(y, self.y_lo, self.y_hi)
        xq = _interp_mono(ys_all, xs_all, yq)
        return np.asarray(self.func(xq, yq), dtype=float)

    def contains(self, x, y, tol):
        inx = (x >= self.apex[0] - tol) & (x <= self.chord_x + tol)
        y1 = self.lower_y(np.clip(x, self.apex[0], self.chord_x))
        y2 = self.upper_y(np.clip(x, self.apex[0], self.chord_x))
        return inx & (y >= y1 - tol) & (y <= y2 + tol)

    def to_state(self):
        return {
            "arc1": self.arc1.tolist(),
            "arc2": self.arc2.tolist(),
            "mode": self.mode,
        }


# ---------------------------------------------------------------------------
# Piece bookkeeping.
# ---------------------------------------------------------------------------

RULE_BASE = "base_map"
RULE_RAY_YPLUS = "ray_const_y_plus"
RULE_RAY_XMINUS = "ray_const_x_minus"
RULE_MIN = "min_of_two"
RULE_MAX = "max_of_two"
RULE_GRAFT = "graft"
RULE_LINEAR = "linear_sector"


@dataclass
class ExtensionPiece:
    rule: str
    polygon: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "rule": self.rule,
            "polygon": np.asarray(self.polygon, dtype=float).tolist(),
            "meta": self.meta,
        }


def _poly_area(p: np.ndarray) -> float:
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)))


def _rect_poly(x0, x1, y0, y1):
    return np.array([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], dtype=float)


# ---------------------------------------------------------------------------
# The canonical engine: F decreasing in x, increasing in y.
# ---------------------------------------------------------------------------

_Z_BASE, _Z_SWBAND, _Z_SWCORNER, _Z_SE, _Z_NW, _Z_NEBAND, _Z_NECORNER = range(7)
_Z_SECTOR = 100  # + sector index


class _Engine:
    def __init__(self, func: Callable, omega: np.ndarray, rect: Box,
                 tol_val: float, allow_sectors: bool = True):
        self.func = func
        self.rect = rect
        self.omega = omega  # ccw polyline, no repeated end vertex
        self.tol_val = tol_val
        self.geom_tol = 1e-12 * rect.diam

        self._split_chains()
        self._close_sectors(allow_sectors)
        self._check_chain_monotone()
        self._build_tables()
        self._find_flats()
        self._build_pieces()

    # -- chain construction ---------------------------------------------

    def _split_chains(self):
        pts = self.omega
        self._extremes_raw = _extreme_midpoints(pts, self.geom_tol)

    def _close_sectors(self, allow):
        L, B, R, T, ring = self._extremes_raw
        # ring: polyline starting at L, ccw, ending back at L (not repeated),
        # with L,B,R,T inserted as vertices at indices iL=0, iB, iR, iT.
        self.L, self.B, self.R, self.T = L, B, R, T
        iB, iR, iT = ring["iB"], ring["iR"], ring["iT"]
        pts = np.vstack([ring["pts"], ring["pts"][:1]])  # close the ring
        sw = pts[: iB + 1]
        se = pts[iB : iR + 1]
        ne = pts[iR : iT + 1]
        nw = pts[iT:]
        self.sectors: List[_Sector] = []
        se, se_srcs = self._close_chain_sectors(se, allow)
        self.sw_pts, self.se_pts, self.ne_pts, self.nw_pts = sw, se, ne, nw
        self.se_srcs = se_srcs
        self.valfuncs = [lambda x, y: np.asarray(self.func(x, y), dtype=float)]
        for s in self.sectors:
            self.valfuncs.append(s.eval)

    def _close_chain_sectors(self, se: np.ndarray, allow: bool):
        """Close x-backtracking intrusions on the SE chain with vertical
        chords; each intrusion becomes a sector fill."""
        srcs = np.zeros(max(len(se) - 1, 0), dtype=int)
        guard = 0
        while True:
            xs = se[:, 0]
            viol = np.nonzero(np.diff(xs) < -self.geom_tol)[0]
            if viol.size == 0:
                return se, srcs
            if not allow:
                raise UnsupportedDomain(
                    "domain boundary backtracks; not convex"
                )
            guard += 1
            if guard > 32:
                raise UnsupportedDomain("too many boundary intrusions")
            i = int(viol[0])  # chord bottom at vertex i
            xw = xs[i]
            rest = np.nonzero(xs[i + 1 :] >= xw - self.geom_tol)[0]
            if rest.size == 0:
                raise UnsupportedDomain(
                    "boundary intrusion never recovers in x"
                )
            j = i + 1 + int(rest[0])
            # chord top: interpolate on edge (j-1, j) at x = xw
            if abs(xs[j] - xw) <= self.geom_tol:
                w2 = se[j].copy()
            else:
                lam = (xw - xs[j - 1]) / (xs[j] - xs[j - 1])
                w2 = se[j - 1] + lam * (se[j] - se[j - 1])
            seg = np.vstack([se[i : j], w2[None, :]])
            ys = seg[:, 1]
            if np.any(np.diff(ys) < -self.geom_tol):
                raise UnsupportedDomain(
                    "boundary intrusion is not monotone in y"
                )
            m = int(np.argmin(seg[:, 0]))
            if np.any(np.diff(seg[: m + 1, 0]) > self.geom_tol) or np.any(
                np.diff(seg[m:, 0]) < -self.geom_tol
            ):
                raise UnsupportedDomain("nested boundary intrusions")
            sector = _Sector(seg[: m + 1], seg[m:], self.func, self.tol_val)
            self.sectors.append(sector)
            src_id = len(self.sectors)  # valfuncs index
            se = np.vstack([se[: i + 1], w2[None, :], se[j:]]) if abs(
                xs[j] - xw
            ) > self.geom_tol else np.vstack([se[: i + 1], se[j:]])
            srcs = np.concatenate(
                [srcs[:i], [src_id], np.zeros(len(se) - i - 2, dtype=int)]
            )

    def _check_chain_monotone(self):
        checks = [
            (self.sw_pts, 1, -1, "lower-left"),
            (self.se_pts, 1, 1, "lower-right"),
            (self.ne_pts, -1, 1, "upper-right"),
            (self.nw_pts, -1, -1, "upper-left"),
        ]
        for pts, sx, sy, name in checks:
            if np.any(sx * np.diff(pts[:, 0]) < -self.geom_tol) or np.any(
                sy * np.diff(pts[:, 1]) < -self.geom_tol
            ):
                raise UnsupportedDomain(
                    f"{name} boundary chain is not monotone; this domain "
                    "shape is not supported"
                )

    # -- tables -----------------------------------------------------------

    def _build_tables(self):
        vf = self.valfuncs
        tol = self.tol_val
        srcs0 = lambda p: np.zeros(max(len(p) - 1, 0), dtype=int)
        self.t_se = _ChainTable(self.se_pts, self.se_srcs, vf, tol)
        nw_rev = self.nw_pts[::-1].copy()  # L -> T, x and y non-decreasing
        self.t_nw = _ChainTable(nw_rev, srcs0(nw_rev), vf, tol)
        self.t_sw = _ChainTable(self.sw_pts, srcs0(self.sw_pts), vf, tol)
        ne = self.ne_pts[::-1].copy()  # T -> R: y decreasing; use R -> T
        self.t_ne = _ChainTable(self.ne_pts, srcs0(self.ne_pts), vf, tol)
        # left / right boundary walls as x-of-y knot tables
        left = np.vstack([self.sw_pts[::-1], nw_rev[1:]])  # B -> L -> T
        right = np.vstack([self.se_pts, self.ne_pts[1:]])  # B -> R -> T
        self.wall_left_y = left[:, 1]
        self.wall_left_x = left[:, 0]
        self.wall_right_y = right[:, 1]
        self.wall_right_x = right[:, 0]

    def _find_flats(self):
        g = 1e-9 * self.rect.diam
        # vertical flats of the SW chain (top, bottom per flat)
        self.sw_flats = []
        pts = self.t_sw
        i = 0
        xs, ys = pts.xs, pts.ys
        while i < len(xs) - 1:
            if abs(xs[i + 1] - xs[i]) <= g and ys[i + 1] < ys[i] - g:
                j = i + 1
                while j < len(xs) - 1 and abs(xs[j + 1] - xs[j]) <= g and ys[j + 1] < ys[j]:
                    j += 1
                self.sw_flats.append((float(xs[i]), float(ys[i]), float(ys[j])))
                i = j
            else:
                i += 1
        # horizontal flats of the NE chain (traversed R -> T, x decreasing)
        self.ne_flats = []
        xs, ys = self.t_ne.xs, self.t_ne.ys
        i = 0
        while i < len(xs) - 1:
            if abs(ys[i + 1] - ys[i]) <= g and xs[i + 1] < xs[i] - g:
                j = i + 1
                while j < len(xs) - 1 and abs(ys[j + 1] - ys[j]) <= g and xs[j + 1] < xs[j]:
                    j += 1
                # (height, left end, right end)
                self.ne_flats.append((float(ys[i]), float(xs[j]), float(xs[i])))
                i = j
            else:
                i += 1

    # -- zone classification ----------------------------------------------

    def classify(self, x, y):
        L, B, R, T = self.L, self.B, self.R, self.T
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        code = np.full(x.shape, _Z_BASE, dtype=int)
        above = y > T[1]
        below = y < B[1]
        mid = ~(above | below)
        code[above & (x < T[0])] = _Z_NW
        code[above & (x >= T[0])] = _Z_NECORNER
        code[below & (x < L[0])] = _Z_SWCORNER
        code[below & (x >= L[0]) & (x <= B[0])] = _Z_SWBAND
        code[below & (x > B[0])] = _Z_SE
        if np.any(mid):
            ym = y[mid]
            xl = _interp_mono(self.wall_left_y, self.wall_left_x, ym)
            xr = _interp_mono(self.wall_right_y, self.wall_right_x, ym)
            xm = x[mid]
            sub = np.full(xm.shape, _Z_BASE, dtype=int)
            left_of = xm < xl
            right_of = xm > xr
            sub[left_of & (ym >= L[1])] = _Z_NW
            sub[left_of & (ym < L[1]) & (xm < L[0])] = _Z_SWCORNER
            sub[left_of & (ym < L[1]) & (xm >= L[0])] = _Z_SWBAND
            sub[right_of & (ym <= R[1])] = _Z_SE
            sub[right_of & (ym > R[1])] = _Z_NEBAND
            code[mid] = sub
        # points inside the closed domain may actually lie in a sector
        if self.sectors:
            base = code == _Z_BASE
            if np.any(base):
                xb, yb = x[base], y[base]
                sub = code[base]
                for k, s in enumerate(self.sectors):
                    hit = s.contains(xb, yb, 0.0) & (sub == _Z_BASE)
                    # sector polygons overlap the base region only on arcs
                    inside_sector = hit & ~_point_in_poly(
                        xb, yb, self.omega
                    )
                    sub[inside_sector] = _Z_SECTOR + k
                code[base] = sub
        return code

    # -- evaluation ---------------------------------------------------------

    def eval(self, x, y):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.empty(x.shape)
        code = self.classify(x, y)
        m = code == _Z_BASE
        if np.any(m):
            out[m] = self.func(x[m], y[m])
        m = code == _Z_SWBAND
        if np.any(m):
            out[m] = self._eval_sw(x[m], y[m], corner=False)
        m = code == _Z_SWCORNER
        if np.any(m):
            out[m] = self._eval_sw(x[m], y[m], corner=True)
        m = code == _Z_SE
        if np.any(m):
            out[m] = self.t_se.window("y", y[m], "x", x[m], want_max=False)
        m = code == _Z_NW
        if np.any(m):
            out[m] = self._eval_nw(x[m], y[m])
        m = code == _Z_NEBAND
        if np.any(m):
            out[m] = self._eval_ne(x[m], y[m], corner=False)
        m = code == _Z_NECORNER
        if np.any(m):
            out[m] = self._eval_ne(x[m], y[m], corner=True)
        for k, s in enumerate(self.sectors):
            m = code == _Z_SECTOR + k
            if np.any(m):
                out[m] = s.eval(x[m], y[m])
        return out

    def _eval_nw(self, x, y):
        return self.t_nw.window("x", x, "y", y, want_max=True)

    def _sw_graft_terms(self, x, y, all_flats):
        total = np.zeros(x.shape)
        for (e, yt, yb) in self.sw_flats:
            # inclusive: at x == e the projection hits the flat top, and
            # the graft term restores the value on the flat itself
            active = (x <= e) if not all_flats else np.ones(x.shape, dtype=bool)
            if not np.any(active):
                continue
            yc = np.clip(y[active], yb, yt)
            ecol = np.full(yc.shape, e)
            term = np.asarray(self.func(ecol, yc), dtype=float) - float(
                self.func(np.array([e]), np.array([yt]))[0]
            )
            total[active] += term
        return total

    def _eval_sw(self, x, y, corner: bool):
        if corner:
            base = self._eval_nw(x, np.full(x.shape, self.L[1]))
            return base + self._sw_graft_terms(x, y, all_flats=True)
        # vertical projection up onto the SW chain; at a flat this takes
        # the limit from the left (the flat top), matching the grafts
        t = self.t_sw
        yy = _interp_mono(t.xs, t.ys, x)
        base = np.asarray(self.func(x, yy), dtype=float)
        return base + self._sw_graft_terms(x, y, all_flats=False)

    def _ne_graft_terms(self, x, y, all_flats):
        total = np.zeros(x.shape)
        for (h, xl, xr) in self.ne_flats:
            # strict: at y == h the projection already sits at the flat's
            # right end, which is the correct boundary value there
            active = (y > h) if not all_flats else np.ones(x.shape, dtype=bool)
            if not np.any(active):
                continue
            xc = np.clip(x[active], xl, xr)
            hrow = np.full(xc.shape, h)
            term = np.asarray(self.func(xc, hrow), dtype=float) - float(
                self.func(np.array([xl]), np.array([h]))[0]
            )
            total[active] += term
        return total

    def _eval_ne(self, x, y, corner: bool):
        if corner:
            base = self._eval_nw(np.full(y.shape, self.T[0]), y)
            return base + self._ne_graft_terms(x, y, all_flats=True)
        # horizontal projection left onto the NE chain (table R -> T has
        # y non-decreasing, x non-increasing); at a flat this takes the
        # limit from below (the flat's right end), matching the grafts
        t = self.t_ne
        xx = _interp_mono(t.ys, t.xs, y)
        base = np.asarray(self.func(xx, y), dtype=float)
        return base + self._ne_graft_terms(x, y, all_flats=False)

    # -- piece polygons -----------------------------------------------------

    def _build_pieces(self):
        r = self.rect
        X0, X1, Y0, Y1 = r.x0, r.x1, r.y0, r.y1
        L, B, R, T = self.L, self.B, self.R, self.T
        g = 1e-9 * r.diam
        pieces: List[ExtensionPiece] = [
            ExtensionPiece(RULE_BASE, self.omega, {"zone": "domain"})
        ]
        for k, s in enumerate(self.sectors):
            pieces.append(
                ExtensionPiece(
                    RULE_LINEAR if s.mode == "linear" else RULE_MIN,
                    s.polygon,
                    {"zone": "sector", "index": k},
                )
            )

        def add(rule, poly, **meta):
            poly = np.asarray(poly, dtype=float)
            if len(poly) >= 3 and _poly_area(poly) > g * g:
                pieces.append(ExtensionPiece(rule, poly, meta))

        # SW side: slabs between vertical flats
        edges = [L[0]] + [e for e, _, _ in self.sw_flats] + [B[0]]
        tops = [yt for _, yt, _ in self.sw_flats]
        chain = np.column_stack([self.t_sw.xs, self.t_sw.ys])
        for j in range(len(edges) - 1):
            a, b = edges[j], edges[j + 1]
            if b - a <= g:
                continue
            floor = tops[j] if j < len(self.sw_flats) else Y0
            part = chain[(chain[:, 0] >= a - g) & (chain[:, 0] <= b + g)]
            part = _trim_runs(part, axis=0, lo=a, hi=b, g=g)
            poly = np.vstack([[(a, floor), (b, floor)], part[::-1]])
            add(RULE_RAY_YPLUS, poly, zone="south_ray", slab=j)
            if floor > Y0 + g:
                add(RULE_GRAFT, _rect_poly(a, b, Y0, floor), zone="south_graft")
        if L[0] - X0 > g and L[1] - Y0 > g:
            add(RULE_GRAFT, _rect_poly(X0, L[0], Y0, L[1]), zone="southwest_corner")

        # SE windowed piece
        se_chain = np.column_stack([self.t_se.xs, self.t_se.ys])
        poly = np.vstack([[(B[0], Y0), (X1, Y0), (X1, R[1])], se_chain[::-1]])
        add(RULE_MIN, poly, zone="southeast")

        # NW windowed piece
        nw_chain = np.column_stack([self.t_nw.xs, self.t_nw.ys])  # L -> T
        poly = [(X0, L[1])] if L[0] - X0 > g else []
        poly = np.vstack(
            [np.array(poly + [(L[0], L[1])]), nw_chain[1:], [(T[0], Y1), (X0, Y1)]]
        )
        add(RULE_MAX, poly, zone="northwest")

        # NE side: slabs between horizontal flats (chain R -> T)
        hs = [R[1]] + [h for h, _, _ in self.ne_flats] + [T[1]]
        walls = [xr for _, _, xr in self.ne_flats]
        chain = np.column_stack([self.t_ne.xs, self.t_ne.ys])
        for j in range(len(hs) - 1):
            a, b = hs[j], hs[j + 1]
            if b - a <= g:
                continue
            wall = walls[j] if j < len(self.ne_flats) else X1
            part = chain[(chain[:, 1] >= a - g) & (chain[:, 1] <= b + g)]
            part = _trim_runs(part, axis=1, lo=a, hi=b, g=g)
            poly = np.vstack([part, [(wall, b), (wall, a)]])
            add(RULE_RAY_XMINUS, poly, zone="east_ray", slab=j)
            if X1 - wall > g:
                add(RULE_GRAFT, _rect_poly(wall, X1, a, b), zone="east_graft")
        if X1 - T[0] > g and Y1 - T[1] > g:
            add(RULE_GRAFT, _rect_poly(T[0], X1, T[1], Y1), zone="northeast_corner")

        self.pieces = pieces

    def to_state(self):
        return {
            "omega": self.omega.tolist(),
            "extremes": {
                "L": list(map(float, self.L)),
                "B": list(map(float, self.B)),
                "R": list(map(float, self.R)),
                "T": list(map(float, self.T)),
            },
            "sw_flats": self.sw_flats,
            "ne_flats": self.ne_flats,
            "tables": {
                "se": self.t_se.to_state(),
                "nw": self.t_nw.to_state(),
                "sw": self.t_sw.to_state(),
                "ne": self.t_ne.to_state(),
            },
            "sectors": [s.to_state() for s in self.sectors],
        }

    @classmethod
    def from_state(cls, state: dict, func: Callable, rect: Box,
                   tol_val: float) -> "_Engine":
        """Rebuild an evaluator from serialized state, skipping all the
        geometric construction and validation."""
        eng = cls.__new__(cls)
        eng.func = func
        eng.rect = rect
        eng.omega = np.asarray(state["omega"], dtype=float)
        eng.tol_val = tol_val
        eng.geom_tol = 1e-12 * rect.diam
        ex = state["extremes"]
        eng.L = np.asarray(ex["L"], dtype=float)
        eng.B = np.asarray(ex["B"], dtype=float)
        eng.R = np.asarray(ex["R"], dtype=float)
        eng.T = np.asarray(ex["T"], dtype=float)
        eng.sw_flats = [tuple(map(float, f)) for f in state["sw_flats"]]
        eng.ne_flats = [tuple(map(float, f)) for f in state["ne_flats"]]
        eng.sectors = [_Sector.from_state(s, func) for s in state["sectors"]]
        eng.valfuncs = [lambda x, y: np.asarray(func(x, y), dtype=float)]
        for s in eng.sectors:
            eng.valfuncs.append(s.eval)
        t = state["tables"]
        eng.t_se = _ChainTable.from_state(t["se"], eng.valfuncs)
        eng.t_nw = _ChainTable.from_state(t["nw"], eng.valfuncs)
        eng.t_sw = _ChainTable.from_state(t["sw"], eng.valfuncs)
        eng.t_ne = _ChainTable.from_state(t["ne"], eng.valfuncs)
        # boundary walls as x-of-y knot tables (B -> L -> T, B -> R -> T)
        lx = np.concatenate([eng.t_sw.xs[::-1], eng.t_nw.xs[1:]])
        ly = np.concatenate([eng.t_sw.ys[::-1], eng.t_nw.ys[1:]])
        rx = np.concatenate([eng.t_se.xs, eng.t_ne.xs[1:]])
        ry = np.concatenate([eng.t_se.ys, eng.t_ne.ys[1:]])
        eng.wall_left_x, eng.wall_left_y = lx, ly
        eng.wall_right_x, eng.wall_right_y = rx, ry
        eng.pieces = []
        return eng


def _trim_runs(part: np.ndarray, axis: int, lo: float, hi: float, g: float):
    """Drop redundant vertices of a flat run at the slab boundaries so
    slab polygons do not grow degenerate spurs."""
    while len(part) >= 2 and abs(part[0, axis] - lo) <= g and abs(
        part[1, axis] - lo
    ) <= g:
        part = part[1:]
    while len(part) >= 2 and abs(part[-1, axis] - hi) <= g and abs(
        part[-2, axis] - hi
    ) <= g:
        part = part[:-1]
    return part


def _point_in_poly(x, y, poly):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = np.zeros(x.shape, dtype=bool)
    x0s, y0s = poly[:, 0], poly[:, 1]
    x1s, y1s = np.roll(x0s, -1), np.roll(y0s, -1)
    for ex0, ey0, ex1, ey1 in zip(x0s, y0s, x1s, y1s):
        cond = (ey0 > y) != (ey1 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = ex0 + (y - ey0) * (ex1 - ex0) / (ey1 - ey0)
        inside ^= cond & (x < xi)
    return inside


def _extreme_midpoints(pts: np.ndarray, g: float):
    """Locate the four axis-extreme boundary points (flat midpoints) and
    return the ring re-rooted at the left extreme with all four inserted
    as vertices."""
    n = len(pts)

    def flat_mid(coord_idx, pick_min, run_pick_min):
        """Midpoint of the extreme flat.  When an intrusion splits the
        extreme set into several boundary runs, pick the run that keeps
        the intrusion on the chain able to absorb it (the SE chain),
        selected by the other coordinate."""
        c = pts[:, coord_idx]
        target = c.min() if pick_min else c.max()
        on = np.abs(c - target) <= g
        idx = np.nonzero(on)[0]
        # group into cyclically contiguous runs of boundary indices
        runs = [[idx[0]]]
        for i in idx[1:]:
            if i == runs[-1][-1] + 1:
                runs[-1].append(i)
            else:
                runs.append([i])
        if len(runs) > 1 and runs[0][0] == 0 and runs[-1][-1] == n - 1:
            runs[0] = runs.pop() + runs[0]
        other = pts[:, 1 - coord_idx]
        key = [other[r].min() if run_pick_min else other[r].max() for r in runs]
        run = runs[int(np.argmin(key) if run_pick_min else np.argmax(key))]
        lo, hi = other[run].min(), other[run].max()
        p = np.empty(2)
        p[coord_idx] = target
        p[1 - coord_idx] = 0.5 * (lo + hi)
        return p

    L = flat_mid(0, True, True)
    B = flat_mid(1, True, True)
    R = flat_mid(0, False, False)
    T = flat_mid(1, False, False)

    # insert each extreme point into the ring if not already a vertex
    ring = pts.copy()
    for p in (L, B, R, T):
        d = np.hypot(ring[:, 0] - p[0], ring[:, 1] - p[1])
        if d.min() <= g:
            continue
        # find the edge containing p
        a = ring
        b = np.roll(ring, -1, axis=0)
        t_num = (p[0] - a[:, 0]) * (b[:, 0] - a[:, 0]) + (p[1] - a[:, 1]) * (
            b[:, 1] - a[:, 1]
        )
        L2 = np.sum((b - a) ** 2, axis=1)
        tt = np.where(L2 > 0, t_num / np.where(L2 > 0, L2, 1), 0.0)
        tt = np.clip(tt, 0.0, 1.0)
        proj = a + tt[:, None] * (b - a)
        dist = np.hypot(proj[:, 0] - p[0], proj[:, 1] - p[1])
        k = int(np.argmin(dist))
        if dist[k] > 1e3 * g:
            raise UnsupportedDomain("extreme point off the boundary")
        ring = np.vstack([ring[: k + 1], p[None, :], ring[k + 1 :]])

    def vindex(p):
        d = np.hypot(ring[:, 0] - p[0], ring[:, 1] - p[1])
        return int(np.argmin(d))

    iL = vindex(L)
    ring = np.roll(ring, -iL, axis=0)
    iB, iR, iT = vindex(B), vindex(R), vindex(T)
    # extremes may coincide (e.g. leftmost vertex is also the topmost);
    # a top extreme equal to the left one wraps to the end of the ring
    if iT == 0:
        iT = len(ring)
    if iR == 0 and iB > 0:
        raise UnsupportedDomain(
            "boundary extreme points are not in counterclockwise order"
        )
    if not (0 <= iB <= iR <= iT <= len(ring)):
        raise UnsupportedDomain(
            "boundary extreme points are not in counterclockwise order"
        )
    return L, B, R, T, {"pts": ring, "iB": iB, "iR": iR, "iT": iT}


# ---------------------------------------------------------------------------
# Public objects and operations.
# ---------------------------------------------------------------------------


@dataclass
class ExtensionAudit:
    continuity_ok: bool
    agreement_ok: bool
    monotone_ok: bool
    nice_ok: bool
    max_jump: float
    max_disagreement: float
    n_monotone_violations: int
    range_inflation: float
    witnesses: dict = field(default_factory=dict)

    @property
    def all_ok(self) -> bool:
        return (
            self.continuity_ok
            and self.agreement_ok
            and self.monotone_ok
            and self.nice_ok
        )

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "continuity_ok": self.continuity_ok,
            "agreement_ok": self.agreement_ok,
            "monotone_ok": self.monotone_ok,
            "nice_ok": self.nice_ok,
            "max_jump": self.max_jump,
            "max_disagreement": self.max_disagreement,
            "n_monotone_violations": self.n_monotone_violations,
            "range_inflation": self.range_inflation,
            "all_ok": self.all_ok,
            "witnesses": {k: list(map(float, v)) for k, v in self.witnesses.items()},
        }


class ExtendedMap:
    """Piecewise evaluator for the extension of a map to a rectangle."""

    def __init__(self, base: MapSpec, rect: Box, domain: Optional[DomainSpec],
                 engine: Optional[_Engine], swapped: bool, mode: str = "nice"):
        self.base = base
        self.rect = rect
        self.domain = domain
        self.engine = engine
        self.swapped = swapped
        self.mode = mode
        if engine is None:
            self.pieces = [
                ExtensionPiece(RULE_BASE, _rect_poly(rect.x0, rect.x1, rect.y0, rect.y1),
                               {"zone": "rectangle"})
            ]
        else:
            self.pieces = [self._unswap_piece(p) for p in engine.pieces]

    def _unswap_piece(self, p: ExtensionPiece) -> ExtensionPiece:
        if not self.swapped:
            return p
        poly = np.asarray(p.polygon, dtype=float)[:, ::-1][::-1].copy()
        return ExtensionPiece(p.rule, poly, p.meta)

    # evaluation -----------------------------------------------------------

    def eval(self, x, y):
        scalar = np.isscalar(x) and np.isscalar(y)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        r = self.rect
        pad = 1e-9 * r.diam
        if np.any(x < r.x0 - pad) or np.any(x > r.x1 + pad) or np.any(
            y < r.y0 - pad
        ) or np.any(y > r.y1 + pad):
            raise OutsideRect("evaluation point outside the extension rectangle")
        x = np.clip(x, r.x0, r.x1)
        y = np.clip(y, r.y0, r.y1)
        if self.engine is None:
            out = np.asarray(self.base(x, y), dtype=float)
        elif self.swapped:
            out = self.engine.eval(y, x)
        else:
            out = self.engine.eval(x, y)
        out = np.asarray(out, dtype=float)
        return float(out[0]) if scalar else out

    __call__ = eval

    # serialization ----------------------------------------------------------

    def to_dict(self):
        d = {
            "schema_version": SCHEMA_VERSION,
            "kind": "extended_map",
            "mode": self.mode,
            "swapped": self.swapped,
            "rect": list(self.rect.as_tuple()),
            "map": {
                "name": self.base.name,
                "signature": str(self.base.signature),
                "params": dict(self.base.params),
            },
            "pieces": [p.to_dict() for p in self.pieces],
        }
        if hasattr(self, "base_range"):
            d["base_range"] = list(self.base_range)
        if self.engine is not None:
            d["engine"] = self.engine.to_state()
        return d

    @classmethod
    def from_dict(cls, data: dict, base: MapSpec) -> "ExtendedMap":
        """Rebuild an evaluator from :meth:`to_dict` output plus the base
        map callable, without redoing the geometric construction."""
        if data.get("kind") != "extended_map":
            raise ValueError("not a serialized extended map")
        rect = Box(*data["rect"])
        swapped = bool(data["swapped"])
        if "engine" not in data:
            ext = cls(base, rect, None, None, swapped=False,
                      mode=data.get("mode", "nice"))
            return ext
        if swapped:
            func = lambda x, y: np.asarray(base(y, x), dtype=float)
            crect = Box(rect.y0, rect.y1, rect.x0, rect.x1)
        else:
            func = lambda x, y: np.asarray(base(x, y), dtype=float)
            crect = rect
        engine = _Engine.from_state(data["engine"], func, crect, 1e-12)
        ext = cls.__new__(cls)
        ext.base = base
        ext.rect = rect
        ext.domain = None
        ext.engine = engine
        ext.swapped = swapped
        ext.mode = data.get("mode", "nice")
        ext.pieces = [
            ExtensionPiece(p["rule"], np.asarray(p["polygon"], dtype=float),
                           dict(p["meta"]))
            for p in data["pieces"]
        ]
        engine.pieces = [
            ExtensionPiece(p.rule, p.polygon[:, ::-1][::-1].copy(), p.meta)
            for p in ext.pieces
        ] if swapped else list(ext.pieces)
        if "base_range" in data:
            ext.base_range = tuple(data["base_range"])
        return ext


def _canonical_problem(map_spec: MapSpec, domain: DomainSpec):
    """Return (func, polyline, rect, swapped) in the canonical frame
    where the map decreases in x and increases in y."""
    sig = map_spec.signature
    if not sig.is_mixed:
        raise UnsupportedDomain(
            "extension requires a mixed-monotone map signature"
        )
    x0, x1, y0, y1 = domain.bbox
    rect = Box(x0, x1, y0, y1)
    if sig == DEC_INC:
        return map_spec, domain.vertices.copy(), rect, False
    # swap frame: F_hat(x, y) = F(y, x) is decreasing in x, increasing in y
    func = lambda x, y: map_spec(y, x)
    pts = domain.vertices[:, ::-1][::-1].copy()
    rect_s = Box(y0, y1, x0, x1)
    return func, pts, rect_s, True


def _sampled_range(map_spec: MapSpec, domain: DomainSpec, n: int = 120):
    x0, x1, y0, y1 = domain.bbox
    gx = np.linspace(x0, x1, n)
    gy = np.linspace(y0, y1, n)
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    inside = domain.contains(X.ravel(), Y.ravel()) >= 0
    vals = np.asarray(map_spec(X.ravel()[inside], Y.ravel()[inside]), dtype=float)
    bx = domain.vertices[:, 0]
    by = domain.vertices[:, 1]
    bv = np.asarray(map_spec(bx, by), dtype=float)
    allv = np.concatenate([vals, bv])
    return float(allv.min()), float(allv.max())


def extend_rectangle(map_spec: MapSpec, rect: Box) -> ExtendedMap:
    """The trivial extension: on a rectangle the map is its own extension."""
    return ExtendedMap(map_spec, rect, None, None, swapped=False)


def extend_convex(map_spec: MapSpec, domain: DomainSpec) -> ExtendedMap:
    kind = domain.classify()
    if kind == DomainKind.RECTANGLE:
        x0, x1, y0, y1 = domain.bbox
        return extend_rectangle(map_spec, Box(x0, x1, y0, y1))
    if kind != DomainKind.CONVEX:
        raise UnsupportedDomain(f"domain is {kind.value}, not convex")
    return _build_extension(map_spec, domain, allow_sectors=False)


def extend_semiconvex(map_spec: MapSpec, domain: DomainSpec) -> ExtendedMap:
    kind = domain.classify()
    if kind == DomainKind.RECTANGLE:
        x0, x1, y0, y1 = domain.bbox
        return extend_rectangle(map_spec, Box(x0, x1, y0, y1))
    if kind == DomainKind.UNSUPPORTED:
        raise UnsupportedDomain("domain failed the exterior-ray test")
    return _build_extension(map_spec, domain, allow_sectors=True)


def _build_extension(map_spec, domain, allow_sectors):
    func, pts, rect, swapped = _canonical_problem(map_spec, domain)
    lo, hi = _sampled_range(map_spec, domain)
    tol_val = 1e-12 * max(1.0, hi - lo)
    engine = _Engine(
        lambda x, y: np.asarray(func(x, y), dtype=float),
        pts,
        rect,
        tol_val,
        allow_sectors=allow_sectors,
    )
    ext_rect = Box(*domain.bbox)
    ext = ExtendedMap(map_spec, ext_rect, domain, engine, swapped)
    ext.base_range = (lo, hi)
    return ext


def eval_extended(ext: ExtendedMap, p) -> float:
    """Single-point evaluation honoring the boundary-band convention:
    points inside or within the boundary band of the domain evaluate
    through the base map."""
    x, y = float(p[0]), float(p[1])
    if ext.domain is not None and int(
        np.atleast_1d(ext.domain.contains(np.array([x]), np.array([y])))[0]
    ) >= 0:
        return float(np.asarray(ext.base(x, y)).ravel()[0])
    return float(ext.eval(x, y))


def audit_extension(ext: ExtendedMap, grid_n: int = 100, rng=None,
                    tol_cont: Optional[float] = None,
                    tol_mono: Optional[float] = None,
                    tol_range: Optional[float] = None) -> ExtensionAudit:
    """Check continuity across piece borders, agreement on the domain,
    monotonicity on the rectangle, and range preservation."""
    rng = np.random.default_rng(0) if rng is None else rng
    r = ext.rect
    if ext.domain is not None and hasattr(ext, "base_range"):
        lo, hi = ext.base_range
    else:
        gx = np.linspace(r.x0, r.x1, grid_n)
        gy = np.linspace(r.y0, r.y1, grid_n)
        X, Y = np.meshgrid(gx, gy, indexing="ij")
        V = ext.eval(X.ravel(), Y.ravel())
        lo, hi = float(V.min()), float(V.max())
    spread = max(hi - lo, 1e-12)
    tol_cont = 1e-7 * spread if tol_cont is None else tol_cont
    tol_mono = 1e-9 * spread if tol_mono is None else tol_mono
    tol_range = 1e-6 * spread if tol_range is None else tol_range
    witnesses = {}

    # (C1) continuity: sample along every piece edge, compare both sides.
    # The offset is kept tiny so that steep-but-continuous slopes (e.g.
    # near a nearly vertical boundary chord) do not read as jumps.
    eps = 5e-13 * r.diam
    pa_all, pb_all, mid_all = [], [], []
    ts = np.linspace(0.08, 0.92, 9)
    for piece in ext.pieces:
        poly = np.asarray(piece.polygon, dtype=float)
        p0 = poly
        p1 = np.roll(poly, -1, axis=0)
        seg = p1 - p0
        ln = np.hypot(seg[:, 0], seg[:, 1])
        keep = ln > 1e4 * eps
        if not np.any(keep):
            continue
        p0, seg, ln = p0[keep], seg[keep], ln[keep]
        mid = p0[:, None, :] + ts[None, :, None] * seg[:, None, :]
        nrm = np.stack([-seg[:, 1], seg[:, 0]], axis=1) / ln[:, None]
        pa = (mid + eps * nrm[:, None, :]).reshape(-1, 2)
        pb = (mid - eps * nrm[:, None, :]).reshape(-1, 2)
        pa_all.append(pa)
        pb_all.append(pb)
        mid_all.append(mid.reshape(-1, 2))
    pa = np.concatenate(pa_all)
    pb = np.concatenate(pb_all)
    mid = np.concatenate(mid_all)
    ok = (
        (pa[:, 0] >= r.x0) & (pa[:, 0] <= r.x1)
        & (pa[:, 1] >= r.y0) & (pa[:, 1] <= r.y1)
        & (pb[:, 0] >= r.x0) & (pb[:, 0] <= r.x1)
        & (pb[:, 1] >= r.y0) & (pb[:, 1] <= r.y1)
    )
    max_jump = 0.0
    if np.any(ok):
        va = ext.eval(pa[ok, 0], pa[ok, 1])
        vb = ext.eval(pb[ok, 0], pb[ok, 1])
        jumps = np.abs(va - vb)
        k = int(np.argmax(jumps))
        max_jump = float(jumps[k])
        witnesses["continuity"] = (mid[ok][k][0], mid[ok][k][1], max_jump)
    continuity_ok = max_jump <= tol_cont

    # (C2) agreement with the base map on the domain
    max_dis = 0.0
    if ext.domain is None:
        pass
    else:
        x0, x1, y0, y1 = ext.domain.bbox
        pts = []
        while len(pts) < 400:
            cand = np.column_stack(
                [rng.uniform(x0, x1, 400), rng.uniform(y0, y1, 400)]
            )
            inside = ext.domain.contains(cand[:, 0], cand[:, 1]) == 1
            pts.extend(cand[inside].tolist())
        pts = np.array(pts[:400])
        ve = ext.eval(pts[:, 0], pts[:, 1])
        vb = np.asarray(ext.base(pts[:, 0], pts[:, 1]), dtype=float)
        max_dis = float(np.max(np.abs(ve - vb)))
    agreement_ok = max_dis == 0.0 or max_dis <= 1e-14 * max(1.0, spread)

    # (C3) monotonicity on the whole rectangle
    gx = np.linspace(r.x0, r.x1, grid_n)
    gy = np.linspace(r.y0, r.y1, grid_n)
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    V = ext.eval(X.ravel(), Y.ravel()).reshape(grid_n, grid_n)
    sx = ext.base.signature.first.sign
    sy = ext.base.signature.second.sign
    dx = sx * np.diff(V, axis=0)
    dy = sy * np.diff(V, axis=1)
    n_viol = int(np.sum(dx < -tol_mono) + np.sum(dy < -tol_mono))
    worst = min(float(dx.min(initial=0.0)), float(dy.min(initial=0.0)))
    monotone_ok = n_viol == 0
    if not monotone_ok:
        witnesses["monotone"] = (0.0, 0.0, worst)

    # (Nice) range preservation
    inflation = max(lo - float(V.min()), float(V.max()) - hi, 0.0)
    nice_ok = inflation <= tol_range

    return ExtensionAudit(
        continuity_ok,
        agreement_ok,
        monotone_ok,
        nice_ok,
        max_jump,
        max_dis,
        n_viol,
        inflation,
        witnesses,
    )
