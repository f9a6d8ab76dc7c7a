"""Core model types: planar maps F(x, y), monotone signatures, orders.

A second-order difference equation x_{n+1} = F(x_n, x_{n-1}) is studied
through the companion planar map T(x, y) = (F(x, y), x).  Everything in
this module is signature bookkeeping and small numerics (finite
difference Jacobians, grid monotonicity audits, partial-order compares).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .errors import NonFiniteValue


class Direction(Enum):
    INCREASING = 1
    DECREASING = -1

    @property
    def sign(self) -> int:
        return self.value


@dataclass(frozen=True)
class MonotoneSignature:
    """Monotonicity of F in each argument, e.g. (INCREASING, DECREASING)."""

    first: Direction
    second: Direction

    @property
    def is_mixed(self) -> bool:
        return self.first != self.second

    def swapped(self) -> "MonotoneSignature":
        return MonotoneSignature(self.second, self.first)

    def as_tuple(self) -> tuple[int, int]:
        return (self.first.sign, self.second.sign)

    def __str__(self) -> str:
        arrow = {Direction.INCREASING: "inc", Direction.DECREASING: "dec"}
        return f"({arrow[self.first]},{arrow[self.second]})"


INC_DEC = MonotoneSignature(Direction.INCREASING, Direction.DECREASING)
DEC_INC = MonotoneSignature(Direction.DECREASING, Direction.INCREASING)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [x0, x1] x [y0, y1]."""

    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate box {self}")

    @property
    def diam(self) -> float:
        return float(np.hypot(self.x1 - self.x0, self.y1 - self.y0))

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    def contains(self, x, y, tol: float = 0.0):
        return (
            (x >= self.x0 - tol)
            & (x <= self.x1 + tol)
            & (y >= self.y0 - tol)
            & (y <= self.y1 + tol)
        )

    def clip(self, x, y):
        return np.clip(x, self.x0, self.x1), np.clip(y, self.y0, self.y1)

    def as_tuple(self):
        return (self.x0, self.x1, self.y0, self.y1)


@dataclass
class MapSpec:
    """A planar scalar map F together with its declared signature and box.

    ``func`` must accept numpy arrays (or scalars) and broadcast.
    """

    func: Callable[["np.ndarray", "np.ndarray"], "np.ndarray"]
    signature: MonotoneSignature
    box: Box
    name: str = "map"
    params: dict = field(default_factory=dict)

    def __call__(self, x, y):
        out = self.func(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return np.asarray(out, dtype=float)

    def eval_checked(self, x, y):
        out = self(x, y)
        if not np.all(np.isfinite(out)):
            raise NonFiniteValue(
                f"map {self.name!r} produced non-finite values"
            )
        return out


class OrderRelation(Enum):
    """Planar partial orders used by the embeddings."""

    SOUTHEAST = "southeast"  # (x,y) <= (u,v)  iff  x <= u and v <= y
    NORTHEAST = "northeast"  # (x,y) <= (u,v)  iff  x <= u and y <= v

    def signs(self) -> tuple[int, int]:
        return (1, -1) if self is OrderRelation.SOUTHEAST else (1, 1)


class Comparison(Enum):
    LESS_EQ = "less_eq"
    GREATER_EQ = "greater_eq"
    EQUAL = "equal"
    INCOMPARABLE = "incomparable"


def compare(p, q, order: OrderRelation, tol: float = 0.0) -> Comparison:
    """Compare two points under a planar partial order.

    ``tol`` treats coordinate differences below it as equality, which is
    what chain-monotonicity checks need when limits are approached.
    """
    sx, sy = order.signs()
    dx = sx * (q[0] - p[0])
    dy = sy * (q[1] - p[1])
    le = dx >= -tol and dy >= -tol
    ge = dx <= tol and dy <= tol
    if le and ge:
        return Comparison.EQUAL
    if le:
        return Comparison.LESS_EQ
    if ge:
        return Comparison.GREATER_EQ
    return Comparison.INCOMPARABLE


@dataclass
class MonotonicityAudit:
    ok: bool
    observed: Optional[MonotoneSignature]
    n_violations_x: int
    n_violations_y: int
    worst_violation: float
    witness: Optional[tuple] = None


def check_monotonicity(
    spec: MapSpec,
    box: Optional[Box] = None,
    n_grid: int = 256,
    tol_mono: float = 1e-9,
) -> MonotonicityAudit:
    """Audit the declared signature on an n_grid x n_grid lattice.

    The tolerance is relative to the sampled range of F, so flat maps do
    not trip on rounding noise.
    """
    box = box or spec.box
    xs = np.linspace(box.x0, box.x1, n_grid)
    ys = np.linspace(box.y0, box.y1, n_grid)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    Z = spec.eval_checked(X, Y)
    spread = float(Z.max() - Z.min())
    tol = tol_mono * max(1.0, spread)

    sgn_x = spec.signature.first.sign
    sgn_y = spec.signature.second.sign
    dx = sgn_x * np.diff(Z, axis=0)
    dy = sgn_y * np.diff(Z, axis=1)
    viol_x = dx < -tol
    viol_y = dy < -tol
    n_x = int(viol_x.sum())
    n_y = int(viol_y.sum())
    worst = 0.0
    witness = None
    if n_x:
        i, j = np.unravel_index(np.argmin(dx), dx.shape)
        worst = max(worst, float(-dx[i, j]))
        witness = (float(xs[i]), float(ys[j]), "x")
    if n_y:
        i, j = np.unravel_index(np.argmin(dy), dy.shape)
        if float(-dy[i, j]) > worst:
            worst = float(-dy[i, j])
            witness = (float(xs[i]), float(ys[j]), "y")

    # Report the empirically observed signature as a convenience.
    med_dx = np.median(np.diff(Z, axis=0))
    med_dy = np.median(np.diff(Z, axis=1))
    observed = MonotoneSignature(
        Direction.INCREASING if med_dx >= 0 else Direction.DECREASING,
        Direction.INCREASING if med_dy >= 0 else Direction.DECREASING,
    )
    return MonotonicityAudit(
        ok=(n_x == 0 and n_y == 0),
        observed=observed,
        n_violations_x=n_x,
        n_violations_y=n_y,
        worst_violation=worst,
        witness=witness,
    )


def jacobian_fd(func, x: float, y: float, h: float = 1e-6) -> np.ndarray:
    """Jacobian of the companion map T(x,y) = (F(x,y), x) at a point.

    Central differences for the F row; the second row is exactly (1, 0).
    """
    hx = h * max(1.0, abs(x))
    hy = h * max(1.0, abs(y))
    fx = (float(func(x + hx, y)) - float(func(x - hx, y))) / (2 * hx)
    fy = (float(func(x, y + hy)) - float(func(x, y - hy))) / (2 * hy)
    return np.array([[fx, fy], [1.0, 0.0]])
