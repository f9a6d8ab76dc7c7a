"""Built-in parametric map families with their analytic facts wired in.

Three families:

* ``RationalPQR``   F(x, y) = (p + q x) / (1 + x + r y) on [0, q]^2,
* ``RationalPQRH``  F(x, y) = (p + 2p x) / (1 + x + y) - h on a
  pentagonal invariant domain inside [0, c]^2,
* ``XfY``           F(x, y) = x f(y) with f decreasing and f(0) > 1.

Each constructor validates its parameter constraints and returns a map
spec (with the analytic equilibrium available through
``eq7_equilibrium`` / ``eq8_x_star``) plus the invariant domain where
one is known.
"""

from __future__ import annotations

from typing import Callable, Tuple

import numpy as np

from .errors import DegenerateCase, ParamConstraint
from .geometry import DomainSpec
from .map_model import Box, INC_DEC, MapSpec

FAMILY_EQ7 = "RationalPQR"
FAMILY_EQ8 = "RationalPQRH"
FAMILY_XFY = "XfY"


def eq7_equilibrium(p: float, q: float, r: float) -> float:
    """Positive root of (1 + r) x^2 + (1 - q) x - p = 0."""
    disc = (1 - q) ** 2 + 4 * (1 + r) * p
    return float(((q - 1) + np.sqrt(disc)) / (2 * (1 + r)))


def make_eq7(p: float, q: float, r: float) -> Tuple[MapSpec, DomainSpec]:
    """F(x, y) = (p + qx) / (1 + x + ry) on the invariant square [0, q]^2."""
    if not (0 < p <= q):
        raise ParamConstraint(f"requires 0 < p <= q, got p={p}, q={q}")
    if not r > 0:
        raise ParamConstraint(f"requires r > 0, got r={r}")

    def F(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (p + q * x) / (1 + x + r * y)

    spec = MapSpec(
        F,
        INC_DEC,
        Box(0.0, q, 0.0, q),
        name=FAMILY_EQ7,
        params={"p": p, "q": q, "r": r},
    )
    x_star = eq7_equilibrium(p, q, r)
    if not x_star < q:
        raise ParamConstraint(
            f"equilibrium {x_star} is not below q={q}; family fact violated"
        )
    domain = DomainSpec.rectangle(0.0, q, 0.0, q)
    return spec, domain


def eq8_x_star(p: float, h: float) -> float:
    return p - h


def make_eq8(p: float, h: float) -> Tuple[MapSpec, DomainSpec]:
    """F(x, y) = (p + 2px) / (1 + x + y) - h on its pentagonal domain.

    The invariant domain has vertices (c, c), (x*, c), (0, x*), (0, 0),
    (c, 0) with x* = p - h and c = x*(x* + p + 1)/h, valid for
    0 < h < min(p, 1/2).  The analysis breaks down at h = 1/2, where the
    map acquires a continuum of artificial fixed points.
    """
    if not (p > 0 and h > 0):
        raise ParamConstraint(f"requires p > 0 and h > 0, got p={p}, h={h}")
    if abs(h - 0.5) < 1e-12:
        raise DegenerateCase(
            "h = 1/2: the map has an infinite number of artificial fixed "
            "points and cannot be certified by this method"
        )
    if not h < min(p, 0.5):
        raise ParamConstraint(
            f"requires 0 < h < min(p, 1/2), got p={p}, h={h}"
        )
    x_star = eq8_x_star(p, h)
    c = x_star * (x_star + p + 1) / h

    def F(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (p + 2 * p * x) / (1 + x + y) - h

    spec = MapSpec(
        F,
        INC_DEC,
        Box(0.0, c, 0.0, c),
        name=FAMILY_EQ8,
        params={"p": p, "h": h},
    )
    # invariant-domain inequality x* + pc/(1+c) < c from the analysis
    if not x_star + p * c / (1 + c) < c:
        raise ParamConstraint(
            "invariant-domain inequality x* + pc/(1+c) < c fails"
        )
    domain = DomainSpec.polygon(
        [(c, 0.0), (c, c), (x_star, c), (0.0, x_star), (0.0, 0.0)],
        name="eq8-pentagon",
    )
    return spec, domain


def make_xfy(
    f: Callable[[np.ndarray], np.ndarray],
    box: Tuple[float, float] = (0.01, 3.0),
    n_check: int = 128,
) -> Tuple[MapSpec, DomainSpec]:
    """F(x, y) = x f(y) with f decreasing and f(0) > 1 (checked by sampling).

    The equilibrium x* with f(x*) = 1 cannot attract the whole square
    under the 2-dimensional symmetric embedding: the embedded Jacobian
    at (x*, x*) has an eigenvalue 1 - x* f'(x*) > 1, so the embedding's
    corner chains split and artificial fixed points must exist.
    """
    a, b = float(box[0]), float(box[1])
    ys = np.linspace(0.0, b, n_check)
    fv = np.asarray(f(ys), dtype=float)
    if not np.all(np.isfinite(fv)):
        raise ParamConstraint("f must be finite on the domain")
    if np.any(np.diff(fv) > 1e-12 * max(1.0, float(np.max(np.abs(fv))))):
        raise ParamConstraint("f must be decreasing")
    if not fv[0] > 1:
        raise ParamConstraint("requires f(0) > 1")

    def F(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return x * np.asarray(f(y), dtype=float)

    spec = MapSpec(F, INC_DEC, Box(a, b, a, b), name=FAMILY_XFY, params={})
    domain = DomainSpec.rectangle(a, b, a, b)
    return spec, domain
