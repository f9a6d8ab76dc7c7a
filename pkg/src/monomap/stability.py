"""Invariance checks, orbit iteration, and the global-stability certificate.

The certificate chains together every audit in the package: declared
monotonicity, domain classification, invariance of the domain under the
companion map T(x, y) = (F(x, y), x), the continuity/monotonicity/range
audit of the rectangular extension, the absence of artificial fixed
points (with an independent dense oracle), and the convergence of both
corner chains of the symmetric embedding to one diagonal point.  Only
when every link holds does the verdict become GloballyStable; sampled
orbits are attached as corroborating evidence, never as proof.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import fixed_points as fp
from .embedding import SYM4, build_embedding, check_order_preserving, run_corner_chains
from .errors import (
    DomainExit,
    MonomapError,
    NonFiniteValue,
    NotAFixedPoint,
    UnsupportedDomain,
)
from .extension import (
    audit_extension,
    extend_convex,
    extend_rectangle,
    extend_semiconvex,
)
from .geometry import DomainKind, DomainSpec
from .map_model import Box, MapSpec, check_monotonicity, jacobian_fd

SCHEMA_VERSION = 1

SINK = "Sink"
SADDLE = "Saddle"
SOURCE = "Source"
NON_HYPERBOLIC = "NonHyperbolic"

GLOBALLY_STABLE = "GloballyStable"
CONVERGENT_SET = "ConvergentToEquilibriumSet"
INCONCLUSIVE = "Inconclusive"
REFUTED = "Refuted"


# ---------------------------------------------------------------------------
# Invariance of a domain under the companion map.
# ---------------------------------------------------------------------------


@dataclass
class InvarianceResult:
    verified: bool
    n_samples: int
    worst_margin: float  # distance of the closest boundary image to exiting
    witness: Optional[Tuple[float, float]] = None  # pre-image of a violation

    def to_dict(self):
        d = {
            "verified": self.verified,
            "n_samples": self.n_samples,
            "worst_margin": self.worst_margin,
        }
        if self.witness is not None:
            d["witness"] = list(self.witness)
        return d


def _boundary_distance(domain: DomainSpec, x: np.ndarray, y: np.ndarray):
    v = domain.vertices
    a = v
    b = np.roll(v, -1, axis=0)
    best = np.full(x.shape, np.inf)
    for (ax, ay), (bx, by) in zip(a, b):
        dx, dy = bx - ax, by - ay
        L2 = dx * dx + dy * dy
        t = ((x - ax) * dx + (y - ay) * dy) / L2 if L2 > 0 else 0.0
        t = np.clip(t, 0.0, 1.0)
        px, py = ax + t * dx, ay + t * dy
        best = np.minimum(best, np.hypot(x - px, y - py))
    return best


def verify_invariance(
    map_spec: MapSpec,
    domain: DomainSpec,
    n_boundary: int = 500,
    rng: Optional[np.random.Generator] = None,
) -> InvarianceResult:
    """Sample the domain and check T(x, y) = (F(x, y), x) stays inside.

    Takes n_boundary samples per boundary segment plus about
    n_boundary^2 interior points.  The reported margin is the smallest
    distance of a boundary-sample image to the boundary (interior
    images are containment-checked only).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    tol = domain.chord_tol
    v = domain.vertices
    n_seg = len(v)
    ts = np.linspace(0.0, 1.0, n_boundary, endpoint=False)
    bx = np.concatenate(
        [v[i, 0] + ts * (v[(i + 1) % n_seg, 0] - v[i, 0]) for i in range(n_seg)]
    )
    by = np.concatenate(
        [v[i, 1] + ts * (v[(i + 1) % n_seg, 1] - v[i, 1]) for i in range(n_seg)]
    )
    x0, x1, y0, y1 = domain.bbox
    want = n_boundary * n_boundary
    ix = np.empty(0)
    iy = np.empty(0)
    while len(ix) < want:
        cx = rng.uniform(x0, x1, 2 * want)
        cy = rng.uniform(y0, y1, 2 * want)
        keep = domain.contains(cx, cy) >= 0
        ix = np.concatenate([ix, cx[keep]])
        iy = np.concatenate([iy, cy[keep]])
    ix, iy = ix[:want], iy[:want]

    sx = np.concatenate([bx, ix])
    sy = np.concatenate([by, iy])
    tx = np.asarray(map_spec(sx, sy), dtype=float)
    ty = sx
    inside = domain.contains(tx, ty, tol=4 * tol) >= 0
    n_samples = len(sx)
    if not np.all(inside):
        bad = np.nonzero(~inside)[0]
        k = int(bad[0])
        dist = float(_boundary_distance(domain, tx[bad], ty[bad]).max())
        return InvarianceResult(
            verified=False,
            n_samples=n_samples,
            worst_margin=-dist,
            witness=(float(sx[k]), float(sy[k])),
        )
    bdist = _boundary_distance(domain, tx[: len(bx)], ty[: len(bx)])
    return InvarianceResult(
        verified=True,
        n_samples=n_samples,
        worst_margin=float(bdist.min()),
    )


# ---------------------------------------------------------------------------
# Orbits of the second-order equation.
# ---------------------------------------------------------------------------


@dataclass
class Orbit:
    values: np.ndarray  # x_{-1}, x_0, x_1, ..., x_n
    exited_at: Optional[int] = None  # first n with (x_n, x_{n-1}) outside

    @property
    def final(self) -> float:
        return float(self.values[-1])

    def to_dict(self):
        return {
            "values": self.values.tolist(),
            "exited_at": self.exited_at,
        }


def iterate_orbit(
    map_spec: MapSpec,
    x0: float,
    x_m1: float,
    n: int,
    domain: Optional[DomainSpec] = None,
) -> Orbit:
    """Run x_{k+1} = F(x_k, x_{k-1}) for n steps from (x0, x_m1)."""
    vals = np.empty(n + 2)
    vals[0] = x_m1
    vals[1] = x0
    exited = None
    for k in range(n):
        cur, prev = vals[k + 1], vals[k]
        nxt = float(map_spec(cur, prev))
        if not np.isfinite(nxt):
            raise NonFiniteValue(
                f"orbit produced a non-finite value at step {k + 1}"
            )
        vals[k + 2] = nxt
        if (
            exited is None
            and domain is not None
            and domain.contains(nxt, cur, tol=4 * domain.chord_tol) < 0
        ):
            exited = k + 1
    return Orbit(values=vals, exited_at=exited)


def _polish_equilibrium(ext, x_star: float, span: float, gap: float):
    """Refine an approximate equilibrium by bisection on F(x, x) - x."""
    from scipy.optimize import brentq

    g = lambda x: float(ext.eval(x, x)) - x
    delta = max(1e-6 * span, 10 * gap)
    r = ext.rect
    for _ in range(20):
        a = max(r.x0, x_star - delta)
        b = min(r.x1, x_star + delta)
        ga, gb = g(a), g(b)
        if ga == 0.0:
            return a
        if gb == 0.0:
            return b
        if ga * gb < 0:
            return float(brentq(g, a, b, xtol=1e-13 * max(1.0, span)))
        delta *= 4
        if a == r.x0 and b == r.x1:
            break
    return None


def _run_ensemble(
    map_spec: MapSpec,
    domain: DomainSpec,
    starts_x: np.ndarray,
    starts_y: np.ndarray,
    n_steps: int,
    tol_fp: float,
    keep_every: int = 100,
):
    """Iterate many orbits in lockstep; returns finals, exit count, traces.

    Stops early once every orbit's step size drops below tol_fp / 10.
    Traces are thinned to every `keep_every`-th value for plotting.
    """
    cur = np.asarray(starts_x, dtype=float).copy()
    prev = np.asarray(starts_y, dtype=float).copy()
    exited = np.zeros(cur.shape, dtype=bool)
    tol = 4 * domain.chord_tol
    traces = [cur.copy()]
    for k in range(n_steps):
        nxt = np.asarray(map_spec(cur, prev), dtype=float)
        if not np.all(np.isfinite(nxt)):
            raise NonFiniteValue(
                f"orbit ensemble produced a non-finite value at step {k + 1}"
            )
        exited |= domain.contains(nxt, cur, tol=tol) < 0
        change = np.max(np.abs(nxt - cur))
        prev, cur = cur, nxt
        if (k + 1) % keep_every == 0:
            traces.append(cur.copy())
        if change < tol_fp / 10:
            break
    traces.append(cur.copy())
    return cur, int(np.count_nonzero(exited)), np.asarray(traces)


# ---------------------------------------------------------------------------
# Local stability of an equilibrium.
# ---------------------------------------------------------------------------


@dataclass
class LocalStability:
    classification: str
    eigenvalues: Tuple[complex, complex]
    jacobian: np.ndarray

    def to_dict(self):
        return {
            "classification": self.classification,
            "eigenvalues": [
                [ev.real, ev.imag] for ev in self.eigenvalues
            ],
            "jacobian": self.jacobian.tolist(),
        }


def local_stability(
    map_spec: MapSpec,
    x_star: float,
    tol_fp: Optional[float] = None,
    tol_eig: float = 1e-6,
) -> LocalStability:
    """Classify the equilibrium by the spectrum of the companion map."""
    if tol_fp is None:
        scale = map_spec.box.diam if map_spec.box is not None else 1.0
        tol_fp = 1e-6 * max(1.0, scale)
    if abs(float(map_spec(x_star, x_star)) - x_star) > tol_fp:
        raise NotAFixedPoint(f"{x_star} is not an equilibrium of the map")
    fx, fy = jacobian_fd(map_spec, x_star, x_star)[0]
    J = np.array([[fx, fy], [1.0, 0.0]])
    evs = np.linalg.eigvals(J)
    mags = np.abs(evs)
    if np.any(np.abs(mags - 1.0) <= tol_eig):
        cls = NON_HYPERBOLIC
    elif np.all(mags < 1.0):
        cls = SINK
    elif np.all(mags > 1.0):
        cls = SOURCE
    else:
        cls = SADDLE
    return LocalStability(
        classification=cls,
        eigenvalues=(complex(evs[0]), complex(evs[1])),
        jacobian=J,
    )


# ---------------------------------------------------------------------------
# The certificate pipeline.
# ---------------------------------------------------------------------------

_DEFAULTS = {
    "n_boundary": 200,
    "n_grid": 256,
    "n_dense": 1024,
    "n_orbits": 100,
    "orbit_steps": 10000,
    "n_order_pairs": 1000,
    "audit_grid": 100,
    "variant": SYM4,
    "max_iter": 100000,
    "seed": 0,
    "tol_chain": None,  # defaults to 1e-10 * (b - a)
    "tol_fp": None,  # defaults to 1e-9 * (b - a)
}


@dataclass
class StabilityCertificate:
    map_name: str
    map_params: dict
    domain_summary: dict
    stages: List[dict] = field(default_factory=list)
    invariance: Optional[InvarianceResult] = None
    extension_audit: Optional[dict] = None
    artificial_search: Optional[dict] = None
    oracle_consistent: Optional[bool] = None
    corner_chain_limits: Optional[dict] = None
    orbit_ensemble: Optional[dict] = None
    verdict: str = INCONCLUSIVE
    verdict_detail: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    @property
    def globally_stable(self) -> bool:
        return self.verdict == GLOBALLY_STABLE

    @property
    def x_star(self) -> Optional[float]:
        return self.verdict_detail.get("x_star")

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "map": {"name": self.map_name, "params": self.map_params},
            "domain": self.domain_summary,
            "stages": self.stages,
            "invariance": None
            if self.invariance is None
            else self.invariance.to_dict(),
            "extension_audit": self.extension_audit,
            "artificial_search": self.artificial_search,
            "oracle_consistent": self.oracle_consistent,
            "corner_chain_limits": self.corner_chain_limits,
            "orbit_ensemble": self.orbit_ensemble,
            "verdict": self.verdict,
            "verdict_detail": self.verdict_detail,
            "tolerances": self.tolerances,
        }


def _stage(cert: StabilityCertificate, name: str, status: str, **extra):
    cert.stages.append({"stage": name, "status": status, **extra})


def certify(
    map_spec: MapSpec,
    domain: DomainSpec,
    config: Optional[dict] = None,
) -> StabilityCertificate:
    """Run the full global-stability pipeline and assemble a certificate.

    Any stage failure is recorded and turns the verdict Inconclusive
    with the stage name; the remaining stages are skipped.  Side data
    (chains, extension, orbits) is attached to the returned certificate
    object for report rendering.
    """
    cfg = dict(_DEFAULTS)
    if config:
        unknown = set(config) - set(cfg)
        if unknown:
            raise ValueError(f"unknown certify config keys: {sorted(unknown)}")
        cfg.update(config)
    rng = np.random.default_rng(cfg["seed"])
    x0, x1, y0, y1 = domain.bbox
    span = max(x1 - x0, y1 - y0)
    tol_fp = cfg["tol_fp"] if cfg["tol_fp"] is not None else 1e-9 * span
    cert = StabilityCertificate(
        map_name=map_spec.name,
        map_params=dict(map_spec.params),
        domain_summary={
            "bbox": [x0, x1, y0, y1],
            "n_vertices": int(len(domain.vertices)),
            "name": domain.name,
        },
        tolerances={
            "tol_fp": tol_fp,
            "tol_chain": cfg["tol_chain"] if cfg["tol_chain"] is not None
            else 1e-10 * span,
            "seed": cfg["seed"],
        },
    )

    def fail(stage: str, err: Exception) -> StabilityCertificate:
        _stage(cert, stage, "failed", error=type(err).__name__,
               message=str(err))
        cert.verdict = INCONCLUSIVE
        cert.verdict_detail = {
            "stage": stage,
            "error": type(err).__name__,
            "reason": str(err),
        }
        return cert

    # 1. declared monotonicity
    try:
        mono = check_monotonicity(map_spec, Box(x0, x1, y0, y1))
        if not mono.ok:
            raise MonomapError(
                f"declared signature violated at {mono.witness}"
            )
        _stage(cert, "monotonicity", "passed",
               n_violations=mono.n_violations_x + mono.n_violations_y)
    except Exception as e:  # noqa: BLE001 - every stage converts to verdict
        return fail("monotonicity", e)

    # 2. domain classification
    try:
        kind = domain.classify()
        if kind == DomainKind.UNSUPPORTED:
            raise UnsupportedDomain("domain is not semi-convex")
        _stage(cert, "classify_domain", "passed", kind=kind.value)
    except Exception as e:
        return fail("classify_domain", e)

    # 3. invariance
    try:
        inv = verify_invariance(
            map_spec, domain, n_boundary=cfg["n_boundary"], rng=rng
        )
        cert.invariance = inv
        if not inv.verified:
            raise MonomapError(
                f"domain is not invariant; witness {inv.witness}"
            )
        _stage(cert, "invariance", "passed", n_samples=inv.n_samples)
    except Exception as e:
        return fail("invariance", e)

    # 4. extension + audit
    try:
        if kind == DomainKind.RECTANGLE:
            ext = extend_rectangle(map_spec, Box(x0, x1, y0, y1))
        elif kind == DomainKind.CONVEX:
            ext = extend_convex(map_spec, domain)
        else:
            ext = extend_semiconvex(map_spec, domain)
        aud = audit_extension(ext, grid_n=cfg["audit_grid"], rng=rng)
        cert.extension_audit = aud.to_dict()
        if not aud.all_ok:
            raise MonomapError("extension audit failed")
        _stage(cert, "extension", "passed", n_pieces=len(ext.pieces))
    except Exception as e:
        return fail("extension", e)
    cert.extension = ext  # attached for report rendering

    # 5. artificial fixed points + oracle
    try:
        report = fp.find_artificial(ext, n_grid=cfg["n_grid"], tol_fp=tol_fp)
        oracle = fp.oracle_sweep(ext, n_dense=cfg["n_dense"])
        ok, detail = fp.check_oracle_consistency(ext, report, oracle)
        cert.artificial_search = report.to_dict()
        cert.oracle_consistent = ok
        if not ok:
            raise MonomapError(f"oracle inconsistency: {detail}")
        if report.has_artificial:
            raise MonomapError(
                f"artificial fixed points exist: {report.artificial}"
            )
        if report.suspicious:
            raise MonomapError("suspicious (possibly tangential) roots")
        _stage(cert, "artificial_fixed_points", "passed",
               n_equilibria=len(report.equilibria))
    except Exception as e:
        return fail("artificial_fixed_points", e)

    # 6. embedding + corner chains
    try:
        sys = build_embedding(ext, cfg["variant"])
        order = check_order_preserving(sys, cfg["n_order_pairs"], rng=rng)
        if not order.ok:
            raise MonomapError(
                f"embedded step is not order preserving "
                f"(margin {order.worst_margin:.3e})"
            )
        lo, hi = run_corner_chains(
            sys, max_iter=cfg["max_iter"], tol_chain=cfg["tol_chain"]
        )
        cert.chains = (lo, hi)  # attached for report rendering
        cert.corner_chain_limits = {
            "variant": cfg["variant"],
            "min_chain": lo.to_dict(),
            "max_chain": hi.to_dict(),
        }
        if lo.limit is None or hi.limit is None:
            raise MonomapError("a corner chain did not converge")
        # each chain stopped on its own step size; when the contraction
        # is slow the two limits can still sit a geometric tail apart,
        # so keep stepping both until they meet or the gap stalls
        s_lo, s_hi = lo.limit.copy(), hi.limit.copy()
        gap = float(np.max(np.abs(s_lo - s_hi)))
        checkpoint = np.inf
        for k in range(cfg["max_iter"]):
            if gap <= 10 * tol_fp:
                break
            if (k + 1) % 1000 == 0:
                if gap > 0.999 * checkpoint:
                    break  # genuinely separated limits
                checkpoint = gap
            s_lo = sys.step(s_lo)
            s_hi = sys.step(s_hi)
            gap = float(np.max(np.abs(s_lo - s_hi)))
        diag = float(np.max(np.abs(s_lo - s_lo[0])))
        if gap > 10 * tol_fp or diag > 10 * tol_fp:
            raise MonomapError(
                f"corner chains do not meet at a diagonal point "
                f"(gap {gap:.3e}, off-diagonal {diag:.3e})"
            )
        x_star = float(s_lo[0])
        # polish the chain limit with a 1-D root solve of F(x, x) - x
        polished = _polish_equilibrium(ext, x_star, span, gap)
        if polished is not None and abs(polished - x_star) <= 1e3 * tol_fp:
            x_star = polished
        resid = abs(float(ext.eval(x_star, x_star)) - x_star)
        if resid > 100 * tol_fp:
            raise MonomapError(
                f"chain limit is not a fixed point (residual {resid:.3e})"
            )
        _stage(cert, "corner_chains", "passed", x_star=x_star)
    except Exception as e:
        return fail("corner_chains", e)

    # 7. empirical orbit ensemble (corroboration only)
    want = cfg["n_orbits"]
    starts_x = np.empty(0)
    starts_y = np.empty(0)
    while len(starts_x) < want:
        cx = rng.uniform(x0, x1, 4 * want)
        cy = rng.uniform(y0, y1, 4 * want)
        keep = domain.contains(cx, cy) >= 0
        starts_x = np.concatenate([starts_x, cx[keep]])[:want]
        starts_y = np.concatenate([starts_y, cy[keep]])[:want]
    finals, exits, traces = _run_ensemble(
        map_spec, domain, starts_x, starts_y, cfg["orbit_steps"], tol_fp
    )
    cert.orbit_traces = traces  # attached for report rendering
    worst_dev = float(np.max(np.abs(finals - x_star))) if len(finals) else 0.0
    cert.orbit_ensemble = {
        "n_orbits": want,
        "steps": cfg["orbit_steps"],
        "n_domain_exits": exits,
        "max_final_deviation": worst_dev,
    }
    if exits or worst_dev > max(1e4 * tol_fp, 1e-6 * span):
        _stage(cert, "orbit_ensemble", "failed",
               n_domain_exits=exits, max_final_deviation=worst_dev)
        cert.verdict = REFUTED
        cert.verdict_detail = {
            "reason": "a sampled orbit contradicts the certificate",
            "n_domain_exits": exits,
            "max_final_deviation": worst_dev,
        }
        return cert
    _stage(cert, "orbit_ensemble", "passed", max_final_deviation=worst_dev)

    # verdict
    equilibria = fp.find_equilibria(ext, (x0, x1), n_grid=cfg["n_grid"],
                                    tol_fp=tol_fp)
    if len(equilibria) == 1:
        cert.verdict = GLOBALLY_STABLE
        cert.verdict_detail = {"x_star": x_star}
    else:
        cert.verdict = CONVERGENT_SET
        cert.verdict_detail = {
            "x_star": x_star,
            "equilibria": [x for x, _ in equilibria],
            "reason": "multiple equilibria; convergence point may depend "
            "on the start",
        }
    return cert
