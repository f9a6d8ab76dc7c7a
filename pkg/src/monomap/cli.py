"""Command-line front end.

    monomap <extend|fixedpoints|certify|simulate> --config FILE
            [--out DIR] [--seed N] [--tol-KEY VALUE]

The config is flat ``key = value`` text under ``[section]`` headers (see
README for the key reference).  Exit codes: 0 success / GloballyStable,
1 Inconclusive verdict, 2 audit or oracle failure, 3 unsupported
domain, 4 configuration error.  With a fixed seed all JSON/CSV/SVG
outputs are byte-identical across runs.
"""

from __future__ import annotations

import argparse
import ast
import os
import sys
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import fixed_points as fp
from . import report
from .errors import (
    ConfigError,
    DegenerateCase,
    MonomapError,
    NonFiniteValue,
    UnsupportedDomain,
)
from .examples import make_eq7, make_eq8, make_xfy
from .extension import audit_extension, extend_convex, extend_rectangle, extend_semiconvex
from .geometry import DomainKind, DomainSpec
from .map_model import Box, DEC_INC, INC_DEC, MapSpec, check_monotonicity
from .stability import _run_ensemble, certify, iterate_orbit

EXIT_OK = 0
EXIT_INCONCLUSIVE = 1
EXIT_AUDIT_FAIL = 2
EXIT_UNSUPPORTED = 3
EXIT_CONFIG = 4


def thread_cap() -> int:
    """Worker-count cap from MONOMAP_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("MONOMAP_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# Safe expression maps: +, -, *, /, **, exp, log, parentheses, x, y, params.
# ---------------------------------------------------------------------------

_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_ALLOWED_UNARY = (ast.UAdd, ast.USub)
_ALLOWED_CALLS = {"exp": np.exp, "log": np.log, "sqrt": np.sqrt}


def compile_expression(expr: str, params: dict) -> Callable:
    """Compile an arithmetic expression in x, y, and named parameters."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as e:
        raise ConfigError(f"cannot parse expression {expr!r}: {e}") from e

    names = dict(params)

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            v = float(node.value)
            return lambda x, y: v
        if isinstance(node, ast.Name):
            if node.id == "x":
                return lambda x, y: x
            if node.id == "y":
                return lambda x, y: y
            if node.id in names:
                v = float(names[node.id])
                return lambda x, y: v
            raise ConfigError(f"unknown name {node.id!r} in expression")
        if isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
            lf, rf = build(node.left), build(node.right)
            op = type(node.op)
            if op is ast.Add:
                return lambda x, y: lf(x, y) + rf(x, y)
            if op is ast.Sub:
                return lambda x, y: lf(x, y) - rf(x, y)
            if op is ast.Mult:
                return lambda x, y: lf(x, y) * rf(x, y)
            if op is ast.Div:
                return lambda x, y: lf(x, y) / rf(x, y)
            return lambda x, y: lf(x, y) ** rf(x, y)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, _ALLOWED_UNARY):
            f = build(node.operand)
            if isinstance(node.op, ast.USub):
                return lambda x, y: -f(x, y)
            return f
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
            fn = _ALLOWED_CALLS.get(node.func.id)
            if fn is None or node.keywords or len(node.args) != 1:
                raise ConfigError(
                    f"only exp, log, sqrt calls are allowed, got {node.func.id!r}"
                )
            f = build(node.args[0])
            return lambda x, y: fn(f(x, y))
        raise ConfigError(
            f"unsupported expression element {type(node).__name__}"
        )

    return build(tree)


# ---------------------------------------------------------------------------
# Config file parsing: [section] headers + key = value lines.
# ---------------------------------------------------------------------------

_KNOWN_KEYS = {
    "map": {"family", "expr", "signature", "f"},
    "domain": {"kind", "rect", "vertices"},
    "run": {
        "seed",
        "n_orbits",
        "orbit_steps",
        "variant",
        "n_grid",
        "n_dense",
        "n_boundary",
        "max_iter",
        "audit_grid",
        "n_order_pairs",
        "x0",
        "x_m1",
        "steps",
    },
    "tolerances": {"tol_chain", "tol_fp", "tol_cont", "tol_mono", "tol_range"},
}


def parse_config(text: str) -> dict:
    """Parse the flat key=value config with [section] headers."""
    cfg = {s: {} for s in _KNOWN_KEYS}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in _KNOWN_KEYS:
                raise ConfigError(f"unknown config section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, val = (part.strip() for part in line.split("=", 1))
        known = _KNOWN_KEYS[section]
        # [map] admits free numeric parameter names for families/expressions
        if key not in known and section != "map":
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")
        cfg[section][key] = val
    return cfg


def _as_float(cfg_sec: dict, key: str, default=None) -> Optional[float]:
    if key not in cfg_sec:
        return default
    try:
        return float(cfg_sec[key])
    except ValueError as e:
        raise ConfigError(f"{key} must be a number, got {cfg_sec[key]!r}") from e


def _as_int(cfg_sec: dict, key: str, default=None) -> Optional[int]:
    if key not in cfg_sec:
        return default
    try:
        return int(cfg_sec[key])
    except ValueError as e:
        raise ConfigError(f"{key} must be an integer, got {cfg_sec[key]!r}") from e


def build_problem(cfg: dict):
    """Instantiate (MapSpec, DomainSpec) from a parsed config."""
    msec = dict(cfg["map"])
    family = msec.pop("family", None)
    if family is None:
        raise ConfigError("[map] needs a family= key (eq7, eq8, xfy, expression)")
    if family == "eq7":
        p = _as_float(msec, "p")
        q = _as_float(msec, "q")
        r = _as_float(msec, "r")
        if None in (p, q, r):
            raise ConfigError("eq7 needs p=, q=, r=")
        spec, domain = make_eq7(p, q, r)
    elif family == "eq8":
        p = _as_float(msec, "p")
        h = _as_float(msec, "h")
        if None in (p, h):
            raise ConfigError("eq8 needs p=, h=")
        spec, domain = make_eq8(p, h)
    elif family == "xfy":
        fexpr = msec.pop("f", None)
        if fexpr is None:
            raise ConfigError("xfy needs f= (an expression in y)")
        params = {k: _as_float(msec, k) for k in list(msec)
                  if k not in ("expr", "signature")}
        g = compile_expression(fexpr, params)
        spec, domain = make_xfy(lambda yv: g(0.0, yv))
    elif family == "expression":
        expr = msec.pop("expr", None)
        if expr is None:
            raise ConfigError("expression map needs expr=")
        sig_txt = msec.pop("signature", "inc_dec")
        if sig_txt not in ("inc_dec", "dec_inc"):
            raise ConfigError("signature must be inc_dec or dec_inc")
        params = {k: _as_float(msec, k) for k in list(msec)}
        f = compile_expression(expr, params)
        func = lambda x, y: np.asarray(f(np.asarray(x, dtype=float),
                                         np.asarray(y, dtype=float)), dtype=float)
        sig = INC_DEC if sig_txt == "inc_dec" else DEC_INC
        spec = MapSpec(func, sig, None, name="expression", params=params)
        domain = None
    else:
        raise ConfigError(f"unknown map family {family!r}")

    dsec = cfg["domain"]
    if dsec:
        kind = dsec.get("kind")
        if kind == "rect":
            try:
                x0, x1, y0, y1 = (float(v) for v in dsec["rect"].split(","))
            except (KeyError, ValueError) as e:
                raise ConfigError("rect domain needs rect=x0,x1,y0,y1") from e
            domain = DomainSpec.rectangle(x0, x1, y0, y1)
        elif kind == "polygon":
            try:
                pts = [
                    tuple(float(v) for v in pair.split(","))
                    for pair in dsec["vertices"].split(";")
                ]
            except (KeyError, ValueError) as e:
                raise ConfigError(
                    "polygon domain needs vertices=x1,y1;x2,y2;..."
                ) from e
            domain = DomainSpec.polygon(pts)
        elif kind is not None:
            raise ConfigError(f"unknown domain kind {kind!r}")
    if domain is None:
        raise ConfigError("no domain: give [domain] or use a builtin family")
    if spec.box is None:
        x0, x1, y0, y1 = domain.bbox
        spec.box = Box(x0, x1, y0, y1)
    return spec, domain


def _tolerances(cfg: dict) -> dict:
    out = {}
    for key, val in cfg["tolerances"].items():
        try:
            v = float(val)
        except ValueError as e:
            raise ConfigError(f"{key} must be a number") from e
        if v <= 0:
            raise ConfigError(f"{key} must be positive")
        out[key] = v
    return out


def _build_extension(spec, domain):
    kind = domain.classify()
    if kind == DomainKind.RECTANGLE:
        x0, x1, y0, y1 = domain.bbox
        return extend_rectangle(spec, Box(x0, x1, y0, y1))
    if kind == DomainKind.CONVEX:
        return extend_convex(spec, domain)
    return extend_semiconvex(spec, domain)


# ---------------------------------------------------------------------------
# Commands.
# ---------------------------------------------------------------------------


def cmd_extend(cfg: dict, out: Path, seed: int, tols: dict) -> int:
    spec, domain = build_problem(cfg)
    mono = check_monotonicity(spec)
    if not mono.ok:
        print(f"declared monotone signature fails at {mono.witness}")
        return EXIT_AUDIT_FAIL
    ext = _build_extension(spec, domain)
    rng = np.random.default_rng(seed)
    grid_n = _as_int(cfg["run"], "audit_grid", 100)
    audit = audit_extension(ext, grid_n=grid_n, rng=rng, **{
        k: v for k, v in tols.items()
        if k in ("tol_cont", "tol_mono", "tol_range")
    })
    report.write_json(out / "extension.json", ext.to_dict())
    report.write_json(out / "extension_audit.json", audit.to_dict())
    (out / "pieces.svg").write_text(report.render_pieces_svg(ext))
    print(f"extension: {len(ext.pieces)} pieces; audit "
          f"{'passed' if audit.all_ok else 'FAILED'}")
    return EXIT_OK if audit.all_ok else EXIT_AUDIT_FAIL


def cmd_fixedpoints(cfg: dict, out: Path, seed: int, tols: dict) -> int:
    spec, domain = build_problem(cfg)
    ext = _build_extension(spec, domain)
    n_grid = _as_int(cfg["run"], "n_grid", 256)
    n_dense = _as_int(cfg["run"], "n_dense", 1024)
    rep = fp.find_artificial(ext, n_grid=n_grid, tol_fp=tols.get("tol_fp"))
    oracle = fp.oracle_sweep(ext, n_dense=n_dense)
    ok, detail = fp.check_oracle_consistency(ext, rep, oracle)
    doc = rep.to_dict()
    doc["oracle_consistent"] = ok
    doc["oracle_detail"] = {
        k: v for k, v in detail.items() if k != "orphan_marks"
    }
    report.write_json(out / "fixed_points.json", doc)
    print(f"equilibria: {[x for x, _ in rep.equilibria]}; artificial: "
          f"{[pair for pair, _ in rep.artificial]}; oracle "
          f"{'consistent' if ok else 'INCONSISTENT'}")
    return EXIT_OK if ok else EXIT_AUDIT_FAIL


def cmd_certify(cfg: dict, out: Path, seed: int, tols: dict) -> int:
    spec, domain = build_problem(cfg)
    run = cfg["run"]
    ccfg = {"seed": seed}
    for key in ("n_boundary", "n_grid", "n_dense", "n_orbits",
                "orbit_steps", "max_iter", "audit_grid", "n_order_pairs"):
        v = _as_int(run, key)
        if v is not None:
            ccfg[key] = v
    if "variant" in run:
        ccfg["variant"] = run["variant"]
    for key in ("tol_chain", "tol_fp"):
        if key in tols:
            ccfg[key] = tols[key]
    cert = certify(spec, domain, ccfg)
    report.write_json(out / "certificate.json", cert.to_dict())
    (out / "certificate.md").write_text(report.render_certificate_md(cert))
    if hasattr(cert, "chains"):
        report.write_chains_csv(out / "chains.csv", *cert.chains)
    if hasattr(cert, "orbit_traces"):
        report.write_orbits_csv(out / "orbits.csv", cert.orbit_traces)
        (out / "phase.svg").write_text(
            report.render_phase_svg(
                domain,
                traces=cert.orbit_traces,
                fixed_points=[cert.x_star] if cert.x_star is not None else [],
                rect=getattr(cert, "extension", None)
                and cert.extension.rect,
            )
        )
    else:
        (out / "phase.svg").write_text(report.render_phase_svg(domain))
    print(f"verdict: {cert.verdict} {cert.verdict_detail}")
    if cert.globally_stable:
        return EXIT_OK
    err = cert.verdict_detail.get("error")
    if err == "UnsupportedDomain":
        return EXIT_UNSUPPORTED
    return EXIT_INCONCLUSIVE


def cmd_simulate(cfg: dict, out: Path, seed: int, tols: dict) -> int:
    spec, domain = build_problem(cfg)
    run = cfg["run"]
    steps = _as_int(run, "steps", _as_int(run, "orbit_steps", 1000))
    x0 = _as_float(run, "x0")
    x_m1 = _as_float(run, "x_m1")
    rng = np.random.default_rng(seed)
    if x0 is not None and x_m1 is not None:
        orbit = iterate_orbit(spec, x0, x_m1, steps, domain=domain)
        traces = orbit.values[1:, None]
        (out / "orbit.svg").write_text(report.render_orbit_svg(orbit.values))
        if orbit.exited_at is not None:
            print(f"orbit left the domain at step {orbit.exited_at}")
    else:
        n_orbits = _as_int(run, "n_orbits", 20)
        x0b, x1b, y0b, y1b = domain.bbox
        sx = np.empty(0)
        sy = np.empty(0)
        while len(sx) < n_orbits:
            cx = rng.uniform(x0b, x1b, 4 * n_orbits)
            cy = rng.uniform(y0b, y1b, 4 * n_orbits)
            keep = domain.contains(cx, cy) >= 0
            sx = np.concatenate([sx, cx[keep]])[:n_orbits]
            sy = np.concatenate([sy, cy[keep]])[:n_orbits]
        span = max(x1b - x0b, y1b - y0b)
        finals, exits, traces = _run_ensemble(
            spec, domain, sx, sy, steps, 1e-9 * span, keep_every=1
        )
        if exits:
            print(f"{exits} of {n_orbits} orbits left the domain")
    report.write_orbits_csv(out / "orbits.csv", np.asarray(traces),
                            keep_every=1)
    (out / "phase.svg").write_text(
        report.render_phase_svg(domain, traces=np.asarray(traces))
    )
    print(f"simulated {np.asarray(traces).shape[1]} orbit(s), "
          f"{steps} max steps")
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="monomap",
        description="Global stability certification for second-order "
        "difference equations of mixed monotonicity.",
    )
    ap.add_argument("command",
                    choices=["extend", "fixedpoints", "certify", "simulate"])
    ap.add_argument("--config", required=True, help="key=value config file")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int, default=None,
                    help="override the [run] seed")
    ap.add_argument("--tol-chain", type=float, dest="tol_chain")
    ap.add_argument("--tol-fp", type=float, dest="tol_fp")
    ap.add_argument("--tol-cont", type=float, dest="tol_cont")
    ap.add_argument("--tol-mono", type=float, dest="tol_mono")
    ap.add_argument("--tol-range", type=float, dest="tol_range")
    args = ap.parse_args(argv)

    try:
        text = Path(args.config).read_text()
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text)
        tols = _tolerances(cfg)
        for key in ("tol_chain", "tol_fp", "tol_cont", "tol_mono", "tol_range"):
            v = getattr(args, key)
            if v is not None:
                if v <= 0:
                    raise ConfigError(f"{key} must be positive")
                tols[key] = v
        seed = args.seed if args.seed is not None else _as_int(
            cfg["run"], "seed", 0
        )
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        handler = {
            "extend": cmd_extend,
            "fixedpoints": cmd_fixedpoints,
            "certify": cmd_certify,
            "simulate": cmd_simulate,
        }[args.command]
        return handler(cfg, out, seed, tols)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (UnsupportedDomain,) as e:
        print(f"unsupported domain: {e}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except DegenerateCase as e:
        print(f"degenerate case: {e}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except NonFiniteValue as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_AUDIT_FAIL
    except MonomapError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_AUDIT_FAIL


if __name__ == "__main__":
    raise SystemExit(main())
