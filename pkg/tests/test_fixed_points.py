import math

import numpy as np
import pytest

from monomap.errors import ContinuumOfFixedPoints, DegenerateCase, ParamConstraint
from monomap.fixed_points import (
    check_oracle_consistency,
    closed_form_eq7,
    closed_form_eq8_line_family,
    eq8_b3,
    find_artificial,
    find_equilibria,
    oracle_sweep,
)
from monomap.examples import make_eq7
from monomap.extension import extend_rectangle
from monomap.map_model import Box


class TestFindEquilibria:
    def test_transcendental_root(self):
        roots = find_equilibria(lambda x, y: np.cos(x), (0.0, 1.0))
        assert len(roots) == 1
        x, res = roots[0]
        assert x == pytest.approx(0.7390851332151607, abs=1e-12)
        assert abs(res) < 1e-12

    def test_multiple_roots(self):
        roots = find_equilibria(
            lambda x, y: (x - 0.2) * (x - 0.5) * (x - 0.9) + x, (0.0, 1.0)
        )
        assert [r for r, _ in roots] == pytest.approx([0.2, 0.5, 0.9], abs=1e-10)

    def test_no_roots(self):
        assert find_equilibria(lambda x, y: x + 1.0, (0.0, 1.0)) == []

    def test_continuum_detected(self):
        with pytest.raises(ContinuumOfFixedPoints):
            find_equilibria(lambda x, y: x, (0.0, 1.0))


class TestClosedFormEq7:
    def test_equilibrium_satisfies_quadratic(self):
        for p, q, r in [(1.0, 1.0, 5.0), (2.0, 3.0, 0.5), (1.1, 3.0, 2.0)]:
            x = closed_form_eq7(p, q, r)["equilibrium"]
            assert (1 + r) * x**2 + (1 - q) * x - p == pytest.approx(0.0, abs=1e-12)
            assert x > 0

    def test_regimes(self):
        assert closed_form_eq7(1.0, 1.0, 5.0)["regime"] == "i"
        assert closed_form_eq7(2.0, 3.0, 0.5)["regime"] == "ii"
        assert closed_form_eq7(1.1, 3.0, 2.0)["regime"] == "iii"
        assert closed_form_eq7(0.5, 2.0, 4.0)["regime"] is None

    def test_artificial_pair_closed_form(self):
        pairs = closed_form_eq7(0.5, 2.0, 4.0)["artificial_pairs"]
        assert len(pairs) == 1
        (x, y) = pairs[0]
        assert x == pytest.approx((3 - math.sqrt(3)) / 6, abs=1e-12)
        assert y == pytest.approx((3 + math.sqrt(3)) / 6, abs=1e-12)

    def test_no_artificial_in_stable_regimes(self):
        assert closed_form_eq7(1.0, 1.0, 5.0)["artificial_pairs"] == []


class TestArtificialSearch:
    def test_eq7_unstable_regime_finds_the_pair(self):
        spec, domain = make_eq7(0.5, 2.0, 4.0)
        x0, x1, y0, y1 = domain.bbox
        ext = extend_rectangle(spec, Box(x0, x1, y0, y1))
        rep = find_artificial(ext)
        assert rep.has_artificial
        (x, y), res = rep.artificial[0]
        assert x == pytest.approx((3 - math.sqrt(3)) / 6, abs=1e-9)
        assert y == pytest.approx((3 + math.sqrt(3)) / 6, abs=1e-9)
        assert abs(res) < 5e-9

    def test_numeric_agrees_with_closed_form(self):
        spec, domain = make_eq7(0.5, 2.0, 4.0)
        x0, x1, y0, y1 = domain.bbox
        ext = extend_rectangle(spec, Box(x0, x1, y0, y1))
        rep = find_artificial(ext)
        exact = closed_form_eq7(0.5, 2.0, 4.0)["artificial_pairs"][0]
        got = rep.artificial[0][0]
        assert got == pytest.approx(exact, abs=1e-9)

    def test_eq8_has_none(self, eq8_ext):
        rep = find_artificial(eq8_ext)
        assert not rep.has_artificial
        assert [x for x, _ in rep.equilibria] == pytest.approx([0.7], abs=1e-9)

    def test_xfy_pinned_corner_pair(self, xfy_ext):
        rep = find_artificial(xfy_ext)
        pairs = [p for p, _ in rep.artificial]
        assert (0.01, 3.0) in [
            (pytest.approx(px, abs=1e-9), pytest.approx(py, abs=1e-9))
            for px, py in pairs
        ] or any(
            abs(px - 0.01) < 1e-9 and abs(py - 3.0) < 1e-9 for px, py in pairs
        )

    def test_report_serializes(self, eq8_ext):
        import json

        doc = find_artificial(eq8_ext).to_dict()
        assert doc["schema_version"] >= 1
        json.dumps(doc)


class TestOracleConsistency:
    def test_eq8_consistent(self, eq8_ext):
        rep = find_artificial(eq8_ext)
        oracle = oracle_sweep(eq8_ext)
        ok, detail = check_oracle_consistency(eq8_ext, rep, oracle)
        assert ok

    def test_eq7_unstable_consistent(self):
        spec, domain = make_eq7(0.5, 2.0, 4.0)
        x0, x1, y0, y1 = domain.bbox
        ext = extend_rectangle(spec, Box(x0, x1, y0, y1))
        rep = find_artificial(ext)
        ok, _ = check_oracle_consistency(ext, rep, oracle_sweep(ext))
        assert ok

    def test_suppressed_root_is_flagged(self):
        spec, domain = make_eq7(0.5, 2.0, 4.0)
        x0, x1, y0, y1 = domain.bbox
        ext = extend_rectangle(spec, Box(x0, x1, y0, y1))
        rep = find_artificial(ext)
        rep.artificial = []  # pretend the sweep missed the pair
        ok, detail = check_oracle_consistency(ext, rep, oracle_sweep(ext))
        assert not ok


class TestEq8LineFamily:
    def test_b3_frozen_value(self):
        assert eq8_b3(0.7, 0.3) == pytest.approx(0.05882058, abs=1e-8)

    def test_sign_constant_along_the_family(self):
        doc = closed_form_eq8_line_family(1.0, 0.3, m_probe=10.0)
        assert doc["x_star"] == pytest.approx(0.7)
        assert doc["sign_constant"]
        assert all(r != 0 for r in doc["residual_samples"])

    def test_degenerate_height_rejected(self):
        with pytest.raises(DegenerateCase):
            closed_form_eq8_line_family(1.0, 0.5, m_probe=10.0)

    def test_invalid_params_rejected(self):
        with pytest.raises(ParamConstraint):
            closed_form_eq8_line_family(0.2, 0.4, m_probe=10.0)
