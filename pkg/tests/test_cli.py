import json

import numpy as np
import pytest

from monomap.cli import compile_expression, main, parse_config
from monomap.errors import ConfigError

EQ8_CFG = """
[map]
family = eq8
p = 1.0
h = 0.3

[run]
seed = 0
"""


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestConfigParsing:
    def test_sections_and_values(self):
        cfg = parse_config(EQ8_CFG)
        assert cfg["map"]["family"] == "eq8"
        assert cfg["run"]["seed"] == "0"

    def test_comments_and_blank_lines(self):
        cfg = parse_config("# top\n[map]\nfamily = eq8  # inline\n\np=1\nh=0.3\n")
        assert cfg["map"]["family"] == "eq8"

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("[nope]\nx = 1\n")

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("[run]\nwarp_speed = 9\n")

    def test_key_outside_section_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("family = eq8\n")

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("[map]\nfamily eq8\n")


class TestExpressionCompiler:
    def test_arithmetic(self):
        f = compile_expression("(p + q*x) / (1 + x + r*y)", {"p": 1, "q": 2, "r": 3})
        assert f(0.5, 0.25) == pytest.approx((1 + 1.0) / (1 + 0.5 + 0.75))

    def test_functions_and_power(self):
        f = compile_expression("exp(-x) + log(1 + y) + x**2", {})
        assert f(1.0, 0.0) == pytest.approx(np.exp(-1.0) + 1.0)

    def test_vectorized(self):
        f = compile_expression("x - y", {})
        out = f(np.array([1.0, 2.0]), np.array([0.5, 0.5]))
        assert out == pytest.approx([0.5, 1.5])

    @pytest.mark.parametrize(
        "expr",
        [
            "__import__('os').system('true')",
            "x.denominator",
            "(lambda: 1)()",
            "x if y else 0",
            "open('/etc/passwd')",
            "x @ y",
        ],
    )
    def test_unsafe_constructs_rejected(self, expr):
        with pytest.raises(ConfigError):
            compile_expression(expr, {})

    def test_unknown_name_rejected(self):
        with pytest.raises(ConfigError):
            compile_expression("x + z", {})


class TestCommands:
    def test_extend_writes_artifacts(self, tmp_path):
        cfg = write_cfg(tmp_path, EQ8_CFG)
        out = tmp_path / "out"
        assert main(["extend", "--config", cfg, "--out", str(out)]) == 0
        assert (out / "extension.json").exists()
        assert (out / "extension_audit.json").exists()
        assert (out / "pieces.svg").exists()
        audit = json.loads((out / "extension_audit.json").read_text())
        assert "schema_version" in audit

    def test_fixedpoints_reports_equilibrium(self, tmp_path):
        cfg = write_cfg(tmp_path, EQ8_CFG)
        out = tmp_path / "out"
        assert main(["fixedpoints", "--config", cfg, "--out", str(out)]) == 0
        doc = json.loads((out / "fixed_points.json").read_text())
        assert doc["oracle_consistent"]
        assert doc["artificial"] == []

    def test_certify_globally_stable(self, tmp_path):
        cfg = write_cfg(tmp_path, EQ8_CFG)
        out = tmp_path / "out"
        assert main(["certify", "--config", cfg, "--out", str(out)]) == 0
        doc = json.loads((out / "certificate.json").read_text())
        assert doc["verdict"] == "GloballyStable"
        for name in ("certificate.md", "chains.csv", "orbits.csv", "phase.svg"):
            assert (out / name).exists()

    def test_certify_is_byte_identical_with_fixed_seed(self, tmp_path):
        cfg = write_cfg(tmp_path, EQ8_CFG)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["certify", "--config", cfg, "--out", str(out1)]) == 0
        assert main(["certify", "--config", cfg, "--out", str(out2)]) == 0
        assert (out1 / "certificate.json").read_bytes() == (
            out2 / "certificate.json"
        ).read_bytes()

    def test_simulate_single_orbit(self, tmp_path):
        cfg = write_cfg(
            tmp_path,
            EQ8_CFG + "x0 = 0.6\nx_m1 = 0.2\nsteps = 100\n",
        )
        out = tmp_path / "out"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        assert (out / "orbits.csv").exists()
        assert (out / "orbit.svg").exists()


class TestExitCodes:
    def test_config_error_is_4(self, tmp_path):
        cfg = write_cfg(tmp_path, "[run]\nwarp = 9\n")
        assert main(["certify", "--config", cfg, "--out", str(tmp_path)]) == 4

    def test_missing_file_is_4(self, tmp_path):
        assert main(["certify", "--config", str(tmp_path / "nope.cfg"),
                     "--out", str(tmp_path)]) == 4

    def test_degenerate_family_is_1(self, tmp_path):
        cfg = write_cfg(tmp_path, "[map]\nfamily = eq8\np = 1.0\nh = 0.5\n")
        assert main(["certify", "--config", cfg, "--out", str(tmp_path)]) == 1

    def test_unstable_regime_is_1(self, tmp_path):
        cfg = write_cfg(
            tmp_path, "[map]\nfamily = eq7\np = 0.5\nq = 2.0\nr = 4.0\n"
        )
        assert main(["certify", "--config", cfg, "--out", str(tmp_path)]) == 1

    def test_unsupported_domain_is_3(self, tmp_path):
        cfg = write_cfg(
            tmp_path,
            "[map]\nfamily = expression\nexpr = (1 + x) / (1 + x + y)\n"
            "signature = inc_dec\n\n[domain]\nkind = polygon\n"
            "vertices = 0,0;4,0;4,4;1,4;1,2;3,2;3,3;2,3;2,5;0,5\n",
        )
        assert main(["certify", "--config", cfg, "--out", str(tmp_path)]) == 3
        assert main(["extend", "--config", cfg, "--out", str(tmp_path)]) == 3

    def test_negative_tolerance_is_4(self, tmp_path):
        cfg = write_cfg(tmp_path, EQ8_CFG)
        assert main(["certify", "--config", cfg, "--out", str(tmp_path),
                     "--tol-fp", "-1"]) == 4


class TestOverrides:
    def test_seed_override_changes_nothing_material(self, tmp_path):
        cfg = write_cfg(tmp_path, EQ8_CFG)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["certify", "--config", cfg, "--out", str(out1),
                     "--seed", "5"]) == 0
        assert main(["certify", "--config", cfg, "--out", str(out2),
                     "--seed", "5"]) == 0
        assert (out1 / "certificate.json").read_bytes() == (
            out2 / "certificate.json"
        ).read_bytes()

    def test_threads_env_does_not_change_results(self, tmp_path, monkeypatch):
        cfg = write_cfg(tmp_path, EQ8_CFG)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["certify", "--config", cfg, "--out", str(out1)]) == 0
        monkeypatch.setenv("MONOMAP_THREADS", "2")
        assert main(["certify", "--config", cfg, "--out", str(out2)]) == 0
        assert (out1 / "certificate.json").read_bytes() == (
            out2 / "certificate.json"
        ).read_bytes()
