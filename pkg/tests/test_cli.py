"""
End-to-end tests for the `ruelle` command line.
"""

import json
from pathlib import Path

import pytest

from main import build_config, build_parser, main
from services.export import read_csv_payload


SAMPLES = Path(__file__).resolve().parent.parent / "sample_models"
ROOF_MODEL = str(SAMPLES / "full2_roof_sqrt2.json")
GOLDEN_MODEL = str(SAMPLES / "golden_mean.json")

COMMANDS = ["thermo", "twist-scan", "orbits", "zeta", "dolgopyat", "correlate", "selftest"]


class TestParser:
    """Tests for argument parsing and config merging."""

    @pytest.mark.parametrize("command", COMMANDS)
    def test_help(self, command, capsys):
        with pytest.raises(SystemExit) as exc_info:
            build_parser().parse_args([command, "--help"])
        assert exc_info.value.code == 0
        assert command in capsys.readouterr().out

    def test_flags_become_params(self):
        args = build_parser().parse_args(["orbits", "--model", ROOF_MODEL, "--lambda-max", "6",
                                          "--orbit-cap", "100", "--seed", "3"])
        data = build_config(args)
        assert data["params"] == {"command": "orbits", "lambda_max": 6.0}
        assert data["caps"] == {"orbit_cap": 100}
        assert data["seed"] == 3

    def test_flags_override_config_file(self, write_json):
        config = write_json("run.json", {"model": ROOF_MODEL,
                                         "params": {"command": "orbits", "steps": 2,
                                                    "lambda_max": 4}})
        args = build_parser().parse_args(["orbits", "--config", str(config), "--steps", "5"])
        data = build_config(args)
        assert data["params"] == {"command": "orbits", "steps": 5, "lambda_max": 4}
        assert data["model"] == ROOF_MODEL


class TestMain:
    """Tests for full runs through main()."""

    def test_missing_model(self, tmp_path, capsys):
        missing = tmp_path / "nowhere.json"
        code = main(["orbits", "--model", str(missing), "--out", str(tmp_path / "o.csv"), "-q"])
        assert code == 2
        assert str(missing) in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main(["orbits", "--config", str(tmp_path / "none.json"), "-q"]) == 2

    def test_invalid_parameter(self, tmp_path):
        code = main(["orbits", "--model", ROOF_MODEL, "--seed", "-1",
                     "--out", str(tmp_path / "o.csv"), "-q"])
        assert code == 2

    def test_unknown_function_name(self, tmp_path, capsys):
        code = main(["orbits", "--model", ROOF_MODEL, "--roof", "nope",
                     "--out", str(tmp_path / "o.csv"), "-q"])
        assert code == 2
        assert "nope" in capsys.readouterr().err

    def test_frequency_below_one(self, tmp_path, capsys):
        code = main(["twist-scan", "--model", ROOF_MODEL, "--b", "0.5,2",
                     "--out", str(tmp_path / "scan.csv"), "-q"])
        assert code == 2
        assert "|b| >= 1" in capsys.readouterr().err

    def test_capacity_exit_code(self, tmp_path):
        code = main(["orbits", "--model", ROOF_MODEL, "--orbit-cap", "5",
                     "--out", str(tmp_path / "o.csv"), "-q"])
        assert code == 3

    def test_orbits_output_is_reproducible(self, tmp_path):
        args = ["orbits", "--model", ROOF_MODEL, "--lambda-max", "6", "--steps", "3", "-q"]
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(args + ["--out", str(first)]) == 0
        assert main(args + ["--out", str(second)]) == 0
        assert first.read_bytes() == second.read_bytes()
        rows = read_csv_payload(first)
        assert rows[0] == ["lambda", "pi", "li", "ratio", "abs_error"]
        assert len(rows) == 4
        text = first.read_text(encoding="utf-8")
        assert "# model: full2-roof-sqrt2" in text
        assert "# seed: 0" in text

    def test_thermo_without_pf_solve(self, tmp_path):
        out = tmp_path / "thermo.csv"
        code = main(["thermo", "--model", GOLDEN_MODEL, "--no-solve-pf", "--gibbs-depth", "4",
                     "--out", str(out), "-q"])
        assert code == 0
        rows = read_csv_payload(out)
        assert rows[0] == ["word", "nu", "e_gm", "ratio"]
        # admissible golden-mean words of length 4
        assert len(rows) == 1 + 8

    def test_zeta_json_report(self, tmp_path):
        out = tmp_path / "zeta.json"
        code = main(["zeta", "--model", GOLDEN_MODEL, "--s", "0.8+0.5i", "--nmax", "10",
                     "--check-orbits", "--out", str(out), "-q"])
        assert code == 0
        payload = json.loads(out.read_text(encoding="utf-8"))
        result = payload["result"]
        assert result["n_max"] == 10
        assert result["s"] == {"re": 0.8, "im": 0.5}
        assert result["orbit_log_sum_error"] < 1e-10
        assert payload["metadata"]["model"] == "golden-mean"

    def test_twist_scan_table(self, tmp_path):
        out = tmp_path / "scan.csv"
        code = main(["twist-scan", "--model", ROOF_MODEL, "--b", "2,8", "--rho", "0.99",
                     "--m-cap", "60", "--out", str(out), "-q"])
        assert code == 0
        rows = read_csv_payload(out)
        assert rows[0] == ["b", "spectral_radius", "m_star", "fitted_T"]
        assert [row[0] for row in rows[1:]] == ["2.0", "8.0"]

    def test_dolgopyat_report(self, tmp_path):
        out = tmp_path / "lab.json"
        code = main(["dolgopyat", "--model", ROOF_MODEL, "--b", "16", "--steps", "5",
                     "--out", str(out), "-q"])
        assert code in (0, 1)
        payload = json.loads(out.read_text(encoding="utf-8"))
        assert payload["result"]["family"]["s"] == 4
        assert payload["result"]["checks"]["all_hold"] is True
        cone = payload["result"]["cone"]
        assert cone["members"] == cone["tested"] == cone["closed"] == 100
        damping = payload["result"]["damping"]
        # H = 1 plus every sampled cone member
        assert damping["members"] == 101
        assert damping["failed"] == 0
        assert payload["metadata"]["ledger"]["C10"] >= 8.0
        assert len(payload["result"]["table"]["rows"]) == 6

    def test_dolgopyat_flat_roof(self, tmp_path):
        code = main(["dolgopyat", "--model", str(SAMPLES / "full2_constant_roof.json"),
                     "--b", "16", "--out", str(tmp_path / "lab.json"), "-q"])
        assert code == 4
