import json
import subprocess
import sys

import numpy as np
import pytest

from dickeprep import cli

TWO_PHOTON = "[0, 0, 1]"
COARSE = ["--grid-l", "2", "--grid-h", "0.2"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestPlan:
    def test_two_photon_alphas(self, capsys):
        code, out, _ = run(capsys, "plan", "--target", TWO_PHOTON, "--epsilon", "0")
        assert code == cli.EXIT_OK
        report = json.loads(out)
        alphas = [complex(*a) for a in report["schedule"]["alphas"]]
        assert np.allclose(alphas, [0.5, -1.0, 0.5], atol=1e-14)

    def test_default_target_design_fidelity(self, capsys):
        code, out, _ = run(capsys, "plan")
        assert code == 0
        assert json.loads(out)["design_point"]["fidelity"] >= 1 - 1e-10

    def test_complex_roots_exit_code(self, capsys):
        code, _, err = run(capsys, "plan", "--target", "[1, 0, 0, 1]")
        assert code == cli.EXIT_SYNTHESIS
        assert "--complex" in err

    def test_complex_solver(self, capsys):
        code, out, _ = run(capsys, "plan", "--target", "[[0.5, 0], [0, 0.5], [0.7, 0]]", "--complex")
        assert code == 0
        report = json.loads(out)
        assert report["complex_solutions"][0]["fidelity"] >= 1 - 1e-8

    def test_complex_needs_degree_two(self, capsys):
        code, _, _ = run(capsys, "plan", "--target", "[0, 0, 0, 0, 1]", "--complex")
        assert code == cli.EXIT_SYNTHESIS

    def test_zero_kappa_rejected(self, capsys):
        assert run(capsys, "plan", "--kappa", "0")[0] == cli.EXIT_CONFIG


class TestConfig:
    def test_bad_json(self, capsys):
        assert run(capsys, "plan", "--target", "[0, 1")[0] == cli.EXIT_CONFIG

    def test_negative_epsilon(self, capsys):
        assert run(capsys, "plan", "--epsilon", "-1")[0] == cli.EXIT_CONFIG

    def test_unknown_key(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("kappa = 0.5\nbogus = 1\n")
        assert run(capsys, "plan", "--config", str(cfg))[0] == cli.EXIT_CONFIG

    def test_file_honoured_and_flags_override(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"# two photons\ntarget = {TWO_PHOTON}\nepsilon = 0.0\nkappa = 0.3\n")
        _, out, _ = run(capsys, "plan", "--config", str(cfg))
        from_file = json.loads(out)
        assert np.allclose([a[0] for a in from_file["schedule"]["alphas"]], [0.5, -1.0, 0.5])
        _, out, _ = run(capsys, "plan", "--config", str(cfg), "--kappa", "0.7")
        assert json.loads(out)["config_hash"] != from_file["config_hash"]

    def test_digest_ignores_output_paths(self):
        a = cli.RunConfig(out="a.csv")
        b = cli.RunConfig(out="b.csv", workers=4)
        assert a.digest() == b.digest()
        assert a.digest() != cli.RunConfig(kappa=0.2).digest()


class TestRun:
    def test_design_outcome(self, capsys):
        code, out, _ = run(capsys, "run", "--target", TWO_PHOTON, "--kappa", "0.5", "--r", "-1")
        assert code == 0
        report = json.loads(out)
        assert report["fidelity"] >= 1 - 1e-10
        amps = np.array([complex(*a) for a in report["fock_amplitudes"]])
        assert np.linalg.norm(amps) == pytest.approx(1.0, abs=1e-10)

    def test_feedback_report(self, capsys):
        code, out, _ = run(capsys, "run", "--outcomes", "[0.6]", "--feedback")
        report = json.loads(out)
        assert report["feedback"]["fidelity"] >= report["fidelity"]

    def test_outcome_count(self, capsys):
        assert run(capsys, "run", "--outcomes", "[0.1, 0.2]")[0] == cli.EXIT_CONFIG


class TestTradeoff:
    def test_deterministic_csv(self, tmp_path, capsys):
        paths = [tmp_path / f"t{i}.csv" for i in range(2)]
        for p in paths:
            assert cli.main(["tradeoff", "--out", str(p)] + COARSE) == 0
        a, b = (p.read_bytes() for p in paths)
        assert a == b
        text = a.decode()
        assert "\r" not in text
        assert text.startswith("# tool: dickeprep")
        assert "strategy,parameter,success_probability,average_fidelity" in text
        summary = json.loads((tmp_path / "t0.csv.summary.json").read_text())
        assert set(summary["fidelity_at_probability"]) == {"basic", "advanced", "advanced+feedback"}
        assert "config_hash" in summary

    def test_single_strategy(self, capsys):
        code, out, err = run(capsys, "tradeoff", "--strategy", "advanced", "--feedback", *COARSE)
        assert code == 0
        rows = [l for l in out.splitlines() if l and not l.startswith("#")][1:]
        assert rows and all(r.startswith("advanced+feedback,") for r in rows)
        assert json.loads(err)["command"] == "tradeoff"

    def test_explicit_sweep(self, capsys):
        code, out, _ = run(capsys, "tradeoff", "--strategy", "basic", "--sweep", "[0.5, 1.0]", *COARSE)
        rows = [l for l in out.splitlines() if l and not l.startswith("#")][1:]
        assert code == 0 and len(rows) == 2

    def test_no_rescale_recorded(self, capsys):
        _, out, _ = run(capsys, "tradeoff", "--no-rescale", *COARSE)
        assert "# rescale: false" in out


class TestHeatmap:
    def test_single_point(self, capsys):
        code, out, _ = run(capsys, "heatmap", "--target", TWO_PHOTON, "--r", "-1", "--grid-l", "0")
        assert code == 0
        lines = [l for l in out.splitlines() if not l.startswith("#")]
        assert lines[0] == "p1,p2,density,fidelity"
        assert len(lines) == 2
        assert float(lines[1].split(",")[3]) >= 1 - 1e-10

    def test_needs_two_steps(self, capsys):
        assert run(capsys, "heatmap")[0] != 0


class TestDirectMap:
    def test_report(self, capsys):
        code, out, _ = run(capsys, "direct-map", "--target", TWO_PHOTON)
        assert code == 0
        report = json.loads(out)
        assert report["design_point"]["fidelity"] >= 1 - 1e-10
        u = [complex(*a) for a in report["light_amplitudes"]]
        # |0> - sqrt2 (1 + kappa^2) |2> for kappa = 0.5
        assert len(u) == 3
        assert (u[2] / u[0]).real == pytest.approx(-1.25 * np.sqrt(2), rel=1e-12)

    def test_curves_to_file(self, capsys, tmp_path):
        out = tmp_path / "d.csv"
        code, _, err = run(capsys, "direct-map", "--target", TWO_PHOTON, "--out", str(out), *COARSE)
        assert code == 0
        assert "# command: direct-map" in out.read_text()
        assert "light_amplitudes" in json.loads(err)


class TestOracleCheck:
    def test_default_passes(self, capsys):
        code, out, _ = run(capsys, "oracle-check")
        assert code == 0
        assert out.startswith("PASS")

    def test_small_truncation_fails(self, capsys):
        code, out, _ = run(capsys, "oracle-check", "--oracle-dim", "8")
        assert code == cli.EXIT_ORACLE
        assert "worst density" in out

    def test_zero_coupling(self, capsys):
        assert run(capsys, "oracle-check", "--kappa", "0")[0] == 0


def test_module_entry_point():
    res = subprocess.run(
        [sys.executable, "-m", "dickeprep", "--version"], capture_output=True, text=True, check=False
    )
    assert res.returncode == 0
    assert "0.1.0" in res.stdout
