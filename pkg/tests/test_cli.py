"""End-to-end subcommand tests driving the CLI exactly as a user would."""

import json

import numpy as np
import pytest

from condensim.cli import main

K3_DOC = """
chain:
  rates: [[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]
model:
  b: 1.5
  N: [{n_list}]
experiment:
  seed: 42
  paths: {paths}
  delta: 0.05
  subset: [1, 2]
  sample_times: {sample_times}
output:
  directory: {outdir}
"""


def write_config(tmp_path, paths=40, n_list="20", sample_times="[]", name="cfg.yaml"):
    out = tmp_path / "out"
    doc = K3_DOC.format(
        paths=paths, n_list=n_list, sample_times=sample_times, outdir=out
    )
    cfg = tmp_path / name
    cfg.write_text(doc)
    return cfg, out


def read_rows(path):
    lines = path.read_text().strip().split("\n")
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


class TestChainInfo:
    def test_trace_rate_in_output(self, tmp_path, capsys):
        cfg, out = write_config(tmp_path)
        assert main(["chain-info", str(cfg)]) == 0
        header, rows = read_rows(out / "chain_info.csv")
        assert header == ["quantity", "i", "j", "value"]
        trace = {
            (r[1], r[2]): float(r[3]) for r in rows if r[0] == "r_B"
        }
        assert trace[("1", "2")] == pytest.approx(1.5)
        assert trace[("2", "1")] == pytest.approx(1.5)
        m_rows = [float(r[3]) for r in rows if r[0] == "m"]
        np.testing.assert_allclose(m_rows, [1 / 3] * 3, atol=1e-12)
        a0 = [float(r[3]) for r in rows if r[0] == "a0"]
        # b = 1.5 with the default p = 1.25 on K3: a0 = (b - p)/b = 1/6.
        assert a0 == [pytest.approx(1 / 6)]
        assert "r_B" in capsys.readouterr().out

    def test_manifest_written(self, tmp_path):
        cfg, out = write_config(tmp_path)
        assert main(["chain-info", str(cfg)]) == 0
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["subcommand"] == "chain-info"
        assert manifest["seed"] == 42
        assert manifest["seed_source"] == "config"


class TestZrpRun:
    def test_sample_and_condensation_files(self, tmp_path):
        cfg, out = write_config(
            tmp_path, paths=20, n_list="15", sample_times="[0.0, 0.05, 0.1]"
        )
        assert main(["zrp-run", str(cfg)]) == 0
        header, rows = read_rows(out / "zrp_samples_N15.csv")
        assert header == ["path_id", "t", "x_1", "x_2", "x_3"]
        for row in rows:
            coords = np.array([float(v) for v in row[2:]])
            assert coords.sum() == pytest.approx(1.0, abs=1e-12)
        header, rows = read_rows(out / "zrp_condensation_N15.csv")
        assert header == ["path_id", "t_cond", "winner"]
        assert len(rows) == 20

    def test_byte_identical_reruns(self, tmp_path):
        cfg, out = write_config(tmp_path, paths=25, n_list="20")
        assert main(["zrp-run", str(cfg)]) == 0
        first = (out / "zrp_condensation_N20.csv").read_bytes()
        assert main(["zrp-run", str(cfg)]) == 0
        assert (out / "zrp_condensation_N20.csv").read_bytes() == first


class TestDiffRun:
    def test_vertex_start_single_absorption_row(self, tmp_path):
        cfg, out = write_config(tmp_path, paths=3)
        doc = cfg.read_text() + "\n"
        doc = doc.replace("subset: [1, 2]", "subset: [1, 2]\n  x0: [1.0, 0.0, 0.0]")
        cfg.write_text(doc)
        assert main(["diff-run", str(cfg)]) == 0
        header, rows = read_rows(out / "diff_absorption.csv")
        assert header == ["path_id", "n", "sigma_n", "B_n", "trapped_vertex"]
        assert len(rows) == 3
        for row in rows:
            assert float(row[2]) == 0.0
            assert row[3] == "1"  # bitmask of {site 1}
            assert row[4] == "1"

    def test_interior_start_traps_and_masks_decrease(self, tmp_path):
        cfg, out = write_config(tmp_path, paths=15, sample_times="[0.0, 0.1, 0.5]")
        assert main(["diff-run", str(cfg)]) == 0
        header, rows = read_rows(out / "diff_absorption.csv")
        by_path = {}
        for row in rows:
            by_path.setdefault(row[0], []).append(row)
        assert len(by_path) == 15
        for path_rows in by_path.values():
            masks = [int(r[3]) for r in path_rows]
            pops = [bin(m).count("1") for m in masks]
            assert pops == sorted(pops, reverse=True)
            assert pops[-1] == 1
            assert path_rows[-1][4] != ""
        header, rows = read_rows(out / "diff_samples.csv")
        assert header[-1] == "active_B"

    def test_byte_identical_reruns(self, tmp_path):
        cfg, out = write_config(tmp_path, paths=10)
        assert main(["diff-run", str(cfg)]) == 0
        first = (out / "diff_absorption.csv").read_bytes()
        assert main(["diff-run", str(cfg)]) == 0
        assert (out / "diff_absorption.csv").read_bytes() == first


class TestCompare:
    def test_report_columns(self, tmp_path):
        cfg, out = write_config(tmp_path, paths=60, n_list="10, 20")
        assert main(["compare", str(cfg)]) == 0
        header, rows = read_rows(out / "compare_report.csv")
        assert header[0] == "N"
        assert [r[0] for r in rows] == ["10", "20"]
        for row in rows:
            assert 0.0 <= float(row[1]) <= 1.0


class TestVerify:
    def test_k3_verify_passes(self, tmp_path):
        cfg, out = write_config(tmp_path, paths=300)
        assert main(["verify", str(cfg)]) == 0
        header, rows = read_rows(out / "verify_report.csv")
        checks = {r[0]: r for r in rows}
        assert all(r[-1] == "true" for r in rows)
        assert float(checks["trace_drift_vs_harmonic"][2]) <= 1e-10
        assert float(checks["partition_of_unity"][2]) <= 1e-12
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert all(manifest["checks"].values())

    def test_exit_codes_for_bad_configs(self, tmp_path):
        missing = tmp_path / "nope.yaml"
        assert main(["verify", str(missing)]) == 2
        bad = tmp_path / "bad.yaml"
        bad.write_text("chain:\n  rates: [[0.0, 1.0], [1.0, 0.0]]\n")
        assert main(["verify", str(bad)]) == 2


class TestExitCodes:
    def test_failed_check_exits_one(self, tmp_path, monkeypatch):
        import condensim.cli as cli
        from condensim.experiments import SuperharmonicReport

        def fake_sign_check(chain, subset, b, p, eps, grid):
            return SuperharmonicReport(
                chain_id="x", B=tuple(subset), b=b, p=p, eps=eps, a0=0.1,
                resolution=grid, n_points=1, max_value=1.0, argmax=(0.0,) * 3,
            )

        monkeypatch.setattr(cli, "superharmonic_sign_check", fake_sign_check)
        cfg, out = write_config(tmp_path, paths=50)
        assert main(["verify", str(cfg)]) == 1
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["checks"]["superharmonic_sign"] is False

    def test_runtime_error_exits_three(self, tmp_path, monkeypatch):
        import condensim.cli as cli
        from condensim.errors import StepBlowupError

        def explode(*args, **kwargs):
            raise StepBlowupError("dt too large near the boundary")

        monkeypatch.setattr(cli, "simulate_diffusion_ensemble", explode)
        cfg, out = write_config(tmp_path, paths=5)
        assert main(["diff-run", str(cfg)]) == 3
        # The manifest is still written for failed runs.
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["checks"]["completed"] is False


class TestPsi4Check:
    def test_report(self, tmp_path):
        cfg, out = write_config(tmp_path)
        doc = cfg.read_text().replace("b: 1.5", "b: 2.0") + ""
        doc = doc.replace("seed: 42", "seed: 42\n  p: 1.5\n  eps: 0.3\n  grid: 30")
        cfg.write_text(doc)
        assert main(["psi4-check", str(cfg)]) == 0
        header, rows = read_rows(out / "psi4_report.csv")
        row = dict(zip(header, rows[0]))
        assert float(row["a0"]) == pytest.approx(0.25)
        assert float(row["max_value"]) <= 1e-12
        assert row["passed"] == "true"


class TestSeedOverride:
    def test_env_seed_recorded(self, tmp_path, monkeypatch):
        cfg, out = write_config(tmp_path, paths=5)
        monkeypatch.setenv("CONDENSIM_SEED", "777")
        assert main(["diff-run", str(cfg)]) == 0
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["seed"] == 777
        assert manifest["seed_source"] == "env"

    def test_env_seed_changes_output(self, tmp_path, monkeypatch):
        cfg, out = write_config(tmp_path, paths=10)
        assert main(["diff-run", str(cfg)]) == 0
        base = (out / "diff_absorption.csv").read_bytes()
        monkeypatch.setenv("CONDENSIM_SEED", "777")
        assert main(["diff-run", str(cfg)]) == 0
        assert (out / "diff_absorption.csv").read_bytes() != base


def test_out_flag_overrides_directory(tmp_path):
    cfg, _ = write_config(tmp_path, paths=3)
    alt = tmp_path / "elsewhere"
    assert main(["chain-info", str(cfg), "--out", str(alt)]) == 0
    assert (alt / "chain_info.csv").exists()
