import json
from pathlib import Path

import numpy as np
import pytest

from symmod.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run_cli(*argv):
    return main(list(argv))


RL_DEMO = {
    "shared": {"omega0_hz": 50.0},
    "grid": {"bus": "pcc", "kind": "grid_rl",
             "params": {"Rg": 0.02, "Lg": 0.3, "RL_coupling": 0.05}},
    "devices": [
        {"id": f"rl{k}", "bus": "pcc", "kind": "rl_branch",
         "params": {"R": 0.01, "L": 1.0}} for k in (1, 2, 3)
    ],
}


@pytest.fixture
def rl_config(tmp_path):
    path = tmp_path / "rl.json"
    path.write_text(json.dumps(RL_DEMO))
    return path


class TestAnalyzeCommand:
    def test_writes_all_outputs(self, rl_config, tmp_path):
        out = tmp_path / "out"
        assert run_cli("analyze", "--config", str(rl_config), "--out", str(out)) == 0
        for name in ("eigenvalues.csv", "participation.csv", "gpf.csv",
                     "clusters.json", "polemap.svg", "gpf_chart.svg"):
            assert (out / name).exists(), name

    def test_eigenvalues_contain_repeated_and_reduced_pair(self, rl_config, tmp_path):
        out = tmp_path / "out"
        run_cli("analyze", "--config", str(rl_config), "--out", str(out))
        lines = (out / "eigenvalues.csv").read_text().splitlines()[1:]
        w0 = 2 * np.pi * 50
        rows = [line.split(",") for line in lines]
        eigs = np.array([float(r[1]) + 1j * float(r[2]) for r in rows])
        p = RL_DEMO["devices"][0]["params"]
        g = RL_DEMO["grid"]["params"]
        lam_inner = -(p["R"] * w0 / p["L"] + 1j * w0)
        assert np.sum(np.abs(eigs - lam_inner) < 1e-6 * abs(lam_inner)) == 2
        # the reduced 2x2 oracle for the group-grid pair (per-unit converted)
        rl = g["RL_coupling"]
        gg = np.array([
            [-(p["R"] + 3 * rl) * w0 / p["L"] - 1j * w0, -3 * rl * w0 / p["L"]],
            [-rl * w0 / g["Lg"], -(g["Rg"] + rl) * w0 / g["Lg"] - 1j * w0],
        ])
        for lam in np.linalg.eigvals(gg):
            assert np.min(np.abs(eigs - lam)) < 1e-6 * abs(lam)

    def test_unknown_kind_exits_2(self, rl_config, tmp_path):
        raw = json.loads(rl_config.read_text())
        raw["devices"][0]["kind"] = "fusion_reactor"
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(raw))
        assert run_cli("analyze", "--config", str(bad), "--out", str(tmp_path)) == 2

    def test_deterministic_outputs(self, rl_config, tmp_path):
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        run_cli("analyze", "--config", str(rl_config), "--out", str(out1))
        run_cli("analyze", "--config", str(rl_config), "--out", str(out2))
        for name in ("eigenvalues.csv", "participation.csv", "gpf.csv",
                     "clusters.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_clusters_json_round_trip(self, rl_config, tmp_path):
        out = tmp_path / "out"
        run_cli("analyze", "--config", str(rl_config), "--out", str(out))
        doc = json.loads((out / "clusters.json").read_text())
        run_cli("analyze", "--config", str(rl_config), "--out", str(tmp_path / "o2"))
        doc2 = json.loads((tmp_path / "o2" / "clusters.json").read_text())
        assert [c["classification"] for c in doc["clusters"]] == \
               [c["classification"] for c in doc2["clusters"]]
        assert doc == doc2

    def test_gfm_config_marks_clusters(self, tmp_path):
        out = tmp_path / "out"
        code = run_cli("analyze", "--config", str(CONFIGS / "gfm3_ideal.json"),
                       "--out", str(out))
        assert code == 0
        doc = json.loads((out / "clusters.json").read_text())
        assert doc["system_class"] == "ideally-symmetric"
        repeated = [c for c in doc["clusters"] if c["n_g"] > 1]
        assert repeated and all(c["classification"] == "inner-group" for c in repeated)
        singles = [c for c in doc["clusters"] if c["n_g"] == 1]
        assert any(c["classification"] == "group-grid" for c in singles)
        assert all(c["geometric_multiplicity"] == c["n_g"] for c in repeated)


class TestClassifyCommand:
    def test_groups_json(self, tmp_path):
        out = tmp_path / "out"
        code = run_cli("classify", "--config", str(CONFIGS / "gfm3_quasi.json"),
                       "--out", str(out))
        assert code == 0
        doc = json.loads((out / "groups.json").read_text())
        assert doc["system_class"] == "quasi-symmetric"
        assert doc["groups"][0]["M"] == 3
        assert doc["groups"][0]["symmetry_class"] == "quasi"


class TestInvarianceCommand:
    def test_rl_inner_rc_zero(self, rl_config, tmp_path):
        out = tmp_path / "out"
        code = run_cli("invariance", "--config", str(rl_config), "--out", str(out),
                       "--vary", "grid.Lg=-50%")
        assert code == 0
        rows = (out / "rc.csv").read_text().splitlines()[1:]
        inner = [r for r in rows if r.split(",")[1] == "inner-group"]
        assert inner
        assert all(float(r.split(",")[7]) <= 1e-10 for r in inner)

    def test_unknown_parameter_exits_2(self, rl_config, tmp_path):
        code = run_cli("invariance", "--config", str(rl_config),
                       "--out", str(tmp_path), "--vary", "grid.nope=-50%")
        assert code == 2


class TestSimulateCommand:
    def test_trace_and_crosscheck(self, rl_config, tmp_path):
        scen = {"duration": 2.0, "step": 2e-4,
                "disturbances": [{"time": 0.2, "target": "grid.v_src",
                                  "kind": "step", "magnitude": 0.1}],
                "probes": ["grid.i_dq+"]}
        spath = tmp_path / "scen.json"
        spath.write_text(json.dumps(scen))
        out = tmp_path / "out"
        code = run_cli("simulate", "--config", str(rl_config),
                       "--scenario", str(spath), "--out", str(out))
        assert code == 0
        assert (out / "trace.csv").exists()
        rows = (out / "modal_crosscheck.csv").read_text().splitlines()
        assert rows[0].startswith("probe,peak_hz")
        assert rows[1].split(",")[5] == "yes"

    def test_disturbance_beyond_duration_exits_2(self, rl_config, tmp_path):
        scen = {"duration": 1.0, "step": 1e-3,
                "disturbances": [{"time": 5.0, "target": "grid.v_src"}]}
        spath = tmp_path / "scen.json"
        spath.write_text(json.dumps(scen))
        code = run_cli("simulate", "--config", str(rl_config),
                       "--scenario", str(spath), "--out", str(tmp_path))
        assert code == 2

    def test_divergent_generic_system_exits_4(self, tmp_path):
        raw = {
            "shared": {"omega0_hz": 50.0},
            "grid": {"bus": "pcc", "kind": "grid_rl",
                     "params": {"Rg": 0.2, "Lg": 0.1, "RL_coupling": 0.0}},
            "devices": [{"id": "u1", "bus": "pcc", "kind": "generic_lti",
                         "params": {"A": [[1.0]], "B": [[0.0]], "C": [[0.0]],
                                    "D": [[0.0]]}}],
        }
        cpath = tmp_path / "c.json"
        cpath.write_text(json.dumps(raw))
        scen = {"duration": 1.0, "step": 1e-3, "disturbances": []}
        spath = tmp_path / "s.json"
        spath.write_text(json.dumps(scen))
        code = run_cli("simulate", "--config", str(cpath),
                       "--scenario", str(spath), "--out", str(tmp_path))
        assert code == 4


class TestStringVsParallelCommand:
    def test_sweep_outputs(self, tmp_path):
        out = tmp_path / "out"
        code = run_cli("string-vs-parallel", "--config",
                       str(CONFIGS / "gfl_string.json"), "--out", str(out),
                       "--sweep-points", "3", "--include-zero")
        assert code == 0
        rows = (out / "svp_summary.csv").read_text().splitlines()[1:]
        dist = [float(r.split(",")[1]) for r in rows]
        assert dist[0] < 1e-9
        assert dist == sorted(dist)
        assert (out / "svp_poles_0.csv").exists()
        assert (out / "svp_convergence.svg").exists()

    def test_missing_collector_exits_2(self, rl_config, tmp_path):
        code = run_cli("string-vs-parallel", "--config", str(rl_config),
                       "--out", str(tmp_path))
        assert code == 2


class TestExitCodes:
    def test_numerical_failure_exits_3(self, tmp_path):
        # a feedthrough chain that closes the algebraic loop exactly
        raw = {
            "shared": {"omega0_hz": 50.0},
            "grid": {"bus": "pcc", "kind": "grid_rl",
                     "params": {"Rg": 0.0, "Lg": 0.5, "RL_coupling": 1.0}},
            "devices": [{"id": f"u{k}", "bus": "pcc", "kind": "generic_lti",
                         "params": {"A": [[-1.0]], "B": [[1.0]], "C": [[1.0]],
                                    "D": [[0.5]]}} for k in (1, 2)],
        }
        # grid_rl has D = RL_coupling = 1; sum(D_sub) = 1 -> I - D_b*S_D = 0
        cpath = tmp_path / "c.json"
        cpath.write_text(json.dumps(raw))
        code = run_cli("analyze", "--config", str(cpath), "--out", str(tmp_path))
        assert code == 3

    def test_log_level_env_var(self, rl_config, tmp_path, monkeypatch, capsys):
        import logging
        monkeypatch.setenv("SYMMOD_LOG", "DEBUG")
        logging.getLogger().handlers.clear()
        assert run_cli("classify", "--config", str(rl_config),
                       "--out", str(tmp_path / "o")) == 0
        assert logging.getLogger().level == logging.DEBUG


class TestPolemapConventions:
    def test_svg_is_fixed_viewport_with_class_colors(self, tmp_path):
        out = tmp_path / "out"
        run_cli("analyze", "--config", str(CONFIGS / "gfm3_ideal.json"),
                "--out", str(out))
        svg = (out / "polemap.svg").read_text()
        assert 'width="800' in svg and 'height="600' in svg
