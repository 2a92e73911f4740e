import json

import numpy as np
import pytest

from symmod.config import apply_vary, build_network, load_config, make_config
from symmod.errors import ConfigInvalid, UnknownParameter
from symmod.lti import assemble_rl_example
from symmod import pipeline

from conftest import RL_PARAMS


def rl_raw():
    return {
        "shared": {"omega0_hz": 50.0},
        "grid": {"bus": "pcc", "kind": "grid_rl",
                 "params": {"Rg": 0.2, "Lg": 0.1, "RL_coupling": 0.5}},
        "devices": [
            {"id": f"rl{k}", "bus": "pcc", "kind": "rl_branch",
             "params": {"R": 1.0, "L": 1.0}} for k in (1, 2, 3)
        ],
        "lines": [],
    }


class TestValidation:
    def test_valid_config_loads(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps(rl_raw()))
        cfg = load_config(path)
        assert len(cfg.devices) == 3

    def test_unknown_kind_names_field(self):
        raw = rl_raw()
        raw["devices"][1]["kind"] = "warp_drive"
        with pytest.raises(ConfigInvalid, match=r"devices\[1\].kind"):
            make_config(raw)

    def test_unknown_param_names_field(self):
        raw = rl_raw()
        raw["devices"][0]["params"]["Lx"] = 1.0
        with pytest.raises(ConfigInvalid, match=r"devices\[0\].params.Lx"):
            make_config(raw)

    def test_missing_required_param(self):
        raw = rl_raw()
        del raw["devices"][0]["params"]["L"]
        with pytest.raises(ConfigInvalid, match="L"):
            make_config(raw)

    def test_duplicate_ids_rejected(self):
        raw = rl_raw()
        raw["devices"][1]["id"] = "rl1"
        with pytest.raises(ConfigInvalid, match="duplicate"):
            make_config(raw)

    def test_device_off_grid_bus_needs_line(self):
        raw = rl_raw()
        raw["devices"][0]["bus"] = "b1"
        with pytest.raises(ConfigInvalid, match="exactly one line"):
            make_config(raw)
        raw["lines"] = [{"from": "b1", "to": "pcc", "R": 0.01, "X": 0.05}]
        make_config(raw)

    def test_line_to_unknown_bus_rejected(self):
        raw = rl_raw()
        raw["lines"] = [{"from": "nowhere", "to": "pcc", "R": 0.01, "X": 0.05}]
        with pytest.raises(ConfigInvalid, match="unknown bus"):
            make_config(raw)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigInvalid, match="not found"):
            load_config(tmp_path / "absent.json")

    def test_gfm_requires_operating_point(self):
        raw = rl_raw()
        raw["devices"][0] = {"id": "g1", "bus": "pcc", "kind": "gfm",
                             "params": {"Lf": 0.08, "Cf": 0.05, "Lc": 0.03,
                                        "f_droop": 40.0, "droop_gain": 0.1,
                                        "f_lpf": 1.0, "f_vdq": 50.0, "f_idq": 250.0,
                                        "P0": 0.0, "V0": 1.0, "theta0": 0.0}}
        with pytest.raises(ConfigInvalid, match="operating_point"):
            make_config(raw)


class TestNetworkBuild:
    def test_rl_network_matches_closed_form(self):
        raw = rl_raw()
        cfg = make_config(raw)
        subs, grid = build_network(cfg)
        # per-unit conversion: L_natural = L_pu / omega0
        w0 = cfg.omega0
        ref = assemble_rl_example(R=1.0, L=1.0 / w0, R_L=0.5, R_g=0.2,
                                  L_g=0.1 / w0, omega=w0)
        from symmod.lti import assemble_group_grid
        sys = assemble_group_grid({s: m.model for s, m in subs.items()}, grid.model)
        assert np.max(np.abs(sys.model.A - ref.model.A)) < 1e-9

    def test_line_folds_into_branch(self):
        raw = rl_raw()
        raw["devices"][0]["bus"] = "b1"
        raw["lines"] = [{"from": "b1", "to": "pcc", "R": 0.5, "X": 1.0}]
        cfg = make_config(raw)
        subs, _ = build_network(cfg)
        w0 = cfg.omega0
        a = subs["rl1"].model.A[0, 0]
        assert np.isclose(a, -((1.5) * w0 / 2.0 + 1j * w0))

    def test_mixed_port_families_rejected(self):
        raw = rl_raw()
        raw["devices"][1] = {"id": "g1", "bus": "pcc", "kind": "gfl",
                             "params": {"Lf": 0.1, "f_pll": 20.0, "f_idq": 200.0,
                                        "P0": 0.1, "Q0": 0.0, "V0": 1.0,
                                        "theta0": 0.0},
                             "operating_point": {"vt_d": 1.0, "vt_q": 0.0}}
        cfg = make_config(raw)
        with pytest.raises(ConfigInvalid, match="families"):
            build_network(cfg)


class TestApplyVary:
    def test_percent_change(self):
        cfg = make_config(rl_raw())
        out = apply_vary(cfg, "grid.Lg=-50%")
        assert out.grid["params"]["Lg"] == pytest.approx(0.05)
        assert cfg.grid["params"]["Lg"] == 0.1  # original untouched

    def test_absolute_value(self):
        cfg = make_config(rl_raw())
        out = apply_vary(cfg, "rl2.R=2.5")
        assert out.devices[1]["params"]["R"] == 2.5

    def test_unknown_element(self):
        cfg = make_config(rl_raw())
        with pytest.raises(UnknownParameter):
            apply_vary(cfg, "nosuch.R=1")

    def test_unknown_parameter(self):
        cfg = make_config(rl_raw())
        with pytest.raises(UnknownParameter):
            apply_vary(cfg, "rl1.Q=1")

    def test_malformed_expression(self):
        cfg = make_config(rl_raw())
        with pytest.raises(UnknownParameter):
            apply_vary(cfg, "banana")


class TestPipelineOnRLConfig:
    def test_analyze_reproduces_rl_pattern(self):
        cfg = make_config(rl_raw())
        rep = pipeline.analyze(cfg)
        assert rep.system_class == "ideally-symmetric"
        inner = rep.clusters_by_class("inner-group")
        assert len(inner) == 1 and inner[0].n_g == 2
        assert len(rep.clusters_by_class("group-grid")) == 2

    def test_inner_rc_exactly_zero_under_grid_change(self):
        # the repeated branch modes carry no grid symbols at all
        cfg = make_config(rl_raw())
        run = pipeline.run_invariance(cfg, ["grid.Lg=-50%"])
        inner = run.rc_by_class("inner-group")
        assert max(inner) <= 1e-10
        assert max(run.rc_by_class("group-grid")) > 1.0
