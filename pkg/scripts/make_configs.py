#!/usr/bin/env python3
"""Regenerate the example configs under configs/.

GFM operating points must be consistent equilibria; this script solves each
device's frame angle for its power setpoint (with line impedances folded the
same way the config builder folds them) and freezes the numbers into JSON.
"""

import json
from pathlib import Path

from symmod.devices import gfm_angle_for_power

OUT = Path(__file__).resolve().parent.parent / "configs"

SHARED = {"omega0_hz": 50.0, "Sbase": 1.0, "Vbase": 1.0}
GRID = {"bus": "pcc", "kind": "grid_rl",
        "params": {"Rg": 0.02, "Lg": 0.10, "RL_coupling": 2.0}}
GFM_BASE = {"Lf": 0.08, "Cf": 0.05, "Lc": 0.03, "Rf": 0.005, "Rc": 0.005,
            "f_droop": 40.0, "droop_gain": 0.10, "f_lpf": 1.0,
            "f_vdq": 50.0, "f_idq": 250.0, "P0": 0.3, "V0": 1.0}
GFL_BASE = {"Lf": 0.10, "Rf": 0.01, "f_pll": 20.0, "f_idq": 200.0,
            "P0": 0.3, "Q0": 0.0, "V0": 1.0, "theta0": 0.0}
LINE = {"R": 0.01, "X": 0.10}
VT = {"vt_d": 1.0, "vt_q": 0.0}


def gfm_entry(dev_id, bus, line, **overrides):
    params = dict(GFM_BASE, **overrides)
    folded = dict(params)
    folded["Rc"] = folded["Rc"] + line["R"]
    folded["Lc"] = folded["Lc"] + line["X"]
    folded["omega0_hz"] = SHARED["omega0_hz"]
    folded["theta0"] = 0.0
    params["theta0"] = round(gfm_angle_for_power(folded, **VT), 12)
    return {"id": dev_id, "bus": bus, "kind": "gfm", "params": params,
            "operating_point": dict(VT)}


def gfl_entry(dev_id, bus, **overrides):
    return {"id": dev_id, "bus": bus, "kind": "gfl",
            "params": dict(GFL_BASE, **overrides), "operating_point": dict(VT)}


def line_entry(bus, scale=1.0):
    return {"from": bus, "to": "pcc", "R": LINE["R"] * scale, "X": LINE["X"] * scale}


def rl_demo():
    # small resistances keep the modes oscillatory after per-unit conversion
    return {
        "shared": dict(SHARED),
        "grid": {"bus": "pcc", "kind": "grid_rl",
                 "params": {"Rg": 0.02, "Lg": 0.3, "RL_coupling": 0.05}},
        "devices": [
            {"id": f"rl{k}", "bus": "pcc", "kind": "rl_branch",
             "params": {"R": 0.01, "L": 1.0}} for k in (1, 2, 3)
        ],
        "lines": [],
    }


def gfm3_ideal():
    # cluster_tol tight enough to keep the near-inner aggregate modes out of
    # the exactly repeated inner clusters
    return {
        "shared": dict(SHARED),
        "grid": dict(GRID),
        "devices": [gfm_entry(f"gfm{k}", f"b{k}", LINE) for k in (2, 3, 4)],
        "lines": [line_entry(f"b{k}") for k in (2, 3, 4)],
        "analysis": {"cluster_tol": 0.05, "tau_ext": 1e-4},
    }


def gfm3_quasi():
    # operational spread: +-30% power on two units, +-5% line impedance
    devs = [
        gfm_entry("gfm2", "b2", line_entry("b2", 1.05), P0=GFM_BASE["P0"] * 1.3),
        gfm_entry("gfm3", "b3", LINE),
        gfm_entry("gfm4", "b4", line_entry("b4", 0.95), P0=GFM_BASE["P0"] * 0.7),
    ]
    return {
        "shared": dict(SHARED),
        "grid": dict(GRID),
        "devices": devs,
        "lines": [line_entry("b2", 1.05), line_entry("b3"), line_entry("b4", 0.95)],
        "analysis": {"cluster_tol": 0.1},
    }


def gfm_gfl_groups():
    devs = [gfm_entry(f"gfm{k}", f"a{k}", LINE) for k in (1, 2, 3)]
    devs += [gfl_entry(f"gfl{k}", f"c{k}") for k in (1, 2, 3)]
    return {
        "shared": dict(SHARED),
        "grid": dict(GRID),
        "devices": devs,
        "lines": [line_entry(f"a{k}") for k in (1, 2, 3)] +
                 [line_entry(f"c{k}") for k in (1, 2, 3)],
        "analysis": {"cluster_tol": 0.05, "tau_ext": 1e-4},
    }


def gfl_string():
    return {
        "shared": dict(SHARED),
        "grid": dict(GRID),
        "devices": [gfl_entry(f"gfl{k}", "pcc") for k in (1, 2, 3)],
        "lines": [],
        "collector": {"R": 0.3, "X": 1.0},
    }


def scenario_symmetric():
    return {
        "duration": 8.0, "step": 2e-4,
        "disturbances": [{"time": 1.0, "target": "grid.v_src_d",
                          "kind": "step", "magnitude": -0.05}],
        "probes": ["grid.i_d", "gfm2.P_f", "gfm3.P_f", "gfm4.P_f"],
    }


def scenario_asymmetric():
    return {
        "duration": 8.0, "step": 2e-4,
        "disturbances": [
            {"time": 1.0, "target": "gfm2.v_ser.v_d", "kind": "step", "magnitude": 0.02},
            {"time": 1.0, "target": "gfm3.v_ser.v_d", "kind": "step", "magnitude": -0.02},
        ],
        "probes": ["gfm2.P_f", "gfm3.P_f", "gfm4.P_f"],
    }


def main():
    OUT.mkdir(exist_ok=True)
    files = {
        "rl_demo.json": rl_demo(),
        "gfm3_ideal.json": gfm3_ideal(),
        "gfm3_quasi.json": gfm3_quasi(),
        "gfm_gfl_groups.json": gfm_gfl_groups(),
        "gfl_string.json": gfl_string(),
        "scenario_grid_step.json": scenario_symmetric(),
        "scenario_local_step.json": scenario_asymmetric(),
    }
    for name, doc in files.items():
        path = OUT / name
        path.write_text(json.dumps(doc, indent=2) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
