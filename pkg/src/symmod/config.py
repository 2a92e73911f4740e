"""JSON system configuration: schema validation and network construction.

Electrical parameters in configs are per-unit (reactances at the base
frequency); the builder divides inductive parameters by omega0 to obtain the
natural-time-unit values the device constructors expect. Devices connect to
the common coupling bus either directly or through exactly one line, whose
series impedance is folded into the device's output branch (this adds no
states because series elements share the device output current).
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import devices as dv
from .errors import ConfigInvalid, UnknownParameter

_SHARED_KEYS = {"omega0_hz", "Sbase", "Vbase"}

_DEVICE_PARAMS = {
    "rl_branch": ({"R", "L"}, set()),
    "gfm": ({"Lf", "Cf", "Lc", "f_droop", "droop_gain", "f_lpf", "f_vdq",
             "f_idq", "P0", "V0", "theta0"}, {"Rf", "Rc"}),
    "gfl": ({"Lf", "f_pll", "f_idq", "P0", "Q0", "V0", "theta0"}, {"Rf"}),
    "generic_lti": ({"A"}, {"B", "C", "D", "state_labels", "input_labels",
                            "output_labels"}),
}
_GRID_PARAMS = ({"Rg", "Lg", "RL_coupling"}, set())

_ANALYSIS_KEYS = {"cluster_tol", "tol_quasi", "tau_ext", "c", "rc_threshold"}


@dataclass(frozen=True)
class SystemConfig:
    raw: dict
    path: str | None = None

    @property
    def shared(self) -> dict:
        return self.raw["shared"]

    @property
    def omega0(self) -> float:
        return 2 * np.pi * self.shared["omega0_hz"]

    @property
    def devices(self) -> list[dict]:
        return self.raw["devices"]

    @property
    def grid(self) -> dict:
        return self.raw["grid"]

    @property
    def lines(self) -> list[dict]:
        return self.raw.get("lines", [])

    @property
    def analysis(self) -> dict:
        return self.raw.get("analysis", {})

    @property
    def collector(self) -> dict | None:
        return self.raw.get("collector")


def _fail(field: str, message: str):
    raise ConfigInvalid(f"{field}: {message}")


def _check_params(field: str, kind: str, params: dict, schema) -> None:
    required, optional = schema
    for name in required:
        if name not in params:
            _fail(f"{field}.params.{name}", f"required for kind {kind!r}")
    for name in params:
        if name not in required | optional:
            _fail(f"{field}.params.{name}", f"unknown parameter for kind {kind!r}")


def validate_config(raw: dict) -> None:
    """Structural validation; raises ConfigInvalid naming the offending field."""
    if not isinstance(raw, dict):
        raise ConfigInvalid("config root must be a JSON object")
    for key in ("shared", "devices", "grid"):
        if key not in raw:
            _fail(key, "missing section")
    for key in raw["shared"]:
        if key not in _SHARED_KEYS:
            _fail(f"shared.{key}", "unknown key")
    if "omega0_hz" not in raw["shared"]:
        _fail("shared.omega0_hz", "required")
    if raw["shared"]["omega0_hz"] <= 0:
        _fail("shared.omega0_hz", "must be positive")

    grid = raw["grid"]
    if grid.get("kind", "grid_rl") != "grid_rl":
        _fail("grid.kind", f"unknown external-grid kind {grid.get('kind')!r}")
    if "bus" not in grid:
        _fail("grid.bus", "required")
    _check_params("grid", "grid_rl", grid.get("params", {}), _GRID_PARAMS)

    if not raw["devices"]:
        _fail("devices", "at least one device required")
    ids = set()
    buses = {grid["bus"]}
    for i, dev in enumerate(raw["devices"]):
        field = f"devices[{i}]"
        kind = dev.get("kind")
        if kind not in _DEVICE_PARAMS:
            _fail(f"{field}.kind", f"unknown device kind {kind!r}")
        for key in ("id", "bus"):
            if key not in dev:
                _fail(f"{field}.{key}", "required")
        if dev["id"] in ids or dev["id"] == "grid":
            _fail(f"{field}.id", f"duplicate or reserved id {dev['id']!r}")
        ids.add(dev["id"])
        buses.add(dev["bus"])
        _check_params(field, kind, dev.get("params", {}), _DEVICE_PARAMS[kind])
        if kind in ("gfm", "gfl"):
            op = dev.get("operating_point")
            if not op:
                _fail(f"{field}.operating_point", f"required for kind {kind!r}")
            for key in ("vt_d", "vt_q"):
                if key not in op:
                    _fail(f"{field}.operating_point.{key}", "required")

    lines_to_grid: dict[str, int] = {}
    for i, line in enumerate(raw.get("lines", [])):
        field = f"lines[{i}]"
        for key in ("from", "to", "R", "X"):
            if key not in line:
                _fail(f"{field}.{key}", "required")
        if line["from"] not in buses or line["to"] not in buses:
            _fail(field, f"references unknown bus "
                         f"{line['from'] if line['from'] not in buses else line['to']!r}")
        ends = {line["from"], line["to"]}
        if grid["bus"] in ends:
            (other,) = ends - {grid["bus"]} if len(ends) == 2 else (grid["bus"],)
            lines_to_grid[other] = lines_to_grid.get(other, 0) + 1
        else:
            _fail(field, "every line must connect a device bus to the grid bus")

    for i, dev in enumerate(raw["devices"]):
        bus = dev["bus"]
        if bus == grid["bus"]:
            continue
        if lines_to_grid.get(bus, 0) != 1:
            _fail(f"devices[{i}].bus",
                  f"bus {bus!r} needs exactly one line to the grid bus "
                  f"(found {lines_to_grid.get(bus, 0)})")

    for key in raw.get("analysis", {}):
        if key not in _ANALYSIS_KEYS:
            _fail(f"analysis.{key}", "unknown key")
    collector = raw.get("collector")
    if collector is not None:
        for key in collector:
            if key not in {"R", "X"}:
                _fail(f"collector.{key}", "unknown key")


def load_config(path) -> SystemConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigInvalid(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config is not valid JSON: {exc}")
    validate_config(raw)
    return SystemConfig(raw=raw, path=str(path))


def make_config(raw: dict) -> SystemConfig:
    validate_config(raw)
    return SystemConfig(raw=copy.deepcopy(raw))


def _line_for_bus(config: SystemConfig, bus: str) -> dict | None:
    if bus == config.grid["bus"]:
        return None
    for line in config.lines:
        if {line["from"], line["to"]} == {bus, config.grid["bus"]}:
            return line
    return None


def build_devices(config: SystemConfig) -> dict[str, dv.DeviceModel]:
    """Construct every device model with its line impedance folded in."""
    omega0 = config.omega0
    built: dict[str, dv.DeviceModel] = {}
    for dev in config.devices:
        params = dict(dev.get("params", {}))
        line = _line_for_bus(config, dev["bus"])
        r_l = line["R"] if line else 0.0
        x_l = line["X"] if line else 0.0
        kind = dev["kind"]
        if kind == "rl_branch":
            built[dev["id"]] = dv.build_rl_branch(
                R=params["R"] + r_l, L=(params["L"] + x_l) / omega0, omega=omega0)
        elif kind == "gfm":
            params["Rc"] = params.get("Rc", 0.0) + r_l
            params["Lc"] = params["Lc"] + x_l
            params["omega0_hz"] = config.shared["omega0_hz"]
            built[dev["id"]] = dv.build_gfm(dv.DeviceSpec(
                kind="gfm", params=params,
                operating_point=dict(dev["operating_point"])))
        elif kind == "gfl":
            params["Rf"] = params.get("Rf", 0.01) + r_l
            params["Lf"] = params["Lf"] + x_l
            params["omega0_hz"] = config.shared["omega0_hz"]
            built[dev["id"]] = dv.build_gfl(dv.DeviceSpec(
                kind="gfl", params=params,
                operating_point=dict(dev["operating_point"])))
        elif kind == "generic_lti":
            if line is not None:
                raise ConfigInvalid(
                    f"devices[{dev['id']}]: generic_lti devices must sit on the "
                    "grid bus (no line folding is defined for them)")
            built[dev["id"]] = dv.build_generic_lti(dv.DeviceSpec(
                kind="generic_lti", params=params))
        else:  # pragma: no cover - validate_config rejects these
            raise ConfigInvalid(f"unknown kind {kind!r}")
    return built


def build_grid(config: SystemConfig, real_dq: bool) -> dv.DeviceModel:
    p = config.grid["params"]
    omega0 = config.omega0
    grid = dv.build_grid_rl(R_g=p["Rg"], L_g=p["Lg"] / omega0,
                            R_L=p["RL_coupling"], omega=omega0)
    return dv.as_real_dq_device(grid) if real_dq else grid


def build_network(config: SystemConfig):
    """Device models plus the matching-family grid model.

    Returns (subsystem models by id, grid DeviceModel). Complex-vector
    devices (1 port) and real dq devices (2 ports) cannot mix.
    """
    built = build_devices(config)
    ports = {m.model.p for m in built.values()}
    if len(ports) != 1:
        raise ConfigInvalid("devices mix complex-dq and real-dq port families")
    (p,) = ports
    if p not in (1, 2):
        raise ConfigInvalid(f"unsupported device port dimension {p}")
    grid = build_grid(config, real_dq=(p == 2))
    return built, grid


def apply_vary(config: SystemConfig, expression: str) -> SystemConfig:
    """Apply `<element>.<param>=<value|+-pct%>` and return a new config."""
    try:
        target, value = expression.split("=", 1)
        element, param = target.rsplit(".", 1)
    except ValueError:
        raise UnknownParameter(
            f"vary expression {expression!r} is not <element>.<param>=<value>")
    raw = copy.deepcopy(config.raw)
    if element == "grid":
        params = raw["grid"]["params"]
    else:
        matches = [d for d in raw["devices"] if d["id"] == element]
        if not matches:
            raise UnknownParameter(f"unknown element {element!r}")
        params = matches[0]["params"]
    if param not in params:
        raise UnknownParameter(f"element {element!r} has no parameter {param!r}")
    value = value.strip()
    if value.endswith("%"):
        params[param] = params[param] * (1.0 + float(value[:-1]) / 100.0)
    else:
        params[param] = float(value)
    return SystemConfig(raw=raw, path=config.path)
