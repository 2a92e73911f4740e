"""Parameterized small-signal device templates.

Electrical quantities are per-unit; time is in seconds. For the per-unit
device kinds (gfm, gfl) passives are per-unit reactances/susceptances at the
base frequency, so inductor dynamics carry an omega0/L factor. The rl_branch
and grid_rl builders take parameters in natural time units (R/L is a rate in
1/s) and the config layer performs the per-unit conversion.

The GFM and GFL models are linearized numerically (complex-step
differentiation of the explicit nonlinear dq equations) around the supplied
operating point, so the state-space coefficients are exact to machine
precision for the documented control structure:

gfm: LCL filter, P-omega droop with low-pass filtered power measurement,
     PI voltage loop (with capacitor-decoupling and load-current
     feedforward) feeding a PI current loop with inductor decoupling.
     The current loop deliberately carries no capacitor-voltage
     feedforward: that path closes an internal positive loop through the
     LC filter and destabilizes the device.
gfl: L filter, PI phase-locked loop on the q-axis terminal voltage, PI
     current loop with pole-zero cancellation design (closed-loop current
     pole at -2*pi*f_idq). The current loop carries no terminal-voltage
     feedforward; the integrator rejects bus-voltage disturbances, which
     keeps the loop physically sensitive to series network impedance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidParameter, OperatingPointResidualTooLarge
from .lti import StateSpaceModel, as_real_dq, make_model

logger = logging.getLogger(__name__)

RL_STATE_LABELS = ("i_dq+",)
GRID_STATE_LABELS = ("i_dq+",)
GFM_STATE_LABELS = ("i_ld", "i_lq", "v_od", "v_oq", "i_od", "i_oq",
                    "delta", "P_f", "v_od_i", "v_oq_i", "i_ld_i", "i_lq_i")
GFL_STATE_LABELS = ("i_d", "i_q", "theta_pll", "omega_pll_i", "i_d_i", "i_q_i")
DQ_INPUT_LABELS = ("v_d", "v_q")
DQ_OUTPUT_LABELS = ("i_d", "i_q")

# Residual thresholds (per-unit): warn when the supplied operating point is
# suspicious, refuse to linearize when it is clearly not an equilibrium.
RESIDUAL_WARN = 1e-6
RESIDUAL_REJECT = 1e-2

_PLL_DAMPING = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class DeviceSpec:
    """Declarative device description: kind, parameters, operating point."""

    kind: str
    params: dict
    operating_point: dict | None = None


@dataclass(frozen=True)
class DeviceModel:
    """A device spec together with its linearized state-space model."""

    spec: DeviceSpec
    model: StateSpaceModel
    aux_inputs: dict[str, np.ndarray] = field(default_factory=dict)


def _require(params: dict, names: tuple[str, ...], kind: str) -> None:
    for name in names:
        if name not in params:
            raise InvalidParameter(f"{kind} device missing parameter {name!r}")


def _positive(params: dict, names: tuple[str, ...], kind: str) -> None:
    for name in names:
        if params[name] <= 0:
            raise InvalidParameter(f"{kind} parameter {name!r} must be positive, "
                                   f"got {params[name]}")


def build_rl_branch(R: float, L: float, omega: float) -> DeviceModel:
    """Single complex-state RL branch: di/dt = -(R/L + j*omega) i - v/L."""
    if L <= 0:
        raise InvalidParameter(f"inductance must be positive, got L={L}")
    if R < 0:
        raise InvalidParameter(f"resistance must be non-negative, got R={R}")
    model = make_model([[-(R / L + 1j * omega)]], [[-1.0 / L]], [[1.0]], [[0.0]],
                       RL_STATE_LABELS, ("v_dq+",), ("i_dq+",))
    spec = DeviceSpec(kind="rl_branch", params=dict(R=R, L=L, omega=omega))
    return DeviceModel(spec=spec, model=model)


def build_grid_rl(R_g: float, L_g: float, R_L: float, omega: float) -> DeviceModel:
    """External grid: RL branch to a stiff source behind the shunt R_L node.

    Input is the summed subsystem current, output the common node voltage
    v_c = R_L (i_c + i_g). The auxiliary input ``v_src`` is the source
    voltage sensitivity used as a symmetric disturbance channel.
    """
    if L_g <= 0:
        raise InvalidParameter(f"inductance must be positive, got L_g={L_g}")
    if R_g < 0 or R_L < 0:
        raise InvalidParameter("resistances must be non-negative")
    model = make_model([[-((R_g + R_L) / L_g + 1j * omega)]],
                       [[-R_L / L_g]], [[R_L]], [[R_L]],
                       GRID_STATE_LABELS, ("i_dq+",), ("v_dq+",))
    spec = DeviceSpec(kind="grid_rl", params=dict(Rg=R_g, Lg=L_g, RL_coupling=R_L,
                                                  omega=omega))
    return DeviceModel(spec=spec, model=model,
                       aux_inputs={"v_src": np.array([1.0 / L_g], complex)})


def build_generic_lti(spec: DeviceSpec) -> DeviceModel:
    """User-supplied LTI quadruple passed through model validation."""
    p = spec.params
    _require(p, ("A",), "generic_lti")
    model = make_model(p["A"], p.get("B"), p.get("C"), p.get("D"),
                       p.get("state_labels"), p.get("input_labels"),
                       p.get("output_labels"))
    return DeviceModel(spec=spec, model=model)


# ---------------------------------------------------------------------------
# GFM inverter
# ---------------------------------------------------------------------------

_GFM_REQUIRED = ("Lf", "Cf", "Lc", "f_droop", "droop_gain", "f_lpf",
                 "f_vdq", "f_idq", "P0", "V0", "theta0", "omega0_hz")


def _gfm_constants(params: dict) -> SimpleNamespace:
    w0 = 2 * np.pi * params["omega0_hz"]
    wi = 2 * np.pi * params["f_idq"]
    wv = 2 * np.pi * params["f_vdq"]
    Rf = params.get("Rf", 0.01)
    Rc = params.get("Rc", 0.0)
    # both loops critically damped: double poles at -wv/2 and -wi/2
    return SimpleNamespace(
        w0=w0, Lf=params["Lf"], Cf=params["Cf"], Lc=params["Lc"],
        Rf=Rf, Rc=Rc,
        Kpv=wv * params["Cf"] / w0, Kiv=wv ** 2 * params["Cf"] / w0 / 4.0,
        Kpi=wi * params["Lf"] / w0, Kii=wi ** 2 * params["Lf"] / w0 / 4.0,
        wi=wi, wlpf=2 * np.pi * params["f_lpf"],
        m=2 * np.pi * params["f_droop"] * params["droop_gain"],
        mw=2 * np.pi * params["f_droop"] * params["droop_gain"] / w0,
        P0=params["P0"], V0=params["V0"], theta0=params["theta0"],
    )


def _gfm_rhs(x, u, c):
    (i_ld, i_lq, v_od, v_oq, i_od, i_oq, delta, P_f,
     v_od_i, v_oq_i, i_ld_i, i_lq_i) = x
    vt_d, vt_q = u
    cosd, sind = np.cos(delta), np.sin(delta)
    vt_ld = cosd * vt_d + sind * vt_q
    vt_lq = -sind * vt_d + cosd * vt_q
    w_pu = 1.0 - c.mw * (P_f - c.P0)

    e_vd = c.V0 - v_od
    e_vq = -v_oq
    i_ld_ref = c.Kpv * e_vd + c.Kiv * v_od_i - c.Cf * v_oq + i_od
    i_lq_ref = c.Kpv * e_vq + c.Kiv * v_oq_i + c.Cf * v_od + i_oq
    e_id = i_ld_ref - i_ld
    e_iq = i_lq_ref - i_lq
    v_id = c.Kpi * e_id + c.Kii * i_ld_i - c.Lf * i_lq
    v_iq = c.Kpi * e_iq + c.Kii * i_lq_i + c.Lf * i_ld
    P = v_od * i_od + v_oq * i_oq

    f_ild = v_id - v_od - c.Rf * i_ld + w_pu * c.Lf * i_lq
    f_ilq = v_iq - v_oq - c.Rf * i_lq - w_pu * c.Lf * i_ld
    f_vod = i_ld - i_od + w_pu * c.Cf * v_oq
    f_voq = i_lq - i_oq - w_pu * c.Cf * v_od
    f_iod = v_od - vt_ld - c.Rc * i_od + w_pu * c.Lc * i_oq
    f_ioq = v_oq - vt_lq - c.Rc * i_oq - w_pu * c.Lc * i_od

    xdot = np.array([
        c.w0 / c.Lf * f_ild,
        c.w0 / c.Lf * f_ilq,
        c.w0 / c.Cf * f_vod,
        c.w0 / c.Cf * f_voq,
        c.w0 / c.Lc * f_iod,
        c.w0 / c.Lc * f_ioq,
        -c.m * (P_f - c.P0),
        c.wlpf * (P - P_f),
        e_vd, e_vq, e_id, e_iq,
    ])
    resid = np.array([f_ild, f_ilq, f_vod, f_voq, f_iod, f_ioq,
                      P_f - c.P0, P - P_f, e_vd, e_vq, e_id, e_iq])
    return xdot, resid


def _gfm_out(x, u, c):
    i_od, i_oq, delta = x[4], x[5], x[6]
    cosd, sind = np.cos(delta), np.sin(delta)
    return np.array([cosd * i_od - sind * i_oq,
                     sind * i_od + cosd * i_oq])


def _gfm_equilibrium(c, op: dict) -> tuple[np.ndarray, np.ndarray]:
    vt_d, vt_q = op["vt_d"], op["vt_q"]
    vt_local = (vt_d + 1j * vt_q) * np.exp(-1j * c.theta0)
    v_o = c.V0 + 0.0j
    i_o = (v_o - vt_local) / (c.Rc + 1j * c.Lc)
    i_l = i_o + 1j * c.Cf * v_o
    P = (v_o * np.conj(i_o)).real
    # the current-loop integrator carries the full back-EMF in steady state
    x0 = np.array([
        i_l.real, i_l.imag, v_o.real, v_o.imag, i_o.real, i_o.imag,
        c.theta0, P, 0.0, 0.0,
        (v_o.real + c.Rf * i_l.real) / c.Kii,
        (v_o.imag + c.Rf * i_l.imag) / c.Kii,
    ])
    for k, lbl in enumerate(GFM_STATE_LABELS):
        if lbl in op:
            x0[k] = op[lbl]
    return x0, np.array([vt_d, vt_q], dtype=float)


def _linearize(rhs, out, x0, u0):
    """Complex-step Jacobians of analytic real-valued rhs/output maps."""
    h = 1e-100
    nx, nu = len(x0), len(u0)
    ny = len(out(x0.astype(complex), u0.astype(complex)))
    A = np.zeros((nx, nx))
    C = np.zeros((ny, nx))
    for k in range(nx):
        xp = x0.astype(complex)
        xp[k] += 1j * h
        fx, _ = rhs(xp, u0.astype(complex))
        A[:, k] = fx.imag / h
        C[:, k] = out(xp, u0.astype(complex)).imag / h
    B = np.zeros((nx, nu))
    D = np.zeros((ny, nu))
    for k in range(nu):
        up = u0.astype(complex)
        up[k] += 1j * h
        fu, _ = rhs(x0.astype(complex), up)
        B[:, k] = fu.imag / h
        D[:, k] = out(x0.astype(complex), up).imag / h
    return A, B, C, D


def _residual_of(rhs, x0, u0) -> float:
    _, resid = rhs(x0.astype(complex), u0.astype(complex))
    return float(np.max(np.abs(resid.real)))


def build_gfm(spec: DeviceSpec) -> DeviceModel:
    """12-state grid-forming inverter linearized at the supplied operating point.

    The operating point must provide the terminal voltage (vt_d, vt_q) in the
    common frame; internal equilibrium states are closed algebraically from
    it and may be overridden individually by state label.
    """
    if spec.operating_point is None:
        raise InvalidParameter("gfm device requires an operating_point")
    _require(spec.params, _GFM_REQUIRED, "gfm")
    _positive(spec.params, ("Lf", "Cf", "Lc", "f_droop", "f_lpf", "f_vdq",
                            "f_idq", "omega0_hz"), "gfm")
    if spec.params.get("droop_gain", 0.0) < 0:
        raise InvalidParameter("droop_gain must be non-negative")
    for key in ("vt_d", "vt_q"):
        if key not in spec.operating_point:
            raise InvalidParameter(f"gfm operating_point missing {key!r}")

    c = _gfm_constants(spec.params)
    if c.Rf < 0 or c.Rc < 0:
        raise InvalidParameter("Rf and Rc must be non-negative")
    x0, u0 = _gfm_equilibrium(c, spec.operating_point)
    resid = _residual_of(lambda x, u: _gfm_rhs(x, u, c), x0, u0)
    if resid > RESIDUAL_REJECT:
        raise OperatingPointResidualTooLarge(
            f"gfm operating point residual {resid:.3e} pu exceeds {RESIDUAL_REJECT}")
    if resid > RESIDUAL_WARN:
        logger.warning("gfm operating point residual %.3e pu", resid)

    A, B, C, D = _linearize(lambda x, u: _gfm_rhs(x, u, c),
                            lambda x, u: _gfm_out(x, u, c), x0, u0)
    model = make_model(A, B, C, D, GFM_STATE_LABELS, DQ_INPUT_LABELS,
                       DQ_OUTPUT_LABELS)
    return DeviceModel(spec=spec, model=model)


def gfm_angle_for_power(params: dict, vt_d: float, vt_q: float) -> float:
    """Angle theta0 at which the closed GFM equilibrium delivers exactly P0.

    Device-level algebra only (no network power flow): the terminal voltage
    is taken as given and the output-branch power balance is solved for the
    frame angle.
    """
    c = _gfm_constants({**params, "theta0": 0.0})

    def power_mismatch(delta):
        vt_local = (vt_d + 1j * vt_q) * np.exp(-1j * delta)
        i_o = (c.V0 - vt_local) / (c.Rc + 1j * c.Lc)
        return (c.V0 * np.conj(i_o)).real - c.P0

    lo, hi = -1.2, 1.2
    if power_mismatch(lo) * power_mismatch(hi) > 0:
        raise InvalidParameter("no GFM angle in [-1.2, 1.2] rad delivers P0 "
                               "for the given terminal voltage")
    return float(brentq(power_mismatch, lo, hi, xtol=1e-14))


# ---------------------------------------------------------------------------
# GFL inverter
# ---------------------------------------------------------------------------

_GFL_REQUIRED = ("Lf", "f_pll", "f_idq", "P0", "Q0", "V0", "theta0", "omega0_hz")


def _gfl_constants(params: dict) -> SimpleNamespace:
    w0 = 2 * np.pi * params["omega0_hz"]
    wi = 2 * np.pi * params["f_idq"]
    w_pll = 2 * np.pi * params["f_pll"]
    Rf = params.get("Rf", 0.01)
    V0 = params["V0"]
    return SimpleNamespace(
        w0=w0, Lf=params["Lf"], Rf=Rf,
        Kpi=wi * params["Lf"] / w0, Kii=wi * Rf, wi=wi,
        Kp_pll=2 * _PLL_DAMPING * w_pll / V0, Ki_pll=w_pll ** 2 / V0,
        idref=params["P0"] / V0, iqref=-params["Q0"] / V0,
        theta0=params["theta0"],
    )


def _gfl_rhs(x, u, c):
    i_d, i_q, theta, w_i, i_d_i, i_q_i = x
    vt_d, vt_q = u
    cost, sint = np.cos(theta), np.sin(theta)
    vt_ld = cost * vt_d + sint * vt_q
    vt_lq = -sint * vt_d + cost * vt_q
    dw = c.Kp_pll * vt_lq + c.Ki_pll * w_i
    w_pu = 1.0 + dw / c.w0

    e_d = c.idref - i_d
    e_q = c.iqref - i_q
    v_id = c.Kpi * e_d + c.Kii * i_d_i - c.Lf * i_q
    v_iq = c.Kpi * e_q + c.Kii * i_q_i + c.Lf * i_d
    f_id = v_id - vt_ld - c.Rf * i_d + w_pu * c.Lf * i_q
    f_iq = v_iq - vt_lq - c.Rf * i_q - w_pu * c.Lf * i_d

    xdot = np.array([
        c.w0 / c.Lf * f_id,
        c.w0 / c.Lf * f_iq,
        dw, vt_lq, e_d, e_q,
    ])
    resid = np.array([f_id, f_iq, dw / c.w0, vt_lq, e_d, e_q])
    return xdot, resid


def _gfl_out(x, u, c):
    i_d, i_q, theta = x[0], x[1], x[2]
    cost, sint = np.cos(theta), np.sin(theta)
    return np.array([cost * i_d - sint * i_q,
                     sint * i_d + cost * i_q])


def _gfl_equilibrium(c, op: dict) -> tuple[np.ndarray, np.ndarray]:
    vt_d, vt_q = op["vt_d"], op["vt_q"]
    vt_local = (vt_d + 1j * vt_q) * np.exp(-1j * c.theta0)
    # the integrator carries the terminal back-EMF in steady state
    x0 = np.array([c.idref, c.iqref, c.theta0, 0.0,
                   (vt_local.real + c.Rf * c.idref) / c.Kii,
                   (vt_local.imag + c.Rf * c.iqref) / c.Kii])
    for k, lbl in enumerate(GFL_STATE_LABELS):
        if lbl in op:
            x0[k] = op[lbl]
    return x0, np.array([vt_d, vt_q], dtype=float)


def build_gfl(spec: DeviceSpec) -> DeviceModel:
    """6-state grid-following inverter linearized at the supplied operating point."""
    if spec.operating_point is None:
        raise InvalidParameter("gfl device requires an operating_point")
    _require(spec.params, _GFL_REQUIRED, "gfl")
    _positive(spec.params, ("Lf", "f_pll", "f_idq", "V0", "omega0_hz"), "gfl")
    for key in ("vt_d", "vt_q"):
        if key not in spec.operating_point:
            raise InvalidParameter(f"gfl operating_point missing {key!r}")

    c = _gfl_constants(spec.params)
    if c.Rf <= 0:
        raise InvalidParameter("gfl requires Rf > 0 (the current-loop integrator "
                               "gain is wi*Rf)")
    x0, u0 = _gfl_equilibrium(c, spec.operating_point)
    resid = _residual_of(lambda x, u: _gfl_rhs(x, u, c), x0, u0)
    if resid > RESIDUAL_REJECT:
        raise OperatingPointResidualTooLarge(
            f"gfl operating point residual {resid:.3e} pu exceeds {RESIDUAL_REJECT}")
    if resid > RESIDUAL_WARN:
        logger.warning("gfl operating point residual %.3e pu", resid)

    A, B, C, D = _linearize(lambda x, u: _gfl_rhs(x, u, c),
                            lambda x, u: _gfl_out(x, u, c), x0, u0)
    model = make_model(A, B, C, D, GFL_STATE_LABELS, DQ_INPUT_LABELS,
                       DQ_OUTPUT_LABELS)
    return DeviceModel(spec=spec, model=model)


def as_real_dq_device(device: DeviceModel) -> DeviceModel:
    """Exact real dq expansion of a complex-dq device.

    Each auxiliary input channel splits into a d and a q channel (the q
    channel is the original complex column rotated by j), so complex-dq grid
    templates can interconnect with real dq subsystem models.
    """
    aux = {}
    for name, col in device.aux_inputs.items():
        col = np.asarray(col, dtype=complex).reshape(-1)
        col_d = np.empty(2 * col.size, complex)
        col_d[0::2], col_d[1::2] = col.real, col.imag
        col_q = np.empty(2 * col.size, complex)
        col_q[0::2], col_q[1::2] = -col.imag, col.real
        aux[f"{name}_d"] = col_d
        aux[f"{name}_q"] = col_q
    return DeviceModel(spec=device.spec, model=as_real_dq(device.model),
                       aux_inputs=aux)


def check_operating_point(device: DeviceModel | DeviceSpec) -> float:
    """Max per-unit residual of the nonlinear equilibrium equations.

    Warning-only: logs above RESIDUAL_WARN and always returns the value.
    Linear device kinds are their own linearization, so their residual is 0.
    """
    spec = device.spec if isinstance(device, DeviceModel) else device
    if spec.kind == "gfm":
        c = _gfm_constants(spec.params)
        x0, u0 = _gfm_equilibrium(c, spec.operating_point or {})
        resid = _residual_of(lambda x, u: _gfm_rhs(x, u, c), x0, u0)
    elif spec.kind == "gfl":
        c = _gfl_constants(spec.params)
        x0, u0 = _gfl_equilibrium(c, spec.operating_point or {})
        resid = _residual_of(lambda x, u: _gfl_rhs(x, u, c), x0, u0)
    else:
        return 0.0
    if resid > RESIDUAL_WARN:
        logger.warning("%s operating point residual %.3e pu", spec.kind, resid)
    return resid
