"""Complex LTI state-space models and grid-connected system assembly.

All matrices are complex double precision; real dq models embed with zero
imaginary parts so that the complex-vector dq formulation and real dq device
models share one code path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    AlgebraicLoopSingular,
    DimensionMismatch,
    InvalidParameter,
    NonFiniteEntry,
    PortMismatch,
    SingularTransform,
)

logger = logging.getLogger(__name__)

EXTERNAL_GRID = "external_grid"

# Above this condition number a transform is treated as untrustworthy.
COND_WARN_THRESHOLD = 1e8
_COND_SINGULAR = 1e13


def _as_complex(M) -> np.ndarray:
    return np.atleast_2d(np.asarray(M, dtype=np.complex128))


@dataclass(frozen=True)
class StateSpaceModel:
    """Complex LTI quadruple (A, B, C, D) with labelled states and ports.

    dx/dt = A x + B u
    y     = C x + D u
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    state_labels: tuple[str, ...]
    input_labels: tuple[str, ...] = ()
    output_labels: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.C.shape[0]

    @property
    def is_closed(self) -> bool:
        return self.p == 0 and self.q == 0

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.A)

    def __repr__(self) -> str:
        return f"StateSpaceModel(n={self.n}, p={self.p}, q={self.q})"


def make_model(A, B=None, C=None, D=None, state_labels=None,
               input_labels=None, output_labels=None) -> StateSpaceModel:
    """Validate and freeze a state-space quadruple.

    Missing B/C/D default to empty port matrices (a closed model). Labels
    default to ``x0..``/``u0..``/``y0..`` when not supplied.
    """
    A = _as_complex(A)
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"A must be square, got {A.shape}")

    B = _as_complex(B) if B is not None else np.zeros((n, 0), complex)
    if B.size == 0:
        B = B.reshape(n, 0)
    p = B.shape[1]
    C = _as_complex(C) if C is not None else np.zeros((0, n), complex)
    if C.size == 0:
        C = C.reshape(0, n)
    q = C.shape[0]
    D = _as_complex(D) if D is not None else np.zeros((q, p), complex)
    if D.size == 0:
        D = D.reshape(q, p)

    if B.shape[0] != n:
        raise DimensionMismatch(f"rows(B)={B.shape[0]} != rows(A)={n}")
    if C.shape[1] != n:
        raise DimensionMismatch(f"cols(C)={C.shape[1]} != rows(A)={n}")
    if D.shape != (q, p):
        raise DimensionMismatch(f"D must be {q}x{p}, got {D.shape}")

    state_labels = tuple(state_labels) if state_labels is not None else tuple(
        f"x{i}" for i in range(n))
    input_labels = tuple(input_labels) if input_labels is not None else tuple(
        f"u{i}" for i in range(p))
    output_labels = tuple(output_labels) if output_labels is not None else tuple(
        f"y{i}" for i in range(q))

    if len(state_labels) != n:
        raise DimensionMismatch(
            f"{len(state_labels)} state labels for {n} states")
    if len(set(state_labels)) != n:
        raise DimensionMismatch("state labels must be unique within a model")
    if len(input_labels) != p:
        raise DimensionMismatch(f"{len(input_labels)} input labels for {p} inputs")
    if len(output_labels) != q:
        raise DimensionMismatch(f"{len(output_labels)} output labels for {q} outputs")

    for name, M in (("A", A), ("B", B), ("C", C), ("D", D)):
        if M.size and not np.all(np.isfinite(M)):
            raise NonFiniteEntry(f"matrix {name} contains NaN/Inf entries")

    for M in (A, B, C, D):
        M.setflags(write=False)
    return StateSpaceModel(A, B, C, D, state_labels, input_labels, output_labels)


def as_real_dq(model: StateSpaceModel) -> StateSpaceModel:
    """Expand a complex-vector dq model into its exact real dq equivalent.

    Every complex state/port x = x_d + j x_q becomes the real pair (x_d, x_q)
    and every matrix entry a + jb becomes the 2x2 block [[a, -b], [b, a]].
    The eigenvalue set of the result is eig(A) together with its conjugates.
    """
    def expand(M):
        r, c = M.shape
        out = np.zeros((2 * r, 2 * c))
        out[0::2, 0::2] = M.real
        out[0::2, 1::2] = -M.imag
        out[1::2, 0::2] = M.imag
        out[1::2, 1::2] = M.real
        return out

    def split(labels):
        out = []
        for lbl in labels:
            base = lbl[:-3] if lbl.endswith("dq+") else lbl + "_"
            out.extend([base + "d", base + "q"])
        return tuple(out)

    return make_model(expand(model.A), expand(model.B), expand(model.C),
                      expand(model.D), split(model.state_labels),
                      split(model.input_labels), split(model.output_labels))


@dataclass
class AssembledSystem:
    """Closed whole-system model plus the bookkeeping needed to decompose it.

    ``model`` has no inputs/outputs (the interconnection is resolved exactly);
    named disturbance entry points are kept separately in
    ``disturbance_inputs`` as state-derivative columns for simulation use.
    """

    model: StateSpaceModel
    ownership: dict[int, str]
    group_of: dict[str, str]
    subsystems: dict[str, StateSpaceModel] = field(default_factory=dict)
    grid: StateSpaceModel | None = None
    disturbance_inputs: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.model.n

    def external_state_indices(self) -> list[int]:
        return [k for k, owner in self.ownership.items() if owner == EXTERNAL_GRID]

    def states_of(self, sub_id: str) -> list[int]:
        return [k for k, owner in self.ownership.items() if owner == sub_id]


def _solve_guarded(K: np.ndarray, context: str) -> np.ndarray:
    if K.size == 0:
        return K
    if not np.all(np.isfinite(K)) or np.linalg.cond(K) > _COND_SINGULAR:
        raise AlgebraicLoopSingular(
            f"interconnection matrix {context} is singular or near-singular")
    return np.linalg.inv(K)


def _normalize_subsystems(subsystems) -> dict[str, StateSpaceModel]:
    if isinstance(subsystems, Mapping):
        return dict(subsystems)
    return {f"sub{i}": m for i, m in enumerate(subsystems)}


def assemble_group_grid(subsystems: Mapping[str, StateSpaceModel] | Sequence[StateSpaceModel],
                        grid: StateSpaceModel,
                        group_of: Mapping[str, str] | None = None,
                        grid_aux_inputs: Mapping[str, np.ndarray] | None = None,
                        grid_id: str = "grid") -> AssembledSystem:
    """Close the loop between parallel subsystems and the external grid.

    Each subsystem sees the common grid output voltage as its input; the grid
    input is the sum of all subsystem output currents. For M identical
    subsystems the result carries the closed-form block structure

        O = A_a + B_a (I - M Db Da)^-1 Db C_a     (diagonal)
        R = B_a (I - M Db Da)^-1 Db C_a           (cross coupling)
        V = B_a (I - M Db Da)^-1 C_b              (grid -> subsystem)
        S = B_b (I - M Da Db)^-1 C_a              (subsystem -> grid)
        T = A_b + M B_b (I - M Da Db)^-1 Da C_b   (grid diagonal)

    and the same interconnection algebra is solved without the
    identical-subsystem shortcut when the models differ.

    ``grid_aux_inputs`` maps channel names to grid-state derivative columns
    (e.g. a source-voltage sensitivity); they surface as disturbance inputs
    named ``<grid_id>.<name>``. Per-subsystem series-voltage channels
    ``<id>.v_ser.<input_label>`` are always generated.
    """
    subs = _normalize_subsystems(subsystems)
    if not subs:
        raise InvalidParameter("at least one subsystem required")
    ids = list(subs)
    models = [subs[i] for i in ids]

    p = models[0].p  # common voltage input dimension
    q = models[0].q  # current output dimension
    for i, m in zip(ids, models):
        if m.p != p or m.q != q:
            raise PortMismatch(f"subsystem {i!r} has ports ({m.p},{m.q}); expected ({p},{q})")
    if grid.p != q or grid.q != p:
        raise PortMismatch(
            f"grid ports ({grid.p},{grid.q}) do not complement subsystem ports ({p},{q})")

    S_D = sum(m.D for m in models) if models else np.zeros((q, p), complex)
    K1 = np.eye(p, dtype=complex) - grid.D @ S_D
    K2 = np.eye(q, dtype=complex) - S_D @ grid.D
    W = _solve_guarded(K1, "(I - D_grid * sum(D_sub))")
    W2 = _solve_guarded(K2, "(I - sum(D_sub) * D_grid)")

    sizes = [m.n for m in models]
    offsets = np.cumsum([0] + sizes)
    e = grid.n
    n = offsets[-1] + e
    A = np.zeros((n, n), dtype=complex)

    WDb = W @ grid.D            # p x q
    WCb = W @ grid.C            # p x e
    for k, mk in enumerate(models):
        rk = slice(offsets[k], offsets[k + 1])
        for j, mj in enumerate(models):
            cj = slice(offsets[j], offsets[j + 1])
            A[rk, cj] = mk.B @ WDb @ mj.C
            if k == j:
                A[rk, cj] += mk.A
        A[rk, offsets[-1]:] = mk.B @ WCb
    for j, mj in enumerate(models):
        cj = slice(offsets[j], offsets[j + 1])
        A[offsets[-1]:, cj] = grid.B @ W2 @ mj.C
    A[offsets[-1]:, offsets[-1]:] = grid.A + grid.B @ W2 @ S_D @ grid.C

    labels = []
    ownership = {}
    for k, (sid, m) in enumerate(zip(ids, models)):
        for lbl in m.state_labels:
            ownership[len(labels)] = sid
            labels.append(f"{sid}.{lbl}")
    for lbl in grid.state_labels:
        ownership[len(labels)] = EXTERNAL_GRID
        labels.append(f"{grid_id}.{lbl}")

    # Disturbance channels: series voltage added to one subsystem's input.
    channels: dict[str, np.ndarray] = {}
    for j, (sid, mj) in enumerate(zip(ids, models)):
        for c in range(p):
            col = np.zeros(n, dtype=complex)
            d_col = mj.D[:, c]                      # q
            vc_col = WDb @ d_col                    # loop reaction on v_c
            for k, mk in enumerate(models):
                rk = slice(offsets[k], offsets[k + 1])
                col[rk] = mk.B @ vc_col
                if k == j:
                    col[rk] += mj.B[:, c]
            col[offsets[-1]:] = grid.B @ W2 @ d_col
            channels[f"{sid}.v_ser.{mj.input_labels[c]}"] = col
    if grid_aux_inputs:
        for name, gcol in grid_aux_inputs.items():
            gcol = np.asarray(gcol, dtype=complex).reshape(-1)
            if gcol.shape[0] != e:
                raise DimensionMismatch(
                    f"grid aux input {name!r} has length {gcol.shape[0]}, expected {e}")
            col = np.zeros(n, dtype=complex)
            col[offsets[-1]:] = gcol
            channels[f"{grid_id}.{name}"] = col

    model = make_model(A, state_labels=labels)
    return AssembledSystem(model=model, ownership=ownership,
                           group_of=dict(group_of) if group_of else {},
                           subsystems=subs, grid=grid,
                           disturbance_inputs=channels)


def assemble_rl_example(R: float, L: float, R_L: float, R_g: float,
                        L_g: float, omega: float) -> AssembledSystem:
    """Closed-form 4-state system of three identical RL branches and an RL grid.

    State order (i_1, i_2, i_3, i_g), entries

        o = -(R/L + R_L/L + j*omega)    (branch diagonal)
        r = -R_L/L                      (branch coupling, also grid column)
        s = -R_L/L_g                    (grid row)
        t = -(R_g/L_g + R_L/L_g + j*omega)

    R_L is the shunt resistance at the common node carrying the sum of the
    branch and grid currents.
    """
    if L <= 0 or L_g <= 0:
        raise InvalidParameter("inductances must be positive")
    if R < 0 or R_L < 0 or R_g < 0:
        raise InvalidParameter("resistances must be non-negative")

    o = -(R / L + R_L / L + 1j * omega)
    r = -R_L / L
    s = -R_L / L_g
    t = -(R_g / L_g + R_L / L_g + 1j * omega)
    A = np.array([[o, r, r, r],
                  [r, o, r, r],
                  [r, r, o, r],
                  [s, s, s, t]], dtype=complex)

    branch = make_model([[-(R / L + 1j * omega)]], [[-1.0 / L]], [[1.0]], [[0.0]],
                        ("i_dq+",), ("v_dq+",), ("i_dq+",))
    grid = make_model([[t]], [[s]], [[R_L]], [[R_L]],
                      ("i_dq+",), ("i_dq+",), ("v_dq+",))

    ids = ("rl1", "rl2", "rl3")
    labels = tuple(f"{i}.i_dq+" for i in ids) + ("grid.i_dq+",)
    ownership = {0: "rl1", 1: "rl2", 2: "rl3", 3: EXTERNAL_GRID}
    group_of = {i: "rl_group" for i in ids}

    channels = {}
    for k, sid in enumerate(ids):
        col = np.zeros(4, dtype=complex)
        col[k] = -1.0 / L
        channels[f"{sid}.v_ser.v_dq+"] = col
    src = np.zeros(4, dtype=complex)
    src[3] = 1.0 / L_g
    channels["grid.v_src"] = src

    return AssembledSystem(model=make_model(A, state_labels=labels),
                           ownership=ownership, group_of=group_of,
                           subsystems=dict(zip(ids, [branch] * 3)), grid=grid,
                           disturbance_inputs=channels)


def apply_similarity(model: StateSpaceModel, P: np.ndarray) -> StateSpaceModel:
    """Apply x' = P x, i.e. A' = P A P^-1 (and B' = P B, C' = C P^-1).

    The eigenvalue multiset is preserved. A condition number above
    ``COND_WARN_THRESHOLD`` is reported via logging because the transformed
    eigenstructure becomes untrustworthy.
    """
    P = _as_complex(P)
    if P.shape != (model.n, model.n):
        raise DimensionMismatch(f"P must be {model.n}x{model.n}, got {P.shape}")
    if not np.all(np.isfinite(P)):
        raise NonFiniteEntry("P contains NaN/Inf entries")

    cond = np.linalg.cond(P)
    if not np.isfinite(cond) or cond > _COND_SINGULAR:
        raise SingularTransform(f"transform is singular (cond={cond:.3e})")
    if cond > COND_WARN_THRESHOLD:
        logger.warning("similarity transform badly conditioned: cond(P)=%.3e", cond)

    Pinv = np.linalg.inv(P)
    A2 = P @ model.A @ Pinv
    B2 = P @ model.B if model.p else model.B
    C2 = model.C @ Pinv if model.q else model.C
    return make_model(A2, B2, C2, model.D, model.state_labels,
                      model.input_labels, model.output_labels)
