"""Symmetry-group detection, the block transformation matrix and decomposition.

Subsystems sharing one label schema and staying within a relative deviation
tolerance of a common template form a group. The transformation matrix P
turns an M-subsystem group into M-1 decoupled copies of the template (the
inner-group sub-models) plus one aggregated model that, closed with the
external grid, carries the group-grid modes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidParameter, PartitionMismatch
from .lti import AssembledSystem, StateSpaceModel, assemble_group_grid, make_model

logger = logging.getLogger(__name__)

IDEAL = "ideal"
QUASI = "quasi"

# Deviations at or below this are numerically indistinguishable from zero.
IDEAL_DEVIATION_TOL = 1e-12

# Relative Frobenius deviation below which structurally identical subsystems
# are grouped. Chosen so that double-digit-percent operational differences
# still land in one quasi group; exposed as a CLI flag because no universal
# threshold exists.
DEFAULT_TOL_QUASI = 0.35


@dataclass(frozen=True)
class Group:
    """A set of subsystems with identical structure and similar parameters."""

    group_id: str
    member_ids: tuple[str, ...]
    template: StateSpaceModel
    symmetry_class: str        # IDEAL or QUASI
    deviation: float           # max relative Frobenius deviation from template

    @property
    def M(self) -> int:
        return len(self.member_ids)


@dataclass(frozen=True)
class GroupPartition:
    groups: tuple[Group, ...]

    @property
    def N(self) -> int:
        return len(self.groups)

    def group_of(self) -> dict[str, str]:
        return {m: g.group_id for g in self.groups for m in g.member_ids}

    def member_ids(self) -> list[str]:
        return [m for g in self.groups for m in g.member_ids]


@dataclass(frozen=True)
class TransformP:
    """Block transformation acting on the stacked states of one group.

    Block rows 1..M-1 are (e_k - e_M) x I_m and have zero block-row sum,
    which eliminates the common input from the transformed equations; block
    row M is c*(I_m, ..., I_m). The modification factor c changes the model
    expression but not the eigenvalues.
    """

    P: np.ndarray
    M: int
    m: int
    c: float


def _stacked_norm(model: StateSpaceModel) -> float:
    return float(np.sqrt(sum(np.linalg.norm(M) ** 2
                             for M in (model.A, model.B, model.C, model.D))))


def _deviation(member: StateSpaceModel, template_mats, template_norm: float) -> float:
    diff = sum(np.linalg.norm(getattr(member, name) - T) ** 2
               for name, T in template_mats)
    return float(np.sqrt(diff)) / max(template_norm, 1e-300)


def _mean_template(models: Sequence[StateSpaceModel]) -> StateSpaceModel:
    ref = models[0]
    mats = {name: np.mean([getattr(m, name) for m in models], axis=0)
            for name in ("A", "B", "C", "D")}
    return make_model(mats["A"], mats["B"], mats["C"], mats["D"],
                      ref.state_labels, ref.input_labels, ref.output_labels)


def _schema_key(model: StateSpaceModel):
    return (model.state_labels, model.input_labels, model.output_labels,
            model.n, model.p, model.q)


def detect_groups(subsystems: Mapping[str, StateSpaceModel] | Sequence[StateSpaceModel],
                  tol_quasi: float = DEFAULT_TOL_QUASI) -> GroupPartition:
    """Partition subsystems into symmetry groups.

    Grouping key is the ordered state-label schema plus dimensions, so
    parameter-only differences never split structurally identical devices
    unless their deviation from the running mean template exceeds
    ``tol_quasi``. Templates are entrywise means of the member matrices.
    Groups with zero deviation (within 1e-12) are ideal, the rest quasi.
    Singleton groups are legal.
    """
    if not 0 < tol_quasi < 1:
        raise InvalidParameter("tol_quasi must lie in (0, 1)")
    if isinstance(subsystems, Mapping):
        items = list(subsystems.items())
    else:
        items = [(f"sub{i}", m) for i, m in enumerate(subsystems)]
    if not items:
        raise InvalidParameter("subsystems must be nonempty")

    buckets: dict[tuple, list[tuple[str, StateSpaceModel]]] = {}
    for sid, model in items:
        buckets.setdefault(_schema_key(model), []).append((sid, model))

    groups: list[Group] = []
    for bucket in buckets.values():
        pending: list[list[tuple[str, StateSpaceModel]]] = []
        for sid, model in bucket:
            placed = False
            for members in pending:
                candidate = members + [(sid, model)]
                template = _mean_template([m for _, m in candidate])
                t_norm = _stacked_norm(template)
                t_mats = [(nm, getattr(template, nm)) for nm in ("A", "B", "C", "D")]
                dev = max(_deviation(m, t_mats, t_norm) for _, m in candidate)
                if dev <= tol_quasi:
                    members.append((sid, model))
                    placed = True
                    break
            if not placed:
                pending.append([(sid, model)])
        for members in pending:
            template = _mean_template([m for _, m in members])
            t_norm = _stacked_norm(template)
            t_mats = [(nm, getattr(template, nm)) for nm in ("A", "B", "C", "D")]
            dev = max(_deviation(m, t_mats, t_norm) for _, m in members)
            cls = IDEAL if dev <= IDEAL_DEVIATION_TOL else QUASI
            groups.append(Group(group_id=f"g{len(groups)}",
                                member_ids=tuple(sid for sid, _ in members),
                                template=template, symmetry_class=cls,
                                deviation=dev))
    return GroupPartition(groups=tuple(groups))


def build_transform(M: int, m: int, c: float) -> TransformP:
    """Build the group transformation matrix for M subsystems of m states.

    The concrete choice (difference rows e_k - e_M, aggregate row c * ones)
    is one of many zero-row-sum bases; it is sparse, well conditioned and
    replaceable without affecting any spectra.
    """
    if M < 1 or m < 1:
        raise InvalidParameter("M and m must be positive integers")
    if c == 0:
        raise InvalidParameter("modification factor c must be nonzero")
    eye = np.eye(m)
    P = np.zeros((M * m, M * m))
    for k in range(M - 1):
        P[k * m:(k + 1) * m, k * m:(k + 1) * m] = eye
        P[k * m:(k + 1) * m, (M - 1) * m:] = -eye
    for j in range(M):
        P[(M - 1) * m:, j * m:(j + 1) * m] = c * eye
    return TransformP(P=P, M=M, m=m, c=float(c))


@dataclass(frozen=True)
class InnerBlock:
    """Template dynamics repeated M-1 times by the decomposition."""

    group_id: str
    model: StateSpaceModel     # closed model holding the template A
    multiplicity: int

    def spectrum(self) -> np.ndarray:
        return self.model.eigenvalues()


@dataclass(frozen=True)
class Decomposition:
    """Inner-group sub-models plus the combined group-grid model."""

    inner: tuple[InnerBlock, ...]
    group_grid: StateSpaceModel          # closed model of dim sum(m_j) + e
    c_used: dict[str, float]
    approximate: bool                    # True when any group is quasi

    def spectrum(self) -> np.ndarray:
        """Union (with multiplicity) of inner and group-grid spectra."""
        parts = []
        for block in self.inner:
            if block.multiplicity > 0:
                parts.append(np.tile(block.spectrum(), block.multiplicity))
        parts.append(self.group_grid.eigenvalues())
        return np.concatenate(parts) if parts else np.array([], complex)


def decompose(assembled: AssembledSystem, partition: GroupPartition,
              c: float | Mapping[str, float] | None = None) -> Decomposition:
    """Split an assembled system into inner-group and group-grid sub-models.

    Per group j the inner model is the template A with multiplicity M_j - 1;
    the aggregated model (A, c*M*B, C/c, M*D) of every group is closed with
    the external grid to form the group-grid model. c defaults to 1/M_j.
    For quasi groups the template stands in for the members and the result
    is flagged approximate.
    """
    if assembled.grid is None:
        raise PartitionMismatch("assembled system does not retain its grid model")
    part_ids = set(partition.member_ids())
    sys_ids = set(assembled.subsystems)
    if part_ids != sys_ids:
        raise PartitionMismatch(
            f"partition covers {sorted(part_ids)} but system has {sorted(sys_ids)}")

    def c_for(group: Group) -> float:
        if c is None:
            return 1.0 / group.M
        if isinstance(c, Mapping):
            val = c.get(group.group_id, 1.0 / group.M)
        else:
            val = float(c)
        if val == 0:
            raise InvalidParameter("modification factor c must be nonzero")
        return float(val)

    inner = []
    aggregates: dict[str, StateSpaceModel] = {}
    c_used = {}
    approximate = False
    for group in partition.groups:
        t = group.template
        approximate = approximate or group.symmetry_class == QUASI
        cj = c_for(group)
        c_used[group.group_id] = cj
        inner.append(InnerBlock(group_id=group.group_id,
                                model=make_model(t.A, state_labels=t.state_labels),
                                multiplicity=group.M - 1))
        aggregates[f"{group.group_id}.agg"] = make_model(
            t.A, cj * group.M * t.B, t.C / cj, group.M * t.D,
            t.state_labels, t.input_labels, t.output_labels)

    combined = assemble_group_grid(aggregates, assembled.grid)
    return Decomposition(inner=tuple(inner), group_grid=combined.model,
                         c_used=c_used, approximate=approximate)
