"""Workflow orchestration: group, classify, analyze, participate, act.

The functions here tie the library layers together for the CLI: build the
network from a config, detect symmetry groups, assemble and decompose,
run the modal/participation analysis, and drive the invariance, simulation
and string-vs-parallel experiments.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import modal as md
from . import symmetry as sy
from .config import SystemConfig, apply_vary, build_network
from .errors import ConfigInvalid, DefectiveCluster
from .lti import EXTERNAL_GRID, AssembledSystem, assemble_group_grid, make_model
from .modal import ModalResult, ModeCluster
from .simkit import Disturbance, Scenario, Trace, dominant_frequencies, simulate
from .symmetry import DEFAULT_TOL_QUASI, GroupPartition

logger = logging.getLogger(__name__)

IDEALLY_SYMMETRIC = "ideally-symmetric"
QUASI_SYMMETRIC = "quasi-symmetric"
GROUP_SYMMETRIC = "group-symmetric"

# External-participation thresholds for cluster classification; the quasi
# case only reaches approximately zero external gpf.
TAU_EXT_IDEAL = 1e-3
TAU_EXT_QUASI = 5e-2


@dataclass
class AnalysisOptions:
    cluster_tol: float | None = None
    tol_quasi: float | None = None
    tau_ext: float | None = None
    c: dict[str, float] | float | None = None
    rc_threshold: float = 1.0     # percent; not universal, deliberately configurable

    @classmethod
    def from_config(cls, config: SystemConfig, **overrides) -> "AnalysisOptions":
        merged = dict(config.analysis)
        merged.update({k: v for k, v in overrides.items() if v is not None})
        known = {k: merged.get(k) for k in
                 ("cluster_tol", "tol_quasi", "tau_ext", "c")}
        opts = cls(**known)
        if merged.get("rc_threshold") is not None:
            opts.rc_threshold = float(merged["rc_threshold"])
        return opts


@dataclass
class AnalysisReport:
    assembled: AssembledSystem
    partition: GroupPartition
    modal: ModalResult
    clusters: list[ModeCluster]
    system_class: str
    cluster_tol_used: float
    tau_ext_used: float
    tol_quasi_used: float
    warnings: list[str] = field(default_factory=list)

    def clusters_by_class(self, classification: str) -> list[ModeCluster]:
        return [c for c in self.clusters if c.classification == classification]

    def tracked_clusters(self) -> list[ModeCluster]:
        """Clusters tracked across parameter variations.

        For conjugate-symmetric spectra only the non-negative half plane is
        tracked: the mode with the positive imaginary part represents its
        conjugate pair.
        """
        w = self.modal.eigenvalues
        if md._spectrum_is_conjugate_symmetric(w, self.cluster_tol_used):
            return [c for c in self.clusters if c.centroid.imag >= 0]
        return list(self.clusters)


def system_class_of(partition: GroupPartition) -> str:
    if partition.N > 1:
        return GROUP_SYMMETRIC
    return IDEALLY_SYMMETRIC if partition.groups[0].symmetry_class == sy.IDEAL \
        else QUASI_SYMMETRIC


def analyze(config: SystemConfig, options: AnalysisOptions | None = None) -> AnalysisReport:
    """Full symmetry-aware modal analysis of a configured system."""
    options = options or AnalysisOptions.from_config(config)
    warnings: list[str] = []

    subsystems, grid = build_network(config)
    models = {sid: dm.model for sid, dm in subsystems.items()}
    tol_quasi = options.tol_quasi if options.tol_quasi is not None else DEFAULT_TOL_QUASI
    partition = sy.detect_groups(models, tol_quasi=tol_quasi)
    if options.tol_quasi is None and any(
            g.symmetry_class == sy.QUASI for g in partition.groups):
        warnings.append(
            f"grouping used the default tol_quasi={DEFAULT_TOL_QUASI}; the "
            "similarity threshold is a pragmatic choice, tune --tol-quasi if "
            "groups look wrong")

    assembled = assemble_group_grid(models, grid.model,
                                    group_of=partition.group_of(),
                                    grid_aux_inputs=grid.aux_inputs)
    result = md.modal_analysis(assembled.model)
    cluster_tol = options.cluster_tol if options.cluster_tol is not None \
        else md.default_cluster_tol(result.a_norm_fro)
    clusters = md.cluster_modes(result, cluster_tol=cluster_tol)

    sys_class = system_class_of(partition)
    tau_ext = options.tau_ext
    if tau_ext is None:
        any_quasi = any(g.symmetry_class == sy.QUASI for g in partition.groups)
        tau_ext = TAU_EXT_QUASI if any_quasi else TAU_EXT_IDEAL

    for cluster in clusters:
        if cluster.n_g > 1:
            # rank of the cluster's eigenvector block; unlike rank(A - lambda*I)
            # this stays meaningful when non-normality blurs nearby modes
            cluster.geometric_multiplicity = int(np.linalg.matrix_rank(
                result.Phi[:, list(cluster.member_indices)]))
        try:
            cluster.gpf = md.group_participation(result, cluster)
        except DefectiveCluster as exc:
            warnings.append(f"cluster at {cluster.centroid:.4g}: {exc}")
    classified = [c for c in clusters if c.gpf is not None]
    md.classify_clusters(classified, assembled.ownership, assembled.group_of,
                         tau_ext=tau_ext)

    return AnalysisReport(assembled=assembled, partition=partition, modal=result,
                          clusters=clusters, system_class=sys_class,
                          cluster_tol_used=cluster_tol, tau_ext_used=tau_ext,
                          tol_quasi_used=tol_quasi, warnings=warnings)


@dataclass(frozen=True)
class RCRow:
    cluster_index: int
    classification: str
    group_id: str | None
    lambda_before: complex
    lambda_after: complex
    rc_percent: float
    invariant: bool


@dataclass
class InvarianceRun:
    before: AnalysisReport
    after: AnalysisReport
    rows: list[RCRow]
    cluster_diameter_before: dict[int, float]
    cluster_diameter_after: dict[int, float]
    rc_threshold: float

    def rc_by_class(self, classification: str) -> list[float]:
        return [r.rc_percent for r in self.rows if r.classification == classification]


def run_invariance(config: SystemConfig, vary: list[str],
                   options: AnalysisOptions | None = None) -> InvarianceRun:
    """Analyze before/after the parameter variation and pair tracked modes."""
    options = options or AnalysisOptions.from_config(config)
    before = analyze(config, options)
    varied = config
    for expression in vary:
        varied = apply_vary(varied, expression)
    after = analyze(varied, options)

    tracked = before.tracked_clusters()
    report = md.relative_change(before.modal, after.modal, tracked)
    rows = []
    diam_before: dict[int, float] = {}
    diam_after: dict[int, float] = {}
    for ci, cluster in enumerate(tracked):
        lams_after = [e.lambda_after for e in report.entries if e.cluster_index == ci]
        diam_before[ci] = _diameter(cluster.eigenvalues)
        diam_after[ci] = _diameter(np.array(lams_after))
        for entry in report.entries:
            if entry.cluster_index != ci:
                continue
            rows.append(RCRow(cluster_index=ci,
                              classification=cluster.classification,
                              group_id=cluster.group_id,
                              lambda_before=entry.lambda_before,
                              lambda_after=entry.lambda_after,
                              rc_percent=entry.rc_percent,
                              invariant=entry.rc_percent < options.rc_threshold))
    return InvarianceRun(before=before, after=after, rows=rows,
                         cluster_diameter_before=diam_before,
                         cluster_diameter_after=diam_after,
                         rc_threshold=options.rc_threshold)


def _diameter(values: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    return float(np.max(np.abs(values[:, None] - values[None, :])))


@dataclass(frozen=True)
class CrosscheckRow:
    probe: str
    peak_hz: float
    peak_amplitude: float
    predicted_hz: float
    delta_hz: float
    within_one_bin: bool


@dataclass
class SimulationRun:
    report: AnalysisReport
    trace: Trace
    crosscheck: list[CrosscheckRow]


def scenario_from_dict(raw: dict) -> Scenario:
    try:
        disturbances = tuple(
            Disturbance(time=d["time"], target=d["target"],
                        kind=d.get("kind", "step"), magnitude=d.get("magnitude", 1.0))
            for d in raw.get("disturbances", []))
        return Scenario(duration=raw["duration"], step=raw.get("step"),
                        disturbances=disturbances,
                        probes=tuple(raw["probes"]) if raw.get("probes") else None,
                        allow_divergence=raw.get("allow_divergence", False))
    except KeyError as exc:
        raise ConfigInvalid(f"scenario missing key {exc}")


def run_simulation(config: SystemConfig, scenario: Scenario,
                   options: AnalysisOptions | None = None,
                   n_peaks: int = 3) -> SimulationRun:
    """Simulate the configured system and cross-check FFT peaks against modes.

    Parameter disturbances (targets that are not input channels) re-run the
    assembly with the varied config, carrying states over.
    """
    report = analyze(config, options)

    def reassemble(changes: dict[str, float]) -> AssembledSystem:
        varied = config
        for target, rel in changes.items():
            varied = apply_vary(varied, f"{target}={rel * 100:+.10g}%")
        subs, grid = build_network(varied)
        return assemble_group_grid({sid: dm.model for sid, dm in subs.items()},
                                   grid.model, group_of=report.assembled.group_of,
                                   grid_aux_inputs=grid.aux_inputs)

    trace = simulate(report.assembled, scenario, reassemble=reassemble)

    predicted = report.modal.eigenvalues.imag / (2 * np.pi)
    rows = []
    probes = scenario.probes or trace.state_labels
    for probe in probes:
        peaks = dominant_frequencies(trace, probe, n_peaks=n_peaks)
        if not peaks.peaks:
            continue
        f_peak, amp = peaks.peaks[0]
        candidates = predicted if np.iscomplexobj(trace.samples[probe]) \
            else np.abs(predicted)
        j = int(np.argmin(np.abs(candidates - f_peak)))
        delta = float(abs(candidates[j] - f_peak))
        rows.append(CrosscheckRow(probe=probe, peak_hz=f_peak, peak_amplitude=amp,
                                  predicted_hz=float(candidates[j]), delta_hz=delta,
                                  within_one_bin=delta <= peaks.resolution_hz))
    return SimulationRun(report=report, trace=trace, crosscheck=rows)


# ---------------------------------------------------------------------------
# String vs. parallel collector topology
# ---------------------------------------------------------------------------


def _impedance_block(z: complex, ports: int) -> np.ndarray:
    if ports == 1:
        return np.array([[z]], dtype=complex)
    return np.array([[z.real, -z.imag], [z.imag, z.real]], dtype=complex)


def assemble_string(subsystems: dict, grid,
                    segment_impedances: list[complex],
                    omega0: float | None = None) -> AssembledSystem:
    """Assemble a daisy-chained collector string of subsystems.

    Unit k sits at chain position k (position 1 nearest the common bus);
    segment s carries the summed current of every unit at or beyond it, so
    unit k's bus voltage is v_c plus the shared-path drops. Because the unit
    output currents are pure state maps (D = 0 required), the collector's
    R + jX drop enters algebraically and its di/dt term enters exactly
    through a mass-matrix solve; the collector adds no states of its own.
    When omega0 is None the di/dt term is omitted (quasi-static collector).
    """
    ids = list(subsystems)
    models = [subsystems[i] for i in ids]
    M = len(models)
    if len(segment_impedances) != M:
        raise ConfigInvalid(f"need {M} segment impedances, got {len(segment_impedances)}")
    p = models[0].p
    q = models[0].q
    if p != q:
        raise ConfigInvalid("string assembly requires square device ports")
    if any(np.any(m.D != 0) for m in models):
        raise ConfigInvalid("string assembly requires zero-feedthrough units")

    def shared_path(blocks):
        cumulative = []
        total = np.zeros((q, q), dtype=complex)
        for Z in blocks:
            total = total + Z
            cumulative.append(total.copy())
        W = np.zeros((M * q, M * q), dtype=complex)
        for k in range(M):
            for j in range(M):
                W[k * q:(k + 1) * q, j * q:(j + 1) * q] = cumulative[min(k, j)]
        return W

    W = shared_path([_impedance_block(z, p) for z in segment_impedances])
    if omega0 is not None:
        WL = shared_path([np.eye(q, dtype=complex) * (z.imag / omega0)
                          for z in segment_impedances])
    else:
        WL = np.zeros((M * q, M * q), dtype=complex)

    sizes = [m.n for m in models]
    offsets = np.cumsum([0] + sizes)
    nx = offsets[-1]
    e = grid.n

    Ct = np.zeros((M * q, nx), dtype=complex)
    Bt = np.zeros((nx, M * p), dtype=complex)
    At = np.zeros((nx, nx), dtype=complex)
    for k, m in enumerate(models):
        r = slice(offsets[k], offsets[k + 1])
        b = slice(k * q, (k + 1) * q)
        Ct[b, r] = m.C
        Bt[r, b] = m.B
        At[r, r] = m.A

    ones = np.tile(np.eye(p, dtype=complex), (M, 1))   # M*p x p
    # v_c = C_b x_E + D_b * sum(i);  i = Ct x  (no unit feedthrough)
    vc_x = grid.D @ ones.T @ Ct                        # p x nx
    vc_E = grid.C                                      # p x e
    vbus_x = ones @ vc_x + W @ Ct                      # M*p x nx
    vbus_E = ones @ vc_E

    E = np.eye(nx, dtype=complex) - Bt @ WL @ Ct       # mass matrix
    if np.linalg.cond(E) > 1e12:
        raise ConfigInvalid("collector inductance makes the string assembly singular")
    A11 = np.linalg.solve(E, At + Bt @ vbus_x)
    A1E = np.linalg.solve(E, Bt @ vbus_E)

    n = nx + e
    A = np.zeros((n, n), dtype=complex)
    A[:nx, :nx] = A11
    A[:nx, nx:] = A1E
    A[nx:, :nx] = grid.B @ ones.T @ Ct
    A[nx:, nx:] = grid.A

    labels = []
    ownership = {}
    for sid, m in zip(ids, models):
        for lbl in m.state_labels:
            ownership[len(labels)] = sid
            labels.append(f"{sid}.{lbl}")
    for lbl in grid.state_labels:
        ownership[len(labels)] = EXTERNAL_GRID
        labels.append(f"grid.{lbl}")

    return AssembledSystem(model=make_model(A, state_labels=labels),
                           ownership=ownership, group_of={},
                           subsystems=dict(zip(ids, models)), grid=grid)


@dataclass(frozen=True)
class SweepPoint:
    impedance_pu: float
    max_pole_distance: float
    poles_string: np.ndarray
    poles_parallel: np.ndarray   # paired order: poles_parallel[i] matches poles_string[i]


def run_string_vs_parallel(config: SystemConfig, sweep: list[float],
                           options: AnalysisOptions | None = None) -> list[SweepPoint]:
    """Compare string and parallel collector topologies over an impedance sweep.

    The parallel variant neglects the collector impedance entirely; the sweep
    value is the per-segment collector impedance magnitude in per-unit, with
    the R:X ratio taken from the config's collector section.
    """
    if config.collector is None:
        raise ConfigInvalid("config has no collector section for the string topology")
    base = complex(config.collector.get("R", 0.0), config.collector.get("X", 0.0))
    if base == 0:
        base = complex(1.0, 3.0)   # default collector R:X shape
    direction = base / abs(base)

    subsystems, grid = build_network(config)
    models = {sid: dm.model for sid, dm in subsystems.items()}
    parallel = assemble_group_grid(models, grid.model,
                                   grid_aux_inputs=grid.aux_inputs)
    poles_parallel = parallel.model.eigenvalues()

    points = []
    for value in sweep:
        z = direction * value
        string = assemble_string(models, grid.model, [z] * len(models),
                                 omega0=config.omega0)
        poles_string = string.model.eigenvalues()
        perm, dist = md.pair_eigenvalues(poles_string, poles_parallel)
        points.append(SweepPoint(impedance_pu=float(value),
                                 max_pole_distance=float(np.max(dist)),
                                 poles_string=poles_string,
                                 poles_parallel=poles_parallel[perm]))
    return points
