"""Linear time-domain simulation with exact zero-order-hold stepping.

Between disturbance events the assembled models are LTI, so each segment is
advanced with the matrix exponential of the augmented (A, drive) system;
there is no integrator error to confound modal validation. Disturbances are
steps or impulses on named input channels, or parameter changes that trigger
re-assembly with state carry-over.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import ConfigInvalid, DivergenceDetected, TraceTooShort, UnknownParameter
from .lti import AssembledSystem
from .modal import ModalResult

logger = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6      # per-unit state magnitude guard, not configurable
_MIN_SAMPLES_FFT = 64


@dataclass(frozen=True)
class Disturbance:
    time: float
    target: str                 # input channel name or "<element>.<param>"
    kind: str = "step"          # "step" | "impulse"
    magnitude: float = 1.0


@dataclass(frozen=True)
class Scenario:
    duration: float
    step: float | None = None
    disturbances: tuple[Disturbance, ...] = ()
    probes: tuple[str, ...] | None = None     # None probes every state
    allow_divergence: bool = False
    x0: np.ndarray | None = None

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigInvalid("scenario duration must be positive")
        if self.step is not None:
            if self.step <= 0:
                raise ConfigInvalid("scenario step must be positive")
            if self.duration < 10 * self.step:
                raise ConfigInvalid("duration must be at least 10 steps")
        for d in self.disturbances:
            if not 0 <= d.time <= self.duration:
                raise ConfigInvalid(
                    f"disturbance at t={d.time} outside [0, {self.duration}]")
            if d.kind not in ("step", "impulse"):
                raise ConfigInvalid(f"unknown disturbance kind {d.kind!r}")


@dataclass
class Trace:
    """Uniformly sampled simulation output with provenance hashes."""

    t: np.ndarray
    samples: dict[str, np.ndarray]
    step: float
    scenario_hash: str
    model_hash: str
    diverged: bool = False
    truncated_at: float | None = None
    state_labels: tuple[str, ...] = ()

    @property
    def n_samples(self) -> int:
        return self.t.shape[0]

    def states_matrix(self) -> np.ndarray:
        """Full (n_states, n_samples) matrix; requires all states probed."""
        missing = [lbl for lbl in self.state_labels if lbl not in self.samples]
        if missing:
            raise KeyError(f"trace does not contain states {missing[:3]}...")
        return np.vstack([self.samples[lbl] for lbl in self.state_labels])


@dataclass(frozen=True)
class SpectrumPeaks:
    """Dominant FFT peaks. Frequencies are resolved to resolution_hz = 1/duration."""

    peaks: tuple[tuple[float, float], ...]    # (frequency Hz, amplitude)
    resolution_hz: float


def default_step(A: np.ndarray) -> float:
    """>= 50 samples per fastest oscillation, capped at 1e-4 s."""
    f_max = float(np.max(np.abs(np.linalg.eigvals(A).imag))) / (2 * np.pi)
    if f_max <= 0:
        return 1e-4
    return min(1e-4, 1.0 / (50.0 * f_max))


def _hash_obj(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str)
                          .encode()).hexdigest()[:16]


def _hash_model(A: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(A).tobytes()).hexdigest()[:16]


def _zoh_matrices(A: np.ndarray, drive: np.ndarray, dt: float):
    """Exact discrete pair (Ad, bd) for xdot = A x + drive (constant drive)."""
    n = A.shape[0]
    aug = np.zeros((n + 1, n + 1), dtype=complex)
    aug[:n, :n] = A * dt
    aug[:n, n] = drive * dt
    E = expm(aug)
    return E[:n, :n], E[:n, n]


def simulate(assembled: AssembledSystem, scenario: Scenario,
             reassemble=None) -> Trace:
    """Simulate the closed system under the scenario's disturbances.

    Channel targets must exist in ``assembled.disturbance_inputs``; any other
    target is treated as a parameter path and handed to ``reassemble``
    (a callable mapping {target: relative_change} to a new AssembledSystem),
    with the state vector carried over by label. Disturbance times snap to
    the simulation grid. A state magnitude beyond 1e6 truncates the trace
    (flagged) when the scenario allows divergence and raises otherwise.
    """
    model = assembled.model
    A = model.A
    n = model.n
    dt = scenario.step if scenario.step is not None else default_step(A)
    n_steps = int(round(scenario.duration / dt))
    if n_steps < 1:
        raise ConfigInvalid("duration shorter than one step")

    eigs = np.linalg.eigvals(A)
    if np.max(eigs.real) > 1e-8 * max(1.0, np.linalg.norm(A)) and \
            not scenario.allow_divergence:
        raise DivergenceDetected(
            f"model is unstable (max Re eig = {np.max(eigs.real):.3e}); "
            "set allow_divergence to simulate anyway")

    # disturbance schedule on the sample grid
    events: dict[int, list[Disturbance]] = {}
    for d in scenario.disturbances:
        k = int(round(d.time / dt))
        events.setdefault(min(k, n_steps), []).append(d)

    probes = scenario.probes
    labels = model.state_labels
    if probes is None:
        probes = labels
    probe_idx = {}
    for p in probes:
        if p not in labels:
            raise UnknownParameter(f"probe {p!r} is not a state label")
        probe_idx[p] = labels.index(p)

    x = np.zeros(n, dtype=complex) if scenario.x0 is None else \
        np.asarray(scenario.x0, dtype=complex).copy()
    channels = dict(assembled.disturbance_inputs)
    u_levels: dict[str, float] = {}
    param_changes: dict[str, float] = {}

    t_grid = np.arange(n_steps + 1) * dt
    out = np.empty((len(probes), n_steps + 1), dtype=complex)
    out[:, 0] = x[list(probe_idx.values())]

    diverged = False
    truncated_at = None
    k = 0
    Ad = None
    bd = None
    dirty = True

    def current_drive():
        drive = np.zeros(n, dtype=complex)
        for name, level in u_levels.items():
            drive += channels[name] * level
        return drive

    while k < n_steps:
        if k in events:
            for d in events[k]:
                if d.target in channels:
                    if d.kind == "step":
                        u_levels[d.target] = u_levels.get(d.target, 0.0) + d.magnitude
                    else:
                        x = x + channels[d.target] * d.magnitude
                else:
                    if reassemble is None:
                        raise UnknownParameter(
                            f"disturbance target {d.target!r} is neither an input "
                            "channel nor re-assembly is available")
                    param_changes[d.target] = param_changes.get(d.target, 0.0) + d.magnitude
                    new_assembled = reassemble(dict(param_changes))
                    if new_assembled.model.state_labels != labels:
                        raise ConfigInvalid(
                            "re-assembled system has a different state schema")
                    A = new_assembled.model.A
                    channels = dict(new_assembled.disturbance_inputs)
                dirty = True
        if dirty:
            Ad, bd = _zoh_matrices(A, current_drive(), dt)
            dirty = False

        x = Ad @ x + bd
        k += 1
        out[:, k] = x[list(probe_idx.values())]
        if np.max(np.abs(x)) > DIVERGENCE_LIMIT:
            if not scenario.allow_divergence:
                raise DivergenceDetected(
                    f"state magnitude exceeded {DIVERGENCE_LIMIT:.0e} at t={k * dt:.4g}")
            diverged = True
            truncated_at = k * dt
            out = out[:, :k + 1]
            t_grid = t_grid[:k + 1]
            logger.warning("simulation diverged at t=%.4g s; trace truncated", truncated_at)
            break

    samples = {}
    for i, p in enumerate(probes):
        col = out[i]
        samples[p] = col.real.copy() if np.max(np.abs(col.imag)) < 1e-300 else col

    return Trace(t=t_grid, samples=samples, step=dt,
                 scenario_hash=_hash_obj([scenario.duration, scenario.step,
                                          [(d.time, d.target, d.kind, d.magnitude)
                                           for d in scenario.disturbances]]),
                 model_hash=_hash_model(model.A),
                 diverged=diverged, truncated_at=truncated_at,
                 state_labels=labels)


def dominant_frequencies(trace: Trace, probe: str, n_peaks: int = 3) -> SpectrumPeaks:
    """Top spectral peaks of one probe: Hann-windowed FFT, DC excluded.

    Real-valued probes report non-negative frequencies only; complex probes
    keep the signed frequency axis. Peaks are local maxima of the magnitude
    spectrum ranked by amplitude.
    """
    if probe not in trace.samples:
        raise UnknownParameter(f"probe {probe!r} not in trace")
    y = np.asarray(trace.samples[probe])
    m = y.shape[0]
    if m < _MIN_SAMPLES_FFT:
        raise TraceTooShort(f"need at least {_MIN_SAMPLES_FFT} samples, got {m}")

    # remove the settled offset rather than the mean: a step response minus
    # its mean still carries a trend that would swamp the modal peaks
    y = y - y[-1]
    window = np.hanning(m)
    is_real = not np.iscomplexobj(y)
    if is_real:
        spec = np.abs(np.fft.rfft(y * window))
        freqs = np.fft.rfftfreq(m, d=trace.step)
    else:
        spec = np.abs(np.fft.fft(y * window))
        freqs = np.fft.fftfreq(m, d=trace.step)
        order = np.argsort(freqs)
        spec, freqs = spec[order], freqs[order]

    dc = int(np.argmin(np.abs(freqs)))
    peaks = []
    for i in range(1, len(spec) - 1):
        if i == dc:
            continue
        if spec[i] > spec[i - 1] and spec[i] >= spec[i + 1]:
            peaks.append((float(freqs[i]), float(spec[i])))
    peaks.sort(key=lambda p: -p[1])
    duration = trace.t[-1] - trace.t[0]
    return SpectrumPeaks(peaks=tuple(peaks[:n_peaks]),
                         resolution_hz=1.0 / duration if duration > 0 else np.inf)


def modal_coordinates(trace: Trace, result: ModalResult) -> np.ndarray:
    """Project a full-state trace onto left eigenvectors: z_i(t) = psi_i x(t)."""
    X = trace.states_matrix()
    if result.n != X.shape[0]:
        raise ConfigInvalid("modal result and trace dimensions differ")
    return result.Psi @ X


def export_trace_csv(trace: Trace, path) -> None:
    """Write `time,<probe...>` with 15 significant digits.

    Complex probes are split into `<probe>_re` and `<probe>_im` columns.
    """
    headers = ["time"]
    columns = [trace.t]
    for name, col in trace.samples.items():
        if np.iscomplexobj(col):
            headers += [f"{name}_re", f"{name}_im"]
            columns += [col.real, col.imag]
        else:
            headers.append(name)
            columns.append(col)
    with open(path, "w") as fh:
        fh.write(",".join(headers) + "\n")
        for row in zip(*columns):
            fh.write(",".join(f"{v:.15g}" for v in row) + "\n")
