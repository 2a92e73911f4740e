"""Eigendecomposition, participation factors, mode clustering and invariance.

Participation factor of state k in mode i: pf_ki = Psi[i, k] * Phi[k, i],
with left/right eigenvectors normalised to psi_i . phi_i = 1. Group
participation factors sum pf columns over a cluster of repeated/close modes
and equal the diagonal of the Riesz spectral projector for that cluster,
which makes them basis-invariant and perturbation-robust where individual
participation factors of close modes are not.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    ContourSeparationFailure,
    ConvergenceFailure,
    DefectiveCluster,
    InvalidParameter,
    PairingAmbiguous,
)
from .lti import EXTERNAL_GRID, StateSpaceModel

logger = logging.getLogger(__name__)

# Right-eigenvector matrices above this condition number fall back to an
# independent left eigendecomposition with biorthonormal rescaling.
_PHI_COND_LIMIT = 1e10
_DEFECTIVE_TOL = 1e-8

INNER_GROUP = "inner-group"
GROUP_GRID = "group-grid"
UNCLASSIFIED = "unclassified"


def default_cluster_tol(a_norm_fro: float) -> float:
    """Absolute complex-plane distance below which modes count as 'close'."""
    return max(1e-6 * a_norm_fro, 1e-9)


def pair_eigenvalues(a, b) -> tuple[np.ndarray, np.ndarray]:
    """Optimal bijective pairing of two equal-size eigenvalue multisets.

    Returns (permutation, distances) such that b[permutation[i]] is matched
    to a[i] and distances[i] = |a[i] - b[permutation[i]]|, minimising the
    total pairing distance.
    """
    a = np.asarray(a, dtype=complex).ravel()
    b = np.asarray(b, dtype=complex).ravel()
    if a.shape != b.shape:
        raise InvalidParameter(
            f"cannot pair spectra of different sizes {a.shape} vs {b.shape}")
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty_like(cols)
    perm[rows] = cols
    return perm, cost[rows, perm[rows]]


@dataclass(frozen=True)
class ModalResult:
    """Eigenvalues with biorthonormal eigenvectors and participation factors.

    Phi holds right eigenvectors as columns, Psi left eigenvectors as rows
    with Psi @ Phi = I for non-defective modes. PF[k, i] = Psi[i, k]*Phi[k, i].
    ``defective`` marks eigenvalues for which no reliable eigenvector pair
    exists; their PF columns are not fabricated and must not be trusted.
    ``repeated`` marks eigenvalues that are numerically repeated (individual
    participation factors are non-unique there).
    """

    eigenvalues: np.ndarray
    Phi: np.ndarray
    Psi: np.ndarray
    PF: np.ndarray
    defective: np.ndarray
    repeated: np.ndarray
    state_labels: tuple[str, ...]
    a_norm_fro: float

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]


@dataclass
class ModeCluster:
    """A set of repeated or close eigenvalues treated as one modal entity."""

    member_indices: tuple[int, ...]
    eigenvalues: np.ndarray
    centroid: complex
    cluster_tol: float
    n_g: int
    geometric_multiplicity: int | None = None
    classification: str = UNCLASSIFIED
    group_id: str | None = None
    gpf: np.ndarray | None = None

    @property
    def radius(self) -> float:
        return float(np.max(np.abs(self.eigenvalues - self.centroid)))


@dataclass(frozen=True)
class RCEntry:
    """Relative change of one tracked mode across a parameter variation."""

    lambda_before: complex
    lambda_after: complex
    rc_percent: float
    cluster_index: int


@dataclass(frozen=True)
class InvarianceReport:
    entries: tuple[RCEntry, ...]

    def rc_of_cluster(self, cluster_index: int) -> list[float]:
        return [e.rc_percent for e in self.entries if e.cluster_index == cluster_index]


def modal_analysis(A, state_labels=None) -> ModalResult:
    """Eigendecomposition with biorthonormal left/right eigenvectors.

    Left eigenvectors are the rows of Phi^-1 when Phi is well conditioned,
    which makes biorthonormality exact; otherwise an independent left
    eigendecomposition is paired to the right one and rescaled, and modes
    whose left/right product is numerically zero are flagged defective.
    """
    if isinstance(A, StateSpaceModel):
        state_labels = state_labels or A.state_labels
        A = A.A
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidParameter(f"A must be square, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidParameter("A contains NaN/Inf entries")
    n = A.shape[0]
    labels = tuple(state_labels) if state_labels is not None else tuple(
        f"x{i}" for i in range(n))

    try:
        w, Phi = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"eigensolver did not converge: {exc}") from exc

    defective = np.zeros(n, dtype=bool)
    cond_phi = np.linalg.cond(Phi)
    if np.isfinite(cond_phi) and cond_phi < _PHI_COND_LIMIT:
        Psi = np.linalg.inv(Phi)
    else:
        try:
            wl, Vl = np.linalg.eig(A.conj().T)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceFailure(f"left eigensolver did not converge: {exc}") from exc
        perm, _ = pair_eigenvalues(w, wl.conj())
        Psi = Vl[:, perm].conj().T
        for i in range(n):
            s = Psi[i] @ Phi[:, i]
            scale = np.linalg.norm(Psi[i]) * np.linalg.norm(Phi[:, i])
            if abs(s) < _DEFECTIVE_TOL * max(scale, 1e-300):
                defective[i] = True
                logger.warning(
                    "eigenvalue %s is numerically defective; PF column unreliable", w[i])
            else:
                Psi[i] = Psi[i] / s

    PF = Phi * Psi.T

    a_norm = float(np.linalg.norm(A))
    tol = default_cluster_tol(a_norm)
    dist = np.abs(w[:, None] - w[None, :])
    np.fill_diagonal(dist, np.inf)
    repeated = np.min(dist, axis=1) <= tol

    return ModalResult(eigenvalues=w, Phi=Phi, Psi=Psi, PF=PF,
                       defective=defective, repeated=repeated,
                       state_labels=labels, a_norm_fro=a_norm)


def _spectrum_is_conjugate_symmetric(w: np.ndarray, tol: float) -> bool:
    if np.all(np.abs(w.imag) <= tol):
        return True
    try:
        _, dist = pair_eigenvalues(w, w.conj())
    except InvalidParameter:
        return False
    return bool(np.max(dist) <= max(tol, 1e-9 * (1 + np.max(np.abs(w)))))


def _single_linkage(indices: list[int], w: np.ndarray, tol: float) -> list[list[int]]:
    parent = {i: i for i in indices}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a in range(len(indices)):
        for b in range(a + 1, len(indices)):
            i, j = indices[a], indices[b]
            if abs(w[i] - w[j]) <= tol:
                parent[find(i)] = find(j)

    groups: dict[int, list[int]] = {}
    for i in indices:
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def cluster_modes(result: ModalResult, cluster_tol: float | None = None) -> list[ModeCluster]:
    """Single-linkage clustering of the spectrum in the complex plane.

    Conjugate-symmetric spectra are clustered separately in the upper
    (Im >= 0) and lower half planes so that a conjugate pair never merges
    into one cluster. Singleton clusters are legal.
    """
    tol = cluster_tol if cluster_tol is not None else default_cluster_tol(result.a_norm_fro)
    if tol <= 0:
        raise InvalidParameter("cluster_tol must be positive")
    w = result.eigenvalues

    halves: list[list[int]]
    if _spectrum_is_conjugate_symmetric(w, tol):
        upper = [i for i in range(result.n) if w[i].imag >= 0]
        lower = [i for i in range(result.n) if w[i].imag < 0]
        halves = [h for h in (upper, lower) if h]
    else:
        halves = [list(range(result.n))]

    clusters = []
    for half in halves:
        for members in _single_linkage(half, w, tol):
            members = sorted(members)
            vals = w[members]
            centroid = complex(np.mean(vals))
            clusters.append(ModeCluster(member_indices=tuple(members),
                                        eigenvalues=vals, centroid=centroid,
                                        cluster_tol=tol, n_g=len(members)))
    clusters.sort(key=lambda c: (-c.centroid.real, abs(c.centroid.imag), c.centroid.imag))
    return clusters


def geometric_multiplicity(A, lam: complex, rank_tol: float = 1e-8) -> int:
    """Dimension of the eigenspace of lam: n - rank(A - lam*I).

    Rank is counted from singular values above rank_tol * sigma_max.
    """
    if isinstance(A, StateSpaceModel):
        A = A.A
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    sv = np.linalg.svd(A - lam * np.eye(n), compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return n
    rank = int(np.sum(sv > rank_tol * sv[0]))
    return n - rank


def group_participation(result: ModalResult, cluster: ModeCluster) -> np.ndarray:
    """Group participation factor: gpf_k = sum over cluster of Psi[i,k]*Phi[k,i].

    For exactly repeated modes any basis of the eigenspace gives the same
    result. Clusters containing a numerically defective member are rejected:
    repeated modes are assumed symmetry-induced and therefore non-defective,
    so a defective cluster is reported rather than computed.
    """
    members = list(cluster.member_indices)
    if any(result.defective[i] for i in members):
        raise DefectiveCluster(
            "cluster has geometric multiplicity below its algebraic multiplicity; "
            "gpf not computed")
    gpf = result.PF[:, members].sum(axis=1)
    total = gpf.sum()
    if abs(total - cluster.n_g) > 1e-6 * max(1.0, cluster.n_g):
        logger.warning("gpf sum %.3e deviates from cluster size %d", abs(total), cluster.n_g)
    return gpf


def group_participation_projector(A, cluster: ModeCluster,
                                  quadrature_points: int = 64,
                                  radius: float | None = None,
                                  eigenvalues: np.ndarray | None = None) -> np.ndarray:
    """gpf via the diagonal of the Riesz spectral projector of the cluster.

    Evaluates (1/2*pi*i) * contour integral of (sI - A)^-1 over a circle
    centred at the cluster centroid by trapezoidal quadrature, which
    converges exponentially for analytic periodic integrands. The circle
    radius defaults to the midpoint between the cluster radius and the
    nearest external eigenvalue; the contour must separate the cluster from
    the rest of the spectrum by at least 2 * cluster_tol.
    """
    if isinstance(A, StateSpaceModel):
        A = A.A
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    if quadrature_points < 4:
        raise InvalidParameter("need at least 4 quadrature points")

    w = np.asarray(eigenvalues) if eigenvalues is not None else np.linalg.eigvals(A)
    z0 = cluster.centroid
    members = set(cluster.member_indices)
    r_cluster = cluster.radius
    ext = np.array([w[i] for i in range(len(w)) if i not in members])
    d_ext = float(np.min(np.abs(ext - z0))) if ext.size else np.inf

    if radius is None:
        if not np.isfinite(d_ext):
            # no external spectrum: any enclosing circle works; keep the
            # poles well inside so the trapezoid rule converges fast
            radius = max(2.0 * r_cluster, r_cluster + 1.0)
        else:
            if d_ext - r_cluster < 2 * cluster.cluster_tol:
                raise ContourSeparationFailure(
                    f"cluster radius {r_cluster:.3e} too close to external spectrum "
                    f"(distance {d_ext:.3e}) for a separating contour")
            radius = 0.5 * (d_ext + r_cluster)
    else:
        if radius <= r_cluster or radius >= d_ext:
            raise ContourSeparationFailure(
                f"radius {radius:.3e} does not separate cluster "
                f"(radius {r_cluster:.3e}) from external spectrum (distance {d_ext:.3e})")

    theta = 2 * np.pi * np.arange(quadrature_points) / quadrature_points
    gpf = np.zeros(n, dtype=complex)
    eye = np.eye(n, dtype=complex)
    for th in theta:
        s = z0 + radius * np.exp(1j * th)
        resolvent_diag = np.diagonal(np.linalg.solve(s * eye - A, eye))
        gpf += resolvent_diag * np.exp(1j * th)
    return gpf * radius / quadrature_points


def classify_clusters(clusters: list[ModeCluster], ownership: dict[int, str],
                      group_of: dict[str, str], tau_ext: float = 1e-3) -> list[ModeCluster]:
    """Label clusters as inner-group(g), group-grid or unclassified.

    A cluster is inner-group when the external-grid gpf mass stays below
    tau_ext * n_g and one group holds more than (1 - tau_ext) * n_g of the
    mass; it is group-grid when the external-grid mass reaches tau_ext * n_g.
    """
    ext_states = [k for k, owner in ownership.items() if owner == EXTERNAL_GRID]
    group_states: dict[str, list[int]] = {}
    for k, owner in ownership.items():
        if owner == EXTERNAL_GRID:
            continue
        gid = group_of.get(owner, owner)
        group_states.setdefault(gid, []).append(k)

    for cluster in clusters:
        if cluster.gpf is None:
            raise InvalidParameter("classify_clusters requires gpf on every cluster")
        mass = np.abs(cluster.gpf)
        ext_mass = float(mass[ext_states].sum()) if ext_states else 0.0
        cluster.classification = UNCLASSIFIED
        cluster.group_id = None
        if ext_mass >= tau_ext * cluster.n_g:
            cluster.classification = GROUP_GRID
            continue
        for gid, states in group_states.items():
            if float(mass[states].sum()) > (1 - tau_ext) * cluster.n_g:
                cluster.classification = INNER_GROUP
                cluster.group_id = gid
                break
    return clusters


def relative_change(before: ModalResult, after: ModalResult,
                    tracked: list[ModeCluster]) -> InvarianceReport:
    """Relative change RC = |lambda_a - lambda_b| / |lambda_b| * 100 percent.

    Each member of each tracked cluster (identified in the 'before' system)
    is matched greedily by distance to an unused 'after' eigenvalue; repeated
    clusters therefore report one RC per member. A genuine tie between two
    distinct candidates raises PairingAmbiguous with both options.
    """
    if before.n != after.n:
        raise InvalidParameter("before/after systems must have equal dimension")
    used = np.zeros(after.n, dtype=bool)
    pending: list[tuple[int, int]] = [(ci, mi) for ci, cluster in enumerate(tracked)
                                      for mi in cluster.member_indices]
    remaining_in = {ci: len(c.member_indices) for ci, c in enumerate(tracked)}
    entries = []
    # globally greedy: the closest unmatched (tracked mode, after mode) pair
    # is claimed first, so unmoved modes cannot be stolen by moved ones
    while pending:
        best = None
        for ci, mi in pending:
            d = np.abs(after.eigenvalues - before.eigenvalues[mi])
            d[used] = np.inf
            j = int(np.argmin(d))
            if best is None or d[j] < best[3]:
                best = (ci, mi, j, d[j])
        ci, mi, j, dist = best
        lam_b = before.eigenvalues[mi]
        scale = max(1.0, abs(lam_b))
        d_all = np.abs(after.eigenvalues - lam_b)
        d_all[used] = np.inf
        tied = np.flatnonzero(d_all - dist <= 1e-12 * scale)
        distinct: list[complex] = []
        for t in tied:
            if all(abs(after.eigenvalues[t] - v) > 1e-9 * scale for v in distinct):
                distinct.append(after.eigenvalues[t])
        # a tie is harmless when the cluster's remaining members will
        # absorb every tied candidate anyway (repeated-mode case)
        if len(distinct) > remaining_in[ci]:
            raise PairingAmbiguous(
                f"mode {lam_b} pairs equally well with "
                f"{', '.join(str(v) for v in distinct)}")
        used[j] = True
        pending.remove((ci, mi))
        remaining_in[ci] -= 1
        lam_a = after.eigenvalues[j]
        rc = abs(lam_a - lam_b) / abs(lam_b) * 100.0 if lam_b != 0 else np.inf
        entries.append(RCEntry(lambda_before=lam_b, lambda_after=lam_a,
                               rc_percent=float(rc), cluster_index=ci))
    entries.sort(key=lambda e: e.cluster_index)
    return InvarianceReport(entries=tuple(entries))
