"""Machine-readable analysis outputs: CSV tables, clusters JSON, figures.

Numeric CSV/JSON output uses 15 significant digits with `.` decimals and is
byte-identical across runs of the same config. Figures are rendered with
matplotlib into fixed 800x600 SVG viewports; the pole map color code is
orange for inner-group clusters and blue for group-grid clusters.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "symmod"

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .modal import GROUP_GRID, INNER_GROUP  # noqa: E402
from .pipeline import AnalysisReport, InvarianceRun, SimulationRun, SweepPoint  # noqa: E402

CLASS_COLORS = {INNER_GROUP: "tab:orange", GROUP_GRID: "tab:blue"}
_UNCLASSIFIED_COLOR = "0.45"

_SVG_META = {"Date": None}
# 800x600 SVG viewport (the svg backend writes size in points at 72/inch)
_FIGSIZE = (800 / 72, 600 / 72)


def _fmt(value) -> str:
    return f"{value:.15g}"


def _write_csv(path, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(cell if isinstance(cell, str) else _fmt(cell)
                              for cell in row) + "\n")


def cluster_of_mode(report: AnalysisReport) -> dict[int, int]:
    """Mode index -> cluster index; every eigenvalue sits in exactly one cluster."""
    out = {}
    for ci, cluster in enumerate(report.clusters):
        for mi in cluster.member_indices:
            out[mi] = ci
    return out


def write_eigenvalues_csv(report: AnalysisReport, path) -> None:
    mode_cluster = cluster_of_mode(report)
    rows = []
    for i, lam in enumerate(report.modal.eigenvalues):
        ci = mode_cluster[i]
        cluster = report.clusters[ci]
        zeta = -lam.real / abs(lam) if lam != 0 else 0.0
        rows.append([i, lam.real, lam.imag, lam.imag / (2 * np.pi), zeta,
                     ci, cluster.classification,
                     cluster.group_id if cluster.group_id else ""])
    _write_csv(path, ["mode", "re", "im", "freq_hz", "damping_ratio",
                      "cluster", "classification", "group"], rows)


def write_participation_csv(report: AnalysisReport, path) -> None:
    """|pf| matrix, states as rows, modes as columns (magnitudes reported)."""
    n = report.modal.n
    header = ["state"] + [f"mode_{i}" for i in range(n)]
    rows = []
    for k, lbl in enumerate(report.modal.state_labels):
        rows.append([lbl] + [abs(report.modal.PF[k, i]) for i in range(n)])
    _write_csv(path, header, rows)


def write_gpf_csv(report: AnalysisReport, path) -> None:
    rows = []
    for ci, cluster in enumerate(report.clusters):
        if cluster.gpf is None:
            continue
        for k, lbl in enumerate(report.modal.state_labels):
            g = cluster.gpf[k]
            rows.append([ci, lbl, abs(g), g.real, g.imag])
    _write_csv(path, ["cluster", "state", "gpf_magnitude", "gpf_re", "gpf_im"], rows)


def clusters_to_dict(report: AnalysisReport) -> dict:
    clusters = []
    for ci, cluster in enumerate(report.clusters):
        entry = {
            "id": ci,
            "members": [{"mode": int(mi),
                         "re": float(report.modal.eigenvalues[mi].real),
                         "im": float(report.modal.eigenvalues[mi].imag)}
                        for mi in cluster.member_indices],
            "centroid": {"re": cluster.centroid.real, "im": cluster.centroid.imag},
            "n_g": cluster.n_g,
            "geometric_multiplicity": cluster.geometric_multiplicity,
            "classification": cluster.classification,
            "group": cluster.group_id,
        }
        if cluster.gpf is not None:
            entry["gpf"] = {lbl: {"re": float(g.real), "im": float(g.imag)}
                            for lbl, g in zip(report.modal.state_labels, cluster.gpf)}
        clusters.append(entry)
    return {
        "system_class": report.system_class,
        "cluster_tol": report.cluster_tol_used,
        "tau_ext": report.tau_ext_used,
        "tol_quasi": report.tol_quasi_used,
        "gpf_reported_as": "magnitude (complex values stored as re/im)",
        "groups": [{"id": g.group_id, "members": list(g.member_ids),
                    "symmetry_class": g.symmetry_class,
                    "deviation": g.deviation, "M": g.M}
                   for g in report.partition.groups],
        "warnings": report.warnings,
        "clusters": clusters,
    }


def write_clusters_json(report: AnalysisReport, path) -> None:
    Path(path).write_text(json.dumps(clusters_to_dict(report), indent=2) + "\n")


def load_clusters_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_polemap_svg(report: AnalysisReport, path) -> None:
    """Pole map, real axis horizontal, conjugate pairs both drawn."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    seen = set()
    for cluster in report.clusters:
        color = CLASS_COLORS.get(cluster.classification, _UNCLASSIFIED_COLOR)
        label = cluster.classification if cluster.classification not in seen else None
        seen.add(cluster.classification)
        lams = cluster.eigenvalues
        ax.scatter(lams.real, lams.imag / (2 * np.pi), s=36, marker="x",
                   color=color, label=label, linewidths=1.5)
    ax.axvline(0.0, color="0.7", lw=0.8, zorder=0)
    ax.axhline(0.0, color="0.7", lw=0.8, zorder=0)
    ax.set_xlabel("real part (1/s)")
    ax.set_ylabel("imaginary part (Hz)")
    ax.set_title(f"pole map ({report.system_class})")
    ax.legend(loc="best", fontsize=9)
    ax.grid(alpha=0.3)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def write_gpf_chart_svg(report: AnalysisReport, path, top_n: int = 10,
                        max_clusters: int = 6) -> None:
    """Bar chart of the dominant |gpf| contributions per classified cluster."""
    clusters = [c for c in report.clusters
                if c.gpf is not None and c.classification != "unclassified"]
    clusters = sorted(clusters, key=lambda c: -c.centroid.real)[:max_clusters]
    if not clusters:
        clusters = [c for c in report.clusters if c.gpf is not None][:max_clusters]
    n = max(len(clusters), 1)
    fig, axes = plt.subplots(n, 1, figsize=_FIGSIZE, squeeze=False)
    for ax, cluster in zip(axes[:, 0], clusters):
        mags = np.abs(cluster.gpf)
        order = np.argsort(mags)[::-1][:top_n]
        labels = [report.modal.state_labels[k] for k in order]
        color = CLASS_COLORS.get(cluster.classification, _UNCLASSIFIED_COLOR)
        ax.bar(range(len(order)), mags[order], color=color)
        ax.set_xticks(range(len(order)))
        ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
        ax.set_ylabel("|gpf|", fontsize=8)
        ax.set_title(f"cluster at {cluster.centroid:.3g} "
                     f"({cluster.classification}, n_g={cluster.n_g})", fontsize=9)
    if not clusters:
        axes[0, 0].set_axis_off()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def write_analysis_outputs(report: AnalysisReport, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, writer in (("eigenvalues.csv", write_eigenvalues_csv),
                         ("participation.csv", write_participation_csv),
                         ("gpf.csv", write_gpf_csv),
                         ("clusters.json", write_clusters_json),
                         ("polemap.svg", write_polemap_svg),
                         ("gpf_chart.svg", write_gpf_chart_svg)):
        path = out / name
        writer(report, path)
        written.append(path)
    return written


def write_rc_csv(run: InvarianceRun, path) -> None:
    rows = []
    for r in run.rows:
        rows.append([r.cluster_index, r.classification,
                     r.group_id if r.group_id else "",
                     r.lambda_before.real, r.lambda_before.imag,
                     r.lambda_after.real, r.lambda_after.imag,
                     r.rc_percent, "yes" if r.invariant else "no"])
    _write_csv(path, ["cluster", "classification", "group",
                      "re_before", "im_before", "re_after", "im_after",
                      "rc_percent", f"invariant_below_{_fmt(run.rc_threshold)}pct"],
               rows)


def write_rc_chart_svg(run: InvarianceRun, path) -> None:
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    xs = range(len(run.rows))
    colors = [CLASS_COLORS.get(r.classification, _UNCLASSIFIED_COLOR) for r in run.rows]
    ax.bar(xs, [r.rc_percent for r in run.rows], color=colors)
    ax.axhline(run.rc_threshold, color="k", ls="--", lw=0.8,
               label=f"threshold {run.rc_threshold:g}%")
    ax.set_xticks(list(xs))
    ax.set_xticklabels([f"c{r.cluster_index}" for r in run.rows], fontsize=7)
    ax.set_ylabel("relative change (%)")
    ax.set_title("mode relative changes")
    ax.legend(fontsize=9)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def write_crosscheck_csv(run: SimulationRun, path) -> None:
    rows = [[r.probe, r.peak_hz, r.peak_amplitude, r.predicted_hz, r.delta_hz,
             "yes" if r.within_one_bin else "no"] for r in run.crosscheck]
    _write_csv(path, ["probe", "peak_hz", "peak_amplitude", "predicted_hz",
                      "delta_hz", "within_one_bin"], rows)


def write_svp_outputs(points: list[SweepPoint], out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    summary = out / "svp_summary.csv"
    _write_csv(summary, ["impedance_pu", "max_pole_distance"],
               [[p.impedance_pu, p.max_pole_distance] for p in points])
    written.append(summary)
    for k, p in enumerate(points):
        path = out / f"svp_poles_{k}.csv"
        rows = []
        for ls, lp in zip(p.poles_string, p.poles_parallel):
            rows.append([ls.real, ls.imag, lp.real, lp.imag, abs(ls - lp)])
        _write_csv(path, ["string_re", "string_im", "parallel_re", "parallel_im",
                          "pair_distance"], rows)
        written.append(path)

    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.loglog([max(p.impedance_pu, 1e-12) for p in points],
              [max(p.max_pole_distance, 1e-16) for p in points], "o-")
    ax.set_xlabel("collector impedance (pu)")
    ax.set_ylabel("max pole pairing distance (1/s)")
    ax.set_title("string vs. parallel collector topology")
    ax.grid(alpha=0.3, which="both")
    fig_path = out / "svp_convergence.svg"
    fig.savefig(fig_path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    written.append(fig_path)
    return written
