"""Delimited outputs and companion figures.

Every report path writes CSV/JSON with fixed 17-significant-digit number
formatting (so identical inputs give byte-identical files) and, unless asked
not to, renders a matplotlib figure next to each table.
"""

from __future__ import annotations

import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .backfit import SbfFit
from .bandwidth import CbsResult
from .scores import ScoreModel
from .simulate import MetricReport


def fmt(x) -> str:
    """Fixed 17-significant-digit decimal rendering of one number."""
    return f"{float(x):.17g}"


def json_ready(obj):
    if isinstance(obj, dict):
        return {k: json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [json_ready(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(fmt(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(json_ready(obj), fh, sort_keys=True, indent=1)
        fh.write("\n")


def write_csv(path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")


def _save(fig, path) -> None:
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


# ---------------------------------------------------------------------------
# Fit exports


def fit_to_json(fit: SbfFit) -> dict:
    return {
        "bandwidths": list(fit.bandwidths),
        "p0": fit.densities.p0,
        "iterations": fit.iterations,
        "convergence": {
            "converged": fit.converged,
            "deltas": fit.deltas,
            "residual": fit.residual,
            "centering": fit.centering,
        },
        "f0": fit.f0.to_json(),
        "space": fit.space.to_json(),
        "domains": [d.to_json() for d in fit.domains],
        "grids": [g.to_json() for g in fit.grids],
        "components": [c.tolist() for c in fit.component_coords],
        "weights": None if fit.weights is None else [w.tolist() for w in fit.weights],
    }


def write_fit(fit: SbfFit, outdir, figures: bool = True) -> list[str]:
    """Write fit.json plus one component CSV (and figure) per predictor."""
    os.makedirs(outdir, exist_ok=True)
    written = []
    path = os.path.join(outdir, "fit.json")
    write_json(fit_to_json(fit), path)
    written.append(path)
    omega = fit.space.coord_weights
    for j, grid in enumerate(fit.grids):
        coords = fit.component_coords[j]
        header = [f"x{l + 1}" for l in range(grid.ndim)] + [
            f"c{m}" for m in range(coords.shape[1])
        ]
        rows = [list(grid.nodes[i]) + list(coords[i]) for i in range(grid.size)]
        path = os.path.join(outdir, f"component_{j + 1}.csv")
        write_csv(path, header, rows)
        written.append(path)
        if figures:
            written.append(_component_figure(fit, j, omega, outdir))
    return written


def _component_figure(fit: SbfFit, j: int, omega, outdir) -> str:
    grid = fit.grids[j]
    coords = fit.component_coords[j]
    norms = np.sqrt((coords**2) @ omega)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    if grid.ndim == 1:
        x = grid.nodes[:, 0]
        if coords.shape[1] == 1:
            ax.plot(x, coords[:, 0], lw=1.5)
            ax.set_ylabel(f"component {j + 1}")
        else:
            ax.plot(x, norms, lw=1.5)
            ax.set_ylabel(f"|component {j + 1}|")
        ax.set_xlabel(f"x{j + 1}")
    else:
        vals = (coords[:, 0] if coords.shape[1] == 1 else norms).reshape(grid.shape)
        extent = (grid.axes[0][0], grid.axes[0][-1], grid.axes[1][0], grid.axes[1][-1])
        im = ax.imshow(vals.T, origin="lower", extent=extent, aspect="auto")
        fig.colorbar(im, ax=ax)
        ax.set_xlabel("axis 1")
        ax.set_ylabel("axis 2")
        ax.set_title(f"component {j + 1}")
    path = os.path.join(outdir, f"component_{j + 1}.png")
    _save(fig, path)
    return path


# ---------------------------------------------------------------------------
# Score exports


def write_scores(model: ScoreModel, outdir, figures: bool = True) -> list[str]:
    """scores.csv (one row per observation, one column per score) + spectrum."""
    os.makedirs(outdir, exist_ok=True)
    written = []
    path = os.path.join(outdir, "scores.csv")
    header = [f"score_{r + 1}" for r in range(model.rank)]
    write_csv(path, header, model.scores)
    written.append(path)
    path = os.path.join(outdir, "spectrum.csv")
    write_csv(path, ["index", "eigenvalue"],
              [[str(r + 1), v] for r, v in enumerate(model.eigenvalues)])
    written.append(path)
    if figures:
        fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
        axes[0].plot(np.arange(1, model.rank + 1), model.eigenvalues, "o-")
        axes[0].set_xlabel("index")
        axes[0].set_ylabel("eigenvalue")
        if model.rank >= 2:
            axes[1].scatter(model.scores[:, 0], model.scores[:, 1], s=8)
            axes[1].set_xlabel("score 1")
            axes[1].set_ylabel("score 2")
        else:
            axes[1].hist(model.scores[:, 0], bins=20)
            axes[1].set_xlabel("score 1")
        path = os.path.join(outdir, "scores.png")
        _save(fig, path)
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# Bandwidth exports


def write_bandwidth(result: CbsResult, outdir, figures: bool = True) -> list[str]:
    os.makedirs(outdir, exist_ok=True)
    written = []
    path = os.path.join(outdir, "bandwidths.json")
    write_json(
        {
            "bandwidths": list(result.bandwidths),
            "cv_score": result.cv_score,
            "sweeps": result.sweeps,
            "converged": result.converged,
            "skipped": result.skipped,
        },
        path,
    )
    written.append(path)
    path = os.path.join(outdir, "cv_trace.csv")
    rows = [
        [str(t["sweep"]), str(t["j"] + 1)] + [fmt(h) for h in t["bandwidths"]] + [t["cv"]]
        for t in result.trace
    ]
    d = len(result.bandwidths)
    write_csv(path, ["sweep", "j"] + [f"h{k + 1}" for k in range(d)] + ["cv"], rows)
    written.append(path)
    if figures:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.plot([t["cv"] for t in result.trace], "o-")
        ax.set_xlabel("coordinate step")
        ax.set_ylabel("CV score")
        path = os.path.join(outdir, "cv_trace.png")
        _save(fig, path)
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# Simulation exports


def write_simulation(reports: list[MetricReport], outdir, seed=None,
                     figures: bool = True) -> list[str]:
    """Benchmark-table CSV (one row per arm and criterion) plus a JSON sidecar."""
    os.makedirs(outdir, exist_ok=True)
    written = []
    d = max(len(r.imse) for r in reports)
    header = ["arm", "criterion"] + [f"j{k + 1}" for k in range(d)]
    rows = []
    for r in reports:
        for name, vals in (("IMSE", r.imse), ("ISB", r.isb), ("IV", r.iv)):
            rows.append([r.arm, name] + [v for v in vals])
    path = os.path.join(outdir, "report.csv")
    write_csv(path, header, rows)
    written.append(path)
    path = os.path.join(outdir, "report.json")
    write_json(
        {
            "seed": seed,
            "arms": [
                {
                    "study": r.study,
                    "arm": r.arm,
                    "imse": list(r.imse),
                    "isb": list(r.isb),
                    "iv": list(r.iv),
                    "reps_completed": r.reps_completed,
                    "reps_failed": r.reps_failed,
                    "runtime_seconds": r.runtime,
                    "config": r.config,
                }
                for r in reports
            ],
        },
        path,
    )
    written.append(path)
    if figures:
        fig, ax = plt.subplots(figsize=(1.8 + 1.6 * len(reports), 3.4))
        width = 0.8 / d
        for k in range(d):
            pos = np.arange(len(reports)) + k * width
            vals = [r.imse[k] if k < len(r.imse) else np.nan for r in reports]
            ax.bar(pos, vals, width=width, label=f"j={k + 1}")
        ax.set_xticks(np.arange(len(reports)) + 0.4 - width / 2)
        ax.set_xticklabels([r.arm for r in reports], rotation=20, ha="right", fontsize=8)
        ax.set_ylabel("IMSE")
        ax.legend(fontsize=8)
        path = os.path.join(outdir, "report.png")
        _save(fig, path)
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# Element / reconstruction exports


def write_elements(elements, path, predictors=None, figures: bool = True) -> list[str]:
    """JSON-lines element dump; one density figure when the space has 1-d nodes."""
    written = [path]
    with open(path, "w") as fh:
        for i, el in enumerate(elements):
            obj = {"response": json_ready(el.to_json())}
            if predictors is not None:
                obj["predictors"] = json_ready(list(predictors[i]))
            fh.write(json.dumps(obj, sort_keys=True) + "\n")
    if figures:
        figpath = elements_figure(elements, os.path.splitext(path)[0] + ".png")
        if figpath:
            written.append(figpath)
    return written


def elements_figure(elements, figpath) -> str | None:
    """Overlay plot of grid densities; skipped when nodes are not 1-dimensional."""
    if not elements:
        return None
    nodes = getattr(elements[0].space, "nodes", None)
    if nodes is None or nodes.ndim != 2 or nodes.shape[1] != 1:
        return None
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for el in elements[: min(8, len(elements))]:
        ax.plot(nodes[:, 0], el.coeffs, lw=1.0, alpha=0.8)
    ax.set_xlabel("grid")
    ax.set_ylabel("density")
    _save(fig, figpath)
    return figpath
