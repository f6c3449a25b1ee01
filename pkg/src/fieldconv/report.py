"""Result files: versioned CSVs, JSON summaries, and figures.

Every CSV is comma-separated UTF-8 with LF line endings, a header row
first, and a `schema` column carrying the exact schema version string in
each data row. Writes are atomic (temp file, then rename), so reruns
overwrite rather than append. Figures render next to the delimited
output with the non-interactive matplotlib backend.
"""

from __future__ import annotations

import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "SCHEMAS", "write_csv", "read_csv", "write_json", "metrics_rows",
    "frequency_rows", "series_rows", "emit_run_outputs", "emit_report",
    "ACCEPTANCE_THRESHOLDS",
]

SCHEMAS = {
    "metrics": "fieldconv-metrics-v1",
    "frequency": "fieldconv-frequency-v1",
    "series": "fieldconv-series-v1",
}

ACCEPTANCE_THRESHOLDS = {
    "copy_memory": {"loss": 1e-4, "accuracy": 1.0},
    "adding": {"mse": 1e-3},
    "fit_field": {"mse": 1e-3},
    "alias_margin": 0.05,
    "complexity_ratio": 1.05,
}


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, header, rows):
    """Atomically write rows (header first, LF endings, UTF-8)."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    os.replace(tmp, path)
    return path


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


def write_json(path, payload):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def metrics_rows(metric_trace):
    schema = SCHEMAS["metrics"]
    header = ["schema", "step", "loss", "total_loss", "grad_norm"]
    rows = [
        (schema, m["step"], m["loss"], m.get("total_loss", m["loss"]),
         m.get("grad_norm", 0.0))
        for m in metric_trace
    ]
    return header, rows


def frequency_rows(budgets):
    """budgets: list of (block_index, FrequencyBudget)."""
    schema = SCHEMAS["frequency"]
    header = ["schema", "block", "layer", "f_plus", "f_nyq", "violation"]
    rows = []
    for block, budget in budgets:
        for layer, f_plus, f_nyq, violation in budget.rows():
            rows.append((schema, block, layer, f_plus, f_nyq, violation))
    return header, rows


def series_rows(values):
    schema = SCHEMAS["series"]
    header = ["schema", "step", "value"]
    return header, [(schema, i, v) for i, v in enumerate(values)]


# ---------------------------------------------------------------------------
# figures


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_loss(loss_trace, path, title="training loss"):
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(loss_trace, lw=0.9)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title(title)
    return _save(fig, path)


def plot_frequency_budget(budgets, path):
    fig, ax = plt.subplots(figsize=(6, 3.2))
    labels, f_plus, f_ny = [], [], []
    for block, budget in budgets:
        for layer, fp, fn, _v in budget.rows():
            labels.append(f"b{block}/{layer}")
            f_plus.append(fp)
            f_ny.append(fn)
    xs = np.arange(len(labels))
    ax.bar(xs - 0.2, f_plus, width=0.4, label="f+")
    ax.bar(xs + 0.2, f_ny, width=0.4, label="budget")
    ax.set_xticks(xs, labels, rotation=45, fontsize=7)
    ax.set_ylabel("cycles / unit")
    ax.legend(fontsize=8)
    ax.set_title("frequency budget")
    return _save(fig, path)


def plot_fit(target, fitted, path):
    fig, ax = plt.subplots(figsize=(6, 3.2))
    x = np.linspace(-1, 1, len(target))
    ax.plot(x, target, label="target", lw=1.2)
    ax.plot(x, fitted, label="fit", lw=0.9)
    ax.legend(fontsize=8)
    ax.set_title("field fit")
    return _save(fig, path)


def plot_series(values, path, title, ylabel="value"):
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(values, lw=0.9)
    ax.set_xlabel("step")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    return _save(fig, path)


# ---------------------------------------------------------------------------
# run outputs and the consolidated summary

EXPECTED_FILES = ("metrics.csv", "summary.json")


def emit_run_outputs(out_dir, result, task_kind, budgets=None,
                     architecture=None, series=None, figures=True,
                     fit_pair=None):
    """Write the standard result-file set for one run."""
    os.makedirs(out_dir, exist_ok=True)
    header, rows = metrics_rows(result.metric_trace)
    write_csv(os.path.join(out_dir, "metrics.csv"), header, rows)
    if budgets:
        header, rows = frequency_rows(budgets)
        write_csv(os.path.join(out_dir, "frequency_budget.csv"), header, rows)
    if architecture is not None:
        write_json(os.path.join(out_dir, "architecture.json"), architecture)
    for name, values in (series or {}).items():
        header, rows = series_rows(values)
        write_csv(os.path.join(out_dir, f"series_{name}.csv"), header, rows)
    if figures:
        plot_loss(result.loss_trace, os.path.join(out_dir, "loss.png"))
        if budgets:
            plot_frequency_budget(
                budgets, os.path.join(out_dir, "frequency_budget.png")
            )
        if fit_pair is not None:
            plot_fit(fit_pair[0], fit_pair[1],
                     os.path.join(out_dir, "fit.png"))
        for name, values in (series or {}).items():
            plot_series(values, os.path.join(out_dir, f"series_{name}.png"),
                        title=name)
    payload = {
        "task": task_kind,
        "final_metrics": result.final_metrics,
        "wall_seconds": result.wall_seconds,
        "steps": result.steps,
        "success": _success_flags(task_kind, result),
    }
    write_json(os.path.join(out_dir, "summary.json"), payload)
    return payload


def _success_flags(task_kind, result):
    m = result.final_metrics
    flags = {}
    if task_kind == "copy_memory":
        flags["loss_below_1e-4"] = bool(m["loss"] <= ACCEPTANCE_THRESHOLDS["copy_memory"]["loss"])
        flags["accuracy_100"] = bool(m["accuracy"] >= 1.0)
        flags["solved"] = flags["loss_below_1e-4"] or flags["accuracy_100"]
    elif task_kind == "adding":
        flags["mse_below_1e-3"] = bool(m["mse"] < ACCEPTANCE_THRESHOLDS["adding"]["mse"])
        flags["solved"] = flags["mse_below_1e-3"]
    elif task_kind == "fit_field":
        flags["mse_below_1e-3"] = bool(m["mse"] < ACCEPTANCE_THRESHOLDS["fit_field"]["mse"])
        if "f_plus" in m:
            flags["alias_within_margin"] = bool(
                m["f_plus"] <= m["f_nyquist"] + ACCEPTANCE_THRESHOLDS["alias_margin"]
            )
    return flags


def emit_report(results_dir):
    """Consolidate one or more run directories into report.json.

    Accepts either a single run directory or a directory of runs; missing
    expected files are reported explicitly. Output is independent of
    enumeration order.
    """
    runs = {}
    missing = []
    candidates = []
    if os.path.isfile(os.path.join(results_dir, "summary.json")):
        candidates.append(results_dir)
    else:
        for name in sorted(os.listdir(results_dir)):
            path = os.path.join(results_dir, name)
            if os.path.isdir(path):
                candidates.append(path)
    if not candidates:
        raise FileNotFoundError(
            f"no run directories under {results_dir}; expected files "
            f"{list(EXPECTED_FILES)} in at least one subdirectory"
        )
    for path in sorted(candidates):
        name = os.path.basename(os.path.normpath(path))
        absent = [
            f for f in EXPECTED_FILES
            if not os.path.isfile(os.path.join(path, f))
        ]
        if absent:
            missing.append({"run": name, "missing": sorted(absent)})
            continue
        with open(os.path.join(path, "summary.json"), encoding="utf-8") as fh:
            runs[name] = json.load(fh)
    if not runs and missing:
        raise FileNotFoundError(
            "no complete runs found; missing files: "
            + json.dumps(missing, sort_keys=True)
        )
    payload = {
        "runs": runs,
        "incomplete": sorted(missing, key=lambda m: m["run"]),
        "all_succeeded": all(
            r.get("success", {}).get("solved", True) for r in runs.values()
        ),
    }
    out = os.path.join(results_dir, "report.json")
    write_json(out, payload)
    return payload
