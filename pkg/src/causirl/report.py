"""Summaries of a results directory.

Runs are grouped by (dataset, penalty, distance, lambda). Each group gets the
mean and the unbiased (n - 1) standard deviation of the target and adversary
accuracies over its seeds; a group with a single run reports std 0 and is
marked ``n=1``. Output depends only on the per-run metrics files, so
rebuilding a report from the same directory gives the same bytes.
"""
import csv
import io
import math

from .errors import InputError
from .harness import collect_runs

CONVENTION = "mean ± unbiased standard deviation (n - 1) over seeds; std is 0 for single-run groups (n=1)"

CURVE_COLUMNS = [
    "dataset", "penalty", "distance", "lambda", "n",
    "target_mean", "target_std", "adversary_mean", "adversary_std", "note",
]


def mean_std(values):
    """Mean and unbiased standard deviation; std is 0 for a single value."""
    values = [float(v) for v in values]
    if not values:
        raise InputError("no values to summarize")
    n = len(values)
    mean = math.fsum(values) / n
    if n == 1:
        return mean, 0.0
    return mean, math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))


def group_runs(runs):
    groups = {}
    for m in runs:
        key = (m["dataset"], m["penalty"], m["distance"], m["lambda"])
        groups.setdefault(key, []).append(m)
    return dict(sorted(groups.items(), key=lambda kv: (*kv[0][:3], float(kv[0][3]))))


def summarize(results_dir):
    """Rows of the lambda-vs-accuracy table, one per group of completed runs."""
    runs = collect_runs(results_dir)
    done = [m for m in runs if m.get("status") == "ok"]
    if not done:
        raise InputError(f"no completed runs in {results_dir}")
    rows = []
    for (dataset, pen, dist, lam), members in group_runs(done).items():
        tm, ts = mean_std(m["target_acc"] for m in members)
        am, as_ = mean_std(m["adversary_acc"] for m in members)
        rows.append({
            "dataset": dataset, "penalty": pen, "distance": dist, "lambda": lam, "n": len(members),
            "target_mean": tm, "target_std": ts, "adversary_mean": am, "adversary_std": as_,
            "note": "n=1" if len(members) == 1 else "",
        })
    return rows, len(runs) - len(done)


def _csv(rows):
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for r in rows:
        w.writerow([r["dataset"], r["penalty"], r["distance"], r["lambda"], r["n"],
                    f"{r['target_mean']:.6f}", f"{r['target_std']:.6f}",
                    f"{r['adversary_mean']:.6f}", f"{r['adversary_std']:.6f}", r["note"]])
    return out.getvalue()


def _pct(mean, std, note):
    text = f"{100 * mean:.1f} ± {100 * std:.1f}"
    return f"{text} ({note})" if note else text


def _markdown(rows, failed):
    lines = ["# Results", "", f"Accuracies in percent: {CONVENTION}.", ""]
    if failed:
        lines += [f"Failed runs excluded: {failed}.", ""]
    current = None
    for r in rows:
        key = (r["dataset"], r["penalty"], r["distance"])
        if key != current:
            if current is not None:
                lines.append("")
            current = key
            lines += [
                f"## {r['dataset']} / {r['penalty']} / {r['distance']}",
                "",
                "| lambda | runs | target accuracy | adversary accuracy |",
                "|---:|---:|---:|---:|",
            ]
        lines.append(
            f"| {r['lambda']} | {r['n']} | {_pct(r['target_mean'], r['target_std'], r['note'])} "
            f"| {_pct(r['adversary_mean'], r['adversary_std'], r['note'])} |"
        )
    return "\n".join(lines) + "\n"


def emit_report(results_dir, fmt="markdown"):
    """Render the grouped summary as ``csv`` (curve table) or ``markdown``."""
    if fmt not in ("csv", "markdown"):
        raise InputError(f"unknown report format {fmt!r}")
    rows, failed = summarize(results_dir)
    if fmt == "csv":
        return _csv(rows)
    return _markdown(rows, failed)
