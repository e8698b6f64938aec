"""SVG figures of summary metrics against sample size.

Each figure has one series per scheme (``gid="series:<scheme>"``) on a log
x-axis.  The numbers behind the figure are embedded as a CSV block in an XML
comment so the file can be audited without re-running anything.  Output is
byte-stable: fixed hash salt, no timestamp.
"""

from __future__ import annotations

import io
import math
import os

import matplotlib
from matplotlib.figure import Figure

from .summary import read_summary

METRICS = {
    "bias": "bias",
    "sd": "empirical SD",
    "rmse": "RMSE",
    "coverage": "95% CI coverage",
}
_RC = {"svg.hashsalt": "crossfit-lab", "svg.fonttype": "none", "font.size": 9}


def _series(rows, value):
    out = {}
    for r in rows:
        v = value(r)
        if v is None or not math.isfinite(v):
            continue
        out.setdefault(r["scheme"], []).append((r["n"], v))
    return {k: sorted(v) for k, v in out.items()}


def _data_comment(series, metric):
    lines = [f"data-table metric={metric}", "scheme,n,value"]
    for scheme, pts in series.items():
        lines.extend(f"{scheme},{n},{v!r}" for n, v in pts)
    return "<!-- " + "\n".join(lines).replace("--", "- -") + "\n-->\n"


def render_svg(series, metric, ylabel, title, path, ylim=None, reference=None):
    """Draw ``{scheme: [(n, value), ...]}`` and write a deterministic SVG."""
    if not series:
        raise ValueError("nothing to plot: the summary has no finite values")
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(5.0, 3.4))
        ax = fig.add_subplot()
        for scheme, pts in series.items():
            xs = [p[0] for p in pts]
            ys = [p[1] for p in pts]
            style = "-o" if len(pts) > 1 else "o"
            ax.plot(xs, ys, style, ms=4, lw=1.4, label=scheme, gid=f"series:{scheme}")
        ax.set_xscale("log")
        if reference is not None:
            ax.axhline(reference, color="0.5", ls="--", lw=0.8, gid="reference")
        if ylim is not None:
            ax.set_ylim(*ylim)
        ax.set_xlabel("n")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    text = buf.getvalue()
    head, sep, rest = text.partition("?>\n")
    if not sep:
        head, rest = "", text
    else:
        head += sep
    with open(path, "w") as fh:
        fh.write(head + _data_comment(series, metric) + rest)
    return path


def plot_rows(rows, out_dir, prefix=""):
    if not rows:
        raise ValueError("empty summary")
    os.makedirs(out_dir, exist_ok=True)
    name = rows[0]["experiment"]
    paths = []
    for metric, label in METRICS.items():
        series = _series(rows, lambda r, m=metric: r[m])
        kw = {}
        if metric == "coverage":
            kw = {"ylim": (0.0, 1.0), "reference": 0.95}
        elif metric == "bias":
            kw = {"reference": 0.0}
        path = os.path.join(out_dir, f"{prefix}{metric}.svg")
        paths.append(render_svg(series, metric, label, f"{name}: {label}", path, **kw))
    return paths


def plot(summary_path, out_dir=None):
    """One SVG per metric (bias, sd, rmse, coverage) next to the summary file."""
    rows = read_summary(summary_path)
    out_dir = out_dir or os.path.dirname(os.path.abspath(summary_path))
    return plot_rows(rows, out_dir)


def plot_scaled_bias(rows, path):
    """sqrt(n) |bias| against n, one series per scheme."""
    series = _series(rows, lambda r: math.sqrt(r["n"]) * abs(r["bias"]))
    return render_svg(series, "sqrt_n_abs_bias", "sqrt(n) |bias|",
                      f"{rows[0]['experiment']}: scaled bias", path)
