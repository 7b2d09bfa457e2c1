"""Plot-ready data files and SVG renderings of profile, scan and cascade artifacts.

Outputs are deterministic: two-column text with shortest round-trip floats,
and SVG written with a fixed hash salt and no date stamp.
"""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from .errors import InputError


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def two_column(header, xs, ys):
    lines = [f"# {header[0]} {header[1]}"]
    lines += [f"{float(x)!r} {float(y)!r}" for x, y in zip(xs, ys)]
    return "\n".join(lines) + "\n"


def _svg(draw):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "heisenkern", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        draw(ax)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return buf.getvalue()


def profile_plot(rows, overlay="none"):
    z = np.array([float(r["coord"]) for r in rows])
    p = np.array([float(r["density"]) for r in rows])

    def draw(ax):
        ax.plot(z, p, "o", ms=2.5, label="quadrature")
        if overlay == "sech2":
            ax.plot(z, 1.0 / np.cosh(math.pi * z) ** 2 / 8.0, "-", lw=1, label="sech²(πz)/8")
        ax.set_xlabel("coordinate")
        ax.set_ylabel("density")
        ax.legend()

    return two_column(("coord", "density"), z, p), _svg(draw)


def scan_plot(rows):
    exp_rows = [r for r in rows if r["field"].startswith("exp_x1:")]
    if not exp_rows:
        raise InputError("scan artifact has no exponential-family rows")
    t = np.array([float(r["t"]) for r in exp_rows])
    ratio = np.array([float(r["ratio"]) for r in exp_rows])
    se = np.array([float(r["ratio_se"]) for r in exp_rows])

    def draw(ax):
        ax.errorbar(t, ratio, yerr=3 * se, fmt="o", ms=3, capsize=2, label="ratio ± 3 SE")
        ts = np.linspace(0, t.max() * 1.05, 50)
        ax.plot(ts, 2 * ts, "-", lw=1, label="2t")
        ax.set_xlabel("t")
        ax.set_ylabel("entropy / energy")
        ax.legend()

    return two_column(("t", "ratio"), t, ratio), _svg(draw)


def cascade_plot(rows):
    n = np.array([int(r["n"]) for r in rows])
    gap = np.array([float(r["gap"]) for r in rows])

    def draw(ax):
        ax.semilogy(n[gap > 0], gap[gap > 0], "o-", ms=3)
        ax.set_xlabel("projection rank n")
        ax.set_ylabel("E sup gap")

    return two_column(("n", "gap"), n, gap), _svg(draw)


def emit_plots(src, kind, writer, overlay="none"):
    src = Path(src)
    rows = _read_csv(src)
    if kind == "profile":
        data, svg = profile_plot(rows, overlay)
    elif kind == "scan":
        data, svg = scan_plot(rows)
    elif kind == "cascade":
        data, svg = cascade_plot(rows)
    else:
        raise InputError(f"unknown plot kind {kind!r}")
    writer.write(f"{src.stem}.dat", data)
    writer.write(f"{src.stem}.svg", svg)
