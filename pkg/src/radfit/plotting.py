"""Deterministic SVG figures from report and trace CSV files."""
from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from radfit.core import DataError  # noqa: E402

PLOT_KINDS = ("heatmap", "boxplot", "curve_overlay")

_SCHEMAS = {
    "heatmap": {"manufacturer", "device_number", "true_status", "correct"},
    "boxplot": {"model", "fold", "accuracy"},
    "curve_overlay": {"device_id", "series", "fluence", "current"},
}


def _read_csv(text: str, kind: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    header = set(reader.fieldnames or ())
    if kind == "curve_overlay" and {"fluence_ncm2", "current_a"} <= header:
        return [{"device_id": "trace", "series": "measured", "fluence": r["fluence_ncm2"], "current": r["current_a"]}
                for r in reader]
    missing = _SCHEMAS[kind] - header
    if missing:
        raise DataError(f"{kind} input lacks columns {sorted(missing)}")
    return list(reader)


def _heatmap(rows, ax):
    mfrs = sorted({r["manufacturer"] for r in rows})
    numbers = sorted({int(r["device_number"]) for r in rows})
    grid = np.full((len(numbers), len(mfrs)), np.nan)
    for r in rows:
        i, j = numbers.index(int(r["device_number"])), mfrs.index(r["manufacturer"])
        if r["correct"] != "":
            grid[i, j] = float(r["correct"])
        ax.text(j, i, r["true_status"][:1], ha="center", va="center", fontsize=6)
    cmap = matplotlib.colors.ListedColormap(["#d9534f", "#5cb85c"])
    cmap.set_bad("#cccccc")
    ax.imshow(np.ma.masked_invalid(grid), cmap=cmap, vmin=0, vmax=1, aspect="auto")
    ax.set_xticks(range(len(mfrs)), mfrs)
    ax.set_yticks(range(len(numbers)), numbers, fontsize=6)
    ax.set_xlabel("manufacturer")
    ax.set_ylabel("device number")
    ax.set_title("prediction correct (green) / wrong (red); letter = actual status")


def _boxplot(rows, ax):
    models = list(dict.fromkeys(r["model"] for r in rows))
    data = [[float(r["accuracy"]) for r in rows if r["model"] == m] for m in models]
    ax.boxplot(data)
    ax.set_xticks(range(1, len(models) + 1), models)
    ax.set_ylabel("fold accuracy")
    ax.set_ylim(-0.05, 1.05)


def _overlay(rows, ax, device: Optional[str]):
    if device is not None:
        rows = [r for r in rows if r["device_id"] == device]
        if not rows:
            raise DataError(f"no rows for device {device}")
    keys = list(dict.fromkeys((r["device_id"], r["series"]) for r in rows))
    for dev, series in keys:
        pts = [(float(r["fluence"]), float(r["current"])) for r in rows if r["device_id"] == dev and r["series"] == series]
        f, c = np.array(pts).T
        style = "o-" if series == "measured" else "s--"
        ax.plot(f, c, style, markersize=3, label=f"{dev} {series}")
    ax.set_xlabel("fluence (n/cm$^2$)")
    ax.set_ylabel("current (A)")
    ax.legend(fontsize=7)


def emit_plot(source, kind: str, path, device: Optional[str] = None) -> None:
    """Render ``source`` (a CSV path or CSV text) as an SVG at ``path``.

    ``heatmap`` takes a per-device outcome table, ``boxplot`` a per-fold
    accuracy table (one box per model), ``curve_overlay`` a long-format
    curve table or a raw trace CSV.
    """
    if kind not in PLOT_KINDS:
        raise DataError(f"plot kind must be one of {PLOT_KINDS}")
    text = Path(source).read_text() if isinstance(source, Path) or "\n" not in str(source) else str(source)
    rows = _read_csv(text, kind)
    if not rows:
        raise DataError("nothing to plot")
    with plt.rc_context({"svg.hashsalt": "radfit", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7, 6) if kind == "heatmap" else (6, 4))
        try:
            if kind == "heatmap":
                _heatmap(rows, ax)
            elif kind == "boxplot":
                _boxplot(rows, ax)
            else:
                _overlay(rows, ax, device)
            fig.tight_layout()
            fig.savefig(path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
