"""SVG summaries: metric against a swept variable, mean line with min-max bars."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

logger = logging.getLogger(__name__)

METRICS = ("accuracy", "ami", "log_gamma_exact", "wall_time_seconds")
SWEEPS = ("beta", "r_l", "k")


def _series_key(row, swept: str):
    key = [row.algorithm]
    if not math.isnan(row.gamma):
        key.append(f"gamma={row.gamma:.3g}")
    for var in ("r_l", "k", "beta"):
        if var == swept:
            continue
        # tuned beta follows r_l, so it does not define its own series
        if var == "beta" and (math.isnan(row.beta) or not math.isnan(row.gamma)):
            continue
        key.append(f"{var}={getattr(row, var):.3g}")
    return ", ".join(key)


def _draw(series, swept: str, metric: str, dataset: str, path: Path) -> None:
    # fixed salt keeps element ids, and so the file bytes, reproducible
    with plt.rc_context({"svg.hashsalt": "meanfield-ssl"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label in sorted(series):
            pts = sorted(series[label].items())
            x = np.array([p[0] for p in pts], dtype=float)
            vals = [np.asarray(p[1], dtype=float) for p in pts]
            mean = np.array([v.mean() for v in vals])
            lo = mean - np.array([v.min() for v in vals])
            hi = np.array([v.max() for v in vals]) - mean
            ax.errorbar(x, mean, yerr=[lo, hi], capsize=2, marker="o", ms=3, label=label)
        if swept == "beta":
            ax.set_xscale("log")
        ax.set_xlabel(swept)
        ax.set_ylabel(metric)
        ax.set_title(dataset)
        ax.legend(fontsize=7)
        fig.tight_layout()
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def emit_plots(rows, out_dir) -> list[Path]:
    """One SVG per (dataset, metric, swept variable) with at least two x values.

    Combinations without variation are skipped with a log notice. Beta axes
    are logarithmic.
    """
    out_dir = Path(out_dir)
    rows = list(rows)
    written: list[Path] = []
    by_dataset = defaultdict(list)
    for r in rows:
        by_dataset[r.dataset].append(r)
    for dataset, drows in by_dataset.items():
        for swept in SWEEPS:
            usable = [r for r in drows if not math.isnan(float(getattr(r, swept)))]
            xs = {getattr(r, swept) for r in usable}
            if len(xs) < 2:
                logger.info("skipping %s plots against %s: fewer than two values", dataset, swept)
                continue
            for metric in METRICS:
                series = defaultdict(lambda: defaultdict(list))
                for r in usable:
                    v = getattr(r, metric)
                    if isinstance(v, float) and math.isnan(v):
                        continue
                    series[_series_key(r, swept)][getattr(r, swept)].append(v)
                series = {k: v for k, v in series.items() if len(v) >= 2}
                if not series:
                    logger.info("skipping %s %s vs %s: no series with two points", dataset, metric, swept)
                    continue
                path = out_dir / f"{dataset}__{metric}__vs_{swept}.svg"
                _draw(series, swept, metric, dataset, path)
                written.append(path)
    if not written:
        logger.warning("no plots written: no swept variable has two or more values")
    return written
