"""Figures of per-step metrics, drawn next to a summary table."""
from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from .metrics import METRIC_COLUMNS, MetricSeries

TITLES = {
    "ut_proxy": "test proxy utility",
    "ut_gt": "test ground-truth utility",
    "dpu": "test DPU",
    "cfu": "test CFU",
    "eff_ut": "effective proxy utility",
    "eff_dpu": "effective DPU",
}


def plot_series(series: Sequence[MetricSeries], out_dir) -> List[Path]:
    """One PNG per metric: across-seed mean per method with a one-std band."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    by_method: Dict[str, List[MetricSeries]] = {}
    for s in series:
        by_method.setdefault(s.method, []).append(s)
    written = []
    for col in METRIC_COLUMNS:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        drawn = False
        for method, group in by_method.items():
            n = min(len(s) for s in group)
            vals = np.array([s.column(col)[:n] for s in group])
            if np.all(np.isnan(vals)):
                continue
            t = np.asarray(group[0].t[:n])
            mu, sd = vals.mean(axis=0), vals.std(axis=0)
            ax.plot(t, mu, label=method, lw=1.2)
            ax.fill_between(t, mu - sd, mu + sd, alpha=0.2)
            drawn = True
        if drawn:
            ax.set_xlabel("time step")
            ax.set_ylabel(TITLES[col])
            ax.legend(fontsize=7)
            fig.tight_layout()
            path = out_dir / f"{col}.png"
            fig.savefig(path, dpi=120)
            written.append(path)
        plt.close(fig)
    return written
