"""Figure rendering for the experiment report path.

One PNG per experiment run, written next to the delimited output: the
sweep experiments get a log-log defect-versus-recovery summary with
per-epsilon medians, the tower experiment a per-level decay plot.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _collect(rows):
    eps, dist, ok = [], [], []
    for r in rows:
        eps.append(float(r[2]))
        dist.append(float(r[4]))
        ok.append(r[7] == "ok")
    return np.array(eps), np.array(dist), np.array(ok)


def render_results_figure(rows, cfg, path) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    if rows:
        eps, dist, ok = _collect(rows)
        eps_ok, dist_ok = eps[ok], dist[ok]
        if eps_ok.size:
            jitter = 1.0 + 0.08 * (np.arange(eps_ok.size) % 7 - 3) / 3.0
            ax.plot(eps_ok * jitter, np.maximum(dist_ok, 1e-17), ".",
                    color="#7799bb", alpha=0.5, markersize=4, label="trials")
            levels = sorted(set(eps_ok))
            medians = [float(np.median(dist_ok[eps_ok == e])) for e in levels]
            ax.plot(levels, np.maximum(medians, 1e-17), "o-", color="#20406a",
                    label="median")
        failed = int(np.sum(~ok))
        if failed:
            ax.set_title(f"{cfg.experiment} ({failed} failed trials)")
        else:
            ax.set_title(cfg.experiment)
        ax.set_xscale("log")
        ax.set_yscale("log")
    else:
        ax.set_title(f"{cfg.experiment} (no rows)")
    ax.set_xlabel("input conjugation size")
    ax.set_ylabel("recovery distance")
    ax.grid(True, which="both", alpha=0.3)
    if rows:
        ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
