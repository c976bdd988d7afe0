"""Evaluation metrics and report rendering.

The report path writes machine-readable outputs (JSON + CSV) with
matplotlib figures rendered to files alongside them; nothing here is on
the recognition path.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def compute_eer(genuine: np.ndarray, imposter: np.ndarray) -> float:
    """Equal error rate of the two score distributions (accept if >= t)."""
    genuine = np.sort(np.asarray(genuine, dtype=np.float64))
    imposter = np.sort(np.asarray(imposter, dtype=np.float64))
    thresholds = np.unique(np.concatenate([genuine, imposter]))
    best = 1.0
    for t in thresholds:
        frr = float((genuine < t).mean())
        far = float((imposter >= t).mean())
        best = min(best, max(frr, far))
    return best


def roc_points(
    genuine: np.ndarray, imposter: np.ndarray, n: int = 200
) -> tuple[np.ndarray, np.ndarray]:
    """(FAR, TAR) curve samples over the observed score range."""
    genuine = np.asarray(genuine, dtype=np.float64)
    imposter = np.asarray(imposter, dtype=np.float64)
    lo = min(genuine.min(), imposter.min())
    hi = max(genuine.max(), imposter.max())
    ts = np.linspace(lo, hi, n)
    far = np.array([(imposter >= t).mean() for t in ts])
    tar = np.array([(genuine >= t).mean() for t in ts])
    return far, tar


def cmc_points(ranks: list[int], max_rank: int = 20) -> np.ndarray:
    """Cumulative match characteristic: P(rank <= k) for k = 1..max_rank."""
    r = np.asarray(ranks, dtype=np.int64)
    return np.array([(r <= k).mean() for k in range(1, max_rank + 1)])


# ---------------------------------------------------------------------------
# Figures


def save_score_histogram(genuine, imposter, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    bins = 60
    ax.hist(imposter, bins=bins, alpha=0.6, density=True, label="imposter", color="#c44e52")
    ax.hist(genuine, bins=bins, alpha=0.6, density=True, label="genuine", color="#55a868")
    ax.set_xlabel("match score")
    ax.set_ylabel("density")
    ax.set_title("Genuine vs imposter score distributions")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def save_roc(genuine, imposter, path: str | Path) -> Path:
    far, tar = roc_points(np.asarray(genuine), np.asarray(imposter))
    fig, ax = plt.subplots(figsize=(6, 5))
    ax.plot(far, tar, "-", color="#4c72b0")
    ax.set_xscale("log")
    ax.set_xlim(max(far[far > 0].min() if (far > 0).any() else 1e-5, 1e-6), 1.0)
    ax.set_ylim(0.0, 1.02)
    ax.set_xlabel("false accept rate")
    ax.set_ylabel("true accept rate")
    ax.set_title("ROC")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def save_cmc(ranks: list[int], path: str | Path, max_rank: int = 20) -> Path:
    pts = cmc_points(ranks, max_rank)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.plot(np.arange(1, max_rank + 1), pts, "o-", color="#4c72b0")
    ax.set_xlabel("rank")
    ax.set_ylabel("identification rate")
    ax.set_ylim(min(pts.min() - 0.02, 0.9), 1.005)
    ax.set_title("CMC")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def save_latency_histogram(samples_ms, path: str | Path) -> Path:
    samples = np.asarray(samples_ms, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.hist(samples, bins=40, color="#4c72b0", alpha=0.8)
    for q, style in ((50, "--"), (90, "-."), (99, ":")):
        v = np.percentile(samples, q)
        ax.axvline(v, color="#c44e52", linestyle=style, label=f"p{q} = {v:.1f} ms")
    ax.set_xlabel("latency (ms)")
    ax.set_ylabel("count")
    ax.set_title("Search latency")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


# ---------------------------------------------------------------------------
# Delimited outputs


def write_scores_csv(genuine, imposter, path: str | Path) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "score"])
        for s in genuine:
            w.writerow(["genuine", f"{float(s):.6f}"])
        for s in imposter:
            w.writerow(["imposter", f"{float(s):.6f}"])
    return Path(path)


def write_latency_csv(samples_ms, path: str | Path) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["probe", "latency_ms"])
        for i, s in enumerate(samples_ms):
            w.writerow([i, f"{float(s):.3f}"])
    return Path(path)


def latency_percentiles(samples_ms) -> dict:
    s = np.asarray(samples_ms, dtype=np.float64)
    return {
        "count": int(s.size),
        "mean_ms": float(s.mean()),
        "p50_ms": float(np.percentile(s, 50)),
        "p90_ms": float(np.percentile(s, 90)),
        "p99_ms": float(np.percentile(s, 99)),
        "max_ms": float(s.max()),
        "total_s": float(s.sum() / 1000.0),
    }
