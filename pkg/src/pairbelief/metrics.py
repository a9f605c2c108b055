"""Sample-quality metrics: exact 2-Wasserstein on subsampled point clouds and
mean marginal total variation (MMTV) against reference draws."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment


def wasserstein(a: np.ndarray, b: np.ndarray, max_points: int = 512,
                seed: int = 0) -> float:
    """Exact 2-Wasserstein distance between equal-size subsamples of two
    point clouds, solved as a linear assignment problem."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError("dimension mismatch")
    rng = np.random.default_rng(seed)
    m = min(a.shape[0], b.shape[0], max_points)
    if m == 0:
        raise ValueError("empty point cloud")
    ai = a[rng.choice(a.shape[0], size=m, replace=False)]
    bi = b[rng.choice(b.shape[0], size=m, replace=False)]
    cost = np.sum((ai[:, None, :] - bi[None, :, :]) ** 2, axis=2)
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(cost[rows, cols].mean()))


def mmtv(a: np.ndarray, b: np.ndarray, bins: int = 50) -> float:
    """Mean over dimensions of the total variation distance between
    per-dimension histograms on equal-width bins spanning the union range."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError("dimension mismatch")
    tvs = []
    for j in range(a.shape[1]):
        lo = min(a[:, j].min(), b[:, j].min())
        hi = max(a[:, j].max(), b[:, j].max())
        if hi <= lo:
            hi = lo + 1e-12
        edges = np.linspace(lo, hi, bins + 1)
        pa, _ = np.histogram(a[:, j], bins=edges)
        pb, _ = np.histogram(b[:, j], bins=edges)
        pa = pa / pa.sum()
        pb = pb / pb.sum()
        tvs.append(0.5 * np.abs(pa - pb).sum())
    return float(np.mean(tvs))


@dataclass
class MetricReport:
    target: str
    seed: int
    n_comparisons: int
    wasserstein: float
    mmtv: float
    extras: dict = field(default_factory=dict)
    format: str = "metrics-v1"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        data = json.loads(text)
        if data.get("format") != "metrics-v1":
            raise ValueError(f"unsupported metrics format: {data.get('format')!r}")
        return cls(**data)
