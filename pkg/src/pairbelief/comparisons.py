"""Simulated expert choices under random utility models.

Two noise models are supported: Bradley-Terry (Gumbel noise, logistic choice
probabilities) and the exponential RUM (Laplace choice probabilities). A
comparison dataset stores winner/loser pairs in original coordinates and in
the unit-cube coordinates of the Rosenblatt reparametrization.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .targets import BeliefTarget, SamplingDist

#: Gumbel scale giving unit-variance choice noise.
UNIT_VARIANCE_S = float(np.sqrt(6.0 / np.pi**2))


class ParseError(ValueError):
    """Malformed comparison CSV."""


@dataclass(frozen=True)
class RUMConfig:
    model: str = "bradley-terry"  # or "exponential"
    s: float = UNIT_VARIANCE_S

    def __post_init__(self):
        if self.model not in ("bradley-terry", "exponential"):
            raise ValueError(f"unknown RUM model {self.model!r}")
        if not self.s > 0:
            raise ValueError("noise scale must be positive")


def choice_prob(rum: RUMConfig, du) -> np.ndarray:
    """P(first point wins) given utility difference du = u(x) - u(x')."""
    du = np.asarray(du, dtype=float)
    if not np.all(np.isfinite(du)):
        raise ValueError("utility difference must be finite")
    if rum.model == "bradley-terry":
        # logistic CDF with scale s, overflow-safe on both tails
        z = np.atleast_1d(du / rum.s)
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
    else:
        # Laplace(0, 1/s) CDF
        out = np.where(
            du < 0, 0.5 * np.exp(np.minimum(rum.s * du, 0.0)),
            1.0 - 0.5 * np.exp(np.minimum(-rum.s * du, 0.0)),
        )
    return out.reshape(du.shape) if du.ndim else float(out.reshape(-1)[0])


@dataclass
class ComparisonDataset:
    winners: np.ndarray  # (n, d) original coordinates
    losers: np.ndarray
    winners_u: np.ndarray  # (n, d) unit-cube coordinates
    losers_u: np.ndarray
    rum: RUMConfig
    lambda_kind: str
    seed: int

    @property
    def n(self) -> int:
        return self.winners.shape[0]

    @property
    def d(self) -> int:
        return self.winners.shape[1]


def simulate_comparisons(
    target: BeliefTarget,
    lam: SamplingDist,
    rum: RUMConfig,
    n: int,
    seed: int,
) -> ComparisonDataset:
    """Draw n candidate pairs from lambda and let the RUM expert pick winners."""
    if n < 1:
        raise ValueError("need at least one comparison")
    rng = np.random.default_rng(seed)
    a = lam.sample(n, rng)
    b = lam.sample(n, rng)
    du = target.log_density(a) - target.log_density(b)
    p_first = choice_prob(rum, du)
    first_wins = rng.random(n) < p_first
    winners = np.where(first_wins[:, None], a, b)
    losers = np.where(first_wins[:, None], b, a)
    return ComparisonDataset(
        winners=winners,
        losers=losers,
        winners_u=lam.rosenblatt_forward(winners),
        losers_u=lam.rosenblatt_forward(losers),
        rum=rum,
        lambda_kind=lam.kind,
        seed=seed,
    )


def write_dataset(path, ds: ComparisonDataset) -> None:
    d = ds.d
    buf = io.StringIO()
    buf.write(f"# rum={ds.rum.model}\n")
    buf.write(f"# s={float(ds.rum.s)!r}\n")
    buf.write(f"# lambda={ds.lambda_kind}\n")
    buf.write(f"# seed={ds.seed}\n")
    cols = [f"w{i+1}" for i in range(d)] + [f"l{i+1}" for i in range(d)]
    cols += [f"wu{i+1}" for i in range(d)] + [f"lu{i+1}" for i in range(d)]
    buf.write(",".join(cols) + "\n")
    data = np.hstack([ds.winners, ds.losers, ds.winners_u, ds.losers_u])
    for row in data:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    Path(path).write_text(buf.getvalue())


def read_dataset(path) -> ComparisonDataset:
    meta = {}
    rows = []
    header = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key.strip()] = val.strip()
            continue
        if header is None:
            header = line.split(",")
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise ParseError(f"row {lineno}: expected {len(header)} columns, got {len(parts)}")
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise ParseError(f"row {lineno}: {exc}") from exc
    if header is None or not rows:
        raise ParseError("no data rows")
    d, rem = divmod(len(header), 4)
    if rem != 0:
        raise ParseError("column count not divisible into winner/loser blocks")
    try:
        rum = RUMConfig(model=meta["rum"], s=float(meta["s"]))
        seed = int(meta["seed"])
        lam_kind = meta["lambda"]
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad header metadata: {exc}") from exc
    data = np.asarray(rows)
    return ComparisonDataset(
        winners=data[:, :d],
        losers=data[:, d : 2 * d],
        winners_u=data[:, 2 * d : 3 * d],
        losers_u=data[:, 3 * d :],
        rum=rum,
        lambda_kind=lam_kind,
        seed=seed,
    )


def write_points(path, points: np.ndarray) -> None:
    """Point-set CSV: one row per point, columns x1..xd."""
    points = np.atleast_2d(points)
    d = points.shape[1]
    with open(path, "w") as f:
        f.write(",".join(f"x{i+1}" for i in range(d)) + "\n")
        for row in points:
            f.write(",".join(repr(float(v)) for v in row) + "\n")


def read_points(path) -> np.ndarray:
    lines = [l for l in Path(path).read_text().splitlines() if l.strip()]
    if not lines:
        raise ParseError("empty point file")
    rows = [[float(v) for v in line.split(",")] for line in lines[1:]]
    return np.asarray(rows) if rows else np.empty((0, len(lines[0].split(","))))
