"""End-to-end experiment orchestration.

A run goes: simulate comparisons -> map to the unit cube -> fit the joint
score model -> fit the pairwise ratio model -> draw marginal-winner-density
(MWD) samples and evaluate their model log-densities -> assemble the
tempering-field estimate -> field-scaled annealed Langevin sampling -> map
back to the original coordinates -> metrics against reference draws.

Stage outputs are cached on disk under a key derived from the configuration,
so repeated runs reuse finished work unless ``force`` is set.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .comparisons import UNIT_VARIANCE_S, ComparisonDataset, RUMConfig, simulate_comparisons
from .density import DensityEvalConfig, model_log_density
from .metrics import MetricReport, mmtv, wasserstein
from .sampling import ALDConfig, ald_run, default_preset, fast_2d_preset, marginal_score_fn, scaled_ald_run
from .scoremodel import (
    JointScoreNet,
    ScoreModelConfig,
    hidden_width_for_dim,
    iterations_for_dim,
    load_model,
    save_model,
    train,
)
from .targets import BeliefTarget, SamplingDist, get_target, reference_sample, uniform_box
from .tempering import (
    TemperingFieldEstimate,
    build_field_estimate,
    load_ratio,
    save_ratio,
    train_ratio_net,
)


@dataclass
class ExperimentConfig:
    target: str = "onemoon2d"
    n_comparisons: int = 2000
    seed: int = 0
    rum_model: str = "bradley-terry"
    s: float = UNIT_VARIANCE_S
    lambda_kind: str = "uniform-box"
    n_samples: int = 2000
    ald_preset: str = "default"  # "default" | "fast-2d"
    mask_prob: float = 0.5  # 1.0 disables joint training (winners-only)
    use_field: bool = True
    constant_tau: float | None = None  # overrides the learned field if set
    iterations: int | None = None
    hidden: int | None = None
    mwd_per_dim: int = 2000
    out_dir: str = "runs"
    force: bool = False

    @classmethod
    def from_yaml(cls, path: str | Path) -> "ExperimentConfig":
        data = yaml.safe_load(Path(path).read_text()) or {}
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_yaml(self) -> str:
        return yaml.safe_dump(asdict(self), sort_keys=True)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    samples: np.ndarray
    reference: np.ndarray
    report: MetricReport
    field: TemperingFieldEstimate | None
    model: JointScoreNet
    timings: dict = field(default_factory=dict)


def _stage_key(name: str, payload: dict) -> str:
    blob = json.dumps({"stage": name, **payload}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


class _StageCache:
    def __init__(self, out_dir: Path, force: bool):
        self.dir = out_dir
        self.force = force
        self.dir.mkdir(parents=True, exist_ok=True)

    def arrays(self, name: str, key: dict, compute):
        path = self.dir / f"{name}-{_stage_key(name, key)}.npz"
        if path.exists() and not self.force:
            with np.load(path) as z:
                return {k: z[k] for k in z.files}
        out = compute()
        np.savez(path, **out)
        return out

    def model(self, name: str, key: dict, compute):
        path = self.dir / f"{name}-{_stage_key(name, key)}.pbnet"
        if path.exists() and not self.force:
            return load_model(str(path))
        model = compute()
        save_model(str(path), model)
        return model


def _score_config(cfg: ExperimentConfig, d: int) -> ScoreModelConfig:
    return ScoreModelConfig(
        d=d,
        hidden=cfg.hidden or hidden_width_for_dim(d),
        iterations=cfg.iterations or iterations_for_dim(d),
        mask_prob=cfg.mask_prob,
        seed=cfg.seed,
    )


def _ald_config(cfg: ExperimentConfig) -> ALDConfig:
    return fast_2d_preset() if cfg.ald_preset == "fast-2d" else default_preset()


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    target = get_target(cfg.target)
    d = target.domain.d
    rum = RUMConfig(model=cfg.rum_model, s=cfg.s)
    cache = _StageCache(Path(cfg.out_dir) / f"{cfg.target}-seed{cfg.seed}", cfg.force)
    timings: dict[str, float] = {}
    base_key = {
        "target": cfg.target, "n": cfg.n_comparisons, "seed": cfg.seed,
        "rum": cfg.rum_model, "s": cfg.s, "lambda": cfg.lambda_kind,
        "box": [target.domain.lower.tolist(), target.domain.upper.tolist()],
    }

    t0 = time.perf_counter()
    sim = cache.arrays(
        "comparisons", base_key,
        lambda: _simulate_arrays(target, rum, cfg),
    )
    dataset = ComparisonDataset(
        winners=sim["winners"], losers=sim["losers"],
        winners_u=sim["winners_u"], losers_u=sim["losers_u"],
        rum=rum, lambda_kind=cfg.lambda_kind, seed=cfg.seed,
    )
    timings["simulate"] = time.perf_counter() - t0

    sc = _score_config(cfg, d)
    t0 = time.perf_counter()
    model = cache.model(
        "score", {**base_key, "mask": cfg.mask_prob, "iters": sc.iterations, "hidden": sc.hidden},
        lambda: train(dataset, sc)[0],
    )
    timings["fit_score"] = time.perf_counter() - t0

    field_est: TemperingFieldEstimate | None = None
    tau_fn = None
    if cfg.constant_tau is not None:
        c = float(cfg.constant_tau)
        tau_fn = lambda x: np.full(np.atleast_2d(x).shape[0], c)  # noqa: E731
    elif cfg.use_field:
        t0 = time.perf_counter()
        ratio_key = _stage_key("ratio", {**base_key, "hidden": sc.hidden})
        ratio_path = cache.dir / f"ratio-{ratio_key}.pbnet"
        if ratio_path.exists() and not cfg.force:
            ratio, _ = load_ratio(str(ratio_path))
        else:
            ratio = train_ratio_net(dataset, s=cfg.s, hidden=sc.hidden, seed=cfg.seed)
            save_ratio(str(ratio_path), ratio, cfg.s)
        timings["fit_ratio"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        mwd = cache.arrays(
            "mwd", {**base_key, "mask": cfg.mask_prob, "iters": sc.iterations,
                    "hidden": sc.hidden, "m": cfg.mwd_per_dim, "preset": cfg.ald_preset},
            lambda: _mwd_arrays(model, cfg, d),
        )
        timings["mwd_samples"] = time.perf_counter() - t0
        field_est = build_field_estimate(ratio, mwd["points"], mwd["log_pw"], s=cfg.s)
        tau_fn = field_est.interpolated()

    t0 = time.perf_counter()
    ald = _ald_config(cfg)
    if tau_fn is None:
        samples_u = ald_run(marginal_score_fn(model), ald, cfg.n_samples, d,
                            seed=cfg.seed + 1, reflect_box=(0.0, 1.0))
    else:
        samples_u = scaled_ald_run(model, tau_fn, ald, cfg.n_samples, seed=cfg.seed + 1)
    timings["sample"] = time.perf_counter() - t0

    dist = _sampling_dist(target, cfg.lambda_kind)
    samples = dist.rosenblatt_inverse(samples_u)
    reference = reference_sample(target, cfg.n_samples, seed=cfg.seed + 2)

    report = MetricReport(
        target=cfg.target, seed=cfg.seed, n_comparisons=cfg.n_comparisons,
        wasserstein=wasserstein(samples, reference, seed=cfg.seed),
        mmtv=mmtv(samples, reference),
        extras={"timings": {k: round(v, 3) for k, v in timings.items()},
                "mask_prob": cfg.mask_prob,
                "field": "learned" if field_est is not None else
                         ("constant" if cfg.constant_tau is not None else "none")},
    )
    return ExperimentResult(config=cfg, samples=samples, reference=reference,
                            report=report, field=field_est, model=model, timings=timings)


def _sampling_dist(target: BeliefTarget, kind: str) -> SamplingDist:
    if kind == "uniform-box":
        return uniform_box(target.domain)
    raise ValueError(f"unsupported candidate distribution for experiments: {kind!r}")


def _simulate_arrays(target: BeliefTarget, rum: RUMConfig, cfg: ExperimentConfig) -> dict:
    ds = simulate_comparisons(target, _sampling_dist(target, cfg.lambda_kind), rum,
                              cfg.n_comparisons, seed=cfg.seed)
    return {"winners": ds.winners, "losers": ds.losers,
            "winners_u": ds.winners_u, "losers_u": ds.losers_u}


def _mwd_arrays(model: JointScoreNet, cfg: ExperimentConfig, d: int) -> dict:
    m = cfg.mwd_per_dim * d
    pts = ald_run(marginal_score_fn(model), _ald_config(cfg), m, d,
                  seed=cfg.seed + 3, reflect_box=(0.0, 1.0))
    log_pw = model_log_density(model, pts, DensityEvalConfig(seed=cfg.seed + 4))
    return {"points": pts, "log_pw": log_pw}
