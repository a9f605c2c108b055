"""Annealed Langevin dynamics, the score-scaled variant, and an ODE sampler.

The score-scaled ALD multiplies the marginal score by a position-dependent
tempering value and shrinks the step size accordingly, so that the dynamics
target the de-tempered density while staying stable where tempering is large.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scoremodel import JointScoreNet, cosine_schedule


class SamplerError(RuntimeError):
    """Non-finite chain state or solver failure."""


@dataclass
class ALDConfig:
    L: int = 50  # Langevin steps per noise level
    eps_base: float = 0.15
    schedule: np.ndarray = field(default_factory=lambda: cosine_schedule(0.01, 2.0, 40))

    def __post_init__(self):
        self.schedule = np.asarray(self.schedule, dtype=float)
        if self.L < 1:
            raise ValueError("need at least one step per level")
        if self.eps_base <= 0:
            raise ValueError("base step size must be positive")
        if self.schedule.size < 2 or not np.all(np.diff(self.schedule) > 0):
            raise ValueError("schedule must be strictly increasing sigma_min..sigma_max")

    @property
    def T(self) -> int:
        return self.schedule.size

    @property
    def sigma_max(self) -> float:
        return float(self.schedule[-1])


def fast_2d_preset(sigma_min: float = 0.01, sigma_max: float = 2.0) -> ALDConfig:
    return ALDConfig(L=15, eps_base=7.0, schedule=cosine_schedule(sigma_min, sigma_max, 40))


def default_preset(sigma_min: float = 0.01, sigma_max: float = 2.0) -> ALDConfig:
    return ALDConfig(L=50, eps_base=0.15, schedule=cosine_schedule(sigma_min, sigma_max, 40))


def step_size(eps_base: float, tau_x, sigma: float, sigma_max: float):
    """Position-dependent ALD step: eps_base / tau * sigma^2 / sigma_max^2."""
    tau_x = np.asarray(tau_x, dtype=float)
    if np.any(tau_x <= 0):
        raise ValueError("tempering value must be positive")
    out = eps_base / tau_x * sigma**2 / sigma_max**2
    return out if out.ndim else float(out)


def _reflect(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Reflect coordinates into [lo, hi] (billiard boundary)."""
    width = hi - lo
    y = np.mod(x - lo, 2 * width)
    y = np.where(y > width, 2 * width - y, y)
    return lo + y


def _ald_core(score_fn, cfg: ALDConfig, n_chains: int, d: int, seed: int,
              tau_fn=None, reflect_box=None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if n_chains == 0:
        return np.empty((0, d))
    x = cfg.sigma_max * rng.standard_normal((n_chains, d))
    for sigma in cfg.schedule[::-1]:
        for _ in range(cfg.L):
            s = score_fn(x, sigma, rng)
            if tau_fn is not None:
                tau = np.asarray(tau_fn(x), dtype=float)
                eps = step_size(cfg.eps_base, tau, sigma, cfg.sigma_max)
                drift = eps[:, None] * tau[:, None] * s
                noise_scale = np.sqrt(2 * eps)[:, None]
            else:
                eps = step_size(cfg.eps_base, 1.0, sigma, cfg.sigma_max)
                drift = eps * s
                noise_scale = np.sqrt(2 * eps)
            x = x + drift + noise_scale * rng.standard_normal((n_chains, d))
            if reflect_box is not None:
                x = _reflect(x, reflect_box[0], reflect_box[1])
            if not np.all(np.isfinite(x)):
                raise SamplerError(
                    f"non-finite chain state at sigma={sigma:.4g}; "
                    f"bad chains: {int(np.sum(~np.isfinite(x).all(axis=1)))}"
                )
    return x


def ald_run(score_fn, cfg: ALDConfig, n_chains: int, d: int, seed: int,
            reflect_box=None) -> np.ndarray:
    """Plain annealed Langevin dynamics.

    ``score_fn(x, sigma, rng)`` evaluates the perturbed score on a batch; the
    rng argument lets stochastic scores (noise-filled marginal queries) share
    the chain's stream so that runs are reproducible.
    """
    return _ald_core(score_fn, cfg, n_chains, d, seed, tau_fn=None, reflect_box=reflect_box)


def marginal_score_fn(model: JointScoreNet, temp: float = 0.0):
    """Marginal-mode score of the joint model; loser slot refilled per step."""

    def fn(x, sigma, rng):
        return model.marginal_score(x, sigma, rng, temp=temp)

    return fn


def scaled_ald_run(model: JointScoreNet, tau_fn, cfg: ALDConfig, n_chains: int,
                   seed: int, reflect_box=(0.0, 1.0)) -> np.ndarray:
    """Score-scaled ALD on the model's marginal score with tempering tau_fn."""
    return _ald_core(
        marginal_score_fn(model),
        cfg,
        n_chains,
        model.config.d,
        seed,
        tau_fn=tau_fn,
        reflect_box=reflect_box,
    )


def ode_sample(score_fn, sigma_min: float, sigma_max: float, n: int, d: int,
               seed: int, rtol: float = 1e-5, max_step_count: int = 10_000,
               stochastic: bool = False) -> np.ndarray:
    """Integrate dx = -sigma * score dsigma from sigma_max down to sigma_min
    with adaptive Heun steps, starting from N(0, sigma_max^2 I) points.

    ``stochastic=True`` adds reverse-SDE churn noise on the same code path.
    """
    rng = np.random.default_rng(seed)
    if n == 0:
        return np.empty((0, d))
    x = sigma_max * rng.standard_normal((n, d))
    sigma = sigma_max
    h = -(sigma_max - sigma_min) / 64.0
    steps = 0
    while sigma > sigma_min + 1e-12:
        h = max(h, -(sigma - sigma_min)) if h < 0 else h
        if sigma + h < sigma_min:
            h = sigma_min - sigma
        f0 = -sigma * score_fn(x, sigma, rng)
        x_pred = x + h * f0
        f1 = -(sigma + h) * score_fn(x_pred, sigma + h, rng)
        x_heun = x + 0.5 * h * (f0 + f1)
        err = float(np.max(np.abs(x_heun - x_pred))) / (np.max(np.abs(x_heun)) + 1.0)
        if err > rtol and abs(h) > (sigma_max - sigma_min) / 4096.0:
            h *= 0.5
            continue
        x = x_heun
        if stochastic:
            x = x + np.sqrt(np.abs(h) * 2 * max(sigma + h, sigma_min)) * rng.standard_normal(
                (n, d)
            )
        sigma = sigma + h
        if err < rtol / 4:
            h *= 1.5
        steps += 1
        if steps > max_step_count:
            raise SamplerError(
                f"ODE sampler exceeded {max_step_count} steps (sigma={sigma:.4g}, h={h:.3g})"
            )
        if not np.all(np.isfinite(x)):
            raise SamplerError(f"non-finite ODE state at sigma={sigma:.4g} after {steps} steps")
    return x
