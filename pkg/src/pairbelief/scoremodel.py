"""Preconditioned joint/marginal score model trained by denoising score matching.

The network models the noise-perturbed score of the (winner, loser) joint
distribution in unit-cube coordinates. A binary ``joint`` flag switches
between joint and marginal modes: in marginal mode the loser input slot is
filled with fresh Gaussian noise at the current noise level and only the
winner block of the output is used. A second ``temp`` flag is reserved for
the tempered-marginal head.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .comparisons import ComparisonDataset
from .nn import Adam, DenseNet, OptimizerConfig, PowerFunctionEMA, TrainingError
from .nn import load_checkpoint, save_checkpoint

MODEL_KIND = "joint-score-v1"


@dataclass
class ScoreModelConfig:
    d: int = 2
    hidden: int = 32
    sigma_min: float = 0.01
    sigma_max: float = 2.0
    sigma_data: float = 0.5
    p_mean: float = -1.2
    p_std: float = 1.2
    phi: float = 0.5  # mixture weight of the schedule-grid component
    iterations: int = 8192
    batch: int = 4000
    schedule_len: int = 40  # T of the ALD schedule
    mask_prob: float = 0.5  # probability of marginal (joint=false) training items
    alpha_ref: float = 0.005
    iter_ref: int = 1024
    weight_decay: float = 0.0
    ema_sigma_ref: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.sigma_min < self.sigma_max:
            raise ValueError("need 0 < sigma_min < sigma_max")
        if not 0 <= self.phi <= 1:
            raise ValueError("phi must lie in [0, 1]")
        if self.hidden % 4 != 0:
            raise ValueError("hidden width must be divisible by 4 for the flag embedding")


def hidden_width_for_dim(d: int) -> int:
    if d <= 4:
        return 64
    if d <= 10:
        return 96
    return 128


def iterations_for_dim(d: int) -> int:
    if d <= 2:
        return 32768
    if d < 10:
        return 49152
    return 61440


def cosine_schedule(sigma_min: float, sigma_max: float, T: int) -> np.ndarray:
    """Ascending noise grid, sigma_1 = sigma_min ... sigma_T = sigma_max."""
    if T < 2:
        raise ValueError("schedule needs at least two levels")
    i = np.arange(1, T + 1)
    return sigma_min + 0.5 * (sigma_max - sigma_min) * (
        1.0 + np.cos(np.pi * (T - i) / (T - 1))
    )


def sample_train_sigma(cfg: ScoreModelConfig, rng: np.random.Generator, size: int) -> np.ndarray:
    """Training noise levels: schedule grid with prob phi, else clamped lognormal."""
    schedule = cosine_schedule(cfg.sigma_min, cfg.sigma_max, cfg.schedule_len)
    on_grid = rng.random(size) < cfg.phi
    grid_draws = schedule[rng.integers(0, cfg.schedule_len, size=size)]
    logn = np.exp(cfg.p_mean + cfg.p_std * rng.standard_normal(size))
    logn = np.clip(logn, cfg.sigma_min, cfg.sigma_max)
    return np.where(on_grid, grid_draws, logn)


class JointScoreNet:
    """EDM-preconditioned dense net over (x, x', sigma-embedding, flags)."""

    def __init__(self, config: ScoreModelConfig, seed: int | None = None):
        self.config = config
        d, h = config.d, config.hidden
        self.net = DenseNet(
            [2 * d + 1, h, h, h, h, 2 * d],
            n_flags=2,
            embed_width=h // 4,
            seed=config.seed if seed is None else seed,
        )

    # -- preconditioning ----------------------------------------------------

    def _coeffs(self, sigma: np.ndarray):
        sd = self.config.sigma_data
        sigma = np.asarray(sigma, dtype=float)
        c_skip = sd**2 / (sigma**2 + sd**2)
        c_out = sigma * sd / np.sqrt(sigma**2 + sd**2)
        c_in = 1.0 / np.sqrt(sigma**2 + sd**2)
        c_noise = 0.25 * np.log(sigma)
        return c_skip, c_out, c_in, c_noise

    def denoise(self, z: np.ndarray, sigma, joint, temp, cache=None) -> np.ndarray:
        """D(z; sigma) on a batch (n, 2d) with per-row noise levels."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        n = z.shape[0]
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (n,))
        if np.any(sigma < self.config.sigma_min - 1e-12) or np.any(
            sigma > self.config.sigma_max + 1e-12
        ):
            raise ValueError("sigma outside the trained range")
        c_skip, c_out, c_in, c_noise = self._coeffs(sigma)
        inp = np.concatenate([c_in[:, None] * z, c_noise[:, None]], axis=1)
        flags = np.column_stack(
            [np.broadcast_to(joint, (n,)), np.broadcast_to(temp, (n,))]
        ).astype(float)
        raw = self.net.forward(inp, flags, cache=cache)
        if cache is not None:
            cache["c_out"] = c_out
        return c_skip[:, None] * z + c_out[:, None] * raw

    def score(self, x, xp, sigma, joint, temp=0.0) -> np.ndarray:
        """Perturbed score; returns (n, 2d) in joint mode, (n, d) marginal."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        joint_flag = float(np.asarray(joint).reshape(-1)[0]) if np.ndim(joint) else float(joint)
        if joint_flag and xp is None:
            raise ValueError("joint mode requires the loser block")
        if xp is None:
            raise ValueError("marginal mode still needs a noise-filled loser slot; "
                             "use marginal_score for automatic filling")
        xp = np.atleast_2d(np.asarray(xp, dtype=float))
        z = np.concatenate([x, xp], axis=1)
        n = z.shape[0]
        sig = np.broadcast_to(np.asarray(sigma, dtype=float), (n,))
        D = self.denoise(z, sig, joint, temp)
        s = (D - z) / (sig**2)[:, None]
        return s if joint_flag else s[:, : self.config.d]

    def marginal_score(self, x, sigma, rng: np.random.Generator, temp=0.0) -> np.ndarray:
        """Marginal-mode score; fills the loser slot with fresh noise each call."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = x.shape[0]
        sig = np.broadcast_to(np.asarray(sigma, dtype=float), (n,))
        noise = sig[:, None] * rng.standard_normal((n, self.config.d))
        return self.score(x, noise, sig, joint=0.0, temp=temp)


def dsm_loss_and_grads(model: JointScoreNet, winners: np.ndarray, losers: np.ndarray,
                       rng: np.random.Generator):
    """Denoising score-matching loss over a batch of pairs, with parameter
    gradients. Masked items (joint = false) contribute only winner-block
    residuals; the loser slot is pure noise at the item's noise level."""
    cfg = model.config
    d = cfg.d
    B = winners.shape[0]
    if B == 0:
        raise ValueError("empty batch")
    sigma = sample_train_sigma(cfg, rng, B)
    z_clean = np.concatenate([winners, losers], axis=1)
    noise = rng.standard_normal((B, 2 * d))
    z_tilde = z_clean + sigma[:, None] * noise
    masked = rng.random(B) < cfg.mask_prob
    slot_noise = sigma[:, None] * rng.standard_normal((B, d))
    z_tilde[masked, d:] = slot_noise[masked]
    joint = (~masked).astype(float)

    cache = {}
    D = model.denoise(z_tilde, sigma, joint, 0.0, cache=cache)
    active = np.ones((B, 2 * d))
    active[masked, d:] = 0.0
    resid = (z_clean - D) * active
    # l(sigma) = sigma^2 on kernel-score residuals == 1/sigma^2 on denoiser residuals
    loss = float(np.mean(np.sum(resid**2, axis=1) / sigma**2))
    grad_raw = -2.0 * resid / (sigma**2)[:, None] / B * cache["c_out"][:, None]
    grads, _ = model.net.backward(cache, grad_raw)
    return loss, grads


def train(dataset: ComparisonDataset, config: ScoreModelConfig):
    """Run the score-matching loop on unit-cube pairs; returns the trained
    model with EMA weights applied, plus the per-iteration loss trace."""
    cfg = config
    model = JointScoreNet(cfg)
    rng = np.random.default_rng(cfg.seed)
    n = dataset.n
    batch = min(n, cfg.batch)
    opt = Adam(
        model.net.parameters(),
        OptimizerConfig(
            alpha_ref=cfg.alpha_ref, iter_ref=cfg.iter_ref, weight_decay=cfg.weight_decay
        ),
    )
    ema = PowerFunctionEMA(model.net.parameters(), cfg.ema_sigma_ref)
    losses = np.empty(cfg.iterations)
    W = dataset.winners_u
    L = dataset.losers_u
    for it in range(1, cfg.iterations + 1):
        if batch < n:
            idx = rng.choice(n, size=batch, replace=False)
            bw, bl = W[idx], L[idx]
        else:
            bw, bl = W, L
        loss, grads = dsm_loss_and_grads(model, bw, bl, rng)
        if not np.isfinite(loss) or loss > 1e6:
            raise TrainingError(f"training diverged at iteration {it}: loss={loss}")
        params = opt.step(model.net.parameters(), grads, it)
        model.net.set_parameters(params)
        ema.update(model.net.parameters(), it)
        losses[it - 1] = loss
    model.net.set_parameters([s.copy() for s in ema.shadow])
    return model, losses


def save_model(path, model: JointScoreNet) -> None:
    save_checkpoint(path, model.net, MODEL_KIND, hyperparams=asdict(model.config))


def load_model(path) -> JointScoreNet:
    net, _, hyper, _ = load_checkpoint(path, expect_kind=MODEL_KIND)
    model = JointScoreNet(ScoreModelConfig(**hyper))
    model.net = net
    return model
