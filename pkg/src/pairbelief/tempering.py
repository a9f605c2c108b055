"""Tempering fields: analytic quadrature oracles, the learned estimator, and
constant-tempering theory.

The central object is the position-dependent factor linking the scores of the
belief density and the marginal winner density (MWD),
grad log p(x) = tau(x) grad log p_w(x). Closed forms exist for the
Bradley-Terry model and the exponential RUM; the practical estimator plugs a
learned pairwise log-density-difference network and importance samples from
the MWD model into the Bradley-Terry formula.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import logsumexp

from .comparisons import ComparisonDataset, RUMConfig
from .nn import Adam, DenseNet, OptimizerConfig, TrainingError, load_checkpoint, save_checkpoint
from .targets import BeliefTarget, BoxDomain


class FieldEstimationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Quadrature grids
# ---------------------------------------------------------------------------


def midpoint_grid(domain: BoxDomain, pts_per_axis: int):
    """Tensor-product midpoint rule: returns (points (N, d), cell weight)."""
    axes = []
    for lo, hi in zip(domain.lower, domain.upper):
        edges = np.linspace(lo, hi, pts_per_axis + 1)
        axes.append((edges[:-1] + edges[1:]) / 2)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    weight = domain.volume / pts.shape[0]
    return pts, weight


def default_grid(domain: BoxDomain):
    if domain.d == 1:
        return midpoint_grid(domain, 2048)
    if domain.d == 2:
        return midpoint_grid(domain, 256)
    raise ValueError("quadrature oracles are provided for d <= 2 only")


def unit_lattice(d: int, n_points: int = 4096) -> np.ndarray:
    """Deterministic evaluation lattice inside the unit cube."""
    per_axis = max(2, int(round(n_points ** (1.0 / d))))
    dom = BoxDomain(np.zeros(d), np.ones(d))
    pts, _ = midpoint_grid(dom, per_axis)
    return pts


# ---------------------------------------------------------------------------
# Analytic fields and the MWD by quadrature
# ---------------------------------------------------------------------------

_CHUNK = 256


def analytic_bt_field(log_p, s: float, x: np.ndarray, grid_pts: np.ndarray,
                      grid_w: float) -> np.ndarray:
    """Bradley-Terry tempering field by grid quadrature.

    tau(x) = s * [int 1/(1+r)] / [int r/(1+r)^2] with
    r = (p(x')/p(x))^(1/s); normalization constants cancel.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    lp_grid = np.asarray(log_p(grid_pts), dtype=float)
    lp_x = np.asarray(log_p(x), dtype=float)
    out = np.empty(x.shape[0])
    for a in range(0, x.shape[0], _CHUNK):
        b = min(a + _CHUNK, x.shape[0])
        log_r = (lp_grid[None, :] - lp_x[a:b, None]) / s
        sig_m = _sigmoid(-log_r)  # 1/(1+r)
        sig_p = _sigmoid(log_r)  # r/(1+r)
        num = np.sum(sig_m, axis=1) * grid_w
        den = np.sum(sig_p * sig_m, axis=1) * grid_w
        out[a:b] = s * num / den
    return out


def analytic_exp_field(log_p, s: float, x: np.ndarray, grid_pts: np.ndarray,
                       grid_w: float) -> np.ndarray:
    """Exponential-RUM tempering field by quadrature with level-set splitting.

    tau(x) = (1/s) * [ (2 vol(L) + 2 A) / (A + B) - 1 ] with
    L = {x': p(x) >= p(x')}, A = p^s(x) int_U p^-s, B = p^-s(x) int_L p^s.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    lp_grid = np.asarray(log_p(grid_pts), dtype=float)
    lp_x = np.asarray(log_p(x), dtype=float)
    out = np.empty(x.shape[0])
    for a in range(0, x.shape[0], _CHUNK):
        b = min(a + _CHUNK, x.shape[0])
        diff = s * (lp_x[a:b, None] - lp_grid[None, :])  # log of p^s(x) p^-s(x')
        lower = diff >= 0  # p(x) >= p(x')
        vol_l = np.sum(lower, axis=1) * grid_w
        A = np.sum(np.where(~lower, np.exp(diff), 0.0), axis=1) * grid_w
        B = np.sum(np.where(lower, np.exp(-diff), 0.0), axis=1) * grid_w
        out[a:b] = (1.0 / s) * ((2 * vol_l + 2 * A) / (A + B) - 1.0)
    return out


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _choice_cdf(rum: RUMConfig, du: np.ndarray) -> np.ndarray:
    if rum.model == "bradley-terry":
        return _sigmoid(du / rum.s)
    return np.where(du < 0, 0.5 * np.exp(rum.s * du), 1.0 - 0.5 * np.exp(-rum.s * np.abs(du)))


def mwd_quadrature(log_p, rum: RUMConfig, x: np.ndarray, grid_pts: np.ndarray,
                   grid_w: float, volume: float, lam_pdf=None) -> np.ndarray:
    """Marginal winner density p_w(x) = 2 lam(x) int F(du) lam(x') dx'.

    ``lam_pdf`` defaults to the uniform density 1/volume; a callable enables
    the reparametrization cross-checks with non-uniform candidate densities.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    lp_grid = np.asarray(log_p(grid_pts), dtype=float)
    lp_x = np.asarray(log_p(x), dtype=float)
    if lam_pdf is None:
        lam_x = np.full(x.shape[0], 1.0 / volume)
        lam_grid = np.full(grid_pts.shape[0], 1.0 / volume)
    else:
        lam_x = np.asarray(lam_pdf(x), dtype=float)
        lam_grid = np.asarray(lam_pdf(grid_pts), dtype=float)
    out = np.empty(x.shape[0])
    for a in range(0, x.shape[0], _CHUNK):
        b = min(a + _CHUNK, x.shape[0])
        F = _choice_cdf(rum, lp_x[a:b, None] - lp_grid[None, :])
        out[a:b] = 2.0 * lam_x[a:b] * np.sum(F * lam_grid[None, :], axis=1) * grid_w
    return out


def grad_log_mwd_fd(log_p, rum: RUMConfig, x: np.ndarray, grid_pts: np.ndarray,
                    grid_w: float, volume: float, h: float = 2e-3) -> np.ndarray:
    """Gradient of log p_w by fourth-order central differences of the
    quadrature MWD (independent of the analytic collinearity identity)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, d = x.shape

    def logpw(pts):
        return np.log(mwd_quadrature(log_p, rum, pts, grid_pts, grid_w, volume))

    grad = np.empty((n, d))
    for j in range(d):
        stenc = []
        for mult in (-2, -1, 1, 2):
            xp = x.copy()
            xp[:, j] += mult * h
            stenc.append(logpw(xp))
        grad[:, j] = (8.0 * (stenc[2] - stenc[1]) - (stenc[3] - stenc[0])) / (12.0 * h)
    return grad


# ---------------------------------------------------------------------------
# Learned ratio model and the field estimator
# ---------------------------------------------------------------------------


class RatioNet:
    """Pairwise belief-density-ratio model, log r(x, x') = f(x') - f(x).

    Antisymmetry holds exactly by construction for any weights.
    """

    def __init__(self, d: int, hidden: int, seed: int = 0):
        self.net = DenseNet([d, hidden, hidden, hidden, 1], seed=seed)
        self.d = d

    def f(self, x: np.ndarray) -> np.ndarray:
        return self.net.forward(np.atleast_2d(x))[:, 0]

    def log_ratio(self, x: np.ndarray, xp: np.ndarray) -> np.ndarray:
        return self.f(xp) - self.f(x)


RATIO_KIND = "pairwise-ratio-v1"


def save_ratio(path, ratio: RatioNet, s: float) -> None:
    save_checkpoint(path, ratio.net, RATIO_KIND,
                    hyperparams={"d": ratio.d, "hidden": ratio.net.widths[1], "s": s})


def load_ratio(path) -> tuple[RatioNet, float]:
    net, _, hyper, _ = load_checkpoint(path, expect_kind=RATIO_KIND)
    ratio = RatioNet(int(hyper["d"]), int(hyper["hidden"]))
    ratio.net = net
    return ratio, float(hyper["s"])


def ratio_weight_decay(n: int, d: int) -> float:
    return 3e-3 if n < 100 * d else 1e-3


def train_ratio_net(dataset: ComparisonDataset, s: float, hidden: int = 32,
                    weight_decay: float | None = None, iterations: int = 4096,
                    alpha_ref: float = 0.005, iter_ref: int = 1024,
                    seed: int = 0) -> RatioNet:
    """Fit f by minimizing mean softplus((f(loser) - f(winner)) / s), the
    Bradley-Terry negative log-likelihood of the comparisons."""
    if dataset.n == 0:
        raise ValueError("empty dataset")
    if weight_decay is None:
        weight_decay = ratio_weight_decay(dataset.n, dataset.d)
    ratio = RatioNet(dataset.d, hidden, seed=seed)
    opt = Adam(
        ratio.net.parameters(),
        OptimizerConfig(alpha_ref=alpha_ref, iter_ref=iter_ref, weight_decay=weight_decay),
    )
    rng = np.random.default_rng(seed)
    n = dataset.n
    batch = min(n, 4000)
    W, L = dataset.winners_u, dataset.losers_u
    for it in range(1, iterations + 1):
        if batch < n:
            idx = rng.choice(n, size=batch, replace=False)
            bw, bl = W[idx], L[idx]
        else:
            bw, bl = W, L
        cache_w, cache_l = {}, {}
        fw = ratio.net.forward(bw, cache=cache_w)[:, 0]
        fl = ratio.net.forward(bl, cache=cache_l)[:, 0]
        z = (fl - fw) / s
        loss = float(np.mean(np.logaddexp(0.0, z)))
        if not np.isfinite(loss) or loss > 1e6:
            raise TrainingError(f"ratio training diverged at iteration {it}")
        dz = _sigmoid(z) / s / bw.shape[0]
        g_l, _ = ratio.net.backward(cache_l, dz[:, None])
        g_w, _ = ratio.net.backward(cache_w, -dz[:, None])
        grads = [a + b for a, b in zip(g_l, g_w)]
        ratio.net.set_parameters(opt.step(ratio.net.parameters(), grads, it))
    return ratio


@dataclass
class TemperingFieldEstimate:
    """Importance-sampled Bradley-Terry field with a learned ratio model.

    support (m, d): draws from the MWD model; log_pw: their model
    log-densities (importance weights are 1/p_w); values are clipped to
    [1, the 0.999 quantile over a fixed evaluation lattice].
    """

    ratio: RatioNet
    support: np.ndarray
    log_pw: np.ndarray
    s: float
    clip_upper: float = np.inf

    _f_support: np.ndarray | None = None

    def __post_init__(self):
        self._f_support = self.ratio.f(self.support)
        # normalized for numerical range only; the estimator is invariant to
        # common rescaling of the importance weights
        log_w = -(self.log_pw - np.max(self.log_pw))
        # truncated importance sampling: cap each weight at sqrt(m) times the
        # mean weight. A single annealed chain stuck in a low-density corner
        # gets weight 1/p_w large enough to be the entire effective sample,
        # and the field estimate then explodes everywhere; truncation bounds
        # that failure at O(1/sqrt(m)) bias for well-behaved weights.
        # iterate to the fixed point: an extreme outlier dominates the mean
        # in the cap itself, so a single pass leaves it dominant.
        m = log_w.size
        for _ in range(100):
            cap = logsumexp(log_w) - 0.5 * np.log(m)
            capped = np.minimum(log_w, cap)
            if np.allclose(capped, log_w):
                break
            log_w = capped
        self._log_w = log_w

    def raw(self, x: np.ndarray) -> np.ndarray:
        """Unclipped field estimate at unit-cube points (n, d).

        Evaluated fully in log space: with log r arbitrarily large in
        magnitude for untrained or sharply peaked ratio models, the
        numerator/denominator sums would otherwise underflow to 0.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        f_x = self.ratio.f(x)
        out = np.empty(x.shape[0])
        for a in range(0, x.shape[0], _CHUNK):
            b = min(a + _CHUNK, x.shape[0])
            log_r = (self._f_support[None, :] - f_x[a:b, None]) / self.s
            log_sig_m = -np.logaddexp(0.0, log_r)  # log 1/(1+r)
            log_sig_p = -np.logaddexp(0.0, -log_r)  # log r/(1+r)
            log_num = logsumexp(self._log_w[None, :] + log_sig_m, axis=1)
            log_den = logsumexp(self._log_w[None, :] + log_sig_p + log_sig_m, axis=1)
            out[a:b] = self.s * np.exp(log_num - log_den)
        return out

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.clip(self.raw(x), 1.0, self.clip_upper)

    def interpolated(self, pts_per_axis: int | None = None) -> "InterpolatedField":
        """Tabulate the clipped field on a unit-cube lattice for cheap reuse.

        Direct evaluation costs O(m) per query; samplers query the field
        thousands of times per chain, so they use this multilinear lookup
        (the field is smooth, a ~4096-node lattice loses <1% accuracy).
        """
        d = self.support.shape[1]
        if pts_per_axis is None:
            # beyond 2 dimensions a 4096-node budget leaves too few nodes per
            # axis to resolve the field's structure around concentrated modes
            budget = 4096 if d <= 2 else 65536
            pts_per_axis = int(np.ceil(budget ** (1.0 / d))) + 1
        axes = [np.linspace(0.0, 1.0, pts_per_axis)] * d
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.column_stack([m.ravel() for m in mesh])
        vals = self(nodes).reshape((pts_per_axis,) * d)
        return InterpolatedField(axes, vals, self.clip_upper)


class InterpolatedField:
    """Multilinear table of a tempering field over the unit cube.

    Queries are clamped into the cube (annealed chains start outside it), and
    outputs stay within the source field's clipping range.
    """

    def __init__(self, axes, values: np.ndarray, clip_upper: float):
        self._interp = RegularGridInterpolator(axes, values, method="linear")
        self.clip_upper = clip_upper

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.clip(np.atleast_2d(np.asarray(x, dtype=float)), 0.0, 1.0)
        return np.clip(self._interp(x), 1.0, self.clip_upper)


def build_field_estimate(ratio: RatioNet, support: np.ndarray, log_pw: np.ndarray,
                         s: float, lattice: np.ndarray | None = None,
                         clip_quantile: float = 0.999) -> TemperingFieldEstimate:
    """Assemble the estimator and fix its clipping bound from a lattice."""
    est = TemperingFieldEstimate(ratio=ratio, support=np.asarray(support, dtype=float),
                                 log_pw=np.asarray(log_pw, dtype=float), s=s)
    if lattice is None:
        d = support.shape[1]
        lattice = unit_lattice(d, 4096 if d <= 2 else 65536)
    raw_vals = est.raw(lattice)
    est.clip_upper = float(np.quantile(raw_vals, clip_quantile))
    return est


estimate_field = build_field_estimate


# ---------------------------------------------------------------------------
# Constant-tempering theory
# ---------------------------------------------------------------------------


def _p_weights(log_p, grid_pts: np.ndarray, grid_w: float) -> np.ndarray:
    lp = np.asarray(log_p(grid_pts), dtype=float)
    w = np.exp(lp - np.max(lp))
    return w / (np.sum(w) * grid_w) * grid_w  # normalized cell masses


def optimal_constant_tau(tau_vals: np.ndarray, score_q: np.ndarray, log_p,
                         grid_pts: np.ndarray, grid_w: float) -> float:
    """E_p[w(X) tau(X)] with w = |grad log q|^2 / E_p|grad log q|^2."""
    mass = _p_weights(log_p, grid_pts, grid_w)
    q2 = np.sum(np.asarray(score_q) ** 2, axis=1)
    denom = float(np.sum(mass * q2))
    if denom == 0:
        raise ValueError("score field vanishes everywhere")
    return float(np.sum(mass * q2 * np.asarray(tau_vals))) / denom


def constant_tempering_error(tau_vals: np.ndarray, score_q: np.ndarray, log_p,
                             tau: float, grid_pts: np.ndarray, grid_w: float) -> float:
    """F(p, q^tau) = E_p[|tau - tau(X)|^2 |grad log q(X)|^2]."""
    mass = _p_weights(log_p, grid_pts, grid_w)
    q2 = np.sum(np.asarray(score_q) ** 2, axis=1)
    return float(np.sum(mass * (tau - np.asarray(tau_vals)) ** 2 * q2))


def optimal_tempering_error(tau_vals: np.ndarray, score_q: np.ndarray, log_p,
                            grid_pts: np.ndarray, grid_w: float) -> float:
    """Closed second form of the error at the optimal constant."""
    mass = _p_weights(log_p, grid_pts, grid_w)
    q2 = np.sum(np.asarray(score_q) ** 2, axis=1)
    tau_vals = np.asarray(tau_vals)
    e_q2 = float(np.sum(mass * q2))
    e_tq2 = float(np.sum(mass * tau_vals * q2))
    e_t2q2 = float(np.sum(mass * tau_vals**2 * q2))
    return e_t2q2 - e_tq2**2 / e_q2


def fisher_divergence(score_p: np.ndarray, score_q_scaled: np.ndarray, log_p,
                      grid_pts: np.ndarray, grid_w: float) -> float:
    """Direct definition-quadrature of F(p, q) from the two score fields."""
    mass = _p_weights(log_p, grid_pts, grid_w)
    diff = np.asarray(score_p) - np.asarray(score_q_scaled)
    return float(np.sum(mass * np.sum(diff**2, axis=1)))
