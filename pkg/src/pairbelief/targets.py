"""Belief targets, sampling distributions, and the Rosenblatt reparametrization.

All densities are handled unnormalized: consumers work with ``log_unnorm``
values or with samples, never with normalization constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm


class DomainError(ValueError):
    """A point lies outside the box domain."""


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box, the choice space over which beliefs are defined."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise ValueError("bounds must be 1-d vectors of equal length")
        if not np.all(lower < upper):
            raise ValueError("lower bound must be strictly below upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def d(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.all((x >= self.lower) & (x <= self.upper), axis=1)

    def require_inside(self, x: np.ndarray) -> None:
        if not np.all(self.contains(x)):
            raise DomainError("point outside the box domain")


@dataclass
class BeliefTarget:
    """A named unnormalized log-density with optional analytic score."""

    name: str
    log_unnorm: Callable[[np.ndarray], np.ndarray]
    domain: BoxDomain
    analytic_score: Optional[Callable[[np.ndarray], np.ndarray]] = None
    exact_sampler: Optional[Callable[[int, np.random.Generator], np.ndarray]] = None

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """Unnormalized log-density at points ``x`` of shape (n, d) or (d,)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        self.domain.require_inside(x2)
        out = np.asarray(self.log_unnorm(x2), dtype=float)
        return out[0] if single else out

    def score(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        if self.analytic_score is not None:
            out = np.asarray(self.analytic_score(x2), dtype=float)
        else:
            out = finite_difference_score(self.log_unnorm, x2)
        return out[0] if single else out


def finite_difference_score(log_unnorm, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, d = x.shape
    grad = np.empty((n, d))
    for j in range(d):
        xp = x.copy()
        xm = x.copy()
        xp[:, j] += h
        xm[:, j] -= h
        grad[:, j] = (log_unnorm(xp) - log_unnorm(xm)) / (2 * h)
    return grad


# ---------------------------------------------------------------------------
# Built-in targets
# ---------------------------------------------------------------------------


def _onemoon_log(x):
    r = np.linalg.norm(x, axis=1)
    return -0.5 * ((r - 2.0) / 0.2) ** 2 - 0.5 * ((x[:, 0] + 2.0) / 0.3) ** 2


def _onemoon_score(x):
    r = np.maximum(np.linalg.norm(x, axis=1), 1e-12)
    g = -((r - 2.0) / 0.04)[:, None] * (x / r[:, None])
    g[:, 0] -= (x[:, 0] + 2.0) / 0.09
    return g


def _twomoons_log(x):
    # The x1 terms form log(exp(-(x1-2)^2/0.18) + exp(-(x1+2)^2/0.18)),
    # written in a numerically stable softplus form.
    r = np.linalg.norm(x, axis=1)
    x1 = x[:, 0]
    return (
        -((r - 1.0) ** 2) / 0.08
        - ((x1 - 2.0) ** 2) / 0.18
        + np.logaddexp(0.0, -4.0 * x1 / 0.09)
    )


def _twomoons_score(x):
    r = np.maximum(np.linalg.norm(x, axis=1), 1e-12)
    x1 = x[:, 0]
    g = -(2.0 * (r - 1.0) / 0.08)[:, None] * (x / r[:, None])
    c = 4.0 / 0.09
    g[:, 0] += -2.0 * (x1 - 2.0) / 0.18 - c / (1.0 + np.exp(c * x1))
    return g


def _ring_log(x, k=1):
    r = np.linalg.norm(x, axis=1)
    comps = np.stack(
        [np.log(32.0 / np.pi) - 32.0 * (r - i - 1.0) ** 2 for i in range(1, k + 1)],
        axis=0,
    )
    return logsumexp(comps, axis=0)


def _ring_score(x):
    # single ring (k = 1)
    r = np.maximum(np.linalg.norm(x, axis=1), 1e-12)
    return (-64.0 * (r - 2.0) / r)[:, None] * x


def _gaussian_params(D: int):
    mu = 2.0 * np.array([(-1.0) ** j for j in range(1, D + 1)])
    cov = np.full((D, D), D / 15.0)
    np.fill_diagonal(cov, D / 10.0)
    return mu, cov


def _mvn_log_quad(x, mu, prec):
    diff = x - mu
    return -0.5 * np.einsum("ni,ij,nj->n", diff, prec, diff)


def _mixture_params(D: int):
    r = 3.0
    vs = [
        np.ones(D),
        -np.ones(D),
        np.array([(-1.0) ** j for j in range(1, D + 1)]),
        -np.array([(-1.0) ** j for j in range(1, D + 1)]),
    ]
    mus, covs = [], []
    for v in vs:
        mu = r * v / np.linalg.norm(v)
        mu_hat = mu / np.linalg.norm(mu)
        # orthonormal basis with mu_hat as first column
        Q = np.eye(D)
        Q[:, 0] = mu_hat
        Q, _ = np.linalg.qr(Q)
        # qr may flip the first column's sign
        if np.dot(Q[:, 0], mu_hat) < 0:
            Q[:, 0] = -Q[:, 0]
        cov = Q @ np.diag([1.0] + [0.1] * (D - 1)) @ Q.T
        mus.append(mu)
        covs.append(cov)
    return mus, covs


def _star_params():
    D, sigma2, rho = 6, 1.0, 0.9
    mu = 3.0 * np.ones(D)
    s1 = np.full((D, D), rho * sigma2)
    np.fill_diagonal(s1, sigma2)
    signs = np.array([(-1.0) ** (i + j) for i in range(D) for j in range(D)]).reshape(D, D)
    s2 = signs * rho * sigma2
    np.fill_diagonal(s2, sigma2)
    return mu, [s1, s2]


def _gaussian_mixture_log(x, mus, covs, weights):
    precs = [np.linalg.inv(c) for c in covs]
    logdets = [np.linalg.slogdet(c)[1] for c in covs]
    comps = np.stack(
        [
            np.log(w) - 0.5 * ld + _mvn_log_quad(x, mu, prec)
            for w, ld, mu, prec in zip(weights, logdets, mus, precs)
        ],
        axis=0,
    )
    return logsumexp(comps, axis=0)


def _gaussian_mixture_score(x, mus, covs, weights):
    precs = [np.linalg.inv(c) for c in covs]
    logdets = [np.linalg.slogdet(c)[1] for c in covs]
    logw = np.stack(
        [
            np.log(w) - 0.5 * ld + _mvn_log_quad(x, mu, prec)
            for w, ld, mu, prec in zip(weights, logdets, mus, precs)
        ],
        axis=0,
    )
    post = np.exp(logw - logsumexp(logw, axis=0, keepdims=True))
    grad = np.zeros_like(x)
    for k, (mu, prec) in enumerate(zip(mus, precs)):
        grad += post[k][:, None] * (-(x - mu) @ prec)
    return grad


def _gaussian_mixture_sampler(mus, covs, weights, domain):
    mus = [np.asarray(m) for m in mus]
    chols = [np.linalg.cholesky(c) for c in covs]
    weights = np.asarray(weights, dtype=float)

    def sample(n, rng):
        out = np.empty((0, domain.d))
        while out.shape[0] < n:
            m = max(n - out.shape[0], 16)
            ks = rng.choice(len(mus), size=m, p=weights / weights.sum())
            z = rng.standard_normal((m, domain.d))
            pts = np.stack([mus[k] + chols[k] @ z[i] for i, k in enumerate(ks)])
            pts = pts[domain.contains(pts)]
            out = np.vstack([out, pts])
        return out[:n]

    return sample


_REGISTRY: dict[str, Callable[[], BeliefTarget]] = {}


def register_target(name: str, factory: Callable[[], BeliefTarget]) -> None:
    """Registration hook for programmatic targets."""
    _REGISTRY[name.lower()] = factory


def target_names() -> list[str]:
    return sorted(_REGISTRY)


def get_target(name: str) -> BeliefTarget:
    key = name.lower()
    if key not in _REGISTRY:
        raise KeyError(f"unknown target {name!r}; known: {target_names()}")
    return _REGISTRY[key]()


def _box(d: int, half: float = 6.0) -> BoxDomain:
    return BoxDomain(-half * np.ones(d), half * np.ones(d))


def _make_builtin(name: str) -> BeliefTarget:
    # 2D boxes are the tightest symmetric boxes holding > 0.999 of each
    # target's mass; with a uniform candidate density, a larger box spreads
    # the comparison budget over empty space and the winner density loses
    # the contrast the de-tempering step has to amplify.
    if name == "onemoon2d":
        return BeliefTarget("Onemoon2D", _onemoon_log, _box(2, 3.0), _onemoon_score)
    if name == "twomoons2d":
        return BeliefTarget("Twomoons2D", _twomoons_log, _box(2, 3.0), _twomoons_score)
    if name == "ring2d":
        return BeliefTarget("Ring2D", _ring_log, _box(2, 3.0), _ring_score)
    if name in ("gaussian4d", "gaussian16d"):
        D = 4 if name == "gaussian4d" else 16
        mu, cov = _gaussian_params(D)
        prec = np.linalg.inv(cov)
        dom = _box(D, 6.0 if D == 4 else 8.0)
        chol = np.linalg.cholesky(cov)

        def sample(n, rng, mu=mu, chol=chol, dom=dom):
            out = np.empty((0, D))
            while out.shape[0] < n:
                m = max(n - out.shape[0], 16)
                pts = mu + rng.standard_normal((m, D)) @ chol.T
                pts = pts[dom.contains(pts)]
                out = np.vstack([out, pts])
            return out[:n]

        return BeliefTarget(
            f"Gaussian{D}D",
            lambda x, mu=mu, prec=prec: _mvn_log_quad(x, mu, prec),
            dom,
            lambda x, mu=mu, prec=prec: -(x - mu) @ prec,
            exact_sampler=sample,
        )
    if name in ("mixturegaussians4d", "mixturegaussians10d"):
        D = 4 if name == "mixturegaussians4d" else 10
        mus, covs = _mixture_params(D)
        w = [0.25] * 4
        # same tightest-0.999-mass rule as the 2D boxes; it matters even more
        # here because the box volume grows with the power of the dimension
        dom = _box(D, 3.5) if D == 4 else _box(D)
        return BeliefTarget(
            f"Mixturegaussians{D}D",
            lambda x, mus=mus, covs=covs, w=w: _gaussian_mixture_log(x, mus, covs, w),
            dom,
            lambda x, mus=mus, covs=covs, w=w: _gaussian_mixture_score(x, mus, covs, w),
            exact_sampler=_gaussian_mixture_sampler(mus, covs, w, dom),
        )
    if name == "stargaussian6d":
        mu, covs = _star_params()
        mus = [mu, mu]
        w = [0.5, 0.5]
        dom = _box(6)
        return BeliefTarget(
            "Stargaussian6D",
            lambda x, mus=mus, covs=covs, w=w: _gaussian_mixture_log(x, mus, covs, w),
            dom,
            lambda x, mus=mus, covs=covs, w=w: _gaussian_mixture_score(x, mus, covs, w),
            exact_sampler=_gaussian_mixture_sampler(mus, covs, w, dom),
        )
    raise KeyError(name)


for _name in (
    "onemoon2d",
    "twomoons2d",
    "ring2d",
    "gaussian4d",
    "gaussian16d",
    "mixturegaussians4d",
    "mixturegaussians10d",
    "stargaussian6d",
):
    register_target(_name, lambda _name=_name: _make_builtin(_name))


# ---------------------------------------------------------------------------
# Sampling distributions and the Rosenblatt map
# ---------------------------------------------------------------------------

_GRID_POINTS = 4096


@dataclass
class SamplingDist:
    """Candidate-generating distribution, truncated to its box domain.

    kind: "uniform-box", "diagonal-gaussian", or "gaussian-mixture".
    params: kind-specific; means/variances for the Gaussian kinds, and
    weights/means/covs (full covariances allowed) for the mixture.
    """

    kind: str
    domain: BoxDomain
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("uniform-box", "diagonal-gaussian", "gaussian-mixture"):
            raise ValueError(f"unknown sampling distribution kind {self.kind!r}")
        if self.kind == "diagonal-gaussian":
            self.params["mean"] = np.asarray(self.params["mean"], dtype=float)
            self.params["var"] = np.asarray(self.params["var"], dtype=float)
        if self.kind == "gaussian-mixture":
            self.params["weights"] = np.asarray(self.params["weights"], dtype=float)
            self.params["means"] = [np.asarray(m, dtype=float) for m in self.params["means"]]
            self.params["covs"] = [np.asarray(c, dtype=float) for c in self.params["covs"]]
        self._cond_cache: dict = {}

    # -- densities ---------------------------------------------------------

    def logpdf_unnorm(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "uniform-box":
            return np.zeros(x.shape[0])
        if self.kind == "diagonal-gaussian":
            mu, var = self.params["mean"], self.params["var"]
            return -0.5 * np.sum((x - mu) ** 2 / var, axis=1)
        return _gaussian_mixture_log(
            x, self.params["means"], self.params["covs"], self.params["weights"]
        )

    def pdf(self, x: np.ndarray) -> np.ndarray:
        """Normalized pdf on the truncated domain (normalizer by quadrature for d<=2,
        via per-dimension truncation factors for the analytic kinds)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        vals = np.exp(self.logpdf_unnorm(x))
        vals = np.where(self.domain.contains(x), vals, 0.0)
        return vals / self._norm_const()

    def _norm_const(self) -> float:
        if self.kind == "uniform-box":
            return self.domain.volume
        if self.kind == "diagonal-gaussian":
            mu, var = self.params["mean"], self.params["var"]
            sd = np.sqrt(var)
            # unnormalized kernel integrates to prod sqrt(2 pi var) * truncation mass
            mass = norm.cdf(self.domain.upper, mu, sd) - norm.cdf(self.domain.lower, mu, sd)
            return float(np.prod(np.sqrt(2 * np.pi * var) * mass))
        # mixture: Monte Carlo free normalizer via quadrature on a per-dim grid is
        # costly in d > 2; use the mixture's own normalization times box mass
        # estimated from the conditional-grid construction.
        return self._mixture_norm_const()

    def _mixture_norm_const(self) -> float:
        key = "normconst"
        if key not in self._cond_cache:
            w = self.params["weights"]
            total = 0.0
            for wk, mu, cov in zip(w, self.params["means"], self.params["covs"]):
                ld = np.linalg.slogdet(cov)[1]
                total += wk * np.exp(0.5 * ld) * (2 * np.pi) ** (self.domain.d / 2)
            # truncation mass by Monte Carlo with a fixed internal seed
            rng = np.random.default_rng(123456789)
            chols = [np.linalg.cholesky(c) for c in self.params["covs"]]
            m = 200_000
            ks = rng.choice(len(w), size=m, p=w / w.sum())
            z = rng.standard_normal((m, self.domain.d))
            pts = np.stack(
                [self.params["means"][k] + chols[k] @ z[i] for i, k in enumerate(ks)]
            )
            frac = float(np.mean(self.domain.contains(pts)))
            self._cond_cache[key] = total * frac / w.sum()
        return self._cond_cache[key]

    # -- sampling ----------------------------------------------------------

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        d = self.domain.d
        if n == 0:
            return np.empty((0, d))
        if self.kind == "uniform-box":
            u = rng.random((n, d))
            return self.domain.lower + u * self.domain.widths
        if self.kind == "diagonal-gaussian":
            mu, sd = self.params["mean"], np.sqrt(self.params["var"])
            out = np.empty((0, d))
            while out.shape[0] < n:
                m = max(n - out.shape[0], 16)
                pts = mu + sd * rng.standard_normal((m, d))
                pts = pts[self.domain.contains(pts)]
                out = np.vstack([out, pts])
            return out[:n]
        sampler = _gaussian_mixture_sampler(
            self.params["means"], self.params["covs"], self.params["weights"], self.domain
        )
        return sampler(n, rng)

    # -- Rosenblatt map ----------------------------------------------------

    def rosenblatt_forward(self, x: np.ndarray) -> np.ndarray:
        """Map domain points to the unit hypercube via conditional CDFs."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        self.domain.require_inside(x2)
        lo, hi = self.domain.lower, self.domain.upper
        if self.kind == "uniform-box":
            u = (x2 - lo) / self.domain.widths
        elif self.kind == "diagonal-gaussian":
            mu, sd = self.params["mean"], np.sqrt(self.params["var"])
            a = norm.cdf(lo, mu, sd)
            b = norm.cdf(hi, mu, sd)
            u = (norm.cdf(x2, mu, sd) - a) / (b - a)
        else:
            u = self._mixture_forward(x2)
        u = np.clip(u, 0.0, 1.0)
        return u[0] if single else u

    def rosenblatt_inverse(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        single = u.ndim == 1
        u2 = np.atleast_2d(u)
        if np.any((u2 < 0) | (u2 > 1)):
            raise DomainError("unit-cube point outside [0, 1]^d")
        lo, hi = self.domain.lower, self.domain.upper
        if self.kind == "uniform-box":
            x = lo + u2 * self.domain.widths
        elif self.kind == "diagonal-gaussian":
            mu, sd = self.params["mean"], np.sqrt(self.params["var"])
            a = norm.cdf(lo, mu, sd)
            b = norm.cdf(hi, mu, sd)
            x = norm.ppf(a + u2 * (b - a), mu, sd)
            x = np.clip(x, lo, hi)
        else:
            x = self._mixture_inverse(u2)
        return x[0] if single else x

    def _mixture_cond_components(self, x_prev: np.ndarray, j: int):
        """Posterior weights, conditional means and variances of dimension j
        given the first j coordinates ``x_prev`` (shape (n, j))."""
        w = self.params["weights"]
        n = x_prev.shape[0]
        logw = np.zeros((len(w), n))
        means = np.empty((len(w), n))
        vars_ = np.empty(len(w))
        for k, (wk, mu, cov) in enumerate(
            zip(w, self.params["means"], self.params["covs"])
        ):
            if j == 0:
                logw[k] = np.log(wk)
                means[k] = mu[0]
                vars_[k] = cov[0, 0]
                continue
            A = cov[:j, :j]
            b = cov[:j, j]
            mu_p = mu[:j]
            sol = np.linalg.solve(A, (x_prev - mu_p).T)  # (j, n)
            means[k] = mu[j] + b @ sol
            vars_[k] = cov[j, j] - b @ np.linalg.solve(A, b)
            sign, ld = np.linalg.slogdet(A)
            quad = np.einsum("jn,nj->n", sol, (x_prev - mu_p))
            logw[k] = np.log(wk) - 0.5 * ld - 0.5 * quad
        post = np.exp(logw - logsumexp(logw, axis=0, keepdims=True))
        return post, means, vars_

    def _mixture_cond_cdf_grid(self, x_prev: np.ndarray, j: int):
        """Conditional CDF evaluated on the per-dimension grid by numerically
        integrating the conditional density (monotone linear interpolation is
        then applied by the callers)."""
        lo, hi = self.domain.lower[j], self.domain.upper[j]
        grid = np.linspace(lo, hi, _GRID_POINTS)
        post, means, vars_ = self._mixture_cond_components(x_prev, j)
        sd = np.sqrt(vars_)
        dens = np.zeros((x_prev.shape[0], _GRID_POINTS))
        for k in range(post.shape[0]):
            dens += post[k][:, None] * norm.pdf(grid[None, :], means[k][:, None], sd[k])
        cdf = np.concatenate(
            [np.zeros((dens.shape[0], 1)), np.cumsum((dens[:, 1:] + dens[:, :-1]) / 2, axis=1)],
            axis=1,
        ) * (grid[1] - grid[0])
        cdf /= cdf[:, -1:]
        return grid, np.maximum.accumulate(cdf, axis=1)

    def _mixture_forward(self, x: np.ndarray) -> np.ndarray:
        n, d = x.shape
        u = np.empty_like(x)
        for j in range(d):
            grid, cdf = self._mixture_cond_cdf_grid(x[:, :j], j)
            for i in range(n):
                u[i, j] = np.interp(x[i, j], grid, cdf[i])
        return u

    def _mixture_inverse(self, u: np.ndarray) -> np.ndarray:
        n, d = u.shape
        x = np.empty_like(u)
        for j in range(d):
            grid, cdf = self._mixture_cond_cdf_grid(x[:, :j], j)
            for i in range(n):
                x[i, j] = np.interp(u[i, j], cdf[i], grid)
        return x


def uniform_box(domain: BoxDomain) -> SamplingDist:
    return SamplingDist("uniform-box", domain)


# ---------------------------------------------------------------------------
# Reference sampling
# ---------------------------------------------------------------------------


def reference_sample(target: BeliefTarget, n: int, seed: int) -> np.ndarray:
    """Approximate draws from the normalized target.

    Analytic targets sample directly (with rejection to the box); others use
    Metropolis-adjusted Langevin with the analytic score, 10x thinning and a
    1000-step burn-in. Deterministic given the seed.
    """
    rng = np.random.default_rng(seed)
    d = target.domain.d
    if n == 0:
        return np.empty((0, d))
    if target.exact_sampler is not None:
        return target.exact_sampler(n, rng)
    return _mala_sample(target, n, rng, thin=10, burn_in=1000)


def _mala_sample(target, n, rng, thin=10, burn_in=1000, step=0.01):
    d = target.domain.d
    n_chains = min(n, 256)
    lo, hi = target.domain.lower, target.domain.upper
    x = lo + rng.random((n_chains, d)) * (hi - lo)
    logp = target.log_density(x)
    grad = target.score(x)
    out = []
    needed = int(np.ceil(n / n_chains))
    total = burn_in + thin * needed
    for it in range(total):
        noise = rng.standard_normal((n_chains, d))
        prop = x + step * grad + np.sqrt(2 * step) * noise
        prop = np.clip(prop, lo, hi)
        logp_prop = target.log_density(prop)
        grad_prop = target.score(prop)
        fwd = -np.sum((prop - x - step * grad) ** 2, axis=1) / (4 * step)
        bwd = -np.sum((x - prop - step * grad_prop) ** 2, axis=1) / (4 * step)
        log_alpha = logp_prop - logp + bwd - fwd
        accept = np.log(rng.random(n_chains)) < log_alpha
        x = np.where(accept[:, None], prop, x)
        logp = np.where(accept, logp_prop, logp)
        grad = np.where(accept[:, None], grad_prop, grad)
        if it >= burn_in and (it - burn_in) % thin == thin - 1:
            out.append(x.copy())
    return np.concatenate(out, axis=0)[:n]
