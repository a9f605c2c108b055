"""Acceptance gate: end-to-end benchmarks plus theory oracles.

Each test covers one numbered acceptance criterion and prints a single
pass/fail line with the measured values. The benchmark fixtures run the full
pipeline (simulate -> score model -> ratio net -> tempering field -> scaled
Langevin sampling) at full scale; stage outputs are cached under
``runs/acceptance`` so re-runs are cheap.

Run with ``pytest tests/test_acceptance.py -v`` (expect ~1h cold, CPU).
"""

import time

import numpy as np
import pytest

from pairbelief.comparisons import RUMConfig, UNIT_VARIANCE_S
from pairbelief.density import DensityEvalConfig, log_density_ode, model_log_density
from pairbelief.pipeline import ExperimentConfig, run_experiment
from pairbelief.sampling import ald_run, fast_2d_preset, marginal_score_fn, scaled_ald_run
from pairbelief.scoremodel import JointScoreNet, ScoreModelConfig, dsm_loss_and_grads
from pairbelief.targets import BoxDomain, SamplingDist, get_target
from pairbelief.tempering import (
    analytic_bt_field,
    analytic_exp_field,
    constant_tempering_error,
    fisher_divergence,
    grad_log_mwd_fd,
    midpoint_grid,
    mwd_quadrature,
    optimal_constant_tau,
    optimal_tempering_error,
)

S = UNIT_VARIANCE_S
ACC_DIR = "runs/acceptance"
SEEDS = (0, 1, 2)


def _check(num: int, ok: bool, detail: str) -> None:
    print(f"\ncriterion {num:02d}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num:02d}: {detail}"


def _run(**kw):
    t0 = time.perf_counter()
    res = run_experiment(ExperimentConfig(out_dir=ACC_DIR, **kw))
    return res, time.perf_counter() - t0


def _mean(vals):
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# Full-scale pipeline runs (shared across criteria; stage caches on disk)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def onemoon_runs():
    return [_run(target="onemoon2d", n_comparisons=2000, seed=s) for s in SEEDS]


@pytest.fixture(scope="module")
def twomoons_runs():
    return [_run(target="twomoons2d", n_comparisons=2000, seed=s) for s in SEEDS]


@pytest.fixture(scope="module")
def twomoons_winners_only_runs():
    return [_run(target="twomoons2d", n_comparisons=2000, seed=s, mask_prob=1.0)
            for s in SEEDS]


@pytest.fixture(scope="module")
def ring_runs():
    return [_run(target="ring2d", n_comparisons=2000, seed=s) for s in SEEDS]


@pytest.fixture(scope="module")
def ring_tau_star():
    """Optimal constant tempering for Ring2D from the exact quadrature theory.

    tau(x) by quadrature, winner-density score as belief score / tau (the two
    are collinear), then the variance-weighted average.
    """
    target = get_target("ring2d")
    pts, w = midpoint_grid(target.domain, 128)
    tau_vals = analytic_bt_field(target.log_density, S, pts, pts, w)
    score_p = target.score(pts)
    score_q = score_p / tau_vals[:, None]
    return optimal_constant_tau(tau_vals, score_q, target.log_density, pts, w)


@pytest.fixture(scope="module")
def ring_constant_runs(ring_tau_star):
    return [_run(target="ring2d", n_comparisons=2000, seed=s,
                 constant_tau=ring_tau_star) for s in SEEDS]


@pytest.fixture(scope="module")
def mix4d_runs():
    return [_run(target="mixturegaussians4d", n_comparisons=4000, seed=s)
            for s in SEEDS]


# ---------------------------------------------------------------------------
# Criteria 1-4: benchmark quality and runtime
# ---------------------------------------------------------------------------


def test_criterion_01_onemoon_quality(onemoon_runs):
    w = _mean([r.report.wasserstein for r, _ in onemoon_runs])
    tv = _mean([r.report.mmtv for r, _ in onemoon_runs])
    tmax = max(t for _, t in onemoon_runs)
    ok = w <= 0.8 and tv <= 0.35 and tmax <= 1800
    _check(1, ok, f"onemoon2d mean W={w:.3f} (<=0.8), mean MMTV={tv:.3f} (<=0.35), "
                  f"max seed time {tmax:.0f}s (<=1800)")


def _twomoons_modes():
    target = get_target("twomoons2d")
    xs = np.linspace(-2.99, 2.99, 481)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    lp = target.log_density(pts)
    right = pts[pts[:, 0] > 0][np.argmax(lp[pts[:, 0] > 0])]
    left = pts[pts[:, 0] < 0][np.argmax(lp[pts[:, 0] < 0])]
    return left, right


def test_criterion_02_twomoons_quality(twomoons_runs):
    tv = _mean([r.report.mmtv for r, _ in twomoons_runs])
    left, right = _twomoons_modes()
    fracs = {"left": [], "right": []}
    for res, _ in twomoons_runs:
        for name, center in (("left", left), ("right", right)):
            d = np.linalg.norm(res.samples - center, axis=1)
            fracs[name].append(float(np.mean(d < 1.0)))
    fl, fr = _mean(fracs["left"]), _mean(fracs["right"])
    ok = tv <= 0.30 and fl >= 0.20 and fr >= 0.20
    _check(2, ok, f"twomoons2d mean MMTV={tv:.3f} (<=0.30), mode mass "
                  f"left={fl:.2f} right={fr:.2f} (each >=0.20, radius 1 around "
                  f"({left[0]:.2f},{left[1]:.2f})/({right[0]:.2f},{right[1]:.2f}))")


def test_criterion_03_ring_field_beats_constant(ring_runs, ring_constant_runs,
                                                ring_tau_star):
    w_field = _mean([r.report.wasserstein for r, _ in ring_runs])
    w_const = _mean([r.report.wasserstein for r, _ in ring_constant_runs])
    ok = w_field <= 0.7 and w_field < w_const
    _check(3, ok, f"ring2d mean W={w_field:.3f} (<=0.7) with learned field vs "
                  f"{w_const:.3f} with optimal constant tau*={ring_tau_star:.3f}")


def test_criterion_04_mixture4d_quality(mix4d_runs):
    tv = _mean([r.report.mmtv for r, _ in mix4d_runs])
    tmax = max(t for _, t in mix4d_runs)
    ok = tv <= 0.35 and tmax <= 3600
    _check(4, ok, f"mixturegaussians4d (n=4000) mean MMTV={tv:.3f} (<=0.35), "
                  f"max seed time {tmax:.0f}s (<=3600)")


# ---------------------------------------------------------------------------
# Criteria 5-9: tempering-field theory oracles
# ---------------------------------------------------------------------------


def _trunc_gauss_1d():
    dom = BoxDomain(np.array([-3.0]), np.array([3.0]))
    pts, w = midpoint_grid(dom, 4096)
    log_p = lambda x: -0.5 * np.atleast_2d(x)[:, 0] ** 2  # noqa: E731
    return dom, pts, w, log_p


def test_criterion_05_bt_field_uniform_and_collinear():
    # uniform belief: the Bradley-Terry field is exactly 2s
    dom = BoxDomain(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    pts, w = midpoint_grid(dom, 64)
    unif = lambda x: np.zeros(np.atleast_2d(x).shape[0])  # noqa: E731
    x = np.array([[0.3, -0.2], [0.0, 0.0], [-0.9, 0.5]])
    tau_u = analytic_bt_field(unif, S, x, pts, w)
    err_u = float(np.max(np.abs(tau_u - 2 * S)))

    # collinearity on twomoons2d: grad log p = tau(x) grad log p_w, with
    # grad log p_w from finite differences of the quadrature winner density
    target = get_target("twomoons2d")
    gpts, gw = midpoint_grid(target.domain, 128)
    xs = np.linspace(-2.9, 2.9, 60)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    grid60 = np.column_stack([gx.ravel(), gy.ravel()])
    rum = RUMConfig(model="bradley-terry", s=S)
    g_w = grad_log_mwd_fd(target.log_density, rum, grid60, gpts, gw,
                          target.domain.volume, h=4e-4)
    g_p = target.score(grid60)
    cos = np.sum(g_p * g_w, axis=1) / (
        np.linalg.norm(g_p, axis=1) * np.linalg.norm(g_w, axis=1))
    angle = float(np.max(np.arccos(np.clip(cos, -1.0, 1.0))))
    tau_grid = analytic_bt_field(target.log_density, S, grid60, gpts, gw)
    ratio = np.linalg.norm(g_p, axis=1) / np.linalg.norm(g_w, axis=1)
    rel = float(np.max(np.abs(ratio - tau_grid) / tau_grid))

    ok = err_u < 1e-6 and angle < 1e-3 and rel < 1e-4
    _check(5, ok, f"BT field: uniform |tau-2s|={err_u:.2e} (<1e-6), twomoons "
                  f"60x60 max angle={angle:.2e} rad (<1e-3), norm-ratio rel "
                  f"err={rel:.2e} (<1e-4)")


def test_criterion_06_exp_field_uniform_and_collinear():
    dom = BoxDomain(np.array([-1.0]), np.array([1.0]))
    pts, w = midpoint_grid(dom, 4096)
    unif = lambda x: np.zeros(np.atleast_2d(x).shape[0])  # noqa: E731
    x = np.array([[0.2], [0.0], [-0.7]])
    tau_u = analytic_exp_field(unif, S, x, pts, w)
    err_u = float(np.max(np.abs(tau_u - 1.0 / S)))

    # 1D truncated normal: collinearity reduces to sign + magnitude agreement
    dom, gpts, gw, log_p = _trunc_gauss_1d()
    rum = RUMConfig(model="exponential", s=S)
    xq = np.linspace(-2.5, 2.5, 40)[:, None]
    xq = xq[np.abs(xq[:, 0]) > 0.05]  # the score vanishes at the mode
    g_w = grad_log_mwd_fd(log_p, rum, xq, gpts, gw, dom.volume)[:, 0]
    g_p = -xq[:, 0]
    tau = analytic_exp_field(log_p, S, xq, gpts, gw)
    sign_ok = bool(np.all(np.sign(g_p) == np.sign(g_w)))
    rel = float(np.max(np.abs(g_p / g_w - tau) / tau))
    ok = err_u < 1e-6 and sign_ok and rel < 1e-4
    _check(6, ok, f"exponential field: uniform |tau-1/s|={err_u:.2e} (<1e-6), "
                  f"1D collinearity signs {'ok' if sign_ok else 'BAD'}, ratio "
                  f"rel err={rel:.2e} (<1e-4)")


def test_criterion_07_optimal_constant_matches_grid_search():
    dom, pts, w, log_p = _trunc_gauss_1d()
    tau_vals = analytic_bt_field(log_p, S, pts, pts, w)
    score_p = -pts
    score_q = score_p / tau_vals[:, None]
    tau_star = optimal_constant_tau(tau_vals, score_q, log_p, pts, w)

    grid = np.linspace(0.5, 6.0, 5501)
    errs = [constant_tempering_error(tau_vals, score_q, log_p, t, pts, w)
            for t in grid]
    tau_grid = float(grid[int(np.argmin(errs))])
    rel = abs(tau_grid - tau_star) / tau_star

    const_vals = np.full_like(tau_vals, 1.7)
    tau_c = optimal_constant_tau(const_vals, score_q, log_p, pts, w)
    exact = abs(tau_c - 1.7)
    ok = rel < 0.01 and exact < 1e-12
    _check(7, ok, f"optimal constant tau*={tau_star:.4f} vs grid argmin "
                  f"{tau_grid:.4f} (rel {rel:.2e} < 1%); constant field "
                  f"recovers c exactly (|diff|={exact:.1e})")


def test_criterion_08_error_formulas_agree():
    dom, pts, w, log_p = _trunc_gauss_1d()
    tau_vals = analytic_bt_field(log_p, S, pts, pts, w)
    score_p = -pts
    score_q = score_p / tau_vals[:, None]
    tau_star = optimal_constant_tau(tau_vals, score_q, log_p, pts, w)

    worst = 0.0
    for tau in (0.6 * tau_star, tau_star, 1.8 * tau_star):
        direct = fisher_divergence(score_p, tau * score_q, log_p, pts, w)
        weighted = constant_tempering_error(tau_vals, score_q, log_p, tau, pts, w)
        worst = max(worst, abs(direct - weighted) / max(direct, 1e-300))
    closed = optimal_tempering_error(tau_vals, score_q, log_p, pts, w)
    at_star = constant_tempering_error(tau_vals, score_q, log_p, tau_star, pts, w)
    worst = max(worst, abs(closed - at_star) / max(at_star, 1e-300))
    ok = worst < 1e-3
    _check(8, ok, f"tempering-error formulas (definition quadrature vs weighted "
                  f"form vs closed form at tau*) agree, worst rel diff "
                  f"{worst:.2e} (<1e-3)")


def test_criterion_09_scale_invariance():
    dom, pts, w, log_p = _trunc_gauss_1d()
    rng = np.random.default_rng(7)
    x = rng.uniform(-2.5, 2.5, size=(20, 1))

    bt = analytic_bt_field(log_p, S, x, pts, w)
    bt_ref = S * analytic_bt_field(lambda y: log_p(y) / S, 1.0, x, pts, w)
    err_bt = float(np.max(np.abs(bt - bt_ref)))

    ex = analytic_exp_field(log_p, S, x, pts, w)
    ex_ref = (1.0 / S) * analytic_exp_field(lambda y: S * log_p(y), 1.0, x, pts, w)
    err_ex = float(np.max(np.abs(ex - ex_ref)))
    ok = err_bt < 1e-6 and err_ex < 1e-6
    _check(9, ok, f"scale invariance at 20 random points: BT max |diff|="
                  f"{err_bt:.2e}, exponential {err_ex:.2e} (both <1e-6)")


# ---------------------------------------------------------------------------
# Criteria 10-11: gradients and density evaluation
# ---------------------------------------------------------------------------


def test_criterion_10_gradients_and_density_eval(onemoon_runs):
    # (a) training-loss parameter gradients vs central finite differences
    cfg = ScoreModelConfig(d=2, hidden=8, iterations=1, seed=5)
    model = JointScoreNet(cfg)
    rng = np.random.default_rng(3)
    wv, lv = rng.random((8, 2)), rng.random((8, 2))
    _, grads = dsm_loss_and_grads(model, wv, lv, np.random.default_rng(11))
    h = 1e-6
    params = model.net.parameters()
    worst_grad = 0.0
    for k in range(len(params)):
        idx = np.unravel_index(np.argmax(np.abs(grads[k])), grads[k].shape)
        orig = params[k][idx]
        params[k][idx] = orig + h
        model.net.set_parameters(params)
        up, _ = dsm_loss_and_grads(model, wv, lv, np.random.default_rng(11))
        params[k][idx] = orig - h
        model.net.set_parameters(params)
        dn, _ = dsm_loss_and_grads(model, wv, lv, np.random.default_rng(11))
        params[k][idx] = orig
        model.net.set_parameters(params)
        numeric = (up - dn) / (2 * h)
        worst_grad = max(worst_grad,
                         abs(grads[k][idx] - numeric) / (abs(numeric) + 1e-10))

    # (b) density evaluation with the analytic score of a standard 2D normal
    def normal_score(x, sigma, u):
        return -x / (1.0 + sigma**2)

    dcfg = DensityEvalConfig(sigma_min=0.01, sigma_max=10.0)
    lp = log_density_ode(normal_score, np.zeros((1, 2)), dcfg)[0]
    err_lp = abs(lp - (-np.log(2 * np.pi)))

    # (c) a trained model's density integrates to ~1 over the unit cube
    trained = onemoon_runs[0][0].model
    g = (np.arange(48) + 0.5) / 48.0
    gx, gy = np.meshgrid(g, g, indexing="ij")
    upts = np.column_stack([gx.ravel(), gy.ravel()])
    mass = float(np.sum(np.exp(model_log_density(trained, upts))) / 48.0**2)

    ok = worst_grad < 1e-4 and err_lp < 0.05 and abs(mass - 1.0) < 0.1
    _check(10, ok, f"gradient check worst rel err={worst_grad:.2e} (<1e-4); "
                   f"analytic 2D normal log-density err={err_lp:.3f} (<0.05); "
                   f"trained-model mass={mass:.3f} (1 +/- 0.1)")


def test_criterion_11_winner_density_reparametrization_invariance():
    """The winner density transforms as a pushforward under the candidate
    distribution's probability integral transform: computing it in uniform
    coordinates and mapping back must match the direct quadrature."""
    dom = BoxDomain(np.array([-3.0]), np.array([3.0]))
    lam = SamplingDist("diagonal-gaussian", dom,
                       {"mean": [0.5], "var": [1.0]})
    log_p = lambda x: -0.5 * (np.atleast_2d(x)[:, 0] + 0.8) ** 2  # noqa: E731
    rum = RUMConfig(model="bradley-terry", s=S)

    xpts, xw = midpoint_grid(dom, 4096)
    x_eval = np.linspace(-2.8, 2.8, 200)[:, None]
    pw_x = mwd_quadrature(log_p, rum, x_eval, xpts, xw, dom.volume,
                          lam_pdf=lam.pdf)

    # uniform coordinates u = Lambda(x); belief pulled back through the
    # inverse transform, candidates uniform on [0, 1]
    udom = BoxDomain(np.array([0.0]), np.array([1.0]))
    upts, uw = midpoint_grid(udom, 4096)
    log_p_u = lambda u: log_p(lam.rosenblatt_inverse(np.atleast_2d(u)))  # noqa: E731
    u_eval = lam.rosenblatt_forward(x_eval)
    pw_u = mwd_quadrature(log_p_u, rum, u_eval, upts, uw, 1.0)

    # pushforward back to x-space: p_w(x) = p_w_u(Lambda(x)) * lambda(x)
    diff = float(np.max(np.abs(pw_u * lam.pdf(x_eval) - pw_x)))
    ok = diff < 1e-3
    _check(11, ok, f"winner density pushforward invariance (1D Gaussian "
                   f"candidates): max |diff|={diff:.2e} (<1e-3)")


# ---------------------------------------------------------------------------
# Criteria 12-13: ablation and sampler sanity
# ---------------------------------------------------------------------------


def test_criterion_12_joint_beats_winners_only(twomoons_runs,
                                               twomoons_winners_only_runs):
    tv_joint = _mean([r.report.mmtv for r, _ in twomoons_runs])
    tv_wo = _mean([r.report.mmtv for r, _ in twomoons_winners_only_runs])
    ok = tv_joint < tv_wo
    _check(12, ok, f"twomoons2d mean MMTV over {len(SEEDS)} seeds: joint "
                   f"training {tv_joint:.3f} < winners-only {tv_wo:.3f}")


def test_criterion_13_langevin_sampler_sanity(onemoon_runs):
    # annealed Langevin on an analytic standard normal score
    def normal_score(x, sigma, rng):
        return -x / (1.0 + sigma**2)

    samples = ald_run(normal_score, fast_2d_preset(), n_chains=4000, d=1, seed=0)
    m, v = float(np.mean(samples)), float(np.var(samples))

    # with tau identically 1 the scaled sampler reproduces the plain one bitwise
    model = onemoon_runs[0][0].model
    ones = lambda x: np.ones(np.atleast_2d(x).shape[0])  # noqa: E731
    cfg = fast_2d_preset()
    a = scaled_ald_run(model, ones, cfg, n_chains=64, seed=9)
    b = ald_run(marginal_score_fn(model), cfg, n_chains=64, d=2, seed=9,
                reflect_box=(0.0, 1.0))
    bitwise = bool(np.array_equal(a, b))

    ok = abs(m) < 0.05 and 0.9 <= v <= 1.1 and bitwise
    _check(13, ok, f"ALD on N(0,1): mean={m:+.3f} (|m|<0.05), var={v:.3f} "
                   f"(in [0.9,1.1]); tau==1 scaled run bitwise equals plain: "
                   f"{bitwise}")
