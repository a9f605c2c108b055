import numpy as np
import pytest

from pairbelief.nn import (
    Adam,
    DenseNet,
    OptimizerConfig,
    PowerFunctionEMA,
    TrainingError,
    gamma_from_sigma_ref,
    load_checkpoint,
    save_checkpoint,
    silu,
)


def numeric_param_grads(net, x, flags, cotangent, h=1e-6):
    grads = []
    params = net.parameters()
    for k, p in enumerate(params):
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            up = float(np.sum(net.forward(x, flags) * cotangent))
            p[idx] = orig - h
            dn = float(np.sum(net.forward(x, flags) * cotangent))
            p[idx] = orig
            g[idx] = (up - dn) / (2 * h)
        grads.append(g)
    return grads


class TestDenseNet:
    def test_shapes(self):
        net = DenseNet([3, 8, 8, 2])
        out = net.forward(np.zeros((5, 3)))
        assert out.shape == (5, 2)

    def test_silu(self):
        assert silu(np.array([0.0]))[0] == 0.0
        assert silu(np.array([10.0]))[0] == pytest.approx(10.0, abs=1e-3)

    def test_backward_matches_finite_differences(self, rng):
        net = DenseNet([3, 8, 8, 2], n_flags=2, embed_width=4, seed=1)
        x = rng.standard_normal((6, 3))
        flags = rng.integers(0, 2, size=(6, 2)).astype(float)
        cot = rng.standard_normal((6, 2))
        cache = {}
        net.forward(x, flags, cache=cache)
        analytic, input_grad = net.backward(cache, cot)
        numeric = numeric_param_grads(net, x, flags, cot)
        for a, n in zip(analytic, numeric):
            assert np.max(np.abs(a - n)) / (np.max(np.abs(n)) + 1e-12) < 1e-4

        # input gradient against finite differences too
        h = 1e-6
        num_in = np.zeros_like(x)
        for i in range(x.shape[0]):
            for j in range(x.shape[1]):
                xp, xm = x.copy(), x.copy()
                xp[i, j] += h
                xm[i, j] -= h
                num_in[i, j] = np.sum((net.forward(xp, flags) - net.forward(xm, flags)) * cot) / (2 * h)
        assert np.max(np.abs(input_grad - num_in)) / np.max(np.abs(num_in)) < 1e-4

    def test_flag_embedding_changes_output(self, rng):
        net = DenseNet([2, 8, 8, 1], n_flags=1, embed_width=2, seed=0)
        x = rng.standard_normal((4, 2))
        a = net.forward(x, np.zeros((4, 1)))
        b = net.forward(x, np.ones((4, 1)))
        assert not np.allclose(a, b)

    def test_parameter_roundtrip(self):
        net = DenseNet([2, 4, 1], seed=3)
        params = [p.copy() for p in net.parameters()]
        net.set_parameters([p * 2 for p in params])
        assert np.allclose(net.parameters()[0], params[0] * 2)


class TestAdam:
    def test_minimizes_quadratic(self):
        params = [np.array([5.0, -3.0])]
        opt = Adam(params, OptimizerConfig(alpha_ref=0.5, iter_ref=1))
        for it in range(1, 801):
            grads = [2 * params[0]]
            params = opt.step(params, grads, it)
        assert np.max(np.abs(params[0])) < 1e-2

    def test_learning_rate_schedules(self):
        inv = Adam([np.zeros(1)], OptimizerConfig(alpha_ref=0.005, iter_ref=1024))
        assert inv.learning_rate(1) == pytest.approx(0.005)
        assert inv.learning_rate(1024) == pytest.approx(0.005)
        assert inv.learning_rate(4096) == pytest.approx(0.0025)
        lit = Adam([np.zeros(1)], OptimizerConfig(alpha_ref=0.005, iter_ref=1024,
                                                  lr_schedule="literal"))
        assert lit.learning_rate(1) == pytest.approx(0.005 / 1024)
        assert lit.learning_rate(2048) == pytest.approx(0.005 / 2048)

    def test_nonfinite_gradient_raises(self):
        opt = Adam([np.zeros(2)], OptimizerConfig())
        with pytest.raises(TrainingError):
            opt.step([np.zeros(2)], [np.array([np.nan, 0.0])], 1)

    def test_adaptive_decay_pulls_toward_zero(self):
        cfgs = [OptimizerConfig(alpha_ref=0.01, iter_ref=1, weight_decay=wd)
                for wd in (0.0, 0.5)]
        finals = []
        for cfg in cfgs:
            params = [np.array([1.0])]
            opt = Adam(params, cfg)
            for it in range(1, 201):
                params = opt.step(params, [np.array([0.0]) + 1e-9], it)
            finals.append(abs(params[0][0]))
        assert finals[1] < finals[0]


class TestEMA:
    def test_gamma_solution(self):
        g = gamma_from_sigma_ref(0.01)
        assert (g + 1) / ((g + 2) ** 2 * (g + 3)) == pytest.approx(1e-4, rel=1e-10)

    def test_first_step_copies(self):
        p = [np.array([2.0])]
        ema = PowerFunctionEMA(p)
        ema.update([np.array([7.0])], 1)
        assert ema.shadow[0][0] == pytest.approx(7.0)

    def test_replay_matches_direct_recursion(self):
        # independent recomputation of the recursion with explicit betas
        rng = np.random.default_rng(4)
        stream = [rng.standard_normal(3) for _ in range(50)]
        ema = PowerFunctionEMA([np.zeros(3)], sigma_ref=0.01)
        shadow = np.zeros(3)
        for t, p in enumerate(stream, start=1):
            ema.update([p], t)
            beta = (1 - 1 / t) ** (ema.gamma + 1)
            shadow = beta * shadow + (1 - beta) * p
        assert np.allclose(ema.shadow[0], shadow, atol=1e-14)


class TestCheckpoints:
    def test_roundtrip(self, tmp_path):
        net = DenseNet([3, 8, 8, 2], n_flags=2, embed_width=4, seed=7)
        path = tmp_path / "m.pbnet"
        save_checkpoint(path, net, "test-kind", hyperparams={"alpha": 1.5})
        net2, kind, hyper, ema = load_checkpoint(path, expect_kind="test-kind")
        assert kind == "test-kind"
        assert hyper == {"alpha": 1.5}
        assert ema is None
        x = np.random.default_rng(0).standard_normal((5, 3))
        f = np.zeros((5, 2))
        assert np.array_equal(net.forward(x, f), net2.forward(x, f))

    def test_resave_byte_identical(self, tmp_path):
        net = DenseNet([2, 4, 1], seed=2)
        p1, p2 = tmp_path / "a.pbnet", tmp_path / "b.pbnet"
        save_checkpoint(p1, net, "k")
        net2, _, _, _ = load_checkpoint(p1)
        save_checkpoint(p2, net2, "k")
        assert p1.read_bytes() == p2.read_bytes()

    def test_kind_mismatch_rejected(self, tmp_path):
        net = DenseNet([2, 4, 1])
        path = tmp_path / "m.pbnet"
        save_checkpoint(path, net, "kind-a")
        with pytest.raises(ValueError):
            load_checkpoint(path, expect_kind="kind-b")

    def test_garbage_rejected(self, tmp_path):
        path = tmp_path / "x.pbnet"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ValueError):
            load_checkpoint(path)
