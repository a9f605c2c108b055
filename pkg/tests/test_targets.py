import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pairbelief.targets import (
    BoxDomain,
    DomainError,
    SamplingDist,
    finite_difference_score,
    get_target,
    reference_sample,
    register_target,
    target_names,
    uniform_box,
)


class TestBoxDomain:
    def test_basic_properties(self):
        dom = BoxDomain(np.array([-6.0, -6.0]), np.array([6.0, 6.0]))
        assert dom.d == 2
        assert dom.volume == pytest.approx(144.0)
        assert np.allclose(dom.widths, [12.0, 12.0])

    def test_contains(self):
        dom = BoxDomain(np.array([0.0]), np.array([1.0]))
        inside = dom.contains(np.array([[0.5], [0.0], [1.0], [1.5]]))
        assert list(inside) == [True, True, True, False]

    def test_invalid_bounds_rejected(self):
        with pytest.raises((ValueError, DomainError)):
            BoxDomain(np.array([1.0]), np.array([0.0]))

    def test_require_inside_raises(self):
        dom = BoxDomain(np.array([0.0]), np.array([1.0]))
        with pytest.raises(DomainError):
            dom.require_inside(np.array([[2.0]]))


class TestBuiltinTargets:
    def test_registry_lists_all_eight(self):
        names = target_names()
        assert set(names) == {
            "onemoon2d", "twomoons2d", "ring2d", "gaussian4d", "gaussian16d",
            "mixturegaussians4d", "mixturegaussians10d", "stargaussian6d",
        }

    def test_unknown_target(self):
        with pytest.raises(KeyError):
            get_target("nosuchtarget")

    def test_register_custom(self):
        t = get_target("onemoon2d")
        register_target("custom-moon", lambda: t)
        assert "custom-moon" in target_names()

    @pytest.mark.parametrize("name", target_names())
    def test_analytic_scores_match_finite_differences(self, name, rng):
        target = get_target(name)
        d = target.domain.d
        # stay near the middle of the box where the density is well scaled
        x = target.domain.lower + target.domain.widths * (0.3 + 0.4 * rng.random((8, d)))
        analytic = target.score(x)
        fd = finite_difference_score(target.log_density, x)
        assert np.allclose(analytic, fd, rtol=1e-4, atol=1e-5)

    def test_twomoons_symmetric_bimodal(self):
        target = get_target("twomoons2d")
        x = np.array([[1.3, 0.4], [-1.3, 0.4], [0.7, -1.1], [-0.7, -1.1]])
        vals = target.log_density(x)
        assert vals[0] == pytest.approx(vals[1], rel=1e-12)
        assert vals[2] == pytest.approx(vals[3], rel=1e-12)

    def test_ring_peaks_on_radius_two(self):
        target = get_target("ring2d")
        on = target.log_density(np.array([[2.0, 0.0], [0.0, 2.0]]))
        off = target.log_density(np.array([[1.0, 0.0], [3.0, 0.0]]))
        assert on[0] == pytest.approx(on[1])
        assert np.all(on > off)

    def test_gaussian16d_box(self):
        dom = get_target("gaussian16d").domain
        assert dom.d == 16
        assert np.allclose(dom.lower, -8.0) and np.allclose(dom.upper, 8.0)

    def test_gaussian_mean_structure(self):
        # per-dimension means alternate +-2
        target = get_target("gaussian4d")
        ref = reference_sample(target, 4000, seed=1)
        assert np.allclose(ref.mean(axis=0), [-2.0, 2.0, -2.0, 2.0], atol=0.2)


class TestReferenceSampling:
    def test_exact_gaussian_sampler_moments(self):
        target = get_target("gaussian4d")
        ref = reference_sample(target, 8000, seed=0)
        # D=4: diagonal 0.4, off-diagonal 0.2667
        cov = np.cov(ref.T)
        assert np.allclose(np.diag(cov), 0.4, atol=0.06)
        assert cov[0, 1] == pytest.approx(4.0 / 15.0, abs=0.06)

    def test_mcmc_sampler_hits_ring(self):
        target = get_target("ring2d")
        ref = reference_sample(target, 1000, seed=0)
        radii = np.linalg.norm(ref, axis=1)
        assert abs(np.median(radii) - 2.0) < 0.25

    def test_samples_inside_domain(self):
        for name in ("onemoon2d", "mixturegaussians4d"):
            target = get_target(name)
            ref = reference_sample(target, 500, seed=3)
            assert np.all(target.domain.contains(ref))


class TestSamplingDist:
    def test_uniform_box_roundtrip(self, rng):
        dom = BoxDomain(np.array([-6.0, -2.0]), np.array([6.0, 4.0]))
        dist = uniform_box(dom)
        x = dist.sample(200, rng)
        u = dist.rosenblatt_forward(x)
        assert np.all((u >= 0) & (u <= 1))
        assert np.allclose(dist.rosenblatt_inverse(u), x, atol=1e-10)

    def test_uniform_forward_is_affine(self):
        dom = BoxDomain(np.array([0.0]), np.array([4.0]))
        dist = uniform_box(dom)
        assert dist.rosenblatt_forward(np.array([[1.0]]))[0, 0] == pytest.approx(0.25)

    def test_diagonal_gaussian_roundtrip(self, rng):
        dom = BoxDomain(np.array([-3.0, -3.0]), np.array([3.0, 3.0]))
        dist = SamplingDist(kind="diagonal-gaussian", domain=dom,
                            params={"mean": [0.5, -0.5], "var": [1.0, 2.0]})
        x = dist.sample(500, rng)
        assert np.all(dom.contains(x))
        u = dist.rosenblatt_forward(x)
        assert np.allclose(dist.rosenblatt_inverse(u), x, atol=1e-7)

    def test_gaussian_mixture_roundtrip(self, rng):
        dom = BoxDomain(np.array([-4.0, -4.0]), np.array([4.0, 4.0]))
        cov = np.array([[1.0, 0.6], [0.6, 1.0]])
        dist = SamplingDist(kind="gaussian-mixture", domain=dom,
                            params={"weights": [0.4, 0.6],
                                    "means": [[-1.0, 0.0], [1.5, 1.0]],
                                    "covs": [cov, 0.5 * cov]})
        x = dist.sample(300, rng)
        assert np.all(dom.contains(x))
        u = dist.rosenblatt_forward(x)
        assert np.all((u >= 0) & (u <= 1))
        assert np.allclose(dist.rosenblatt_inverse(u), x, atol=1e-3)

    def test_forward_transform_uniformizes(self, rng):
        # Kolmogorov-Smirnov-style check: transformed marginals are U(0,1)
        dom = BoxDomain(np.array([-3.0]), np.array([3.0]))
        dist = SamplingDist(kind="diagonal-gaussian", domain=dom,
                            params={"mean": [0.3], "var": [1.2]})
        u = dist.rosenblatt_forward(dist.sample(4000, rng))[:, 0]
        grid = np.linspace(0.01, 0.99, 50)
        emp = np.searchsorted(np.sort(u), grid) / u.size
        assert np.max(np.abs(emp - grid)) < 0.03

    def test_pdf_normalizes(self):
        dom = BoxDomain(np.array([-3.0]), np.array([3.0]))
        dist = SamplingDist(kind="diagonal-gaussian", domain=dom,
                            params={"mean": [0.0], "var": [4.0]})
        xs = np.linspace(-3, 3, 4001)[:, None]
        total = np.trapezoid(dist.pdf(xs), xs[:, 0])
        assert total == pytest.approx(1.0, abs=1e-3)

    @given(st.floats(-5.9, 5.9), st.floats(-5.9, 5.9))
    @settings(max_examples=50, deadline=None)
    def test_uniform_roundtrip_property(self, a, b):
        dom = BoxDomain(np.array([-6.0, -6.0]), np.array([6.0, 6.0]))
        dist = uniform_box(dom)
        x = np.array([[a, b]])
        back = dist.rosenblatt_inverse(dist.rosenblatt_forward(x))
        assert np.allclose(back, x, atol=1e-9)
