import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq
from sklearn.base import clone

from conftest import random_density
from salbench.core import equalize, gaussian_blur
from salbench.derive import (
    DeriveConfig,
    MetricMapDeriver,
    SgdConfig,
    derive_auc_map,
    derive_cc_kldiv_map,
    derive_map,
    derive_nss_ig_map,
    derive_sauc_map,
    derive_sim_map,
    expected_sim,
    optimize_sim_map,
    project_to_simplex,
)
from salbench.exceptions import (
    CapReached,
    MissingCenterbias,
    NegativeSigma,
    NonFinite,
    ZeroCenterbias,
)


def simplex_projection_by_bisection(v):
    """Independent reference: find tau with sum(max(v - tau, 0)) = 1 by root finding."""
    v = np.asarray(v, dtype=float).ravel()
    f = lambda tau: np.maximum(v - tau, 0).sum() - 1
    tau = brentq(f, v.min() - 1, v.max(), xtol=1e-15, rtol=1e-15, maxiter=500)
    return np.maximum(v - tau, 0)


class TestDispatch:
    def test_shared_maps(self, rng):
        d = random_density(rng, (12, 10))
        cfg = DeriveConfig(empirical_sigma=2.0)
        np.testing.assert_array_equal(derive_map(d, "NSS", cfg), derive_map(d, "IG", cfg))
        np.testing.assert_array_equal(derive_map(d, "CC", cfg), derive_map(d, "KLDiv", cfg))

    def test_sauc_needs_centerbias(self, rng):
        with pytest.raises(MissingCenterbias):
            derive_map(random_density(rng, (4, 4)), "sAUC", DeriveConfig())

    def test_config_contracts(self):
        with pytest.raises(NegativeSigma):
            DeriveConfig(empirical_sigma=0)
        with pytest.raises(ValueError):
            DeriveConfig(fixations_per_image=0)
        with pytest.raises(ValueError):
            SgdConfig(lr_decay=1.0)
        with pytest.raises(ValueError):
            SgdConfig(min_lr=1e-6)


class TestAUCMaps:
    def test_uniform(self):
        np.testing.assert_array_equal(derive_auc_map(np.full((3, 3), 1 / 9)), np.full((3, 3), 0.5))

    def test_uniform_histogram(self, rng):
        d = random_density(rng, (6, 7))
        np.testing.assert_allclose(np.sort(derive_auc_map(d).ravel()), (np.arange(1, 43) - 0.5) / 42)

    def test_rank_map(self):
        np.testing.assert_allclose(derive_auc_map([[0.4, 0.1], [0.3, 0.2]]), [[0.875, 0.125], [0.625, 0.375]])

    def test_sauc_uniform_centerbias(self, rng):
        d = random_density(rng, (5, 5))
        np.testing.assert_array_equal(derive_sauc_map(d, np.full((5, 5), 1 / 25)), derive_auc_map(d))

    def test_sauc_density_equals_centerbias(self, rng):
        d = random_density(rng, (5, 5))
        np.testing.assert_array_equal(derive_sauc_map(d, d), np.full((5, 5), 0.5))

    def test_sauc_ratio(self):
        np.testing.assert_allclose(derive_sauc_map([[0.5, 0.5]], [[0.8, 0.2]]), [[0.25, 0.75]])

    def test_sauc_zero_centerbias(self):
        with pytest.raises(ZeroCenterbias):
            derive_sauc_map([[0.5, 0.5]], [[1.0, 0.0]])

    @given(st.integers(0, 2**32 - 1))
    def test_monotone_rescaling_invariance(self, seed):
        rng = np.random.default_rng(seed)
        d = rng.integers(1, 30, size=(4, 5)).astype(float)
        cb = random_density(rng, (4, 5)) + 0.01
        cb /= cb.sum()
        d2 = d**2
        d, d2 = d / d.sum(), d2 / d2.sum()
        np.testing.assert_array_equal(derive_auc_map(d2), derive_auc_map(d))
        # the sAUC map ranks the ratio, so both densities must get the same power
        cb2 = cb**2 / (cb**2).sum()
        np.testing.assert_array_equal(derive_sauc_map(d2, cb2), derive_sauc_map(d, cb))
        np.testing.assert_array_equal(derive_sauc_map(d, cb), equalize(np.log(d / cb)))


class TestNssIgAndCcMaps:
    def test_identity(self, rng):
        d = random_density(rng, (4, 6))
        np.testing.assert_array_equal(derive_nss_ig_map(d), d)
        delta = np.zeros((3, 3))
        delta[1, 1] = 1
        np.testing.assert_array_equal(derive_nss_ig_map(delta), delta)
        np.testing.assert_array_equal(derive_nss_ig_map(np.full((2, 2), 0.25)), np.full((2, 2), 0.25))

    def test_cc_uniform(self):
        np.testing.assert_allclose(derive_cc_kldiv_map(np.full((9, 11), 1 / 99), 2.5), 1 / 99, atol=1e-15)

    def test_cc_delta_bump(self):
        d = np.zeros((65, 65))
        d[32, 32] = 1
        x = np.arange(-12, 13)
        k = np.exp(-x**2 / 18)
        k /= k.sum()
        expected = np.zeros((65, 65))
        expected[20:45, 20:45] = np.outer(k, k)
        assert np.max(np.abs(derive_cc_kldiv_map(d, 3) - expected)) < 1e-6

    def test_cc_sigma_contract(self, rng):
        d = random_density(rng, (4, 4))
        with pytest.raises(NegativeSigma):
            derive_cc_kldiv_map(d, -1)
        with pytest.raises(NegativeSigma):
            derive_cc_kldiv_map(d, 0)

    @given(st.integers(0, 2**32 - 1), st.floats(0.3, 20))
    def test_cc_mass(self, seed, sigma):
        d = random_density(np.random.default_rng(seed), (9, 14), 0.3)
        assert abs(derive_cc_kldiv_map(d, sigma).sum() - 1) <= 1e-9


class TestProjection:
    def test_on_simplex(self):
        x = np.array([0.1, 0.2, 0.3, 0.4])
        np.testing.assert_allclose(project_to_simplex(x), x, atol=1e-12)

    def test_examples(self):
        np.testing.assert_allclose(project_to_simplex([1.2, -0.2]), [1.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(project_to_simplex([0.6, 0.6]), [0.5, 0.5], atol=1e-15)

    def test_nonfinite(self):
        with pytest.raises(NonFinite):
            project_to_simplex([0.5, np.nan])

    @settings(max_examples=200)
    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=30))
    def test_matches_bisection(self, values):
        out = project_to_simplex(values)
        assert np.all(out >= 0) and abs(out.sum() - 1) < 1e-12
        np.testing.assert_allclose(out, simplex_projection_by_bisection(values), atol=1e-9)

    @given(st.integers(0, 2**32 - 1))
    def test_nearest_point(self, seed):
        rng = np.random.default_rng(seed)
        v = rng.normal(size=8)
        p = project_to_simplex(v)
        others = rng.dirichlet(np.ones(8) * 0.5, size=2000)
        assert np.linalg.norm(v - p) <= np.min(np.linalg.norm(v - others, axis=1)) + 1e-12


class TestExpectedSim:
    def test_delta(self):
        d = np.zeros((4, 4))
        d[1, 2] = 1
        for n_fix in (1, 7):
            assert expected_sim(d, d, n_fix, 20, 0) == pytest.approx(1.0, abs=1e-12)

    def test_deterministic(self, rng):
        d = random_density(rng, (8, 8))
        a = expected_sim(d, d, 5, 300, 1.0, seed=3)
        assert a == expected_sim(d, d, 5, 300, 1.0, seed=3)
        assert a != expected_sim(d, d, 5, 300, 1.0, seed=4)

    def test_blurred_density_beats_mismatch(self, synth):
        d, sigma = synth["density"], synth["sigma"]
        good = derive_cc_kldiv_map(d, sigma)
        bad = np.flipud(good)
        assert expected_sim(good, d, 1000, 2000, sigma) > expected_sim(bad, d, 1000, 2000, sigma)


class TestSimMap:
    def test_delta_density(self):
        d = np.zeros((5, 5))
        d[2, 3] = 1
        result = optimize_sim_map(d, 0, 10)
        np.testing.assert_array_equal(result.saliency_map, d)
        assert not result.cap_reached

    def test_deterministic_given_seed(self, rng):
        d = random_density(rng, (10, 10))
        cfg = DeriveConfig(empirical_sigma=1.0, fixations_per_image=20, sgd=SgdConfig(seed=5))
        a = derive_sim_map(d, cfg)
        np.testing.assert_array_equal(a, derive_sim_map(d, cfg))
        assert np.all(a >= 0) and abs(a.sum() - 1) < 1e-12

    def test_cap_reported(self, rng):
        d = random_density(rng, (6, 6))
        sgd = SgdConfig(max_training_samples=500)
        with pytest.warns(CapReached):
            result = optimize_sim_map(d, 1.0, 10, sgd)
        assert result.cap_reached and result.training_samples == 500

    def test_validation_never_below_start(self, sim_results):
        result = sim_results(100)
        assert result.best_validation >= result.initial_validation - 0.002
        assert result.lr_decays > 0

    def test_many_fixations_close_to_cc_map(self, synth, sim_results):
        cc_map = derive_cc_kldiv_map(synth["density"], synth["sigma"])
        cc_map = cc_map / cc_map.sum()
        assert np.abs(sim_results(1000).saliency_map - cc_map).sum() < 0.05

    def test_one_fixation_sparser_than_cc_map(self, synth, sim_results):
        cc_map = derive_cc_kldiv_map(synth["density"], synth["sigma"])
        support_sim = np.count_nonzero(sim_results(1).saliency_map > 1e-6)
        support_cc = np.count_nonzero(cc_map / cc_map.sum() > 1e-6)
        assert support_sim < support_cc


class TestOptimalityOracles:
    """Analytic expected scores on tiny grids, maximized by the derived maps."""

    @pytest.mark.parametrize("seed", range(5))
    def test_density_maximizes_expected_nss(self, seed):
        rng = np.random.default_rng(seed)
        p = random_density(rng, (3, 4)).ravel()
        cands = rng.random((1000, 12)) ** rng.uniform(0.2, 5, size=(1000, 1))
        z = lambda q: (q - q.mean(-1, keepdims=True)) / q.std(-1, keepdims=True)
        assert np.all(z(cands) @ p <= z(p) @ p + 1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_density_maximizes_expected_ig(self, seed):
        rng = np.random.default_rng(seed)
        p = random_density(rng, (3, 4)).ravel()
        bl = random_density(rng, (3, 4)).ravel()
        cands = rng.dirichlet(np.full(12, 0.7), size=1000)
        gain = lambda q: (np.log2(q) - np.log2(bl)) @ p
        assert np.all(gain(cands) <= gain(p) + 1e-12)


class TestEstimator:
    def test_transform_matches_function(self, rng):
        d = random_density(rng, (8, 8))
        est = MetricMapDeriver(metric="CC", empirical_sigma=1.5)
        np.testing.assert_array_equal(est.fit_transform(d), derive_cc_kldiv_map(d, 1.5))
        stack = np.stack([d, d.T])
        out = est.transform(stack)
        assert out.shape == (2, 8, 8)
        np.testing.assert_array_equal(out[1], gaussian_blur(d.T, 1.5))

    def test_params_and_clone(self):
        est = MetricMapDeriver(metric="SIM", fixations_per_image=10)
        params = est.get_params()
        assert params["metric"] == "SIM" and params["fixations_per_image"] == 10
        twin = clone(est).with_seed(7)
        assert twin.sgd.seed == 7 and est.sgd is None

    def test_sauc_contract(self):
        with pytest.raises(MissingCenterbias):
            MetricMapDeriver(metric="sAUC").fit()


def test_no_cap_warning_on_normal_run(rng):
    d = random_density(rng, (6, 6))
    with warnings.catch_warnings():
        warnings.simplefilter("error", CapReached)
        optimize_sim_map(d, 1.0, 10)
