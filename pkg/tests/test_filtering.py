import math

import numpy as np
import pytest

from coupledsmc.errors import ParticleCollapseError
from coupledsmc.filtering import (
    ArrayNoise,
    ModelSpec,
    OtSchemeConfig,
    ParticleCloud,
    bootstrap_filter,
    coupled_filter,
    lineage_extend,
    lineage_init,
    mean_sq_distance,
    ot_coupling_for_clouds,
    paired_count,
)
from coupledsmc.models import (
    LinearGaussianParams,
    kalman_loglik,
    linear_gaussian_model,
    simulate_linear_gaussian,
)
from coupledsmc.simplex import normalize

LG = LinearGaussianParams(a=0.9, sigma_x=1.0, sigma_y=1.0)


def _lg_dataset(horizon=15, seed=100):
    _, obs = simulate_linear_gaussian(LG, horizon, np.random.default_rng(seed))
    return obs


class TestLineage:
    def test_initial_digests_identical_across_filters(self):
        np.testing.assert_array_equal(lineage_init(32), lineage_init(32))
        assert paired_count(lineage_init(32), lineage_init(32)) == 32

    def test_extend_tracks_ancestry_equality(self):
        lin = lineage_init(4)
        a = np.array([0, 0, 2, 3])
        b = np.array([0, 1, 2, 3])
        ext_a = lineage_extend(lin, a)
        ext_b = lineage_extend(lin, b)
        # slots 0, 2, 3 picked the same ancestor, slot 1 did not
        assert paired_count(ext_a, ext_b) == 3

    def test_no_spurious_equality(self):
        lin = lineage_init(8)
        ext = lineage_extend(lin, np.arange(8))
        assert paired_count(ext, lineage_extend(ext, np.arange(8))) == 0


class TestBootstrapFilter:
    def test_single_observation_is_log_mean_weight(self):
        obs = np.array([[0.4]])
        model = linear_gaussian_model(LG, obs)
        res = bootstrap_filter(model, 256, rng=np.random.default_rng(0))
        states = model.initial(np.random.default_rng(0).random((256, 1)))
        lw = model.log_weight(0, states, obs[0])
        expected = math.log(np.exp(lw).mean())
        assert res.log_lik == pytest.approx(expected, rel=1e-12)

    def test_deterministic_model_sums_log_weights(self):
        p = LinearGaussianParams(a=0.8, sigma_x=0.0, sigma_y=0.6, x0_mean=1.0, x0_var=0.0)
        obs = _lg_dataset(8, seed=101)
        model = linear_gaussian_model(p, obs)
        res = bootstrap_filter(model, 64, rng=np.random.default_rng(1))
        expected = sum(float(model.log_weight(t, np.array([[1.0 * 0.8 ** t]]), obs[t])[0])
                       for t in range(9))
        assert res.log_lik == pytest.approx(expected, rel=1e-12)
        assert res.n_resamples == 0  # uniform weights never trip the trigger

    def test_within_monte_carlo_error_of_kalman(self):
        obs = _lg_dataset(20, seed=102)
        exact = kalman_loglik(LG, obs)
        model = linear_gaussian_model(LG, obs)
        lls = np.array([bootstrap_filter(model, 10_000, rng=np.random.default_rng(200 + r),
                                         resampler="systematic").log_lik
                        for r in range(12)])
        sd = lls.std(ddof=1)
        assert abs(lls[0] - exact) < 3 * sd
        assert abs(lls.mean() - exact) < 3 * sd  # log bias is far below the noise here

    def test_collapse_raises(self):
        obs = np.zeros((3, 1))
        model = ModelSpec(
            1, 1,
            initial=lambda u: np.zeros((u.shape[0], 1)),
            transition=lambda t, x, u: x,
            log_weight=lambda t, x, y: np.full(x.shape[0], -np.inf if t else 0.0),
            observations=obs,
        )
        with pytest.raises(ParticleCollapseError):
            bootstrap_filter(model, 16, rng=np.random.default_rng(2))

    def test_multinomial_resampler_runs(self):
        model = linear_gaussian_model(LG, _lg_dataset(10, seed=103))
        res = bootstrap_filter(model, 128, rng=np.random.default_rng(3),
                               resampler="multinomial")
        assert np.isfinite(res.log_lik)
        assert res.n_resamples > 0

    def test_parameter_validation(self):
        model = linear_gaussian_model(LG, _lg_dataset(3))
        with pytest.raises(ValueError):
            bootstrap_filter(model, 0, rng=np.random.default_rng(0))
        with pytest.raises(ValueError):
            bootstrap_filter(model, 8, ess_threshold=1.5, rng=np.random.default_rng(0))
        with pytest.raises(ValueError):
            bootstrap_filter(model, 8)  # neither rng nor noise


class TestArrayNoise:
    def test_size_and_layout(self):
        assert ArrayNoise.size(4, 3, 5) == (5 + 1) * 4 * 3 + 5

    def test_rejects_wrong_size(self):
        with pytest.raises(ValueError):
            ArrayNoise(np.zeros(10), 4, 3, 5)

    def test_reproducible_and_sensitive(self):
        obs = _lg_dataset(6, seed=104)
        model = linear_gaussian_model(LG, obs)
        size = ArrayNoise.size(64, 1, 6)
        g = np.random.default_rng(4).standard_normal(size)
        run = lambda gv: bootstrap_filter(model, 64, noise=ArrayNoise(gv, 64, 1, 6)).log_lik
        assert run(g) == run(g.copy())
        g2 = g.copy()
        g2[0] += 0.5
        assert run(g2) != run(g)

    def test_rejects_multinomial(self):
        noise = ArrayNoise(np.zeros(ArrayNoise.size(8, 1, 3)), 8, 1, 3)
        with pytest.raises(ValueError):
            noise.resampling_uniforms(1, 8)


class TestCoupledFilter:
    def test_identical_models_maximal_stay_paired(self):
        obs = _lg_dataset(12, seed=105)
        model = linear_gaussian_model(LG, obs)
        res = coupled_filter(model, model, 64, scheme="maximal",
                             rng=np.random.default_rng(5))
        assert res.log_lik1 == res.log_lik2
        for s in res.trace:
            assert s.paired_count == 64
            assert s.mean_sq_dist == 0.0
        assert res.n_resamples > 0

    def test_matches_standalone_when_identical_and_maximal(self):
        # same trigger times, diagonal coupling: side 1 is bit-identical to a
        # standalone systematic-resampling run on the same stream
        obs = _lg_dataset(12, seed=106)
        model = linear_gaussian_model(LG, obs)
        res = coupled_filter(model, model, 64, scheme="maximal",
                             rng=np.random.default_rng(6))
        solo = bootstrap_filter(model, 64, rng=np.random.default_rng(6))
        assert res.log_lik1 == solo.log_lik

    @pytest.mark.parametrize("scheme", ["independent", "maximal", "ot-dense", "ot-sparse"])
    def test_schemes_run_and_traces_cohere(self, scheme):
        p2 = LinearGaussianParams(a=0.9, sigma_x=1.02, sigma_y=1.02)
        obs = _lg_dataset(12, seed=107)
        res = coupled_filter(linear_gaussian_model(LG, obs),
                             linear_gaussian_model(p2, obs), 48,
                             scheme=scheme, scheme_cfg=OtSchemeConfig(lam=20.0),
                             rng=np.random.default_rng(7))
        assert np.isfinite(res.log_lik1) and np.isfinite(res.log_lik2)
        assert res.trace[0].paired_count == 48
        assert len(res.trace) == 13
        st = res.state
        assert st.mean_sq_dist == pytest.approx(
            mean_sq_distance(st.cloud1.states, st.cloud2.states), abs=1e-10)
        assert st.paired_count == paired_count(st.cloud1.lineage, st.cloud2.lineage)

    def test_seed_determinism_bit_identical(self):
        p2 = LinearGaussianParams(a=0.9, sigma_x=1.05, sigma_y=1.0)
        obs = _lg_dataset(10, seed=108)
        runs = [coupled_filter(linear_gaussian_model(LG, obs),
                               linear_gaussian_model(p2, obs), 32,
                               scheme="ot-sparse", rng=np.random.default_rng(8))
                for _ in range(2)]
        assert runs[0].log_lik1 == runs[1].log_lik1
        assert runs[0].log_lik2 == runs[1].log_lik2
        assert runs[0].trace == runs[1].trace

    def test_phi_tracking(self):
        obs = _lg_dataset(9, seed=109)
        model = linear_gaussian_model(LG, obs)
        res = coupled_filter(model, model, 32, scheme="maximal",
                             rng=np.random.default_rng(9), phi=lambda x: x[:, 0])
        assert res.phi_trace1.shape == (10,)
        assert res.phi_trace1[-1] == pytest.approx(res.state.cloud1.estimate(lambda x: x[:, 0]))

    def test_noise_dimension_mismatch_rejected(self):
        obs = _lg_dataset(3)
        m1 = linear_gaussian_model(LG, obs)
        m2 = ModelSpec(1, 2, m1.initial, m1.transition, m1.log_weight, obs)
        with pytest.raises(ValueError):
            coupled_filter(m1, m2, 8, rng=np.random.default_rng(0))

    def test_unknown_scheme_rejected(self):
        model = linear_gaussian_model(LG, _lg_dataset(3))
        with pytest.raises(ValueError):
            coupled_filter(model, model, 8, scheme="magic", rng=np.random.default_rng(0))


class TestOtCouplingForClouds:
    def _cloud(self, states, weights):
        states = np.asarray(states, dtype=float)
        return ParticleCloud(states, normalize(weights), 0.0, lineage_init(states.shape[0]))

    def test_identical_clouds_large_lambda_is_diagonal(self):
        rng = np.random.default_rng(10)
        states = rng.normal(size=(6, 2))
        w = rng.random(6) + 0.2
        cloud = self._cloud(states, w)
        coup = ot_coupling_for_clouds(cloud, cloud, R="dense", lam=300.0)
        np.testing.assert_allclose(coup.toarray(), np.diag(normalize(w)), atol=1e-4)

    def test_separated_pairs_match_one_to_one(self):
        from coupledsmc.transport import exact_ot_small
        s1 = np.array([[0.0, 0.0], [10.0, 0.0]])
        s2 = np.array([[10.1, 0.0], [0.1, 0.0]])
        c1 = self._cloud(s1, [0.5, 0.5])
        c2 = self._cloud(s2, [0.5, 0.5])
        coup = ot_coupling_for_clouds(c1, c2, R="dense", lam=50.0)
        cost = ((s1[:, None, :] - s2[None, :, :]) ** 2).sum(axis=2)
        _, exact = exact_ot_small(cost, c1.weights, c2.weights)
        assert coup.transport_cost(cost) == pytest.approx(exact, rel=1e-6)
        # mass sits on the nearest-point pairing (0,1) and (1,0)
        assert coup.toarray()[0, 1] == pytest.approx(0.5, abs=1e-6)
        assert coup.toarray()[1, 0] == pytest.approx(0.5, abs=1e-6)

    def test_full_neighbourhood_equals_dense(self):
        rng = np.random.default_rng(11)
        c1 = self._cloud(rng.normal(size=(12, 2)), rng.random(12) + 0.1)
        c2 = self._cloud(rng.normal(size=(12, 2)), rng.random(12) + 0.1)
        dense = ot_coupling_for_clouds(c1, c2, R="dense", lam=30.0)
        sparse = ot_coupling_for_clouds(c1, c2, R=12, lam=30.0)
        np.testing.assert_allclose(sparse.toarray(), dense.toarray(), atol=1e-10)

    def test_shape_mismatch_rejected(self):
        c1 = self._cloud(np.zeros((3, 2)), np.ones(3))
        c2 = self._cloud(np.zeros((4, 2)), np.ones(4))
        with pytest.raises(ValueError):
            ot_coupling_for_clouds(c1, c2)
