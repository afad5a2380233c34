import numpy as np
import pytest

import oracles
from pnkit.diffeq import IWPPrior, iwp_discretize
from pnkit.filtsmooth import (
    FilterTrajectory,
    GaussianTransition,
    LinearObservationModel,
    kalman_filter,
    predict,
    rts_smooth,
    sample_posterior,
    sqrt_predict,
    sqrt_update,
    update,
)
from pnkit.randvars import GaussianBelief, condition_on_linear_observation


def _random_chain(rng, dim, n_steps, with_missing=False):
    """Random stable linear-Gaussian chain plus aligned oracle description."""
    init = GaussianBelief(rng.standard_normal(dim), oracles.random_cov(rng, dim, 4.0))
    transitions, observations, oracle_obs = [], [], []
    for k in range(n_steps):
        Phi = 0.9 * np.linalg.qr(rng.standard_normal((dim, dim)))[0]
        Q = oracles.random_cov(rng, dim, 3.0) * 0.3
        b = 0.1 * rng.standard_normal(dim)
        transitions.append(GaussianTransition(Phi, Q, b))
        if with_missing and k % 3 == 1:
            observations.append(None)
            oracle_obs.append(None)
            continue
        m = int(rng.integers(1, dim + 1))
        H = rng.standard_normal((m, dim))
        R = oracles.random_cov(rng, m, 2.0) * 0.5
        c = 0.05 * rng.standard_normal(m)
        y = rng.standard_normal(m)
        observations.append((LinearObservationModel(H, R, c), y))
        oracle_obs.append((H, R, c, y))
    return init, transitions, observations, oracle_obs


class TestPredict:
    def test_identity_no_noise(self):
        rng = np.random.default_rng(0)
        state = GaussianBelief(rng.standard_normal(3), oracles.random_cov(rng, 3))
        out = predict(state, GaussianTransition(np.eye(3), np.zeros((3, 3))))
        np.testing.assert_allclose(out.mean, state.mean, atol=1e-15)
        np.testing.assert_allclose(out.cov, state.cov, atol=1e-15)

    def test_scalar_random_walk(self):
        state = GaussianBelief([0.0], [[1.0]])
        out = predict(state, GaussianTransition([[1.0]], [[0.5]]))
        assert out.cov[0, 0] == pytest.approx(1.5, abs=1e-14)

    def test_monte_carlo_oracle(self):
        rng = np.random.default_rng(1)
        state = GaussianBelief(rng.standard_normal(3), oracles.random_cov(rng, 3, 5.0))
        Phi = rng.standard_normal((3, 3))
        Q = oracles.random_cov(rng, 3, 2.0)
        b = rng.standard_normal(3)
        out = predict(state, GaussianTransition(Phi, Q, b))
        draws_rng = np.random.default_rng(77)
        x = draws_rng.multivariate_normal(state.mean, state.cov, size=1_000_000)
        w = draws_rng.multivariate_normal(np.zeros(3), Q, size=1_000_000)
        propagated = x @ Phi.T + b + w
        assert np.max(np.abs(propagated.mean(axis=0) - out.mean)) <= 0.01 * max(
            1.0, np.max(np.abs(out.mean))
        )
        assert np.max(np.abs(np.cov(propagated.T) - out.cov)) <= 0.01 * np.max(np.abs(out.cov))

    def test_dimension_mismatch(self):
        state = GaussianBelief([0.0], [[1.0]])
        with pytest.raises(ValueError):
            predict(state, GaussianTransition(np.eye(2), np.zeros((2, 2))))


class TestUpdate:
    def test_exact_observation_with_offset(self):
        rng = np.random.default_rng(2)
        state = GaussianBelief(rng.standard_normal(2), oracles.random_cov(rng, 2))
        c = np.array([0.5, -0.5])
        y = np.array([2.0, 1.0])
        model = LinearObservationModel(np.eye(2), np.zeros((2, 2)), c)
        post, innov = update(state, model, y)
        np.testing.assert_allclose(post.mean, y - c, atol=1e-10)
        assert np.max(np.abs(post.cov)) <= 1e-10 * np.max(np.abs(state.cov))
        np.testing.assert_allclose(innov.mean, y - state.mean - c, atol=1e-12)

    def test_scalar_analytic(self):
        state = GaussianBelief([0.0], [[1.0]])
        model = LinearObservationModel([[1.0]], [[1.0]])
        post, innov = update(state, model, [1.0])
        assert post.mean[0] == pytest.approx(0.5, abs=1e-14)
        assert post.cov[0, 0] == pytest.approx(0.5, abs=1e-14)
        assert innov.mean[0] == pytest.approx(1.0)
        assert innov.cov[0, 0] == pytest.approx(2.0)

    def test_equals_generic_conditioning(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            state = GaussianBelief(rng.standard_normal(4), oracles.random_cov(rng, 4))
            H = rng.standard_normal((2, 4))
            R = oracles.random_cov(rng, 2, 2.0)
            c = rng.standard_normal(2)
            y = rng.standard_normal(2)
            post, _ = update(state, LinearObservationModel(H, R, c), y)
            expected = condition_on_linear_observation(state, H, R, y - c)
            assert np.max(np.abs(post.mean - expected.mean)) <= 1e-12
            assert np.max(np.abs(post.cov - expected.cov)) <= 1e-12


class TestFilter:
    def test_empty_chain(self):
        init = GaussianBelief([0.0], [[1.0]])
        traj = kalman_filter(init, [], [])
        assert len(traj) == 1
        assert traj.filtered[0] is init

    def test_scalar_model_matches_batch_oracle(self):
        # 10-step scalar chain: filtered marginals equal the batch joint
        # posterior restricted to the filtration, smoothed equal the full one.
        rng = np.random.default_rng(4)
        init, transitions, observations, oracle_obs = _random_chain(rng, 1, 10)
        traj = kalman_filter(init, transitions, observations)
        smoothed = rts_smooth(traj)
        oracle_tr = [(t.Phi, t.Q, t.drift()) for t in transitions]
        marginals = oracles.batch_chain_posterior(
            init.mean, init.cov, oracle_tr, oracle_obs
        )
        for k, (mean, cov) in enumerate(marginals):
            assert np.max(np.abs(smoothed[k].mean - mean)) <= 1e-8
            assert np.max(np.abs(smoothed[k].cov - cov)) <= 1e-8
        # Filtered at the final time equals the batch posterior there.
        assert np.max(np.abs(traj.filtered[-1].mean - marginals[-1][0])) <= 1e-8

    def test_filtered_matches_growing_batch(self):
        # Filtered marginal at each k equals batch conditioning on data up to k.
        rng = np.random.default_rng(5)
        init, transitions, observations, oracle_obs = _random_chain(rng, 2, 6)
        traj = kalman_filter(init, transitions, observations)
        oracle_tr = [(t.Phi, t.Q, t.drift()) for t in transitions]
        for k in range(1, 7):
            partial = oracles.batch_chain_posterior(
                init.mean, init.cov, oracle_tr[:k], oracle_obs[:k]
            )
            assert np.max(np.abs(traj.filtered[k].mean - partial[k][0])) <= 1e-8
            assert np.max(np.abs(traj.filtered[k].cov - partial[k][1])) <= 1e-8

    def test_all_missing_is_pure_prediction(self):
        rng = np.random.default_rng(6)
        init, transitions, _, _ = _random_chain(rng, 2, 5)
        observations = [None] * 5
        traj = kalman_filter(init, transitions, observations)
        traces = [float(np.trace(rv.cov)) for rv in traj.filtered]
        assert all(b >= a - 1e-12 for a, b in zip(traces, traces[1:]))
        state = init
        for k, tr in enumerate(transitions):
            state = predict(state, tr)
            assert np.max(np.abs(traj.filtered[k + 1].mean - state.mean)) <= 1e-12

    def test_times_must_be_increasing(self):
        init = GaussianBelief([0.0], [[1.0]])
        tr = GaussianTransition([[1.0]], [[1.0]])
        with pytest.raises(ValueError):
            kalman_filter(init, [tr], [None], times=[1.0, 0.5])

    def test_trajectory_length_consistency(self):
        init = GaussianBelief([0.0], [[1.0]])
        tr = GaussianTransition([[1.0]], [[1.0]])
        with pytest.raises(ValueError):
            kalman_filter(init, [tr, tr], [None])
        with pytest.raises(ValueError):
            FilterTrajectory(
                times=np.array([0.0, 1.0]),
                filtered=(init,),
                predicted=(init, init),
                transitions=(tr,),
            )


class TestSmoother:
    def test_single_state(self):
        init = GaussianBelief([1.0], [[2.0]])
        traj = kalman_filter(init, [], [])
        smoothed = rts_smooth(traj)
        assert smoothed[0] is init

    def test_final_smoothed_equals_final_filtered(self):
        rng = np.random.default_rng(7)
        init, transitions, observations, _ = _random_chain(rng, 3, 8)
        traj = kalman_filter(init, transitions, observations)
        smoothed = rts_smooth(traj)
        assert np.array_equal(smoothed[-1].mean, traj.filtered[-1].mean)
        assert np.array_equal(smoothed[-1].cov, traj.filtered[-1].cov)

    def test_deterministic_chain(self):
        # Q = 0 and exact init: smoothed means equal deterministic propagation.
        rng = np.random.default_rng(8)
        x0 = rng.standard_normal(2)
        init = GaussianBelief(x0, np.zeros((2, 2)))
        Phi = rng.standard_normal((2, 2))
        transitions = [GaussianTransition(Phi, np.zeros((2, 2))) for _ in range(4)]
        traj = kalman_filter(init, transitions, [None] * 4)
        smoothed = rts_smooth(traj)
        x = x0
        for k in range(5):
            assert np.max(np.abs(smoothed[k].mean - x)) <= 1e-12
            x = Phi @ x

    def test_multi_dim_matches_batch_oracle(self):
        # Chains up to 12 steps x 6 dims with missing data, 1e-8.
        rng = np.random.default_rng(9)
        for dim, steps in [(2, 12), (6, 7), (4, 10)]:
            init, transitions, observations, oracle_obs = _random_chain(
                rng, dim, steps, with_missing=True
            )
            traj = kalman_filter(init, transitions, observations)
            smoothed = rts_smooth(traj)
            oracle_tr = [(t.Phi, t.Q, t.drift()) for t in transitions]
            marginals = oracles.batch_chain_posterior(
                init.mean, init.cov, oracle_tr, oracle_obs
            )
            for k, (mean, cov) in enumerate(marginals):
                assert np.max(np.abs(smoothed[k].mean - mean)) <= 1e-8
                assert np.max(np.abs(smoothed[k].cov - cov)) <= 1e-8


class TestSquareRoot:
    def test_identity_zero_noise_factor_unchanged(self):
        rng = np.random.default_rng(10)
        cov = oracles.random_cov(rng, 3, 4.0)
        state = GaussianBelief(rng.standard_normal(3), cov)
        out = sqrt_predict(state, GaussianTransition(np.eye(3), np.zeros((3, 3))))
        # Up to the sign convention, the factor reproduces the covariance.
        np.testing.assert_allclose(out.cov, cov, atol=1e-12)
        assert np.all(np.diagonal(out.cov_factor) >= 0)
        assert np.max(np.abs(np.triu(out.cov_factor, 1))) == 0.0

    def test_predict_matches_vanilla(self):
        rng = np.random.default_rng(11)
        state = GaussianBelief(rng.standard_normal(4), oracles.random_cov(rng, 4, 5.0))
        tr = GaussianTransition(
            rng.standard_normal((4, 4)), oracles.random_cov(rng, 4, 3.0), rng.standard_normal(4)
        )
        vanilla = predict(state, tr)
        sqrt_version = sqrt_predict(state, tr)
        assert np.max(np.abs(sqrt_version.cov - vanilla.cov)) <= 1e-8
        np.testing.assert_allclose(sqrt_version.mean, vanilla.mean, atol=1e-12)

    def test_update_matches_vanilla(self):
        rng = np.random.default_rng(12)
        state = GaussianBelief(rng.standard_normal(4), oracles.random_cov(rng, 4, 5.0))
        model = LinearObservationModel(
            rng.standard_normal((2, 4)), oracles.random_cov(rng, 2, 2.0), rng.standard_normal(2)
        )
        y = rng.standard_normal(2)
        vanilla, vanilla_innov = update(state, model, y)
        sqrt_version, innov = sqrt_update(state, model, y)
        assert np.max(np.abs(sqrt_version.cov - vanilla.cov)) <= 1e-8
        np.testing.assert_allclose(sqrt_version.mean, vanilla.mean, atol=1e-9)
        assert np.max(np.abs(innov.cov - vanilla_innov.cov)) <= 1e-8
        # Triangular, nonnegative diagonal, and no PSD subtraction artifacts.
        L = sqrt_version.cov_factor
        assert np.max(np.abs(np.triu(L, 1))) == 0.0
        assert np.all(np.diagonal(L) >= 0)

    def test_exact_observation_update(self):
        rng = np.random.default_rng(13)
        state = GaussianBelief(rng.standard_normal(3), oracles.random_cov(rng, 3))
        model = LinearObservationModel(np.eye(3), np.zeros((3, 3)))
        y = rng.standard_normal(3)
        post, _ = sqrt_update(state, model, y)
        np.testing.assert_allclose(post.mean, y, atol=1e-10)
        assert np.max(np.abs(post.cov)) <= 1e-10 * np.max(np.abs(state.cov))

    def test_stress_instance_keeps_variances_nonnegative(self):
        # IWP q=4, h=1e-3: the transition noise spans ~27 orders of magnitude
        # (condition >= 1e14). The square-root filter must keep every marginal
        # variance nonnegative and finite; the vanilla recursion may fail.
        prior = IWPPrior(q=4, d=1)
        tr = iwp_discretize(prior, 1e-3)
        assert np.linalg.cond(tr.Q) >= 1e14
        H = np.zeros((1, 5))
        H[0, 0] = 1.0
        model = LinearObservationModel(H, np.zeros((1, 1)))
        rng = np.random.default_rng(14)

        state_sqrt = GaussianBelief.from_factor(np.zeros(5), 1e-3 * np.eye(5))
        vanilla_failed = False
        state_vanilla = state_sqrt
        for step in range(40):
            y = np.atleast_1d(1e-3 * rng.standard_normal())
            state_sqrt = sqrt_predict(state_sqrt, tr)
            state_sqrt, _ = sqrt_update(state_sqrt, model, y)
            variances = np.diagonal(state_sqrt.cov)
            assert np.all(np.isfinite(variances))
            assert np.all(variances >= 0.0)
            if not vanilla_failed:
                try:
                    pred = predict(state_vanilla, tr)
                    state_vanilla, _ = update(pred, model, y)
                    if np.any(np.diagonal(state_vanilla.cov) < 0):
                        vanilla_failed = True
                except Exception:
                    vanilla_failed = True
        # The vanilla recursion is permitted to fail; no assertion on it.

    def test_agreement_below_condition_1e8(self):
        rng = np.random.default_rng(15)
        state = GaussianBelief(rng.standard_normal(3), oracles.random_cov(rng, 3, 100.0))
        tr = GaussianTransition(
            rng.standard_normal((3, 3)), oracles.random_cov(rng, 3, 1000.0)
        )
        model = LinearObservationModel(rng.standard_normal((1, 3)), [[0.1]])
        y = rng.standard_normal(1)
        v_pred = predict(state, tr)
        v_post, _ = update(v_pred, model, y)
        s_pred = sqrt_predict(state, tr)
        s_post, _ = sqrt_update(s_pred, model, y)
        assert np.max(np.abs(v_post.cov - s_post.cov)) <= 1e-8
        assert np.max(np.abs(v_post.mean - s_post.mean)) <= 1e-8


class TestMergedSteps:
    def test_iwp_prediction_merges(self):
        # Predicting over h then h' equals predicting over h + h' for IWP.
        rng = np.random.default_rng(16)
        prior = IWPPrior(q=3, d=1)
        state = GaussianBelief(rng.standard_normal(4), oracles.random_cov(rng, 4, 3.0))
        h1, h2 = 0.3, 0.45
        two = predict(predict(state, iwp_discretize(prior, h1)), iwp_discretize(prior, h2))
        one = predict(state, iwp_discretize(prior, h1 + h2))
        assert np.max(np.abs(two.mean - one.mean)) <= 1e-10
        assert np.max(np.abs(two.cov - one.cov)) <= 1e-10


class TestSamplePosterior:
    def test_zero_noise_chain_gives_mean_path(self):
        rng = np.random.default_rng(17)
        x0 = rng.standard_normal(2)
        init = GaussianBelief(x0, np.zeros((2, 2)))
        Phi = 0.8 * np.linalg.qr(rng.standard_normal((2, 2)))[0]
        transitions = [GaussianTransition(Phi, np.zeros((2, 2))) for _ in range(4)]
        traj = kalman_filter(init, transitions, [None] * 4)
        draws = sample_posterior(traj, np.random.default_rng(0), 7)
        smoothed = rts_smooth(traj)
        for k in range(5):
            for i in range(7):
                assert np.max(np.abs(draws[i, k] - smoothed[k].mean)) <= 1e-10

    def test_fixed_seed_reproducible(self):
        rng = np.random.default_rng(18)
        init, transitions, observations, _ = _random_chain(rng, 2, 5)
        traj = kalman_filter(init, transitions, observations)
        a = sample_posterior(traj, np.random.default_rng(5), 3)
        b = sample_posterior(traj, np.random.default_rng(5), 3)
        assert np.array_equal(a, b)

    def test_marginals_and_lag1_match_batch(self):
        # 5-step scalar chain, 1e5 samples: per-time marginals within 2% and
        # lag-1 correlations within 3% of the batch joint posterior.
        rng = np.random.default_rng(19)
        init, transitions, observations, oracle_obs = _random_chain(rng, 1, 5)
        traj = kalman_filter(init, transitions, observations)
        smoothed = rts_smooth(traj)
        draws = sample_posterior(traj, np.random.default_rng(101), 100_000)[:, :, 0]

        oracle_tr = [(t.Phi, t.Q, t.drift()) for t in transitions]
        joint_mean, joint_cov, _ = oracles.batch_chain_joint(
            init.mean, init.cov, oracle_tr, oracle_obs
        )
        for k in range(6):
            std = np.sqrt(smoothed[k].cov[0, 0])
            assert abs(draws[:, k].mean() - smoothed[k].mean[0]) <= 0.02 * max(
                abs(smoothed[k].mean[0]), std
            ) + 3 * std / np.sqrt(draws.shape[0])
            assert abs(draws[:, k].std(ddof=1) - std) <= 0.02 * std
        for k in range(5):
            emp = np.corrcoef(draws[:, k], draws[:, k + 1])[0, 1]
            exact = joint_cov[k, k + 1] / np.sqrt(joint_cov[k, k] * joint_cov[k + 1, k + 1])
            assert abs(emp - exact) <= 0.03
