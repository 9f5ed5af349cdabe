"""Tests for the exact release-channel optimizer and its grid oracle."""

import json

import numpy as np
import pytest

from alphaprivacy.channel import (
    ChannelOptConfig,
    ReleaseChannel,
    WorldModel,
    _batch_objective,
    bayes_posterior,
    enumerate_grid_rows,
    expected_distortion,
    free_parameter_count,
    grid_oracle,
    objective_gradient,
    optimize_channel,
    project_to_simplex,
    releaser_objective,
)
from alphaprivacy.errors import DataFormatError, ValidationError
from alphaprivacy.measures import JointPmf, Pmf, arimoto_conditional_entropy, renyi_entropy

from oracles import simplex_projection_exhaustive

HAMMING = [[0.0, 1.0], [1.0, 0.0]]


def copy_world(p0=0.5):
    """Binary world with X = W = Y and Hamming distortion."""
    table = np.zeros((2, 2, 2))
    table[0, 0, 0] = p0
    table[1, 1, 1] = 1.0 - p0
    return WorldModel(JointPmf(table, ("X", "W", "Y")), HAMMING)


def noisy_world(p0=0.5, flip=0.2):
    """X uniform-ish, W = X, Y = X flipped with probability ``flip``."""
    table = np.zeros((2, 2, 2))
    for x in range(2):
        px = p0 if x == 0 else 1.0 - p0
        for y in range(2):
            table[x, x, y] = px * (1.0 - flip if y == x else flip)
    return WorldModel(JointPmf(table, ("X", "W", "Y")), HAMMING)


class TestWorldModel:
    def test_rejects_negative_distortion(self):
        joint = JointPmf(np.full((2, 2, 2), 0.125), ("X", "W", "Y"))
        with pytest.raises(ValidationError):
            WorldModel(joint, [[0.0, -1.0], [1.0, 0.0]])

    def test_rejects_nonzero_diagonal_on_shared_alphabet(self):
        joint = JointPmf(np.full((2, 2, 2), 0.125), ("X", "W", "Y"))
        with pytest.raises(ValidationError):
            WorldModel(joint, [[0.5, 1.0], [1.0, 0.0]])

    def test_json_round_trip(self, tmp_path):
        world = noisy_world(0.6, 0.1)
        path = tmp_path / "world.json"
        world.to_json(path)
        back = WorldModel.from_json(path)
        np.testing.assert_array_equal(back.joint.probs, world.joint.probs)
        np.testing.assert_array_equal(back.distortion_table, world.distortion_table)
        assert back.joint.axis_labels == world.joint.axis_labels

    def test_malformed_document_raises_data_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"axes": ["X", "W", "Y"]}))
        with pytest.raises(DataFormatError):
            WorldModel.from_json(path)

    def test_wrong_joint_length_raises(self, tmp_path):
        doc = {
            "axes": ["X", "W", "Y"],
            "sizes": {"X": 2, "W": 2, "Y": 2, "Z": 2},
            "joint": [0.5, 0.5],
            "distortion": HAMMING,
        }
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(DataFormatError):
            WorldModel.from_json(path)


class TestBayesPosterior:
    def test_identity_channel_discloses_everything(self):
        world = copy_world(0.5)
        post = bayes_posterior(world, ReleaseChannel(np.eye(2)))
        np.testing.assert_allclose(post.conditional, np.eye(2), atol=1e-12)
        assert post.support.all()

    def test_constant_channel_returns_prior(self):
        world = copy_world(0.3)
        channel = ReleaseChannel(np.full((2, 2), 0.5))
        post = bayes_posterior(world, channel)
        prior = np.array([0.3, 0.7])
        for z in range(2):
            np.testing.assert_allclose(post.conditional[:, z], prior, atol=1e-12)

    def test_hand_computed_binary_case(self):
        # uniform prior, rows (0.8, 0.2) / (0.3, 0.7): p(X=0 | Z=0) = 8/11
        world = copy_world(0.5)
        channel = ReleaseChannel([[0.8, 0.2], [0.3, 0.7]])
        post = bayes_posterior(world, channel)
        assert post.conditional[0, 0] == pytest.approx(8.0 / 11.0, abs=1e-12)
        assert post.conditional[0, 1] == pytest.approx(2.0 / 9.0, abs=1e-12)

    def test_dead_release_symbols_are_flagged(self):
        world = copy_world(0.5)
        channel = ReleaseChannel([[1.0, 0.0], [1.0, 0.0]])
        post = bayes_posterior(world, channel)
        assert post.support.tolist() == [True, False]
        # dead cell filled with the prior, still a valid distribution
        np.testing.assert_allclose(post.conditional[:, 1].sum(), 1.0, atol=1e-12)

    def test_alphabet_mismatch_raises(self):
        world = copy_world(0.5)
        with pytest.raises(ValidationError):
            bayes_posterior(world, ReleaseChannel(np.eye(3)))

    def test_best_response_beats_perturbed_posteriors(self):
        rng = np.random.default_rng(3)
        world = noisy_world(0.55, 0.15)
        channel = ReleaseChannel([[0.7, 0.3], [0.2, 0.8]])
        post = bayes_posterior(world, channel)
        joint = post.joint.probs

        def cross_entropy(q):
            mask = joint > 0
            return -(joint[mask] * np.log(q[mask])).sum()

        base = cross_entropy(post.conditional)
        for _ in range(100):
            noise = rng.random(post.conditional.shape) + 1e-3
            q = post.conditional + 0.2 * noise
            q /= q.sum(axis=0, keepdims=True)
            assert cross_entropy(q) >= base - 1e-12


class TestReleaserObjective:
    def test_identity_channel_zero_lambda_is_zero(self):
        world = copy_world(0.5)
        cfg = ChannelOptConfig(alpha=2.0, lam=0.0)
        assert releaser_objective(world, ReleaseChannel(np.eye(2)), cfg) == pytest.approx(
            0.0, abs=1e-12
        )

    def test_constant_channel_gives_distortion_minus_log_two(self):
        world = copy_world(0.5)
        channel = ReleaseChannel(np.full((2, 2), 0.5))
        cfg = ChannelOptConfig(alpha=2.0, lam=1.0)
        expected = expected_distortion(world, channel) - np.log(2.0)
        assert releaser_objective(world, channel, cfg) == pytest.approx(
            expected, abs=1e-12
        )

    def test_matches_composition_of_posterior_and_measures(self):
        rng = np.random.default_rng(5)
        for alpha in (0.9, 1.0, 2.0):
            world = noisy_world(0.6, 0.25)
            probs = rng.dirichlet(np.ones(2), size=2)
            channel = ReleaseChannel(probs)
            cfg = ChannelOptConfig(alpha=alpha, lam=0.7)
            post = bayes_posterior(world, channel)
            recomputed = expected_distortion(world, channel) - 0.7 * (
                arimoto_conditional_entropy(post.joint, alpha)
            )
            assert releaser_objective(world, channel, cfg) == pytest.approx(
                recomputed, abs=1e-12
            )

    def test_batch_objective_matches_scalar_path(self):
        rng = np.random.default_rng(7)
        world = noisy_world(0.45, 0.3)
        cfg = ChannelOptConfig(alpha=3.0, lam=0.4)
        channels = rng.dirichlet(np.ones(2), size=(32, 2))
        batch = _batch_objective(world, channels, cfg)
        for i in range(32):
            scalar = releaser_objective(world, ReleaseChannel(channels[i]), cfg)
            assert batch[i] == pytest.approx(scalar, abs=1e-12)


class TestSimplexProjection:
    def test_symmetric_point(self):
        np.testing.assert_allclose(
            project_to_simplex([0.6, 0.6]).probs, [0.5, 0.5], atol=1e-15
        )

    def test_idempotent_on_simplex_points(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            p = rng.dirichlet(np.ones(4))
            np.testing.assert_allclose(project_to_simplex(p).probs, p, atol=1e-12)

    def test_clipping_case(self):
        np.testing.assert_allclose(
            project_to_simplex([1.2, -0.3]).probs, [1.0, 0.0], atol=1e-15
        )

    def test_matches_active_set_enumeration(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            n = int(rng.integers(2, 6))
            v = rng.normal(scale=2.0, size=n)
            got = project_to_simplex(v).probs
            want = simplex_projection_exhaustive(v)
            np.testing.assert_allclose(got, want, atol=1e-10)

    def test_empty_vector_rejected(self):
        with pytest.raises(ValidationError):
            project_to_simplex([])


class TestObjectiveGradient:
    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(17)
        h = 1e-6
        for alpha in (0.9, 1.0, 2.0, 3.0):
            for lam in (0.0, 0.5, 2.0):
                world = noisy_world(0.55, 0.2)
                cfg = ChannelOptConfig(alpha=alpha, lam=lam)
                probs = rng.dirichlet(np.ones(2) * 5.0, size=2)
                grad = objective_gradient(world, ReleaseChannel(probs), cfg)
                for w in range(2):
                    for z in range(2):
                        up = probs.copy()
                        up[w, z] += h
                        down = probs.copy()
                        down[w, z] -= h
                        fd = (
                            _batch_objective(world, up[None], cfg)[0]
                            - _batch_objective(world, down[None], cfg)[0]
                        ) / (2 * h)
                        assert grad[w, z] == pytest.approx(fd, rel=1e-5, abs=1e-7)


class TestOptimizeChannel:
    def test_zero_lambda_recovers_near_lossless_release(self):
        world = copy_world(0.5)
        cfg = ChannelOptConfig(alpha=2.0, lam=0.0, max_iters=300)
        result = optimize_channel(world, cfg, seed=0)
        assert expected_distortion(world, result.channel) < 1e-3

    def test_huge_lambda_reaches_full_privacy(self):
        world = copy_world(0.5)
        cfg = ChannelOptConfig(alpha=2.0, lam=1e3, max_iters=400)
        result = optimize_channel(world, cfg, seed=1)
        post = bayes_posterior(world, result.channel)
        h_cond = arimoto_conditional_entropy(post.joint, 2.0)
        h_prior = renyi_entropy(Pmf([0.5, 0.5]), 2.0)
        assert abs(h_cond - h_prior) < 1e-2

    def test_trace_is_non_increasing(self):
        world = noisy_world(0.6, 0.2)
        cfg = ChannelOptConfig(alpha=2.0, lam=0.5, max_iters=200)
        result = optimize_channel(world, cfg, seed=2)
        trace = np.asarray(result.trace)
        assert np.all(np.diff(trace) <= 1e-12)

    def test_iterates_stay_feasible_and_deterministic(self):
        world = noisy_world(0.5, 0.25)
        cfg = ChannelOptConfig(alpha=3.0, lam=0.8, max_iters=150)
        a = optimize_channel(world, cfg, seed=5)
        b = optimize_channel(world, cfg, seed=5)
        np.testing.assert_array_equal(a.channel.probs, b.channel.probs)
        assert a.trace == b.trace
        rows = a.channel.probs
        assert np.all(rows >= 0)
        np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-12)

    def test_matches_grid_oracle_on_binary_instance(self):
        world = copy_world(0.5)
        cfg = ChannelOptConfig(alpha=2.0, lam=0.5, max_iters=400)
        result = optimize_channel(world, cfg, seed=3)
        _, grid_obj = grid_oracle(world, cfg, resolution=301)
        assert releaser_objective(world, result.channel, cfg) <= grid_obj + 1e-3

    def test_monotone_tradeoff_in_lambda(self):
        world = noisy_world(0.5, 0.2)
        dists, ents = [], []
        for lam in (0.0, 0.2, 0.5, 1.0, 2.0):
            cfg = ChannelOptConfig(alpha=2.0, lam=lam, max_iters=400)
            result = optimize_channel(world, cfg, seed=7)
            dists.append(expected_distortion(world, result.channel))
            post = bayes_posterior(world, result.channel)
            ents.append(arimoto_conditional_entropy(post.joint, 2.0))
        assert all(dists[i + 1] >= dists[i] - 1e-6 for i in range(len(dists) - 1))
        assert all(ents[i + 1] >= ents[i] - 1e-6 for i in range(len(ents) - 1))

    def test_oversized_alphabet_rejected(self):
        probs = np.full((17, 17, 17), 1.0 / 17**3)
        joint = JointPmf(probs, ("X", "W", "Y"))
        world = WorldModel(joint, np.ones((2, 17)) - np.eye(2, 17))
        with pytest.raises(ValidationError):
            optimize_channel(world, ChannelOptConfig(), seed=0)


class TestGridOracle:
    def test_two_point_resolution_enumerates_two_candidates(self):
        # one free parameter: a single binary row
        rows = enumerate_grid_rows(2, resolution=2)
        assert rows.shape == (2, 2)
        np.testing.assert_allclose(rows, [[0.0, 1.0], [1.0, 0.0]])

    def test_zero_lambda_grid_optimum_is_minimal_distortion(self):
        world = copy_world(0.4)
        cfg = ChannelOptConfig(alpha=2.0, lam=0.0)
        channel, obj = grid_oracle(world, cfg, resolution=51)
        assert obj == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(channel.probs, np.eye(2), atol=1e-12)

    def test_refining_the_grid_moves_optimum_within_spacing(self):
        world = noisy_world(0.6, 0.2)
        cfg = ChannelOptConfig(alpha=2.0, lam=0.5)
        coarse_channel, coarse_obj = grid_oracle(world, cfg, resolution=101)
        fine_channel, fine_obj = grid_oracle(world, cfg, resolution=1001)
        assert fine_obj <= coarse_obj + 1e-12
        assert np.abs(coarse_channel.probs - fine_channel.probs).max() <= 1.0 / 100 + 1e-9

    def test_too_many_free_parameters_rejected(self):
        probs = np.full((2, 5, 2), 1.0 / 20)
        joint = JointPmf(probs, ("X", "W", "Y"))
        world = WorldModel(joint, np.zeros((2, 2)))
        assert free_parameter_count(world) == 5
        with pytest.raises(ValidationError):
            grid_oracle(world, ChannelOptConfig(), resolution=11)
