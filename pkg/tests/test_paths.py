import numpy as np
import pytest

from flipnet import (
    Layer,
    LineSegment,
    Network,
    SolveOptions,
    closest_flip,
    count_crossings,
    forward,
    profile_to_flip,
    sample_line,
)
from flipnet.errors import InvalidInputError
from flipnet.network import logits_batch
from conftest import dense_crossing_count, make_bump_net, make_linear_net, make_random_net


class TestSampleLine:
    def test_degenerate_segment_rejected(self, rng):
        x = rng.standard_normal(3)
        with pytest.raises(InvalidInputError):
            LineSegment(x, x.copy())

    def test_zero_net_uniform_no_crossings(self, rng):
        net = Network([Layer(np.zeros((2, 3)), np.zeros(2), 1.0)])
        seg = LineSegment(rng.standard_normal(3), rng.standard_normal(3))
        profile = sample_line(net, seg)
        np.testing.assert_allclose(profile.softmax_scores, 0.5, atol=1e-15)
        assert profile.crossings == []

    def test_linear_single_crossing_location(self, rng):
        net = make_linear_net(rng, 4)
        w = net.layers[0].weights[0] - net.layers[0].weights[1]
        c = net.layers[0].bias[0] - net.layers[0].bias[1]
        # construct endpoints on opposite sides
        x1 = rng.standard_normal(4)
        if w @ x1 + c < 0:
            x1 = -x1 - 2 * c * w / (w @ w)
        x2 = x1 - 2 * (w @ x1 + c) / (w @ w) * w * 1.5
        seg = LineSegment(x1, x2)
        crossings = count_crossings(net, seg)
        alpha_star = -(w @ x1 + c) / (w @ (x2 - x1))
        assert len(crossings) == 1
        assert crossings[0] == pytest.approx(alpha_star, abs=1e-8)

    def test_linear_gap_monotone(self, rng):
        net = make_linear_net(rng, 3)
        seg = LineSegment(rng.standard_normal(3), rng.standard_normal(3))
        profile = sample_line(net, seg)
        gaps = profile.logits[:, 0] - profile.logits[:, 1]
        diffs = np.diff(gaps)
        assert np.all(diffs >= -1e-12) or np.all(diffs <= 1e-12)

    def test_sampling_soundness(self, rng):
        net = make_random_net(rng, [2, 5, 2], scale=1.0)
        seg = LineSegment(rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2))
        tol = 0.01
        profile = sample_line(net, seg, score_tol=tol)
        assert not profile.capped
        dz = np.linalg.norm(np.diff(profile.logits, axis=0), axis=1)
        assert np.all(dz <= tol * (1 + 1e-9))

    def test_endpoint_fidelity(self, rng):
        net = make_random_net(rng, [3, 6, 2], scale=1.0)
        x1, x2 = rng.standard_normal(3), rng.standard_normal(3)
        profile = sample_line(net, LineSegment(x1, x2))
        assert np.array_equal(profile.softmax_scores[0], forward(net, x1).softmax)
        assert np.array_equal(profile.softmax_scores[-1], forward(net, x2).softmax)

    def test_sample_cap(self, rng):
        # gigantic Lipschitz bound forces the cap
        net = make_random_net(rng, [2, 4, 2], scale=200.0, sigma_range=(0.01, 0.02))
        seg = LineSegment(np.zeros(2), np.full(2, 100.0))
        profile = sample_line(net, seg, score_tol=1e-9)
        assert profile.capped
        assert len(profile.alphas) == 1_000_000


class TestCountCrossings:
    def test_same_class_endpoints_linear(self, rng):
        net = make_linear_net(rng, 3)
        w = net.layers[0].weights[0] - net.layers[0].weights[1]
        c = net.layers[0].bias[0] - net.layers[0].bias[1]
        x1 = rng.standard_normal(3)
        g1 = w @ x1 + c
        x2 = x1 + rng.standard_normal(3) * 0.01  # same side for small step
        if np.sign(w @ x2 + c) != np.sign(g1):
            x2 = x1
            x2 = x1 + 1e-6 * np.sign(g1) * w
        assert count_crossings(net, LineSegment(x1, x2)) == []

    def test_bump_net_two_crossings(self):
        net = make_bump_net(width=1.0, sharpness=0.1)
        x1 = np.array([-3.0, 0.0])
        x2 = np.array([3.0, 0.0])
        crossings = count_crossings(net, LineSegment(x1, x2))
        assert len(crossings) == 2
        assert dense_crossing_count(net, x1, x2) == 2

    def test_counts_match_dense_oracle(self, rng):
        net = make_random_net(rng, [2, 6, 2], scale=1.5)
        for _ in range(20):
            x1 = rng.uniform(-2, 2, 2)
            x2 = rng.uniform(-2, 2, 2)
            if np.array_equal(x1, x2):
                continue
            found = count_crossings(net, LineSegment(x1, x2))
            assert len(found) == dense_crossing_count(net, x1, x2)

    def test_refined_crossing_residual(self, rng):
        net = make_random_net(rng, [2, 6, 2], scale=1.5)
        hits = 0
        for _ in range(20):
            x1, x2 = rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 2)
            seg = LineSegment(x1, x2)
            for alpha in count_crossings(net, seg):
                z = logits_batch(net, seg.at(alpha)[None, :])[0]
                top = np.argsort(z)[::-1]
                scale = max(1.0, np.max(np.abs(z)))
                assert abs(z[top[0]] - z[top[1]]) <= 1e-8 * scale
                hits += 1
        assert hits > 0


class TestProfileToFlip:
    def test_flip_point_row(self, rng):
        net = make_random_net(rng, [2, 6, 2], scale=1.0)
        x = rng.uniform(-1, 1, 2)
        flip = closest_flip(net, x, (0, 1), SolveOptions(restarts=1))
        assert flip.converged
        profile = profile_to_flip(net, x, flip)
        k = int(np.nonzero(profile.alphas == 1.0)[0][0])
        s = profile.softmax_scores[k]
        assert abs(s[0] - s[1]) <= 2e-6

    def test_query_row_bit_exact(self, rng):
        net = make_random_net(rng, [2, 5, 2], scale=1.0)
        x = rng.uniform(-1, 1, 2)
        flip = closest_flip(net, x, (0, 1), SolveOptions(restarts=1))
        profile = profile_to_flip(net, x, flip)
        assert np.array_equal(profile.softmax_scores[0], forward(net, x).softmax)

    def test_linear_logit_gap_linear_in_alpha(self, rng):
        net = make_linear_net(rng, 4)
        x = rng.standard_normal(4)
        flip = closest_flip(net, x, (0, 1), SolveOptions(restarts=0))
        profile = profile_to_flip(net, x, flip)
        gaps = profile.logits[:, 0] - profile.logits[:, 1]
        fitted = np.polyval(np.polyfit(profile.alphas, gaps, 1), profile.alphas)
        assert np.max(np.abs(gaps - fitted)) <= 1e-9 * max(1.0, np.max(np.abs(gaps)))

    def test_requires_converged(self, rng):
        net = make_linear_net(rng, 3)
        x = rng.standard_normal(3)
        flip = closest_flip(net, x, (0, 1), SolveOptions(restarts=0))
        flip.status = "local-stationary"
        with pytest.raises(InvalidInputError):
            profile_to_flip(net, x, flip)
