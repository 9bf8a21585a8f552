import math

import numpy as np
import pytest

from src.core.errors import ArgumentError, DecodeError, ShapeError
from src.data.episodes import sample_episodes
from src.decoders.accuracy import episode_accuracy, episodic_accuracy
from src.decoders.episodic import DecoderKind, decode_episode, evaluate_provider
from src.decoders.mct import MctConfig, mct_confidence, mct_predict, mct_update
from src.decoders.prototypes import (
    DistanceMode, PrototypeSet, compute_prototypes, distance, group_by_class, pairwise_distances,
)
from src.decoders.protonet import predict_labels, protonet_predict
from src.encoder.providers import IdentityProvider


def _brute_distribution(query, prototypes, squared=True):
    scores = []
    for c in prototypes:
        d = sum((qi - ci) ** 2 for qi, ci in zip(query, c))
        scores.append(-(d if squared else math.sqrt(d)))
    top = max(scores)
    exps = [math.exp(s - top) for s in scores]
    total = sum(exps)
    return [e / total for e in exps]


def _brute_mct(support_by_class, queries, steps, squared=True):
    prototypes = [[sum(col) / len(block) for col in zip(*block)] for block in support_by_class]
    for _ in range(steps):
        q = [_brute_distribution(x, prototypes, squared) for x in queries]
        updated = []
        for j, block in enumerate(support_by_class):
            dim = len(block[0])
            numerator = [sum(s[k] for s in block) + sum(q[i][j] * queries[i][k] for i in range(len(queries)))
                         for k in range(dim)]
            denominator = len(block) + sum(q[i][j] for i in range(len(queries)))
            updated.append([v / denominator for v in numerator])
        prototypes = updated
    return [_brute_distribution(x, prototypes, squared) for x in queries]


def _random_episode(rng, way=None, shot=None, query=None, dim=None):
    way = way or int(rng.integers(2, 6))
    shot = shot or int(rng.integers(1, 6))
    query = query or int(rng.integers(1, 11))
    dim = dim or int(rng.integers(1, 17))
    centers = rng.normal(scale=2.0, size=(way, dim))
    support = [centers[j] + rng.normal(size=(shot, dim)) for j in range(way)]
    queries = np.vstack([centers[j] + rng.normal(size=(query, dim)) for j in range(way)])
    return support, queries


@pytest.fixture
def outlier_instance():
    """Support far from its class's queries; one class-0 query sits nearer the class-1 prototype"""
    support = [np.array([[-2.0, 0.0]]), np.array([[3.0, 0.0]])]
    queries = np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [3.0, 0.0], [3.0, 0.0], [3.0, 0.0]])
    labels = np.array([0, 0, 0, 0, 1, 1, 1])
    return support, queries, labels


class TestPrototypes:
    def test_mean(self):
        protos = compute_prototypes([np.array([[0.0, 0.0], [2.0, 2.0]]), np.array([[4.0, 0.0]])])
        np.testing.assert_array_equal(protos.prototypes, [[1.0, 1.0], [4.0, 0.0]])

    def test_single_shot_is_the_embedding(self, rng):
        support = [rng.normal(size=(1, 3)) for _ in range(3)]
        np.testing.assert_array_equal(compute_prototypes(support).prototypes, np.vstack(support))

    def test_empty_class(self):
        with pytest.raises(DecodeError):
            compute_prototypes([np.zeros((1, 2)), np.zeros((0, 2))])

    def test_mixed_dims(self):
        with pytest.raises(ShapeError):
            compute_prototypes([np.zeros((1, 2)), np.zeros((1, 3))])

    def test_needs_two_classes(self):
        with pytest.raises(DecodeError):
            PrototypeSet(np.zeros((1, 2)))

    def test_group_by_class(self):
        blocks = group_by_class(np.arange(8.0).reshape(4, 2), np.array([1, 0, 1, 0]), 2)
        np.testing.assert_array_equal(blocks[0], [[2, 3], [6, 7]])
        np.testing.assert_array_equal(blocks[1], [[0, 1], [4, 5]])

    def test_distance_modes(self):
        assert distance([0, 0], [3, 4]) == 25.0
        assert distance([0, 0], [3, 4], DistanceMode.EUCLIDEAN) == 5.0
        assert DistanceMode.parse("squared") == DistanceMode.SQUARED_EUCLIDEAN

    def test_pairwise_shape_mismatch(self):
        with pytest.raises(ShapeError):
            pairwise_distances(np.zeros((2, 3)), np.zeros((2, 2)))


class TestProtoNet:
    def test_two_prototypes(self):
        probs = protonet_predict(PrototypeSet(np.array([[0.0, 0.0], [2.0, 0.0]])), np.array([[0.0, 0.0]]))
        np.testing.assert_allclose(probs[0], [0.98201, 0.01799], atol=1e-5)

    def test_equidistant_query_is_uniform(self):
        probs = protonet_predict(PrototypeSet(np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])),
                                 np.array([[0.0, 0.0]]))
        np.testing.assert_allclose(probs[0], 1 / 3)

    def test_valid_distribution(self, rng):
        support, queries = _random_episode(rng)
        probs = protonet_predict(compute_prototypes(support), queries)
        assert np.all(probs >= 0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_far_queries_do_not_overflow(self):
        probs = protonet_predict(PrototypeSet(np.array([[0.0], [1.0]])), np.array([[1e6]]))
        assert np.all(np.isfinite(probs))
        assert predict_labels(probs)[0] == 1

    def test_ties_go_to_lowest_index(self):
        assert predict_labels(np.array([[0.5, 0.5]]))[0] == 0


class TestMct:
    def test_update_with_no_queries_returns_support_means(self):
        support = [np.array([[0.0], [2.0]]), np.array([[5.0]])]
        protos = mct_update(support, np.zeros((0, 1)), np.zeros((0, 2)))
        np.testing.assert_array_equal(protos.prototypes, [[1.0], [5.0]])

    def test_update_single_confident_query(self):
        support = [np.array([[0.0, 0.0]]), np.array([[5.0, 5.0]])]
        protos = mct_update(support, np.array([[2.0, 0.0]]), np.array([[1.0, 0.0]]))
        np.testing.assert_allclose(protos.prototypes, [[1.0, 0.0], [5.0, 5.0]])

    def test_update_weighted_means(self):
        support = [np.array([[0.0, 0.0], [2.0, 0.0]]), np.array([[4.0, 4.0]])]
        queries = np.array([[1.0, 1.0], [3.0, 3.0], [0.0, 2.0]])
        confidences = np.array([[0.5, 0.5], [0.25, 0.75], [1.0, 0.0]])
        protos = mct_update(support, queries, confidences)
        # (2 + 0.5 + 0.75 + 0) / (2 + 1.75) and (4 + 0.5 + 2.25) / (1 + 1.25)
        np.testing.assert_allclose(protos.prototypes, [[13 / 15, 13 / 15], [3.0, 3.0]])

    @pytest.mark.parametrize("steps", range(6))
    def test_mirrored_episode_gives_mirrored_distributions(self, steps, rng):
        mirror = np.array([-1.0, 1.0])
        left = rng.normal(size=(3, 2)) + [2.0, 0.0]
        queries = rng.normal(size=(4, 2)) + [1.0, 0.0]
        support = [left, left * mirror]
        result = mct_predict(support, np.vstack([queries, queries * mirror]),
                             MctConfig(iterations=steps, convergence_eps=0.0))
        np.testing.assert_allclose(result[4:], result[:4, ::-1], atol=1e-12)

    def test_confidence_matches_protonet(self):
        protos = PrototypeSet(np.array([[0.0, 0.0], [2.0, 0.0]]))
        np.testing.assert_allclose(mct_confidence(protos, np.array([0.0, 0.0])), [0.98201, 0.01799], atol=1e-5)

    def test_iteration_bounds(self):
        with pytest.raises(ArgumentError):
            MctConfig(iterations=1001)
        with pytest.raises(ArgumentError):
            MctConfig(iterations=-1)

    @pytest.mark.parametrize("steps", [1, 10])
    def test_transductive_correction(self, outlier_instance, steps):
        support, queries, labels = outlier_instance
        protonet = predict_labels(protonet_predict(compute_prototypes(support), queries))
        refined = predict_labels(mct_predict(support, queries, MctConfig(iterations=steps)))
        assert protonet[3] == 1
        assert refined[3] == 0
        assert (refined == labels).sum() > (protonet == labels).sum()

    def test_zero_steps_equals_protonet(self):
        rng = np.random.default_rng(42)
        worst = 0.0
        for _ in range(1000):
            support, queries = _random_episode(rng)
            expected = protonet_predict(compute_prototypes(support), queries)
            actual = mct_predict(support, queries, MctConfig(iterations=0))
            worst = max(worst, float(np.abs(expected - actual).max()))
        assert worst <= 1e-9

    @pytest.mark.parametrize("mode", ["squared_euclidean", "euclidean"])
    def test_matches_brute_force(self, mode):
        rng = np.random.default_rng(7)
        squared = mode == "squared_euclidean"
        worst = 0.0
        for _ in range(100):
            support, queries = _random_episode(rng, dim=int(rng.integers(1, 9)))
            protos = compute_prototypes(support)
            brute_protos = [[sum(col) / len(block) for col in zip(*block.tolist())] for block in support]
            worst = max(worst, float(np.abs(protos.prototypes - np.array(brute_protos)).max()))

            probs = protonet_predict(protos, queries, DistanceMode(mode))
            brute = [_brute_distribution(x, brute_protos, squared) for x in queries.tolist()]
            worst = max(worst, float(np.abs(probs - np.array(brute)).max()))

            refined = mct_predict(support, queries, MctConfig(iterations=3, convergence_eps=0.0, distance_mode=mode))
            brute_refined = _brute_mct([b.tolist() for b in support], queries.tolist(), 3, squared)
            worst = max(worst, float(np.abs(refined - np.array(brute_refined)).max()))
        assert worst <= 1e-9

    def test_identical_queries_at_prototypes_are_fixed_points(self):
        support = [np.array([[0.0, 0.0]]), np.array([[10.0, 0.0]])]
        queries = np.array([[0.0, 0.0], [10.0, 0.0]])
        result = mct_predict(support, queries, MctConfig(iterations=5))
        np.testing.assert_allclose(result, protonet_predict(compute_prototypes(support), queries), atol=1e-12)


class TestAccuracy:
    def test_episode_accuracy(self):
        assert episode_accuracy(np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]]), np.array([0, 1, 1])) == \
            pytest.approx(2 / 3)

    def test_episodic_mean_is_unweighted(self):
        result = episodic_accuracy([np.array([[1.0, 0.0]]), np.array([[1.0, 0.0], [0.0, 1.0]])],
                                   [np.array([0]), np.array([1, 1])])
        assert result.per_episode == [1.0, 0.5]
        assert result.mean == 0.75

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            episode_accuracy(np.array([[1.0, 0.0]]), np.array([0, 1]))

    def test_no_episodes(self):
        with pytest.raises(ShapeError):
            episodic_accuracy([], [])


class TestEpisodicDecoding:
    @pytest.fixture
    def episodes(self, blob_dataset, blob_split):
        return sample_episodes(blob_dataset, blob_split.meta_test, 20, 2, 1, 5, np.random.default_rng(11))

    @pytest.mark.parametrize("kind", [DecoderKind.PROTONET, DecoderKind.MCT])
    def test_identity_separates_blobs(self, episodes, kind):
        result = evaluate_provider(IdentityProvider(), episodes, kind)
        assert len(result.per_episode) == 20
        assert result.mean >= 0.9

    def test_distributions_per_query(self, episodes):
        probs = decode_episode(IdentityProvider(), episodes[0], DecoderKind.MCT)
        assert probs.shape == (10, 2)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0)

    def test_zero_step_mct_matches_protonet(self, episodes):
        cfg = MctConfig(iterations=0)
        for episode in episodes[:5]:
            np.testing.assert_allclose(decode_episode(IdentityProvider(), episode, DecoderKind.MCT, cfg),
                                       decode_episode(IdentityProvider(), episode, DecoderKind.PROTONET, cfg))


class TestDecoderProperties:
    @pytest.fixture
    def episodes(self):
        rng = np.random.default_rng(5)
        return [_random_episode(rng, dim=4) for _ in range(20)]

    @pytest.mark.parametrize("steps", [0, 5])
    def test_translation_invariance(self, episodes, steps):
        cfg = MctConfig(iterations=steps, convergence_eps=0.0)
        for support, queries in episodes:
            shift = np.full(queries.shape[1], 3.7)
            moved = mct_predict([s + shift for s in support], queries + shift, cfg)
            np.testing.assert_allclose(moved, mct_predict(support, queries, cfg), atol=1e-6)

    def test_class_permutation_equivariance(self, episodes):
        cfg = MctConfig(iterations=5, convergence_eps=0.0)
        for support, queries in episodes:
            perm = np.arange(len(support))[::-1]
            permuted = mct_predict([support[j] for j in perm], queries, cfg)
            np.testing.assert_allclose(permuted, mct_predict(support, queries, cfg)[:, perm], atol=1e-12)

    def test_query_order_independence(self, episodes):
        cfg = MctConfig(iterations=5, convergence_eps=0.0)
        for support, queries in episodes:
            order = np.random.default_rng(0).permutation(len(queries))
            np.testing.assert_allclose(mct_predict(support, queries[order], cfg),
                                       mct_predict(support, queries, cfg)[order], atol=1e-12)

    def test_scaling_sharpens(self, episodes):
        for support, queries in episodes:
            protos = compute_prototypes(support)
            base = protonet_predict(protos, queries)
            scaled = protonet_predict(PrototypeSet(protos.prototypes * 2.0), queries * 2.0)
            unique = (np.sort(base, axis=1)[:, -1] > np.sort(base, axis=1)[:, -2])
            np.testing.assert_array_equal(scaled.argmax(axis=1)[unique], base.argmax(axis=1)[unique])
            assert np.all(scaled.max(axis=1)[unique] >= base.max(axis=1)[unique] - 1e-12)

    def test_uniform_distributions_predict_class_zero(self):
        labels = np.array([0, 1, 2, 0])
        assert episode_accuracy(np.full((4, 3), 1 / 3), labels) == 0.5
