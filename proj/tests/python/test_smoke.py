import math

import numpy as np
import pytest

import dsel


def planted(k, per, sep, dim, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(k * per, dim))
    labels = []
    for c in range(k):
        x[c * per:(c + 1) * per, c] += sep
        labels += [c] * per
    return x, labels


def test_embedding_set_and_round_trip(tmp_path):
    x, labels = planted(3, 5, 4.0, 4, 0)
    s = dsel.EmbeddingSet(x, labels)
    assert len(s) == 15
    assert s.n_categories == 3
    path = tmp_path / "set.bin"
    dsel.save_embeddings(s, path)
    back = dsel.load_embeddings(path)
    assert back.labels == labels
    np.testing.assert_array_equal(back.features, x.astype(np.float32).astype(np.float64))
    assert s.without_labels().labels is None


def test_errors_map_to_dsel_error(tmp_path):
    with pytest.raises(dsel.DselError):
        dsel.load_embeddings(tmp_path / "absent.bin")
    with pytest.raises(ValueError):
        dsel.EmbeddingSet(np.array([[np.nan, 1.0]]))


def test_emd_and_similarity():
    cost = dsel.pairwise_cost(np.array([[0.0], [2.0]]), np.array([[1.0]]))
    value, flow = dsel.solve_emd(cost, [0.5, 0.5], [1.0])
    assert value == pytest.approx(1.0)
    assert flow.shape == (2, 1)
    assert dsel.domain_similarity(math.log(2.0)) == pytest.approx(0.5)


def test_beta_machinery():
    assert dsel.beta_pdf(0.5, 2, 2) == pytest.approx(1.5, abs=1e-9)
    assert dsel.beta_pdf(0.5, 5, 5) == pytest.approx(2.4609375, abs=1e-9)
    r = dsel.beta_weights([0.0, 0.9])
    assert r["weights"][0] == pytest.approx(2.4609375)
    assert dsel.harden_weights(r["weights"], 0.2) == {0: 1.0, 1: 0.0}


def test_accuracy_and_split():
    assert dsel.clustering_accuracy([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0
    rep = dsel.split_accuracy([0, 0, 1, 1], [0, 0, 1, 2], {0})
    assert rep["acc_old"] == 1.0
    assert rep["acc_new"] == 0.5


def test_kmeans_and_semi_supervised():
    x, labels = planted(3, 20, 10.0, 3, 1)
    s = dsel.EmbeddingSet(x, labels)
    pred, centroids, _ = dsel.kmeans(s.without_labels(), 3, seed=2)
    assert dsel.clustering_accuracy(labels, pred) == 1.0
    assert centroids.shape == (3, 3)
    lab = dsel.EmbeddingSet(x[:10], labels[:10])
    joint, _ = dsel.semi_supervised_kmeans(lab, s.without_labels(), 3)
    assert joint[:10] == labels[:10]


def test_train_and_assign(tmp_path):
    x, labels = planted(4, 30, 8.0, 8, 3)
    lab = dsel.EmbeddingSet(x[:60:2], labels[:60:2])
    unl = dsel.EmbeddingSet(x)
    hp = dsel.HyperParams()
    hp.epochs = 40
    hp.seed = 4
    model = dsel.train(lab, unl, 4, hp)
    assert model.K == 4
    assert dsel.clustering_accuracy(labels, model.assign(unl)) == 1.0
    ones = dsel.train(lab, unl, 4, hp, weights={0: 1.0, 1: 1.0})
    np.testing.assert_array_equal(ones.prototypes, model.prototypes)
    model.save(tmp_path / "m.dsmd")
    assert dsel.load_checkpoint(tmp_path / "m.dsmd").K == 4


def test_scene_and_selection():
    scene = dsel.generate_scene(seed=1)
    pooled = scene.pooled()
    assert pooled.n_categories == 20
    assert set(scene.tiers) == {"Similar", "Medium", "Dissimilar", "OOD"}
    unl = scene.target.without_labels()
    bins = dsel.binning_select(pooled, unl, 8, seed=1)
    assert all(bins["weights"][c] == 0.0 for c in range(16, 20))
    greedy = dsel.greedy_select(pooled, unl, 8, budget=8)
    assert sum(w == 1.0 for w in greedy["weights"].values()) == 8
    sims = dsel.category_similarity(pooled, unl)
    assert len(sims) == 20
