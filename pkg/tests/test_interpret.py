import numpy as np
import pytest

from deepseenet.interpret import (
    DegenerateInputError,
    TsneConfig,
    input_gradient,
    nearest_centroid_purity,
    saliency,
    top_mass_fraction,
    tsne,
)
from deepseenet.interpret.tsne import (
    conditional_probabilities,
    joint_probabilities,
    squared_distances,
)
from deepseenet.nnet.layers import Conv2D, Dense, GlobalAvgPool, MaxPool, ReLU
from deepseenet.nnet.network import Network

from oracles import pairwise_sq_dists


def linear_net(side=6, classes=3, seed=0):
    return Network([Dense(classes)], (side, side, 3), classes).initialize(seed)


# -- saliency ----------------------------------------------------------------------

def test_linear_model_saliency_is_weight_magnitude():
    net = linear_net()
    img = np.random.default_rng(0).random((6, 6, 3))
    for c in range(3):
        w = net.layers[0].params["W"][:, c].reshape(6, 6, 3)
        assert np.allclose(input_gradient(net, img, c), w, atol=1e-12)
        expect = np.abs(w).max(axis=-1)
        smap = saliency(net, img, c)
        assert smap.shape == (6, 6)
        assert np.allclose(smap, expect / expect.max(), atol=1e-12)
        assert smap.max() == 1.0 and smap.min() >= 0


def test_zero_weights_give_zero_map():
    net = linear_net()
    net.layers[0].params["W"][:] = 0.0
    smap = saliency(net, np.ones((6, 6, 3)), 1)
    assert not smap.any()


def test_class_out_of_range():
    with pytest.raises(ValueError):
        saliency(linear_net(), np.zeros((6, 6, 3)), 3)
    with pytest.raises(ValueError):
        saliency(linear_net(), np.zeros((6, 6, 3)), -1)


def test_saliency_matches_finite_differences():
    net = Network([Conv2D(3, 4), ReLU(), MaxPool(2), GlobalAvgPool(), Dense(5), ReLU(),
                   Dense(2)], (8, 8, 3), 2).initialize(3)
    img = np.random.default_rng(1).random((8, 8, 3))
    smap = saliency(net, img, 1)
    eps = 1e-6
    fd = np.zeros((8, 8, 3))
    for idx in np.ndindex(8, 8, 3):
        up, down = img.copy(), img.copy()
        up[idx] += eps
        down[idx] -= eps
        fd[idx] = (net.logits(up[None])[0, 1] - net.logits(down[None])[0, 1]) / (2 * eps)
    fd_map = np.abs(fd).max(axis=-1)
    fd_map /= fd_map.max()
    top = np.argsort(-smap.ravel())[:10]
    rel = np.abs(smap.ravel()[top] - fd_map.ravel()[top]) / np.maximum(fd_map.ravel()[top], 1e-12)
    assert rel.max() < 1e-3


def test_top_mass_fraction():
    smap = np.zeros((10, 10))
    smap[:5, :5] = 1.0
    region = np.zeros((10, 10), dtype=bool)
    region[:5, :5] = True
    assert top_mass_fraction(smap, region) == 1.0
    assert top_mass_fraction(smap, ~region) == 0.0
    assert top_mass_fraction(np.zeros((4, 4)), region[:4, :4]) == 0.0


# -- t-SNE ------------------------------------------------------------------------

def clusters(n_per=30, dim=128, seed=0, spread=10.0):
    rng = np.random.default_rng(seed)
    centres = rng.normal(0, spread, (3, dim))
    x = np.concatenate([c + rng.normal(size=(n_per, dim)) for c in centres])
    return x, np.repeat(np.arange(3), n_per)


def test_squared_distances_match_loops():
    x = np.random.default_rng(2).normal(size=(7, 4))
    assert np.allclose(squared_distances(x), pairwise_sq_dists(x.tolist()), atol=1e-12)


def test_conditional_rows_and_perplexity():
    x, _ = clusters(10, 8)
    cond = conditional_probabilities(x, 5.0)
    assert np.allclose(cond.sum(axis=1), 1.0, atol=1e-6)
    assert np.all(np.diag(cond) == 0)
    rows = np.where(cond > 0, cond, 1.0)
    entropy = -np.sum(cond * np.log(rows), axis=1)
    assert np.allclose(entropy, np.log(5.0), atol=1e-4)


def test_joint_probabilities_symmetric():
    x, _ = clusters(8, 5, seed=3)
    p = joint_probabilities(x, 4.0)
    assert np.allclose(p, p.T, atol=0)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) < 1e-6


def test_tsne_clusters_purity_and_kl():
    x, y = clusters()
    res = tsne(x, TsneConfig(perplexity=30, iterations=500, seed=0))
    assert res.embedding.shape == (90, 2)
    assert nearest_centroid_purity(res.embedding, y) >= 0.9
    assert res.final_kl < res.initial_kl
    assert all(kl >= 0 for _, kl in res.kl_history)
    assert [it for it, _ in res.kl_history] == [0] + list(range(50, 501, 50))


def test_tsne_deterministic_and_permutation_equivariant():
    x, _ = clusters(8, 6, seed=4)
    cfg = TsneConfig(perplexity=5, iterations=120, seed=2)
    a = tsne(x, cfg)
    assert np.array_equal(a.embedding, tsne(x, cfg).embedding)
    perm = np.random.default_rng(5).permutation(len(x))
    b = tsne(x[perm], cfg, ids=perm)
    assert np.array_equal(b.embedding, a.embedding[perm])
    assert b.kl_history == a.kl_history


def test_perplexity_clamped():
    x, _ = clusters(3, 4, seed=6)
    assert tsne(x, TsneConfig(iterations=10)).perplexity == pytest.approx(8 / 3)


def test_tsne_errors():
    with pytest.raises(DegenerateInputError):
        tsne(np.ones((6, 3)))
    with pytest.raises(ValueError):
        tsne(np.random.default_rng(0).random((3, 3)))
    with pytest.raises(ValueError):
        tsne(np.random.default_rng(0).random((5, 3)), ids=[0, 1, 2, 3, 3])
    with pytest.raises(ValueError):
        TsneConfig(perplexity=1.5)
    with pytest.raises(ValueError):
        TsneConfig(iterations=0)


@pytest.mark.parametrize("seed", range(5))
def test_final_kl_below_initial_on_random_input(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(4, 40)), int(rng.integers(1, 20))
    res = tsne(rng.normal(size=(n, d)), TsneConfig(seed=seed))
    assert res.final_kl < res.initial_kl
    assert all(kl >= 0 for _, kl in res.kl_history)
