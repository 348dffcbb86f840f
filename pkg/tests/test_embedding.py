import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mfgplay.embedding import GramMatrix, Kernel, embed, gram, rkhs_distance
from mfgplay.errors import BadParams, NonPSD


def test_gaussian_kernel_values():
    k = Kernel("gaussian", 2.0)
    K = k(np.array([[0.0], [1.0], [3.0]]), np.array([[0.0]]))
    assert K[:, 0] == pytest.approx([1.0, math.exp(-1 / 8), math.exp(-9 / 8)], abs=1e-15)


def test_laplace_and_identity():
    pts = np.array([[0.0, 0.0], [3.0, 4.0]])
    assert Kernel("laplace", 5.0)(pts, pts)[0, 1] == pytest.approx(math.exp(-1.0))
    assert np.array_equal(Kernel("identity")(pts, pts), np.eye(2))


def test_kernel_roundtrip_and_scale_alias():
    k = Kernel("laplace", 0.7)
    assert Kernel.from_dict(k.to_dict()) == k
    assert Kernel.from_dict({"kind": "gaussian", "scale": 3.0}).bandwidth == 3.0


@pytest.mark.parametrize("bad", [{"kind": "cosine"}, {"kind": "gaussian", "bandwidth": 0.0}])
def test_kernel_rejects_bad_params(bad):
    with pytest.raises(BadParams):
        Kernel.from_dict(bad)


def test_gram_rejects_indefinite_matrix():
    K = np.array([[1.0, 0.9, 0.0], [0.9, 1.0, 0.9], [0.0, 0.9, 1.0]])
    assert np.linalg.eigvalsh(K)[0] < -1e-9
    with pytest.raises(NonPSD):
        GramMatrix(K)


def test_gram_rejects_asymmetric_and_large_diagonal():
    with pytest.raises(NonPSD):
        GramMatrix(np.array([[1.0, 0.2], [0.1, 1.0]]))
    with pytest.raises(BadParams):
        GramMatrix(np.array([[2.0, 0.0], [0.0, 1.0]]))


def test_gram_is_read_only():
    G = gram(Kernel(), np.arange(4.0)[:, None])
    with pytest.raises(ValueError):
        G.K[0, 0] = 0.5


def test_distance_hand_computed():
    # two points, Gaussian kernel with k(x, y) = e^{-1/2}
    G = gram(Kernel("gaussian", 1.0), np.array([[0.0], [1.0]]))
    k = math.exp(-0.5)
    assert rkhs_distance(G, [1, 0], [0, 1]) == pytest.approx(math.sqrt(2 - 2 * k), abs=1e-15)
    e = embed(G, [0.25, 0.75])
    assert e.values == pytest.approx([0.25 + 0.75 * k, 0.25 * k + 0.75])
    assert e.norm == pytest.approx(math.sqrt(0.25**2 + 0.75**2 + 2 * 0.25 * 0.75 * k))


def test_identity_kernel_distance_is_euclidean():
    G = gram(Kernel("identity"), np.arange(3.0)[:, None])
    a, b = np.array([0.2, 0.3, 0.5]), np.array([0.5, 0.5, 0.0])
    assert G.distance(a, b) == pytest.approx(np.linalg.norm(a - b), abs=1e-15)


@given(st.integers(0, 2**31 - 1), st.sampled_from(["gaussian", "laplace", "identity"]))
def test_embedding_norm_bounded_and_metric(seed, kind):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    pts = rng.normal(size=(n, 2))
    G = gram(Kernel(kind, float(rng.uniform(0.2, 3))), pts)
    a, b, c = (rng.dirichlet(np.ones(n)) for _ in range(3))
    assert embed(G, a).norm <= 1 + 1e-12
    assert G.distance(a, a) == 0.0
    assert G.distance(a, b) == pytest.approx(G.distance(b, a), abs=1e-14)
    assert G.distance(a, c) <= G.distance(a, b) + G.distance(b, c) + 1e-12
    # mixing shrinks the distance linearly
    assert G.distance(0.3 * a + 0.7 * b, b) == pytest.approx(0.3 * G.distance(a, b), abs=1e-12)


def test_gram_examples():
    assert np.array_equal(gram(Kernel("identity"), np.arange(3.0)[:, None]).K, np.eye(3))
    G = gram(Kernel("gaussian", 1.0), np.arange(3.0)[:, None])
    assert G.K[0, 1] == pytest.approx(math.exp(-0.5), abs=1e-15)
    assert G.K[0, 2] == pytest.approx(math.exp(-2.0), abs=1e-15)
    assert embed(G, [0.0, 1.0, 0.0]).values == pytest.approx(G.K[:, 1], abs=1e-15)
    assert embed(G, np.full(3, 1 / 3)).values == pytest.approx(G.K.mean(axis=1), abs=1e-15)
    L = np.array([0.1, 0.2, 0.7])
    assert embed(gram(Kernel("identity"), np.arange(3.0)[:, None]), L).values == pytest.approx(L)


@given(st.integers(0, 2**31 - 1))
def test_distance_at_most_two(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    G = gram(Kernel("laplace", float(rng.uniform(0.1, 5))), rng.normal(size=(n, 3)))
    assert rkhs_distance(G, rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))) <= 2.0
