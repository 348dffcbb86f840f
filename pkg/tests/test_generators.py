import json
import math

import numpy as np
import pytest

from mfgplay.diagnostics import estimate_lipschitz
from mfgplay.errors import BadParams
from mfgplay.generators import (dump_instance, generate_instance, instance_from_dict,
                                instance_to_dict, load_instance, save_instance,
                                shipped_instance)
from mfgplay.model import instantiate
from mfgplay.play import compute_ne


def _tables(model, L):
    G = model.gram()
    mdp = instantiate(model, L, G.values(L))
    return mdp.R, mdp.P


@pytest.mark.parametrize("kind,params", [("crowding", {"c": 0.0}),
                                         ("random_contractive", {"c": 0.0}),
                                         ("torus_nav", {"c": 0.0, "shape": [3, 3]})])
def test_zero_coupling_is_population_independent(kind, params):
    model = generate_instance(kind, params, seed=1)
    rng = np.random.default_rng(0)
    R0, P0 = _tables(model, rng.dirichlet(np.ones(model.n)))
    R1, P1 = _tables(model, rng.dirichlet(np.ones(model.n)))
    assert np.array_equal(R0, R1)
    assert np.max(np.abs(P0 - P1)) < 1e-15


def test_two_state_crowding_by_hand():
    model = generate_instance("crowding", {"shape": [2], "bandwidth": 1.0, "c": 0.2})
    L = np.array([0.3, 0.7])
    R, P = _tables(model, L)
    k = math.exp(-0.5)
    e = np.array([0.3 + 0.7 * k, 0.3 * k + 0.7])
    # target at 0.5 with width 0.5: both cells get attraction exp(-1/2)
    expected = k + np.array([0.0, 0.1, 0.0])[None, :] + 0.2 * (1 - e)[:, None]
    assert R == pytest.approx(expected, abs=1e-15)
    # left/stay/right with slip 0.1 and respawn 0.2 onto the uniform nu0
    intended = np.array([[[1, 0], [1, 0], [0, 1]], [[1, 0], [0, 1], [0, 1]]], dtype=float)
    rand = intended.mean(axis=1, keepdims=True)
    assert P == pytest.approx(0.7 * intended + 0.1 * rand + 0.2 * 0.5, abs=1e-15)


def test_shipped_instance_shape():
    model = shipped_instance()
    assert (model.n, model.m, model.gamma) == (16, 3, 0.9)
    assert model.kernel.bandwidth == 2.0


def test_json_roundtrip(tmp_path):
    for kind, params in (("crowding", {"shape": [3, 2]}), ("random_contractive", {"n": 4}),
                         ("torus_nav", {})):
        model = generate_instance(kind, params, seed=5)
        path = tmp_path / f"{kind}.json"
        save_instance(model, path)
        back = load_instance(path)
        assert dump_instance(back) == dump_instance(model)
        L = np.full(model.n, 1.0 / model.n)
        for a, b in zip(_tables(model, L), _tables(back, L)):
            assert np.array_equal(a, b)
        assert set(json.loads(path.read_text())) >= {"states", "m", "gamma", "r_max", "nu0", "generator"}


def test_random_generator_is_seeded():
    a = dump_instance(generate_instance("random_contractive", {}, seed=3))
    b = dump_instance(generate_instance("random_contractive", {}, seed=3))
    c = dump_instance(generate_instance("random_contractive", {}, seed=4))
    assert a == b and a != c


def test_torus_wraps():
    model = generate_instance("torus_nav", {"shape": [4, 4]})
    G = model.gram()
    # corner cells are neighbours on the torus
    assert G.K[0, 3] == pytest.approx(G.K[0, 1])
    assert G.K[0, 12] == pytest.approx(G.K[0, 4])


@pytest.mark.parametrize("kind,params", [
    ("crowding", {"slip": 1.2}), ("crowding", {"slip": 0.6, "respawn": 0.5}),
    ("crowding", {"shape": [2, 2, 2]}), ("crowding", {"colour": 1}),
    ("crowding", {"gamma": 1.0}), ("random_contractive", {"c": 2.0}),
    ("torus_nav", {"shape": [5]}), ("nope", {})])
def test_bad_params(kind, params):
    with pytest.raises(BadParams):
        generate_instance(kind, params)


def test_instance_without_generator_rejected():
    with pytest.raises(BadParams):
        instance_from_dict({"states": [[0.0]], "m": 1})
    d = instance_to_dict(shipped_instance())
    d["states"][0] = [99.0]
    with pytest.raises(BadParams):
        instance_from_dict(d)


def test_default_instance_passes_contraction_screen():
    model = shipped_instance()
    est = estimate_lipschitz(model, model.gram(), 0.5, 200, seed=0)
    assert est.d1 * est.d2 + est.d3 < 1


def test_small_coupling_random_instance_passes_screen():
    model = generate_instance("random_contractive", {"c": 0.1}, seed=2)
    est = estimate_lipschitz(model, model.gram(), 0.5, 100, seed=0)
    assert est.contraction < 1
    compute_ne(model, model.gram(), 0.5, 1e-10)
