"""Named problem generators and the instance JSON format.

An instance file looks like::

    {"states": [[x, ...], ...], "m": 3, "gamma": 0.9, "r_max": 1.2,
     "nu0": [...], "kernel": {"kind": "gaussian", "bandwidth": 2.0},
     "generator": {"kind": "crowding", "params": {...}}}

``respond`` is rebuilt from ``generator`` on load, so the file alone
reproduces the game.  All reward/transition couplings act through the
embedded values ``e = K @ L`` (which lie in ``[0, 1]`` for the shipped
kernels).

crowding
    Agents on a 1-D or 2-D grid move left/stay/right (or stay/+-x/+-y).
    Reward is an attraction bump around ``target`` minus a move cost, plus a
    congestion term ``c * (1 - e(s))``.  A move into a cell is blocked (the
    agent stays) with probability ``block * c * e(target)``; ``block`` is 0
    by default, which keeps the dynamics independent of the population.  With
    probability ``slip`` a uniformly random action is executed instead, and
    with probability ``respawn`` the agent is redrawn from ``nu0``.
random_contractive
    Random base tables; the coupling ``c`` interpolates every table towards
    an ``e``-dependent one.
torus_nav
    Periodic 2-D grid navigation with the crowding reward.  Coordinates are
    embedded on a product of circles so kernel distances respect the wrap.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedding import Kernel
from .errors import BadParams
from .model import MFGModel

GENERATOR_KINDS = ("crowding", "random_contractive", "torus_nav")

CROWDING_DEFAULTS = {
    "shape": [16],
    "spacing": 1.0,
    "c": 0.2,
    "block": 0.0,
    "slip": 0.1,
    "respawn": 0.2,
    "move_cost": 0.1,
    "target": None,
    "width": None,
    "gamma": 0.9,
    "bandwidth": None,
}


def _normalise(w):
    return w / w.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class GridResponse:
    """Reward/transition response shared by the grid generators.

    ``dest[s, a]`` is the intended destination of action ``a`` from ``s``;
    ``base[s, a]`` the congestion-free reward.
    """

    dest: np.ndarray
    base: np.ndarray
    nu0: np.ndarray
    c: float
    block: float
    slip: float
    respawn: float

    def __call__(self, L, e):
        n, m = self.base.shape
        R = self.base + self.c * (1.0 - e)[:, None]
        stays = self.dest == np.arange(n)[:, None]
        p_block = np.where(stays, 0.0, self.block * self.c * e[self.dest])
        intended = np.zeros((n, m, n))
        s_idx = np.repeat(np.arange(n), m)
        a_idx = np.tile(np.arange(m), n)
        np.add.at(intended, (s_idx, a_idx, self.dest.ravel()), (1.0 - p_block).ravel())
        np.add.at(intended, (s_idx, a_idx, s_idx), p_block.ravel())
        rand_act = intended.mean(axis=1, keepdims=True)
        move = 1.0 - self.slip - self.respawn
        P = move * intended + self.slip * rand_act + self.respawn * self.nu0[None, None, :]
        P /= P.sum(axis=2, keepdims=True)
        return np.clip(R, 0.0, None), P


@dataclass(frozen=True)
class RandomResponse:
    R0: np.ndarray
    B: np.ndarray
    P0: np.ndarray
    P1: np.ndarray
    c: float

    def __call__(self, L, e):
        R = (1.0 - self.c) * self.R0 + self.c * (self.B * e[:, None] + (1.0 - self.B) * (1.0 - e[:, None]))
        Q = self.P1 * np.exp(-e)[None, None, :]
        Q = _normalise(Q)
        P = (1.0 - self.c) * self.P0 + self.c * Q
        P /= P.sum(axis=2, keepdims=True)
        return np.clip(R, 0.0, 1.0), P


def _merge(defaults, params):
    unknown = set(params) - set(defaults)
    if unknown:
        raise BadParams(f"unknown parameters {sorted(unknown)}")
    out = dict(defaults)
    out.update(params)
    return out


def _check_probs(p):
    for key in ("slip", "respawn"):
        if not 0.0 <= p[key] < 1.0:
            raise BadParams(f"{key} must lie in [0, 1)")
    if p["slip"] + p["respawn"] >= 1.0:
        raise BadParams("slip + respawn must be < 1")
    if p["c"] < 0 or p["block"] < 0 or p["c"] * p["block"] > 1.0:
        raise BadParams("need c >= 0, block >= 0 and c * block <= 1")
    if p["move_cost"] < 0:
        raise BadParams("move_cost must be >= 0")
    if not 0.0 < p["gamma"] < 1.0:
        raise BadParams("gamma must lie in (0, 1)")


def _grid_model(kind, p, points, dest, dist2, moving, bandwidth):
    n = points.shape[0]
    width = p["width"]
    attraction = np.exp(-dist2 / (2.0 * width**2))
    base = attraction[:, None] + p["move_cost"] * (1.0 - moving)
    nu0 = np.full(n, 1.0 / n)
    r_max = 1.0 + p["move_cost"] + p["c"]
    respond = GridResponse(dest, base, nu0, float(p["c"]), float(p["block"]),
                           float(p["slip"]), float(p["respawn"]))
    kernel = Kernel("gaussian", float(bandwidth))
    params = {k: (list(v) if isinstance(v, tuple) else v) for k, v in p.items()}
    return MFGModel(points, dest.shape[1], float(p["gamma"]), r_max, nu0, respond, kernel,
                    {"kind": kind, "params": params})


def crowding(params=None) -> MFGModel:
    p = _merge(CROWDING_DEFAULTS, params or {})
    _check_probs(p)
    shape = [int(k) for k in np.atleast_1d(p["shape"])]
    if len(shape) not in (1, 2) or min(shape) < 1:
        raise BadParams(f"crowding grid shape must have 1 or 2 positive sides, got {shape}")
    h = float(p["spacing"])
    grids = np.meshgrid(*[np.arange(k) for k in shape], indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1)
    points = idx * h
    n = points.shape[0]
    if len(shape) == 1:
        steps = np.array([[-1], [0], [1]])
    else:
        steps = np.array([[0, 0], [-1, 0], [1, 0], [0, -1], [0, 1]])
    target_idx = idx.max(axis=0) * 0.5
    if p["target"] is None:
        p["target"] = [float(t * h) for t in target_idx]
    if p["width"] is None:
        p["width"] = float(max(shape) * h / 4.0)
    if p["bandwidth"] is None:
        p["bandwidth"] = 2.0 * h
    flat = np.ravel_multi_index
    dest = np.empty((n, steps.shape[0]), dtype=np.int64)
    for a, st in enumerate(steps):
        moved = np.clip(idx + st, 0, np.array(shape) - 1)
        dest[:, a] = flat(tuple(moved.T), tuple(shape))
    moving = np.any(steps != 0, axis=1).astype(float)[None, :].repeat(n, axis=0)
    target = np.asarray(p["target"], dtype=float)
    dist2 = np.sum((points - target) ** 2, axis=1)
    return _grid_model("crowding", p, points, dest, dist2, moving, p["bandwidth"])


TORUS_DEFAULTS = dict(CROWDING_DEFAULTS, shape=[5, 5])


def torus_nav(params=None) -> MFGModel:
    p = _merge(TORUS_DEFAULTS, params or {})
    _check_probs(p)
    shape = [int(k) for k in np.atleast_1d(p["shape"])]
    if len(shape) != 2 or min(shape) < 2:
        raise BadParams("torus_nav needs a 2-D shape with sides >= 2")
    grids = np.meshgrid(*[np.arange(k) for k in shape], indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1)
    n = idx.shape[0]
    h = float(p["spacing"])
    # circle radius chosen so neighbouring cells sit about h apart
    cols = []
    for ax, k in enumerate(shape):
        r = h * k / (2.0 * math.pi)
        theta = 2.0 * math.pi * idx[:, ax] / k
        cols += [r * np.cos(theta), r * np.sin(theta)]
    points = np.stack(cols, axis=1)
    steps = np.array([[0, 0], [-1, 0], [1, 0], [0, -1], [0, 1]])
    dest = np.empty((n, 5), dtype=np.int64)
    for a, st in enumerate(steps):
        moved = (idx + st) % np.array(shape)
        dest[:, a] = np.ravel_multi_index(tuple(moved.T), tuple(shape))
    if p["target"] is None:
        p["target"] = [0.0, 0.0]
    if p["width"] is None:
        p["width"] = float(max(shape) * h / 4.0)
    if p["bandwidth"] is None:
        p["bandwidth"] = 2.0 * h
    target = np.asarray(p["target"], dtype=float)
    wrap = np.abs(idx - target)
    wrap = np.minimum(wrap, np.array(shape) - wrap) * h
    dist2 = np.sum(wrap**2, axis=1)
    moving = np.any(steps != 0, axis=1).astype(float)[None, :].repeat(n, axis=0)
    return _grid_model("torus_nav", p, points, dest, dist2, moving, p["bandwidth"])


RANDOM_DEFAULTS = {"n": 6, "m": 3, "c": 0.2, "gamma": 0.9, "bandwidth": 1.0, "dim": 2,
                   "seed": 0, "tables": None}


def random_contractive(params=None) -> MFGModel:
    p = _merge(RANDOM_DEFAULTS, params or {})
    n, m = int(p["n"]), int(p["m"])
    if n < 1 or m < 1:
        raise BadParams("random_contractive needs n >= 1 and m >= 1")
    if not 0.0 <= p["c"] <= 1.0:
        raise BadParams("coupling c must lie in [0, 1]")
    if not 0.0 < p["gamma"] < 1.0:
        raise BadParams("gamma must lie in (0, 1)")
    tables = p["tables"]
    if tables is None:
        rng = np.random.default_rng(int(p["seed"]))
        tables = {
            "points": rng.uniform(0.0, 2.0, size=(n, int(p["dim"]))).tolist(),
            "R0": rng.uniform(0.0, 1.0, size=(n, m)).tolist(),
            "B": rng.uniform(0.0, 1.0, size=(n, m)).tolist(),
            "P0": rng.dirichlet(np.ones(n), size=(n, m)).tolist(),
            "P1": rng.dirichlet(np.ones(n), size=(n, m)).tolist(),
        }
        p["tables"] = tables
    arr = {k: np.asarray(v, dtype=float) for k, v in tables.items()}
    if arr["R0"].shape != (n, m) or arr["P0"].shape != (n, m, n):
        raise BadParams("stored tables do not match n and m")
    respond = RandomResponse(arr["R0"], arr["B"], arr["P0"], arr["P1"], float(p["c"]))
    nu0 = np.full(n, 1.0 / n)
    kernel = Kernel("gaussian", float(p["bandwidth"]))
    return MFGModel(arr["points"], m, float(p["gamma"]), 1.0, nu0, respond, kernel,
                    {"kind": "random_contractive", "params": p})


_BUILDERS = {"crowding": crowding, "random_contractive": random_contractive, "torus_nav": torus_nav}


def generate_instance(kind: str, params=None, seed=None) -> MFGModel:
    """Build a named instance.  ``seed`` only matters for random generators."""
    if kind not in _BUILDERS:
        raise BadParams(f"unknown generator {kind!r}; expected one of {GENERATOR_KINDS}")
    params = dict(params or {})
    if seed is not None and kind == "random_contractive":
        params.setdefault("seed", int(seed))
    return _BUILDERS[kind](params)


def shipped_instance(**overrides) -> MFGModel:
    """Default 1-D crowding instance used by the acceptance suite."""
    return crowding(overrides)


# --------------------------------------------------------------------------
# JSON
# --------------------------------------------------------------------------

def instance_to_dict(model: MFGModel) -> dict:
    gen = model.generator
    if not gen:
        raise BadParams("model has no generator record and cannot be serialised")
    return {
        "states": model.points.tolist(),
        "m": int(model.m),
        "gamma": float(model.gamma),
        "r_max": float(model.r_max),
        "nu0": model.nu0.tolist(),
        "kernel": model.kernel.to_dict(),
        "generator": json.loads(json.dumps(gen)),
    }


def instance_from_dict(d: dict) -> MFGModel:
    try:
        gen = d["generator"]
        kind, params = gen["kind"], dict(gen.get("params", {}))
    except (KeyError, TypeError) as exc:
        raise BadParams(f"instance is missing its generator record: {exc}") from exc
    if kind == "random_contractive":
        params.setdefault("gamma", d.get("gamma", RANDOM_DEFAULTS["gamma"]))
    else:
        params.setdefault("gamma", d.get("gamma", CROWDING_DEFAULTS["gamma"]))
    model = generate_instance(kind, params)
    if "kernel" in d:
        kernel = Kernel.from_dict(d["kernel"])
        model = MFGModel(model.points, model.m, model.gamma, model.r_max, model.nu0,
                         model.respond, kernel, model.generator)
    if "states" in d and not np.allclose(np.asarray(d["states"], dtype=float), model.points):
        raise BadParams("stored states disagree with the regenerated instance")
    return model


def dump_instance(model: MFGModel) -> str:
    return json.dumps(instance_to_dict(model), indent=1, sort_keys=True)


def save_instance(model: MFGModel, path) -> None:
    Path(path).write_text(dump_instance(model) + "\n")


def load_instance(path) -> MFGModel:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise BadParams(f"cannot read instance {path}: {exc}") from exc
    return instance_from_dict(d)
