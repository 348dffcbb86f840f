"""Policy-evaluation step of the fictitious-play loop.

Three evaluators produce an estimate ``Q_hat`` of the regularised Q-function:

* ``exact`` -- linear solve, ``Q_hat = Q``;
* ``noisy`` -- ``Q`` plus i.i.d. uniform noise on ``[-eps, eps]``, clipped to
  ``[0, Q_max]``, so ``|Q - Q_hat| <= eps`` holds pointwise;
* ``td0`` -- tabular TD(0) estimate of ``V`` from sampled trajectories, with
  ``Q_hat = R + gamma P V_hat`` assembled from the known model.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import BadParams, DegeneratePolicy
from .mdp import evaluate_policy_exact
from .model import InstantiatedMDP


def _require_positive(pi, lam):
    if lam > 0 and np.any(pi <= 0):
        raise DegeneratePolicy("evaluation needs a strictly positive policy")


class ExactEvaluator:
    kind = "exact"

    def __call__(self, mdp: InstantiatedMDP, pi) -> np.ndarray:
        _require_positive(pi, mdp.lam)
        return evaluate_policy_exact(mdp, pi)[1]

    def to_dict(self):
        return {"kind": "exact"}


@dataclass
class NoisyEvaluator:
    epsilon: float
    seed: int = 0
    kind: str = field(default="noisy", init=False)

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise BadParams(f"epsilon must be >= 0, got {self.epsilon}")
        self._rng = np.random.default_rng(self.seed)

    def __call__(self, mdp: InstantiatedMDP, pi) -> np.ndarray:
        _require_positive(pi, mdp.lam)
        q = evaluate_policy_exact(mdp, pi)[1]
        if self.epsilon == 0:
            return np.clip(q, 0.0, mdp.q_max)
        noise = self._rng.uniform(-self.epsilon, self.epsilon, size=q.shape)
        return np.clip(q + noise, 0.0, mdp.q_max)

    def to_dict(self):
        return {"kind": "noisy", "epsilon": self.epsilon, "seed": self.seed}


@dataclass
class TD0Evaluator:
    """Tabular TD(0) with step size ``c / (c + visits(s))``.

    Episodes start from a uniformly random state so every state gets visited;
    each runs ``horizon`` steps under ``pi``.
    """

    episodes: int = 1000
    horizon: int = 50
    c: float = 100.0
    seed: int = 0
    chunk: int = 8192
    kind: str = field(default="td0", init=False)

    def __post_init__(self):
        if self.episodes < 1 or self.horizon < 1:
            raise BadParams("td0 needs episodes >= 1 and horizon >= 1")
        if not self.c > 0:
            raise BadParams("td0 step constant must be positive")
        self._rng = np.random.default_rng(self.seed)

    def estimate_value(self, mdp: InstantiatedMDP, pi) -> np.ndarray:
        pi = np.asarray(pi, dtype=float)
        _require_positive(pi, mdp.lam)
        n = mdp.n
        reward = mdp.R.copy()
        if mdp.lam > 0:
            reward -= mdp.lam * np.log(pi)
        pi_cdf = np.cumsum(pi, axis=1)
        P_cdf = np.cumsum(mdp.P, axis=2)
        v = np.zeros(n)
        visits = np.zeros(n, dtype=np.int64)
        done = 0
        while done < self.episodes:
            k = min(self.chunk, self.episodes - done)
            starts = self._rng.integers(0, n, size=k)
            u_act = self._rng.random((k, self.horizon))
            u_next = self._rng.random((k, self.horizon))
            kernels.td0_chunk(v, visits, starts, u_act, u_next, pi_cdf, P_cdf, reward,
                              float(mdp.gamma), float(self.c))
            done += k
        return v

    def __call__(self, mdp: InstantiatedMDP, pi) -> np.ndarray:
        v = self.estimate_value(mdp, pi)
        q = mdp.R + mdp.gamma * (mdp.P @ v)
        return np.clip(q, 0.0, mdp.q_max)

    def to_dict(self):
        return {"kind": "td0", "episodes": self.episodes, "horizon": self.horizon,
                "c": self.c, "seed": self.seed}


def make_evaluator(spec=None):
    """Build an evaluator from a config mapping such as ``{"kind": "noisy", "epsilon": 0.01}``."""
    if spec is None:
        return ExactEvaluator()
    if not isinstance(spec, dict):
        return spec
    kind = spec.get("kind", "exact")
    if kind == "exact":
        return ExactEvaluator()
    if kind == "noisy":
        return NoisyEvaluator(float(spec.get("epsilon", 0.0)), int(spec.get("seed", 0)))
    if kind == "td0":
        return TD0Evaluator(int(spec.get("episodes", 1000)), int(spec.get("horizon", 50)),
                            float(spec.get("c", 100.0)), int(spec.get("seed", 0)))
    raise BadParams(f"unknown evaluator kind {kind!r}")


def evaluate(kind, mdp: InstantiatedMDP, pi) -> np.ndarray:
    return make_evaluator(kind)(mdp, pi)
