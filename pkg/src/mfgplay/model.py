"""Finite mean-field game model, distributions, policies and the mean-field map.

Distributions are length-``n`` float arrays and policies are ``n x m``
row-stochastic arrays; the ``check_*`` helpers validate them.  A model's
``respond`` callable maps a mean-field state (raw weights plus the embedded
values ``K @ L``) to the reward table and transition tensor of the induced
single-agent MDP.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .embedding import GramMatrix, Kernel, gram
from .errors import InvalidDistribution, InvalidModel, InvalidPolicy

SIMPLEX_TOL = 1e-12
ARITH_TOL = 1e-10

RespondFn = Callable[[np.ndarray, np.ndarray], tuple]


def check_distribution(L, n: Optional[int] = None, tol: float = SIMPLEX_TOL) -> np.ndarray:
    L = np.asarray(L, dtype=float)
    if L.ndim != 1 or (n is not None and L.shape[0] != n):
        raise InvalidDistribution(f"expected a length-{n} vector, got shape {L.shape}")
    if not np.all(np.isfinite(L)) or np.min(L) < 0.0:
        raise InvalidDistribution("distribution has negative or non-finite entries")
    if abs(L.sum() - 1.0) > tol:
        raise InvalidDistribution(f"distribution sums to {L.sum():.15g}")
    return L


def check_policy(pi, n: Optional[int] = None, m: Optional[int] = None,
                 tol: float = SIMPLEX_TOL) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 2 or (n is not None and pi.shape[0] != n) or (m is not None and pi.shape[1] != m):
        raise InvalidPolicy(f"expected a {n}x{m} policy, got shape {pi.shape}")
    if not np.all(np.isfinite(pi)) or np.min(pi) < 0.0:
        raise InvalidPolicy("policy has negative or non-finite entries")
    err = np.max(np.abs(pi.sum(axis=1) - 1.0))
    if err > tol:
        raise InvalidPolicy(f"policy rows deviate from 1 by {err:.3e}")
    return pi


def uniform_policy(n: int, m: int) -> np.ndarray:
    return np.full((n, m), 1.0 / m)


@dataclass(frozen=True)
class InstantiatedMDP:
    """Single-agent MDP induced by a fixed mean-field state."""

    R: np.ndarray
    P: np.ndarray
    gamma: float
    nu0: np.ndarray
    lam: float = 0.0
    r_max: float = 1.0

    def __post_init__(self):
        R = np.ascontiguousarray(self.R, dtype=float)
        P = np.ascontiguousarray(self.P, dtype=float)
        n, m = R.shape
        if P.shape != (n, m, n):
            raise InvalidModel(f"transition tensor has shape {P.shape}, expected {(n, m, n)}")
        if not 0.0 <= self.gamma < 1.0:
            raise InvalidModel(f"discount must lie in [0, 1), got {self.gamma}")
        if self.lam < 0:
            raise InvalidModel(f"regularisation must be >= 0, got {self.lam}")
        if not np.all(np.isfinite(R)) or R.min() < -SIMPLEX_TOL or R.max() > self.r_max + SIMPLEX_TOL:
            raise InvalidModel(f"rewards leave [0, {self.r_max}]: range [{R.min()}, {R.max()}]")
        if not np.all(np.isfinite(P)) or P.min() < 0.0:
            raise InvalidModel("transition tensor has negative or non-finite entries")
        err = np.max(np.abs(P.sum(axis=2) - 1.0))
        if err > SIMPLEX_TOL:
            raise InvalidModel(f"transition rows fail to normalise (error {err:.3e})")
        nu0 = check_distribution(self.nu0, n)
        for arr in (R, P, nu0):
            arr.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "nu0", nu0)

    @property
    def n(self) -> int:
        return self.R.shape[0]

    @property
    def m(self) -> int:
        return self.R.shape[1]

    @property
    def q_max(self) -> float:
        return (self.r_max + self.gamma * self.lam * np.log(self.m)) / (1.0 - self.gamma)

    def with_lam(self, lam: float) -> "InstantiatedMDP":
        return InstantiatedMDP(self.R, self.P, self.gamma, self.nu0, lam, self.r_max)

    def policy_transition(self, pi) -> np.ndarray:
        return np.einsum("sa,sat->st", pi, self.P)


@dataclass(frozen=True)
class MFGModel:
    """A stationary mean-field game on a finite point set.

    ``points`` is an ``n x d`` array of state coordinates and ``m`` the number
    of actions.  ``generator`` records how ``respond`` was built so that the
    instance can be written to and read back from JSON.
    """

    points: np.ndarray
    m: int
    gamma: float
    r_max: float
    nu0: np.ndarray
    respond: RespondFn
    kernel: Kernel = field(default_factory=Kernel)
    generator: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] < 1 or pts.shape[1] < 1:
            raise InvalidModel("need at least one state with at least one coordinate")
        if len({tuple(p) for p in pts}) != pts.shape[0]:
            raise InvalidModel("state points must be distinct")
        if self.m < 1:
            raise InvalidModel("need at least one action")
        if not 0.0 < self.gamma < 1.0:
            raise InvalidModel(f"discount must lie in (0, 1), got {self.gamma}")
        if not self.r_max > 0:
            raise InvalidModel("r_max must be positive")
        nu0 = check_distribution(self.nu0, pts.shape[0])
        pts.setflags(write=False)
        nu0.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "nu0", nu0)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def gram(self) -> GramMatrix:
        return gram(self.kernel, self.points)


def instantiate(model: MFGModel, L, embed_values, lam: float = 0.0) -> InstantiatedMDP:
    """Freeze the reward and transition tables induced by mean field ``L``."""
    L = check_distribution(L, model.n, tol=ARITH_TOL)
    R, P = model.respond(L, np.asarray(embed_values, dtype=float))
    return InstantiatedMDP(R, P, model.gamma, model.nu0, lam, model.r_max)


def mean_field_step(mdp: InstantiatedMDP, pi, L) -> np.ndarray:
    """One step of the population dynamics when everyone plays ``pi``."""
    pi = check_policy(pi, mdp.n, mdp.m, tol=ARITH_TOL)
    L = check_distribution(L, mdp.n, tol=ARITH_TOL)
    return kernels.push_forward(mdp.P, pi, L)


def gamma2(model: MFGModel, G: GramMatrix, pi, L) -> tuple:
    """Next mean field and its embedding: ``(L+, K @ L+)``."""
    L = np.asarray(L, dtype=float)
    mdp = instantiate(model, L, G.values(L))
    L_next = mean_field_step(mdp, pi, L)
    return L_next, G.values(L_next)
