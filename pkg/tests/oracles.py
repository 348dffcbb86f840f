"""Independent reference computations used by the tests.

Nothing here calls the package's solvers: values come from truncated
series, Monte-Carlo rollouts, exhaustive enumeration or grid search.
"""

import itertools
import math

import numpy as np

from mfgplay.model import InstantiatedMDP


def random_mdp(rng, n, m, lam=0.0, gamma=None, r_max=1.0) -> InstantiatedMDP:
    gamma = float(rng.uniform(0.3, 0.95)) if gamma is None else gamma
    R = rng.uniform(0.0, r_max, size=(n, m))
    P = rng.dirichlet(np.full(n, 0.5), size=(n, m))
    P /= P.sum(axis=2, keepdims=True)
    nu0 = rng.dirichlet(np.ones(n))
    return InstantiatedMDP(R, P, gamma, nu0, lam, r_max)


def random_policy(rng, n, m, floor=1e-3):
    pi = rng.dirichlet(np.ones(m), size=n)
    return (1 - m * floor) * pi + floor


def reg_reward(mdp, pi):
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(pi > 0, pi * np.log(pi), 0.0)
    return (pi * mdp.R).sum(axis=1) - mdp.lam * ent.sum(axis=1)


def series_value(mdp, pi, tol=1e-15):
    """``V = sum_k gamma^k P_pi^k r_pi`` summed until the tail is below ``tol``."""
    P_pi = np.einsum("sa,sat->st", pi, mdp.P)
    r = reg_reward(mdp, pi)
    v = np.zeros(mdp.n)
    term = r.copy()
    k = 0
    while True:
        v += term
        k += 1
        term = mdp.gamma * (P_pi @ term)
        bound = np.abs(term).max() / (1 - mdp.gamma)
        if bound < tol or k > 100000:
            return v


def series_visitation(mdp, pi, tol=1e-15):
    P_pi = np.einsum("sa,sat->st", pi, mdp.P)
    d = mdp.nu0.copy()
    rho = np.zeros(mdp.n)
    w = 1.0
    while w > tol:
        rho += w * d
        d = d @ P_pi
        w *= mdp.gamma
    return (1 - mdp.gamma) * rho


def mc_value(mdp, pi, episodes, horizon, rng, start=None, with_se=False):
    """Monte-Carlo discounted return of the regularised reward, per start state.

    With ``with_se`` also returns the standard error of each mean.
    """
    n, m = mdp.n, mdp.m
    r = mdp.R.copy()
    if mdp.lam > 0:
        r = r - mdp.lam * np.log(pi)
    out = np.zeros(n)
    se = np.zeros(n)
    states = range(n) if start is None else [start]
    for s0 in states:
        s = np.full(episodes, s0)
        ret = np.zeros(episodes)
        disc = 1.0
        for _ in range(horizon):
            u = rng.random(episodes)
            a = (u[:, None] > np.cumsum(pi[s], axis=1)).sum(axis=1)
            a = np.minimum(a, m - 1)
            ret += disc * r[s, a]
            u2 = rng.random(episodes)
            s = np.minimum((u2[:, None] > np.cumsum(mdp.P[s, a], axis=1)).sum(axis=1), n - 1)
            disc *= mdp.gamma
        out[s0] = ret.mean()
        se[s0] = ret.std(ddof=1) / math.sqrt(episodes)
    return (out, se) if with_se else out


def brute_force_optimum(mdp):
    """Best deterministic policy by enumeration (unregularised objective)."""
    n, m = mdp.n, mdp.m
    best, best_pi = -math.inf, None
    for acts in itertools.product(range(m), repeat=n):
        pi = np.zeros((n, m))
        pi[np.arange(n), acts] = 1.0
        P_pi = mdp.P[np.arange(n), acts]
        v = np.linalg.solve(np.eye(n) - mdp.gamma * P_pi, mdp.R[np.arange(n), acts])
        j = mdp.nu0 @ v
        if j > best:
            best, best_pi = j, pi
    return best, best_pi


def reg_objective(mdp, pi):
    P_pi = np.einsum("sa,sat->st", pi, mdp.P)
    v = np.linalg.solve(np.eye(mdp.n) - mdp.gamma * P_pi, reg_reward(mdp, pi))
    return float(mdp.nu0 @ v)


def grid_search_soft_optimum(mdp, points=61, rounds=6):
    """Maximise the regularised objective over a grid of two-action policies.

    Only for ``m == 2`` and ``n <= 3``; the grid is refined around the best
    cell ``rounds`` times.
    """
    assert mdp.m == 2 and mdp.n <= 3
    lo = np.zeros(mdp.n)
    hi = np.ones(mdp.n)
    best, best_p = -math.inf, None
    for _ in range(rounds):
        axes = [np.linspace(lo[i], hi[i], points) for i in range(mdp.n)]
        for ps in itertools.product(*axes):
            p = np.array(ps)
            pi = np.stack([p, 1 - p], axis=1)
            j = reg_objective(mdp, pi)
            if j > best:
                best, best_p = j, p
        width = (hi - lo) / (points - 1) * 2
        lo = np.clip(best_p - width, 0, 1)
        hi = np.clip(best_p + width, 0, 1)
    return best, best_p
