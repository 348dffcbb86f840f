"""Entropy-regularised policy evaluation and control on a frozen MDP.

Values solve the linear system ``V = r_pi + gamma P_pi V`` exactly, where
``r_pi(s) = sum_a pi(a|s) [R(s,a) - lam log pi(a|s)]``.  The optimal
regularised policy is computed by iterating the soft Bellman operator
``V <- lam * logsumexp((R + gamma P V) / lam)`` and reading off the Boltzmann
policy ``softmax(Q / lam)``.
"""

import math

import numpy as np
from scipy.special import softmax

from . import kernels
from .errors import ConvergenceFailure, DegeneratePolicy, NumericalFailure, SolveFailure
from .model import InstantiatedMDP

_EPS = np.finfo(float).eps


def entropy(pi) -> np.ndarray:
    """Shannon entropy of each row (``0 log 0 = 0``)."""
    pi = np.asarray(pi, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(pi > 0, pi * np.log(pi), 0.0)
    return -terms.sum(axis=-1)


def kl_divergence(p, q) -> np.ndarray:
    """Row-wise ``KL(p || q)``; ``inf`` where ``q`` misses mass of ``p``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
    return terms.sum(axis=-1)


def _log_policy(pi, lam):
    if lam == 0:
        return np.zeros_like(pi)
    if np.any(pi <= 0):
        raise DegeneratePolicy("regularised evaluation needs a strictly positive policy")
    return np.log(pi)


def evaluate_policy_exact(mdp: InstantiatedMDP, pi):
    """Return ``(V, Q)`` of ``pi`` under the entropy-regularised reward."""
    pi = np.asarray(pi, dtype=float)
    lam = mdp.lam
    log_pi = _log_policy(pi, lam)
    r_pi = np.einsum("sa,sa->s", pi, mdp.R - lam * log_pi)
    A = np.eye(mdp.n) - mdp.gamma * mdp.policy_transition(pi)
    try:
        v = np.linalg.solve(A, r_pi)
    except np.linalg.LinAlgError as exc:
        raise SolveFailure(str(exc)) from exc
    if not np.all(np.isfinite(v)):
        raise SolveFailure("non-finite value function")
    q = mdp.R + mdp.gamma * (mdp.P @ v)
    return v, q


def soft_iteration_cap(mdp: InstantiatedMDP, tol: float) -> int:
    if mdp.gamma == 0:
        return 3
    q_max = max(mdp.q_max, tol)
    return math.ceil(math.log(q_max / tol) / math.log(1.0 / mdp.gamma)) + 1


def _stop_threshold(mdp, tol, scale):
    g = mdp.gamma
    thresh = math.inf if g == 0 else tol * (1.0 - g) / g
    # below this the sup-norm change is rounding noise
    return max(thresh, 8.0 * _EPS * max(1.0, scale))


def soft_solve(mdp: InstantiatedMDP, tol: float = 1e-10, v0=None):
    """Soft value iteration; returns ``(V, Q, pi, iterations)``."""
    lam = mdp.lam
    if not lam > 0:
        raise ValueError("soft value iteration needs lam > 0")
    if not tol > 0:
        raise ValueError("tol must be positive")
    n = mdp.n
    v = np.zeros(n) if v0 is None else np.array(v0, dtype=float)
    scale = mdp.q_max + lam * math.log(mdp.m)
    thresh = _stop_threshold(mdp, tol, scale)
    cap = soft_iteration_cap(mdp, tol) + 8
    v, iters, delta = kernels.soft_bellman_fixed_point(mdp.R, mdp.P, float(mdp.gamma), float(lam),
                                                       v, float(thresh), cap)
    if not delta < thresh:
        raise ConvergenceFailure(f"soft value iteration stalled at change {delta:.3e} after {iters} sweeps")
    q = mdp.R + mdp.gamma * (mdp.P @ v)
    pi = softmax(q / lam, axis=1)
    return v, q, pi, iters


def soft_value_iteration(mdp: InstantiatedMDP, tol: float = 1e-10, v0=None):
    """Optimal regularised ``(Q*, pi*)`` with ``pi* proportional to exp(Q*/lam)``."""
    _, q, pi, _ = soft_solve(mdp, tol, v0)
    return q, pi


def soft_bellman_residual(mdp: InstantiatedMDP, v) -> float:
    q = mdp.R + mdp.gamma * (mdp.P @ v)
    qmax = q.max(axis=1)
    tv = qmax + mdp.lam * np.log(np.exp((q - qmax[:, None]) / mdp.lam).sum(axis=1))
    return float(np.max(np.abs(tv - v)))


def greedy(q, rtol: float = 1e-12) -> np.ndarray:
    """Deterministic greedy policy; near-ties go to the smallest action index."""
    q = np.asarray(q, dtype=float)
    best = q.max(axis=1, keepdims=True)
    slack = rtol * np.maximum(1.0, np.abs(best))
    idx = np.argmax(q >= best - slack, axis=1)
    pi = np.zeros_like(q)
    pi[np.arange(q.shape[0]), idx] = 1.0
    return pi


def value_iteration_unregularized(mdp: InstantiatedMDP, tol: float = 1e-10):
    """Standard Bellman-optimality fixed point; returns ``(Q*, greedy policy)``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    r_max = max(mdp.r_max, float(np.max(mdp.R)))
    thresh = _stop_threshold(mdp, tol, r_max / (1.0 - mdp.gamma))
    cap = soft_iteration_cap(mdp.with_lam(0.0), tol) + 8
    v, iters, delta = kernels.hard_bellman_fixed_point(mdp.R, mdp.P, float(mdp.gamma),
                                                       np.zeros(mdp.n), float(thresh), cap)
    if not delta < thresh:
        raise ConvergenceFailure(f"value iteration stalled at change {delta:.3e} after {iters} sweeps")
    q = mdp.R + mdp.gamma * (mdp.P @ v)
    return q, greedy(q)


def visitation(mdp: InstantiatedMDP, pi) -> np.ndarray:
    """Discounted state-visitation distribution of ``pi`` started from ``nu0``."""
    A = np.eye(mdp.n) - mdp.gamma * mdp.policy_transition(np.asarray(pi, dtype=float))
    try:
        rho = (1.0 - mdp.gamma) * np.linalg.solve(A.T, mdp.nu0)
    except np.linalg.LinAlgError as exc:
        raise SolveFailure(str(exc)) from exc
    return rho


def expected_value(mdp: InstantiatedMDP, pi) -> float:
    v, _ = evaluate_policy_exact(mdp, pi)
    return float(mdp.nu0 @ v)


def performance_difference_residual(mdp: InstantiatedMDP, pi, pi_new) -> float:
    """|LHS - RHS| of the regularised performance-difference identity."""
    pi = np.asarray(pi, dtype=float)
    pi_new = np.asarray(pi_new, dtype=float)
    g, lam = mdp.gamma, mdp.lam
    v, q = evaluate_policy_exact(mdp, pi)
    v_new, _ = evaluate_policy_exact(mdp, pi_new)
    rho_new = visitation(mdp, pi_new)
    j_gap = float(mdp.nu0 @ (v_new - v))
    adv = q - lam * _log_policy(pi, lam)
    rhs = float(rho_new @ np.einsum("sa,sa->s", adv, pi_new - pi)) / (1.0 - g)
    lhs = j_gap
    if lam > 0:
        lhs += lam / (1.0 - g) * float(rho_new @ kl_divergence(pi_new, pi))
    return abs(lhs - rhs)


def optimality_gap_check(mdp: InstantiatedMDP, pi_star, tol: float = 1e-12):
    """Suboptimality of ``pi_star`` for the unregularised objective and its bound.

    Returns ``(gap, bound)`` with ``gap = max_pi J^0(pi) - J^lam(pi_star)`` and
    ``bound = lam log m / (1 - gamma)``.
    """
    q0, pi0 = value_iteration_unregularized(mdp.with_lam(0.0), tol)
    j0 = expected_value(mdp.with_lam(0.0), pi0)
    # entropy form tolerates the exact zeros softmax produces at tiny lam
    pi_star = np.asarray(pi_star, dtype=float)
    r_pi = np.einsum("sa,sa->s", pi_star, mdp.R) + mdp.lam * entropy(pi_star)
    A = np.eye(mdp.n) - mdp.gamma * mdp.policy_transition(pi_star)
    j_reg = float(mdp.nu0 @ np.linalg.solve(A, r_pi))
    gap = j0 - j_reg
    bound = mdp.lam * math.log(mdp.m) / (1.0 - mdp.gamma)
    if gap > bound + 1e-8:
        raise NumericalFailure(f"optimality gap {gap} exceeds bound {bound}")
    return gap, bound
