"""Single-loop mean-embedded fictitious play, the double-loop baseline and NE solver.

Per iteration the single-loop method evaluates the current policy on the MDP
induced by the current mean field, takes one KL-regularised mirror step mixed
with the uniform policy, and moves the mean field a fraction ``beta`` toward
its one-step push-forward under the new policy.
"""

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .diagnostics import distance_D, distance_W
from .embedding import GramMatrix
from .errors import (BadParams, ConvergenceFailure, NoContraction, NumericalFailure,
                     StepTooLarge)
from .evaluators import ExactEvaluator, make_evaluator
from .mdp import (evaluate_policy_exact, kl_divergence, soft_bellman_residual, soft_solve,
                  visitation)
from .model import MFGModel, check_distribution, check_policy, instantiate, uniform_policy

# default schedule constants; engineering choices tuned on the shipped instance
C_ALPHA = 10.0
C_BETA = 100.0
C_ETA = 1.0

EXPONENTS = {"D": (0.4, 0.8), "W": (4.0 / 9.0, 8.0 / 9.0)}

_DIAG_TOL = 1e-12


@dataclass(frozen=True)
class Schedule:
    """Step sizes ``alpha = c_alpha T^-a``, ``beta = c_beta T^-b``, ``eta = c_eta / T``.

    ``(a, b)`` is ``(2/5, 4/5)`` in D-mode and ``(4/9, 8/9)`` in W-mode.
    ``d_bar`` is ``1 - d1 d2 - d3`` when Lipschitz estimates are known; the
    conservative default 1 is used otherwise.
    """

    lam: float
    T: int
    c_alpha: float = C_ALPHA
    c_beta: float = C_BETA
    c_eta: float = C_ETA
    mode: str = "D"
    d_bar: Optional[float] = None

    def __post_init__(self):
        if self.mode not in EXPONENTS:
            raise BadParams(f"mode must be 'D' or 'W', got {self.mode!r}")
        if not self.lam > 0:
            raise BadParams(f"lambda must be positive, got {self.lam}")
        if int(self.T) != self.T or self.T < 1:
            raise BadParams(f"T must be a positive integer, got {self.T}")
        for name in ("c_alpha", "c_beta", "c_eta"):
            if not getattr(self, name) > 0:
                raise BadParams(f"{name} must be positive")
        if self.alpha * self.lam >= 1.0:
            raise StepTooLarge(f"alpha*lambda = {self.alpha * self.lam:.4g} must be < 1")
        if self.beta > 1.0:
            raise StepTooLarge(f"beta = {self.beta:.4g} must be <= 1")
        d_bar = 1.0 if self.d_bar is None else self.d_bar
        if self.beta * d_bar >= 1.0:
            raise StepTooLarge(f"beta*d_bar = {self.beta * d_bar:.4g} must be < 1")
        if not 0.0 < self.eta <= 0.5:
            raise StepTooLarge(f"eta = {self.eta:.4g} must lie in (0, 1/2]")

    @property
    def alpha(self) -> float:
        return self.c_alpha * self.T ** (-EXPONENTS[self.mode][0])

    @property
    def beta(self) -> float:
        return self.c_beta * self.T ** (-EXPONENTS[self.mode][1])

    @property
    def eta(self) -> float:
        return self.c_eta / self.T

    @classmethod
    def default(cls, lam, T, mode="D", c_alpha=None, c_beta=None, c_eta=None, d_bar=None):
        """Fill unset constants with defaults clamped so that ``alpha lam <= 1/2``, ``eta <= 1/2``
        and ``beta d_bar <= 1/2``."""
        a, b = EXPONENTS.get(mode, (0.4, 0.8))
        if c_alpha is None:
            c_alpha = min(C_ALPHA, 0.5 * T**a / lam)
        if c_beta is None:
            c_beta = min(C_BETA, 0.5 * T**b / max(1.0 if d_bar is None else d_bar, 1e-12), T**b)
        if c_eta is None:
            c_eta = min(C_ETA, 0.5 * T)
        return cls(lam, int(T), c_alpha, c_beta, c_eta, mode, d_bar)

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "T": self.T, "c_alpha": self.c_alpha, "c_beta": self.c_beta,
                "c_eta": self.c_eta, "mode": self.mode, "alpha": self.alpha, "beta": self.beta,
                "eta": self.eta}


def improvement_step(pi, q_hat, alpha, lam, eta) -> np.ndarray:
    """Mirror step ``pi^(1-alpha lam) exp(alpha Q_hat)`` (normalised) mixed with uniform."""
    if alpha * lam >= 1.0:
        raise StepTooLarge(f"alpha*lambda = {alpha * lam} must be < 1")
    if alpha < 0 or lam < 0:
        raise BadParams("alpha and lambda must be non-negative")
    if not 0.0 <= eta <= 0.5:
        raise BadParams(f"eta must lie in [0, 1/2], got {eta}")
    pi = np.asarray(pi, dtype=float)
    if np.any(pi <= 0):
        raise BadParams("improvement step needs a strictly positive policy")
    q_hat = np.ascontiguousarray(q_hat, dtype=float)
    return kernels.mirror_step(np.log(pi), q_hat, float(alpha), float(lam), float(eta))


@dataclass
class NESolution:
    pi: np.ndarray
    L: np.ndarray
    mu: np.ndarray
    rho: np.ndarray
    lam: float
    lambda_residual: float
    agent_gap: float
    iterations: int
    contraction: float

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "lambda_residual": self.lambda_residual,
                "agent_gap": self.agent_gap, "iterations": self.iterations,
                "contraction": self.contraction, "L": self.L.tolist(), "pi": self.pi.tolist(),
                "rho": self.rho.tolist()}


@dataclass
class IterateTrace:
    """Per-iteration record of a run; arrays are indexed by ``t = 0..T``.

    Scalar diagnostics that were not computed (row 0, or intermediate rows in
    endpoint mode) are ``nan``.
    """

    kind: str
    pis: np.ndarray
    Ls: np.ndarray
    mus: np.ndarray
    sigma_mu: np.ndarray
    sigma_pi: np.ndarray
    dist_D: np.ndarray
    dist_W: np.ndarray
    J: np.ndarray
    avg_sigma_mu: np.ndarray
    avg_dist_D: np.ndarray
    avg_dist_W: np.ndarray
    wall_time: np.ndarray
    step_norm: np.ndarray
    avg_pi: np.ndarray
    avg_L: np.ndarray
    schedule: Optional[Schedule] = None
    evaluator: dict = field(default_factory=dict)
    diagnostics: str = "full"
    status: str = "ok"

    @property
    def T(self) -> int:
        return len(self.Ls) - 1

    def __len__(self):
        return len(self.Ls)

    def rows(self):
        cols = (self.sigma_mu, self.sigma_pi, self.dist_D, self.dist_W, self.J,
                self.avg_sigma_mu, self.avg_dist_D)
        for t in range(len(self.Ls)):
            yield (t,) + tuple(float(c[t]) for c in cols)

    def summary(self) -> dict:
        last = self.T
        avg_D = float(self.avg_dist_D[last])
        avg_mu = float(self.avg_sigma_mu[last])
        return {
            "kind": self.kind,
            "T": last,
            "status": self.status,
            "final_sigma_mu": float(self.sigma_mu[last]),
            "final_sigma_pi": float(self.sigma_pi[last]),
            "final_dist_D": float(self.dist_D[last]),
            "final_dist_W": float(self.dist_W[last]),
            "final_J": float(self.J[last]),
            "avg_sigma_mu": avg_mu,
            "avg_dist_D": avg_D,
            "avg_dist_W": float(self.avg_dist_W[last]),
            "avg_error_W": float(self.avg_dist_W[last]) + avg_mu,
            "avg_error": avg_D + avg_mu,
        }


def _nan(T):
    return np.full(T + 1, np.nan)


class _Reference:
    """NE quantities used by the per-row diagnostics."""

    def __init__(self, G, ne):
        self.G = G
        self.ne = ne

    def sigma_mu(self, L):
        return np.nan if self.ne is None else self.G.distance(L, self.ne.L)

    def avg_metrics(self, avg_L, avg_pi):
        if self.ne is None:
            return np.nan, np.nan, np.nan
        ne = self.ne
        return (self.G.distance(avg_L, ne.L), distance_D(avg_pi, ne.pi, ne.rho),
                distance_W(avg_pi, ne.pi, ne.rho))


def _best_response_metrics(model, G, lam, L_prev, pi_t, ne, v0):
    """``sigma_pi``, ``D`` and ``W`` of ``pi_t`` against the soft-optimal response to ``L_prev``."""
    mdp = instantiate(model, L_prev, G.values(L_prev), lam)
    v, _, pi_star, _ = soft_solve(mdp, _DIAG_TOL, v0)
    rho_t = visitation(mdp, pi_star)
    sig = float(rho_t @ kl_divergence(pi_star, pi_t))
    rho = ne.rho if ne is not None else rho_t
    return sig, distance_D(pi_t, pi_star, rho), distance_W(pi_t, pi_star, rho), v


def run(model: MFGModel, G: GramMatrix, schedule: Schedule, evaluator=None, init_pi=None,
        init_L=None, ne: Optional[NESolution] = None, diagnostics: str = "full") -> IterateTrace:
    """Run the single-loop method for ``schedule.T`` iterations."""
    if diagnostics not in ("full", "endpoint"):
        raise BadParams(f"diagnostics must be 'full' or 'endpoint', got {diagnostics!r}")
    evaluator = make_evaluator(evaluator)
    n, m, T, lam = model.n, model.m, schedule.T, schedule.lam
    alpha, beta, eta = schedule.alpha, schedule.beta, schedule.eta
    pi = uniform_policy(n, m) if init_pi is None else check_policy(init_pi, n, m, 1e-10).copy()
    L = np.array(model.nu0 if init_L is None else check_distribution(init_L, n, 1e-10), dtype=float)
    if np.any(pi <= 0):
        raise BadParams("initial policy must be strictly positive")

    pis = np.empty((T + 1, n, m))
    Ls = np.empty((T + 1, n))
    mus = np.empty((T + 1, n))
    sigma_mu, sigma_pi, dD, dW, J = _nan(T), _nan(T), _nan(T), _nan(T), _nan(T)
    avg_mu, avg_D, avg_W = _nan(T), _nan(T), _nan(T)
    wall, step = np.zeros(T + 1), _nan(T)
    ref = _Reference(G, ne)
    exact = isinstance(evaluator, ExactEvaluator)

    pis[0], Ls[0], mus[0] = pi, L, G.values(L)
    sigma_mu[0] = ref.sigma_mu(L)
    sum_pi = np.zeros((n, m))
    sum_L = np.zeros(n)
    v_warm = None
    start = time.perf_counter()
    for t in range(T):
        mdp = instantiate(model, L, mus[t], lam)
        if exact:
            v, q_hat = evaluate_policy_exact(mdp, pi)
        else:
            q_hat = evaluator(mdp, pi)
            v = None
        if diagnostics == "full" or t == T - 1 or t == 0:
            if v is None:
                v = evaluate_policy_exact(mdp, pi)[0]
            J[t] = float(mdp.nu0 @ v)
        if not np.all(np.isfinite(q_hat)):
            raise NumericalFailure(f"non-finite Q estimate at iteration {t}")
        pi_next = kernels.mirror_step(np.log(pi), np.ascontiguousarray(q_hat), alpha, lam, eta)
        L_plus = kernels.push_forward(mdp.P, pi_next, L)
        L_next = (1.0 - beta) * L + beta * L_plus
        if not (np.all(np.isfinite(pi_next)) and np.all(np.isfinite(L_next))):
            raise NumericalFailure(f"non-finite iterate at iteration {t + 1}")
        if diagnostics == "full" or t == T - 1:
            sigma_pi[t + 1], dD[t + 1], dW[t + 1], v_warm = _best_response_metrics(
                model, G, lam, L, pi_next, ne, v_warm)
        pi, L = pi_next, L_next
        pis[t + 1], Ls[t + 1], mus[t + 1] = pi, L, G.values(L)
        step[t + 1] = G.distance(Ls[t + 1], Ls[t])
        sigma_mu[t + 1] = ref.sigma_mu(L)
        sum_pi += pi
        sum_L += L
        avg_mu[t + 1], avg_D[t + 1], avg_W[t + 1] = ref.avg_metrics(sum_L / (t + 1), sum_pi / (t + 1))
        wall[t + 1] = time.perf_counter() - start
    mdp = instantiate(model, L, mus[T], lam)
    J[T] = float(mdp.nu0 @ evaluate_policy_exact(mdp, pi)[0])

    return IterateTrace("single_loop", pis, Ls, mus, sigma_mu, sigma_pi, dD, dW, J, avg_mu, avg_D,
                        avg_W, wall, step, sum_pi / T, sum_L / T, schedule,
                        getattr(evaluator, "to_dict", lambda: {})(), diagnostics)


def run_fixed_point_baseline(model: MFGModel, G: GramMatrix, lam: float, T: int,
                             inner_tol: float = 1e-10, init_L=None,
                             ne: Optional[NESolution] = None) -> IterateTrace:
    """Double loop: solve the induced MDP to ``inner_tol``, then apply one population step."""
    if not inner_tol > 0:
        raise BadParams("inner_tol must be positive")
    if not lam > 0:
        raise BadParams("lambda must be positive")
    n, m = model.n, model.m
    L = np.array(model.nu0 if init_L is None else check_distribution(init_L, n, 1e-10), dtype=float)
    pis = np.empty((T + 1, n, m))
    Ls = np.empty((T + 1, n))
    mus = np.empty((T + 1, n))
    sigma_mu, sigma_pi, dD, dW, J = _nan(T), _nan(T), _nan(T), _nan(T), _nan(T)
    avg_mu, avg_D, avg_W = _nan(T), _nan(T), _nan(T)
    wall, step = np.zeros(T + 1), _nan(T)
    ref = _Reference(G, ne)
    Ls[0], mus[0] = L, G.values(L)
    sigma_mu[0] = ref.sigma_mu(L)
    sum_pi = np.zeros((n, m))
    sum_L = np.zeros(n)
    v = None
    start = time.perf_counter()
    for t in range(T + 1):
        mdp = instantiate(model, L, mus[t], lam)
        v, _, pi, _ = soft_solve(mdp, inner_tol, v)
        pis[t] = pi
        J[t] = float(mdp.nu0 @ evaluate_policy_exact(mdp, pi)[0])
        if ne is not None:
            dD[t] = distance_D(pi, ne.pi, ne.rho)
            dW[t] = distance_W(pi, ne.pi, ne.rho)
        if t > 0:
            sum_pi += pis[t - 1]
            sum_L += L
            avg_mu[t], avg_D[t], avg_W[t] = ref.avg_metrics(sum_L / t, sum_pi / t)
        if t == T:
            break
        L = kernels.push_forward(mdp.P, pi, L)
        if not np.all(np.isfinite(L)):
            raise NumericalFailure(f"non-finite mean field at iteration {t + 1}")
        Ls[t + 1], mus[t + 1] = L, G.values(L)
        step[t + 1] = G.distance(Ls[t + 1], Ls[t])
        sigma_mu[t + 1] = ref.sigma_mu(L)
        wall[t + 1] = time.perf_counter() - start

    trace = IterateTrace("baseline", pis, Ls, mus, sigma_mu, sigma_pi, dD, dW, J, avg_mu, avg_D,
                         avg_W, wall, step, sum_pi / max(T, 1), sum_L / max(T, 1), None,
                         {"kind": "soft_vi", "inner_tol": inner_tol}, "full")
    trace.status = _contraction_status(step)
    return trace


def _contraction_status(step) -> str:
    """Label a sequence of step norms: converged, diverging, oscillating or ok."""
    s = step[1:]
    s = s[np.isfinite(s)]
    if len(s) < 4:
        return "ok"
    tail = s[len(s) // 2:]
    if tail[-1] < 1e-12 or tail[-1] < 1e-3 * s[0]:
        return "converged"
    if tail[-1] > 2.0 * tail[0]:
        return "diverging"
    if tail[-1] > 0.5 * tail[0]:
        return "oscillating"
    return "ok"


def compute_ne(model: MFGModel, G: GramMatrix, lam: float, tol: float = 1e-10,
               max_iter: int = 100000, init_L=None) -> NESolution:
    """Iterate the composite best-response / population map to its fixed point."""
    if not tol > 0:
        raise BadParams("tol must be positive")
    inner = min(1e-13, tol * 1e-3)
    L = np.array(model.nu0 if init_L is None else check_distribution(init_L, model.n, 1e-10),
                 dtype=float)
    v = None
    prev = first = None
    c_hat = 0.0
    bad = 0
    noise = 1e3 * np.finfo(float).eps
    for k in range(1, max_iter + 1):
        mdp = instantiate(model, L, G.values(L), lam)
        v, _, pi, _ = soft_solve(mdp, inner, v)
        L_next = kernels.push_forward(mdp.P, pi, L)
        d = G.distance(L_next, L)
        if prev is not None and prev > noise and d > noise:
            r = d / prev
            bad = bad + 1 if r > 1.0 else 0
            if bad >= 10:
                raise NoContraction(f"map expanded for 10 consecutive steps (last ratio {r:.4f})")
            c_hat = min(max(c_hat * 0.5 + 0.5 * r, r) if k > 2 else r, 1.0 - 1e-6)
        prev = d
        first = d if first is None else first
        L = L_next
        if d < tol * (1.0 - c_hat):
            break
    else:
        if first is not None and prev > 0.5 * first:
            raise NoContraction(f"step norm stalled at {prev:.3e} after {max_iter} iterations")
        raise ConvergenceFailure(f"no fixed point after {max_iter} iterations (last step {prev:.3e})")

    mdp = instantiate(model, L, G.values(L), lam)
    v, _, pi, _ = soft_solve(mdp, inner, v)
    L_next = kernels.push_forward(mdp.P, pi, L)
    residual = G.distance(L_next, L)
    v_pi = evaluate_policy_exact(mdp, pi)[0]
    # regularised suboptimality of pi is at most ||T v_pi - v_pi|| / (1 - gamma)
    gap = soft_bellman_residual(mdp, v_pi) / (1.0 - mdp.gamma)
    rho = visitation(mdp, pi)
    return NESolution(pi, L, G.values(L), rho, lam, residual, gap, k, c_hat)
