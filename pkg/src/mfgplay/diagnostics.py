"""Policy distances, assumption-constant estimators and checkers for the analysis inequalities.

Constants such as the Lipschitz moduli ``d0..d3`` and the concentrability
coefficients are estimated as maxima of ratios over sampled pairs.  They
are therefore lower bounds on the true suprema, and recursion checks built
from them report violations instead of raising.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import log_softmax

from .embedding import GramMatrix
from .errors import (BadParams, DegenerateNu0, MissingDiagnostics, PreconditionViolated)
from .mdp import kl_divergence, soft_solve, visitation
from .model import MFGModel, instantiate

CHECK_SLACK = -1e-12


def distance_D(pi, pi2, rho) -> float:
    """``sum_s rho(s) ||pi(.|s) - pi2(.|s)||_1``."""
    pi, pi2, rho = np.asarray(pi), np.asarray(pi2), np.asarray(rho)
    if pi.shape != pi2.shape or rho.shape != pi.shape[:1]:
        raise BadParams(f"shape mismatch: {pi.shape}, {pi2.shape}, {rho.shape}")
    return float(rho @ np.abs(pi - pi2).sum(axis=1))


def distance_W(pi, pi2, rho) -> float:
    """``sqrt(sum_s rho(s) ||pi(.|s) - pi2(.|s)||_1^2)``; never below ``distance_D``."""
    pi, pi2, rho = np.asarray(pi), np.asarray(pi2), np.asarray(rho)
    if pi.shape != pi2.shape or rho.shape != pi.shape[:1]:
        raise BadParams(f"shape mismatch: {pi.shape}, {pi2.shape}, {rho.shape}")
    l1 = np.abs(pi - pi2).sum(axis=1)
    return float(np.sqrt(max(0.0, rho @ (l1 * l1))))


def policy_distance(mode):
    return distance_W if mode == "W" else distance_D


def sigma_metrics(G: GramMatrix, L_t, L_star, pi_star_next, pi_next, rho_t):
    """``(||mu_t - mu*||_H, E_rho_t KL(pi*_{t+1} || pi_{t+1}))``."""
    sig_mu = G.distance(L_t, L_star)
    sig_pi = float(np.asarray(rho_t) @ kl_divergence(pi_star_next, pi_next))
    return sig_mu, sig_pi


# ---------------------------------------------------------------------------
# inequality checkers for the mixing and mirror-descent lemmas
# ---------------------------------------------------------------------------

def _kl(p, q):
    return float(kl_divergence(p, q))


def check_mix_diff_bound(p_star, p, eta):
    """Mixing ``p`` with uniform weight ``eta``: returns ``(lhs1, bound1, lhs2, bound2, ok)``.

    ``lhs1 = KL(p*||p_hat) <= log(m/eta)`` and
    ``lhs2 = KL(p*||p_hat) - KL(p*||p) <= 2 eta``.
    """
    p_star = np.asarray(p_star, dtype=float)
    p = np.asarray(p, dtype=float)
    m = p.shape[-1]
    if not 0.0 < eta <= 0.5:
        raise PreconditionViolated(f"eta must lie in (0, 1/2], got {eta}")
    p_hat = (1.0 - eta) * p + eta / m
    lhs1 = _kl(p_star, p_hat)
    bound1 = math.log(m / eta)
    lhs2 = lhs1 - _kl(p_star, p)
    bound2 = 2.0 * eta
    ok = bound1 - lhs1 >= CHECK_SLACK and bound2 - lhs2 >= CHECK_SLACK
    return lhs1, bound1, lhs2, bound2, bool(ok)


def mix_kl_lipschitz_slack(x, y, z, alpha1, alpha2) -> float:
    x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
    if np.any(x < alpha1) or np.any(y < alpha1) or np.any(z < alpha2):
        raise PreconditionViolated("floor condition fails")
    if not (0 < alpha1 and 0 < alpha2):
        raise PreconditionViolated("floors must be positive")
    lhs = _kl(x, z) - _kl(y, z)
    bound = (1.0 + math.log(1.0 / min(alpha1, alpha2))) * float(np.abs(x - y).sum())
    return bound - lhs


def check_mix_kl_lipschitz(x, y, z, alpha1, alpha2) -> bool:
    """``KL(x||z) - KL(y||z) <= (1 + log(1/min(a1, a2))) ||x - y||_1`` for floored inputs."""
    return mix_kl_lipschitz_slack(x, y, z, alpha1, alpha2) >= CHECK_SLACK


def check_one_step_md(p_star, pi, q_hat, alpha, lam):
    """Per-state mirror-descent inequality; returns ``(lhs, rhs, ok)`` arrays.

    With ``G = Q_hat - lam log pi`` and ``p' ~ pi exp(alpha G)``:
    ``KL(p*||p') <= KL(p*||pi) - alpha <G, p* - pi> + alpha^2 ||G||_inf^2 / 2``.
    """
    p_star = np.atleast_2d(np.asarray(p_star, dtype=float))
    pi = np.atleast_2d(np.asarray(pi, dtype=float))
    q_hat = np.atleast_2d(np.asarray(q_hat, dtype=float))
    if np.any(pi <= 0):
        raise PreconditionViolated("policy must be strictly positive")
    g = q_hat - lam * np.log(pi)
    # log-space: large alpha * G underflows p' to exact zeros
    log_new = log_softmax(np.log(pi) + alpha * g, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs = np.where(p_star > 0, p_star * (np.log(p_star) - log_new), 0.0).sum(axis=1)
    gnorm = np.abs(g).max(axis=1)
    rhs = (kl_divergence(p_star, pi) - alpha * np.einsum("sa,sa->s", g, p_star - pi)
           + 0.5 * alpha**2 * gnorm**2)
    return lhs, rhs, rhs - lhs >= -1e-9


# ---------------------------------------------------------------------------
# constants of the recursion lemmas
# ---------------------------------------------------------------------------

@dataclass
class AssumptionEstimates:
    d0: float = 0.0
    d1: float = 0.0
    d2: float = 0.0
    d3: float = 0.0
    C_rho: float = 1.0
    C_rho_bar: float = 1.0
    sample_count: int = 0
    mode: str = "D"
    composite: float = 0.0
    max_ratio_witnesses: dict = field(default_factory=dict)

    @property
    def contraction(self) -> float:
        return self.d1 * self.d2 + self.d3

    def to_dict(self) -> dict:
        return {"d0": self.d0, "d1": self.d1, "d2": self.d2, "d3": self.d3, "C_rho": self.C_rho,
                "C_rho_bar": self.C_rho_bar, "sample_count": self.sample_count, "mode": self.mode,
                "composite": self.composite, "contraction": self.contraction,
                "witnesses": self.max_ratio_witnesses}


@dataclass(frozen=True)
class DiagnosticsConstants:
    gamma: float
    lam: float
    m: int
    eta: float
    r_max: float
    q_max: float
    kl_max: float
    kappa: float
    c1_bar: float
    d_bar: float

    @classmethod
    def build(cls, gamma, lam, m, eta, r_max, est: Optional[AssumptionEstimates] = None):
        if not 0.0 < eta <= 0.5:
            raise BadParams(f"eta must lie in (0, 1/2], got {eta}")
        if not lam > 0:
            raise BadParams("lambda must be positive")
        est = est or AssumptionEstimates()
        q_max = (r_max + gamma * lam * math.log(m)) / (1.0 - gamma)
        kl_max = math.log(m / eta)
        kappa = 4.0 / (1.0 - gamma) * kl_max + 2.0 * r_max / (lam * (1.0 - gamma))
        c1_bar = 2.0 * (est.d0 * kl_max + kappa * est.C_rho * est.d1)
        d_bar = 1.0 - est.d1 * est.d2 - est.d3
        return cls(gamma, lam, m, eta, r_max, q_max, kl_max, kappa, c1_bar, d_bar)


@dataclass
class RecursionReport:
    t: np.ndarray
    policy_lhs: np.ndarray
    policy_rhs: np.ndarray
    mu_lhs: np.ndarray
    mu_rhs: np.ndarray
    atol: float = 1e-12

    @property
    def policy_ok(self):
        return self.policy_lhs <= self.policy_rhs + self.atol

    @property
    def mu_ok(self):
        return self.mu_lhs <= self.mu_rhs + self.atol

    @property
    def policy_violations(self) -> int:
        return int(np.sum(~self.policy_ok))

    @property
    def mu_violations(self) -> int:
        return int(np.sum(~self.mu_ok))

    @property
    def pass_fraction(self) -> float:
        return float(np.mean(self.policy_ok & self.mu_ok))

    def to_dict(self) -> dict:
        return {"iterations": int(len(self.t)), "policy_violations": self.policy_violations,
                "mu_violations": self.mu_violations, "pass_fraction": self.pass_fraction}


def check_recursions(trace, ne, constants: DiagnosticsConstants, estimates: AssumptionEstimates,
                     epsilon: float = 0.0, atol: float = 1e-12) -> RecursionReport:
    """Evaluate both one-step recursions along a trace with full diagnostics.

    Row ``k`` covers ``t = k + 1`` and compares ``sigma_pi^{t+1}`` with its bound
    from ``sigma_pi^t`` and ``sigma_mu^{t+1}`` with its bound from ``sigma_mu^t``.
    ``atol`` should cover the residual of the equilibrium used as reference.
    """
    if getattr(trace, "diagnostics", None) != "full" or trace.schedule is None:
        raise MissingDiagnostics("recursion check needs a single-loop trace with full diagnostics")
    sp, sm = np.asarray(trace.sigma_pi), np.asarray(trace.sigma_mu)
    if np.any(np.isnan(sp[1:])) or np.any(np.isnan(sm)):
        raise MissingDiagnostics("trace lacks per-iteration sigma values")
    sp = np.maximum(sp, 0.0)  # KL rounds to -1e-17 at a fixed point
    s = trace.schedule
    alpha, beta, eta, lam = s.alpha, s.beta, s.eta, s.lam
    T = len(sm) - 1
    t = np.arange(1, T)
    step = np.asarray(trace.step_norm)  # step[t] = ||mu_t - mu_{t-1}||
    c = constants
    lip = c.kl_max * estimates.d0 + c.kappa * estimates.C_rho * estimates.d1
    pol_rhs = ((1 - lam * alpha) * sp[t] + (1 - lam * alpha) * lip * step[t]
               + 2 * epsilon * alpha + 0.5 * c.q_max**2 * alpha**2 + 2 * eta)
    pol_lhs = sp[t + 1]
    if s.mode == "W":
        mu_rhs = (1 - beta * c.d_bar) * sm[t] + estimates.d2 * math.sqrt(estimates.C_rho_bar) * beta * sp[t + 1] ** 0.25
    else:
        mu_rhs = (1 - beta * c.d_bar) * sm[t] + estimates.d2 * estimates.C_rho_bar * beta * np.sqrt(sp[t + 1])
    mu_lhs = sm[t + 1]
    return RecursionReport(t, pol_lhs, pol_rhs, mu_lhs, mu_rhs, atol)


# ---------------------------------------------------------------------------
# sampling estimators
# ---------------------------------------------------------------------------

class _Oracle:
    """Cached best responses and population steps for one model and lambda."""

    def __init__(self, model, G, lam):
        self.model, self.G, self.lam = model, G, lam

    def mdp(self, L):
        return instantiate(self.model, L, self.G.values(L), self.lam)

    def best(self, L):
        mdp = self.mdp(L)
        _, _, pi, _ = soft_solve(mdp, 1e-12)
        return mdp, pi, visitation(mdp, pi)

    @staticmethod
    def step(mdp, pi, L):
        return np.einsum("s,sa,sat->t", L, pi, mdp.P)


def _ne_visitation(model, G, lam):
    from .play import compute_ne
    return compute_ne(model, G, lam, 1e-10).rho


def _sample_pair(model, rng, i):
    n = model.n
    L = rng.dirichlet(np.ones(n))
    other = rng.dirichlet(np.ones(n))
    if i % 2:
        # local pair: a short move toward another random point
        delta = 10 ** rng.uniform(-3, -1)
        L2 = (1 - delta) * L + delta * other
    else:
        L2 = other
    return L, L2


def estimate_lipschitz(model: MFGModel, G: GramMatrix, lam: float, n_pairs: int, seed: int = 0,
                       mode: str = "D", rho=None) -> AssumptionEstimates:
    """Empirical Lipschitz ratios of the best-response and population maps.

    Pair ``i`` is drawn from ``default_rng([seed, i])`` so adding pairs only
    extends the sample.  Even indices are two independent Dirichlet(1) draws,
    odd indices a draw and a nearby point.
    """
    if n_pairs < 1:
        raise BadParams("n_pairs must be >= 1")
    if mode not in ("D", "W"):
        raise BadParams(f"mode must be 'D' or 'W', got {mode!r}")
    dist = policy_distance(mode)
    if rho is None:
        rho = _ne_visitation(model, G, lam)
    orc = _Oracle(model, G, lam)
    best = {"d0": (0.0, None), "d1": (0.0, None), "d2": (0.0, None), "d3": (0.0, None),
            "composite": (0.0, None)}

    def note(key, val, i):
        if val > best[key][0]:
            best[key] = (float(val), i)

    for i in range(n_pairs):
        rng = np.random.default_rng([seed, i])
        L, L2 = _sample_pair(model, rng, i)
        dmu = G.distance(L, L2)
        if dmu < 1e-10:
            continue
        mdp, pi_s, rho_s = orc.best(L)
        mdp2, pi_s2, rho_s2 = orc.best(L2)
        note("d1", dist(pi_s, pi_s2, rho) / dmu, i)
        note("d0", np.abs(rho_s - rho_s2).sum() / dmu, i)
        lam_a, lam_b = orc.step(mdp, pi_s, L), orc.step(mdp2, pi_s2, L2)
        note("composite", G.distance(lam_a, lam_b) / dmu, i)
        rand_pi = rng.dirichlet(np.ones(model.m), size=model.n)
        rand_pi2 = rng.dirichlet(np.ones(model.m), size=model.n)
        for a, b in ((rand_pi, rand_pi2), (pi_s, pi_s2), (pi_s, rand_pi)):
            dpi = dist(a, b, rho)
            if dpi > 1e-10:
                note("d2", G.distance(orc.step(mdp, a, L), orc.step(mdp, b, L)) / dpi, i)
        for p in (rand_pi, pi_s):
            note("d3", G.distance(orc.step(mdp, p, L), orc.step(mdp2, p, L2)) / dmu, i)

    wit = {k: {"pair": v[1], "ratio": v[0]} for k, v in best.items()}
    return AssumptionEstimates(best["d0"][0], best["d1"][0], best["d2"][0], best["d3"][0],
                               sample_count=n_pairs, mode=mode, composite=best["composite"][0],
                               max_ratio_witnesses=wit)


def estimate_concentrability(model: MFGModel, G: GramMatrix, lam: float, rho_star, n_samples: int,
                             seed: int = 0, mode: str = "inf", include=()):
    """Return ``(C_rho, C_rho_bar, witnesses)`` maximised over sampled mean fields.

    ``mode="inf"`` uses the sup-ratio form of ``C_rho``; ``mode="l2"`` the
    root-mean-square form.  ``include`` lists extra distributions (for example
    the equilibrium itself) that are always evaluated.
    """
    rho_star = np.asarray(rho_star, dtype=float)
    if mode not in ("inf", "l2"):
        raise BadParams(f"mode must be 'inf' or 'l2', got {mode!r}")
    if mode == "inf" and np.any(model.nu0 <= 0):
        raise DegenerateNu0("initial distribution has empty states; sup-ratio may be unbounded")
    if np.any(rho_star <= 0):
        raise DegenerateNu0("reference visitation has empty states")
    orc = _Oracle(model, G, lam)
    samples = list(include) + [np.random.default_rng([seed, i]).dirichlet(np.ones(model.n))
                               for i in range(n_samples)]
    c, cbar = 0.0, 0.0
    wit = {}
    for i, L in enumerate(samples):
        _, _, rho = orc.best(np.asarray(L, dtype=float))
        if mode == "inf":
            ratio = rho / rho_star
            val = float(ratio.max())
            state = int(ratio.argmax())
        else:
            val = float(np.sqrt(rho @ (rho / rho_star) ** 2))
            state = int(np.argmax(rho / rho_star))
        with np.errstate(divide="ignore"):
            bar = float(np.sqrt(rho @ (rho_star / rho) ** 2))
        if val > c:
            c = val
            wit["C_rho"] = {"sample": i, "state": state, "value": val}
        if bar > cbar:
            cbar = bar
            wit["C_rho_bar"] = {"sample": i, "state": int(np.argmax(rho_star / rho)), "value": bar}
    return c, cbar, wit


def estimate_assumptions(model, G, lam, n_pairs=200, seed=0, mode="D", ne=None):
    """Lipschitz and concentrability estimates in one object."""
    from .play import compute_ne
    ne = ne or compute_ne(model, G, lam, 1e-10)
    est = estimate_lipschitz(model, G, lam, n_pairs, seed, mode, ne.rho)
    c, cbar, wit = estimate_concentrability(model, G, lam, ne.rho, n_pairs, seed,
                                            "l2" if mode == "W" else "inf", include=[ne.L])
    est.C_rho, est.C_rho_bar = c, cbar
    est.max_ratio_witnesses.update(wit)
    return est


# ---------------------------------------------------------------------------
# randomised lemma trials (the ``check`` subcommand)
# ---------------------------------------------------------------------------

def _simplex(rng, m, floor=0.0):
    p = rng.dirichlet(np.full(m, rng.choice([0.2, 1.0, 5.0])))
    return (1 - m * floor) * p + floor


def lemma_trials(name: str, trials: int = 10000, seed: int = 0) -> dict:
    """Random search for violations of one inequality; returns a JSON-able report."""
    rng = np.random.default_rng(seed)
    worst = math.inf
    violations = 0
    witnesses = []
    for k in range(trials):
        m = int(rng.integers(2, 7))
        if name == "mix_diff_bound":
            eta = float(rng.uniform(1e-4, 0.5))
            p_star, p = _simplex(rng, m), _simplex(rng, m)
            if rng.random() < 0.2:
                p = np.eye(m)[rng.integers(m)]
            l1, b1, l2, b2, _ = check_mix_diff_bound(p_star, p, eta)
            slack = min(b1 - l1, b2 - l2)
            case = {"p_star": p_star.tolist(), "p": p.tolist(), "eta": eta}
        elif name == "mix_kl_lipschitz":
            a1 = float(rng.uniform(1e-4, 1.0 / m))
            a2 = float(rng.uniform(1e-4, 1.0 / m))
            x, y, z = _simplex(rng, m, a1), _simplex(rng, m, a1), _simplex(rng, m, a2)
            slack = mix_kl_lipschitz_slack(x, y, z, a1, a2)
            case = {"x": x.tolist(), "y": y.tolist(), "z": z.tolist(), "alpha1": a1, "alpha2": a2}
        elif name == "one_step_md":
            lam = float(rng.choice([0.01, 0.1, 1.0, 10.0]))
            alpha = float(rng.uniform(0, 0.999 / lam))
            p_star = _simplex(rng, m)
            pi = _simplex(rng, m, 1e-6)
            q = rng.uniform(0, 1.0 / (1 - rng.uniform(0, 0.99)), size=m)
            lhs, rhs, _ = check_one_step_md(p_star, pi, q, alpha, lam)
            slack = float((rhs - lhs).min())
            case = {"p_star": p_star.tolist(), "pi": pi.tolist(), "q": q.tolist(),
                    "alpha": alpha, "lambda": lam}
        else:
            raise BadParams(f"unknown lemma {name!r}")
        worst = min(worst, slack)
        tol = -1e-9 if name == "one_step_md" else CHECK_SLACK
        if slack < tol:
            violations += 1
            if len(witnesses) < 5:
                witnesses.append({"trial": k, "slack": slack, **case})
    return {"lemma": name, "trials": trials, "violations": violations, "worst_slack": worst,
            "witnesses": witnesses}


LEMMAS = ("mix_diff_bound", "mix_kl_lipschitz", "one_step_md")
