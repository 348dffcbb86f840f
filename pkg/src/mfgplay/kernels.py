"""Hot inner loops.

Every kernel exists twice: an explicit-loop version that numba compiles
(``*_loops``) and a vectorised numpy version (``*_numpy``).  The public names
(``soft_bellman_fixed_point`` etc.) point at the loop version when numba is
available and at the numpy version otherwise.  TD(0) is inherently sequential,
so its numpy fallback is the same loop run by the interpreter.
"""

import numpy as np

from ._accel import HAVE_NUMBA, jit

__all__ = [
    "soft_bellman_fixed_point",
    "hard_bellman_fixed_point",
    "mirror_step",
    "push_forward",
    "td0_chunk",
]


# --------------------------------------------------------------------------
# soft (entropy-regularised) Bellman iteration
# --------------------------------------------------------------------------

def soft_bellman_loops(R, P, gamma, lam, v0, thresh, max_iter):
    n, m = R.shape
    v = v0.copy()
    v_new = np.empty(n)
    q = np.empty(m)
    delta = np.inf
    it = 0
    while it < max_iter:
        it += 1
        delta = 0.0
        for s in range(n):
            qmax = -np.inf
            for a in range(m):
                acc = 0.0
                for t in range(n):
                    acc += P[s, a, t] * v[t]
                q[a] = R[s, a] + gamma * acc
                if q[a] > qmax:
                    qmax = q[a]
            z = 0.0
            for a in range(m):
                z += np.exp((q[a] - qmax) / lam)
            v_new[s] = qmax + lam * np.log(z)
            d = abs(v_new[s] - v[s])
            if d > delta:
                delta = d
        for s in range(n):
            v[s] = v_new[s]
        if delta < thresh:
            break
    return v, it, delta


def soft_bellman_numpy(R, P, gamma, lam, v0, thresh, max_iter):
    v = v0.copy()
    delta = np.inf
    it = 0
    while it < max_iter:
        it += 1
        q = R + gamma * (P @ v)
        qmax = q.max(axis=1)
        v_new = qmax + lam * np.log(np.exp((q - qmax[:, None]) / lam).sum(axis=1))
        delta = float(np.max(np.abs(v_new - v)))
        v = v_new
        if delta < thresh:
            break
    return v, it, delta


# --------------------------------------------------------------------------
# unregularised (max) Bellman iteration
# --------------------------------------------------------------------------

def hard_bellman_loops(R, P, gamma, v0, thresh, max_iter):
    n, m = R.shape
    v = v0.copy()
    v_new = np.empty(n)
    delta = np.inf
    it = 0
    while it < max_iter:
        it += 1
        delta = 0.0
        for s in range(n):
            best = -np.inf
            for a in range(m):
                acc = 0.0
                for t in range(n):
                    acc += P[s, a, t] * v[t]
                qa = R[s, a] + gamma * acc
                if qa > best:
                    best = qa
            v_new[s] = best
            d = abs(best - v[s])
            if d > delta:
                delta = d
        for s in range(n):
            v[s] = v_new[s]
        if delta < thresh:
            break
    return v, it, delta


def hard_bellman_numpy(R, P, gamma, v0, thresh, max_iter):
    v = v0.copy()
    delta = np.inf
    it = 0
    while it < max_iter:
        it += 1
        v_new = (R + gamma * (P @ v)).max(axis=1)
        delta = float(np.max(np.abs(v_new - v)))
        v = v_new
        if delta < thresh:
            break
    return v, it, delta


# --------------------------------------------------------------------------
# policy improvement: log-space mirror step followed by uniform mixing
# --------------------------------------------------------------------------

def mirror_step_loops(log_pi, q_hat, alpha, lam, eta):
    n, m = log_pi.shape
    out = np.empty((n, m))
    z = np.empty(m)
    floor = eta / m
    for s in range(n):
        zmax = -np.inf
        for a in range(m):
            z[a] = (1.0 - alpha * lam) * log_pi[s, a] + alpha * q_hat[s, a]
            if z[a] > zmax:
                zmax = z[a]
        tot = 0.0
        for a in range(m):
            z[a] = np.exp(z[a] - zmax)
            tot += z[a]
        for a in range(m):
            out[s, a] = (1.0 - eta) * (z[a] / tot) + floor
    return out


def mirror_step_numpy(log_pi, q_hat, alpha, lam, eta):
    m = log_pi.shape[1]
    z = (1.0 - alpha * lam) * log_pi + alpha * q_hat
    z = z - z.max(axis=1, keepdims=True)
    w = np.exp(z)
    w /= w.sum(axis=1, keepdims=True)
    return (1.0 - eta) * w + eta / m


# --------------------------------------------------------------------------
# mean-field push-forward  L+(t) = sum_s sum_a L(s) pi(a|s) P(t|s,a)
# --------------------------------------------------------------------------

def push_forward_loops(P, pi, L):
    n, m, _ = P.shape
    out = np.zeros(n)
    for s in range(n):
        ls = L[s]
        if ls == 0.0:
            continue
        for a in range(m):
            w = ls * pi[s, a]
            if w == 0.0:
                continue
            for t in range(n):
                out[t] += w * P[s, a, t]
    return out


def push_forward_numpy(P, pi, L):
    return np.einsum("s,sa,sat->t", L, pi, P)


# --------------------------------------------------------------------------
# TD(0) on pre-drawn uniforms
# --------------------------------------------------------------------------

def td0_chunk_loops(v, visits, starts, u_act, u_next, pi_cdf, P_cdf, reward, gamma, c):
    """Run ``len(starts)`` episodes of tabular TD(0), updating ``v`` in place.

    ``reward[s, a]`` is the entropy-augmented one-step reward.  Step size is
    ``c / (c + visits[s])``.  Sampling inverts the cumulative tables with the
    supplied uniforms so the result depends only on the uniforms.
    """
    n_ep, horizon = u_act.shape
    n, m = pi_cdf.shape
    for e in range(n_ep):
        s = starts[e]
        for h in range(horizon):
            a = 0
            while a < m - 1 and u_act[e, h] >= pi_cdf[s, a]:
                a += 1
            t = 0
            while t < n - 1 and u_next[e, h] >= P_cdf[s, a, t]:
                t += 1
            visits[s] += 1
            step = c / (c + visits[s])
            v[s] += step * (reward[s, a] + gamma * v[t] - v[s])
            s = t
    return v


if HAVE_NUMBA:
    soft_bellman_fixed_point = jit(soft_bellman_loops)
    hard_bellman_fixed_point = jit(hard_bellman_loops)
    mirror_step = jit(mirror_step_loops)
    push_forward = jit(push_forward_loops)
    td0_chunk = jit(td0_chunk_loops)
else:
    soft_bellman_fixed_point = soft_bellman_numpy
    hard_bellman_fixed_point = hard_bellman_numpy
    mirror_step = mirror_step_numpy
    push_forward = push_forward_numpy
    td0_chunk = td0_chunk_loops
