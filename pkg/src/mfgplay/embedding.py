"""Kernels, Gram matrices and mean embeddings of finite-support distributions.

On a finite support every RKHS quantity reduces to linear algebra with the
Gram matrix ``K``: the embedding of ``L`` evaluated at the support points is
``K @ L`` and ``||mu_L - mu_L'||_H = sqrt((L - L')^T K (L - L'))``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import BadParams, NonPSD

PSD_TOL = 1e-9
SYM_TOL = 1e-12

KERNEL_KINDS = ("identity", "gaussian", "laplace")


@dataclass(frozen=True)
class Kernel:
    kind: str = "gaussian"
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise BadParams(f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}")
        if self.kind != "identity" and not self.bandwidth > 0:
            raise BadParams(f"kernel bandwidth must be positive, got {self.bandwidth}")

    def __call__(self, x, y):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        diff = x[:, None, :] - y[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        if self.kind == "identity":
            return (sq == 0.0).astype(float)
        if self.kind == "gaussian":
            return np.exp(-sq / (2.0 * self.bandwidth**2))
        return np.exp(-np.sqrt(sq) / self.bandwidth)

    def to_dict(self) -> dict:
        if self.kind == "identity":
            return {"kind": "identity"}
        return {"kind": self.kind, "bandwidth": float(self.bandwidth)}

    @classmethod
    def from_dict(cls, d: dict) -> "Kernel":
        kind = d.get("kind", "gaussian")
        if kind == "identity":
            return cls("identity")
        bw = d.get("bandwidth", d.get("scale", 1.0))
        return cls(kind, float(bw))


@dataclass(frozen=True)
class GramMatrix:
    """Gram matrix of a kernel on a fixed point set."""

    K: np.ndarray
    kernel: Kernel = field(default_factory=Kernel)

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise BadParams(f"Gram matrix must be square, got shape {K.shape}")
        if np.max(np.abs(K - K.T), initial=0.0) > SYM_TOL:
            raise NonPSD("Gram matrix is not symmetric")
        if np.max(np.diag(K), initial=0.0) > 1.0 + SYM_TOL:
            raise BadParams("kernel violates k(s, s) <= 1")
        lo = float(np.linalg.eigvalsh(0.5 * (K + K.T))[0])
        if lo < -PSD_TOL:
            raise NonPSD(f"Gram matrix has eigenvalue {lo:.3e} < -{PSD_TOL}")
        K.setflags(write=False)
        object.__setattr__(self, "K", K)

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def embed(self, L) -> "EmbeddedMeanField":
        return embed(self, L)

    def values(self, L) -> np.ndarray:
        return self.K @ np.asarray(L, dtype=float)

    def norm(self, L) -> float:
        L = np.asarray(L, dtype=float)
        return float(np.sqrt(max(0.0, L @ self.K @ L)))

    def distance(self, L1, L2) -> float:
        return rkhs_distance(self, L1, L2)


@dataclass(frozen=True)
class EmbeddedMeanField:
    L: np.ndarray
    values: np.ndarray
    norm: float


def gram(kernel: Kernel, points) -> GramMatrix:
    """Evaluate ``kernel`` on every pair of ``points`` (an n x d array)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    K = kernel(pts, pts)
    K = 0.5 * (K + K.T)
    return GramMatrix(K, kernel)


def embed(G: GramMatrix, L) -> EmbeddedMeanField:
    L = np.asarray(L, dtype=float)
    if L.shape != (G.n,):
        raise BadParams(f"distribution has shape {L.shape}, Gram is {G.n}x{G.n}")
    vals = G.K @ L
    nrm = G.norm(L)
    if nrm > 1.0 + 1e-10:
        raise NonPSD(f"embedding norm {nrm} exceeds 1; kernel is not bounded by 1")
    return EmbeddedMeanField(L, vals, nrm)


def rkhs_distance(G: GramMatrix, L1, L2) -> float:
    """Kernel (MMD) distance between the embeddings of two distributions."""
    d = np.asarray(L1, dtype=float) - np.asarray(L2, dtype=float)
    quad = float(d @ G.K @ d)
    if quad < -PSD_TOL:
        raise NonPSD(f"negative quadratic form {quad:.3e}")
    return float(np.sqrt(max(0.0, quad)))
