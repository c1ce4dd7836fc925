"""Lanczos process for real antisymmetric generators.

For ``H = i A`` with ``A`` real and antisymmetric, the Hermitian Lanczos
recursion on ``H`` is equivalent (up to a diagonal phase) to the real
recursion ``A v_j = beta_j v_{j+1} - beta_{j-1} v_{j-1}``. The projected
matrix is antisymmetric tridiagonal with zero diagonal, so everything stays
in real arithmetic and ``exp(t T)`` is orthogonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BREAKDOWN_TOL = 1e-13


@dataclass
class LanczosResult:
    basis: np.ndarray  # (n, k) orthonormal columns
    projected: np.ndarray  # (k, k) antisymmetric tridiagonal
    beta_next: float  # coupling to the next (unused) Krylov vector
    breakdown: bool


def lanczos_antisymmetric(A, v: np.ndarray, k: int) -> LanczosResult:
    """Run at most ``k`` steps from ``v`` (normalised internally).

    Full reorthogonalisation (two passes). Stops early on an invariant
    subspace, in which case ``beta_next`` is 0.
    """
    n = v.shape[0]
    k = max(1, min(k, n))
    V = np.zeros((n, k))
    betas = np.zeros(k)
    V[:, 0] = v / np.linalg.norm(v)
    scale = 0.0
    for j in range(k):
        w = A @ V[:, j]
        if j > 0:
            w += betas[j - 1] * V[:, j - 1]
        for _ in range(2):
            w -= V[:, : j + 1] @ (V[:, : j + 1].T @ w)
        beta = float(np.linalg.norm(w))
        scale = max(scale, beta)
        betas[j] = beta
        broke = beta <= BREAKDOWN_TOL * max(scale, 1.0)
        if broke or j + 1 == n:
            return LanczosResult(V[:, : j + 1], _tridiag(betas[:j]), 0.0 if broke else beta, broke)
        if j + 1 < k:
            V[:, j + 1] = w / beta
    return LanczosResult(V, _tridiag(betas[: k - 1]), float(betas[k - 1]), False)


def _tridiag(betas: np.ndarray) -> np.ndarray:
    size = len(betas) + 1
    T = np.zeros((size, size))
    idx = np.arange(size - 1)
    T[idx + 1, idx] = betas
    T[idx, idx + 1] = -betas
    return T


def spectral_norm_estimate(A, k: int = 50, seed: int = 0) -> tuple[float, float]:
    """Largest ``|eigenvalue|`` of ``i A`` from ``k`` Lanczos steps, with residual.

    The residual is ``beta_next * |last component of the top Ritz vector|``.
    """
    n = A.shape[0]
    if n == 0 or (hasattr(A, "nnz") and A.nnz == 0):
        return 0.0, 0.0
    rng = np.random.default_rng(seed)
    res = lanczos_antisymmetric(A, rng.standard_normal(n), k)
    vals, vecs = np.linalg.eigh(1j * res.projected)
    top = int(np.argmax(np.abs(vals)))
    return float(abs(vals[top])), float(res.beta_next * abs(vecs[-1, top]))
