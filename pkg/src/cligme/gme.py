"""Generalized Moreau enhancement of a convex penalty.

For a penalty ``Psi`` and a matrix ``B`` the enhanced penalty is

    Psi_B(z) = Psi(z) - min_v [ Psi(v) + 0.5 * ||B (z - v)||^2 ].

``design_B_theta`` builds a ``B`` that keeps ``0.5||y - Ax||^2 + mu Psi_B(Lx)``
convex, and ``check_overall_convexity`` verifies the sufficient condition
``A^T A - mu L^T B^T B L >= 0`` numerically.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linop import LinearMap, as_linear_map, block_diag, operator_norm, to_dense
from .prox import Penalty

__all__ = [
    "DENSE_CAP",
    "GmeEvalWarning",
    "GmeRegularizer",
    "ConvexityCertificate",
    "complete_to_nonsingular",
    "design_B_theta",
    "design_B_multi",
    "eval_gme_penalty",
    "check_overall_convexity",
]

DENSE_CAP = 1024
_PINV_RCOND = 1e-12
_CLIP_RCOND = 1e-12


class GmeEvalWarning(RuntimeWarning):
    """Inner minimization of the enhanced penalty hit its iteration cap."""


def _dense(M) -> np.ndarray:
    return to_dense(M) if isinstance(M, LinearMap) else np.atleast_2d(np.asarray(M, dtype=float))


def complete_to_nonsingular(L) -> np.ndarray:
    """Extend a full-row-rank ``l x n`` matrix to a nonsingular ``n x n`` one.

    The last ``l`` rows of the result are ``L`` itself; the first ``n - l``
    rows are an orthonormal basis of the orthogonal complement of the row
    space of ``L``.
    """
    L = _dense(L)
    l, n = L.shape
    if l > n:
        raise ValueError(f"L has more rows ({l}) than columns ({n}); rank {min(l, n)} < {l}")
    _, s, Vt = np.linalg.svd(L)
    tol = max(L.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    if rank < l:
        raise np.linalg.LinAlgError(f"L must have full row rank {l}, computed rank is {rank}")
    return np.vstack([Vt[l:], L])


def _sym_pinv(G: np.ndarray) -> np.ndarray:
    lam, V = np.linalg.eigh(0.5 * (G + G.T))
    if lam.size == 0:
        return G.copy()
    cut = _PINV_RCOND * max(lam.max(), 0.0)
    inv = np.zeros_like(lam)
    keep = lam > cut
    inv[keep] = 1.0 / lam[keep]
    return (V * inv) @ V.T


def design_B_theta(A, L, mu: float, theta: float) -> np.ndarray:
    """Enhancement matrix ``B = sqrt(theta/mu) Lambda^{1/2} U^T`` (``l x l``).

    ``A L~^{-1}`` is split as ``[A1 A2]`` with ``L~`` from
    :func:`complete_to_nonsingular`; ``U Lambda U^T`` is the eigendecomposition
    of the Schur complement ``A2^T A2 - A2^T A1 (A1^T A1)^+ A1^T A2``.
    Any ``theta`` in ``[0, 1]`` gives ``A^T A - mu L^T B^T B L >= 0``.
    """
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    A, L = _dense(A), _dense(L)
    l, n = L.shape
    if A.shape[1] != n:
        raise ValueError(f"A has {A.shape[1]} columns but L has {n}")
    Lt = complete_to_nonsingular(L)
    At = np.linalg.solve(Lt.T, A.T).T
    A1, A2 = At[:, : n - l], At[:, n - l:]
    G = A2.T @ A2
    if n > l:
        C = A1.T @ A2
        G = G - C.T @ _sym_pinv(A1.T @ A1) @ C
    lam, U = np.linalg.eigh(0.5 * (G + G.T))
    scale = np.linalg.norm(A, 2) ** 2 if A.size else 0.0
    if lam.size and lam.min() < -1e-8 * scale:
        raise np.linalg.LinAlgError(
            f"Schur complement has eigenvalue {lam.min():.3e}, not PSD up to round-off"
        )
    top = max(lam.max(), 0.0) if lam.size else 0.0
    lam = np.where(lam < _CLIP_RCOND * top, 0.0, lam)
    return np.sqrt(theta / mu) * (np.sqrt(lam)[:, None] * U.T)


def design_B_multi(A, penalties: Sequence[tuple], mu: float) -> LinearMap:
    """Block-diagonal enhancement for a sum of enhanced penalties.

    Parameters
    ----------
    A : array_like or LinearMap
        Observation matrix.
    penalties : sequence of (L_i, mu_i, theta_i, omega_i)
        Per-block analysis operator, block weight, enhancement level and
        share of the data term. The shares must sum to one.
    mu : float
        Global regularization weight.

    Returns
    -------
    LinearMap
        ``(z_1, ..., z_M) -> (sqrt(mu_1) B_1 z_1, ..., sqrt(mu_M) B_M z_M)``
        where ``B_i = design_B_theta(sqrt(omega_i / mu) A, L_i, mu_i, theta_i)``.
    """
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if not penalties:
        raise ValueError("need at least one penalty block")
    omegas = [float(p[3]) for p in penalties]
    if any(w <= 0 for w in omegas):
        raise ValueError(f"omega weights must be positive, got {omegas}")
    if abs(sum(omegas) - 1.0) > 1e-12:
        raise ValueError(f"omega weights must sum to 1, sum is {sum(omegas)!r}")
    A = _dense(A)
    blocks = []
    for k, (L_i, mu_i, theta_i, omega_i) in enumerate(penalties):
        if mu_i <= 0:
            raise ValueError(f"block {k}: mu_i must be positive, got {mu_i}")
        B_i = design_B_theta(np.sqrt(omega_i / mu) * A, L_i, mu_i, theta_i)
        blocks.append(as_linear_map(np.sqrt(mu_i) * B_i, name=f"B{k + 1}"))
    return block_diag(blocks)


@dataclass(frozen=True)
class GmeRegularizer:
    penalty: Penalty
    B: LinearMap
    mu: float = 1.0


def eval_gme_penalty(reg: GmeRegularizer, z, inner_tol: float = 1e-12, max_iters: int = 100_000) -> float:
    """Value of ``Psi_B(z)`` (unweighted by ``reg.mu``).

    The inner minimization over ``v`` runs proximal-gradient steps with
    step ``1/||B||^2`` from ``v = z`` and stops when the inner objective
    decreases by less than ``inner_tol``. Reporting utility only.
    """
    if inner_tol <= 0:
        raise ValueError("inner_tol must be positive")
    psi, B = reg.penalty, reg.B
    z = np.asarray(z, dtype=float)
    psi_z = psi.value(z)
    nB = operator_norm(B)
    if nB == 0.0:
        return psi_z
    step = 1.0 / nB**2

    def inner(v):
        r = B.apply(z - v)
        return psi.value(v) + 0.5 * float(r @ r)

    v = z.copy()
    best = inner(v)
    for _ in range(max_iters):
        v = psi.prox(v + step * B.apply_adjoint(B.apply(z - v)), step)
        f = inner(v)
        decrease = best - f
        best = min(best, f)
        if decrease < inner_tol:
            break
    else:
        warnings.warn(
            f"eval_gme_penalty: inner iteration cap {max_iters} reached", GmeEvalWarning, stacklevel=2
        )
    return psi_z - best


@dataclass(frozen=True)
class ConvexityCertificate:
    lambda_min: float
    passed: bool
    tolerance: float
    threshold: float

    def __str__(self):
        verdict = "PASSED" if self.passed else "FAILED"
        return (
            f"overall convexity {verdict}: lambda_min = {self.lambda_min:.6e} "
            f"(threshold {self.threshold:.3e}, tol {self.tolerance:g})"
        )


def check_overall_convexity(A: LinearMap, L: LinearMap, B: LinearMap, mu: float, tol: float = 1e-9) -> ConvexityCertificate:
    """Smallest eigenvalue of ``A*A - mu L*B*BL`` by dense eigensolve.

    Passes iff ``lambda_min >= -tol * (1 + ||A||_op^2)``. Refuses domains
    larger than :data:`DENSE_CAP`.
    """
    A, L, B = (as_linear_map(M) for M in (A, L, B))
    n = A.domain_dim
    if n > DENSE_CAP:
        raise ValueError(
            f"certificate densifies an {n} x {n} matrix; the cap is {DENSE_CAP}. "
            "Reduce the problem size to certify."
        )
    if L.domain_dim != n or B.domain_dim != L.codomain_dim:
        raise ValueError(f"inconsistent dimensions: A {A.shape}, L {L.shape}, B {B.shape}")
    Ad = to_dense(A)
    BL = to_dense(B) @ to_dense(L)
    M = Ad.T @ Ad - mu * (BL.T @ BL)
    lam_min = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
    normA2 = float(np.linalg.norm(Ad, 2) ** 2) if Ad.size else 0.0
    threshold = -tol * (1.0 + normA2)
    return ConvexityCertificate(lam_min, lam_min >= threshold, tol, threshold)
