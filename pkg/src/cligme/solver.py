"""Fixed-point solver for convexly constrained enhanced least squares.

Problem::

    minimize_{C x in S}  0.5 ||y - A x||^2 + mu * Psi_B(L x)

The constraint is folded into the regularizer on the product space
``Z x Zc`` via ``L_c = [L; C]`` and ``B_c = B (+) 0``. The iteration map acts
on triples ``(x, v, w)`` and is averaged nonexpansive in the metric induced
by the block operator ``P`` (see :func:`p_norm`), so its plain fixed-point
iteration converges to a minimizer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .gme import GmeRegularizer, check_overall_convexity, eval_gme_penalty
from .linop import LinearMap, direct_sum, operator_norm, stack, to_dense, zero
from .prox import MEMBERSHIP_TOL, Penalty, ProductConstraint

__all__ = [
    "StepConditionError",
    "CLigmeProblem",
    "SolverParams",
    "SolverState",
    "SolveReport",
    "compute_step_sizes",
    "verify_step_condition",
    "t_cligme_step",
    "p_norm",
    "solve",
    "objective",
]

log = logging.getLogger(__name__)


class StepConditionError(ValueError):
    """Step sizes violate the positive-definiteness condition."""


@dataclass(frozen=True)
class CLigmeProblem:
    """Data of one constrained problem.

    Parameters
    ----------
    A : LinearMap
        Observation operator ``X -> Y``.
    y : ndarray
        Observation.
    mu : float
        Regularization weight.
    penalty : Penalty
        Base penalty ``Psi`` on ``Z``.
    L : LinearMap
        Analysis operator ``X -> Z``.
    B : LinearMap
        Enhancement ``Z -> Z~``. Use :func:`cligme.linop.zero` for the
        plain convex penalty.
    constraints : ProductConstraint, optional
        Hard constraints; none by default.
    """

    A: LinearMap
    y: np.ndarray
    mu: float
    penalty: Penalty
    L: LinearMap
    B: LinearMap
    constraints: ProductConstraint | None = None

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        if self.mu <= 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        n = self.A.domain_dim
        if self.y.shape != (self.A.codomain_dim,):
            raise ValueError(f"y has shape {self.y.shape}, A lands in R^{self.A.codomain_dim}")
        if self.L.domain_dim != n:
            raise ValueError(f"L acts on R^{self.L.domain_dim}, A on R^{n}")
        if self.penalty.dim != self.L.codomain_dim:
            raise ValueError(f"penalty lives on R^{self.penalty.dim}, L lands in R^{self.L.codomain_dim}")
        if self.B.domain_dim != self.L.codomain_dim:
            raise ValueError(f"B acts on R^{self.B.domain_dim}, L lands in R^{self.L.codomain_dim}")
        if self.constraints is None:
            object.__setattr__(self, "constraints", ProductConstraint(n))
        elif self.constraints.domain_dim != n:
            raise ValueError(f"constraints act on R^{self.constraints.domain_dim}, expected R^{n}")

    @property
    def n(self) -> int:
        return self.A.domain_dim

    @property
    def l(self) -> int:
        return self.L.codomain_dim

    @cached_property
    def C(self) -> LinearMap:
        return self.constraints.operator

    @cached_property
    def C_set(self):
        return self.constraints.set

    @cached_property
    def Lc(self) -> LinearMap:
        return stack(self.L, self.C)

    @cached_property
    def Bc(self) -> LinearMap:
        return direct_sum(self.B, zero(self.C.codomain_dim))

    @cached_property
    def BtB(self) -> LinearMap:
        return self.B.H @ self.B

    @cached_property
    def Aty(self) -> np.ndarray:
        return self.A.apply_adjoint(self.y)

    @cached_property
    def norm_B(self) -> float:
        return operator_norm(self.B)

    def certificate(self, tol: float = 1e-9):
        return check_overall_convexity(self.A, self.L, self.B, self.mu, tol)


@dataclass(frozen=True)
class SolverParams:
    kappa: float
    sigma: float
    tau: float
    max_iters: int = 5000
    stop_tol: float = 1e-10

    def __post_init__(self):
        if self.kappa <= 1:
            raise ValueError(f"kappa must exceed 1, got {self.kappa}")
        if self.sigma <= 0 or self.tau <= 0:
            raise ValueError("sigma and tau must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.stop_tol < 0:
            raise ValueError("stop_tol must be nonnegative")

    @classmethod
    def for_problem(cls, problem: CLigmeProblem, kappa: float = 1.001, **kw) -> "SolverParams":
        sigma, tau = compute_step_sizes(kappa, problem)
        return cls(kappa, sigma, tau, **kw)


@dataclass
class SolverState:
    x: np.ndarray
    v: np.ndarray
    w: np.ndarray

    @classmethod
    def zeros(cls, problem: CLigmeProblem) -> "SolverState":
        return cls(np.zeros(problem.n), np.zeros(problem.l), np.zeros(problem.Lc.codomain_dim))

    def __sub__(self, other: "SolverState") -> "SolverState":
        return SolverState(self.x - other.x, self.v - other.v, self.w - other.w)

    def copy(self) -> "SolverState":
        return SolverState(self.x.copy(), self.v.copy(), self.w.copy())


@dataclass
class SolveReport:
    x: np.ndarray
    iterations: int
    residuals: list[float]
    converged: bool
    state: SolverState
    objectives: list[float] | None = field(default=None)


def compute_step_sizes(kappa: float, problem: CLigmeProblem) -> tuple[float, float]:
    """Default ``(sigma, tau)`` for a given ``kappa > 1``.

    ``sigma = ||(kappa/2) A*A + mu Lc*Lc|| + (kappa - 1)`` and
    ``tau = (kappa/2 + 2/kappa) mu ||B||^2 + (kappa - 1)``.
    """
    if kappa <= 1:
        raise ValueError(f"kappa must exceed 1, got {kappa}")
    A, Lc, mu = problem.A, problem.Lc, problem.mu
    S = (0.5 * kappa) * (A.H @ A) + mu * (Lc.H @ Lc)
    sigma = operator_norm(S) + (kappa - 1.0)
    tau = (0.5 * kappa + 2.0 / kappa) * mu * problem.norm_B**2 + (kappa - 1.0)
    return sigma, tau


def verify_step_condition(params: SolverParams, problem: CLigmeProblem) -> bool:
    """Dense check that ``sigma I - (kappa/2) A*A - mu Lc*Lc`` is positive
    definite and ``tau >= (kappa/2 + 2/kappa) mu ||B||^2``."""
    k, mu = params.kappa, problem.mu
    Ad, Lcd = to_dense(problem.A), to_dense(problem.Lc)
    M = params.sigma * np.eye(problem.n) - 0.5 * k * (Ad.T @ Ad) - mu * (Lcd.T @ Lcd)
    lam_min = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
    Bd = to_dense(problem.B)
    nB = float(np.linalg.norm(Bd, 2)) if Bd.size else 0.0
    return lam_min > 0 and params.tau >= (0.5 * k + 2.0 / k) * mu * nB**2 - 1e-12


def _step(problem, params, x, v, w, Lx, Cx, BBLx, BBv):
    """One application of the iteration map with carried products.

    Returns the new triple and the products ``L xi``, ``C xi``,
    ``B*B L xi`` and ``B*B zeta`` reused by the next step and by the
    metric computations.
    """
    A, L, C, BtB = problem.A, problem.L, problem.C, problem.BtB
    mu, sigma, tau = problem.mu, params.sigma, params.tau
    l = problem.l
    w1, w2 = w[:l], w[l:]
    g = A.apply_adjoint(A.apply(x)) - problem.Aty
    g += L.apply_adjoint(mu * (w1 - (BBLx - BBv)))
    if C.codomain_dim:
        g += mu * C.apply_adjoint(w2)
    xi = x - g / sigma
    Lxi, Cxi = L.apply(xi), C.apply(xi)
    BBLxi = BtB.apply(Lxi)
    gamma = mu / tau
    zeta = problem.penalty.prox(v + gamma * (2.0 * BBLxi - BBLx - BBv), gamma)
    BBzeta = BtB.apply(zeta)
    r1 = 2.0 * Lxi - Lx + w1
    r2 = 2.0 * Cxi - Cx + w2
    eta = np.concatenate([r1 - problem.penalty.prox(r1, 1.0), r2 - problem.C_set.project(r2)])
    return xi, zeta, eta, Lxi, Cxi, BBLxi, BBzeta


def t_cligme_step(state: SolverState, problem: CLigmeProblem, params: SolverParams) -> SolverState:
    """Apply the averaged operator once: ``(x, v, w) -> (xi, zeta, eta)``.

    ``xi = x - (1/sigma)[(A*A - mu L*B*BL) x + mu L*B*B v + mu Lc* w - A*y]``
    ``zeta = Prox_{(mu/tau) Psi}[v + (mu/tau) B*B (2 L xi - L x - v)]``
    ``eta = (Id - Prox_{Psi (+) i_S})(2 Lc xi - Lc x + w)``
    """
    x, v, w = state.x, state.v, state.w
    Lx = problem.L.apply(x)
    out = _step(
        problem, params, x, v, w, Lx, problem.C.apply(x),
        problem.BtB.apply(Lx), problem.BtB.apply(v),
    )
    return SolverState(*out[:3])


def _quad(problem, params, dx2, dv2, dw2, Ldx_BBdv, Lcdx_dw):
    mu = problem.mu
    return params.sigma * dx2 + params.tau * dv2 + mu * dw2 - 2 * mu * Ldx_BBdv - 2 * mu * Lcdx_dw


def _sqrt_checked(q, scale):
    if q < -1e-10 * max(scale, 1e-300):
        raise StepConditionError(
            f"metric quadratic form is negative ({q:.3e}); step sizes violate the condition"
        )
    return float(np.sqrt(max(q, 0.0)))


def p_norm(delta: SolverState, problem: CLigmeProblem, params: SolverParams) -> float:
    """Norm of a state (difference) in the metric ``P``.

    ``<d, P d> = sigma|dx|^2 + tau|dv|^2 + mu|dw|^2 - 2mu<L dx, B*B dv> - 2mu<Lc dx, dw>``
    """
    dx, dv, dw = delta.x, delta.v, delta.w
    Ldx = problem.L.apply(dx)
    Cdx = problem.C.apply(dx)
    dx2, dv2, dw2 = dx @ dx, dv @ dv, dw @ dw
    cross = Ldx @ problem.BtB.apply(dv)
    l = problem.l
    cross_c = Ldx @ dw[:l] + Cdx @ dw[l:]
    q = _quad(problem, params, dx2, dv2, dw2, cross, cross_c)
    scale = params.sigma * dx2 + params.tau * dv2 + problem.mu * dw2
    return _sqrt_checked(q, scale)


def solve(
    problem: CLigmeProblem,
    params: SolverParams,
    init: SolverState | None = None,
    *,
    check: bool = True,
    track_objective: bool = False,
    callback: Callable[[int, SolverState], None] | None = None,
) -> SolveReport:
    """Iterate the averaged operator until the metric residual is small.

    Stops when ``p_norm(s_{k+1} - s_k) / max(1, p_norm(s_{k+1})) < stop_tol``
    or after ``max_iters`` steps. ``stop_tol = 0`` runs the full budget.

    Parameters
    ----------
    check : bool
        Verify the convexity certificate and the step-size condition
        before iterating (dense, desk scale only).
    track_objective : bool
        Record the objective after every step (slow).
    callback : callable, optional
        Called as ``callback(k, state)`` with ``k = 0`` for the initial
        state and after every step.
    """
    if check:
        cert = problem.certificate()
        if not cert.passed:
            raise ValueError(f"overall convexity certificate failed: {cert}")
        if not verify_step_condition(params, problem):
            raise StepConditionError(
                f"sigma={params.sigma:g}, tau={params.tau:g} violate the step condition"
            )
    state = SolverState.zeros(problem) if init is None else init.copy()
    x, v, w = state.x, state.v, state.w
    L, C, BtB, l = problem.L, problem.C, problem.BtB, problem.l
    Lx, Cx = L.apply(x), C.apply(x)
    BBLx, BBv = BtB.apply(Lx), BtB.apply(v)

    residuals: list[float] = []
    objectives: list[float] | None = [] if track_objective else None
    if callback is not None:
        callback(0, SolverState(x, v, w))
    converged = False
    k = 0
    for k in range(1, params.max_iters + 1):
        xi, zeta, eta, Lxi, Cxi, BBLxi, BBzeta = _step(problem, params, x, v, w, Lx, Cx, BBLx, BBv)
        dx, dv, dw = xi - x, zeta - v, eta - w
        Ldx = Lxi - Lx
        q = _quad(
            problem, params, dx @ dx, dv @ dv, dw @ dw,
            Ldx @ (BBzeta - BBv), Ldx @ dw[:l] + (Cxi - Cx) @ dw[l:],
        )
        res = _sqrt_checked(q, params.sigma * (dx @ dx) + params.tau * (dv @ dv) + problem.mu * (dw @ dw))
        qs = _quad(
            problem, params, xi @ xi, zeta @ zeta, eta @ eta,
            Lxi @ BBzeta, Lxi @ eta[:l] + Cxi @ eta[l:],
        )
        size = float(np.sqrt(max(qs, 0.0)))
        residuals.append(res)
        x, v, w, Lx, Cx, BBLx, BBv = xi, zeta, eta, Lxi, Cxi, BBLxi, BBzeta
        if objectives is not None:
            objectives.append(objective(problem, x))
        if callback is not None:
            callback(k, SolverState(x, v, w))
        if res / max(1.0, size) < params.stop_tol:
            converged = True
            break
    if not converged:
        log.info("solve: stopped at max_iters=%d, last residual %.3e", params.max_iters, residuals[-1])
    final = SolverState(x, v, w)
    return SolveReport(x.copy(), k, residuals, converged, final, objectives)


def objective(problem: CLigmeProblem, x, inner_tol: float = 1e-12, tol: float = MEMBERSHIP_TOL) -> float:
    """``0.5||y - Ax||^2 + mu Psi_B(Lx)`` if ``Cx`` is feasible, else ``inf``."""
    x = np.asarray(x, dtype=float)
    if not problem.constraints.satisfied_by(x, tol):
        return np.inf
    r = problem.y - problem.A.apply(x)
    reg = GmeRegularizer(problem.penalty, problem.B, problem.mu)
    return 0.5 * float(r @ r) + problem.mu * eval_gme_penalty(reg, problem.L.apply(x), inner_tol)
