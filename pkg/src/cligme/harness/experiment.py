"""Constrained deblurring of a piecewise-constant phantom.

A known ``N x N`` phantom is blurred, corrupted by white Gaussian noise at a
fixed SNR, and restored by either anisotropic TV (``B = 0``) or its
enhanced counterpart, under one of four constraint cases:

``club``     no constraint
``diamond``  every pixel in ``[0.25, 0.75]``
``heart``    all background pixels equal (unknown common value)
``spade``    both
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..gme import check_overall_convexity, design_B_multi
from ..linop import LinearMap, as_linear_map, identity, make_blur, make_difference_operators, stack, to_dense, zero
from ..prox import Box, EqualOnIndices, L1Norm, ProductConstraint, SeparableSum, WholeSpace
from ..solver import CLigmeProblem, SolverParams, compute_step_sizes, solve, verify_step_condition

log = logging.getLogger(__name__)

CASES = ("club", "diamond", "heart", "spade")
MODELS = ("tv", "cligme")
DEFAULT_MU = {"tv": 0.013, "cligme": 0.03}
LEVELS = (0.25, 0.5, 0.75)
BOX = (0.25, 0.75)
BORDER = 3


def parse_kernel(kernel) -> np.ndarray:
    """Blur stencil from a name or explicit rows.

    ``"uniform3"`` / ``"uniform5"``: box average; ``"identity"``: no blur;
    a nested list is used as given (normalization is checked by the blur).
    """
    if not isinstance(kernel, str):
        return np.asarray(kernel, dtype=float)
    s = kernel.strip().lower()
    if s == "identity":
        return np.ones((1, 1))
    if s.startswith("uniform"):
        k = int(s[len("uniform"):] or 3)
        return np.full((k, k), 1.0 / (k * k))
    raise ValueError(f"unknown blur kernel {kernel!r}; use 'uniform<k>', 'identity' or explicit rows")


@dataclass
class ExperimentConfig:
    N: int = 16
    snr_db: float = 20.0
    mu: float | None = None
    theta: tuple[float, ...] = (0.99, 0.99)
    omega: tuple[float, ...] = (0.5, 0.5)
    kappa: float = 1.001
    case: str = "club"
    model: str = "cligme"
    trials: int = 100
    iterations: int = 5000
    rng_seed: int = 0
    blur: str | list = "uniform3"
    boundary: str = "reflect"
    output_dir: str = "out"
    jobs: int = 1

    def __post_init__(self):
        self.theta = tuple(float(t) for t in self.theta)
        self.omega = tuple(float(w) for w in self.omega)
        if self.N < 8:
            raise ValueError(f"N must be at least 8, got {self.N}")
        if self.case not in CASES:
            raise ValueError(f"case must be one of {CASES}, got {self.case!r}")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.mu is not None and self.mu <= 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if len(self.theta) != 2 or len(self.omega) != 2:
            raise ValueError("theta and omega need one value per difference block (2)")
        if any(not 0 <= t <= 1 for t in self.theta):
            raise ValueError(f"theta values must lie in [0, 1], got {self.theta}")
        if any(w <= 0 for w in self.omega) or abs(sum(self.omega) - 1) > 1e-12:
            raise ValueError(f"omega must be positive and sum to 1, got {self.omega}")
        if self.kappa <= 1:
            raise ValueError(f"kappa must exceed 1, got {self.kappa}")
        if self.trials < 1 or self.iterations < 1 or self.jobs < 1:
            raise ValueError("trials, iterations and jobs must be positive")
        if self.boundary not in ("reflect", "zero"):
            raise ValueError(f"boundary must be 'reflect' or 'zero', got {self.boundary!r}")

    @property
    def effective_mu(self) -> float:
        return DEFAULT_MU[self.model] if self.mu is None else float(self.mu)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class TrialResult:
    se_trace: np.ndarray
    final_se: float
    converged: bool
    x: np.ndarray
    y: np.ndarray

    @property
    def iterations(self) -> int:
        return len(self.se_trace) - 1


@dataclass
class TrialsSummary:
    config: ExperimentConfig
    mse: float
    stderr: float
    mean_trace: np.ndarray
    trials: list[TrialResult] = field(repr=False)


def background_indices(N: int, width: int = BORDER) -> np.ndarray:
    """Column-major indices of the border band of the given width."""
    mask = np.zeros((N, N), dtype=bool)
    mask[:width, :] = mask[-width:, :] = True
    mask[:, :width] = mask[:, -width:] = True
    return np.flatnonzero(mask.ravel(order="F"))


def phantom_layout(N: int) -> dict:
    """Rectangles (row slice, col slice, level) of the phantom interior."""
    m = N - 2 * BORDER
    a = max(1, round(0.6 * m))
    width = max(1, round(0.8 * m))
    c0 = BORDER + (m - width) // 2
    return {
        "background": LEVELS[0],
        "blocks": [
            (slice(BORDER, BORDER + a), slice(BORDER, BORDER + a), LEVELS[2]),
            (slice(BORDER + a, N - BORDER), slice(c0, c0 + width), LEVELS[1]),
        ],
    }


def make_phantom(N: int) -> np.ndarray:
    """Piecewise-constant test image, column-major vectorized.

    Background (including the width-3 border band) is 0.25; for ``N = 16``
    there is a 6x6 block at 0.75 (rows/cols 3..8) and a 4x8 block at 0.5
    (rows 9..12, cols 4..11), 0-based.
    """
    if N < 8:
        raise ValueError(f"phantom needs N >= 8, got {N}")
    layout = phantom_layout(N)
    X = np.full((N, N), layout["background"])
    for rows, cols, level in layout["blocks"]:
        X[rows, cols] = level
    return X.ravel(order="F")


def add_noise(signal, snr_db: float, seed: int, reference=None) -> np.ndarray:
    """Return ``signal + eps`` with ``||ref||^2 / ||eps||^2 = 10^(snr_db/10)``.

    ``eps`` is seeded standard Gaussian rescaled to the exact norm.
    ``reference`` defaults to ``signal``.
    """
    signal = np.asarray(signal, dtype=float)
    ref = signal if reference is None else np.asarray(reference, dtype=float)
    ref_norm = np.linalg.norm(ref)
    if ref_norm == 0:
        raise ValueError("cannot calibrate noise against a zero vector")
    eps = np.random.Generator(np.random.PCG64(seed)).standard_normal(signal.shape)
    eps *= ref_norm * 10.0 ** (-snr_db / 20.0) / np.linalg.norm(eps)
    return signal + eps


def build_constraints(case: str, N: int) -> ProductConstraint:
    if case not in CASES:
        raise ValueError(f"unknown constraint case {case!r}")
    n = N * N
    first = Box(n, *BOX) if case in ("diamond", "spade") else WholeSpace(n)
    second = EqualOnIndices(n, background_indices(N)) if case in ("heart", "spade") else WholeSpace(n)
    return ProductConstraint(n, [(identity(n), first), (identity(n), second)])


@lru_cache(maxsize=8)
def _operators(N: int, blur_key, boundary: str):
    kernel = parse_kernel(blur_key if isinstance(blur_key, str) else [list(r) for r in blur_key])
    A = make_blur(N, kernel, boundary)
    D_V, D_H = make_difference_operators(N)
    # dense copies: at desk scale one matvec beats the structured stencils
    return (
        as_linear_map(to_dense(A), "A"),
        as_linear_map(to_dense(D_H), "D_H"),
        as_linear_map(to_dense(D_V), "D_V"),
    )


def _blur_key(blur):
    return blur if isinstance(blur, str) else tuple(tuple(float(v) for v in r) for r in blur)


def build_operators(config: ExperimentConfig) -> tuple[LinearMap, LinearMap, LinearMap]:
    """Blur ``A`` and the difference operators ``(D_H, D_V)`` for a config."""
    return _operators(config.N, _blur_key(config.blur), config.boundary)


def build_model(config: ExperimentConfig, A: LinearMap | None = None, y=None, certify: bool = True) -> CLigmeProblem:
    """Assemble the TV or enhanced-TV problem for ``config``.

    ``L = [D_H; D_V]`` with an l1 penalty on each block (weights 1). The
    enhanced model designs ``B`` blockwise from ``(theta_i, omega_i)``; the
    overall-convexity certificate must pass or this raises.
    """
    A_default, D_H, D_V = build_operators(config)
    A = A_default if A is None else A
    n = config.N**2
    m = D_H.codomain_dim
    L = stack(D_H, D_V)
    penalty = SeparableSum([(1.0, L1Norm(m)), (1.0, L1Norm(m))])
    mu = config.effective_mu
    if config.model == "tv":
        B = zero(2 * m)
    else:
        B = design_B_multi(
            A,
            [(D_H, 1.0, config.theta[0], config.omega[0]), (D_V, 1.0, config.theta[1], config.omega[1])],
            mu,
        )
        cert = check_overall_convexity(A, L, B, mu) if certify else None
        if cert is not None and not cert.passed:
            raise ValueError(f"enhanced model rejected: {cert}")
    y = np.zeros(A.codomain_dim) if y is None else y
    return CLigmeProblem(A, y, mu, penalty, L, B, build_constraints(config.case, config.N))


def _with_observation(template: CLigmeProblem, y) -> CLigmeProblem:
    return dataclasses.replace(template, y=y)


def _prepare(config: ExperimentConfig):
    template = build_model(config)
    sigma, tau = compute_step_sizes(config.kappa, template)
    params = SolverParams(config.kappa, sigma, tau, max_iters=config.iterations, stop_tol=0.0)
    if not verify_step_condition(params, template):
        raise ValueError(f"step sizes sigma={sigma}, tau={tau} violate the step condition")
    # share the y-independent products across trials
    for name in ("C", "C_set", "Lc", "BtB", "norm_B"):
        getattr(template, name)
    return template, params


def run_trial(config: ExperimentConfig, t: int, template=None, params=None) -> TrialResult:
    if template is None:
        template, params = _prepare(config)
    x_true = make_phantom(config.N)
    Ax = template.A.apply(x_true)
    y = add_noise(Ax, config.snr_db, config.rng_seed + t, reference=x_true)
    problem = _with_observation(template, y)
    for name in ("C", "C_set", "Lc", "BtB", "norm_B"):
        problem.__dict__[name] = template.__dict__[name]
    trace = np.empty(config.iterations + 1)

    def record(k, state):
        d = state.x - x_true
        trace[k] = d @ d

    report = solve(problem, params, check=False, callback=record)
    return TrialResult(trace, float(trace[-1]), report.converged, report.x, y)


def _run_one(args):
    config, t = args
    return run_trial(config, t)


def run_trials(config: ExperimentConfig) -> TrialsSummary:
    """Run ``config.trials`` independent noise realizations.

    Trial ``t`` uses seed ``rng_seed + t``; results do not depend on
    ``jobs``.
    """
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as ex:
            results = list(ex.map(_run_one, [(config, t) for t in range(config.trials)]))
    else:
        template, params = _prepare(config)
        results = [run_trial(config, t, template, params) for t in range(config.trials)]
    traces = np.vstack([r.se_trace for r in results])
    finals = traces[:, -1]
    mse = float(np.mean(finals))
    stderr = float(np.std(finals, ddof=1) / np.sqrt(len(finals))) if len(finals) > 1 else 0.0
    log.info("%s/%s mu=%g: MSE %.6g (+/- %.2g) over %d trials",
             config.model, config.case, config.effective_mu, mse, stderr, config.trials)
    return TrialsSummary(config, mse, stderr, traces.mean(axis=0), results)


@dataclass
class SweepRow:
    model: str
    case: str
    mu: float
    mse: float
    stderr: float


def sweep_mu(config: ExperimentConfig, mu_grid) -> tuple[list[SweepRow], float]:
    """MSE for each ``mu`` in the grid; returns the rows and the argmin."""
    grid = [float(m) for m in mu_grid]
    if not grid:
        raise ValueError("mu grid is empty")
    rows = []
    for mu in grid:
        s = run_trials(config.replace(mu=mu))
        rows.append(SweepRow(config.model, config.case, mu, s.mse, s.stderr))
    best = min(rows, key=lambda r: r.mse).mu
    return rows, best


def compare(config: ExperimentConfig, cases=CASES, models=MODELS) -> dict[tuple[str, str], TrialsSummary]:
    """All cases and models, each model at its default ``mu`` unless
    ``config.mu`` is set."""
    out = {}
    for model in models:
        for case in cases:
            out[model, case] = run_trials(config.replace(model=model, case=case))
    return out
