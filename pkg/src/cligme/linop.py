"""Linear maps with adjoints, product-space constructions and norm estimation.

Every operator in the model (observation, analysis, restraint, enhancement)
is a :class:`LinearMap`: a pair of callables ``forward`` / ``adjoint`` plus
its dimensions. Images are vectorized column-major (Fortran order), so the
pixel ``(i, j)`` of an ``N x N`` image sits at index ``i + j * N``.
"""

from __future__ import annotations

import warnings
from typing import Callable

import numpy as np

__all__ = [
    "LinearMap",
    "NormEstimateWarning",
    "as_linear_map",
    "identity",
    "zero",
    "scalar",
    "compose",
    "stack",
    "direct_sum",
    "block_diag",
    "to_dense",
    "operator_norm",
    "make_difference_operators",
    "make_blur",
]

Action = Callable[[np.ndarray], np.ndarray]


class NormEstimateWarning(RuntimeWarning):
    """Power iteration stopped at its iteration cap before converging."""


class LinearMap:
    """A linear map ``R^domain_dim -> R^codomain_dim`` with its adjoint.

    Parameters
    ----------
    forward, adjoint : callable
        Actions ``x -> Lx`` and ``y -> L*y`` on 1-D float arrays.
    domain_dim, codomain_dim : int
        Dimensions of the input and output spaces.
    matrix : ndarray, optional
        Dense representation, kept when the map was built from one. Used
        for fast products and densification.
    name : str, optional
        Label shown in ``repr``.
    """

    __slots__ = ("_forward", "_adjoint", "domain_dim", "codomain_dim", "matrix", "name")

    def __init__(
        self,
        forward: Action,
        adjoint: Action,
        domain_dim: int,
        codomain_dim: int,
        matrix: np.ndarray | None = None,
        name: str = "LinearMap",
    ):
        if domain_dim < 0 or codomain_dim < 0:
            raise ValueError("dimensions must be nonnegative")
        self._forward = forward
        self._adjoint = adjoint
        self.domain_dim = int(domain_dim)
        self.codomain_dim = int(codomain_dim)
        self.matrix = matrix
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return (self.codomain_dim, self.domain_dim)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.apply(x)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.domain_dim,):
            raise ValueError(
                f"{self.name}: expected input of length {self.domain_dim}, got shape {x.shape}"
            )
        return self._forward(x)

    def apply_adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.codomain_dim,):
            raise ValueError(
                f"{self.name}: expected adjoint input of length {self.codomain_dim}, got shape {y.shape}"
            )
        return self._adjoint(y)

    @property
    def H(self) -> "LinearMap":
        """The adjoint map."""
        mat = None if self.matrix is None else self.matrix.T
        return LinearMap(
            self._adjoint, self._forward, self.codomain_dim, self.domain_dim,
            matrix=mat, name=f"{self.name}*",
        )

    def __matmul__(self, other):
        if isinstance(other, LinearMap):
            return compose(self, other)
        return self.apply(other)

    def __mul__(self, alpha: float) -> "LinearMap":
        alpha = float(alpha)
        if self.matrix is not None:
            return as_linear_map(alpha * self.matrix, name=f"{alpha:g}*{self.name}")
        return LinearMap(
            lambda x: alpha * self._forward(x),
            lambda y: alpha * self._adjoint(y),
            self.domain_dim, self.codomain_dim, name=f"{alpha:g}*{self.name}",
        )

    __rmul__ = __mul__

    def __add__(self, other: "LinearMap") -> "LinearMap":
        if self.shape != other.shape:
            raise ValueError(f"cannot add maps of shapes {self.shape} and {other.shape}")
        if self.matrix is not None and other.matrix is not None:
            return as_linear_map(self.matrix + other.matrix, name=f"({self.name} + {other.name})")
        return LinearMap(
            lambda x: self._forward(x) + other._forward(x),
            lambda y: self._adjoint(y) + other._adjoint(y),
            self.domain_dim, self.codomain_dim,
            name=f"({self.name} + {other.name})",
        )

    def __neg__(self) -> "LinearMap":
        return self * -1.0

    def __sub__(self, other: "LinearMap") -> "LinearMap":
        return self + (-other)

    def __repr__(self) -> str:
        return f"<{self.name}: R^{self.domain_dim} -> R^{self.codomain_dim}>"


def as_linear_map(matrix, name: str = "Matrix") -> LinearMap:
    """Wrap a dense 2-D array (or pass through an existing map)."""
    if isinstance(matrix, LinearMap):
        return matrix
    mat = np.atleast_2d(np.asarray(matrix, dtype=float))
    if mat.ndim != 2:
        raise ValueError("matrix must be 2-D")
    matT = mat.T
    return LinearMap(
        lambda x: mat @ x, lambda y: matT @ y, mat.shape[1], mat.shape[0],
        matrix=mat, name=name,
    )


def identity(n: int) -> LinearMap:
    return LinearMap(lambda x: x.copy(), lambda y: y.copy(), n, n, name=f"Id{n}")


def zero(domain_dim: int, codomain_dim: int | None = None) -> LinearMap:
    """The zero map; square when ``codomain_dim`` is omitted."""
    m = domain_dim if codomain_dim is None else codomain_dim
    return LinearMap(
        lambda x: np.zeros(m), lambda y: np.zeros(domain_dim), domain_dim, m,
        name="Zero",
    )


def scalar(alpha: float, n: int) -> LinearMap:
    return identity(n) * alpha


def compose(outer: LinearMap, inner: LinearMap) -> LinearMap:
    """``outer @ inner``, i.e. ``x -> outer(inner(x))``."""
    if outer.domain_dim != inner.codomain_dim:
        raise ValueError(
            f"cannot compose {outer!r} after {inner!r}: "
            f"{inner.codomain_dim} != {outer.domain_dim}"
        )
    if outer.matrix is not None and inner.matrix is not None:
        return as_linear_map(outer.matrix @ inner.matrix, name=f"{outer.name}@{inner.name}")
    f_out, f_in = outer._forward, inner._forward
    a_out, a_in = outer._adjoint, inner._adjoint
    return LinearMap(
        lambda x: f_out(f_in(x)), lambda y: a_in(a_out(y)),
        inner.domain_dim, outer.codomain_dim,
        name=f"{outer.name}@{inner.name}",
    )


def stack(upper: LinearMap, lower: LinearMap) -> LinearMap:
    """Vertical stack ``x -> (Ux, Wx)``; adjoint ``(p, q) -> U*p + W*q``."""
    if upper.domain_dim != lower.domain_dim:
        raise ValueError(
            f"stack: domain mismatch, upper acts on R^{upper.domain_dim} "
            f"but lower acts on R^{lower.domain_dim}"
        )
    k = upper.codomain_dim
    mat = None
    if upper.matrix is not None and lower.matrix is not None:
        mat = np.vstack([upper.matrix, lower.matrix])
    fu, fl, au, al = upper._forward, lower._forward, upper._adjoint, lower._adjoint
    return LinearMap(
        lambda x: np.concatenate([fu(x), fl(x)]),
        lambda y: au(y[:k]) + al(y[k:]),
        upper.domain_dim, k + lower.codomain_dim, matrix=mat,
        name=f"[{upper.name}; {lower.name}]",
    )


def direct_sum(first: LinearMap, second: LinearMap) -> LinearMap:
    """Block-diagonal map ``(z1, z2) -> (F z1, S z2)``."""
    return block_diag([first, second])


def block_diag(blocks: list[LinearMap]) -> LinearMap:
    """Direct sum of any number of maps."""
    if not blocks:
        raise ValueError("block_diag needs at least one block")
    din = np.cumsum([0] + [b.domain_dim for b in blocks])
    dout = np.cumsum([0] + [b.codomain_dim for b in blocks])

    def forward(x):
        return np.concatenate([b._forward(x[din[i]:din[i + 1]]) for i, b in enumerate(blocks)])

    def adjoint(y):
        return np.concatenate([b._adjoint(y[dout[i]:dout[i + 1]]) for i, b in enumerate(blocks)])

    mat = None
    if all(b.matrix is not None for b in blocks):
        mat = np.zeros((dout[-1], din[-1]))
        for i, b in enumerate(blocks):
            mat[dout[i]:dout[i + 1], din[i]:din[i + 1]] = b.matrix
    return LinearMap(
        forward, adjoint, int(din[-1]), int(dout[-1]), matrix=mat,
        name="(" + " + ".join(b.name for b in blocks) + ")",
    )


def to_dense(L: LinearMap) -> np.ndarray:
    """Dense matrix of ``L``, assembled column by column from basis vectors."""
    if L.matrix is not None:
        return np.array(L.matrix, dtype=float)
    out = np.empty((L.codomain_dim, L.domain_dim))
    e = np.zeros(L.domain_dim)
    for j in range(L.domain_dim):
        e[j] = 1.0
        out[:, j] = L.apply(e)
        e[j] = 0.0
    return out


def operator_norm(L: LinearMap, tol: float = 1e-12, max_iters: int = 20000, seed: int = 0) -> float:
    """Largest singular value of ``L`` by power iteration on ``L*L``.

    The start vector is drawn from a fixed-seed generator so the estimate
    (and any step size derived from it) is reproducible. Iteration stops
    once successive Rayleigh quotients agree to relative ``tol``; hitting
    ``max_iters`` first emits :class:`NormEstimateWarning` and returns the
    best estimate so far.
    """
    if L.domain_dim == 0 or L.codomain_dim == 0:
        return 0.0
    x = np.random.default_rng(seed).standard_normal(L.domain_dim)
    x /= np.linalg.norm(x)
    prev = 0.0
    for _ in range(max_iters):
        y = L.apply_adjoint(L.apply(x))
        rq = float(x @ y)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        if abs(rq - prev) <= tol * abs(rq):
            return float(np.sqrt(max(rq, 0.0)))
        prev = rq
    warnings.warn(
        f"operator_norm: no convergence in {max_iters} iterations for {L!r}",
        NormEstimateWarning,
        stacklevel=2,
    )
    return float(np.sqrt(max(prev, 0.0)))


def _diff_rows(X):
    return X[1:, :] - X[:-1, :]


def _diff_rows_adjoint(D, n):
    out = np.zeros((n, D.shape[1]))
    out[1:, :] += D
    out[:-1, :] -= D
    return out


def make_difference_operators(N: int) -> tuple[LinearMap, LinearMap]:
    """Forward first differences on column-major vectorized ``N x N`` images.

    Returns
    -------
    D_V, D_H : LinearMap
        ``D_V`` gives ``X[i+1, j] - X[i, j]`` and ``D_H`` gives
        ``X[i, j+1] - X[i, j]``, both flattened column-major; each maps
        ``R^(N*N)`` to ``R^(N*(N-1))``.
    """
    if N < 2:
        raise ValueError(f"difference operators need N >= 2, got {N}")
    n, m = N * N, N * (N - 1)

    def dv(x):
        return _diff_rows(x.reshape(N, N, order="F")).ravel(order="F")

    def dv_adj(y):
        return _diff_rows_adjoint(y.reshape(N - 1, N, order="F"), N).ravel(order="F")

    def dh(x):
        return _diff_rows(x.reshape(N, N, order="F").T).T.ravel(order="F")

    def dh_adj(y):
        return _diff_rows_adjoint(y.reshape(N, N - 1, order="F").T, N).T.ravel(order="F")

    return LinearMap(dv, dv_adj, n, m, name="D_V"), LinearMap(dh, dh_adj, n, m, name="D_H")


def _pad_index(N, r):
    """Source index of each padded position under edge-repeating reflection."""
    p = np.arange(-r, N + r)
    p = np.where(p < 0, -1 - p, p)
    return np.where(p >= N, 2 * N - 1 - p, p)


def make_blur(N: int, kernel=None, boundary: str = "reflect") -> LinearMap:
    """2-D convolution of a column-major ``N x N`` image with a small stencil.

    Parameters
    ----------
    N : int
        Image side.
    kernel : array_like, optional
        Nonnegative stencil summing to one, odd side lengths. Default is the
        3x3 uniform average.
    boundary : {"reflect", "zero"}
        ``reflect`` mirrors the image about its edge (edge sample repeated);
        ``zero`` pads with zeros.

    The adjoint is exact: correlation with the flipped stencil followed by
    folding the padded border back onto the image.
    """
    if kernel is None:
        kernel = np.full((3, 3), 1.0 / 9.0)
    K = np.atleast_2d(np.asarray(kernel, dtype=float))
    if K.ndim != 2 or K.shape[0] % 2 == 0 or K.shape[1] % 2 == 0:
        raise ValueError(f"kernel must be 2-D with odd side lengths, got shape {K.shape}")
    if np.any(K < 0):
        raise ValueError("kernel entries must be nonnegative")
    if abs(K.sum() - 1.0) > 1e-12:
        raise ValueError(f"kernel must sum to 1, sums to {K.sum()!r}")
    if boundary not in ("reflect", "zero"):
        raise ValueError(f"unknown boundary rule {boundary!r}")
    r0, c0 = K.shape[0] // 2, K.shape[1] // 2
    if r0 > N or c0 > N:
        raise ValueError("kernel larger than the image")
    taps = [(a, b, K[a, b]) for a in range(K.shape[0]) for b in range(K.shape[1]) if K[a, b] != 0.0]
    n = N * N
    ri, ci = _pad_index(N, r0), _pad_index(N, c0)

    def pad(X):
        if boundary == "zero":
            return np.pad(X, ((r0, r0), (c0, c0)))
        return X[np.ix_(ri, ci)]

    def unpad(P):
        if boundary == "zero":
            return P[r0:r0 + N, c0:c0 + N].copy()
        Z = np.zeros((N, P.shape[1]))
        np.add.at(Z, ri, P)
        W = np.zeros((N, N))
        np.add.at(W.T, ci, Z.T)
        return W

    def forward(x):
        P = pad(x.reshape(N, N, order="F"))
        out = np.zeros((N, N))
        # out[i, j] = sum_ab K[a, b] X[i - (a - r0), j - (b - c0)]
        for a, b, k in taps:
            out += k * P[2 * r0 - a:2 * r0 - a + N, 2 * c0 - b:2 * c0 - b + N]
        return out.ravel(order="F")

    def adjoint(y):
        Y = y.reshape(N, N, order="F")
        P = np.zeros((N + 2 * r0, N + 2 * c0))
        for a, b, k in taps:
            P[2 * r0 - a:2 * r0 - a + N, 2 * c0 - b:2 * c0 - b + N] += k * Y
        return unpad(P).ravel(order="F")

    return LinearMap(forward, adjoint, n, n, name="Blur")
