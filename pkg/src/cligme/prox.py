"""Proximable penalties and projectable convex sets.

Penalties expose ``value(z)`` and ``prox(z, gamma)`` (the proximity operator
of ``gamma * penalty``); convex sets expose ``project(z)`` and
``contains(z, tol)``. Closed-form operators only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linop import LinearMap, identity, stack, zero

__all__ = [
    "MEMBERSHIP_TOL",
    "Penalty",
    "L1Norm",
    "SeparableSum",
    "ConvexSet",
    "WholeSpace",
    "Box",
    "EqualOnIndices",
    "ProductSet",
    "ProductConstraint",
    "prox_l1",
    "project_box",
    "project_background_mean",
    "prox_product",
    "separable_sum_prox",
]

MEMBERSHIP_TOL = 1e-9


def prox_l1(z, gamma: float) -> np.ndarray:
    """Soft-thresholding, the prox of ``gamma * ||.||_1``."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    z = np.asarray(z, dtype=float)
    return np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0)


def project_box(z, lo: float, hi: float) -> np.ndarray:
    if lo > hi:
        raise ValueError(f"empty box: lo={lo} > hi={hi}")
    return np.clip(np.asarray(z, dtype=float), lo, hi)


def project_background_mean(z, background) -> np.ndarray:
    """Replace the entries listed in ``background`` by their mean.

    This is the projection onto the subspace where those entries coincide.
    """
    idx = np.asarray(background, dtype=int)
    if idx.size == 0:
        raise ValueError("background index set is empty")
    z = np.array(z, dtype=float)
    if idx.min() < 0 or idx.max() >= z.size:
        raise IndexError(f"background indices out of range for a vector of length {z.size}")
    z[idx] = z[idx].mean()
    return z


class Penalty:
    """Base class for a proper, even, coercive convex function with a prox."""

    dim: int

    def value(self, z) -> float:
        raise NotImplementedError

    def prox(self, z, gamma: float = 1.0) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, z) -> float:
        return self.value(z)

    def _check(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise ValueError(f"{type(self).__name__}: expected length {self.dim}, got shape {z.shape}")
        return z


class L1Norm(Penalty):
    def __init__(self, dim: int):
        self.dim = int(dim)

    def value(self, z) -> float:
        return float(np.abs(self._check(z)).sum())

    def prox(self, z, gamma: float = 1.0) -> np.ndarray:
        return prox_l1(self._check(z), gamma)

    def __repr__(self):
        return f"L1Norm({self.dim})"


class SeparableSum(Penalty):
    """Weighted direct sum ``(z_1, ..., z_M) -> sum_i w_i * P_i(z_i)``.

    Parameters
    ----------
    blocks : sequence of (float, Penalty)
        Positive weight and penalty for each block, in stacking order.
    """

    def __init__(self, blocks: Sequence[tuple[float, Penalty]]):
        if not blocks:
            raise ValueError("SeparableSum needs at least one block")
        for w, _ in blocks:
            if w <= 0:
                raise ValueError(f"block weights must be positive, got {w}")
        self.blocks = [(float(w), p) for w, p in blocks]
        self.offsets = np.cumsum([0] + [p.dim for _, p in self.blocks])
        self.dim = int(self.offsets[-1])

    def _split(self, z):
        z = self._check(z)
        return [z[self.offsets[i]:self.offsets[i + 1]] for i in range(len(self.blocks))]

    def value(self, z) -> float:
        return float(sum(w * p.value(zi) for (w, p), zi in zip(self.blocks, self._split(z))))

    def prox(self, z, gamma: float = 1.0) -> np.ndarray:
        if gamma <= 0:
            raise ValueError(f"gamma must be positive, got {gamma}")
        return np.concatenate(
            [p.prox(zi, gamma * w) for (w, p), zi in zip(self.blocks, self._split(z))]
        )

    def __repr__(self):
        inner = ", ".join(f"{w:g}*{p!r}" for w, p in self.blocks)
        return f"SeparableSum({inner})"


def separable_sum_prox(penalties: Sequence[tuple[float, Penalty]], gamma: float, z) -> np.ndarray:
    """Blockwise ``Prox_{gamma * w_i * P_i}`` on a stacked vector."""
    return SeparableSum(penalties).prox(z, gamma)


class ConvexSet:
    """Base class for a nonempty closed convex set with exact projection."""

    dim: int

    def project(self, z) -> np.ndarray:
        raise NotImplementedError

    def contains(self, z, tol: float = MEMBERSHIP_TOL) -> bool:
        raise NotImplementedError

    def indicator(self, z, tol: float = MEMBERSHIP_TOL) -> float:
        return 0.0 if self.contains(z, tol) else np.inf

    def _check(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise ValueError(f"{type(self).__name__}: expected length {self.dim}, got shape {z.shape}")
        return z


class WholeSpace(ConvexSet):
    def __init__(self, dim: int):
        self.dim = int(dim)

    def project(self, z):
        return self._check(z).copy()

    def contains(self, z, tol=MEMBERSHIP_TOL):
        self._check(z)
        return True

    def __repr__(self):
        return f"WholeSpace({self.dim})"


class Box(ConvexSet):
    def __init__(self, dim: int, lo: float, hi: float):
        if lo > hi:
            raise ValueError(f"empty box: lo={lo} > hi={hi}")
        self.dim, self.lo, self.hi = int(dim), float(lo), float(hi)

    def project(self, z):
        return project_box(self._check(z), self.lo, self.hi)

    def contains(self, z, tol=MEMBERSHIP_TOL):
        z = self._check(z)
        return bool(np.all(z >= self.lo - tol) and np.all(z <= self.hi + tol))

    def __repr__(self):
        return f"Box({self.dim}, [{self.lo}, {self.hi}])"


class EqualOnIndices(ConvexSet):
    """Vectors whose entries on a fixed index set all coincide."""

    def __init__(self, dim: int, indices):
        idx = np.unique(np.asarray(indices, dtype=int))
        if idx.size == 0:
            raise ValueError("index set is empty")
        if idx[0] < 0 or idx[-1] >= dim:
            raise IndexError(f"indices out of range for dimension {dim}")
        self.dim, self.indices = int(dim), idx

    def project(self, z):
        return project_background_mean(self._check(z), self.indices)

    def contains(self, z, tol=MEMBERSHIP_TOL):
        vals = self._check(z)[self.indices]
        return bool(vals.max() - vals.min() <= tol)

    def __repr__(self):
        return f"EqualOnIndices({self.dim}, #{self.indices.size})"


class ProductSet(ConvexSet):
    """Cartesian product of sets; projection acts blockwise."""

    def __init__(self, sets: Sequence[ConvexSet]):
        self.sets = list(sets)
        self.offsets = np.cumsum([0] + [s.dim for s in self.sets])
        self.dim = int(self.offsets[-1])

    def _blocks(self, z):
        z = self._check(z)
        return [z[self.offsets[i]:self.offsets[i + 1]] for i in range(len(self.sets))]

    def project(self, z):
        if not self.sets:
            return self._check(z).copy()
        return np.concatenate([s.project(zi) for s, zi in zip(self.sets, self._blocks(z))])

    def contains(self, z, tol=MEMBERSHIP_TOL):
        return all(s.contains(zi, tol) for s, zi in zip(self.sets, self._blocks(z)))

    def __repr__(self):
        return "ProductSet(" + " x ".join(map(repr, self.sets)) + ")"


@dataclass
class ProductConstraint:
    """Constraints ``C_i x in S_i`` gathered into one product-space constraint.

    ``operator`` stacks the restraint maps and ``set`` is the product of
    the sets, so ``operator(x) in set`` holds iff every block constraint does.
    With no blocks the operator has a zero-dimensional codomain.
    """

    domain_dim: int
    blocks: list[tuple[LinearMap, ConvexSet]] = field(default_factory=list)

    def __post_init__(self):
        for k, (C, S) in enumerate(self.blocks):
            if C.domain_dim != self.domain_dim:
                raise ValueError(
                    f"constraint {k}: map acts on R^{C.domain_dim}, expected R^{self.domain_dim}"
                )
            if C.codomain_dim != S.dim:
                raise ValueError(
                    f"constraint {k}: map lands in R^{C.codomain_dim} but set lives in R^{S.dim}"
                )

    @classmethod
    def identity_blocks(cls, sets: Sequence[ConvexSet]) -> "ProductConstraint":
        if not sets:
            raise ValueError("need at least one set to infer the dimension")
        n = sets[0].dim
        return cls(n, [(identity(n), s) for s in sets])

    @property
    def operator(self) -> LinearMap:
        if not self.blocks:
            return zero(self.domain_dim, 0)
        op = self.blocks[0][0]
        for C, _ in self.blocks[1:]:
            op = stack(op, C)
        return op

    @property
    def set(self) -> ProductSet:
        return ProductSet([S for _, S in self.blocks])

    @property
    def dim(self) -> int:
        return sum(S.dim for _, S in self.blocks)

    def satisfied_by(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        return self.set.contains(self.operator.apply(x), tol)


def prox_product(penalty: Penalty, constraint_set: ConvexSet, w1, w2):
    """``(Prox_penalty(w1), P_C(w2))``, the prox of ``penalty (+) indicator_C``."""
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    if w1.shape != (penalty.dim,) or w2.shape != (constraint_set.dim,):
        raise ValueError(
            f"prox_product: got blocks of shapes {w1.shape}, {w2.shape}; "
            f"expected ({penalty.dim},), ({constraint_set.dim},)"
        )
    return penalty.prox(w1, 1.0), constraint_set.project(w2)
