"""Truncated multivariate Taylor arithmetic.

The backstepping recursion consumes the partial derivatives of each virtual
control while building the next one, so every intermediate scalar is carried
as a truncated Taylor expansion in the controller inputs: value, gradient,
and (for deeper recursions) higher derivative tensors.  Deriving the next
stage then only requires shifting coefficients, never numerical differencing.

Coefficient tensors are dense and symmetric: ``coef[p]`` has shape
``(n,) * p`` and holds the order-``p`` partial derivatives.  Products follow
the Leibniz rule; orders 0..2 are hand-unrolled since they dominate, higher
orders go through a generic symmetrized outer product.

Instances are immutable by convention: operations always allocate fresh
arrays, and shared seed/zero tensors are marked read-only.
"""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np

__all__ = ["Taylor", "TaylorSpace"]


class Taylor:
    __slots__ = ("order", "coef")

    def __init__(self, order: int, coef: tuple):
        self.order = order
        self.coef = coef  # coef[0] is a float, coef[p] an (n,)*p ndarray

    @property
    def value(self) -> float:
        return self.coef[0]

    @property
    def grad(self) -> np.ndarray:
        if self.order < 1:
            raise ValueError("order-0 expansion has no gradient")
        return self.coef[1]

    def partial(self, i: int) -> "Taylor":
        """d/dz_i as a Taylor of one order less (tensor index shift)."""
        if self.order < 1:
            raise ValueError("cannot take a partial of an order-0 expansion")
        shifted = [self.coef[p][i] if p > 1 else float(self.coef[1][i])
                   for p in range(1, self.order + 1)]
        return Taylor(self.order - 1, tuple(shifted))

    def truncate(self, order: int) -> "Taylor":
        if order >= self.order:
            return self
        return Taylor(order, self.coef[:order + 1])

    def __add__(self, other: "Taylor") -> "Taylor":
        p = min(self.order, other.order)
        if p == 0:
            return Taylor(0, (self.coef[0] + other.coef[0],))
        if p == 1:
            return Taylor(1, (self.coef[0] + other.coef[0],
                              self.coef[1] + other.coef[1]))
        return Taylor(p, tuple(self.coef[q] + other.coef[q] for q in range(p + 1)))

    def __sub__(self, other: "Taylor") -> "Taylor":
        p = min(self.order, other.order)
        if p == 0:
            return Taylor(0, (self.coef[0] - other.coef[0],))
        if p == 1:
            return Taylor(1, (self.coef[0] - other.coef[0],
                              self.coef[1] - other.coef[1]))
        return Taylor(p, tuple(self.coef[q] - other.coef[q] for q in range(p + 1)))

    def __neg__(self) -> "Taylor":
        return Taylor(self.order, tuple(-c for c in self.coef))

    def scaled(self, a: float) -> "Taylor":
        return Taylor(self.order, tuple(a * c for c in self.coef))

    def __mul__(self, other: "Taylor") -> "Taylor":
        p = min(self.order, other.order)
        a, b = self.coef, other.coef
        if p == 0:
            return Taylor(0, (a[0] * b[0],))
        if p == 1:
            return Taylor(1, (a[0] * b[0], a[0] * b[1] + b[0] * a[1]))
        if p == 2:
            g = a[0] * b[1] + b[0] * a[1]
            cross = np.outer(a[1], b[1])
            h = a[0] * b[2] + b[0] * a[2] + cross + cross.T
            return Taylor(2, (a[0] * b[0], g, h))
        return Taylor(p, tuple(_leibniz(a, b, q) for q in range(p + 1)))


def _sym(t: np.ndarray) -> np.ndarray:
    """Average a tensor over all axis permutations."""
    p = t.ndim
    if p < 2:
        return t
    acc = np.zeros_like(t)
    perms = list(itertools.permutations(range(p)))
    for perm in perms:
        acc += np.transpose(t, perm)
    return acc / len(perms)


def _leibniz(a: tuple, b: tuple, p: int):
    """Order-p derivative tensor of a product, from symmetric factors."""
    if p == 0:
        return a[0] * b[0]
    acc = None
    for k in range(p + 1):
        left = a[k] if k <= len(a) - 1 else None
        right = b[p - k] if p - k <= len(b) - 1 else None
        if left is None or right is None:
            continue
        term = np.multiply.outer(np.asarray(left), np.asarray(right))
        term = math.comb(p, k) * _sym(term)
        acc = term if acc is None else acc + term
    return acc


class TaylorSpace:
    """Factory for expansions over a fixed input dimension ``n``.

    Caches shared zero tensors and unit gradient rows; the shared arrays are
    read-only so an accidental in-place update fails loudly instead of
    corrupting unrelated expansions.
    """

    def __init__(self, n: int):
        self.n = n
        self.eye = np.eye(n)
        self.eye.flags.writeable = False
        self._zeros: dict[int, np.ndarray] = {}

    def zeros(self, p: int) -> np.ndarray:
        z = self._zeros.get(p)
        if z is None:
            z = np.zeros((self.n,) * p)
            z.flags.writeable = False
            self._zeros[p] = z
        return z

    def const(self, value: float, order: int) -> Taylor:
        return Taylor(order, (float(value),) + tuple(self.zeros(p) for p in range(1, order + 1)))

    def var(self, value: float, index: int, order: int) -> Taylor:
        """Seed for input variable z_index."""
        if order == 0:
            return Taylor(0, (float(value),))
        coef = (float(value), self.eye[index]) + tuple(self.zeros(p) for p in range(2, order + 1))
        return Taylor(order, coef)

    def linear(self, value: float, row: np.ndarray, order: int) -> Taylor:
        """Quantity with a constant, precomputed gradient row."""
        if order == 0:
            return Taylor(0, (float(value),))
        coef = (float(value), row) + tuple(self.zeros(p) for p in range(2, order + 1))
        return Taylor(order, coef)

    def from_partials(self, tensors: Sequence[np.ndarray], order: int) -> Taylor:
        """Build from explicit derivative tensors (value, grad, hess, ...)."""
        coef = [float(tensors[0])]
        for p in range(1, order + 1):
            coef.append(np.asarray(tensors[p]) if p < len(tensors) else self.zeros(p))
        return Taylor(order, tuple(coef))
