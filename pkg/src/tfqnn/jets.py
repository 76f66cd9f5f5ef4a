"""Truncated multivariate Taylor coefficient bookkeeping.

A jet over ``D`` input dimensions is stored as one coefficient per multi-index
(monomial) ``m``; coefficient ``m`` equals ``d^m f / m!``. Monomial sets are
always closed under taking divisors so that products stay inside the set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from math import factorial

import numpy as np

Monomial = tuple[int, ...]


def all_monomials(num_dims: int, order: int) -> list[Monomial]:
    monos = [m for m in product(range(order + 1), repeat=num_dims) if sum(m) <= order]
    return sorted(monos, key=lambda m: (sum(m), tuple(-v for v in m)))


def closure(monomials, num_dims: int) -> list[Monomial]:
    """Smallest divisor-closed set containing ``monomials`` (and the constant term)."""
    out = {(0,) * num_dims}
    for m in monomials:
        if len(m) != num_dims:
            raise ValueError(f"monomial {m} has wrong dimension (expected {num_dims})")
        out.update(product(*(range(v + 1) for v in m)))
    return sorted(out, key=lambda m: (sum(m), tuple(-v for v in m)))


def unit(num_dims: int, dim: int, power: int = 1) -> Monomial:
    m = [0] * num_dims
    m[dim] = power
    return tuple(m)


@dataclass(frozen=True)
class JetSpace:
    """Index tables for a divisor-closed monomial set."""

    monomials: tuple[Monomial, ...]
    num_dims: int = field(init=False)

    def __post_init__(self):
        monos = tuple(tuple(int(v) for v in m) for m in self.monomials)
        if not monos or any(v != 0 for v in monos[0]):
            raise ValueError("first monomial must be the constant term")
        object.__setattr__(self, "monomials", monos)
        object.__setattr__(self, "num_dims", len(monos[0]))
        index = {m: i for i, m in enumerate(monos)}
        for m in monos:
            for d in range(len(m)):
                if m[d] and tuple(v - (j == d) for j, v in enumerate(m)) not in index:
                    raise ValueError("monomial set is not divisor-closed")

    @classmethod
    def plain(cls, num_dims: int) -> "JetSpace":
        return cls(((0,) * num_dims,))

    @classmethod
    def covering(cls, monomials, num_dims: int) -> "JetSpace":
        return cls(tuple(closure(monomials, num_dims)))

    @property
    def size(self) -> int:
        return len(self.monomials)

    @cached_property
    def index(self) -> dict[Monomial, int]:
        return {m: i for i, m in enumerate(self.monomials)}

    @cached_property
    def max_power(self) -> tuple[int, ...]:
        return tuple(max(m[d] for m in self.monomials) for d in range(self.num_dims))

    @cached_property
    def factorials(self) -> np.ndarray:
        """``m!`` per monomial: converts Taylor coefficients to derivatives."""
        return np.array(
            [np.prod([factorial(v) for v in m]) for m in self.monomials], dtype=float
        )

    def shift_pairs(self, dim: int, power: int) -> tuple[np.ndarray, np.ndarray]:
        """(dst, src) indices with ``dst = src + power * e_dim``."""
        dst, src = [], []
        for i, m in enumerate(self.monomials):
            if m[dim] >= power:
                s = tuple(v - power * (j == dim) for j, v in enumerate(m))
                dst.append(i)
                src.append(self.index[s])
        return np.array(dst, dtype=int), np.array(src, dtype=int)

    @cached_property
    def product_matrix(self) -> np.ndarray:
        """(K*K, K) 0/1 matrix summing coefficient pairs ``a + b = m``."""
        k = self.size
        mat = np.zeros((k * k, k))
        for ia, a in enumerate(self.monomials):
            for ib, b in enumerate(self.monomials):
                m = tuple(x + y for x, y in zip(a, b))
                j = self.index.get(m)
                if j is not None:
                    mat[ia * k + ib, j] = 1.0
        return mat

    def mul_linear(self, coeffs: np.ndarray, x0, dim: int) -> np.ndarray:
        """Multiply jets by the linear function ``x0 + delta_dim`` (jet axis = -1)."""
        out = np.asarray(x0)[..., None] * coeffs
        dst, src = self.shift_pairs(dim, 1)
        out[..., dst] += coeffs[..., src]
        return out
