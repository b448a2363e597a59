"""Nested cosine-node quadrature and Smolyak sparse grids on [-1, 1]^d.

Weights are probability-normalized: they integrate against the uniform
density on the cube, so constants integrate to one.  Sparse-grid points are
merged through exact integer node indices on the nested hierarchy, which
keeps point counts bit-stable.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from math import comb

import numpy as np


@dataclass(frozen=True)
class UnivariateRule:
    """One-dimensional quadrature rule on [-1, 1], probability weights."""

    level: int
    nodes: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class SparseGridRule:
    """Multidimensional sparse quadrature; weights may be negative."""

    dim: int
    level: int
    points: np.ndarray  # (K, dim)
    weights: np.ndarray  # (K,)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


def _cc_size(level: int) -> int:
    return 1 if level == 0 else 2**level + 1


def clenshaw_curtis(level: int) -> UnivariateRule:
    """Nested cosine-spaced rule of the given level.

    Level 0 is the midpoint rule; level l >= 1 has 2^l + 1 nodes
    x_k = -cos(pi k / 2^l).  Weights come from the classical cosine-sum
    closed form, divided by two for the uniform probability density.
    """
    if level < 0:
        raise ValueError("level must be nonnegative")
    if level == 0:
        return UnivariateRule(level=0, nodes=np.zeros(1), weights=np.ones(1))
    m = 2**level
    k = np.arange(m + 1)
    nodes = -np.cos(np.pi * k / m)
    nodes[m // 2] = 0.0
    nodes = 0.5 * (nodes - nodes[::-1])  # exact antisymmetry

    j = np.arange(1, m // 2 + 1)
    b = np.where(j == m // 2, 1.0, 2.0)
    c = np.where((k == 0) | (k == m), 1.0, 2.0)
    # w_k = (c_k/m) * (1 - sum_j b_j/(4j^2-1) cos(2 j k pi / m))
    cosines = np.cos(2.0 * np.pi * np.outer(k, j) / m)
    w = (c / m) * (1.0 - cosines @ (b / (4.0 * j**2 - 1.0)))
    w = 0.5 * (w + w[::-1])  # exact symmetry
    w *= 0.5  # Lebesgue -> uniform probability density
    return UnivariateRule(level=level, nodes=nodes, weights=w)


def _node_index_map(level: int, ref_level: int) -> np.ndarray:
    """Global dyadic indices of the level's nodes at the reference level."""
    m_ref = 2**ref_level
    if level == 0:
        return np.array([m_ref // 2], dtype=np.int64)
    m = 2**level
    return np.arange(m + 1, dtype=np.int64) * (m_ref // m)


def _node_values(ref_level: int) -> np.ndarray:
    """Node value for every global index at the reference level.

    Built so that value(m - g) == -value(g) holds exactly.
    """
    m = 2**ref_level
    vals = np.empty(m + 1)
    half = m // 2
    for g in range(half):
        vals[g] = -np.cos(np.pi * g / m)
    vals[half] = 0.0
    for g in range(half + 1, m + 1):
        vals[g] = -vals[m - g]
    return vals


def smolyak(dim: int, level: int) -> SparseGridRule:
    """Sparse combination of nested one-dimensional rules.

    Tensor rules of per-direction levels l with level-(dim-1) <= |l| <= level
    are combined with coefficients (-1)^(level-|l|) * C(dim-1, level-|l|).
    Coincident points of the nested hierarchy are merged by exact integer
    index, summing their weights; in one dimension the rule collapses to
    :func:`clenshaw_curtis`.
    """
    if dim < 1:
        raise ValueError("dim must be at least 1")
    if level < 0:
        raise ValueError("level must be nonnegative")
    ref_level = max(level, 1)
    rules = [clenshaw_curtis(l) for l in range(level + 1)]
    index_maps = [_node_index_map(l, ref_level) for l in range(level + 1)]

    acc: dict[tuple[int, ...], float] = {}
    lo = max(level - (dim - 1), 0)
    for total in range(lo, level + 1):
        coeff = (-1.0) ** (level - total) * comb(dim - 1, level - total)
        for combo in _compositions(total, dim):
            idx_axes = [index_maps[l] for l in combo]
            w_axes = [rules[l].weights for l in combo]
            for pos in product(*(range(len(ix)) for ix in idx_axes)):
                key = tuple(idx_axes[d][p] for d, p in enumerate(pos))
                w = coeff
                for d, p in enumerate(pos):
                    w *= w_axes[d][p]
                acc[key] = acc.get(key, 0.0) + w

    keys = sorted(acc.keys())
    values = _node_values(ref_level)
    points = np.array([[values[g] for g in key] for key in keys])
    weights = np.array([acc[key] for key in keys])
    return SparseGridRule(dim=dim, level=level, points=points, weights=weights)


def _compositions(total: int, dim: int):
    """All nonnegative integer dim-tuples summing to total."""
    if dim == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, dim - 1):
            yield (head, *rest)


def integrate(rule: SparseGridRule, values) -> float:
    """Quadrature sum of black-box values aligned with rule.points."""
    v = np.asarray(values, dtype=float)
    if v.shape != (rule.n_points,):
        raise ValueError(f"expected {rule.n_points} values, got {v.shape}")
    return float(rule.weights @ v)


def moments(rule: SparseGridRule, values) -> tuple[float, float]:
    """Mean and variance of the black box under the rule's density.

    The variance uses the centered two-pass formula at the nodes; a tiny
    negative value caused by negative sparse-grid weights is clamped to
    zero (threshold 1e-12 * mean^2).
    """
    v = np.asarray(values, dtype=float)
    mean = integrate(rule, v)
    var = integrate(rule, (v - mean) ** 2)
    if var < 0.0:
        if var >= -1e-12 * mean**2:
            var = 0.0
        else:
            raise ArithmeticError(f"variance estimate {var} is negative beyond roundoff")
    return mean, var


def gauss_rule(level: int) -> UnivariateRule:
    """Gauss abscissas are not provided; only the nested cosine rule is."""
    raise NotImplementedError("gauss abscissas are a stub; use clenshaw_curtis")
