"""
Feynman-Kac Series Service - the path expansion of P_T^V on the unit-clock chain
Each preimage path a_n...a_1 x contributes its kernel-weight product times f(end) times
the holding-time integral I_V^T(path), a divided difference of t -> e^{tT} at the rates V - 1
"""

from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple
import logging

import numpy as np
from scipy.linalg import expm
from scipy.stats import poisson

from core.config import get_settings
from core.exceptions import ArgumentError
from models.fields import KernelField, PotentialField, require_same_space
from services.semigroup import poisson_truncation

logger = logging.getLogger(__name__)


@dataclass
class SeriesValue:
    """Truncated series value at one word"""

    value: float
    tail_bound: float  # bound on the omitted terms n > n_max
    n_max: int
    terms: List[float] = field(default_factory=list)  # contribution of each path length


def merge_confluent(nodes: Sequence[float], tol: float) -> np.ndarray:
    """Replace clusters of nodes closer than tol by their mean (exactly confluent nodes)"""
    order = np.argsort(nodes, kind="stable")
    merged = np.asarray(nodes, dtype=float)[order].copy()
    start = 0
    for i in range(1, merged.size + 1):
        if i == merged.size or merged[i] - merged[start] > tol:
            merged[start:i] = merged[start:i].mean()
            start = i
    return merged


def exp_divided_difference(
    nodes: Sequence[float], T: float, confluence_tol: Optional[float] = None
) -> float:
    """
    Divided difference of t -> e^{tT} at the given nodes

    Equals the convolution at time T of the exponentials e^{r t}, r in nodes. The value
    is read from the corner of the exponential of the bidiagonal node matrix, which
    covers confluent nodes (the polynomial-times-exponential limit) without cancellation.
    For distinct nodes it equals the recursive merge
    [r_0..r_n] = ([r_1..r_n] - [r_0..r_{n-1}]) / (r_n - r_0) started from [r] = e^{rT}.
    """
    if T < 0:
        raise ArgumentError(f"time horizon must be nonnegative, got {T}")
    tol = get_settings().semigroup.confluence_tol if confluence_tol is None else confluence_tol
    merged = merge_confluent(nodes, tol)
    size = merged.size
    if size == 0:
        raise ArgumentError("divided difference needs at least one node")
    if size == 1:
        return float(np.exp(T * merged[0]))
    bidiagonal = np.diag(merged) + np.diag(np.ones(size - 1), 1)
    return float(expm(T * bidiagonal)[0, -1])


def path_integral(V: PotentialField, path: Sequence[int], T: float) -> float:
    """
    Holding-time integral I_V^T of a path x = w_0, w_1, ..., w_n

    Integrates exp(sum_i t_i V(w_i)) e^{-sum t_i} over holding times with the n-th
    jump before T and the (n+1)-th after it.
    """
    return exp_divided_difference(V.values[list(path)] - 1.0, T)


def enumerate_paths(
    kernel: KernelField, x: int, n: int, prune_ratio: Optional[float] = None
) -> List[Tuple[Tuple[int, ...], float]]:
    """
    Breadth-first enumeration of preimage paths x -> a_1 x -> ... of length n

    Paths whose weight product falls below prune_ratio times the current level maximum
    are dropped.

    Returns:
        List of (path, weight product) with path = (x, w_1, ..., w_n)
    """
    if n < 0:
        raise ArgumentError(f"path length must be nonnegative, got {n}")
    ratio = get_settings().semigroup.prune_ratio if prune_ratio is None else prune_ratio
    table = kernel.space.preimage_table
    level: deque = deque([((x,), 1.0)])
    for _ in range(n):
        grown = []
        for path, weight in level:
            tip = path[-1]
            for a in range(kernel.space.d):
                grown.append((path + (int(table[tip, a]),), weight * kernel.weights[tip, a]))
        cutoff = ratio * max(w for _, w in grown)
        level = deque(item for item in grown if item[1] >= cutoff)
    return list(level)


def series_tail_bound(V: PotentialField, f: PotentialField, T: float, n_max: int) -> float:
    """||f|| e^{T max V} P(Poisson(T) > n_max), a bound on the omitted terms"""
    return float(np.abs(f.values).max() * np.exp(T * V.max()) * poisson.sf(n_max, T))


def default_series_length(V: PotentialField, f: PotentialField, T: float) -> int:
    """Smallest n_max whose tail bound meets the configured series tolerance"""
    tol = get_settings().semigroup.series_tol
    return poisson_truncation(T, T * V.max(), np.abs(f.values).max(), tol)


def _dyson_terms(
    kernel: KernelField, V: PotentialField, f: PotentialField, T: float, n_max: int
) -> np.ndarray:
    """
    Per-length path sums for every start word, shape (n_max + 1, d^k)

    The exponential of the block-bidiagonal matrix with diagonal blocks diag(V - 1) and
    superdiagonal blocks W (the jump-weight matrix) holds, in its block (0, n), the sum
    over all length-n preimage paths of weight products times I_V^T(path).
    """
    n = kernel.space.size
    blocks = n_max + 1
    generator = np.zeros((blocks * n, blocks * n))
    holding = np.diag(V.values - 1.0)
    jumps = kernel.transition_matrix()
    for b in range(blocks):
        generator[b * n : (b + 1) * n, b * n : (b + 1) * n] = holding
        if b + 1 < blocks:
            generator[b * n : (b + 1) * n, (b + 1) * n : (b + 2) * n] = jumps
    top_row = expm(T * generator)[:n, :]
    return np.stack([top_row[:, b * n : (b + 1) * n] @ f.values for b in range(blocks)])


def _path_terms(
    kernel: KernelField, V: PotentialField, f: PotentialField, T: float, x: int, n_max: int
) -> List[float]:
    terms = []
    for n in range(n_max + 1):
        total = 0.0
        for path, weight in enumerate_paths(kernel, x, n):
            total += weight * f.values[path[-1]] * path_integral(V, path, T)
        terms.append(total)
    return terms


def feynman_kac_series(
    A_kernel: KernelField,
    V: PotentialField,
    f: PotentialField,
    T: float,
    x: int,
    n_max: Optional[int] = None,
    method: str = "dyson",
) -> SeriesValue:
    """
    Truncated path series for P_T^V f(x) on the unit-clock chain

    Args:
        A_kernel: normalized a-priori kernel
        V: perturbing potential
        f: observable
        T: time horizon
        x: start word index
        n_max: longest path length kept; defaults to the Poisson tail rule
        method: "dyson" aggregates every path length at once, "paths" enumerates the
            preimage paths one by one (only practical for short paths)

    Returns:
        SeriesValue with the truncated value and a bound on the omitted tail

    Raises:
        ArgumentError: n_max < 0, T < 0 or an unnormalized kernel
    """
    space = require_same_space(A_kernel, V, f)
    if not A_kernel.is_normalized:
        raise ArgumentError("the path series is written for a normalized kernel")
    if T < 0:
        raise ArgumentError(f"time horizon must be nonnegative, got {T}")
    if not 0 <= x < space.size:
        raise ArgumentError(f"word index {x} outside 0..{space.size - 1}")
    if n_max is None:
        n_max = default_series_length(V, f, T)
    if n_max < 0:
        raise ArgumentError(f"n_max must be nonnegative, got {n_max}")

    if method == "dyson":
        terms = [float(t) for t in _dyson_terms(A_kernel, V, f, T, n_max)[:, x]]
    elif method == "paths":
        terms = _path_terms(A_kernel, V, f, T, x, n_max)
    else:
        raise ArgumentError(f"unknown series method {method!r}")

    tail = series_tail_bound(V, f, T, n_max)
    logger.debug(f"Path series at word {x}: n_max={n_max}, tail bound {tail:.2e}")
    return SeriesValue(float(np.sum(terms)), tail, n_max, terms)
