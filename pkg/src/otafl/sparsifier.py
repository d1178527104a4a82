"""Index-selection strategies for partial gradient transmission.

Five strategies decide which k of the d coordinates get transmitted each
round.  The two-stage scheme shortlists the r largest entries of the server's
global gradient vector by magnitude, then keeps the k stalest of those by age.
The baselines are magnitude-only (top-k), uniform random, age-only, and
random-within-shortlist selection.

All selection is deterministic given the inputs and the RNG handle.
Tie-breaking (which the underlying update rules leave open) is fixed as:
magnitude ties go to the lower index; age ties go to the larger magnitude,
then the lower index.  With the all-zero cold-start state this makes the
first shortlist {0..r-1} and the first mask {0..k-1}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .state import SparseMask, apply_mask, l2_norm_sq, scatter

AGETOPK = "agetopk"
TOPK = "topk"
RANDOMK = "randomk"
AGEK = "agek"
RTOPK = "rtopk"
STRATEGY_KINDS = (AGETOPK, TOPK, RANDOMK, AGEK, RTOPK)


@dataclass(frozen=True)
class Strategy:
    """A selection strategy with its candidate count r and transmit count k."""

    kind: str
    r: int
    k: int

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ConfigurationError(
                f"unknown strategy {self.kind!r}, expected one of {STRATEGY_KINDS}"
            )
        if not 1 <= self.k <= self.r:
            raise ConfigurationError(
                f"strategy needs 1 <= k <= r, got k={self.k}, r={self.r}"
            )


def make_strategy(kind: str, d: int, k: int, r: int | None = None) -> Strategy:
    """Build a validated strategy for model dimension d.

    Normalization: top-k always uses r = k, age-k always uses r = d, and
    random-k ignores r (stored as k).  The two-stage and
    random-within-shortlist strategies require an explicit r.
    """
    kind = kind.lower()
    if kind == TOPK or kind == RANDOMK:
        r = k
    elif kind == AGEK:
        r = d
    elif r is None:
        raise ConfigurationError(f"strategy {kind!r} requires a candidate count r")
    if not 1 <= k <= r <= d:
        raise ConfigurationError(f"need 1 <= k <= r <= d, got k={k}, r={r}, d={d}")
    return Strategy(kind, int(r), int(k))


def select_top_r(g_global: np.ndarray, r: int) -> np.ndarray:
    """Indices of the r largest-magnitude entries, ties to the lower index.

    Returned sorted ascending (the shortlist is a set).
    """
    g_global = np.asarray(g_global, dtype=np.float64)
    d = g_global.size
    if not 1 <= r <= d:
        raise ConfigurationError(f"candidate count r={r} out of range [1, {d}]")
    # lexsort: last key is primary => magnitude descending, then index ascending
    order = np.lexsort((np.arange(d), -np.abs(g_global)))
    return np.sort(order[:r])


def select_top_k_by_age(
    s_r: np.ndarray, ages: np.ndarray, g_global: np.ndarray, k: int
) -> SparseMask:
    """Keep the k stalest shortlist entries.

    Age ties are broken by larger global-gradient magnitude, then lower
    index.  g_global is needed only for that secondary tie-break.
    """
    cand = np.asarray(s_r, dtype=np.int64)
    if k > cand.size:
        raise ConfigurationError(f"k={k} exceeds shortlist size {cand.size}")
    ages = np.asarray(ages)
    g_global = np.asarray(g_global, dtype=np.float64)
    order = np.lexsort((cand, -np.abs(g_global[cand]), -ages[cand]))
    return SparseMask(cand[order[:k]], d=g_global.size)


def select(
    strategy: Strategy,
    g_global: np.ndarray,
    ages: np.ndarray,
    rng: np.random.Generator,
) -> SparseMask:
    """Select the transmit mask for the next round."""
    g_global = np.asarray(g_global, dtype=np.float64)
    d = g_global.size
    ages = np.asarray(ages)
    if ages.size != d:
        raise ConfigurationError(f"age vector has length {ages.size}, expected {d}")
    if strategy.r > d:
        raise ConfigurationError(f"strategy r={strategy.r} exceeds dimension {d}")
    k = strategy.k
    if strategy.kind == TOPK:
        return SparseMask(select_top_r(g_global, k), d)
    if strategy.kind == AGETOPK:
        return select_top_k_by_age(select_top_r(g_global, strategy.r), ages, g_global, k)
    if strategy.kind == AGEK:
        return select_top_k_by_age(np.arange(d), ages, g_global, k)
    if strategy.kind == RANDOMK:
        return SparseMask(rng.choice(d, size=k, replace=False), d)
    # random-within-shortlist
    shortlist = select_top_r(g_global, strategy.r)
    return SparseMask(rng.choice(shortlist, size=k, replace=False), d)


@dataclass(frozen=True)
class CompressorQuality:
    """Retention factor gamma of the two-stage selector under a bounded
    head-to-shortlist-tail magnitude ratio beta."""

    gamma: float
    beta: float


def gamma_of(d: int, r: int, k: int, beta: float) -> CompressorQuality:
    """Quality factor gamma = k / (k + (r - k) * beta + (d - r))."""
    if not 1 <= k <= r <= d:
        raise ConfigurationError(f"need 1 <= k <= r <= d, got k={k}, r={r}, d={d}")
    if beta < 1.0:
        raise ConfigurationError(f"beta must be >= 1, got {beta}")
    gamma = k / (k + (r - k) * beta + (d - r))
    return CompressorQuality(gamma=gamma, beta=float(beta))


def gen_bounded_ratio_vector(
    d: int, r: int, beta: float, rng: np.random.Generator
) -> np.ndarray:
    """Random vector whose largest-to-(r-th-largest) magnitude ratio is <= beta.

    The top-r magnitudes are drawn inside [m, beta*m] for a random m > 0, the
    tail inside [0, m]; signs and positions are randomized.  By construction
    every tail entry is at most the r-th largest magnitude.
    """
    if beta < 1.0:
        raise ConfigurationError(f"beta must be >= 1, got {beta}")
    if not 1 <= r <= d:
        raise ConfigurationError(f"need 1 <= r <= d, got r={r}, d={d}")
    m = rng.uniform(0.5, 2.0)
    head = rng.uniform(m, beta * m, size=r)
    tail = rng.uniform(0.0, m, size=d - r)
    mags = np.concatenate([head, tail])
    signs = rng.choice([-1.0, 1.0], size=d)
    return (mags * signs)[rng.permutation(d)]


def compression_error(mask: SparseMask, g: np.ndarray) -> float:
    """Relative squared error of keeping only the masked entries of g.

    Returns ||g - expand(compress(g))||^2 / ||g||^2, and 0 for the zero
    vector.  1 minus this value is the retained energy fraction.
    """
    total = l2_norm_sq(g)
    if total == 0.0:
        return 0.0
    kept = scatter(mask, apply_mask(mask, g))
    return l2_norm_sq(np.asarray(g, dtype=np.float64) - kept) / total
