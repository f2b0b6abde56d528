"""Gaussian-kernel maximum mean discrepancy between sets of prediction vectors.

Kernel: k(y, y') = exp(-||y - y'||^e / (2 sigma^2)) with e in {1, 2}.
Kernel sums use math.fsum so results do not depend on row order.
"""

import logging
import math
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist

from ..errors import AttackError
from ..schemas import MMDConfig

logger = logging.getLogger(__name__)


def _as_set(rows) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[0] == 0 or rows.size == 0:
        raise AttackError("MMD needs nonempty sets")
    return rows


def median_heuristic(*sets: np.ndarray) -> float:
    """Median pairwise distance over the pooled sets; 1.0 when that median is 0."""
    pooled = np.vstack([_as_set(s) for s in sets])
    if pooled.shape[0] < 2:
        return 1.0
    median = float(np.median(pdist(pooled)))
    return median if median > 0 else 1.0


def resolve_sigma(cfg: MMDConfig, *sets: np.ndarray) -> float:
    if isinstance(cfg.sigma, str):
        return median_heuristic(*sets)
    return float(cfg.sigma)


def kernel_matrix(a: np.ndarray, b: np.ndarray, sigma: float, exponent: int = 2) -> np.ndarray:
    if exponent == 2:
        powered = cdist(a, b, "sqeuclidean")
    else:
        powered = cdist(a, b, "euclidean")
    return np.exp(-powered / (2.0 * sigma * sigma))


def kernel_sum(a: np.ndarray, b: np.ndarray, sigma: float, exponent: int = 2) -> float:
    return math.fsum(kernel_matrix(a, b, sigma, exponent).ravel())


def mmd_from_sums(s_aa: float, s_bb: float, s_ab: float, n: int, m: int) -> float:
    squared = s_aa / (n * n) + s_bb / (m * m) - 2.0 * s_ab / (n * m)
    return math.sqrt(max(0.0, squared))


def mmd(a, b, cfg: MMDConfig, sigma: Optional[float] = None) -> float:
    """Kernel-trick MMD; sigma resolved from `cfg` over a and b unless given."""
    a, b = _as_set(a), _as_set(b)
    sigma = resolve_sigma(cfg, a, b) if sigma is None else sigma
    e = cfg.kernel_exponent
    return mmd_from_sums(
        kernel_sum(a, a, sigma, e),
        kernel_sum(b, b, sigma, e),
        kernel_sum(a, b, sigma, e),
        len(a),
        len(b),
    )


def mmd_bruteforce(a, b, sigma: float, exponent: int = 2) -> float:
    """Double-sum reference implementation with the kernel written out per pair row."""
    a, b = _as_set(a), _as_set(b)

    def mean_kernel(x: np.ndarray, y: np.ndarray) -> float:
        total = []
        for row in x:
            distance = np.sqrt(np.sum((y - row) ** 2, axis=1))
            total.extend(np.exp(-(distance ** exponent) / (2.0 * sigma ** 2)))
        return math.fsum(total) / (len(x) * len(y))

    squared = mean_kernel(a, a) + mean_kernel(b, b) - 2.0 * mean_kernel(a, b)
    return math.sqrt(max(0.0, squared))


def oracle_check(pairs: int = 50, seed: int = 0, max_size: int = 200, cfg: Optional[MMDConfig] = None) -> dict:
    """Compare kernel-trick MMD with the double-sum reference on random set pairs.

    Returns the worst absolute disagreement, the largest mmd(a, a) and the largest asymmetry.
    """
    cfg = cfg or MMDConfig()
    rng = np.random.default_rng(seed)
    worst = {"max_oracle_error": 0.0, "max_self_distance": 0.0, "max_asymmetry": 0.0}
    for _ in range(pairs):
        dim = int(rng.integers(2, 11))
        a = rng.normal(size=(int(rng.integers(1, max_size + 1)), dim))
        b = rng.normal(loc=rng.uniform(0, 1), size=(int(rng.integers(1, max_size + 1)), dim))
        sigma = resolve_sigma(cfg, a, b)
        fast = mmd(a, b, cfg, sigma)
        slow = mmd_bruteforce(a, b, sigma, cfg.kernel_exponent)
        worst["max_oracle_error"] = max(worst["max_oracle_error"], abs(fast - slow))
        worst["max_self_distance"] = max(worst["max_self_distance"], mmd(a, a, cfg, sigma))
        worst["max_asymmetry"] = max(worst["max_asymmetry"], abs(fast - mmd(b, a, cfg, sigma)))
    logger.debug("mmd oracle check over %d pairs: %s", pairs, worst)
    return worst


class MMDReference:
    """Cached kernel sums of a member set A against a fixed reference T.

    mmd(A + {y}, T) for a new target y then needs only k(y, A) and k(y, T).
    """

    def __init__(self, members: np.ndarray, reference: np.ndarray, sigma: float, exponent: int = 2):
        self.members = _as_set(members)
        self.reference = _as_set(reference)
        self.sigma = sigma
        self.exponent = exponent
        self.s_aa = kernel_sum(self.members, self.members, sigma, exponent)
        self.s_tt = kernel_sum(self.reference, self.reference, sigma, exponent)
        self.s_at = kernel_sum(self.members, self.reference, sigma, exponent)

    def base(self) -> float:
        return mmd_from_sums(self.s_aa, self.s_tt, self.s_at, len(self.members), len(self.reference))

    def with_target(self, y: np.ndarray) -> float:
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        k_ya = kernel_sum(y, self.members, self.sigma, self.exponent)
        k_yt = kernel_sum(y, self.reference, self.sigma, self.exponent)
        # k(y, y) = 1 for both exponents.
        return mmd_from_sums(
            self.s_aa + 2.0 * k_ya + 1.0,
            self.s_tt,
            self.s_at + k_yt,
            len(self.members) + 1,
            len(self.reference),
        )


def pairwise_block_sums(sets: Sequence[np.ndarray], sigma: float, exponent: int = 2) -> np.ndarray:
    """Symmetric matrix of kernel sums between every pair of sets."""
    count = len(sets)
    blocks = np.zeros((count, count))
    for i in range(count):
        for j in range(i, count):
            blocks[i, j] = blocks[j, i] = kernel_sum(sets[i], sets[j], sigma, exponent)
    return blocks
