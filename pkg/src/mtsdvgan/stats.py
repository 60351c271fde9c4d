"""Friedman ranks and the Nemenyi critical difference.

Methods are ranked per dataset (rank 1 = best, ties averaged), averaged
across datasets, and compared against CD = q_alpha * sqrt(k (k+1) / (6 N))
where q_alpha comes from the studentized-range-based Nemenyi table.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

# Nemenyi critical values q_alpha for k = 2..20 methods
# (two-tailed studentized range statistic divided by sqrt(2))
Q_ALPHA = {
    0.05: (1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164,
           3.219, 3.268, 3.313, 3.354, 3.391, 3.426, 3.458, 3.489, 3.517,
           3.544),
    0.10: (1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920,
           2.978, 3.030, 3.077, 3.120, 3.159, 3.196, 3.230, 3.261, 3.291,
           3.319),
}


@dataclass
class RankTable:
    methods: list
    datasets: list
    ranks: np.ndarray          # (datasets, methods), 1 = best
    average: np.ndarray        # (methods,)
    cd: float
    alpha: float
    k: int
    n_datasets: int


def nemenyi_cd(k: int, n_datasets: int, alpha: float = 0.05) -> float:
    """CD = q_alpha * sqrt(k (k+1) / (6 N))."""
    if k < 2:
        raise ValueError("need at least 2 methods")
    if n_datasets < 1:
        raise ValueError("need at least 1 dataset")
    table = Q_ALPHA.get(alpha)
    if table is None:
        raise ValueError(f"alpha must be one of {sorted(Q_ALPHA)}, got {alpha}")
    if k - 2 >= len(table):
        raise ValueError(f"q table covers k up to {len(table) + 1}, got {k}")
    q = table[k - 2]
    return float(q * np.sqrt(k * (k + 1) / (6.0 * n_datasets)))


def friedman_ranks(scores, methods: Optional[Sequence[str]] = None,
                   datasets: Optional[Sequence[str]] = None,
                   higher_is_better: bool = True, alpha: float = 0.05,
                   cd_k: Optional[int] = None) -> RankTable:
    """Rank methods per dataset and average across datasets.

    scores: (datasets x methods) matrix.  cd_k overrides the method count
    used in the CD formula (kept explicit because published comparisons
    sometimes compute CD over a subset of the ranked methods).
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] < 1 or scores.shape[1] < 2:
        raise ValueError("scores must be (datasets x methods) with >= 2 methods")
    if not np.isfinite(scores).all():
        raise ValueError("scores contain non-finite entries")
    n_data, k = scores.shape
    if methods is None:
        methods = [f"method_{i}" for i in range(k)]
    if datasets is None:
        datasets = [f"dataset_{i}" for i in range(n_data)]
    keyed = -scores if higher_is_better else scores
    ranks = np.vstack([rankdata(row, method="average") for row in keyed])
    average = ranks.mean(axis=0)
    cd = nemenyi_cd(cd_k if cd_k is not None else k, n_data, alpha)
    return RankTable(methods=list(methods), datasets=list(datasets),
                     ranks=ranks, average=average, cd=cd, alpha=alpha,
                     k=cd_k if cd_k is not None else k, n_datasets=n_data)
