"""
Synthetic minority oversampling (SMOTE).

Balances a table by interpolating between minority rows and their nearest
minority neighbours. Neighbour distances are Euclidean on minority-class
z-scores; ties go to the lower row index.
"""

import logging

import numpy as np
from scipy.spatial.distance import cdist

from .core.exceptions import InputError
from .core.seeding import make_rng
from .data_models import FeatureTable, SmoteConfig

logger = logging.getLogger(__name__)


def target_minority_count(majority: int, ratio: float) -> int:
    """Minority size after balancing: ratio x majority rounded to nearest, ties up."""
    return int(np.floor(ratio * majority + 0.5))


def nearest_neighbors(points: np.ndarray, k: int) -> np.ndarray:
    """
    Indices of the k nearest other rows of every row.

    Columns are z-scored first (zero-variance columns are left unscaled).

    Returns:
        (n, k) index matrix, nearest first
    """
    mean = points.mean(axis=0)
    std = points.std(axis=0)
    std[std == 0] = 1.0
    scaled = (points - mean) / std
    distances = cdist(scaled, scaled, metric="euclidean")
    np.fill_diagonal(distances, np.inf)
    return np.argsort(distances, axis=1, kind="stable")[:, :k]


def smote_balance(table: FeatureTable, config: SmoteConfig = SmoteConfig()) -> FeatureTable:
    """
    Append synthetic minority rows until minority = round(ratio x majority).

    Each synthetic row is x + d * (x_nn - x) with x a uniformly drawn minority
    row, x_nn one of its k nearest minority neighbours and d uniform in [0, 1).
    Original rows come first and are untouched; synthetic rows carry
    ``row_id = -1`` and the row ids of (x, x_nn) as parents.

    Args:
        table: Finalized table with both classes
        config: Neighbour count, target ratio and seed

    Returns:
        Balanced table (the input itself when nothing needs synthesizing)

    Raises:
        InputError: If a class is missing or the minority has <= k rows
    """
    table.require_finalized()
    table.require_both_classes()
    n0, n1 = table.class_counts()
    minority_label = 1 if n1 < n0 else 0
    minority, majority = min(n0, n1), max(n0, n1)

    n_new = target_minority_count(majority, config.target_ratio) - minority
    if n_new <= 0:
        logger.debug("Minority already at target ratio %.3g; no synthesis", config.target_ratio)
        return table

    k = config.k_neighbors
    if minority <= k:
        raise InputError(f"SMOTE needs more than k={k} minority rows, got {minority}")

    idx = np.flatnonzero(table.labels == minority_label)
    points = table.values[idx]
    neighbors = nearest_neighbors(points, k)

    rng = make_rng(config.seed)
    base = rng.integers(0, minority, size=n_new)
    partner = neighbors[base, rng.integers(0, k, size=n_new)]
    delta = rng.random(n_new)[:, None]

    x, x_nn = points[base], points[partner]
    synthetic = x + delta * (x_nn - x)
    # keep rounding inside the segment's bounding box
    synthetic = np.clip(synthetic, np.minimum(x, x_nn), np.maximum(x, x_nn))

    row_ids = table.row_ids[idx]
    logger.info("SMOTE added %d synthetic rows to class %d (k=%d, ratio=%.3g)",
                n_new, minority_label, k, config.target_ratio)
    return FeatureTable(
        values=np.vstack([table.values, synthetic]),
        labels=np.concatenate([table.labels, np.full(n_new, minority_label, dtype=np.int64)]),
        missing_mask=np.vstack([table.missing_mask, np.zeros(synthetic.shape, dtype=bool)]),
        feature_nos=table.feature_nos,
        row_ids=np.concatenate([table.row_ids, np.full(n_new, -1, dtype=np.int64)]),
        parents=np.vstack([table.parents, np.column_stack([row_ids[base], row_ids[partner]])]),
    )
