"""
Feature sweeps and decision masks.

Evaluates the boosted model on every single feature and every feature pair
under one evaluation protocol, screens the significant single features, and
samples a trained model on a regular grid over one or two feature axes.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .classifiers import Classifier
from .core.exceptions import InputError
from .data_models import CATALOG, EvaluationProtocol, FeatureTable, ModelSpec
from .metrics import EvalReport, evaluate
from .threshold_search import ThresholdSearchResult

logger = logging.getLogger(__name__)

MASK_PADDING = 0.05


@dataclass(frozen=True)
class SweepEntry:
    """Evaluation of the model restricted to one or two features."""
    features: Tuple[int, ...]
    report: EvalReport

    def __post_init__(self):
        features = tuple(sorted(int(f) for f in self.features))
        if len(features) not in (1, 2) or len(set(features)) != len(features):
            raise InputError(f"Sweep entries hold one or two distinct features, got {self.features}")
        object.__setattr__(self, 'features', features)

    @property
    def f1_squared(self) -> float:
        return self.report.f1_squared

    def to_row(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {}
        for pos, feature in enumerate(self.features):
            suffix = "" if len(self.features) == 1 else ("_a", "_b")[pos]
            row[f"feature_no{suffix}"] = feature
            row[f"name{suffix}"] = CATALOG.name(feature)
        row.update(self.report.metrics())
        return row


def _sort_entries(entries: List[SweepEntry]) -> List[SweepEntry]:
    return sorted(entries, key=lambda e: (-e.f1_squared, e.features))


def competition_ranks(scores: Sequence[float]) -> List[int]:
    """Rank = 1 + number of scores strictly greater (equal scores share a rank)."""
    values = np.asarray(scores, dtype=np.float64)
    return [int(np.sum(values > v)) + 1 for v in values]


def _evaluate_features(table: FeatureTable, features: Tuple[int, ...], spec: ModelSpec,
                       protocol: EvaluationProtocol) -> SweepEntry:
    report = evaluate(table.select_features(features), spec, protocol)
    logger.debug("%s: F1^2=%.4f", "/".join(CATALOG.name(f) for f in features), report.f1_squared)
    return SweepEntry(features=features, report=report)


def _run(table: FeatureTable, combos: List[Tuple[int, ...]], spec: ModelSpec,
         protocol: EvaluationProtocol, n_jobs: int) -> List[SweepEntry]:
    table.require_finalized()
    return Parallel(n_jobs=n_jobs)(
        delayed(_evaluate_features)(table, combo, spec, protocol) for combo in combos)


def sweep_single(table: FeatureTable, protocol: EvaluationProtocol = EvaluationProtocol(),
                 spec: ModelSpec = ModelSpec(), n_jobs: int = 1) -> List[SweepEntry]:
    """
    Evaluate the model on each feature alone.

    Returns:
        Entries sorted by F1-squared descending, then feature number
    """
    combos = [(f,) for f in sorted(table.feature_nos)]
    entries = _sort_entries(_run(table, combos, spec, protocol, n_jobs))
    logger.info("Single-feature sweep over %d features", len(entries))
    return entries


def significant_features(entries: Sequence[SweepEntry], cutoff: float = 0.5) -> List[SweepEntry]:
    """Entries with F1-squared >= cutoff, order preserved."""
    return [e for e in entries if e.f1_squared >= cutoff]


def sweep_pairs(table: FeatureTable, protocol: EvaluationProtocol = EvaluationProtocol(),
                top_k: Optional[int] = 40, spec: ModelSpec = ModelSpec(),
                n_jobs: int = 1) -> List[SweepEntry]:
    """
    Evaluate the model on every pair of features.

    Args:
        table: Finalized table with at least two features
        protocol: Evaluation protocol shared with the single sweep
        top_k: Entries to keep (None keeps all)
        spec: Model to evaluate
        n_jobs: Pair jobs run concurrently

    Returns:
        Best ``top_k`` entries by F1-squared, ties by feature numbers
    """
    if table.n_features < 2:
        raise InputError("Pair sweep needs at least two features")
    combos = list(itertools.combinations(sorted(table.feature_nos), 2))
    entries = _sort_entries(_run(table, combos, spec, protocol, n_jobs))
    logger.info("Pair sweep over %d pairs", len(entries))
    return entries if top_k is None else entries[:top_k]


@dataclass(frozen=True)
class MaskAxis:
    feature_no: int
    min: float
    max: float
    n_points: int

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.n_points)

    def to_dict(self) -> Dict[str, Any]:
        return {'feature_no': self.feature_no, 'name': CATALOG.name(self.feature_no),
                'min': self.min, 'max': self.max, 'n_points': self.n_points}


@dataclass(frozen=True, eq=False)
class MaskGrid:
    """
    Model predictions on a regular grid.

    For two features ``labels[iy, ix]`` is the class at
    (x = axes[0].points[ix], y = axes[1].points[iy]).
    """
    features: Tuple[int, ...]
    axes: Tuple[MaskAxis, ...]
    labels: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        """Long-format grid: one row per grid point."""
        if len(self.axes) == 1:
            axis = self.axes[0]
            return pd.DataFrame({CATALOG.name(axis.feature_no): axis.points, 'label': self.labels})
        xs, ys = self.axes[0].points, self.axes[1].points
        gx, gy = np.meshgrid(xs, ys)
        return pd.DataFrame({
            CATALOG.name(self.axes[0].feature_no): gx.ravel(),
            CATALOG.name(self.axes[1].feature_no): gy.ravel(),
            'label': self.labels.ravel(),
        })

    def to_dict(self) -> Dict[str, Any]:
        return {'features': list(self.features), 'axes': [a.to_dict() for a in self.axes],
                'shape': list(self.labels.shape)}


def _axis(feature_no: int, column: np.ndarray, n_points: int) -> MaskAxis:
    lo, hi = float(column.min()), float(column.max())
    span = hi - lo
    pad = MASK_PADDING * span if span > 0 else max(abs(lo) * MASK_PADDING, 0.5)
    return MaskAxis(feature_no=feature_no, min=lo - pad, max=hi + pad, n_points=n_points)


def make_mask(model: Classifier, table: FeatureTable, features: Sequence[int],
              n_points: int = 200) -> MaskGrid:
    """
    Classify every point of a grid over one or two feature axes.

    Axes span the data range padded by 5% per side. The first feature is the
    x axis.

    Raises:
        InputError: If the model was not trained on exactly these features
    """
    features = tuple(int(f) for f in features)
    if len(features) not in (1, 2) or len(set(features)) != len(features):
        raise InputError("Masks take one or two distinct features")
    if set(model.feature_nos) != set(features) or len(model.feature_nos) != len(features):
        raise InputError(f"Model features {model.feature_nos} do not match mask features {features}")
    if n_points < 2:
        raise InputError("Masks need at least 2 points per axis")

    axes = tuple(_axis(f, table.column(f), n_points) for f in features)
    if len(axes) == 1:
        labels = model.predict(axes[0].points.reshape(-1, 1))
    else:
        gx, gy = np.meshgrid(axes[0].points, axes[1].points)
        coords = {features[0]: gx.ravel(), features[1]: gy.ravel()}
        points = np.column_stack([coords[f] for f in model.feature_nos])
        labels = model.predict(points).reshape(gx.shape)
    return MaskGrid(features=features, axes=axes, labels=np.asarray(labels, dtype=np.int64))


def compare_balancing(table: FeatureTable, protocol: EvaluationProtocol = EvaluationProtocol(),
                      spec: ModelSpec = ModelSpec(), n_jobs: int = 1) -> pd.DataFrame:
    """Per-feature class F1 scores without and with SMOTE balancing."""
    original = protocol.model_copy(update={'balance': False})
    balanced = protocol.model_copy(update={'balance': True})
    combos = [(f,) for f in sorted(table.feature_nos)]
    plain = _run(table, combos, spec, original, n_jobs)
    smoted = _run(table, combos, spec, balanced, n_jobs)
    rows = []
    for a, b in zip(plain, smoted):
        feature = a.features[0]
        rows.append({
            'feature_no': feature,
            'name': CATALOG.name(feature),
            'f1_surv_original': a.report.f1_surv,
            'f1_nonsurv_original': a.report.f1_nonsurv,
            'f1_surv_balanced': b.report.f1_surv,
            'f1_nonsurv_balanced': b.report.f1_nonsurv,
        })
    return pd.DataFrame(rows)


def summarize_significant(entries: Sequence[SweepEntry],
                          one_threshold: Sequence[ThresholdSearchResult],
                          two_threshold: Sequence[ThresholdSearchResult],
                          cutoff: float = 0.5) -> pd.DataFrame:
    """
    Significant single features with their F1-squared under the boosted
    model and both threshold approaches.
    """
    one = {r.rule.feature: r.report.f1_squared for r in one_threshold}
    two = {r.rule.feature: r.report.f1_squared for r in two_threshold}
    selected = significant_features([e for e in entries if len(e.features) == 1], cutoff)
    ranks = competition_ranks([e.f1_squared for e in selected])
    rows = []
    for rank, entry in zip(ranks, selected):
        feature = entry.features[0]
        rows.append({
            'rank': rank,
            'feature_no': feature,
            'name': CATALOG.name(feature),
            'f1_squared_hgb': entry.f1_squared,
            'f1_squared_one_threshold': one.get(feature, np.nan),
            'f1_squared_two_threshold': two.get(feature, np.nan),
        })
    return pd.DataFrame(rows, columns=['rank', 'feature_no', 'name', 'f1_squared_hgb',
                                       'f1_squared_one_threshold', 'f1_squared_two_threshold'])
