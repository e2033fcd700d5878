"""
Single-feature threshold rules and their exhaustive search.

A one-threshold rule splits a feature at v_th; a two-threshold rule separates
the band [v_th1, v_th2] from the rest. Type 1 maps the upper side (or the
band) to survived, Type 2 swaps the classes. Bounds are inclusive.

Candidates are the midpoints between consecutive distinct values plus one
value below the minimum and one above the maximum, so the search is exact
over every rule the data can distinguish. Rules are scored by balanced
accuracy (A_th) using prefix class counts over the sorted distinct values.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from numba import njit

from .core.exceptions import InputError
from .data_models import CATALOG, ClassLabel, FeatureTable, SmoteConfig
from .metrics import ConfusionCounts, EvalReport, compute_metrics
from .resampling import smote_balance

logger = logging.getLogger(__name__)


class RuleKind(str, Enum):
    ONE = "one"
    TWO = "two"


@dataclass(frozen=True)
class ThresholdRule:
    """
    Threshold rule on one feature.

    One-threshold rules use ``v_th1`` only (``v_th2`` is None).
    """
    kind: RuleKind
    rule_type: int
    v_th1: float
    v_th2: Optional[float] = None
    feature: Optional[int] = None

    def __post_init__(self):
        if self.rule_type not in (1, 2):
            raise InputError(f"Rule type must be 1 or 2, got {self.rule_type}")
        if self.kind == RuleKind.TWO:
            if self.v_th2 is None or not self.v_th1 <= self.v_th2:
                raise InputError("Two-threshold rule needs v_th1 <= v_th2")
        elif self.v_th2 is not None:
            raise InputError("One-threshold rule takes a single threshold")

    @property
    def v_th(self) -> float:
        return self.v_th1

    def predict(self, values: Sequence[float]) -> np.ndarray:
        """Vectorized :func:`classify`."""
        x = np.asarray(values, dtype=np.float64)
        if self.kind == RuleKind.ONE:
            survived = x >= self.v_th1
        else:
            survived = (x >= self.v_th1) & (x <= self.v_th2)
        if self.rule_type == 2:
            survived = ~survived
        return np.where(survived, ClassLabel.SURVIVED, ClassLabel.NON_SURVIVED).astype(np.int64)

    def to_dict(self) -> Dict[str, Any]:
        return {'feature': self.feature, 'kind': self.kind.value, 'rule_type': self.rule_type,
                'v_th1': self.v_th1, 'v_th2': self.v_th2}


def classify(rule: ThresholdRule, x: float) -> ClassLabel:
    """Class of a single value under a rule."""
    if not np.isfinite(x):
        raise InputError("Cannot classify a non-finite value")
    return ClassLabel(int(rule.predict([x])[0]))


@dataclass(frozen=True)
class ThresholdSearchResult:
    rule: ThresholdRule
    a_th: float
    report: EvalReport

    def to_row(self) -> Dict[str, Any]:
        feature = self.rule.feature
        row = {
            'feature_no': feature,
            'name': CATALOG.name(feature) if feature is not None else None,
            'type': self.rule.rule_type,
            'v_th1': self.rule.v_th1,
            'v_th2': self.rule.v_th2,
            'a_th': self.a_th,
        }
        for name in ('precision_surv', 'precision_nonsurv', 'recall_surv', 'recall_nonsurv',
                     'f1_surv', 'f1_nonsurv', 'f1_squared'):
            row[name] = getattr(self.report, name)
        return row


def _prepare(values: Sequence[float], labels: Sequence[int]):
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if x.shape != y.shape:
        raise InputError("Values and labels differ in length")
    if not np.isfinite(x).all():
        raise InputError("Threshold search needs finite values")
    if not np.isin(y, (0, 1)).all():
        raise InputError("Labels must be 0 or 1")
    n1 = int(y.sum())
    n0 = y.size - n1
    if n0 == 0 or n1 == 0:
        raise InputError("Threshold search needs both classes")

    distinct, inverse = np.unique(x, return_inverse=True)
    ones = np.bincount(inverse, weights=y, minlength=distinct.size).astype(np.int64)
    zeros = np.bincount(inverse, minlength=distinct.size).astype(np.int64) - ones
    # prefix[i] = rows with value below candidate i
    p0 = np.concatenate([[0], np.cumsum(zeros)])
    p1 = np.concatenate([[0], np.cumsum(ones)])
    return x, distinct, p0, p1, n0, n1


def candidate_thresholds(distinct: np.ndarray) -> np.ndarray:
    """Below-min value, midpoints of consecutive distinct values, above-max value."""
    if distinct.size == 1:
        pad = 0.5
        return np.array([distinct[0] - pad, distinct[0] + pad])
    mids = 0.5 * (distinct[:-1] + distinct[1:])
    below = distinct[0] - 0.5 * (distinct[1] - distinct[0])
    above = distinct[-1] + 0.5 * (distinct[-1] - distinct[-2])
    return np.concatenate([[below], mids, [above]])


def snap_lower(value: float, data: np.ndarray) -> float:
    """Smallest observed value >= ``value`` (unchanged when none)."""
    idx = np.searchsorted(data, value, side="left")
    return float(data[idx]) if idx < data.size else float(value)


def snap_upper(value: float, data: np.ndarray) -> float:
    """Largest observed value <= ``value`` (unchanged when none)."""
    idx = np.searchsorted(data, value, side="right") - 1
    return float(data[idx]) if idx >= 0 else float(value)


def _counts_one(i: int, rule_type: int, p0, p1, n0: int, n1: int) -> ConfusionCounts:
    below0, below1 = int(p0[i]), int(p1[i])
    if rule_type == 1:
        return ConfusionCounts(tp=below1, fp=below0, tn=n0 - below0, fn=n1 - below1)
    return ConfusionCounts(tp=n1 - below1, fp=n0 - below0, tn=below0, fn=below1)


def _counts_two(i: int, j: int, rule_type: int, p0, p1, n0: int, n1: int) -> ConfusionCounts:
    band0, band1 = int(p0[j] - p0[i]), int(p1[j] - p1[i])
    if rule_type == 1:
        return ConfusionCounts(tp=n1 - band1, fp=n0 - band0, tn=band0, fn=band1)
    return ConfusionCounts(tp=band1, fp=band0, tn=n0 - band0, fn=n1 - band1)


def search_one(values: Sequence[float], labels: Sequence[int], snap_to_data: bool = False,
               feature: Optional[int] = None) -> ThresholdSearchResult:
    """
    Best one-threshold rule by A_th.

    Ties go to the smaller threshold, then to Type 1.

    Raises:
        InputError: If a class is missing or values are non-finite
    """
    _, distinct, p0, p1, n0, n1 = _prepare(values, labels)
    candidates = candidate_thresholds(distinct)

    # Type 1 puts the rows below the candidate in class 1
    a_type1 = ((n0 - p0) / n0 + p1 / n1) / 2.0
    a_type2 = (p0 / n0 + (n1 - p1) / n1) / 2.0
    best = int(np.argmax(np.column_stack([a_type1, a_type2]).ravel()))
    i, rule_type = best // 2, best % 2 + 1

    v_th = float(candidates[i])
    if snap_to_data:
        v_th = snap_lower(v_th, distinct)
    report = compute_metrics(_counts_one(i, rule_type, p0, p1, n0, n1))
    rule = ThresholdRule(kind=RuleKind.ONE, rule_type=rule_type, v_th1=v_th, feature=feature)
    return ThresholdSearchResult(rule=rule, a_th=report.a_th, report=report)


@njit(cache=True)
def best_band(p0, p1, n0, n1):
    """
    Exhaustive scan of bands [c_i, c_j], i <= j, for both rule types.

    Pairs are visited with i ascending, then j ascending, Type 1 before
    Type 2; only a strictly larger A_th replaces the incumbent.

    Returns:
        (a_th, i, j, rule_type)
    """
    m = p0.shape[0]
    best_a = -1.0
    best_i = 0
    best_j = 0
    best_t = 1
    for i in range(m):
        for j in range(i, m):
            band0 = p0[j] - p0[i]
            band1 = p1[j] - p1[i]
            a1 = (band0 / n0 + (n1 - band1) / n1) / 2.0
            if a1 > best_a:
                best_a = a1
                best_i = i
                best_j = j
                best_t = 1
            a2 = ((n0 - band0) / n0 + band1 / n1) / 2.0
            if a2 > best_a:
                best_a = a2
                best_i = i
                best_j = j
                best_t = 2
    return best_a, best_i, best_j, best_t


def search_two(values: Sequence[float], labels: Sequence[int], snap_to_data: bool = False,
               feature: Optional[int] = None) -> ThresholdSearchResult:
    """
    Best two-threshold (band) rule by A_th.

    Ties go to the smaller v_th1, then the smaller v_th2, then Type 1.

    Raises:
        InputError: If a class is missing or values are non-finite
    """
    _, distinct, p0, p1, n0, n1 = _prepare(values, labels)
    candidates = candidate_thresholds(distinct)
    _, i, j, rule_type = best_band(p0, p1, n0, n1)

    v1, v2 = float(candidates[i]), float(candidates[j])
    if snap_to_data:
        v1, v2 = snap_lower(v1, distinct), snap_upper(v2, distinct)
        if v1 > v2:
            # empty band: keep the unsnapped pair
            v1, v2 = float(candidates[i]), float(candidates[j])
    report = compute_metrics(_counts_two(i, j, rule_type, p0, p1, n0, n1))
    rule = ThresholdRule(kind=RuleKind.TWO, rule_type=rule_type, v_th1=v1, v_th2=v2, feature=feature)
    return ThresholdSearchResult(rule=rule, a_th=report.a_th, report=report)


SEARCHES = {
    RuleKind.ONE: search_one,
    RuleKind.TWO: search_two,
}


def search_all(table: FeatureTable, kind: RuleKind = RuleKind.TWO,
               balance: Optional[SmoteConfig] = SmoteConfig(), snap_to_data: bool = False,
               n_jobs: int = 1) -> List[ThresholdSearchResult]:
    """
    Run the threshold search on every feature.

    The table is balanced with SMOTE first unless ``balance`` is None. No
    cross-validation is involved: rules are fitted and scored on the same
    rows.

    Returns:
        One result per feature, in catalog order
    """
    table.require_finalized()
    kind = RuleKind(kind)
    if balance is not None:
        table = smote_balance(table, balance)
    table.require_both_classes()
    search = SEARCHES[kind]
    order = sorted(table.feature_nos)
    results = Parallel(n_jobs=n_jobs)(
        delayed(search)(table.column(f), table.labels, snap_to_data, f) for f in order)
    logger.info("%s-threshold search over %d features on %d rows", kind.value, len(order), table.n_rows)
    return results
