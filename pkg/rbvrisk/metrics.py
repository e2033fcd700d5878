"""
Classification metrics and the evaluation harness.

Class 1 (non-survived) is the positive class. F1-squared is the product of
the two per-class F1 scores and A_th is the balanced accuracy, the mean of the
two per-class recalls.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from sklearn.model_selection import StratifiedKFold, train_test_split

from .classifiers import fit_classifier
from .core.exceptions import InputError
from .core.seeding import derive_seed
from .data_models import (MODEL_DISPLAY_NAMES, EvaluationProtocol, EvaluationScheme, FeatureTable,
                          ModelSpec)
from .resampling import smote_balance

logger = logging.getLogger(__name__)

METRIC_FIELDS = ('precision_surv', 'recall_surv', 'f1_surv', 'precision_nonsurv',
                 'recall_nonsurv', 'f1_nonsurv', 'accuracy', 'a_th', 'f1_squared')


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise InputError("Confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: 'ConfusionCounts') -> 'ConfusionCounts':
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)

    @classmethod
    def from_predictions(cls, labels: Sequence[int], predictions: Sequence[int]) -> 'ConfusionCounts':
        y = np.asarray(labels, dtype=np.int64)
        p = np.asarray(predictions, dtype=np.int64)
        if y.shape != p.shape:
            raise InputError("Labels and predictions differ in length")
        return cls(tp=int(np.sum((y == 1) & (p == 1))), fp=int(np.sum((y == 0) & (p == 1))),
                   tn=int(np.sum((y == 0) & (p == 0))), fn=int(np.sum((y == 1) & (p == 0))))


@dataclass(frozen=True)
class EvalReport:
    """Per-class and composite metrics with the protocol that produced them."""
    precision_surv: float
    recall_surv: float
    f1_surv: float
    precision_nonsurv: float
    recall_nonsurv: float
    f1_nonsurv: float
    accuracy: float
    a_th: float
    f1_squared: float
    counts: ConfusionCounts
    protocol: Dict[str, Any] = field(default_factory=dict)

    def metrics(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_FIELDS}

    def to_dict(self) -> Dict[str, Any]:
        data = self.metrics()
        data['counts'] = asdict(self.counts)
        data['protocol'] = dict(self.protocol)
        return data


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def balanced_accuracy(tp: int, fp: int, tn: int, fn: int) -> float:
    """Mean of the per-class recalls (0/0 counts as 0)."""
    return (_ratio(tn, tn + fp) + _ratio(tp, tp + fn)) / 2.0


def f1_squared(f1_surv: float, f1_nonsurv: float) -> float:
    return f1_surv * f1_nonsurv


def compute_metrics(counts: ConfusionCounts, protocol: Optional[Dict[str, Any]] = None) -> EvalReport:
    """
    Derive every metric from confusion counts.

    Args:
        counts: Confusion counts (positive class = non-survived)
        protocol: Descriptor echoed into the report

    Raises:
        InputError: If no row was evaluated
    """
    if counts.total == 0:
        raise InputError("Cannot compute metrics on zero evaluated rows")
    tp, fp, tn, fn = counts.tp, counts.fp, counts.tn, counts.fn
    f1_surv = _ratio(2 * tn, 2 * tn + fn + fp)
    f1_nonsurv = _ratio(2 * tp, 2 * tp + fp + fn)
    return EvalReport(
        precision_surv=_ratio(tn, tn + fn),
        recall_surv=_ratio(tn, tn + fp),
        f1_surv=f1_surv,
        precision_nonsurv=_ratio(tp, tp + fp),
        recall_nonsurv=_ratio(tp, tp + fn),
        f1_nonsurv=f1_nonsurv,
        accuracy=(tp + tn) / counts.total,
        a_th=balanced_accuracy(tp, fp, tn, fn),
        f1_squared=f1_squared(f1_surv, f1_nonsurv),
        counts=counts,
        protocol=dict(protocol or {}),
    )


def _fold_smote(protocol: EvaluationProtocol, fold: int):
    return protocol.smote.model_copy(update={'seed': derive_seed(protocol.smote.seed, f"fold-{fold}")})


def iter_folds(table: FeatureTable, protocol: EvaluationProtocol) -> Iterator[Tuple[FeatureTable, FeatureTable]]:
    """
    Yield the (train, test) tables of a stratified k-fold split.

    With ``paper_mode`` the whole table is balanced before splitting, so test
    folds contain synthetic rows. Otherwise only training folds are balanced
    and no synthetic row is derived from a test-fold row.

    Raises:
        InputError: If a class has fewer rows than folds
    """
    table.require_finalized()
    if protocol.paper_mode and protocol.balance:
        table = smote_balance(table, protocol.smote)
    table.require_both_classes(min_per_class=protocol.folds)

    splitter = StratifiedKFold(n_splits=protocol.folds, shuffle=True, random_state=protocol.seed)
    for fold, (train_idx, test_idx) in enumerate(splitter.split(table.values, table.labels)):
        train = table.take(train_idx)
        if protocol.balance and not protocol.paper_mode:
            train = smote_balance(train, _fold_smote(protocol, fold))
        yield train, table.take(test_idx)


def _fit_and_count(train: FeatureTable, test: FeatureTable, spec: ModelSpec) -> ConfusionCounts:
    model = fit_classifier(train, spec)
    return ConfusionCounts.from_predictions(test.labels, model.predict(test))


def kfold_evaluate(table: FeatureTable, spec: ModelSpec,
                   protocol: EvaluationProtocol = EvaluationProtocol(), n_jobs: int = 1) -> EvalReport:
    """
    Stratified k-fold evaluation with confusion counts pooled over all folds.

    Args:
        table: Finalized table
        spec: Classifier to train in every fold
        protocol: Folds, seed, balancing flags
        n_jobs: Folds trained concurrently (joblib)

    Returns:
        Report over the union of the out-of-fold predictions
    """
    folds = list(iter_folds(table, protocol))
    counts = Parallel(n_jobs=n_jobs)(delayed(_fit_and_count)(train, test, spec) for train, test in folds)
    total = ConfusionCounts(0, 0, 0, 0)
    for c in counts:
        total = total + c
    return compute_metrics(total, protocol.describe())


def _train_evaluate(table: FeatureTable, spec: ModelSpec, protocol: EvaluationProtocol) -> EvalReport:
    if protocol.balance:
        table = smote_balance(table, protocol.smote)
    return compute_metrics(_fit_and_count(table, table, spec), protocol.describe())


def _holdout_evaluate(table: FeatureTable, spec: ModelSpec, protocol: EvaluationProtocol) -> EvalReport:
    if protocol.balance and protocol.paper_mode:
        table = smote_balance(table, protocol.smote)
    table.require_both_classes(min_per_class=2)
    train_idx, test_idx = train_test_split(np.arange(table.n_rows), test_size=protocol.holdout_fraction,
                                           random_state=protocol.seed, stratify=table.labels)
    train, test = table.take(np.sort(train_idx)), table.take(np.sort(test_idx))
    if protocol.balance and not protocol.paper_mode:
        train = smote_balance(train, protocol.smote)
    return compute_metrics(_fit_and_count(train, test, spec), protocol.describe())


def evaluate(table: FeatureTable, spec: ModelSpec,
             protocol: EvaluationProtocol = EvaluationProtocol(), n_jobs: int = 1) -> EvalReport:
    """
    Score a classifier under the protocol's scheme.

    ``cv`` pools stratified k-fold predictions, ``train`` scores on the
    (optionally balanced) training table itself, ``holdout`` scores a
    stratified test split.
    """
    table.require_finalized()
    table.require_both_classes()
    if protocol.scheme == EvaluationScheme.CV:
        return kfold_evaluate(table, spec, protocol, n_jobs=n_jobs)
    if protocol.scheme == EvaluationScheme.TRAIN:
        return _train_evaluate(table, spec, protocol)
    return _holdout_evaluate(table, spec, protocol)


@dataclass(frozen=True)
class ModelComparison:
    """One row of the model comparison table."""
    spec: ModelSpec
    report: EvalReport

    @property
    def name(self) -> str:
        return MODEL_DISPLAY_NAMES[self.spec.kind]


def compare_models(table: FeatureTable, specs: Sequence[ModelSpec],
                   protocol: EvaluationProtocol = EvaluationProtocol(),
                   n_jobs: int = 1) -> List[ModelComparison]:
    """Evaluate several classifiers under one protocol, best F1-squared first."""
    rows = []
    for spec in specs:
        report = evaluate(table, spec, protocol, n_jobs=n_jobs)
        logger.info("%s: F1^2=%.4f A_th=%.4f", MODEL_DISPLAY_NAMES[spec.kind],
                    report.f1_squared, report.a_th)
        rows.append(ModelComparison(spec=spec, report=report))
    rows.sort(key=lambda r: -r.report.f1_squared)
    return rows
