"""
Classifier contract and model factory.

One interface over the histogram gradient-boosting model and the three
comparison classifiers (CART decision tree, k-nearest neighbours on z-scored
features, Gaussian naive Bayes).
"""

import logging
from abc import ABC, abstractmethod
from typing import Tuple, Union

import numpy as np
from sklearn.naive_bayes import GaussianNB
from sklearn.neighbors import KNeighborsClassifier
from sklearn.pipeline import Pipeline
from sklearn.preprocessing import StandardScaler
from sklearn.tree import DecisionTreeClassifier

from .boosting import BoostedEnsemble, fit_hgb
from .core.exceptions import InputError
from .data_models import MODEL_DISPLAY_NAMES, BaselineConfig, FeatureTable, ModelKind, ModelSpec

logger = logging.getLogger(__name__)

Rows = Union[FeatureTable, np.ndarray]


class Classifier(ABC):
    """
    Binary classifier over a fixed set of feature columns.

    ``predict`` returns class 1 (non-survived) when the class-1 probability
    exceeds 0.5; a tie goes to class 0.
    """

    kind: ModelKind

    def __init__(self):
        self.feature_nos: Tuple[int, ...] = ()

    @property
    def name(self) -> str:
        return MODEL_DISPLAY_NAMES[self.kind]

    @property
    def is_fitted(self) -> bool:
        return bool(self.feature_nos)

    def _values(self, rows: Rows) -> np.ndarray:
        if not self.is_fitted:
            raise InputError(f"{self.name} is not fitted")
        if isinstance(rows, FeatureTable):
            return rows.select_features(self.feature_nos).values
        values = np.asarray(rows, dtype=np.float64)
        if values.ndim == 1:
            if values.size % len(self.feature_nos):
                raise InputError(f"{values.size} value(s) cannot be split into rows of "
                                 f"{len(self.feature_nos)} feature(s)")
            values = values.reshape(-1, len(self.feature_nos))
        if values.shape[1] != len(self.feature_nos):
            raise InputError(f"Expected {len(self.feature_nos)} feature column(s), got {values.shape[1]}")
        return values

    def fit(self, table: FeatureTable) -> 'Classifier':
        table.require_finalized()
        table.require_both_classes()
        self._fit(table)
        self.feature_nos = table.feature_nos
        return self

    @abstractmethod
    def _fit(self, table: FeatureTable) -> None:
        pass

    @abstractmethod
    def predict_proba(self, rows: Rows) -> np.ndarray:
        """Probability of class 1 for every row."""

    def predict(self, rows: Rows) -> np.ndarray:
        return (self.predict_proba(rows) > 0.5).astype(np.int64)


class HGBClassifier(Classifier):
    """Adapter over :class:`BoostedEnsemble` (predicts class 1 iff p >= 0.5)."""

    kind = ModelKind.HGB

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.config = spec.hgb
        self.model: BoostedEnsemble = None

    def _fit(self, table: FeatureTable) -> None:
        self.model = fit_hgb(table, self.config)

    def predict_proba(self, rows: Rows) -> np.ndarray:
        values = self._values(rows)
        return self.model.predict_proba(values)

    def predict(self, rows: Rows) -> np.ndarray:
        values = self._values(rows)
        return self.model.predict(values)


class SklearnClassifier(Classifier):
    """Wraps a scikit-learn estimator."""

    def __init__(self, kind: ModelKind, config: BaselineConfig):
        super().__init__()
        self.kind = kind
        self.config = config
        self.estimator = None

    def _build(self, n_rows: int):
        cfg = self.config
        if self.kind == ModelKind.DT:
            return DecisionTreeClassifier(criterion="gini", max_depth=cfg.dt_max_depth,
                                          random_state=cfg.seed)
        if self.kind == ModelKind.KNN:
            if cfg.knn_k > n_rows:
                raise InputError(f"KNN needs k <= training rows, got k={cfg.knn_k} for {n_rows} rows")
            return Pipeline([
                ("scaler", StandardScaler()),
                ("classifier", KNeighborsClassifier(n_neighbors=cfg.knn_k)),
            ])
        if self.kind == ModelKind.GNB:
            return GaussianNB(var_smoothing=cfg.gnb_var_smoothing)
        raise InputError(f"Unsupported baseline: {self.kind}")

    def _fit(self, table: FeatureTable) -> None:
        self.estimator = self._build(table.n_rows)
        self.estimator.fit(table.values, table.labels)

    def predict_proba(self, rows: Rows) -> np.ndarray:
        values = self._values(rows)
        proba = self.estimator.predict_proba(values)
        classes = list(self.estimator.classes_)
        return proba[:, classes.index(1)]


def build_classifier(spec: ModelSpec) -> Classifier:
    """Create an unfitted classifier for a model spec."""
    builders = {
        ModelKind.HGB: lambda: HGBClassifier(spec),
        ModelKind.DT: lambda: SklearnClassifier(ModelKind.DT, spec.baseline),
        ModelKind.KNN: lambda: SklearnClassifier(ModelKind.KNN, spec.baseline),
        ModelKind.GNB: lambda: SklearnClassifier(ModelKind.GNB, spec.baseline),
    }
    return builders[ModelKind(spec.kind)]()


def fit_classifier(table: FeatureTable, spec: ModelSpec) -> Classifier:
    """Build and fit a classifier on a finalized table."""
    return build_classifier(spec).fit(table)


def fit_baseline(table: FeatureTable, kind: Union[ModelKind, str],
                 config: BaselineConfig = BaselineConfig()) -> Classifier:
    """
    Fit one of the comparison classifiers.

    Args:
        table: Finalized training table with both classes
        kind: ``dt``, ``knn`` or ``gnb``
        config: Baseline hyperparameters

    Raises:
        InputError: On single-class input, KNN with k > rows or an unknown kind
    """
    try:
        kind = ModelKind(kind)
    except ValueError:
        raise InputError(f"Unknown model kind: {kind}") from None
    if kind == ModelKind.HGB:
        raise InputError("fit_baseline does not build the boosted model; use fit_hgb")
    return fit_classifier(table, ModelSpec(kind=kind, baseline=config))
