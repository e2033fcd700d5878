"""
Data Models for rbvrisk

This module defines the shared schema of the package: the fixed catalog of
routine blood values (RBV features), the class labels, the in-memory feature
table, and the validated configuration models consumed by the resampling,
modelling and evaluation modules.
"""

import dataclasses
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .core.exceptions import InputError


class ClassLabel(IntEnum):
    """Outcome coding of the cohort."""
    SURVIVED = 0
    NON_SURVIVED = 1


@dataclass(frozen=True)
class FeatureInfo:
    """One catalog entry."""
    feature_no: int
    name: str
    unit: str

    def to_dict(self) -> Dict[str, Any]:
        """Convert feature entry to dictionary."""
        return {'feature_no': self.feature_no, 'name': self.name, 'unit': self.unit}


_CATALOG_ROWS: Tuple[Tuple[str, str], ...] = (
    ("ALT", "U/L"),
    ("AST", "U/L"),
    ("Albumin", "g/L"),
    ("ALP", "U/L"),
    ("Amylase", "U/L"),
    ("CK-MB", "U/L"),
    ("D-Bil", "mg/dL"),
    ("Glucose", "mg/dL"),
    ("Creatinine", "mg/dL"),
    ("CK", "U/L"),
    ("LDH", "U/L"),
    ("eGFR", ""),
    ("UA", "mg/dL"),
    ("BASO", "10^3/uL"),
    ("EOS", "10^3/uL"),
    ("HCT", "%"),
    ("HGB", "g/L"),
    ("LYM", "10^3/uL"),
    ("MCH", "pg"),
    ("MCHC", "g/dL"),
    ("MCV", "fL"),
    ("MONO", "10^3/uL"),
    ("MPV", "fL"),
    ("NEU", "10^3/uL"),
    ("PLT", "10^3/uL"),
    ("RBC", "10^6/uL"),
    ("RDW", "%"),
    ("WBC", "10^3/uL"),
    ("CRP", "mg/L"),
    ("D-dimer", "ug/L"),
    ("Ferritin", "ug/L"),
    ("Fibrinogen", "mg/dL"),
    ("INR", ""),
    ("PT", "s"),
    ("PCT", "ng/mL"),
    ("ESR", "mm/hr"),
    ("Troponin", "ng/L"),
    ("aPTT", "s"),
)


def _normalize_name(name: str) -> str:
    """Canonical lookup key: lower case, unit suffix and trailing dot removed."""
    key = name.strip()
    if "(" in key:
        key = key[:key.index("(")]
    return key.strip().rstrip(".").strip().lower()


class FeatureCatalog:
    """
    The fixed numbering of the 38 routine blood values.

    Feature numbers run 1..38 in the order of the cohort description; names
    are resolved case-insensitively.
    """

    def __init__(self, entries: Sequence[FeatureInfo]):
        """
        Initialize a catalog.

        Args:
            entries: Catalog entries, numbered 1..N without gaps
        """
        numbers = [e.feature_no for e in entries]
        if numbers != list(range(1, len(entries) + 1)):
            raise InputError("Catalog feature numbers must run 1..N without gaps")
        self.entries: Tuple[FeatureInfo, ...] = tuple(entries)
        self._by_key = {_normalize_name(e.name): e for e in self.entries}
        if len(self._by_key) != len(self.entries):
            raise InputError("Catalog feature names must be unique")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def feature_nos(self) -> Tuple[int, ...]:
        return tuple(e.feature_no for e in self.entries)

    def get(self, feature_no: int) -> FeatureInfo:
        """Look up an entry by feature number."""
        if not 1 <= int(feature_no) <= len(self.entries):
            raise InputError(f"Unknown feature number: {feature_no}")
        return self.entries[int(feature_no) - 1]

    def name(self, feature_no: int) -> str:
        return self.get(feature_no).name

    def resolve(self, name: str) -> FeatureInfo:
        """
        Resolve a column header to a catalog entry.

        Accepts ``"ferritin"``, ``"Ferritin (ug/L)"`` or ``"D-Bil."``.

        Raises:
            InputError: If the name is not in the catalog
        """
        entry = self._by_key.get(_normalize_name(name))
        if entry is None:
            raise InputError(f"Unknown column name: '{name}'")
        return entry

    def resolve_many(self, items: Iterable[Any]) -> List[int]:
        """Resolve a mixed list of feature numbers and names to numbers."""
        numbers = []
        for item in items:
            if isinstance(item, (int, np.integer)) or str(item).strip().isdigit():
                numbers.append(self.get(int(item)).feature_no)
            else:
                numbers.append(self.resolve(str(item)).feature_no)
        return numbers


CATALOG = FeatureCatalog([
    FeatureInfo(feature_no=i + 1, name=name, unit=unit)
    for i, (name, unit) in enumerate(_CATALOG_ROWS)
])


@dataclass(frozen=True, eq=False)
class WinsorLimits:
    """Clip limits last applied to a table, keyed by the percentile bounds."""
    lower_pct: float
    upper_pct: float
    lower: np.ndarray
    upper: np.ndarray


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """
    Patients x features matrix with binary outcome labels.

    Values follow the column order of ``feature_nos``. Missing cells are
    flagged in ``missing_mask`` and hold NaN until imputation; the mask is kept
    afterwards for audit. ``row_ids`` identify original rows (-1 for synthetic
    rows) and ``parents`` holds the two source row ids of each synthetic row.
    Arrays are copied on construction and made read-only.
    """
    values: np.ndarray
    labels: np.ndarray
    missing_mask: np.ndarray
    feature_nos: Tuple[int, ...]
    row_ids: Optional[np.ndarray] = None
    parents: Optional[np.ndarray] = None
    winsor_limits: Optional[WinsorLimits] = field(default=None, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise InputError(f"Feature values must be a matrix, got {values.ndim} dimensions")
        n_rows, n_cols = values.shape

        labels = np.array(self.labels, dtype=np.int64, copy=True).reshape(-1)
        if labels.shape[0] != n_rows:
            raise InputError(f"Label count {labels.shape[0]} does not match row count {n_rows}")
        if labels.size and not np.isin(labels, (0, 1)).all():
            raise InputError("Labels must be 0 (survived) or 1 (non-survived)")

        mask = np.array(self.missing_mask, dtype=bool, copy=True)
        if mask.shape != values.shape:
            raise InputError("Missing mask must have the same shape as the values")

        feature_nos = tuple(int(f) for f in self.feature_nos)
        if len(feature_nos) != n_cols:
            raise InputError(f"{len(feature_nos)} feature numbers for {n_cols} columns")
        if len(set(feature_nos)) != len(feature_nos):
            raise InputError("Duplicate feature numbers in table")
        for feature_no in feature_nos:
            CATALOG.get(feature_no)

        row_ids = (np.arange(n_rows, dtype=np.int64) if self.row_ids is None
                   else np.array(self.row_ids, dtype=np.int64, copy=True))
        parents = (np.full((n_rows, 2), -1, dtype=np.int64) if self.parents is None
                   else np.array(self.parents, dtype=np.int64, copy=True).reshape(n_rows, 2))
        if row_ids.shape[0] != n_rows:
            raise InputError("Row id count does not match row count")

        for array in (values, labels, mask, row_ids, parents):
            array.flags.writeable = False

        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'labels', labels)
        object.__setattr__(self, 'missing_mask', mask)
        object.__setattr__(self, 'feature_nos', feature_nos)
        object.__setattr__(self, 'row_ids', row_ids)
        object.__setattr__(self, 'parents', parents)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    @property
    def feature_names(self) -> List[str]:
        return [CATALOG.name(f) for f in self.feature_nos]

    @property
    def is_finalized(self) -> bool:
        """True when no value is missing or non-finite."""
        return bool(np.isfinite(self.values).all())

    @property
    def synthetic_mask(self) -> np.ndarray:
        return self.row_ids < 0

    def class_counts(self) -> Tuple[int, int]:
        """Return (n_survived, n_nonsurvived)."""
        n1 = int(self.labels.sum())
        return self.n_rows - n1, n1

    def column_index(self, feature_no: int) -> int:
        try:
            return self.feature_nos.index(int(feature_no))
        except ValueError:
            raise InputError(f"Feature {feature_no} is not a column of this table") from None

    def column(self, feature_no: int) -> np.ndarray:
        return self.values[:, self.column_index(feature_no)]

    def require_both_classes(self, min_per_class: int = 1) -> None:
        """
        Check that both classes are present.

        Raises:
            InputError: If either class has fewer than ``min_per_class`` rows
        """
        n0, n1 = self.class_counts()
        if min(n0, n1) < min_per_class:
            raise InputError(
                f"Need at least {min_per_class} row(s) per class, got {n0} survived "
                f"and {n1} non-survived")

    def require_finalized(self) -> None:
        if not self.is_finalized:
            raise InputError("Table has missing or non-finite values; impute first")

    def select_features(self, feature_nos: Sequence[int]) -> 'FeatureTable':
        """Return a table restricted to the given columns, in the given order."""
        idx = [self.column_index(f) for f in feature_nos]
        limits = None
        if self.winsor_limits is not None:
            limits = dataclasses.replace(self.winsor_limits,
                                         lower=self.winsor_limits.lower[idx],
                                         upper=self.winsor_limits.upper[idx])
        return FeatureTable(
            values=self.values[:, idx],
            labels=self.labels,
            missing_mask=self.missing_mask[:, idx],
            feature_nos=tuple(int(f) for f in feature_nos),
            row_ids=self.row_ids,
            parents=self.parents,
            winsor_limits=limits,
        )

    def take(self, indices: Sequence[int]) -> 'FeatureTable':
        """Return the rows at ``indices`` (provenance tags travel with them)."""
        idx = np.asarray(indices, dtype=np.int64)
        return FeatureTable(
            values=self.values[idx],
            labels=self.labels[idx],
            missing_mask=self.missing_mask[idx],
            feature_nos=self.feature_nos,
            row_ids=self.row_ids[idx],
            parents=self.parents[idx],
        )

    def replace_values(self, values: np.ndarray, **changes) -> 'FeatureTable':
        """Return a copy with new values (same labels, mask and provenance)."""
        return dataclasses.replace(self, values=values, **changes)

    def to_frame(self, label_column: str = "outcome") -> pd.DataFrame:
        """Convert to a DataFrame with catalog names as headers."""
        frame = pd.DataFrame(self.values, columns=self.feature_names)
        frame[label_column] = self.labels
        return frame


class WinsorConfig(BaseModel):
    """Percentile bounds for outlier clipping; (0, 100) disables it."""
    model_config = ConfigDict(frozen=True)

    lower_pct: float = Field(1.0, ge=0, le=100, description="Lower clip percentile")
    upper_pct: float = Field(99.0, ge=0, le=100, description="Upper clip percentile")

    @model_validator(mode='after')
    def check_order(self):
        if not self.lower_pct < self.upper_pct:
            raise ValueError("lower_pct must be below upper_pct")
        return self


class SmoteConfig(BaseModel):
    """Settings for synthetic minority oversampling."""
    model_config = ConfigDict(frozen=True)

    k_neighbors: int = Field(5, ge=1, description="Minority neighbours to interpolate towards")
    target_ratio: float = Field(1.0, gt=0, le=1.0, description="Minority/majority after balancing")
    seed: int = Field(0, ge=0, description="Seed of the sampling stream")


class HGBConfig(BaseModel):
    """Hyperparameters of the histogram gradient-boosting classifier."""
    model_config = ConfigDict(frozen=True)

    max_bins: int = Field(255, ge=2, le=256, description="Bins per feature")
    learning_rate: float = Field(0.1, gt=0, description="Shrinkage applied to leaf values")
    max_iter: int = Field(100, ge=0, description="Boosting rounds")
    max_leaves: int = Field(31, ge=2, description="Leaves per tree")
    l2_regularization: float = Field(1.0, ge=0, description="L2 penalty on leaf values")
    min_samples_leaf: int = Field(20, ge=1, description="Minimum training rows per leaf")
    max_depth: Optional[int] = Field(None, ge=1, description="Depth limit (None = unlimited)")
    min_gain_to_split: float = Field(0.0, ge=0, description="Gain a split must exceed")
    seed: int = Field(0, ge=0, description="Echoed for reproducibility")


class BaselineConfig(BaseModel):
    """Hyperparameters of the comparison classifiers."""
    model_config = ConfigDict(frozen=True)

    knn_k: int = Field(5, ge=1)
    dt_max_depth: int = Field(10, ge=1)
    gnb_var_smoothing: float = Field(1e-9, gt=0)
    seed: int = Field(0, ge=0)


class ModelKind(str, Enum):
    """Available classifiers."""
    HGB = "hgb"
    DT = "dt"
    KNN = "knn"
    GNB = "gnb"


MODEL_DISPLAY_NAMES = {
    ModelKind.HGB: "Histogram-based Gradient Boosting (HGB)",
    ModelKind.DT: "Decision Tree (DT)",
    ModelKind.KNN: "K-nearest neighbors (KNN)",
    ModelKind.GNB: "Gaussian Naive Bayes (GNB)",
}


class ModelSpec(BaseModel):
    """Which classifier to build and with which settings."""
    model_config = ConfigDict(frozen=True)

    kind: ModelKind = ModelKind.HGB
    hgb: HGBConfig = Field(default_factory=HGBConfig)
    baseline: BaselineConfig = Field(default_factory=BaselineConfig)


class EvaluationScheme(str, Enum):
    """How predictions are scored."""
    CV = "cv"
    TRAIN = "train"
    HOLDOUT = "holdout"


class EvaluationProtocol(BaseModel):
    """
    Evaluation protocol shared by model comparison and sweeps.

    ``paper_mode`` balances the whole table before splitting; otherwise SMOTE
    only ever sees training rows. ``balance`` switches SMOTE off entirely.
    """
    model_config = ConfigDict(frozen=True)

    scheme: EvaluationScheme = EvaluationScheme.CV
    folds: int = Field(5, ge=2)
    seed: int = Field(0, ge=0, description="Seed of the fold assignment")
    paper_mode: bool = False
    balance: bool = True
    smote: SmoteConfig = Field(default_factory=SmoteConfig)
    holdout_fraction: float = Field(0.2, gt=0, lt=1)

    def describe(self) -> Dict[str, Any]:
        """Protocol descriptor embedded in every report."""
        return self.model_dump(mode='json')
