"""
Statistical analysis of cohort tables.

Descriptive quartiles per class, the assumption checks (Shapiro-Wilk
normality, Levene variance homogeneity), the Mann-Whitney U test used for
p-value feature selection, and Pearson / Spearman / Kendall correlation
matrices with the per-class change report.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, NamedTuple, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats as sps

from .core.exceptions import InputError
from .core.seeding import make_rng
from .data_models import CATALOG, FeatureTable

logger = logging.getLogger(__name__)

SHAPIRO_MAX_N = 5000
EXACT_MANN_WHITNEY_MAX_N = 20


@dataclass(frozen=True)
class TestResult:
    """
    Outcome of a hypothesis test.

    For one-sample tests (Shapiro-Wilk) ``n2`` repeats ``n1``.
    """
    __test__ = False  # not a pytest class

    statistic: float
    p_value: float
    n1: int
    n2: int

    def to_dict(self) -> Dict[str, float]:
        return {'statistic': self.statistic, 'p_value': self.p_value, 'n1': self.n1, 'n2': self.n2}


class Quartiles(NamedTuple):
    median: float
    q25: float
    q75: float


class CorrelationMethod(str, Enum):
    PEARSON = "pearson"
    SPEARMAN = "spearman"
    KENDALL = "kendall"


class CorrelationScope(str, Enum):
    ALL = "all"
    SURVIVED = "survived"
    NON_SURVIVED = "non_survived"


class Direction(str, Enum):
    UP = "Up"
    DOWN = "Down"


@dataclass(frozen=True, eq=False)
class CorrelationReport:
    """Correlation matrix over the columns of a table."""
    method: CorrelationMethod
    scope: CorrelationScope
    feature_nos: Tuple[int, ...]
    matrix: np.ndarray
    constant_features: Tuple[int, ...] = field(default_factory=tuple)

    def to_frame(self) -> pd.DataFrame:
        names = [CATALOG.name(f) for f in self.feature_nos]
        return pd.DataFrame(self.matrix, index=names, columns=names)

    def value(self, feature_a: int, feature_b: int) -> float:
        i = self.feature_nos.index(feature_a)
        j = self.feature_nos.index(feature_b)
        return float(self.matrix[i, j])


@dataclass(frozen=True)
class CorrelationDelta:
    """Change of a pair's Spearman correlation from the survived to the non-survived class."""
    feature_a: int
    feature_b: int
    rho_survived: float
    rho_nonsurvived: float
    direction: Direction

    @property
    def delta(self) -> float:
        return self.rho_nonsurvived - self.rho_survived

    def to_dict(self) -> Dict[str, object]:
        return {
            'no_a': self.feature_a,
            'no_b': self.feature_b,
            'name_a': CATALOG.name(self.feature_a),
            'name_b': CATALOG.name(self.feature_b),
            'rho_surv': self.rho_survived,
            'rho_nonsurv': self.rho_nonsurvived,
            'direction': self.direction.value,
        }


def _as_sample(sample: Sequence[float], name: str = "sample") -> np.ndarray:
    arr = np.asarray(sample, dtype=float).reshape(-1)
    if arr.size == 0:
        raise InputError(f"Empty {name}")
    if not np.isfinite(arr).all():
        raise InputError(f"Non-finite values in {name}")
    return arr


def describe(table: FeatureTable, feature: int) -> Dict[int, Quartiles]:
    """
    Per-class median and quartiles of one feature (linear-interpolation percentiles).

    Returns:
        ``{0: Quartiles, 1: Quartiles}``

    Raises:
        InputError: If a class has no rows or the table is not finalized
    """
    table.require_finalized()
    column = table.column(feature)
    out = {}
    for label in (0, 1):
        values = column[table.labels == label]
        if values.size == 0:
            raise InputError(f"Class {label} has no rows")
        q25, median, q75 = np.percentile(values, [25, 50, 75], method="linear")
        out[label] = Quartiles(float(median), float(q25), float(q75))
    return out


def shapiro_wilk(sample: Sequence[float]) -> TestResult:
    """
    Shapiro-Wilk normality test (Royston's approximation).

    Raises:
        InputError: If n is outside [3, 5000] or the sample is constant
    """
    x = _as_sample(sample)
    n = x.size
    if not 3 <= n <= SHAPIRO_MAX_N:
        raise InputError(f"Shapiro-Wilk needs 3 <= n <= {SHAPIRO_MAX_N}, got {n}")
    if np.ptp(x) == 0:
        raise InputError("Shapiro-Wilk W is undefined for a constant sample")
    w, p = sps.shapiro(x)
    return TestResult(statistic=float(w), p_value=float(np.clip(p, 0.0, 1.0)), n1=n, n2=n)


def levene(sample_a: Sequence[float], sample_b: Sequence[float]) -> TestResult:
    """
    Levene's test with mean centring.

    Raises:
        InputError: If a sample has fewer than 2 values or all deviations are zero
    """
    a = _as_sample(sample_a, "sample_a")
    b = _as_sample(sample_b, "sample_b")
    if a.size < 2 or b.size < 2:
        raise InputError("Levene's test needs at least 2 values per sample")
    if np.ptp(a) == 0 and np.ptp(b) == 0:
        raise InputError("Levene's test is undefined when all deviations are zero")
    f_stat, p = sps.levene(a, b, center="mean")
    return TestResult(statistic=float(f_stat), p_value=float(np.clip(p, 0.0, 1.0)),
                      n1=a.size, n2=b.size)


def mann_whitney(sample_a: Sequence[float], sample_b: Sequence[float],
                 method: str = "auto") -> TestResult:
    """
    Two-sided Mann-Whitney U test.

    U is the statistic of ``sample_a`` (rank sums with midranks). With
    ``method="auto"`` the exact null distribution is used when n1 + n2 <= 20
    and there are no ties; otherwise the normal approximation with tie and
    continuity correction.

    Args:
        sample_a: First sample
        sample_b: Second sample
        method: ``auto``, ``exact`` or ``asymptotic``

    Raises:
        InputError: On an empty sample, or ``exact`` requested with ties
    """
    a = _as_sample(sample_a, "sample_a")
    b = _as_sample(sample_b, "sample_b")
    pooled = np.concatenate([a, b])
    has_ties = np.unique(pooled).size < pooled.size

    if method == "auto":
        method = "exact" if pooled.size <= EXACT_MANN_WHITNEY_MAX_N and not has_ties else "asymptotic"
    elif method == "exact" and has_ties:
        raise InputError("Exact Mann-Whitney p-values require tie-free samples")
    elif method not in ("exact", "asymptotic"):
        raise InputError(f"Unknown Mann-Whitney method: {method}")

    if np.ptp(pooled) == 0:
        # every observation tied: no evidence of a shift
        return TestResult(statistic=a.size * b.size / 2.0, p_value=1.0, n1=a.size, n2=b.size)

    result = sps.mannwhitneyu(a, b, alternative="two-sided", method=method, use_continuity=True)
    return TestResult(statistic=float(result.statistic),
                      p_value=float(np.clip(result.pvalue, 0.0, 1.0)),
                      n1=a.size, n2=b.size)


def _class_samples(table: FeatureTable, feature_no: int) -> Tuple[np.ndarray, np.ndarray]:
    column = table.column(feature_no)
    return column[table.labels == 0], column[table.labels == 1]


def feature_p_values(table: FeatureTable) -> Dict[int, float]:
    """Mann-Whitney p-value of every column, survived vs non-survived."""
    table.require_finalized()
    table.require_both_classes()
    return {f: mann_whitney(*_class_samples(table, f)).p_value for f in table.feature_nos}


def select_features(table: FeatureTable, alpha: float = 0.05) -> List[int]:
    """
    Features whose two-sided Mann-Whitney p-value is below ``alpha``.

    Returns:
        Feature numbers in catalog order
    """
    p_values = feature_p_values(table)
    selected = sorted(f for f, p in p_values.items() if p < alpha)
    logger.info("Selected %d of %d features at alpha=%g", len(selected), len(p_values), alpha)
    return selected


def describe_table(table: FeatureTable) -> pd.DataFrame:
    """Per-class quartiles and Mann-Whitney p-value of every feature."""
    p_values = feature_p_values(table)
    rows = []
    for feature_no in table.feature_nos:
        info = CATALOG.get(feature_no)
        quart = describe(table, feature_no)
        rows.append({
            'feature_no': feature_no,
            'name': info.name,
            'unit': info.unit,
            'surv_median': quart[0].median,
            'surv_q25': quart[0].q25,
            'surv_q75': quart[0].q75,
            'nonsurv_median': quart[1].median,
            'nonsurv_q25': quart[1].q25,
            'nonsurv_q75': quart[1].q75,
            'p_value': p_values[feature_no],
        })
    return pd.DataFrame(rows)


def _safe_test(test, *samples) -> Tuple[float, float]:
    try:
        result = test(*samples)
    except InputError as exc:
        logger.warning("%s skipped: %s", test.__name__, exc)
        return float('nan'), float('nan')
    return result.statistic, result.p_value


def normality_report(table: FeatureTable, seed: int = 0) -> pd.DataFrame:
    """
    Assumption checks of the parametric tests for every feature.

    Shapiro-Wilk per class (classes larger than 5000 rows are subsampled with
    a seeded draw) and Levene between the classes.
    """
    table.require_finalized()
    rng = make_rng(seed)
    rows = []
    for feature_no in table.feature_nos:
        surv, nonsurv = _class_samples(table, feature_no)
        samples = []
        for sample in (surv, nonsurv):
            if sample.size > SHAPIRO_MAX_N:
                sample = np.sort(rng.choice(sample, SHAPIRO_MAX_N, replace=False))
            samples.append(sample)
        w0, p0 = _safe_test(shapiro_wilk, samples[0])
        w1, p1 = _safe_test(shapiro_wilk, samples[1])
        f_stat, p_lev = _safe_test(levene, surv, nonsurv)
        rows.append({
            'feature_no': feature_no,
            'name': CATALOG.name(feature_no),
            'shapiro_w_surv': w0,
            'shapiro_p_surv': p0,
            'shapiro_w_nonsurv': w1,
            'shapiro_p_nonsurv': p1,
            'levene_f': f_stat,
            'levene_p': p_lev,
        })
    return pd.DataFrame(rows)


def _scope_rows(table: FeatureTable, scope: CorrelationScope) -> np.ndarray:
    if scope == CorrelationScope.ALL:
        return table.values
    label = 0 if scope == CorrelationScope.SURVIVED else 1
    return table.values[table.labels == label]


def correlation_matrix(values: np.ndarray, method: CorrelationMethod) -> Tuple[np.ndarray, np.ndarray]:
    """
    Correlation matrix of the columns of ``values``.

    Spearman is Pearson on midranks and Kendall is tau-b. Entries involving a
    constant column are 0; the diagonal is 1.

    Returns:
        (matrix, boolean mask of constant columns)
    """
    method = CorrelationMethod(method)
    constant = np.ptp(values, axis=0) == 0
    matrix = pd.DataFrame(values).corr(method=method.value).to_numpy()
    matrix = np.nan_to_num(matrix, nan=0.0)
    matrix[constant, :] = 0.0
    matrix[:, constant] = 0.0
    matrix = np.clip(0.5 * (matrix + matrix.T), -1.0, 1.0)
    np.fill_diagonal(matrix, 1.0)
    return matrix, constant


def correlate(table: FeatureTable, method: CorrelationMethod = CorrelationMethod.SPEARMAN,
              scope: CorrelationScope = CorrelationScope.ALL) -> CorrelationReport:
    """
    Correlation matrix of all columns over the rows in ``scope``.

    Raises:
        InputError: If the scope has fewer than 2 rows
    """
    method = CorrelationMethod(method)
    scope = CorrelationScope(scope)
    table.require_finalized()
    rows = _scope_rows(table, scope)
    if rows.shape[0] < 2:
        raise InputError(f"Correlation over scope '{scope.value}' needs at least 2 rows")

    matrix, constant = correlation_matrix(rows, method)
    constant_features = tuple(f for f, c in zip(table.feature_nos, constant) if c)
    if constant_features:
        logger.warning("Constant column(s) in %s/%s correlation set to 0: %s", method.value,
                       scope.value, ", ".join(CATALOG.name(f) for f in constant_features))
    return CorrelationReport(method=method, scope=scope, feature_nos=table.feature_nos,
                             matrix=matrix, constant_features=constant_features)


def diagnosis_correlations(table: FeatureTable) -> pd.DataFrame:
    """Correlation of every feature with the outcome label under all three methods."""
    table.require_finalized()
    table.require_both_classes()
    data = np.column_stack([table.values, table.labels.astype(float)])
    out = {'feature_no': list(table.feature_nos), 'name': table.feature_names}
    for method in CorrelationMethod:
        matrix, _ = correlation_matrix(data, method)
        out[method.value] = matrix[:-1, -1]
    return pd.DataFrame(out)


def _direction(rho_surv: float, rho_nonsurv: float, rule: str) -> Direction:
    if rule == "magnitude":
        return Direction.UP if abs(rho_nonsurv) > abs(rho_surv) else Direction.DOWN
    if rule == "signed":
        return Direction.UP if rho_nonsurv > rho_surv else Direction.DOWN
    raise InputError(f"Unknown direction rule: {rule}")


def correlation_deltas(table: FeatureTable, top_k: int = 41,
                       direction_rule: str = "magnitude") -> List[CorrelationDelta]:
    """
    Pairs whose Spearman correlation changes most between the classes.

    Pairs are ranked by |rho_nonsurvived - rho_survived| (ties by feature
    numbers). ``direction_rule="magnitude"`` marks a pair Up when the
    correlation is stronger in the non-survived class; ``"signed"`` when it is
    larger.

    Raises:
        InputError: If a class has fewer than 3 rows
    """
    table.require_both_classes(min_per_class=3)
    surv = correlate(table, CorrelationMethod.SPEARMAN, CorrelationScope.SURVIVED).matrix
    nonsurv = correlate(table, CorrelationMethod.SPEARMAN, CorrelationScope.NON_SURVIVED).matrix

    deltas = []
    features = table.feature_nos
    for i in range(len(features)):
        for j in range(i + 1, len(features)):
            a, b = sorted((features[i], features[j]))
            rho_s, rho_n = float(surv[i, j]), float(nonsurv[i, j])
            deltas.append(CorrelationDelta(a, b, rho_s, rho_n, _direction(rho_s, rho_n, direction_rule)))

    deltas.sort(key=lambda d: (-abs(d.delta), d.feature_a, d.feature_b))
    return deltas[:max(int(top_k), 0)]
