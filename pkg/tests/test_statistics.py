import itertools

import numpy as np
import pytest
from scipy import stats as sps

from rbvrisk.core.exceptions import InputError
from rbvrisk.core.seeding import derive_seed
from rbvrisk.data_management import finalize
from rbvrisk.data_models import CATALOG
from rbvrisk.statistics import (CorrelationMethod, CorrelationScope, Direction, correlate,
                                correlation_deltas, describe, describe_table,
                                diagnosis_correlations, levene, mann_whitney, normality_report,
                                select_features, shapiro_wilk)
from rbvrisk.synthetic import generate_synthetic, load_synthetic_spec


def _exact_p(a, b):
    """Two-sided exact Mann-Whitney p by enumerating every rank assignment."""
    pooled = np.concatenate([a, b])
    ranks = sps.rankdata(pooled)
    n1, n2 = len(a), len(b)
    observed = ranks[:n1].sum() - n1 * (n1 + 1) / 2
    extreme = max(observed, n1 * n2 - observed)
    total = hits = 0
    for combo in itertools.combinations(range(n1 + n2), n1):
        u = ranks[list(combo)].sum() - n1 * (n1 + 1) / 2
        total += 1
        hits += max(u, n1 * n2 - u) >= extreme
    return min(1.0, hits / total)


def test_mann_whitney_exact_small_case():
    result = mann_whitney([1, 2, 3], [10, 20, 30])
    assert result.statistic == 0.0
    assert result.p_value == pytest.approx(0.1)
    assert (result.n1, result.n2) == (3, 3)


def test_mann_whitney_exact_matches_enumeration(rng):
    for n1 in range(1, 6):
        for n2 in range(1, 6):
            values = rng.permutation(n1 + n2).astype(float)
            a, b = values[:n1], values[n1:]
            assert mann_whitney(a, b, method="exact").p_value == pytest.approx(_exact_p(a, b), abs=1e-12)


def test_mann_whitney_exact_close_to_normal_approximation(rng):
    for n1, n2 in [(5, 5), (5, 6), (6, 5), (5, 7), (7, 5), (6, 6)]:
        for _ in range(20):
            values = rng.permutation(n1 + n2).astype(float)
            exact = mann_whitney(values[:n1], values[n1:], method="exact").p_value
            approx = mann_whitney(values[:n1], values[n1:], method="asymptotic").p_value
            assert abs(exact - approx) < 0.05


def test_mann_whitney_exact_and_normal_agree_for_ten_per_class(rng):
    for _ in range(200):
        values = rng.permutation(20).astype(float)
        exact = mann_whitney(values[:10], values[10:], method="exact").p_value
        approx = mann_whitney(values[:10], values[10:], method="asymptotic").p_value
        assert abs(exact - approx) < 0.02


def test_mann_whitney_ties_and_degenerate():
    assert mann_whitney([1, 1, 1], [1, 1]).p_value == 1.0
    with pytest.raises(InputError):
        mann_whitney([1, 2, 2], [3, 4], method="exact")
    with pytest.raises(InputError):
        mann_whitney([], [1.0])


def test_mann_whitney_invariant_under_increasing_transform(rng):
    a, b = rng.normal(0, 1, 40), rng.normal(0.5, 1, 30)
    p = mann_whitney(a, b).p_value
    assert mann_whitney(np.exp(a), np.exp(b)).p_value == pytest.approx(p, abs=1e-9)
    assert mann_whitney(a ** 3, b ** 3).p_value == pytest.approx(p, abs=1e-9)


def test_shapiro_wilk_matches_scipy_and_refuses_bad_samples(rng):
    sample = rng.normal(size=50)
    result = shapiro_wilk(sample)
    w, p = sps.shapiro(sample)
    assert result.statistic == pytest.approx(w)
    assert result.p_value == pytest.approx(p)
    assert result.n1 == result.n2 == 50
    with pytest.raises(InputError):
        shapiro_wilk([1.0, 2.0])
    with pytest.raises(InputError):
        shapiro_wilk([3.0] * 10)


def test_levene_mean_centred(rng):
    a, b = rng.normal(0, 1, 30), rng.normal(0, 3, 40)
    result = levene(a, b)
    expected = sps.levene(a, b, center="mean")
    assert result.statistic == pytest.approx(expected.statistic)
    assert result.p_value == pytest.approx(expected.pvalue)
    with pytest.raises(InputError):
        levene([1.0, 1.0], [2.0, 2.0])
    with pytest.raises(InputError):
        levene([1.0], [2.0, 3.0])


def test_levene_flags_unequal_spread_on_repeated_samples():
    flat, spread = [1.0, 1.0, 1.0, 1.0] * 10, [0.0, 10.0, 0.0, 10.0] * 10
    assert levene(flat, spread).p_value < 0.05
    assert levene(spread, [x + 3.0 for x in spread]).p_value == pytest.approx(1.0)


def test_describe_quartiles(make_table):
    table = make_table([1, 2, 3, 4, 5, 10, 20, 30], [0, 0, 0, 0, 0, 1, 1, 1])
    quart = describe(table, 1)
    assert quart[0] == (3.0, 2.0, 4.0)
    assert quart[1] == (20.0, 15.0, 25.0)
    with pytest.raises(InputError):
        describe(make_table([1.0, 2.0], [0, 0]), 1)


def test_describe_table_columns(small_cohort):
    frame = describe_table(small_cohort)
    assert len(frame) == 38
    assert list(frame.columns[:3]) == ['feature_no', 'name', 'unit']
    assert frame['p_value'].between(0, 1).all()


def test_select_features_keeps_shifted_feature(make_table, rng):
    shifted = np.r_[rng.normal(0, 1, 100), rng.normal(2, 1, 100)]
    noise = rng.normal(0, 1, 200)
    table = make_table(np.column_stack([shifted, noise]), np.r_[np.zeros(100), np.ones(100)])
    assert 1 in select_features(table, 0.05)
    assert select_features(table, 1e-300) == []


def test_select_features_monotone_in_alpha(small_cohort):
    strict = select_features(small_cohort, 1e-12)
    loose = select_features(small_cohort, 0.05)
    assert set(strict) <= set(loose)
    assert select_features(small_cohort, 1.01) == list(small_cohort.feature_nos)


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 42, derive_seed(0, "synth"), derive_seed(42, "synth")])
def test_select_features_on_full_size_surrogate(seed):
    table = finalize(generate_synthetic(load_synthetic_spec(seed=seed)))
    selected = select_features(table, 0.05)
    clear = CATALOG.resolve_many(["PCT", "Ferritin", "D-dimer", "CRP", "ESR", "Fibrinogen", "INR",
                                  "PT", "LDH", "aPTT", "NEU", "RDW", "WBC", "eGFR", "UA", "CK",
                                  "ALT", "ALP", "Amylase", "CK-MB", "D-Bil", "Troponin", "PLT"])
    assert set(clear) <= set(selected)
    assert len(selected) >= 30


def test_correlate_constant_column_is_zero(make_table, rng):
    x = rng.normal(size=30)
    values = np.column_stack([x, 2 * x + 1, np.full(30, 4.0)])
    table = make_table(values, np.r_[np.zeros(15), np.ones(15)])
    for method in CorrelationMethod:
        report = correlate(table, method)
        assert report.constant_features == (3,)
        assert report.matrix[0, 1] == pytest.approx(1.0)
        assert report.matrix[2, 0] == 0.0
        np.testing.assert_array_equal(np.diag(report.matrix), np.ones(3))
        np.testing.assert_array_equal(report.matrix, report.matrix.T)


def test_rank_correlations_invariant_under_increasing_transforms(make_table, rng):
    values = rng.normal(size=(60, 3))
    labels = np.r_[np.zeros(30), np.ones(30)]
    base = make_table(values, labels)
    transformed = make_table(np.column_stack([np.exp(values[:, 0]), values[:, 1] ** 3, values[:, 2]]),
                             labels)
    for method in (CorrelationMethod.SPEARMAN, CorrelationMethod.KENDALL):
        np.testing.assert_allclose(correlate(base, method).matrix, correlate(transformed, method).matrix,
                                   atol=1e-9)


def test_kendall_matches_pairwise_scipy(make_table, rng):
    values = rng.integers(0, 5, size=(25, 2)).astype(float)
    table = make_table(values, np.r_[np.zeros(12), np.ones(13)])
    tau, _ = sps.kendalltau(values[:, 0], values[:, 1])
    assert correlate(table, "kendall").value(1, 2) == pytest.approx(tau)


def test_correlate_scope_uses_class_rows(make_table):
    values = np.array([[1, 1], [2, 2], [3, 3], [1, 3], [2, 2], [3, 1]], dtype=float)
    table = make_table(values, [0, 0, 0, 1, 1, 1])
    assert correlate(table, "pearson", CorrelationScope.SURVIVED).value(1, 2) == pytest.approx(1.0)
    assert correlate(table, "pearson", CorrelationScope.NON_SURVIVED).value(1, 2) == pytest.approx(-1.0)


def test_correlation_deltas_rank_and_direction(make_table, rng):
    n = 200
    x = rng.normal(size=2 * n)
    noise = rng.normal(size=2 * n)
    labels = np.r_[np.zeros(n), np.ones(n)]
    flip = np.where(labels == 0, 1.0, -1.0)
    scale = np.where(labels == 0, 0.1, 1.0)
    # feature 2 follows x in survivors and, more loosely, -x in non-survivors
    values = np.column_stack([x, flip * x + scale * noise, rng.normal(size=2 * n)])
    table = make_table(values, labels)
    deltas = correlation_deltas(table, top_k=2)
    assert len(deltas) == 2
    top = deltas[0]
    assert (top.feature_a, top.feature_b) == (1, 2)
    assert top.rho_survived > 0.9 and top.rho_nonsurvived < -0.5
    assert top.direction == Direction.DOWN
    assert correlation_deltas(table, top_k=1, direction_rule="signed")[0].direction == Direction.DOWN
    assert abs(deltas[0].delta) >= abs(deltas[1].delta)


def test_correlation_direction_rules_differ_on_sign_change(make_table, rng):
    n = 200
    x = rng.normal(size=2 * n)
    labels = np.r_[np.zeros(n), np.ones(n)]
    strength = np.where(labels == 0, -0.3, -0.9)
    y = strength * x + np.sqrt(1 - strength ** 2) * rng.normal(size=2 * n)
    table = make_table(np.column_stack([x, y]), labels)
    # stronger negative correlation among non-survivors
    assert correlation_deltas(table, direction_rule="magnitude")[0].direction == Direction.UP
    assert correlation_deltas(table, direction_rule="signed")[0].direction == Direction.DOWN


def test_correlation_deltas_need_three_rows_per_class(make_table):
    table = make_table([[1, 2], [2, 1], [3, 3], [4, 4], [5, 1]], [0, 0, 0, 1, 1])
    with pytest.raises(InputError):
        correlation_deltas(table)


def test_diagnosis_and_normality_reports(small_cohort):
    diag = diagnosis_correlations(small_cohort)
    assert list(diag.columns) == ['feature_no', 'name', 'pearson', 'spearman', 'kendall']
    assert diag['spearman'].abs().max() <= 1.0
    report = normality_report(small_cohort)
    assert len(report) == 38
    pct = report[report['name'] == 'PCT'].iloc[0]
    # survivors' PCT is constant in the surrogate
    assert np.isnan(pct['shapiro_w_surv'])
    assert 0 < pct['shapiro_p_nonsurv'] <= 1
