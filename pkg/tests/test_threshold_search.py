import numpy as np
import pytest

from rbvrisk.core.exceptions import InputError
from rbvrisk.data_models import CATALOG, ClassLabel
from rbvrisk.metrics import ConfusionCounts, compute_metrics
from rbvrisk.sweeps import competition_ranks
from rbvrisk.synthetic import generate_synthetic, load_synthetic_spec
from rbvrisk.threshold_search import (RuleKind, ThresholdRule, candidate_thresholds, classify,
                                      search_all, search_one, search_two)


def _score(rule, values, labels):
    return compute_metrics(ConfusionCounts.from_predictions(labels, rule.predict(values))).a_th


def _brute_one(values, labels):
    candidates = candidate_thresholds(np.unique(values))
    return max(_score(ThresholdRule(RuleKind.ONE, t, c), values, labels)
               for c in candidates for t in (1, 2))


def _brute_two(values, labels):
    candidates = candidate_thresholds(np.unique(values))
    return max(_score(ThresholdRule(RuleKind.TWO, t, c1, c2), values, labels)
               for i, c1 in enumerate(candidates) for c2 in candidates[i:] for t in (1, 2))


def _random_dataset(rng, n):
    values = rng.integers(0, n // 3, size=n).astype(float)
    labels = rng.integers(0, 2, size=n)
    labels[:2] = [0, 1]
    return values, labels


def test_classify_boundaries():
    one = ThresholdRule(RuleKind.ONE, 2, 0.2)
    assert classify(one, 0.2) == ClassLabel.NON_SURVIVED
    assert classify(one, 0.2 - 1e-9) == ClassLabel.SURVIVED
    band = ThresholdRule(RuleKind.TWO, 2, 0.2, 5.2)
    assert classify(band, 10.0) == ClassLabel.SURVIVED
    assert classify(band, 5.2) == ClassLabel.NON_SURVIVED
    everything = ThresholdRule(RuleKind.ONE, 1, -1e300)
    assert everything.predict([-5.0, 0.0, 1e12]).tolist() == [0, 0, 0]
    with pytest.raises(InputError):
        classify(one, float("nan"))


def test_rule_validation():
    with pytest.raises(InputError):
        ThresholdRule(RuleKind.ONE, 3, 1.0)
    with pytest.raises(InputError):
        ThresholdRule(RuleKind.TWO, 1, 2.0, 1.0)
    with pytest.raises(InputError):
        ThresholdRule(RuleKind.ONE, 1, 1.0, 2.0)


def test_candidates_cover_the_data_range():
    np.testing.assert_allclose(candidate_thresholds(np.array([1.0, 2.0, 4.0])), [0.5, 1.5, 3.0, 5.0])
    np.testing.assert_allclose(candidate_thresholds(np.array([3.0])), [2.5, 3.5])


def test_search_one_separable():
    result = search_one([1, 2, 3, 4], [0, 0, 1, 1])
    assert result.rule.rule_type == 2
    assert result.rule.v_th == 2.5
    assert result.a_th == 1.0
    assert result.report.f1_squared == 1.0


def test_search_two_interior_band():
    result = search_two([1, 2, 3, 4, 5], [0, 1, 1, 1, 0])
    assert result.rule.rule_type == 2
    assert (result.rule.v_th1, result.rule.v_th2) == (1.5, 4.5)
    assert result.a_th == 1.0


def test_search_one_matches_brute_force(rng):
    for _ in range(200):
        values, labels = _random_dataset(rng, 100)
        result = search_one(values, labels)
        assert result.a_th == pytest.approx(_brute_one(values, labels), abs=1e-12)
        assert _score(result.rule, values, labels) == pytest.approx(result.a_th, abs=1e-12)


def test_search_two_matches_brute_force(rng):
    for _ in range(200):
        values, labels = _random_dataset(rng, 60)
        result = search_two(values, labels)
        assert result.a_th == pytest.approx(_brute_two(values, labels), abs=1e-12)
        assert _score(result.rule, values, labels) == pytest.approx(result.a_th, abs=1e-12)


def test_two_thresholds_never_lose_to_one(rng):
    for _ in range(100):
        values, labels = _random_dataset(rng, 80)
        assert search_two(values, labels).a_th >= search_one(values, labels).a_th - 1e-12


def test_label_swap_flips_rule_type(rng):
    for _ in range(50):
        values, labels = _random_dataset(rng, 60)
        for search in (search_one, search_two):
            result = search(values, labels)
            swapped = search(values, 1 - labels)
            assert swapped.a_th == pytest.approx(result.a_th, abs=1e-12)
            flipped = ThresholdRule(result.rule.kind, 3 - result.rule.rule_type,
                                    result.rule.v_th1, result.rule.v_th2)
            assert _score(flipped, values, 1 - labels) == pytest.approx(result.a_th, abs=1e-12)


def test_increasing_transform_keeps_the_partition(rng):
    values = rng.normal(size=120)
    labels = (values + rng.normal(size=120) > 0.3).astype(int)
    for search in (search_one, search_two):
        base = search(values, labels)
        transformed = search(np.exp(values), labels)
        assert transformed.a_th == base.a_th
        np.testing.assert_array_equal(base.rule.predict(values),
                                      transformed.rule.predict(np.exp(values)))


def test_snapping_moves_thresholds_onto_observed_values():
    one = search_one([1, 2, 3, 4], [0, 0, 1, 1], snap_to_data=True)
    assert one.rule.v_th == 3.0
    assert one.a_th == 1.0
    two = search_two([1, 2, 3, 4, 5], [0, 1, 1, 1, 0], snap_to_data=True)
    assert (two.rule.v_th1, two.rule.v_th2) == (2.0, 4.0)
    np.testing.assert_array_equal(two.rule.predict([1, 2, 3, 4, 5]), [0, 1, 1, 1, 0])


def test_constant_feature_gives_chance_level():
    for search in (search_one, search_two):
        result = search([7.0] * 6, [0, 1, 0, 1, 1, 0])
        assert result.a_th == 0.5


def test_search_requires_both_classes_and_finite_values():
    with pytest.raises(InputError):
        search_one([1.0, 2.0], [1, 1])
    with pytest.raises(InputError):
        search_two([1.0, np.inf], [0, 1])
    with pytest.raises(InputError):
        search_one([1.0, 2.0], [0])


def test_search_all_treats_duplicate_columns_identically(make_table, rng):
    column = rng.normal(size=80)
    labels = (column > 0.2).astype(int)
    table = make_table(np.column_stack([column, column]), labels, feature_nos=(35, 31))
    results = search_all(table, RuleKind.TWO, balance=None)
    assert [r.rule.feature for r in results] == [31, 35]
    a, b = results
    assert (a.rule.v_th1, a.rule.v_th2, a.rule.rule_type) == (b.rule.v_th1, b.rule.v_th2, b.rule.rule_type)
    assert a.a_th == b.a_th == 1.0
    assert a.to_row()['name'] == "Ferritin"


def test_search_all_balances_first(small_cohort):
    results = search_all(small_cohort, RuleKind.ONE, n_jobs=2)
    assert len(results) == 38
    assert all(r.report.counts.total == 600 for r in results)


@pytest.mark.slow
def test_surrogate_cohort_puts_pct_and_ferritin_on_top():
    table = generate_synthetic(load_synthetic_spec(seed=0))
    results = search_all(table, RuleKind.TWO)
    ranks = dict(zip((r.rule.feature for r in results),
                     competition_ranks([r.report.f1_squared for r in results])))
    assert ranks[CATALOG.resolve("PCT").feature_no] <= 3
    assert ranks[CATALOG.resolve("Ferritin").feature_no] <= 3
