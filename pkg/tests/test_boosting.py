import numpy as np
import pytest
from scipy.special import expit

from rbvrisk.boosting import (BoostedEnsemble, build_histograms, find_best_split, fit_bins,
                              fit_hgb)
from rbvrisk.core.exceptions import InputError
from rbvrisk.data_models import HGBConfig


def _brute_force_gain(values, g, h, l2):
    g_total, h_total = g.sum(), h.sum()
    parent = g_total ** 2 / (h_total + l2)
    best = 0.0
    for col in range(values.shape[1]):
        for v in np.unique(values[:, col])[:-1]:
            left = values[:, col] <= v
            gl, hl = g[left].sum(), h[left].sum()
            gr, hr = g_total - gl, h_total - hl
            best = max(best, gl ** 2 / (hl + l2) + gr ** 2 / (hr + l2) - parent)
    return best


def test_fit_bins_exact_midpoints():
    mapper = fit_bins(np.array([[1.0, 7.0], [2.0, 7.0], [3.0, 7.0], [2.0, 7.0]]))
    np.testing.assert_allclose(mapper.edges[0], [1.5, 2.5])
    assert mapper.edges[1].size == 0
    assert mapper.n_bins.tolist() == [3, 1]
    assert mapper.transform(np.array([[1.5, 7.0], [2.6, 0.0]])).tolist() == [[0, 0], [2, 0]]


def test_fit_bins_equal_frequency(rng):
    column = rng.uniform(size=(10000, 1))
    mapper = fit_bins(column, max_bins=4)
    counts = np.bincount(mapper.transform(column)[:, 0], minlength=4)
    assert counts.size == 4
    assert np.all(np.abs(counts - 2500) <= 100)


def test_fit_bins_validation():
    with pytest.raises(InputError):
        fit_bins(np.ones((3, 1)), max_bins=1)
    with pytest.raises(InputError):
        fit_bins(np.empty((0, 2)))
    mapper = fit_bins(np.ones((3, 2)))
    with pytest.raises(InputError):
        mapper.transform(np.ones((3, 3)))


def test_root_split_matches_brute_force(rng):
    l2 = 1.0
    for _ in range(50):
        values = rng.integers(0, 6, size=(20, 3)).astype(float)
        g = rng.normal(size=20)
        h = rng.uniform(0.05, 0.25, size=20)
        mapper = fit_bins(values)
        binned_t = np.ascontiguousarray(mapper.transform(values).T)
        samples = np.arange(20, dtype=np.int64)
        hist = build_histograms(binned_t, samples, g, h, int(mapper.n_bins.max()))
        gain, col, *_ = find_best_split(hist[0], hist[1], hist[2], mapper.n_bins,
                                        np.arange(3, dtype=np.int64), g.sum(), h.sum(), 20,
                                        l2, 1, 0.0)
        expected = _brute_force_gain(values, g, h, l2)
        if expected > 0:
            assert gain == pytest.approx(expected, abs=1e-9)
        else:
            assert col == -1


def test_histograms_count_every_row(rng):
    values = rng.integers(0, 4, size=(30, 2)).astype(float)
    mapper = fit_bins(values)
    binned_t = np.ascontiguousarray(mapper.transform(values).T)
    g, h = rng.normal(size=30), np.full(30, 0.25)
    sum_g, sum_h, count = build_histograms(binned_t, np.arange(30, dtype=np.int64), g, h, 4)
    assert count.sum(axis=1).tolist() == [30, 30]
    np.testing.assert_allclose(sum_g.sum(axis=1), [g.sum(), g.sum()])
    np.testing.assert_allclose(sum_h.sum(axis=1), [7.5, 7.5])


def test_separable_feature_one_tree(make_table):
    table = make_table(np.arange(10, dtype=float), [0] * 5 + [1] * 5)
    model = fit_hgb(table, HGBConfig(max_iter=1, min_samples_leaf=1))
    assert model.n_trees == 1
    tree = model.trees[0]
    assert tree.n_leaves == 2
    assert tree.node(0).threshold == pytest.approx(4.5)
    assert tree.node(0).feature_no == 1
    np.testing.assert_array_equal(model.predict(table), table.labels)


def test_xor_quadrants_are_learned(make_table):
    corners = [((0.0, 0.0), 0), ((0.0, 1.0), 1), ((1.0, 0.0), 1), ((1.0, 1.0), 0)]
    values = np.vstack([np.tile(point, (50, 1)) for point, _ in corners])
    labels = np.repeat([label for _, label in corners], 50)
    table = make_table(values, labels)
    model = fit_hgb(table, HGBConfig(max_iter=20))
    assert model.n_trees >= 1
    root = model.trees[0].node(0)
    assert root.gain == pytest.approx(0.0, abs=1e-12)
    assert model.trees[0].n_leaves == 4
    np.testing.assert_array_equal(model.predict(table), labels)


def test_xor_with_unequal_clusters(make_table):
    blocks = [((0.0, 0.0), 0, 10), ((0.0, 1.0), 1, 5), ((1.0, 0.0), 1, 8), ((1.0, 1.0), 0, 12)]
    values = np.vstack([np.tile(point, (n, 1)) for point, _, n in blocks])
    labels = np.concatenate([np.full(n, label) for _, label, n in blocks])
    table = make_table(values, labels)
    model = fit_hgb(table, HGBConfig(max_iter=20, min_samples_leaf=1))
    np.testing.assert_array_equal(model.predict(table), labels)


def test_newton_leaf_value(make_table):
    table = make_table([0.0, 1.0], [0, 1])
    model = fit_hgb(table, HGBConfig(max_iter=1, learning_rate=1.0, l2_regularization=0.0,
                                     min_samples_leaf=1))
    assert model.base_score == 0.0
    np.testing.assert_allclose(model.predict_proba(table), [expit(-2.0), expit(2.0)])


def test_training_loss_is_non_increasing(small_cohort):
    model = fit_hgb(small_cohort, HGBConfig(max_iter=30, learning_rate=0.1, l2_regularization=1.0))
    losses = np.asarray(model.training_loss_)
    assert losses.size == model.n_trees + 1
    assert np.all(np.diff(losses) <= 1e-12)
    assert losses[-1] < losses[0]


def test_no_split_gives_prior_model(make_table):
    table = make_table(np.full((6, 2), 3.0), [0, 1, 0, 1, 0, 1])
    model = fit_hgb(table, HGBConfig(min_samples_leaf=1))
    assert model.n_trees == 0
    np.testing.assert_allclose(model.predict_proba(table), 0.5)
    assert model.predict(table).tolist() == [1] * 6


def test_min_samples_leaf_is_respected(small_cohort):
    model = fit_hgb(small_cohort, HGBConfig(max_iter=5, min_samples_leaf=25))
    for tree in model.trees:
        leaves = [node for node in tree.nodes() if node.is_leaf]
        assert len(leaves) <= 31
        assert min(node.n_samples for node in leaves) >= 25


def test_max_depth_limits_trees(small_cohort):
    model = fit_hgb(small_cohort, HGBConfig(max_iter=5, max_depth=2, min_samples_leaf=5))
    assert all(tree.depth() <= 2 for tree in model.trees)


def test_affine_rescaling_does_not_change_predictions(make_table, rng):
    values = rng.normal(size=(200, 2))
    labels = (values[:, 0] + 0.5 * rng.normal(size=200) > 0).astype(int)
    config = HGBConfig(max_iter=10, min_samples_leaf=5)
    base = fit_hgb(make_table(values, labels), config)
    scaled_values = values * 1000.0 - 3.0
    scaled = fit_hgb(make_table(scaled_values, labels), config)
    np.testing.assert_array_equal(base.predict_proba(values), scaled.predict_proba(scaled_values))


def test_probability_is_monotone_along_a_monotone_feature(make_table, rng):
    x = np.repeat(np.arange(40, dtype=float), 5)
    values = np.column_stack([x, rng.normal(size=x.size)])
    model = fit_hgb(make_table(values, (x >= 20).astype(int)), HGBConfig(max_iter=20))
    grid = np.linspace(-5.0, 45.0, 101)
    rows = np.column_stack([grid, np.full(grid.size, np.median(values[:, 1]))])
    proba = model.predict_proba(rows)
    assert np.all(np.diff(proba) >= 0.0)
    assert proba[0] < 0.5 < proba[-1]


def test_increasing_transform_does_not_change_predictions_with_exact_bins(make_table, rng):
    values = rng.integers(0, 50, size=(300, 2)) / 10.0
    labels = (values.sum(axis=1) + rng.normal(size=300) > 5.0).astype(int)
    config = HGBConfig(max_iter=10, min_samples_leaf=5)
    base = fit_hgb(make_table(values, labels), config)
    transformed = fit_hgb(make_table(np.exp(values), labels), config)
    np.testing.assert_array_equal(base.predict_proba(values),
                                  transformed.predict_proba(np.exp(values)))


def test_model_file_reloads_with_identical_predictions(small_cohort, tmp_path):
    model = fit_hgb(small_cohort, HGBConfig(max_iter=10))
    path = model.save_to_file(tmp_path / "model.json")
    loaded = BoostedEnsemble.load_from_file(path)
    assert loaded.feature_nos == model.feature_nos
    np.testing.assert_array_equal(loaded.predict_proba(small_cohort), model.predict_proba(small_cohort))
    with pytest.raises(InputError):
        BoostedEnsemble.load_from_file(tmp_path / "absent.json")


def test_training_is_deterministic(small_cohort):
    config = HGBConfig(max_iter=15)
    a = fit_hgb(small_cohort, config)
    b = fit_hgb(small_cohort, config)
    assert a.training_loss_ == b.training_loss_
    np.testing.assert_array_equal(a.decision_function(small_cohort), b.decision_function(small_cohort))


def test_fit_hgb_rejects_single_class(make_table):
    with pytest.raises(InputError):
        fit_hgb(make_table([1.0, 2.0, 3.0], [1, 1, 1]))
