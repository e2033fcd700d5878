import numpy as np
import pytest

from rbvrisk.core.exceptions import InputError
from rbvrisk.data_management import finalize, impute_mean, load_csv, winsorize, write_csv
from rbvrisk.data_models import CATALOG, FeatureTable, WinsorConfig


def _write(tmp_path, text, name="cohort.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_catalog_has_38_numbered_features():
    assert len(CATALOG) == 38
    assert CATALOG.name(35) == "PCT"
    assert CATALOG.name(31) == "Ferritin"
    assert CATALOG.resolve("ferritin").feature_no == 31
    assert CATALOG.resolve("D-Bil. (mg/dL)").feature_no == 7
    assert CATALOG.resolve_many(["pct", 30, "31"]) == [35, 30, 31]


def test_catalog_rejects_unknown_name():
    with pytest.raises(InputError):
        CATALOG.resolve("cholesterol")


def test_load_csv_resolves_headers_and_flags_missing(tmp_path):
    path = _write(tmp_path, "PCT (ng/mL),ferritin,Outcome\n0.1,300,survived\nNA,,non-survived\n5.2,410,1\n")
    table = load_csv(path)
    assert table.feature_nos == (31, 35)
    assert list(table.labels) == [0, 1, 1]
    assert table.missing_mask[1].tolist() == [True, True]
    assert np.isnan(table.values[1]).all()
    assert table.values[2].tolist() == [410.0, 5.2]
    assert not table.is_finalized


def test_load_csv_reports_bad_cell(tmp_path):
    path = _write(tmp_path, "PCT,outcome\n0.1,0\nabc,1\n")
    with pytest.raises(InputError, match="row 2"):
        load_csv(path)


def test_load_csv_rejects_unknown_column_and_label(tmp_path):
    with pytest.raises(InputError):
        load_csv(_write(tmp_path, "PCT,Cholesterol,outcome\n1,2,0\n", "a.csv"))
    with pytest.raises(InputError):
        load_csv(_write(tmp_path, "PCT,outcome\n1,dead\n", "b.csv"))
    with pytest.raises(InputError):
        load_csv(str(tmp_path / "missing.csv"))


def test_write_csv_output_loads_back(tmp_path, make_table):
    table = make_table([[0.1, 1e-7], [2.5, 1234.5678]], [0, 1], feature_nos=(30, 35))
    path = write_csv(table, str(tmp_path / "out.csv"))
    loaded = load_csv(path)
    assert loaded.feature_nos == table.feature_nos
    np.testing.assert_array_equal(loaded.values, table.values)
    np.testing.assert_array_equal(loaded.labels, table.labels)


def test_impute_mean_fills_with_observed_mean():
    values = np.array([[1.0, np.nan], [3.0, 4.0], [np.nan, 8.0]])
    table = FeatureTable(values=values, labels=[0, 1, 0], missing_mask=np.isnan(values),
                         feature_nos=(1, 2))
    imputed = impute_mean(table)
    assert imputed.values.tolist() == [[1.0, 6.0], [3.0, 4.0], [2.0, 8.0]]
    assert imputed.missing_mask.tolist() == table.missing_mask.tolist()
    np.testing.assert_array_equal(impute_mean(imputed).values, imputed.values)


def test_impute_mean_rejects_empty_column():
    values = np.array([[1.0, np.nan], [2.0, np.nan]])
    table = FeatureTable(values=values, labels=[0, 1], missing_mask=np.isnan(values),
                         feature_nos=(1, 2))
    with pytest.raises(InputError):
        impute_mean(table)


def test_winsorize_clips_to_percentiles_and_is_idempotent(make_table):
    column = np.arange(101, dtype=float)
    table = make_table(column, np.r_[np.zeros(50), np.ones(51)])
    clipped = winsorize(table, 5, 95)
    assert clipped.values.min() == 5.0
    assert clipped.values.max() == 95.0
    np.testing.assert_array_equal(winsorize(clipped, 5, 95).values, clipped.values)


def test_winsorize_full_range_is_identity_and_bounds_validated(make_table):
    table = make_table([1.0, 50.0, 1000.0], [0, 1, 0])
    assert winsorize(table, 0, 100) is table
    with pytest.raises(InputError):
        winsorize(table, 60, 40)


def test_finalize_winsorizes_before_imputing():
    values = np.array([[0.0], [1.0], [2.0], [np.nan], [100.0]])
    table = FeatureTable(values=values, labels=[0, 0, 1, 1, 0], missing_mask=np.isnan(values),
                         feature_nos=(35,))
    result = finalize(table, WinsorConfig(lower_pct=0, upper_pct=75))
    # 75th percentile of the observed cells {0, 1, 2, 100} is 26.5
    assert result.values[4, 0] == pytest.approx(26.5)
    assert result.values[3, 0] == pytest.approx((0 + 1 + 2 + 26.5) / 4)
    assert result.is_finalized


def test_feature_table_validation():
    with pytest.raises(InputError):
        FeatureTable(values=[[1.0]], labels=[2], missing_mask=[[False]], feature_nos=(1,))
    with pytest.raises(InputError):
        FeatureTable(values=[[1.0, 2.0]], labels=[0], missing_mask=[[False, False]], feature_nos=(1, 1))
    with pytest.raises(InputError):
        FeatureTable(values=[[1.0]], labels=[0], missing_mask=[[False]], feature_nos=(39,))


def test_feature_table_is_read_only(make_table):
    table = make_table([1.0, 2.0], [0, 1])
    with pytest.raises(ValueError):
        table.values[0, 0] = 5.0
