"""
Data Management Module for rbvrisk

This module implements ingestion and preparation of cohort tables: CSV import
and export, mean imputation of missing cells, and percentile clipping of
outliers (winsorization).
"""

import logging
import os
from typing import Optional, Union

import numpy as np
import pandas as pd

from .core.exceptions import InputError
from .data_models import CATALOG, FeatureTable, WinsorConfig, WinsorLimits

logger = logging.getLogger(__name__)

MISSING_TOKENS = frozenset({"", "na", "nan", "null"})
LABEL_TOKENS = {
    "0": 0,
    "1": 1,
    "survived": 0,
    "non-survived": 1,
}

PathLike = Union[str, os.PathLike]


def _parse_label(token: str, row: int) -> int:
    key = token.strip().lower()
    if key not in LABEL_TOKENS:
        raise InputError(f"Label '{token}' at data row {row + 1} is not 0/1 or survived/non-survived")
    return LABEL_TOKENS[key]


def load_csv(path: PathLike, label_column: str = "outcome") -> FeatureTable:
    """
    Load a cohort table from CSV.

    Feature headers are resolved against the catalog (case-insensitive) and
    the columns reordered to catalog order. Missing cells are flagged and left
    as NaN; imputation is a separate step.

    Args:
        path: CSV file with a header row
        label_column: Name of the outcome column

    Returns:
        Feature table, not yet imputed

    Raises:
        InputError: On an unreadable file, unknown column, bad cell or label
    """
    if not os.path.exists(path):
        raise InputError(f"CSV file '{path}' not found")

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8",
                            comment="#", skipinitialspace=True)
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise InputError(f"Cannot read CSV file '{path}': {exc}") from exc

    headers = [str(c).strip() for c in frame.columns]
    frame.columns = headers
    matches = [h for h in headers if h.lower() == label_column.lower()]
    if not matches:
        raise InputError(f"Label column '{label_column}' not found in '{path}'")
    label_header = matches[0]

    feature_headers = [h for h in headers if h != label_header]
    if not feature_headers:
        raise InputError(f"No feature columns in '{path}'")
    numbers = [CATALOG.resolve(h).feature_no for h in feature_headers]
    if len(set(numbers)) != len(numbers):
        raise InputError(f"Duplicate feature columns in '{path}'")

    order = sorted(range(len(numbers)), key=lambda i: numbers[i])
    n_rows = len(frame)
    values = np.full((n_rows, len(order)), np.nan)
    mask = np.zeros((n_rows, len(order)), dtype=bool)

    for out_col, in_col in enumerate(order):
        header = feature_headers[in_col]
        tokens = frame[header].str.strip()
        missing = tokens.str.lower().isin(MISSING_TOKENS).to_numpy()
        parsed = pd.to_numeric(tokens.where(~missing), errors="coerce").to_numpy(dtype=float)
        bad = ~missing & ~np.isfinite(parsed)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise InputError(
                f"Non-numeric value '{tokens.iloc[row]}' in column '{header}' at data row {row + 1}")
        values[:, out_col] = np.where(missing, np.nan, parsed)
        mask[:, out_col] = missing

    labels = np.array([_parse_label(t, i) for i, t in enumerate(frame[label_header])], dtype=np.int64)

    table = FeatureTable(
        values=values,
        labels=labels,
        missing_mask=mask,
        feature_nos=tuple(numbers[i] for i in order),
    )
    logger.info("Loaded %d rows x %d features from %s (%d missing cells)",
                table.n_rows, table.n_features, path, int(mask.sum()))
    return table


def write_csv(table: FeatureTable, path: PathLike, label_column: str = "outcome") -> str:
    """
    Write a table in the ingestion schema.

    NaN cells are written empty; floats use the shortest repr that reads back
    to the same value.

    Args:
        table: Table to export
        path: Destination file
        label_column: Name of the outcome column

    Returns:
        Path to the written file
    """
    directory = os.path.dirname(os.fspath(path))
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame = table.to_frame(label_column=label_column)
    frame.to_csv(path, index=False, na_rep="", float_format=None, encoding="utf-8",
                 lineterminator="\n")
    return os.fspath(path)


def impute_mean(table: FeatureTable) -> FeatureTable:
    """
    Replace every missing cell with the mean of its column.

    The mean is taken over the non-missing cells of both classes. The missing
    mask is preserved, so applying the function twice gives the same table.

    Raises:
        InputError: If a column has no observed value
    """
    mask = table.missing_mask
    if not mask.any():
        return table

    values = np.array(table.values)
    observed = np.where(mask, np.nan, values)
    counts = (~mask).sum(axis=0)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        names = ", ".join(table.feature_names[i] for i in empty)
        raise InputError(f"Column(s) entirely missing: {names}")

    means = np.nansum(observed, axis=0) / counts
    values[mask] = np.broadcast_to(means, values.shape)[mask]
    logger.debug("Imputed %d missing cells", int(mask.sum()))
    return table.replace_values(values)


def column_percentiles(values: np.ndarray, pct: float) -> np.ndarray:
    """Per-column percentile of the finite cells, linear interpolation between ranks."""
    return np.nanpercentile(values, pct, axis=0, method="linear")


def winsorize(table: FeatureTable, lower_pct: float = 1.0, upper_pct: float = 99.0) -> FeatureTable:
    """
    Clip each column to its [lower_pct, upper_pct] percentile range.

    Percentiles use linear interpolation on the sorted observed values;
    missing cells are ignored and stay missing. The applied limits are
    recorded on the table, so winsorizing again with the same bounds reuses
    them and leaves the table unchanged.

    Args:
        table: Table to clip
        lower_pct: Lower bound, 0 <= lower_pct < upper_pct
        upper_pct: Upper bound, <= 100

    Raises:
        InputError: On invalid percentile bounds
    """
    if not 0 <= lower_pct < upper_pct <= 100:
        raise InputError(f"Invalid percentile bounds ({lower_pct}, {upper_pct})")
    if lower_pct == 0 and upper_pct == 100:
        return table

    limits = table.winsor_limits
    if limits is None or (limits.lower_pct, limits.upper_pct) != (lower_pct, upper_pct):
        observed = np.where(table.missing_mask, np.nan, table.values)
        if (~table.missing_mask).sum(axis=0).min(initial=1) == 0:
            raise InputError("Cannot winsorize a column with no observed value")
        limits = WinsorLimits(
            lower_pct=lower_pct,
            upper_pct=upper_pct,
            lower=column_percentiles(observed, lower_pct),
            upper=column_percentiles(observed, upper_pct),
        )

    clipped = np.clip(table.values, limits.lower, limits.upper)
    # NaN cells stay NaN through np.clip
    n_changed = int(np.sum(clipped != table.values) - np.sum(np.isnan(table.values)))
    logger.debug("Winsorized %d cells at (%.3g, %.3g) percentiles", n_changed, lower_pct, upper_pct)
    return table.replace_values(clipped, winsor_limits=limits)


def finalize(table: FeatureTable, winsor: Optional[WinsorConfig] = None) -> FeatureTable:
    """
    Prepare a raw table for analysis: winsorize, then impute.

    Clipping limits are computed from observed cells before imputation.
    """
    winsor = winsor or WinsorConfig()
    clipped = winsorize(table, winsor.lower_pct, winsor.upper_pct)
    finalized = impute_mean(clipped)
    finalized.require_finalized()
    return finalized
