"""
Reporting Module for rbvrisk

This module writes the machine-readable reports of an analysis run. Result
tables are CSV files; masks, models and manifests are JSON documents. File
hashes for the manifest are SHA-256.
Every report embeds the run configuration that produced it.
"""

import hashlib
import json
import logging
import os
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .metrics import METRIC_FIELDS, ModelComparison
from .statistics import CorrelationDelta, CorrelationReport
from .sweeps import MaskGrid, SweepEntry
from .threshold_search import ThresholdSearchResult

logger = logging.getLogger(__name__)

CONFIG_PREFIX = "# run_config="
METRIC_DECIMALS = 4


def _json_default(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def compact_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=_json_default)


def sha256_file(path: str) -> str:
    """Hex SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def read_run_config(path: str) -> Optional[Dict[str, Any]]:
    """Recover the embedded run configuration of a CSV or JSON report."""
    with open(path, 'r', encoding='utf-8') as f:
        if path.endswith('.json'):
            return json.load(f).get('run_config')
        first = f.readline().rstrip("\n")
    if first.startswith(CONFIG_PREFIX):
        return json.loads(first[len(CONFIG_PREFIX):])
    return None


def read_csv_report(path: str) -> pd.DataFrame:
    """Load a CSV report, skipping the configuration line."""
    return pd.read_csv(path, skiprows=1)


class ReportGenerator:
    """
    Writes reports into one output directory.

    Args:
        report_dir: Destination directory (created if missing)
        run_config: Configuration embedded in every report
    """

    def __init__(self, report_dir: str, run_config: Optional[Dict[str, Any]] = None):
        self.report_dir = report_dir
        self.run_config = dict(run_config or {})
        os.makedirs(self.report_dir, exist_ok=True)

    def path(self, filename: str) -> str:
        return os.path.join(self.report_dir, filename)

    def write_csv(self, filename: str, frame: pd.DataFrame, round_metrics: bool = True) -> str:
        """
        Write a table with the run configuration as its first (comment) line.

        Metric columns are rounded to 4 decimals.
        """
        frame = frame.copy()
        if round_metrics:
            for column in frame.columns:
                if column in METRIC_FIELDS or str(column).startswith(('f1_', 'a_th')):
                    frame[column] = frame[column].astype(float).round(METRIC_DECIMALS)
        filepath = self.path(filename)
        with open(filepath, 'w', encoding='utf-8', newline='') as f:
            f.write(CONFIG_PREFIX + compact_json(self.run_config) + "\n")
            frame.to_csv(f, index=False, lineterminator="\n")
        logger.info("Wrote %s", filepath)
        return filepath

    def write_json(self, filename: str, data: Dict[str, Any]) -> str:
        """Write a JSON document with a top-level ``run_config`` key."""
        document = dict(data)
        document['run_config'] = self.run_config
        filepath = self.path(filename)
        with open(filepath, 'w', encoding='utf-8', newline='') as f:
            json.dump(document, f, indent=2, sort_keys=True, default=_json_default)
            f.write("\n")
        logger.info("Wrote %s", filepath)
        return filepath

    def export_correlation_deltas(self, deltas: Sequence[CorrelationDelta], filename: str) -> str:
        frame = pd.DataFrame([d.to_dict() for d in deltas],
                             columns=['no_a', 'no_b', 'name_a', 'name_b', 'rho_surv',
                                      'rho_nonsurv', 'direction'])
        return self.write_csv(filename, frame)

    def export_correlation_matrix(self, report: CorrelationReport, filename: str) -> str:
        frame = report.to_frame().reset_index().rename(columns={'index': 'feature'})
        return self.write_csv(filename, frame, round_metrics=False)

    def export_model_comparison(self, rows: Sequence[ModelComparison], filename: str) -> str:
        frame = pd.DataFrame([{'model': r.name, **r.report.metrics()} for r in rows])
        return self.write_csv(filename, frame)

    def export_sweep(self, entries: Sequence[SweepEntry], filename: str) -> str:
        return self.write_csv(filename, pd.DataFrame([e.to_row() for e in entries]))

    def export_thresholds(self, results: Sequence[ThresholdSearchResult], filename: str) -> str:
        return self.write_csv(filename, pd.DataFrame([r.to_row() for r in results]))

    def export_mask(self, mask: MaskGrid, stem: str, model_config: Dict[str, Any]) -> List[str]:
        """Write the grid as CSV and its descriptor as JSON."""
        csv_path = self.write_csv(f"{stem}.csv", mask.to_frame(), round_metrics=False)
        descriptor = mask.to_dict()
        descriptor['model'] = model_config
        descriptor['grid_file'] = os.path.basename(csv_path)
        return [csv_path, self.write_json(f"{stem}.json", descriptor)]
