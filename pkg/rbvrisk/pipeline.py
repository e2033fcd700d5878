"""
End-to-end analysis run.

Executes ingest, preparation, descriptive statistics, feature selection,
correlation analysis, model comparison, single and pair sweeps, threshold
searches and decision masks, writing one report per result table plus a
manifest with the configuration and per-file SHA-256 hashes.
"""

import json
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, Iterator, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from .classifiers import fit_classifier
from .core.config import settings
from .core.exceptions import InputError, StageError
from .core.seeding import derive_seed
from .data_management import finalize, load_csv
from .data_models import (BaselineConfig, EvaluationProtocol, EvaluationScheme, FeatureTable,
                          HGBConfig, ModelKind, ModelSpec, SmoteConfig, WinsorConfig)
from .metrics import compare_models
from .reporting import ReportGenerator, sha256_file
from .resampling import smote_balance
from .statistics import (CorrelationMethod, correlate, correlation_deltas, describe_table,
                         diagnosis_correlations, normality_report, select_features)
from .sweeps import (compare_balancing, make_mask, summarize_significant, sweep_pairs,
                     sweep_single)
from .synthetic import generate_synthetic, load_synthetic_spec
from .threshold_search import RuleKind, search_all

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class RunConfig(BaseModel):
    """Everything a run depends on; embedded in every report."""
    model_config = ConfigDict(frozen=True, extra='forbid')

    input_path: Optional[str] = Field(None, description="Cohort CSV; None uses the synthetic generator")
    synthetic_spec: Optional[str] = Field(None, description="Marginals file; None uses the bundled one")
    n_survived: int = Field(2364, ge=1)
    n_nonsurvived: int = Field(233, ge=1)
    label_column: str = "outcome"
    output_dir: str = Field(default_factory=lambda: settings.OUTPUT_DIR)
    seed: int = Field(0, ge=0, description="Root seed of every random stream")
    alpha: float = Field(0.05, gt=0, le=1, description="Mann-Whitney selection level")
    winsor: WinsorConfig = Field(default_factory=WinsorConfig)
    smote_k: int = Field(5, ge=1)
    smote_ratio: float = Field(1.0, gt=0, le=1.0)
    hgb: HGBConfig = Field(default_factory=HGBConfig)
    baseline: BaselineConfig = Field(default_factory=BaselineConfig)
    scheme: EvaluationScheme = EvaluationScheme.CV
    folds: int = Field(5, ge=2)
    paper_mode: bool = False
    no_balance: bool = False
    snap_to_data: bool = False
    top_k_pairs: int = Field(40, ge=1)
    top_k_deltas: int = Field(41, ge=1)
    significance_cutoff: float = Field(0.5, ge=0)
    direction_rule: str = Field("magnitude", pattern="^(magnitude|signed)$")
    mask_points: int = Field(200, ge=2)
    supplementary: bool = True
    n_jobs: int = Field(default_factory=lambda: settings.N_JOBS, ge=-1)

    @classmethod
    def from_file(cls, path: str, **overrides: Any) -> 'RunConfig':
        """Load a JSON config file; keyword overrides take precedence."""
        if not os.path.exists(path):
            raise InputError(f"Config file '{path}' not found")
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as exc:
            raise InputError(f"Config file '{path}' is not valid JSON: {exc}") from exc
        data.update(overrides)
        return cls(**data)

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode='json')

    def smote(self) -> SmoteConfig:
        return SmoteConfig(k_neighbors=self.smote_k, target_ratio=self.smote_ratio,
                           seed=derive_seed(self.seed, "smote"))

    def protocol(self) -> EvaluationProtocol:
        return EvaluationProtocol(scheme=self.scheme, folds=self.folds,
                                  seed=derive_seed(self.seed, "folds"),
                                  paper_mode=self.paper_mode, balance=not self.no_balance,
                                  smote=self.smote())

    def model_spec(self, kind: ModelKind = ModelKind.HGB) -> ModelSpec:
        return ModelSpec(kind=kind, hgb=self.hgb, baseline=self.baseline)


@dataclass
class Artifact:
    name: str
    files: List[str]
    primary: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'primary': self.primary,
            'files': [{'path': os.path.basename(p), 'sha256': sha256_file(p)} for p in self.files],
        }


@dataclass
class PipelineResult:
    manifest_path: str
    manifest: Dict[str, Any]
    artifacts: List[Artifact] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.manifest.get('status') == 'ok'


def manifest_timestamp() -> str:
    """ISO-8601 UTC time, taken from SOURCE_DATE_EPOCH when set."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        moment = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    else:
        moment = datetime.now(timezone.utc)
    return moment.replace(microsecond=0).isoformat()


def load_input(config: RunConfig) -> FeatureTable:
    """Read the cohort CSV or draw the synthetic surrogate."""
    if config.input_path:
        return load_csv(config.input_path, label_column=config.label_column)
    spec = load_synthetic_spec(config.synthetic_spec, n_survived=config.n_survived,
                               n_nonsurvived=config.n_nonsurvived,
                               seed=derive_seed(config.seed, "synth"))
    return generate_synthetic(spec)


class PipelineRunner:
    """Runs the stages in order and records what each one wrote."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.reports = ReportGenerator(config.output_dir, config.to_dict())
        self.artifacts: List[Artifact] = []
        self.selected: List[int] = []
        self.protocol = config.protocol()
        self.spec = config.model_spec()

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        logger.info("Stage %s started", name)
        try:
            yield
        except StageError:
            raise
        except InputError as exc:
            if name == "ingest":
                raise
            raise StageError(name, exc) from exc
        except Exception as exc:
            raise StageError(name, exc) from exc
        logger.info("Stage %s finished", name)

    def add(self, name: str, files, primary: bool = True) -> None:
        files = [files] if isinstance(files, str) else list(files)
        self.artifacts.append(Artifact(name=name, files=files, primary=primary))

    def run(self) -> FeatureTable:
        cfg = self.config
        reports = self.reports
        balance = None if cfg.no_balance else cfg.smote()

        with self.stage("ingest"):
            raw = load_input(cfg)
        with self.stage("prepare"):
            table = finalize(raw, cfg.winsor)

        with self.stage("describe"):
            self.add("table3", reports.write_csv("table3_descriptive.csv", describe_table(table)))
            if cfg.supplementary:
                self.add("normality", reports.write_csv(
                    "normality_report.csv", normality_report(table, seed=derive_seed(cfg.seed, "normality"))),
                    primary=False)

        with self.stage("select"):
            self.selected = select_features(table, cfg.alpha)
            if len(self.selected) < 2:
                raise InputError(f"Only {len(self.selected)} feature(s) pass alpha={cfg.alpha}; need 2")
            selected = table.select_features(self.selected)

        with self.stage("correlate"):
            deltas = correlation_deltas(table, cfg.top_k_deltas, cfg.direction_rule)
            self.add("table2", reports.export_correlation_deltas(deltas, "table2_correlation_deltas.csv"))
            if cfg.supplementary:
                for method in CorrelationMethod:
                    self.add(f"correlation_{method.value}", reports.export_correlation_matrix(
                        correlate(table, method), f"correlation_{method.value}.csv"), primary=False)
                self.add("diagnosis_correlations", reports.write_csv(
                    "diagnosis_correlations.csv", diagnosis_correlations(table), round_metrics=False),
                    primary=False)

        with self.stage("eval-models"):
            specs = [cfg.model_spec(kind) for kind in ModelKind]
            rows = compare_models(selected, specs, self.protocol, n_jobs=cfg.n_jobs)
            self.add("table4", reports.export_model_comparison(rows, "table4_models.csv"))

        with self.stage("sweep-single"):
            singles = sweep_single(selected, self.protocol, self.spec, n_jobs=cfg.n_jobs)
            self.add("tableA1", reports.export_sweep(singles, "tableA1_single_features.csv"))

        with self.stage("sweep-pairs"):
            pairs = sweep_pairs(selected, self.protocol, cfg.top_k_pairs, self.spec, n_jobs=cfg.n_jobs)
            self.add("table6", reports.export_sweep(pairs, "table6_feature_pairs.csv"))

        with self.stage("threshold"):
            one = search_all(table, RuleKind.ONE, balance, cfg.snap_to_data, n_jobs=cfg.n_jobs)
            two = search_all(table, RuleKind.TWO, balance, cfg.snap_to_data, n_jobs=cfg.n_jobs)
            self.add("tableA2", reports.export_thresholds(one, "tableA2_one_threshold.csv"))
            self.add("tableA3", reports.export_thresholds(two, "tableA3_two_threshold.csv"))
            summary = summarize_significant(singles, one, two, cfg.significance_cutoff)
            self.add("table5", reports.write_csv("table5_significant_features.csv", summary))

        with self.stage("mask"):
            training = selected if balance is None else smote_balance(selected, balance)
            for stem, features in (("mask_1d", singles[0].features), ("mask_2d", pairs[0].features)):
                model = fit_classifier(training.select_features(features), self.spec)
                mask = make_mask(model, selected, features, cfg.mask_points)
                self.add(stem, reports.export_mask(mask, stem, self.spec.model_dump(mode='json')))
                if cfg.supplementary and stem == "mask_2d":
                    self.add("model_pair", model.model.save_to_file(reports.path("model_top_pair.json")),
                             primary=False)

        if cfg.supplementary:
            with self.stage("balancing"):
                self.add("balancing", reports.write_csv(
                    "balancing_comparison.csv", compare_balancing(selected, self.protocol, self.spec,
                                                                  n_jobs=cfg.n_jobs)), primary=False)
        return table

    def manifest(self, error: Optional[BaseException] = None) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            'status': 'ok' if error is None else 'failed',
            'timestamp': manifest_timestamp(),
            'seed': self.config.seed,
            'run_config': self.config.to_dict(),
            'selected_features': list(self.selected),
            'artifacts': [a.to_dict() for a in self.artifacts],
        }
        if error is not None:
            data['failed_stage'] = getattr(error, 'stage', 'ingest')
            data['error'] = str(error)
        return data


def run_pipeline(config: RunConfig) -> PipelineResult:
    """
    Run every stage and write the manifest.

    On failure the manifest records the failed stage next to the artifacts
    written so far, and the error is re-raised.

    Raises:
        InputError: If the input cannot be read
        StageError: If a later stage fails
    """
    runner = PipelineRunner(config)
    error: Optional[BaseException] = None
    try:
        runner.run()
    except (InputError, StageError) as exc:
        error = exc
        logger.error("Pipeline failed: %s", exc)

    manifest = runner.manifest(error)
    path = runner.reports.path(MANIFEST_NAME)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info("Manifest written to %s (%d artifacts)", path, len(runner.artifacts))
    if error is not None:
        raise error
    return PipelineResult(manifest_path=path, manifest=manifest, artifacts=runner.artifacts)
