"""
Command-line interface.

Every result table is available as its own subcommand; ``pipeline`` runs them
all. Settings resolve as: command-line flags, then the JSON file given with
``--config``, then defaults.
"""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from .classifiers import fit_classifier
from .core.config import settings
from .core.exceptions import InputError, StageError
from .core.logging import setup_logging
from .data_management import finalize, write_csv
from .data_models import CATALOG, FeatureTable, ModelKind
from .metrics import compare_models, evaluate
from .pipeline import RunConfig, load_input, run_pipeline
from .reporting import ReportGenerator
from .resampling import smote_balance
from .statistics import (CorrelationMethod, CorrelationScope, correlate, correlation_deltas,
                         describe_table, select_features)
from .sweeps import make_mask, sweep_pairs, sweep_single
from .threshold_search import RuleKind, search_all

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_STAGE = 3

# command-line dest -> RunConfig field
CONFIG_FLAGS = {
    'input': 'input_path',
    'spec': 'synthetic_spec',
    'n_survived': 'n_survived',
    'n_nonsurvived': 'n_nonsurvived',
    'label_column': 'label_column',
    'output_dir': 'output_dir',
    'seed': 'seed',
    'alpha': 'alpha',
    'k': 'smote_k',
    'ratio': 'smote_ratio',
    'scheme': 'scheme',
    'folds': 'folds',
    'paper_mode': 'paper_mode',
    'no_balance': 'no_balance',
    'snap_to_data': 'snap_to_data',
    'top_k': 'top_k_pairs',
    'n_points': 'mask_points',
    'direction_rule': 'direction_rule',
    'no_supplementary': 'supplementary',
    'n_jobs': 'n_jobs',
}
HGB_FLAGS = ('max_bins', 'learning_rate', 'max_iter', 'max_leaves', 'l2_regularization',
             'min_samples_leaf', 'max_depth')
BASELINE_FLAGS = ('knn_k', 'dt_max_depth')
WINSOR_FLAGS = {'winsor_lower': 'lower_pct', 'winsor_upper': 'upper_pct'}


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--input", help="Cohort CSV (default: synthetic surrogate)")
    common.add_argument("--spec", help="Synthetic marginals file (default: bundled)")
    common.add_argument("--n-survived", type=int)
    common.add_argument("--n-nonsurvived", type=int)
    common.add_argument("--label-column")
    common.add_argument("--output-dir", help=f"Report directory (default: {settings.OUTPUT_DIR})")
    common.add_argument("--seed", type=int, help="Root seed")
    common.add_argument("--n-jobs", type=int, help="Parallel workers")
    common.add_argument("--winsor-lower", type=float)
    common.add_argument("--winsor-upper", type=float)
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--quiet", action="store_true")
    verbosity.add_argument("--verbose", action="store_true")
    return common


def _protocol_parser() -> argparse.ArgumentParser:
    proto = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    proto.add_argument("--k", type=int, help="SMOTE neighbours")
    proto.add_argument("--ratio", type=float, help="SMOTE minority/majority target")
    proto.add_argument("--scheme", choices=["cv", "train", "holdout"])
    proto.add_argument("--folds", type=int)
    proto.add_argument("--paper-mode", action="store_true",
                       help="Balance the full table before splitting")
    proto.add_argument("--no-balance", action="store_true")
    proto.add_argument("--alpha", type=float, help="Feature selection level")
    proto.add_argument("--max-bins", type=int)
    proto.add_argument("--learning-rate", type=float)
    proto.add_argument("--max-iter", type=int)
    proto.add_argument("--max-leaves", type=int)
    proto.add_argument("--l2-regularization", "--l2", type=float, dest="l2_regularization")
    proto.add_argument("--min-samples-leaf", type=int)
    proto.add_argument("--max-depth", type=int)
    proto.add_argument("--knn-k", type=int)
    proto.add_argument("--dt-max-depth", type=int)
    return proto


def build_parser() -> argparse.ArgumentParser:
    common, proto = _common_parser(), _protocol_parser()
    parser = argparse.ArgumentParser(prog="rbvrisk",
                                     description="Mortality risk analysis of routine blood values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="Load, winsorize and impute a CSV")
    p.add_argument("--output", required=True)

    p = sub.add_parser("synth", parents=[common], help="Draw a synthetic cohort")
    p.add_argument("--output", required=True)

    sub.add_parser("describe", parents=[common], help="Per-class quartiles and p-values")
    sub.add_parser("select", parents=[common, proto], help="Mann-Whitney feature selection")

    p = sub.add_parser("correlate", parents=[common], help="Correlation matrices and class deltas")
    p.add_argument("--method", choices=[m.value for m in CorrelationMethod], default="spearman")
    p.add_argument("--scope", choices=[s.value for s in CorrelationScope], default="all")
    p.add_argument("--deltas", action="store_true", help="Per-class Spearman change report")
    p.add_argument("--top-k-deltas", type=int, default=41)
    p.add_argument("--direction-rule", choices=["magnitude", "signed"], default=argparse.SUPPRESS)

    p = sub.add_parser("balance", parents=[common, proto], help="SMOTE-balance a CSV")
    p.add_argument("--output", required=True)

    p = sub.add_parser("train", parents=[common, proto], help="Train and evaluate one model")
    p.add_argument("--model", choices=[k.value for k in ModelKind], default="hgb")
    p.add_argument("--features", default="all-selected",
                   help="Comma-separated names/numbers or 'all-selected'")

    sub.add_parser("eval-models", parents=[common, proto], help="Compare the four classifiers")

    p = sub.add_parser("sweep", parents=[common, proto], help="Single-feature or pair sweep")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--single", action="store_true")
    mode.add_argument("--pairs", action="store_true")
    p.add_argument("--top-k", type=int, default=argparse.SUPPRESS)

    p = sub.add_parser("threshold", parents=[common, proto], help="Threshold rule search")
    p.add_argument("--kind", choices=[k.value for k in RuleKind], default="two")
    p.add_argument("--snap-to-data", action="store_true", default=argparse.SUPPRESS)

    p = sub.add_parser("mask", parents=[common, proto], help="Decision mask of a trained model")
    p.add_argument("--features", required=True, help="One or two comma-separated features")
    p.add_argument("--n-points", type=int, default=argparse.SUPPRESS)

    p = sub.add_parser("pipeline", parents=[common, proto], help="Run every stage")
    p.add_argument("--snap-to-data", action="store_true", default=argparse.SUPPRESS)
    p.add_argument("--top-k", type=int, default=argparse.SUPPRESS)
    p.add_argument("--n-points", type=int, default=argparse.SUPPRESS)
    p.add_argument("--direction-rule", choices=["magnitude", "signed"], default=argparse.SUPPRESS)
    p.add_argument("--no-supplementary", action="store_true", default=argparse.SUPPRESS)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Merge flags over the JSON config file over defaults."""
    given = vars(args)
    base: Dict[str, Any] = {}
    if 'config' in given:
        base = RunConfig.from_file(given['config']).model_dump(mode='json', exclude_unset=True)

    for dest, name in CONFIG_FLAGS.items():
        if dest in given:
            base[name] = not given[dest] if dest == 'no_supplementary' else given[dest]
    for group, flags in (('hgb', HGB_FLAGS), ('baseline', BASELINE_FLAGS)):
        nested = dict(base.get(group, {}))
        nested.update({flag: given[flag] for flag in flags if flag in given})
        base[group] = nested
    winsor = dict(base.get('winsor', {}))
    winsor.update({field: given[dest] for dest, field in WINSOR_FLAGS.items() if dest in given})
    base['winsor'] = winsor

    seed = base.get('seed', 0)
    base['hgb'].setdefault('seed', seed)
    base['baseline'].setdefault('seed', seed)
    return RunConfig(**base)


def _prepared(config: RunConfig) -> FeatureTable:
    return finalize(load_input(config), config.winsor)


def _resolve_features(spec: str, table: FeatureTable, config: RunConfig) -> List[int]:
    if spec.strip().lower() == "all-selected":
        return select_features(table, config.alpha)
    return CATALOG.resolve_many(part.strip() for part in spec.split(",") if part.strip())


def cmd_ingest(args, config: RunConfig) -> int:
    table = _prepared(config)
    write_csv(table, args.output, config.label_column)
    logger.info("Prepared table written to %s", args.output)
    return EXIT_OK


def cmd_synth(args, config: RunConfig) -> int:
    table = load_input(config.model_copy(update={'input_path': None}))
    write_csv(table, args.output, config.label_column)
    return EXIT_OK


def cmd_describe(args, config: RunConfig) -> int:
    ReportGenerator(config.output_dir, config.to_dict()).write_csv(
        "table3_descriptive.csv", describe_table(_prepared(config)))
    return EXIT_OK


def cmd_select(args, config: RunConfig) -> int:
    selected = select_features(_prepared(config), config.alpha)
    ReportGenerator(config.output_dir, config.to_dict()).write_json("selected_features.json", {
        'alpha': config.alpha,
        'features': [{'feature_no': f, 'name': CATALOG.name(f)} for f in selected],
    })
    return EXIT_OK


def cmd_correlate(args, config: RunConfig) -> int:
    table = _prepared(config)
    reports = ReportGenerator(config.output_dir, config.to_dict())
    if args.deltas:
        deltas = correlation_deltas(table, args.top_k_deltas, config.direction_rule)
        reports.export_correlation_deltas(deltas, "table2_correlation_deltas.csv")
    else:
        report = correlate(table, args.method, args.scope)
        reports.export_correlation_matrix(report, f"correlation_{args.method}_{args.scope}.csv")
    return EXIT_OK


def cmd_balance(args, config: RunConfig) -> int:
    balanced = smote_balance(_prepared(config), config.smote())
    write_csv(balanced, args.output, config.label_column)
    return EXIT_OK


def cmd_train(args, config: RunConfig) -> int:
    table = _prepared(config)
    features = _resolve_features(args.features, table, config)
    table = table.select_features(features)
    spec = config.model_spec(ModelKind(args.model))
    report = evaluate(table, spec, config.protocol(), n_jobs=config.n_jobs)

    reports = ReportGenerator(config.output_dir, config.to_dict())
    reports.write_json(f"train_{spec.kind.value}.json", {
        'model': spec.model_dump(mode='json'),
        'features': features,
        'report': report.to_dict(),
    })
    if spec.kind == ModelKind.HGB:
        training = table if config.no_balance else smote_balance(table, config.smote())
        model = fit_classifier(training, spec)
        model.model.save_to_file(reports.path("model_hgb.json"))
    return EXIT_OK


def cmd_eval_models(args, config: RunConfig) -> int:
    table = _prepared(config)
    selected = table.select_features(select_features(table, config.alpha))
    rows = compare_models(selected, [config.model_spec(k) for k in ModelKind], config.protocol(),
                          n_jobs=config.n_jobs)
    ReportGenerator(config.output_dir, config.to_dict()).export_model_comparison(rows, "table4_models.csv")
    return EXIT_OK


def cmd_sweep(args, config: RunConfig) -> int:
    table = _prepared(config)
    selected = table.select_features(select_features(table, config.alpha))
    reports = ReportGenerator(config.output_dir, config.to_dict())
    if getattr(args, 'pairs', False):
        entries = sweep_pairs(selected, config.protocol(), config.top_k_pairs, config.model_spec(),
                              n_jobs=config.n_jobs)
        reports.export_sweep(entries, "table6_feature_pairs.csv")
    else:
        entries = sweep_single(selected, config.protocol(), config.model_spec(), n_jobs=config.n_jobs)
        reports.export_sweep(entries, "tableA1_single_features.csv")
    return EXIT_OK


def cmd_threshold(args, config: RunConfig) -> int:
    balance = None if config.no_balance else config.smote()
    results = search_all(_prepared(config), RuleKind(args.kind), balance, config.snap_to_data,
                         n_jobs=config.n_jobs)
    name = "tableA2_one_threshold.csv" if args.kind == "one" else "tableA3_two_threshold.csv"
    ReportGenerator(config.output_dir, config.to_dict()).export_thresholds(results, name)
    return EXIT_OK


def cmd_mask(args, config: RunConfig) -> int:
    table = _prepared(config)
    features = CATALOG.resolve_many(p.strip() for p in args.features.split(",") if p.strip())
    training = table.select_features(sorted(features))
    if not config.no_balance:
        training = smote_balance(training, config.smote())
    spec = config.model_spec()
    model = fit_classifier(training, spec)
    mask = make_mask(model, table, features, config.mask_points)
    stem = "mask_1d" if len(features) == 1 else "mask_2d"
    ReportGenerator(config.output_dir, config.to_dict()).export_mask(
        mask, stem, spec.model_dump(mode='json'))
    return EXIT_OK


def cmd_pipeline(args, config: RunConfig) -> int:
    result = run_pipeline(config)
    logger.info("Pipeline finished: %d artifacts, manifest %s", len(result.artifacts),
                result.manifest_path)
    return EXIT_OK


COMMANDS = {
    'ingest': cmd_ingest,
    'synth': cmd_synth,
    'describe': cmd_describe,
    'select': cmd_select,
    'correlate': cmd_correlate,
    'balance': cmd_balance,
    'train': cmd_train,
    'eval-models': cmd_eval_models,
    'sweep': cmd_sweep,
    'threshold': cmd_threshold,
    'mask': cmd_mask,
    'pipeline': cmd_pipeline,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point.

    Returns:
        0 on success, 2 on invalid input or configuration, 3 on a failed stage
    """
    args = build_parser().parse_args(argv)
    level = None
    if getattr(args, 'quiet', False):
        level = "WARNING"
    elif getattr(args, 'verbose', False):
        level = "DEBUG"
    setup_logging(level)

    try:
        config = config_from_args(args)
        return COMMANDS[args.command](args, config)
    except (InputError, ValidationError) as exc:
        logger.error("Input error: %s", exc)
        return EXIT_INPUT
    except StageError as exc:
        logger.error("%s", exc)
        return EXIT_STAGE
    except Exception:
        logger.exception("Command %s failed", args.command)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
