"""Command line front end.

Subcommands:

* ``validate-data``: load a dataset and print its shape, or fail with a
  row-level message;
* ``prepare``: build a split and write its manifests and stats;
* ``run``: execute one experiment from a config file or shipped preset;
* ``batch``: execute several experiments and write a combined report;
* ``report``: re-render the report from previously written run records;
* ``diagnose-negation``: train a generator and measure how often opposite
  polarity prompts yield identical text.

Exit codes: 0 success, 2 configuration problem, 3 data problem,
4 training or inference failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import errors as E
from .config import ExperimentConfig, load_config, load_preset, preset_names
from .runtime import get_runtime

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRAINING = 4

_CONFIG_ERRORS = (
    E.ConfigInvalid,
    E.SpecInvalid,
    E.WrongModelFamily,
    E.UnknownSlot,
    E.DuplicateAnswerSlot,
    E.MissingAnswerSlot,
    E.DanglingShareId,
    E.MissingBinding,
    E.UnexpectedBinding,
    E.MissingWordScore,
)
_DATA_ERRORS = (
    E.CorpusFormatError,
    E.EmptyText,
    E.TopicCountMismatch,
    E.UnknownTopicInAssignment,
    E.BadRatios,
    E.MissingSplit,
    E.EmptySplit,
)
_TRAINING_ERRORS = (
    E.RuntimeUnavailable,
    E.IncompatibleTask,
    E.ResourceExhausted,
    E.DivergedLoss,
    E.NoMaskFound,
    E.UnknownTask,
    E.EmptyGeneration,
    E.MissingLabelInTrainPhase,
    E.SingleClassTraining,
    E.EmptyVocabulary,
    E.NotFitted,
    E.KindMismatch,
    E.MissingGold,
    E.EmptyInput,
    E.MissingProbability,
)


def _fail(exc: Exception) -> int:
    print(f"error: {exc}", file=sys.stderr)
    if isinstance(exc, _CONFIG_ERRORS):
        return EXIT_CONFIG
    if isinstance(exc, _DATA_ERRORS):
        return EXIT_DATA
    if isinstance(exc, _TRAINING_ERRORS):
        return EXIT_TRAINING
    raise exc


def _add_common(parser: argparse.ArgumentParser, *, config: bool = True) -> None:
    if config:
        parser.add_argument("--config", help="experiment INI file")
        parser.add_argument("--preset", action="append", default=[],
                            help="shipped preset name (repeatable where supported)")
    parser.add_argument("--data", help="dataset path")
    parser.add_argument("--output-dir", default="runs", help="where outputs are written")
    parser.add_argument("--runtime", choices=("real", "stub"), default="real",
                        help="model backend: transformers or the deterministic stub")
    parser.add_argument("--seed", type=int,
                        help="override the split seed and training seed")
    parser.add_argument("--threshold-learning", choices=("on", "off"),
                        help="override threshold learning from the config")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kpmatch",
        description="Argument-to-keypoint matching experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-data", help="check a dataset file")
    p.add_argument("--data", required=True)
    p.add_argument("--format", choices=("pair_csv", "three_file"), default="pair_csv")

    p = sub.add_parser("prepare", help="build a split and write manifests")
    _add_common(p)

    p = sub.add_parser("run", help="run one experiment")
    _add_common(p)
    p.add_argument("--list-presets", action="store_true", help="print preset names and exit")

    p = sub.add_parser("batch", help="run several experiments and report")
    _add_common(p)
    p.add_argument("--configs", nargs="*", default=[], help="experiment INI files")

    p = sub.add_parser("report", help="render the report for finished runs")
    p.add_argument("--runs", required=True, help="directory holding run subdirectories")
    p.add_argument("--output-dir", default=None,
                   help="report destination (defaults to the runs directory)")

    p = sub.add_parser("diagnose-negation", help="polarity divergence diagnostic")
    _add_common(p)
    p.add_argument("--sample-size", type=int, default=50,
                   help="training records to sample for the comparison")
    return parser


def _load_experiment(args, preset_name: str | None = None) -> ExperimentConfig:
    chosen = preset_name if preset_name is not None else (args.preset[0] if args.preset else None)
    if args.config and chosen:
        raise E.ConfigInvalid("give either --config or --preset, not both")
    if args.config:
        cfg = load_config(args.config)
    elif chosen:
        cfg = load_preset(chosen)
    else:
        raise E.ConfigInvalid("an experiment needs --config or --preset")
    _apply_overrides(cfg, args)
    return cfg


def _apply_overrides(cfg: ExperimentConfig, args) -> None:
    if args.seed is not None:
        cfg.split_seed = args.seed
        cfg.train_overrides = {**cfg.train_overrides, "seed": args.seed}
    if args.threshold_learning is not None:
        cfg.threshold_learning = args.threshold_learning == "on"


def _data_path(cfg: ExperimentConfig, args) -> str:
    path = args.data or cfg.data_path
    if not path:
        raise E.ConfigInvalid("no dataset given: pass --data or set [data] path in the config")
    return path


def _cmd_validate_data(args) -> int:
    from .corpus import load_argkp

    records = load_argkp(args.data, args.format)
    topics = {r.topic for r in records}
    matching = sum(1 for r in records if r.label == 1)
    print(f"records: {len(records)}")
    print(f"topics: {len(topics)}")
    print(f"matching: {matching}")
    print(f"non-matching: {len(records) - matching}")
    print("ok")
    return EXIT_OK


def _cmd_prepare(args) -> int:
    from .runner import prepare

    cfg = _load_experiment(args)
    stats = prepare(cfg, _data_path(cfg, args), args.output_dir)
    for name, counts in stats.counts().items():
        print(
            f"{name}: total={counts.total} matching={counts.matching} "
            f"non_matching={counts.non_matching} topics={counts.topics}"
        )
    print(f"ratios: {stats.ratios[0]}/{stats.ratios[1]}/{stats.ratios[2]}")
    print(f"manifests written under {Path(args.output_dir) / 'splits'}")
    return EXIT_OK


def _print_run(record) -> None:
    print(
        f"{record.name}: dev macro-F1 {record.dev['macro_f1']:.4f}, "
        f"test macro-F1 {record.test['macro_f1']:.4f} "
        f"(threshold {record.threshold:.2f})"
    )


def _cmd_run(args) -> int:
    from .runner import run_experiment

    if args.list_presets:
        for name in preset_names():
            print(name)
        return EXIT_OK
    if len(args.preset) > 1:
        raise E.ConfigInvalid("run takes one --preset; use batch for several")
    cfg = _load_experiment(args)
    runtime = get_runtime(args.runtime)
    record = run_experiment(cfg, _data_path(cfg, args), args.output_dir, runtime)
    _print_run(record)
    print(f"outputs under {Path(args.output_dir) / cfg.name}")
    return EXIT_OK


def _cmd_batch(args) -> int:
    from .runner import run_experiment, write_report

    configs: list[ExperimentConfig] = []
    for name in args.preset:
        cfg = load_preset(name)
        _apply_overrides(cfg, args)
        configs.append(cfg)
    for path in args.configs:
        cfg = load_config(path)
        _apply_overrides(cfg, args)
        configs.append(cfg)
    if args.config:
        cfg = load_config(args.config)
        _apply_overrides(cfg, args)
        configs.append(cfg)
    if not configs:
        raise E.ConfigInvalid("batch needs at least one --preset or --configs entry")

    runtime = get_runtime(args.runtime)
    records = []
    for cfg in configs:
        record = run_experiment(cfg, _data_path(cfg, args), args.output_dir, runtime)
        _print_run(record)
        records.append(record)
    paths = write_report(records, args.output_dir)
    print(f"report: {paths['tsv']} {paths['md']} {paths['png']}")
    return EXIT_OK


def _cmd_report(args) -> int:
    from .runner import collect_run_records, write_report

    records = collect_run_records(args.runs)
    if not records:
        raise E.ConfigInvalid(f"no run records found under {args.runs}")
    paths = write_report(records, args.output_dir or args.runs)
    print(f"report: {paths['tsv']} {paths['md']} {paths['png']}")
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    from .runner import diagnose_negation

    if len(args.preset) > 1:
        raise E.ConfigInvalid("diagnose-negation takes one --preset")
    cfg = _load_experiment(args)
    runtime = get_runtime(args.runtime)
    report = diagnose_negation(
        cfg, _data_path(cfg, args), args.output_dir, runtime, args.sample_size
    )
    print(
        f"{report.family}: {report.exact_match_fraction:.2%} of {report.n_pairs} prompts "
        f"identical under opposite polarity "
        f"(mean token overlap {report.normalized_similarity_mean:.2f})"
    )
    print(f"outputs under {args.output_dir}")
    return EXIT_OK


_COMMANDS = {
    "validate-data": _cmd_validate_data,
    "prepare": _cmd_prepare,
    "run": _cmd_run,
    "batch": _cmd_batch,
    "report": _cmd_report,
    "diagnose-negation": _cmd_diagnose,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except E.KpmatchError as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
