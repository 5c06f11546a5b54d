"""End-to-end orchestration: prepare splits, run experiments, report.

``run_experiment`` takes a validated :class:`ExperimentConfig` and produces
a :class:`RunRecord` plus on-disk outputs under ``out_dir/<run name>/``:

* ``run.json``: the deterministic record (config fingerprint, artifact
  fingerprints, split stats, per-split metrics). Repeat runs with the same
  config, seed, and stub runtime are byte-identical.
* ``timing.json``: wall-clock seconds and the start timestamp, kept apart
  so they cannot break that guarantee;
* ``predictions.jsonl``: dev and test predictions, one object per pair;
* ``triples/``: generated intermediary texts per split (generate-then-
  classify runs only);
* ``splits/``: pair-id manifests for the exact split used;
* ``artifacts/``: saved model artifacts (stub runtime by default; pass
  ``save_artifacts=True`` to persist real weights too).

``write_report`` collects run records into a TSV, a markdown table, and a
bar figure with one row per run: in-domain and cross-domain test macro-F1
land in separate columns and cells that do not apply hold "-".
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import corpus, generation, triples
from .config import (
    CLASSICAL_CLASSIFIERS,
    ExperimentConfig,
    checkpoint_for,
    train_config_for,
)
from .errors import ConfigInvalid, MissingSplit
from .evaluation import EvalReport, learn_threshold, macro_f1, with_threshold
from .matchers import (
    KIND_BASELINE,
    KIND_PROMPTED,
    MatcherSpec,
    predict_matcher,
    train_matcher,
    write_predictions,
)
from .runtime import Runtime

# Classifier training inherits only run-shape settings from the experiment
# overrides; optimizer settings stay family defaults.
_SHARED_TRAIN_KEYS = ("seed", "batch_size", "max_input_length", "max_steps")

_TIMING_FIELDS = ("wall_clock_s", "timestamp")


@dataclass
class RunRecord:
    name: str
    kind: str
    family: str
    template: str | None
    classifier: str | None
    split_mode: str
    split_seed: int
    runtime_kind: str
    config_fingerprint: str
    artifact_fingerprints: dict
    spec_name: str
    n_records: int
    split_stats: dict
    history: dict
    best_epochs: dict
    threshold: float
    learned_threshold: float | None
    dev: dict
    test: dict
    wall_clock_s: float
    timestamp: str

    def record_json(self) -> str:
        """The deterministic part of the record (timing excluded)."""
        data = {k: v for k, v in asdict(self).items() if k not in _TIMING_FIELDS}
        return json.dumps(data, indent=2, sort_keys=True) + "\n"

    def timing_json(self) -> str:
        return json.dumps({k: getattr(self, k) for k in _TIMING_FIELDS}) + "\n"


def config_fingerprint(cfg: ExperimentConfig) -> str:
    """Digest of the full config in canonical JSON form."""
    blob = json.dumps(asdict(cfg), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _report_dict(report: EvalReport) -> dict:
    return {
        "macro_f1": report.macro_f1,
        "n": report.n,
        "per_class": {
            str(label): asdict(metrics) for label, metrics in report.per_class.items()
        },
        "confusion": list(report.confusion),
        "threshold_used": report.threshold_used,
    }


def _stats_dict(stats: corpus.SplitStats) -> dict:
    return {
        "ratios": list(stats.ratios),
        **{name: asdict(c) for name, c in stats.counts().items()},
    }


def load_and_split(
    cfg: ExperimentConfig, data_path: str | Path
) -> tuple[list[corpus.ArgKPRecord], corpus.SplitTriple]:
    """Load, preprocess, and split the dataset the way the config says."""
    records = corpus.load_argkp(data_path, cfg.data_format)
    if cfg.add_full_stops:
        records = [corpus.with_full_stops(r) for r in records]
    if cfg.split_mode == "cross_domain":
        split = corpus.split_cross_domain(
            records, *cfg.topic_counts, seed=cfg.split_seed
        )
    else:
        split = corpus.split_in_domain(records, cfg.ratios, seed=cfg.split_seed)
    for name, rows in split.splits().items():
        if not rows:
            raise MissingSplit(f"the {name} split came out empty; check split settings")
    return records, split


def prepare(
    cfg: ExperimentConfig, data_path: str | Path, out_dir: str | Path
) -> corpus.SplitStats:
    """Validate the dataset, build the split, and write its manifests."""
    _, split = load_and_split(cfg, data_path)
    return corpus.write_split_manifests(split, Path(out_dir) / "splits")


def _classifier_train_config(cfg: ExperimentConfig, family: str):
    shared = {k: v for k, v in cfg.train_overrides.items() if k in _SHARED_TRAIN_KEYS}
    return train_config_for(family, shared)


def _pairs_route(cfg: ExperimentConfig, split: corpus.SplitTriple, runtime: Runtime):
    """Baseline and prompt-template routes: fit one matcher, predict dev/test."""
    spec = MatcherSpec(
        kind=KIND_BASELINE if cfg.kind == "baseline" else KIND_PROMPTED,
        checkpoint=checkpoint_for(cfg.family),
        train_config=train_config_for(cfg.family, cfg.train_overrides),
        template=cfg.template,
    )
    artifact = train_matcher(runtime, spec, split.train, split.dev)
    dev_pred = predict_matcher(runtime, artifact, spec, split.dev, cfg.threshold)
    test_pred = predict_matcher(runtime, artifact, spec, split.test, cfg.threshold)
    artifacts = {"matcher": artifact}
    return dev_pred, test_pred, artifacts, {}, spec.spec_name


def _triples_route(
    cfg: ExperimentConfig,
    split: corpus.SplitTriple,
    runtime: Runtime,
    run_dir: Path,
):
    """Generate-then-classify route: generator, intermediaries, classifier.

    Training triples render through the label-matched polarity template;
    dev and test use the positive wording only, so no gold label leaks
    into inference inputs.
    """
    checkpoint = checkpoint_for(cfg.family)
    gen_config = train_config_for(cfg.family, cfg.train_overrides)
    gen_artifact = generation.train_generator(
        runtime, checkpoint, cfg.template, split.train, split.dev, gen_config
    )
    gen_fingerprint = runtime.fingerprint(gen_artifact)

    by_split = {}
    triples_dir = run_dir / "triples"
    triples_dir.mkdir(parents=True, exist_ok=True)
    for split_name, rows, phase in (
        ("train", split.train, generation.TRAIN_PHASE),
        ("dev", split.dev, generation.INFER_PHASE),
        ("test", split.test, generation.INFER_PHASE),
    ):
        by_split[split_name] = generation.generate_intermediaries(
            runtime, gen_artifact, cfg.template, rows, phase,
            max_new_tokens=cfg.max_new_tokens,
        )
        generation.write_triples(
            triples_dir / f"{split_name}.jsonl", by_split[split_name],
            cfg.template, gen_fingerprint,
        )

    seed = cfg.train_overrides.get("seed", 0)
    if cfg.classifier in CLASSICAL_CLASSIFIERS:
        cls_spec = triples.TripleClassifierSpec(kind=cfg.classifier, seed=seed)
    else:
        cls_spec = triples.TripleClassifierSpec(
            kind=triples.PLM_KIND,
            checkpoint=checkpoint_for(cfg.classifier),
            train_config=_classifier_train_config(cfg, cfg.classifier),
            seed=seed,
        )
    model = triples.train_triple_classifier(
        cls_spec, by_split["train"], by_split["dev"], runtime
    )
    dev_pred = triples.predict_triples(model, by_split["dev"], cfg.threshold)
    test_pred = triples.predict_triples(model, by_split["test"], cfg.threshold)

    artifacts = {"generator": gen_artifact}
    extra_fingerprints = {}
    if model.artifact is not None:
        artifacts["classifier"] = model.artifact
    else:
        extra_fingerprints["classifier"] = triples.save_classical(
            model, run_dir / "artifacts" / "classifier"
        )
    return dev_pred, test_pred, artifacts, extra_fingerprints, cls_spec.spec_name


def run_experiment(
    cfg: ExperimentConfig,
    data_path: str | Path,
    out_dir: str | Path,
    runtime: Runtime,
    save_artifacts: bool | None = None,
) -> RunRecord:
    started = time.time()
    timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    if save_artifacts is None:
        save_artifacts = runtime.kind == "stub"
    _, split = load_and_split(cfg, data_path)
    stats = corpus.split_stats(split)
    run_dir = Path(out_dir) / cfg.name
    run_dir.mkdir(parents=True, exist_ok=True)

    if cfg.kind in ("baseline", "approach1"):
        dev_pred, test_pred, artifacts, extra_fps, spec_name = _pairs_route(
            cfg, split, runtime
        )
    else:
        dev_pred, test_pred, artifacts, extra_fps, spec_name = _triples_route(
            cfg, split, runtime, run_dir
        )

    dev_gold = {r.pair_id: r.label for r in split.dev}
    test_gold = {r.pair_id: r.label for r in split.test}
    threshold = cfg.threshold
    learned = None
    if cfg.threshold_learning:
        learned, _ = learn_threshold(dev_pred, dev_gold)
        threshold = learned
        dev_pred = with_threshold(dev_pred, threshold)
        test_pred = with_threshold(test_pred, threshold)
    dev_report = macro_f1(dev_pred, dev_gold, threshold_used=threshold)
    test_report = macro_f1(test_pred, test_gold, threshold_used=threshold)

    fingerprints = dict(extra_fps)
    for role, artifact in artifacts.items():
        fingerprints[role] = runtime.fingerprint(artifact)
        if save_artifacts:
            runtime.save_artifact(artifact, run_dir / "artifacts" / role)

    record = RunRecord(
        name=cfg.name,
        kind=cfg.kind,
        family=cfg.family,
        template=cfg.template,
        classifier=cfg.classifier,
        split_mode=cfg.split_mode,
        split_seed=cfg.split_seed,
        runtime_kind=runtime.kind,
        config_fingerprint=config_fingerprint(cfg),
        artifact_fingerprints=dict(sorted(fingerprints.items())),
        spec_name=spec_name,
        n_records=sum(len(rows) for rows in split.splits().values()),
        split_stats=_stats_dict(stats),
        history={role: a.history for role, a in sorted(artifacts.items())},
        best_epochs={role: a.best_epoch for role, a in sorted(artifacts.items())},
        threshold=threshold,
        learned_threshold=learned,
        dev=_report_dict(dev_report),
        test=_report_dict(test_report),
        wall_clock_s=time.time() - started,
        timestamp=timestamp,
    )

    (run_dir / "run.json").write_text(record.record_json(), encoding="utf-8")
    (run_dir / "timing.json").write_text(record.timing_json(), encoding="utf-8")
    pred_path = run_dir / "predictions.jsonl"
    write_predictions(pred_path, dev_pred, spec_name, "dev")
    write_predictions(pred_path, test_pred, spec_name, "test", append=True)
    corpus.write_split_manifests(split, run_dir / "splits")
    return record


# --- reporting -----------------------------------------------------------------

_REPORT_COLUMNS = (
    "name", "experiment", "template", "generator", "model",
    "in_domain_f1", "cross_domain_f1",
)


def record_row(record: RunRecord | dict) -> dict:
    """One report row per run; cells that do not apply are None."""
    data = asdict(record) if isinstance(record, RunRecord) else record
    approach2 = data["kind"] == "approach2"
    score = data["test"]["macro_f1"]
    in_domain = data["split_mode"] == "in_domain"
    return {
        "name": data["name"],
        "experiment": data["kind"],
        "template": data["template"],
        "generator": data["family"] if approach2 else None,
        "model": data["classifier"] if approach2 else data["family"],
        "in_domain_f1": score if in_domain else None,
        "cross_domain_f1": None if in_domain else score,
    }


def collect_run_records(out_dir: str | Path) -> list[dict]:
    """Load every run.json under out_dir (one directory per run)."""
    out_dir = Path(out_dir)
    records = []
    for path in sorted(out_dir.glob("*/run.json")):
        records.append(json.loads(path.read_text("utf-8")))
    return records


def write_report(records: list[RunRecord | dict], out_dir: str | Path) -> dict[str, Path]:
    """Render results.tsv, report.md, and report.png for a set of runs."""
    from .plotting import save_results_figure

    if not records:
        raise ConfigInvalid("no run records to report on")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [record_row(r) for r in records]

    tsv_path = out_dir / "results.tsv"
    with open(tsv_path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(_REPORT_COLUMNS) + "\n")
        for row in rows:
            fh.write("\t".join(_format_cell(row[c]) for c in _REPORT_COLUMNS) + "\n")

    md_path = out_dir / "report.md"
    with open(md_path, "w", encoding="utf-8") as fh:
        fh.write("# Run results\n\n")
        fh.write("| " + " | ".join(_REPORT_COLUMNS) + " |\n")
        fh.write("|" + "|".join("---" for _ in _REPORT_COLUMNS) + "|\n")
        for row in rows:
            fh.write("| " + " | ".join(_format_cell(row[c]) for c in _REPORT_COLUMNS) + " |\n")

    png_path = save_results_figure(rows, out_dir / "report.png")
    return {"tsv": tsv_path, "md": md_path, "png": png_path}


def _format_cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


# --- negation diagnostic ----------------------------------------------------------

def diagnose_negation(
    cfg: ExperimentConfig,
    data_path: str | Path,
    out_dir: str | Path,
    runtime: Runtime,
    sample_size: int = 50,
):
    """Train the configured generator, then compare polarity outputs.

    Samples training records (seeded by the split seed) and writes
    divergence.tsv, divergence.md, and divergence.png under out_dir.
    """
    if cfg.kind != "approach2":
        raise ConfigInvalid("the negation diagnostic needs a generate-then-classify config")
    _, split = load_and_split(cfg, data_path)
    checkpoint = checkpoint_for(cfg.family)
    gen_config = train_config_for(cfg.family, cfg.train_overrides)
    artifact = generation.train_generator(
        runtime, checkpoint, cfg.template, split.train, split.dev, gen_config
    )
    report = generation.negation_divergence(
        runtime, artifact, cfg.template, split.train,
        sample_size=sample_size, seed=cfg.split_seed,
        max_new_tokens=cfg.max_new_tokens,
    )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "divergence.tsv", "w", encoding="utf-8") as fh:
        fh.write("family\tn_pairs\texact_match_fraction\tnormalized_similarity_mean\n")
        fh.write(
            f"{report.family}\t{report.n_pairs}\t{report.exact_match_fraction:.4f}"
            f"\t{report.normalized_similarity_mean:.4f}\n"
        )
    with open(out_dir / "divergence.md", "w", encoding="utf-8") as fh:
        fh.write("# Polarity divergence\n\n")
        fh.write(
            f"Template family `{report.family}`: {report.exact_match_fraction:.0%} of "
            f"{report.n_pairs} sampled prompts generated identical text under opposite "
            f"polarity (mean token overlap {report.normalized_similarity_mean:.2f}).\n\n"
        )
        for ex in report.examples:
            fh.write(f"- argument: {ex.argument}\n")
            fh.write(f"  - positive: {ex.positive_output}\n")
            fh.write(f"  - negative: {ex.negative_output}\n")
            fh.write(f"  - identical: {'yes' if ex.identical else 'no'}\n")

    from .plotting import save_divergence_figure

    save_divergence_figure(report, out_dir / "divergence.png")
    return report
