"""ArgKP pair corpus: loading, validation, preprocessing, and splitting.

A dataset is a list of :class:`ArgKPRecord` pairs. Two input layouts are
supported: a single pair CSV (header ``topic,argument,key_point,stance,label``)
and the three-file distribution (arguments, key points, labels joined on ids).

Splits come in two flavors:

* cross-domain: whole topics are assigned to train/dev/test, so the topic
  sets of the three splits are disjoint;
* in-domain: each topic's pairs are shuffled and cut proportionally, so every
  topic appears in every split (whenever its pair count allows it).

All functions here are pure and seed-deterministic.
"""

from __future__ import annotations

import csv
import json
import math
import random
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import (
    BadLabelValue,
    BadRatios,
    BadStanceValue,
    CorpusFormatError,
    DuplicatePairId,
    EmptyField,
    EmptyText,
    MissingColumn,
    TopicCountMismatch,
    UnknownTopicInAssignment,
)

PAIR_CSV_COLUMNS = ("topic", "argument", "key_point", "stance", "label")
TERMINAL_PUNCTUATION = (".", "!", "?")

CROSS_DOMAIN = "cross_domain"
IN_DOMAIN = "in_domain"

_SPLIT_NAMES = ("train", "dev", "test")
# Leftover records from proportional rounding go to splits in this priority.
_REMAINDER_PRIORITY = ("train", "test", "dev")

_TOKEN_RE = re.compile(r"[a-z0-9']+")


@dataclass(frozen=True)
class ArgKPRecord:
    """One labeled (topic, argument, key point) pair.

    ``stance`` is +1 when the argument supports its topic and -1 when it
    opposes it; ``label`` is 1 for a matching pair and 0 otherwise.
    """

    topic: str
    argument: str
    key_point: str
    stance: int
    label: int
    pair_id: str


@dataclass
class SplitTriple:
    """A train/dev/test partition of a dataset."""

    train: list[ArgKPRecord]
    dev: list[ArgKPRecord]
    test: list[ArgKPRecord]
    mode: str
    seed: int
    topic_assignment: dict[str, str] | None = None

    def splits(self) -> dict[str, list[ArgKPRecord]]:
        return {"train": self.train, "dev": self.dev, "test": self.test}


@dataclass
class SplitCounts:
    total: int
    matching: int
    non_matching: int
    topics: int


@dataclass
class SplitStats:
    train: SplitCounts
    dev: SplitCounts
    test: SplitCounts
    ratios: tuple[float, float, float]  # percent of all pairs per split

    def counts(self) -> dict[str, SplitCounts]:
        return {"train": self.train, "dev": self.dev, "test": self.test}


def _validate_record(
    topic: str, argument: str, key_point: str, stance: str, label: str, where: str
) -> tuple[str, str, str, int, int]:
    for name, value in (("topic", topic), ("argument", argument), ("key_point", key_point)):
        if value is None or not value.strip():
            raise EmptyField(f"{where}: column '{name}' is empty")
    try:
        stance_i = int(str(stance).strip())
    except (TypeError, ValueError):
        raise BadStanceValue(f"{where}: stance {stance!r} is not an integer")
    if stance_i not in (-1, 1):
        raise BadStanceValue(f"{where}: stance must be -1 or 1, got {stance_i}")
    try:
        label_i = int(str(label).strip())
    except (TypeError, ValueError):
        raise BadLabelValue(f"{where}: label {label!r} is not an integer")
    if label_i not in (0, 1):
        raise BadLabelValue(f"{where}: label must be 0 or 1, got {label_i}")
    return topic, argument, key_point, stance_i, label_i


def _read_csv_rows(path: Path, required: tuple[str, ...]) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if header is None:
            raise MissingColumn(f"{path}: file has no header row")
        missing = [c for c in required if c not in header]
        if missing:
            raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}")
        return list(reader)


def _load_pair_csv(path: Path) -> list[ArgKPRecord]:
    rows = _read_csv_rows(path, PAIR_CSV_COLUMNS)
    records = []
    for i, row in enumerate(rows):
        where = f"{path.name} row {i + 2}"  # 1-based, after the header
        topic, argument, key_point, stance, label = _validate_record(
            row.get("topic"), row.get("argument"), row.get("key_point"),
            row.get("stance"), row.get("label"), where,
        )
        records.append(
            ArgKPRecord(topic, argument, key_point, stance, label, pair_id=f"p{i:06d}")
        )
    return records


def _load_three_file(root: Path) -> list[ArgKPRecord]:
    """Join arguments.csv, key_points.csv and labels.csv on their id columns."""
    for name in ("arguments.csv", "key_points.csv", "labels.csv"):
        if not (root / name).is_file():
            raise CorpusFormatError(f"three_file directory is missing {name}: {root}")
    arg_rows = _read_csv_rows(root / "arguments.csv", ("arg_id", "argument", "topic", "stance"))
    kp_rows = _read_csv_rows(root / "key_points.csv", ("key_point_id", "key_point", "topic", "stance"))
    label_rows = _read_csv_rows(root / "labels.csv", ("arg_id", "key_point_id", "label"))

    args = {row["arg_id"]: row for row in arg_rows}
    kps = {row["key_point_id"]: row for row in kp_rows}

    records = []
    seen: set[str] = set()
    for i, row in enumerate(label_rows):
        where = f"labels.csv row {i + 2}"
        arg = args.get(row["arg_id"])
        kp = kps.get(row["key_point_id"])
        if arg is None:
            raise CorpusFormatError(f"{where}: unknown arg_id {row['arg_id']!r}")
        if kp is None:
            raise CorpusFormatError(f"{where}: unknown key_point_id {row['key_point_id']!r}")
        pair_id = f"{row['arg_id']}|{row['key_point_id']}"
        if pair_id in seen:
            raise DuplicatePairId(f"{where}: pair {pair_id} listed twice")
        seen.add(pair_id)
        topic, argument, key_point, stance, label = _validate_record(
            arg.get("topic"), arg.get("argument"), kp.get("key_point"),
            arg.get("stance"), row.get("label"), where,
        )
        records.append(ArgKPRecord(topic, argument, key_point, stance, label, pair_id))
    return records


def load_argkp(path: str | Path, format: str = "pair_csv") -> list[ArgKPRecord]:
    """Load and validate a pair dataset.

    ``format`` is either ``pair_csv`` (path is a CSV file) or ``three_file``
    (path is a directory holding arguments.csv, key_points.csv, labels.csv).
    Record order follows file order. Raises a :class:`CorpusFormatError`
    subclass naming the offending row on any invalid input.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusFormatError(f"dataset path does not exist: {path}")
    if format == "pair_csv":
        if not path.is_file():
            raise CorpusFormatError(f"pair_csv expects a CSV file, not a directory: {path}")
        return _load_pair_csv(path)
    if format == "three_file":
        if not path.is_dir():
            raise CorpusFormatError(f"three_file expects a directory, not a file: {path}")
        return _load_three_file(path)
    raise CorpusFormatError(f"unknown dataset format {format!r}")


def add_full_stops(text: str) -> str:
    """Append a full stop unless the text already ends in ., ! or ?.

    Trailing whitespace is dropped before the check, so the result always
    ends with a terminal punctuation mark. Idempotent.
    """
    stripped = text.rstrip() if text else ""
    if not stripped:
        raise EmptyText("cannot add a full stop to empty text")
    if stripped.endswith(TERMINAL_PUNCTUATION):
        return stripped
    return stripped + "."


def with_full_stops(record: ArgKPRecord) -> ArgKPRecord:
    """Copy of ``record`` with argument and key point full-stop terminated."""
    return ArgKPRecord(
        topic=record.topic,
        argument=add_full_stops(record.argument),
        key_point=add_full_stops(record.key_point),
        stance=record.stance,
        label=record.label,
        pair_id=record.pair_id,
    )


def _topics_in_order(records: list[ArgKPRecord]) -> list[str]:
    return sorted({r.topic for r in records})


def split_cross_domain(
    records: list[ArgKPRecord],
    n_train_topics: int,
    n_dev_topics: int,
    n_test_topics: int,
    seed: int,
    fixed_assignment: dict[str, str] | None = None,
) -> SplitTriple:
    """Partition by topic so train/dev/test topic sets are disjoint.

    Without ``fixed_assignment`` the sorted topic list is shuffled with
    ``seed`` and cut into (n_train, n_dev, n_test) topics. A fixed
    assignment (topic -> train|dev|test) overrides the shuffle and makes the
    result seed-independent.
    """
    topics = _topics_in_order(records)
    if n_train_topics + n_dev_topics + n_test_topics != len(topics):
        raise TopicCountMismatch(
            f"topic counts ({n_train_topics},{n_dev_topics},{n_test_topics}) "
            f"sum to {n_train_topics + n_dev_topics + n_test_topics}, "
            f"dataset has {len(topics)} topics"
        )

    if fixed_assignment is not None:
        unknown = set(fixed_assignment) - set(topics)
        if unknown:
            raise UnknownTopicInAssignment(
                f"assignment names topics not in the dataset: {sorted(unknown)}"
            )
        uncovered = set(topics) - set(fixed_assignment)
        if uncovered:
            raise TopicCountMismatch(
                f"assignment does not cover topics: {sorted(uncovered)}"
            )
        bad = {t: s for t, s in fixed_assignment.items() if s not in _SPLIT_NAMES}
        if bad:
            raise UnknownTopicInAssignment(f"assignment maps to unknown splits: {bad}")
        assignment = dict(fixed_assignment)
    else:
        shuffled = list(topics)
        random.Random(seed).shuffle(shuffled)
        assignment = {}
        for i, topic in enumerate(shuffled):
            if i < n_train_topics:
                assignment[topic] = "train"
            elif i < n_train_topics + n_dev_topics:
                assignment[topic] = "dev"
            else:
                assignment[topic] = "test"

    buckets: dict[str, list[ArgKPRecord]] = {name: [] for name in _SPLIT_NAMES}
    for record in records:
        buckets[assignment[record.topic]].append(record)
    return SplitTriple(
        train=buckets["train"],
        dev=buckets["dev"],
        test=buckets["test"],
        mode=CROSS_DOMAIN,
        seed=seed,
        topic_assignment=assignment,
    )


def _largest_remainder_cut(n: int, ratios: tuple[float, float, float]) -> dict[str, int]:
    """Split n into train/dev/test counts that sum to n exactly.

    Floors the exact quotas, then hands leftover records to the splits with
    the largest fractional remainders (ties broken train -> test -> dev).
    """
    total = sum(ratios)
    quotas = {name: n * r / total for name, r in zip(_SPLIT_NAMES, ratios)}
    counts = {name: math.floor(q) for name, q in quotas.items()}
    leftover = n - sum(counts.values())
    order = sorted(
        _SPLIT_NAMES,
        key=lambda s: (-(quotas[s] - counts[s]), _REMAINDER_PRIORITY.index(s)),
    )
    for name in order[:leftover]:
        counts[name] += 1
    return counts


def split_in_domain(
    records: list[ArgKPRecord],
    ratios: tuple[float, float, float],
    seed: int,
) -> SplitTriple:
    """Cut each topic's records proportionally so all topics span all splits.

    Per topic, records are shuffled with a seed derived from (seed, topic)
    and cut by largest-remainder rounding of the given percentages. A topic
    lands in all three splits whenever its pair count times each ratio is
    at least one.
    """
    if abs(sum(ratios) - 100.0) > 0.5:
        raise BadRatios(f"ratios {ratios} do not sum to 100")

    by_topic: dict[str, list[ArgKPRecord]] = {}
    for record in records:
        by_topic.setdefault(record.topic, []).append(record)

    buckets: dict[str, list[ArgKPRecord]] = {name: [] for name in _SPLIT_NAMES}
    for topic in sorted(by_topic):
        rows = list(by_topic[topic])
        random.Random(f"{seed}|{topic}").shuffle(rows)
        counts = _largest_remainder_cut(len(rows), ratios)
        n_train, n_dev = counts["train"], counts["dev"]
        buckets["train"].extend(rows[:n_train])
        buckets["dev"].extend(rows[n_train:n_train + n_dev])
        buckets["test"].extend(rows[n_train + n_dev:])
    return SplitTriple(
        train=buckets["train"],
        dev=buckets["dev"],
        test=buckets["test"],
        mode=IN_DOMAIN,
        seed=seed,
        topic_assignment=None,
    )


def split_stats(split: SplitTriple) -> SplitStats:
    """Count pairs, matching pairs, and topics per split."""
    counts = {}
    for name, rows in split.splits().items():
        matching = sum(1 for r in rows if r.label == 1)
        counts[name] = SplitCounts(
            total=len(rows),
            matching=matching,
            non_matching=len(rows) - matching,
            topics=len({r.topic for r in rows}),
        )
    total = sum(c.total for c in counts.values())
    ratios = tuple(
        round(100.0 * counts[name].total / total, 1) if total else 0.0
        for name in _SPLIT_NAMES
    )
    return SplitStats(train=counts["train"], dev=counts["dev"], test=counts["test"], ratios=ratios)


def tokenize_and_filter(text: str, stopword_list: set[str] | frozenset[str]) -> list[str]:
    """Lowercased word tokens with stopwords and punctuation removed.

    Tokens are maximal runs of ``[a-z0-9']`` in the lowercased text, with
    leading/trailing apostrophes stripped; anything else (punctuation,
    whitespace) separates tokens.
    """
    if not text or not text.strip():
        raise EmptyText("cannot tokenize empty text")
    tokens = []
    for raw in _TOKEN_RE.findall(text.lower()):
        token = raw.strip("'")
        if token and token not in stopword_list:
            tokens.append(token)
    return tokens


def load_default_stopwords() -> frozenset[str]:
    """The bundled English stopword list (one word per line)."""
    data = resources.files("kpmatch").joinpath("data/stopwords_en.txt").read_text("utf-8")
    return frozenset(w.strip() for w in data.splitlines() if w.strip())


# --- split manifests ------------------------------------------------------

def write_split_manifests(split: SplitTriple, out_dir: str | Path) -> SplitStats:
    """Write one pair-id file per split plus stats.jsonl and split_meta.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stats = split_stats(split)
    for name, rows in split.splits().items():
        with open(out_dir / f"{name}.ids", "w", encoding="utf-8") as fh:
            for record in rows:
                fh.write(record.pair_id + "\n")
    with open(out_dir / "stats.jsonl", "w", encoding="utf-8") as fh:
        for name, c in stats.counts().items():
            fh.write(json.dumps({
                "split": name,
                "total": c.total,
                "matching": c.matching,
                "non_matching": c.non_matching,
                "topics": c.topics,
            }) + "\n")
    meta = {"mode": split.mode, "seed": split.seed}
    if split.topic_assignment is not None:
        meta["topic_assignment"] = split.topic_assignment
    with open(out_dir / "split_meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return stats


def read_split_manifests(records: list[ArgKPRecord], manifest_dir: str | Path) -> SplitTriple:
    """Rebuild a SplitTriple from manifest files written by write_split_manifests."""
    manifest_dir = Path(manifest_dir)
    meta_path = manifest_dir / "split_meta.json"
    if not meta_path.exists():
        raise CorpusFormatError(f"no split manifests under {manifest_dir}")
    meta = json.loads(meta_path.read_text("utf-8"))
    by_id = {r.pair_id: r for r in records}
    buckets = {}
    for name in _SPLIT_NAMES:
        ids = (manifest_dir / f"{name}.ids").read_text("utf-8").splitlines()
        try:
            buckets[name] = [by_id[i] for i in ids if i]
        except KeyError as exc:
            raise CorpusFormatError(
                f"{name}.ids references pair_id {exc.args[0]!r} not present in the dataset"
            ) from None
    return SplitTriple(
        train=buckets["train"],
        dev=buckets["dev"],
        test=buckets["test"],
        mode=meta["mode"],
        seed=meta["seed"],
        topic_assignment=meta.get("topic_assignment"),
    )
