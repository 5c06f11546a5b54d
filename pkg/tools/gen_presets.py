"""Regenerate the shipped experiment presets.

Run from the repository root:

    python3 tools/gen_presets.py

One INI per experiment row: four plain fine-tuning baselines, five
classification templates, and every generator/classifier combination of the
generate-then-classify setup, each in both split modes.
"""

from __future__ import annotations

from pathlib import Path

PRESET_DIR = Path(__file__).resolve().parent.parent / "src" / "kpmatch" / "presets"

SPLITS = {
    "indomain": "\n".join([
        "[split]",
        "mode = in_domain",
        "ratios = 71 12 17",
        "seed = 13",
    ]),
    "crossdomain": "\n".join([
        "[split]",
        "mode = cross_domain",
        "train_topics = 19",
        "dev_topics = 4",
        "test_topics = 5",
        "seed = 13",
    ]),
}

BASELINE_FAMILIES = ("t5-small", "t5-base", "bert-base", "bert-large")
CLASSIFICATION_TEMPLATES = ("t1", "t2", "t3", "t4", "t5")
GENERATORS = ("t5-small", "bart-large")
# short tag for the preset name -> canonical kind written into the INI
TRIPLE_CLASSIFIERS = {
    "nb": "naive_bayes",
    "svm": "svm",
    "dt": "decision_tree",
    "t5-small": "t5-small",
    "bert-base": "bert-base",
}


def _write(name: str, body: str) -> None:
    (PRESET_DIR / f"{name}.ini").write_text(body + "\n", encoding="utf-8")


def _header(kind: str, name: str) -> str:
    return "\n".join([
        "[experiment]",
        f"kind = {kind}",
        f"name = {name}",
    ])


def main() -> None:
    PRESET_DIR.mkdir(parents=True, exist_ok=True)
    count = 0

    for family in BASELINE_FAMILIES:
        for domain, split in SPLITS.items():
            name = f"baseline-{family}-{domain}"
            _write(name, "\n\n".join([
                _header("baseline", name),
                f"[model]\nfamily = {family}",
                split,
            ]))
            count += 1

    for template in CLASSIFICATION_TEMPLATES:
        for domain, split in SPLITS.items():
            name = f"approach1-{template}-t5-base-{domain}"
            _write(name, "\n\n".join([
                _header("approach1", name),
                f"[model]\nfamily = t5-base\ntemplate = {template}",
                split,
            ]))
            count += 1

    for template in ("t6", "t7"):
        for generator in GENERATORS:
            for tag, kind in TRIPLE_CLASSIFIERS.items():
                for domain, split in SPLITS.items():
                    name = f"approach2-{template}-{generator}-{tag}-{domain}"
                    _write(name, "\n\n".join([
                        _header("approach2", name),
                        f"[model]\nfamily = {generator}\ntemplate = {template}",
                        f"[classifier]\nkind = {kind}",
                        split,
                    ]))
                    count += 1

    print(f"wrote {count} presets under {PRESET_DIR}")


if __name__ == "__main__":
    main()
