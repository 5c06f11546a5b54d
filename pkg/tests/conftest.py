from __future__ import annotations

import itertools
from pathlib import Path

import pytest

from kpmatch.corpus import ArgKPRecord, load_argkp
from kpmatch.runtime import StubRuntime

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def table1_records() -> list[ArgKPRecord]:
    return load_argkp(DATA_DIR / "table1_pairs.csv")


@pytest.fixture
def smoke_path() -> Path:
    return DATA_DIR / "smoke.csv"


@pytest.fixture
def smoke_records(smoke_path) -> list[ArgKPRecord]:
    return load_argkp(smoke_path)


@pytest.fixture
def stub() -> StubRuntime:
    return StubRuntime()


def make_records(
    n: int,
    n_topics: int = 4,
    positive_every: int = 2,
    start_id: int = 1,
) -> list[ArgKPRecord]:
    """Synthetic labeled pairs spread round-robin over ``n_topics`` topics."""
    records = []
    topics = [f"topic {chr(ord('a') + i)}" for i in range(n_topics)]
    for i, topic in zip(range(n), itertools.cycle(topics)):
        label = 1 if i % positive_every == 0 else 0
        records.append(ArgKPRecord(
            topic=topic,
            argument=f"argument number {i} about {topic} with enough words to matter.",
            key_point=f"Key point {i % 5} for {topic}",
            stance=1 if i % 3 else -1,
            label=label,
            pair_id=f"p{start_id + i:06d}",
        ))
    return records
