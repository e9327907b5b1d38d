import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from caia import AttackTuple, AttributeSpace, LogitRecord  # noqa: E402


@pytest.fixture
def hair_space():
    return AttributeSpace("hair_color", ("black", "blond", "brown", "gray"))


@pytest.fixture
def gender_space():
    return AttributeSpace("gender", ("female", "male"))


def make_tuples(space, n, prefix="t"):
    """n attack tuples with synthetic image references."""
    return [
        AttackTuple(
            tuple_id=f"{prefix}{i:05d}",
            images={v: f"{prefix}{i:05d}/{v}" for v in space.values},
        )
        for i in range(n)
    ]


def records_from_matrix(space, tuples, matrices):
    """LogitRecords for (tuple, value) pairs from per-tuple (k, Y) matrices."""
    records = []
    for tup, matrix in zip(tuples, matrices):
        for z, value in enumerate(space.values):
            records.append(LogitRecord(tup.tuple_id, value, matrix[z]))
    return records


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
