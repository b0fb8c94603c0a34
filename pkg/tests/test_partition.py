import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stabfrag.partition import MassPartition, rank

masses = st.lists(st.floats(1e-6, 10.0), min_size=0, max_size=30)


@given(masses, st.floats(0.0, 1.0))
def test_from_unsorted_ranks_and_conserves(parts, rem):
    total = sum(parts) + rem + 1e-3
    mp = MassPartition.from_unsorted(parts, rem + 1e-3, total)
    assert np.all(np.diff(mp.parts) <= 0)
    assert mp.parts.sum() + mp.remainder == pytest.approx(total)


@given(masses)
def test_jsonl_roundtrip_is_exact(parts):
    mp = MassPartition.from_unsorted(parts, 0.5, sum(parts) + 0.5)
    rec = json.loads(mp.to_jsonl(t=1.0, stream_id=3))
    back = MassPartition.from_record(rec)
    assert np.array_equal(back.parts, mp.parts)
    assert back.remainder == mp.remainder and back.total == mp.total
    assert rec["t"] == 1.0 and rec["stream_id"] == 3


def test_rank_is_stable_for_ties():
    assert rank(np.array([0.1, 0.5, 0.1, 0.3])).tolist() == [0.5, 0.3, 0.1, 0.1]


def test_largest_and_powers():
    mp = MassPartition(np.array([0.5, 0.3]), 0.2, 1.0)
    assert mp.largest(1) == 0.5 and mp.largest(2) == 0.3 and mp.largest(3) == 0.0
    assert mp.sum_of_powers(2.0) == pytest.approx(0.34)
    sc = mp.scaled(2.0)
    assert sc.total == 2.0 and sc.parts.tolist() == [1.0, 0.6]


def test_parts_are_read_only():
    mp = MassPartition(np.array([0.5]), 0.5, 1.0)
    with pytest.raises(ValueError):
        mp.parts[0] = 0.1


@pytest.mark.parametrize(
    "parts, rem, total",
    [([0.3, 0.5], 0.2, 1.0), ([0.5, -0.1], 0.6, 1.0), ([0.5], -0.1, 0.4), ([0.5], 0.1, 1.0), ([], 0.0, 0.0)],
)
def test_invalid_partitions(parts, rem, total):
    with pytest.raises(ValueError):
        MassPartition(np.array(parts, dtype=float), rem, total)
