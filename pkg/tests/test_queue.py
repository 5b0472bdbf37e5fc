import numpy as np
import pytest

from kdalign.errors import BadConfig, DimMismatch
from kdalign.negqueue import NegativeQueue


def rows(*vals):
    return np.asarray(vals, dtype=np.float64)


def test_new_queue_is_empty():
    q = NegativeQueue(3, 2)
    assert len(q) == 0
    assert q.snapshot().shape == (0, 2)


def test_full_scale_capacity():
    q = NegativeQueue(65536, 768)
    assert q.capacity == 65536
    assert len(q) == 0


def test_zero_capacity_rejected():
    with pytest.raises(BadConfig):
        NegativeQueue(0, 2)
    with pytest.raises(BadConfig):
        NegativeQueue(3, 0)


def test_fifo_eviction():
    q = NegativeQueue(3, 1)
    q.push_batch(rows([1], [2]))
    assert np.array_equal(q.snapshot(), rows([1], [2]))
    q.push_batch(rows([3], [4]))
    assert np.array_equal(q.snapshot(), rows([2], [3], [4]))


def test_oversized_push_keeps_newest():
    q = NegativeQueue(3, 1)
    q.push_batch(rows([1], [2], [3], [4], [5]))
    assert np.array_equal(q.snapshot(), rows([3], [4], [5]))


def test_snapshot_is_a_copy():
    q = NegativeQueue(4, 2)
    q.push_batch(np.eye(2))
    snap = q.snapshot()
    q.push_batch(np.full((1, 2), 9.0))
    assert np.array_equal(snap, np.eye(2))


def test_snapshot_identity_rows():
    q = NegativeQueue(4, 2)
    q.push_batch(np.eye(2))
    assert np.array_equal(q.snapshot(), [[1, 0], [0, 1]])


def test_dim_mismatch():
    q = NegativeQueue(3, 2)
    with pytest.raises(DimMismatch):
        q.push_batch(np.zeros((2, 3)))


def test_randomized_sequences_match_list_oracle(rng):
    for trial in range(1000):
        cap = int(rng.integers(1, 9))
        q = NegativeQueue(cap, 2)
        oracle = []
        total = 0
        for _ in range(int(rng.integers(1, 6))):
            n = int(rng.integers(1, 12))
            batch = rng.standard_normal((n, 2))
            q.push_batch(batch)
            oracle.extend(batch.tolist())
            oracle = oracle[-cap:]
            total += n
            assert len(q) == min(cap, total)
            assert np.array_equal(q.snapshot(), np.asarray(oracle))


def test_state_roundtrip(rng):
    q = NegativeQueue(5, 3)
    q.push_batch(rng.standard_normal((7, 3)))
    q2 = NegativeQueue.from_state(5, 3, q.state())
    assert np.array_equal(q.snapshot(), q2.snapshot())
