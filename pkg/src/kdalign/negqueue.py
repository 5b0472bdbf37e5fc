"""Fixed-capacity FIFO queue of teacher embeddings used as keys by the
distribution-replication loss."""

import numpy as np

from .errors import BadConfig, DimMismatch


class NegativeQueue:
    """Ring buffer of D-dimensional rows; oldest rows are evicted first."""

    def __init__(self, capacity: int, dim: int):
        if capacity < 1 or dim < 1:
            raise BadConfig(f"capacity and dim must be >= 1, got {capacity}, {dim}")
        self.capacity = int(capacity)
        self.dim = int(dim)
        self._buf = np.zeros((self.capacity, self.dim), dtype=np.float64)
        self._head = 0  # next write position
        self._len = 0

    def __len__(self):
        return self._len

    def push_batch(self, batch):
        """Append rows in batch order, evicting the oldest beyond capacity."""
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2 or batch.shape[1] != self.dim:
            raise DimMismatch(f"push_batch: expected (*, {self.dim}), got {batch.shape}")
        n = batch.shape[0]
        if n >= self.capacity:
            # single oversized push keeps only the newest rows
            self._buf[:] = batch[n - self.capacity:]
            self._head = 0
            self._len = self.capacity
            return
        end = self._head + n
        if end <= self.capacity:
            self._buf[self._head:end] = batch
        else:
            k = self.capacity - self._head
            self._buf[self._head:] = batch[:k]
            self._buf[:end - self.capacity] = batch[k:]
        self._head = end % self.capacity
        self._len = min(self.capacity, self._len + n)

    def snapshot(self) -> np.ndarray:
        """Copy of the contents in oldest-to-newest order (len x dim)."""
        if self._len < self.capacity:
            return self._buf[:self._len].copy()
        return np.roll(self._buf, -self._head, axis=0)

    def state(self):
        """Serializable state: rows oldest-to-newest."""
        return self.snapshot()

    @classmethod
    def from_state(cls, capacity, dim, rows):
        q = cls(capacity, dim)
        rows = np.asarray(rows, dtype=np.float64)
        if rows.shape[0]:
            q.push_batch(rows)
        return q
