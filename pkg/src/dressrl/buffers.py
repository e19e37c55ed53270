"""Fixed-capacity FIFO replay storage with named array fields."""

from __future__ import annotations

import numpy as np


class ReplayBuffer:
    """Ring buffer; ``fields`` maps a name to the per-item shape.

    >>> buf = ReplayBuffer(3, {"s": (2,), "r": ()})
    >>> for i in range(4):
    ...     buf.push(s=[i, i], r=i)
    >>> sorted(buf.data["r"][: buf.size].tolist())
    [1.0, 2.0, 3.0]
    """

    def __init__(self, capacity: int, fields: dict[str, tuple[int, ...]]):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.data = {k: np.zeros((self.capacity, *shape)) for k, shape in fields.items()}
        self.size = 0
        self._next = 0

    def __len__(self) -> int:
        return self.size

    def push(self, **item) -> None:
        if item.keys() != self.data.keys():
            raise KeyError(f"expected fields {sorted(self.data)}, got {sorted(item)}")
        i = self._next
        for k, v in item.items():
            self.data[k][i] = v
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def oldest_index(self) -> int:
        return self._next if self.size == self.capacity else 0

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if batch_size > self.size:
            raise ValueError(f"cannot sample {batch_size} items from a buffer of {self.size}")
        return rng.choice(self.size, size=batch_size, replace=False)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        idx = self.sample_indices(batch_size, rng)
        return {k: v[idx] for k, v in self.data.items()}

    def ordered(self) -> dict[str, np.ndarray]:
        """Contents from oldest to newest."""
        order = (self.oldest_index() + np.arange(self.size)) % self.capacity
        return {k: v[order] for k, v in self.data.items()}
