"""Replay memories: reservoir sampling and a class-balanced greedy buffer."""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

import numpy as np


class ReplayBuffer:
    """Fixed-capacity reservoir over (x, y) pairs, optionally with logits.

    Algorithm R: after N insertions every seen item is retained with
    probability capacity / N.
    """

    def __init__(self, capacity: int):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = capacity
        self.xs: List[np.ndarray] = []
        self.ys: List[int] = []
        self.zs: List[Optional[np.ndarray]] = []  # stored logits (DER) or None
        self.seen = 0

    def __len__(self) -> int:
        return len(self.xs)

    def clone(self) -> "ReplayBuffer":
        out = ReplayBuffer(self.capacity)
        out.xs = [x.copy() for x in self.xs]
        out.ys = list(self.ys)
        out.zs = [None if z is None else z.copy() for z in self.zs]
        out.seen = self.seen
        return out

    def add(self, x: np.ndarray, y: int, rng: np.random.Generator,
            logits: Optional[np.ndarray] = None) -> None:
        self.seen += 1
        if self.capacity == 0:
            return  # null memory: count the offer, store nothing, draw no rng
        if len(self.xs) < self.capacity:
            self.xs.append(np.array(x, dtype=float))
            self.ys.append(int(y))
            self.zs.append(None if logits is None else np.array(logits, dtype=float))
            return
        j = int(rng.integers(0, self.seen))
        if j < self.capacity:
            self.xs[j] = np.array(x, dtype=float)
            self.ys[j] = int(y)
            self.zs[j] = None if logits is None else np.array(logits, dtype=float)

    def add_batch(self, X: np.ndarray, y: np.ndarray, rng: np.random.Generator,
                  logits: Optional[np.ndarray] = None) -> None:
        for i in range(len(y)):
            self.add(X[i], y[i], rng, None if logits is None else logits[i])

    def draw(self, n: int, rng: np.random.Generator
             ) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
        """Draw min(n, len) distinct items; logits come back only if every
        drawn item stored them."""
        if not self.xs:
            raise ValueError("cannot draw from an empty buffer")
        k = min(n, len(self.xs))
        idx = rng.choice(len(self.xs), size=k, replace=False)
        X = np.stack([self.xs[i] for i in idx])
        y = np.array([self.ys[i] for i in idx], dtype=int)
        zs = [self.zs[i] for i in idx]
        Z = np.stack(zs) if all(z is not None for z in zs) else None
        return X, y, Z


class GDumbBuffer:
    """Greedy class-balancing sampler: admit a sample when the buffer has
    room or when its class is under-represented, evicting from the currently
    largest class. Class counts stay within 1 of each other whenever every
    class has enough supply.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.items: Dict[int, List[np.ndarray]] = {}

    def __len__(self) -> int:
        return sum(len(v) for v in self.items.values())

    def clone(self) -> "GDumbBuffer":
        out = GDumbBuffer(self.capacity)
        out.items = {c: [x.copy() for x in xs] for c, xs in self.items.items()}
        return out

    def counts(self) -> Dict[int, int]:
        return {c: len(v) for c, v in self.items.items()}

    def add(self, x: np.ndarray, y: int, rng: np.random.Generator) -> None:
        y = int(y)
        bucket = self.items.setdefault(y, [])
        if len(self) < self.capacity:
            bucket.append(np.array(x, dtype=float))
            return
        largest = max(len(v) for v in self.items.values())
        if len(bucket) >= largest:
            return  # already at parity; drop the sample
        donors = sorted(c for c, v in self.items.items() if len(v) == largest)
        donor = donors[int(rng.integers(0, len(donors)))]
        evict = int(rng.integers(0, len(self.items[donor])))
        self.items[donor].pop(evict)
        bucket.append(np.array(x, dtype=float))

    def add_batch(self, X: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> None:
        for i in range(len(y)):
            self.add(X[i], y[i], rng)

    def data(self) -> Tuple[np.ndarray, np.ndarray]:
        if len(self) == 0:
            raise ValueError("buffer is empty")
        xs, ys = [], []
        for c in sorted(self.items):
            for x in self.items[c]:
                xs.append(x)
                ys.append(c)
        return np.stack(xs), np.array(ys, dtype=int)
