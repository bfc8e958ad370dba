"""Population members, their visited-state samples and cached distributions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from psrolab.policies import Policy


class StateBuffer:
    """Uniform reservoir sample of visited (features, mask) decision points."""

    def __init__(self, capacity: int, feature_size: int, num_actions: int):
        self.capacity = capacity
        self.x = np.zeros((capacity, feature_size))
        self.mask = np.zeros((capacity, num_actions), dtype=bool)
        self.size = 0
        self.seen = 0

    def __len__(self):
        return self.size

    def add(self, x, mask, rng):
        self.seen += 1
        if self.size < self.capacity:
            i = self.size
            self.size += 1
        else:
            i = int(rng.integers(0, self.seen))
            if i >= self.capacity:
                return
        self.x[i] = x
        self.mask[i] = mask

    def extend(self, steps, rng):
        for x, mask, _ in steps:
            self.add(x, mask, rng)

    def sample(self, n: int, rng):
        """Up to ``n`` distinct stored states (all of them when fewer are stored)."""
        if self.size <= n:
            idx = np.arange(self.size)
        else:
            idx = np.sort(rng.choice(self.size, size=n, replace=False))
        return self.x[idx], self.mask[idx]


class DistributionCache:
    """Memoizes a frozen policy's smoothed distribution per feature vector."""

    def __init__(self, policy: Policy, temperature: float = 1.0, limit: int = 200_000):
        self.policy = policy
        self.temperature = temperature
        self.limit = limit
        self._memo = {}

    def __call__(self, X, masks) -> np.ndarray:
        X = np.atleast_2d(X)
        masks = np.atleast_2d(masks)
        out = np.empty(masks.shape)
        missing = []
        for i, x in enumerate(X):
            p = self._memo.get(x.tobytes())
            if p is None:
                missing.append(i)
            else:
                out[i] = p
        if missing:
            probs = self.policy.distribution(X[missing], masks[missing], self.temperature)
            for j, i in enumerate(missing):
                out[i] = probs[j]
                if len(self._memo) < self.limit:
                    self._memo[X[i].tobytes()] = probs[j]
        return out


@dataclass(eq=False)
class Member:
    """One population policy plus its provenance and visited states."""

    policy: Policy
    iteration: int
    tag: str
    states: StateBuffer | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def cached_distribution(self, temperature: float = 1.0) -> DistributionCache:
        c = self._cache.get(temperature)
        if c is None:
            c = self._cache[temperature] = DistributionCache(self.policy, temperature)
        return c


class Population:
    """Per-player lists of members; indices never change once appended."""

    def __init__(self, members=None):
        self.members = members if members is not None else [[], []]

    def __getitem__(self, player) -> list[Member]:
        return self.members[player]

    def policies(self, player) -> list[Policy]:
        return [m.policy for m in self.members[player]]

    def sizes(self) -> tuple[int, int]:
        return len(self.members[0]), len(self.members[1])

    def append(self, player, member: Member) -> int:
        self.members[player].append(member)
        return len(self.members[player]) - 1
