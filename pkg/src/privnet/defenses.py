"""Source-data transforms used in place of the adversarial term.

Both act on the source log only and keep the user count and item vocabulary.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data.sampling import user_rng
from .data.types import InteractionLog
from .errors import ConfigError, NegativeSamplingError

STRATEGIES = ("adversarial", "ldp_noise", "blurme", "none")
_TAG_LDP, _TAG_BLURME = 23, 29


@dataclass
class DefenseConfig:
    strategy: str = "adversarial"
    noise_level: float = 0.10
    dummy_count: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if not 0.0 <= self.noise_level <= 1.0:
            raise ConfigError(f"noise level must be in [0, 1], got {self.noise_level}")
        if self.dummy_count < 0:
            raise ConfigError(f"dummy count must be non-negative, got {self.dummy_count}")

    def effective_lambda(self, lam: float) -> float:
        """Only the adversarial strategy keeps the adversary term."""
        return lam if self.strategy == "adversarial" else 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def apply_ldp(log: InteractionLog, noise_level: float = 0.10, seed: int = 0) -> InteractionLog:
    """Randomized response on each user's implicit feedback.

    Every observed item is dropped with probability ``noise_level`` and
    replaced, at the same position, by a uniformly drawn item the user never
    interacted with, so per-user counts are unchanged.
    """
    if not 0.0 <= noise_level <= 1.0:
        raise ConfigError(f"noise level must be in [0, 1], got {noise_level}")
    if noise_level == 0.0:
        return log.replace_items([s.copy() for s in log.items], [t.copy() for t in log.timestamps])
    items = []
    for u, seq in enumerate(log.items):
        rng = user_rng(seed, u, _TAG_LDP)
        flip = rng.random(len(seq)) < noise_level
        out = seq.copy()
        n_flip = int(flip.sum())
        if n_flip:
            keep = np.ones(log.n_items, dtype=bool)
            keep[seq] = False
            pool = np.flatnonzero(keep)
            if len(pool) < n_flip:
                raise NegativeSamplingError(f"user {u} lacks {n_flip} non-interacted items", user=u)
            out[flip] = rng.choice(pool, size=n_flip, replace=False)
        items.append(out)
    return log.replace_items(items, [t.copy() for t in log.timestamps])


def apply_blurme(log: InteractionLog, dummy_count: int = 5, seed: int = 0) -> InteractionLog:
    """Insert ``dummy_count`` uniformly drawn non-interacted items at random positions.

    The original events keep their relative order; each dummy takes the
    timestamp of the event right before it (or after, at the very front).
    """
    if dummy_count < 0:
        raise ConfigError(f"dummy count must be non-negative, got {dummy_count}")
    if dummy_count == 0:
        return log.replace_items([s.copy() for s in log.items], [t.copy() for t in log.timestamps])
    items, stamps = [], []
    for u, (seq, ts) in enumerate(zip(log.items, log.timestamps)):
        keep = np.ones(log.n_items, dtype=bool)
        keep[seq] = False
        pool = np.flatnonzero(keep)
        if len(pool) < dummy_count:
            raise NegativeSamplingError(
                f"user {u} has only {len(pool)} non-interacted items, {dummy_count} dummies requested",
                user=u)
        rng = user_rng(seed, u, _TAG_BLURME)
        dummies = rng.choice(pool, size=dummy_count, replace=False)
        total = len(seq) + dummy_count
        slots = np.sort(rng.choice(total, size=dummy_count, replace=False))
        is_dummy = np.zeros(total, dtype=bool)
        is_dummy[slots] = True
        out = np.empty(total, dtype=np.int64)
        out[is_dummy] = dummies
        out[~is_dummy] = seq
        new_ts = np.empty(total, dtype=np.int64)
        new_ts[~is_dummy] = ts
        last = ts[0] if len(ts) else 0
        for pos in range(total):
            if is_dummy[pos]:
                new_ts[pos] = last
            else:
                last = new_ts[pos]
        items.append(out)
        stamps.append(new_ts)
    return log.replace_items(items, stamps)


def apply_defense(source: InteractionLog, config: DefenseConfig) -> InteractionLog:
    if config.strategy == "ldp_noise":
        return apply_ldp(source, config.noise_level, config.seed)
    if config.strategy == "blurme":
        return apply_blurme(source, config.dummy_count, config.seed)
    return source
