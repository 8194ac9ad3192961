"""Core data containers for interaction logs, attributes and examples."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ..errors import ConfigError, DataError

DOMAINS = ("source", "target")


@dataclass
class InteractionLog:
    """Chronological per-user item sequences for one domain.

    ``items[u]`` lists user ``u``'s items oldest first; ``timestamps[u]`` is
    aligned with it. Users are indexed ``0..n_users-1`` identically across the
    two domains and the attribute table.
    """

    domain: str
    n_items: int
    items: list[np.ndarray]
    timestamps: list[np.ndarray] | None = None

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ConfigError(f"unknown domain {self.domain!r}")
        self.items = [np.asarray(s, dtype=np.int64) for s in self.items]
        if self.timestamps is None:
            self.timestamps = [np.arange(len(s), dtype=np.int64) for s in self.items]
        else:
            self.timestamps = [np.asarray(t, dtype=np.int64) for t in self.timestamps]

    @property
    def n_users(self) -> int:
        return len(self.items)

    @property
    def n_events(self) -> int:
        return int(sum(len(s) for s in self.items))

    def lengths(self) -> np.ndarray:
        return np.array([len(s) for s in self.items], dtype=np.int64)

    def validate(self) -> "InteractionLog":
        if self.n_items <= 0:
            raise DataError(f"{self.domain} log has an empty item vocabulary")
        if len(self.timestamps) != len(self.items):
            raise DataError("items and timestamps disagree on the number of users")
        for u, (seq, ts) in enumerate(zip(self.items, self.timestamps)):
            if len(seq) != len(ts):
                raise DataError(f"user {u}: {len(seq)} items but {len(ts)} timestamps")
            if len(seq) and (seq.min() < 0 or seq.max() >= self.n_items):
                raise DataError(f"user {u}: item id outside [0, {self.n_items})")
            if np.any(np.diff(ts) < 0):
                raise DataError(f"user {u}: events not in chronological order")
            if len(np.unique(seq)) != len(seq):
                raise DataError(f"user {u}: duplicate item in {self.domain} domain")
        return self

    def replace_items(self, items, timestamps=None) -> "InteractionLog":
        return InteractionLog(self.domain, self.n_items, items, timestamps)

    def subset(self, users) -> "InteractionLog":
        users = list(users)
        return InteractionLog(self.domain, self.n_items,
                              [self.items[u] for u in users],
                              [self.timestamps[u] for u in users])

    def binary_matrix(self) -> np.ndarray:
        """Dense ``(n_users, n_items)`` 0/1 interaction matrix."""
        mat = np.zeros((self.n_users, self.n_items))
        for u, seq in enumerate(self.items):
            mat[u, seq] = 1.0
        return mat

    def equals(self, other: "InteractionLog") -> bool:
        return (self.domain == other.domain and self.n_items == other.n_items
                and self.n_users == other.n_users
                and all(np.array_equal(a, b) for a, b in zip(self.items, other.items))
                and all(np.array_equal(a, b) for a, b in zip(self.timestamps, other.timestamps)))

    def to_dict(self) -> dict:
        return {"domain": self.domain, "n_items": self.n_items,
                "items": [s.tolist() for s in self.items],
                "timestamps": [t.tolist() for t in self.timestamps]}

    @classmethod
    def from_dict(cls, d: dict) -> "InteractionLog":
        return cls(d["domain"], d["n_items"], d["items"], d["timestamps"])


@dataclass(frozen=True)
class Attribute:
    name: str
    n_classes: int
    class_names: tuple[str, ...] = ()


@dataclass
class PrivateAttributeTable:
    """Per-user categorical private attributes and the public-user flag."""

    attributes: list[Attribute]
    values: np.ndarray
    public: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64).reshape(-1, len(self.attributes))
        if self.public is None:
            self.public = np.zeros(len(self.values), dtype=bool)
        self.public = np.asarray(self.public, dtype=bool)
        self.validate()

    @property
    def n_users(self) -> int:
        return len(self.values)

    @property
    def n_attributes(self) -> int:
        return len(self.attributes)

    @property
    def class_counts(self) -> list[int]:
        return [a.n_classes for a in self.attributes]

    def validate(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise DataError(f"attribute names must be unique, got {names}")
        for p, attr in enumerate(self.attributes):
            col = self.values[:, p]
            if len(col) and (col.min() < 0 or col.max() >= attr.n_classes):
                raise DataError(f"attribute {attr.name!r} has values outside [0, {attr.n_classes})")
        if len(self.public) != len(self.values):
            raise DataError("public flag length differs from user count")

    def with_public(self, users) -> "PrivateAttributeTable":
        flag = np.zeros(self.n_users, dtype=bool)
        flag[np.asarray(users, dtype=np.int64)] = True
        return PrivateAttributeTable(self.attributes, self.values.copy(), flag)

    def subset(self, users) -> "PrivateAttributeTable":
        users = np.asarray(users, dtype=np.int64)
        return PrivateAttributeTable(self.attributes, self.values[users], self.public[users])

    def to_dict(self) -> dict:
        return {"attributes": [{"name": a.name, "n_classes": a.n_classes,
                                "class_names": list(a.class_names)} for a in self.attributes],
                "values": self.values.tolist(), "public": self.public.astype(int).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PrivateAttributeTable":
        attrs = [Attribute(a["name"], a["n_classes"], tuple(a.get("class_names", ())))
                 for a in d["attributes"]]
        return cls(attrs, np.asarray(d["values"], dtype=np.int64).reshape(-1, len(attrs)),
                   np.asarray(d["public"], dtype=bool))


class RankingExample(NamedTuple):
    user: int
    history: tuple[int, ...]
    candidate: int
    label: int
    domain: str


@dataclass
class RankingExamples:
    """Columnar batch of ranking examples.

    ``history`` is right-padded with zeros; ``lengths`` gives the true window
    size of each row.
    """

    domain: str
    users: np.ndarray
    history: np.ndarray
    lengths: np.ndarray
    candidates: np.ndarray
    labels: np.ndarray
    skipped_users: int = 0

    def __len__(self):
        return len(self.users)

    def __getitem__(self, i) -> RankingExample:
        n = int(self.lengths[i])
        return RankingExample(int(self.users[i]), tuple(int(x) for x in self.history[i, :n]),
                              int(self.candidates[i]), int(self.labels[i]), self.domain)

    def mask(self) -> np.ndarray:
        return np.arange(self.history.shape[1])[None, :] < self.lengths[:, None]

    def take(self, idx) -> "RankingExamples":
        return RankingExamples(self.domain, self.users[idx], self.history[idx],
                               self.lengths[idx], self.candidates[idx], self.labels[idx])


class PrivacyExample(NamedTuple):
    user: int
    attribute: int
    label: int


@dataclass
class EvalSet:
    """Leave-one-out ranking instances: one held-out positive per user.

    Candidates are the sampled negatives followed by the positive, so the
    positive is always the last column.
    """

    users: np.ndarray
    history: np.ndarray
    lengths: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray

    def __len__(self):
        return len(self.users)

    @property
    def candidates(self) -> np.ndarray:
        return np.concatenate([self.negatives, self.positives[:, None]], axis=1)

    def mask(self) -> np.ndarray:
        return np.arange(self.history.shape[1])[None, :] < self.lengths[:, None]

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist()
                for k in ("users", "history", "lengths", "positives", "negatives")}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalSet":
        return cls(*(np.asarray(d[k], dtype=np.int64)
                     for k in ("users", "history", "lengths", "positives", "negatives")))


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2)
    seed: int = 0
    public_fraction: float = 0.8

    def __post_init__(self):
        if len(self.ratios) != 3 or min(self.ratios) <= 0:
            raise ConfigError(f"split ratios must be three positive numbers, got {self.ratios}")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios must sum to 1, got {sum(self.ratios)}")
        if not 0.0 < self.public_fraction < 1.0:
            raise ConfigError(f"public fraction must be in (0, 1), got {self.public_fraction}")


@dataclass
class PrivacySplit:
    """Partition of users into public (attacker-visible) and private ones.

    ``train`` is the public set; it is further divided into ``fit`` and
    ``valid`` following the 7:1 proportion of the train:valid:test ratios.
    """

    train: np.ndarray
    test: np.ndarray
    fit: np.ndarray = field(default=None)
    valid: np.ndarray = field(default=None)

    def __iter__(self):
        return iter((self.train, self.test))

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("train", "test", "fit", "valid")}

    @classmethod
    def from_dict(cls, d: dict) -> "PrivacySplit":
        return cls(*(np.asarray(d[k], dtype=np.int64) for k in ("train", "test", "fit", "valid")))
