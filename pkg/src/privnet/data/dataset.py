"""Assembly of the cross-domain training/evaluation bundle and its on-disk container."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import DataError, FormatError
from .sampling import pad_windows, ranking_splits, split_public_users
from .types import EvalSet, InteractionLog, PrivacySplit, PrivateAttributeTable, SplitSpec

DATA_MAGIC = b"PRIVNET-DATA-1"


@dataclass
class CrossDomainData:
    """Everything training and evaluation need, for one split of one dataset.

    The transfer inputs describe, per user, the source window fed to the
    source network whenever that user's transferred representation is
    needed: the user's latest source item acts as the attention query over
    the ``window`` source items preceding it.
    """

    source: InteractionLog
    target_train: InteractionLog
    valid: EvalSet
    test: EvalSet
    table: PrivateAttributeTable
    privacy: PrivacySplit
    window: int
    transfer_history: np.ndarray
    transfer_lengths: np.ndarray
    transfer_query: np.ndarray

    @property
    def n_users(self) -> int:
        return self.target_train.n_users

    def transfer_inputs(self, users):
        users = np.asarray(users, dtype=np.int64)
        hist = self.transfer_history[users]
        mask = np.arange(self.window)[None, :] < self.transfer_lengths[users][:, None]
        return hist, mask, self.transfer_query[users]

    def with_public_fraction(self, fraction: float, seed: int, ratios=(0.7, 0.1, 0.2)) -> "CrossDomainData":
        """Same ranking splits, new public/private user partition."""
        privacy = split_public_users(self.table, fraction, seed, ratios)
        return replace(self, privacy=privacy, table=self.table.with_public(privacy.train))

    def with_source(self, source: InteractionLog) -> "CrossDomainData":
        hist, lengths, query = transfer_inputs(source, self.window)
        return replace(self, source=source, transfer_history=hist,
                       transfer_lengths=lengths, transfer_query=query)


def transfer_inputs(source: InteractionLog, window: int):
    seqs = []
    for u, seq in enumerate(source.items):
        if len(seq) < 2:
            raise DataError(f"user {u} has {len(seq)} source interactions; need at least 2")
        seqs.append(seq[:-1])
    hist, lengths = pad_windows(seqs, window)
    query = np.array([seq[-1] for seq in source.items], dtype=np.int64)
    return hist, lengths, query


def filter_users(source: InteractionLog, target: InteractionLog, table: PrivateAttributeTable,
                 min_source: int = 2, min_target: int = 3):
    """Drop users too short for leave-one-out evaluation in either domain."""
    keep = np.flatnonzero((source.lengths() >= min_source) & (target.lengths() >= min_target))
    return source.subset(keep), target.subset(keep), table.subset(keep)


def build_dataset(source: InteractionLog, target: InteractionLog, table: PrivateAttributeTable,
                  split: SplitSpec = SplitSpec(), window: int = 10,
                  n_negatives: int = 99) -> CrossDomainData:
    if not (source.n_users == target.n_users == table.n_users):
        raise DataError(f"user counts differ: source {source.n_users}, target {target.n_users}, "
                        f"attributes {table.n_users}")
    target_train, valid, test = ranking_splits(target, n_negatives, split.seed, window)
    privacy = split_public_users(table, split.public_fraction, split.seed, split.ratios)
    hist, lengths, query = transfer_inputs(source, window)
    return CrossDomainData(source, target_train, valid, test, table.with_public(privacy.train),
                           privacy, window, hist, lengths, query)


# -- container ---------------------------------------------------------------

def dataset_to_dict(data: CrossDomainData, target_full: InteractionLog, seed: int,
                    meta: dict | None = None) -> dict:
    return {"source": data.source.to_dict(), "target": target_full.to_dict(),
            "table": data.table.to_dict(), "privacy": data.privacy.to_dict(),
            "valid": data.valid.to_dict(), "test": data.test.to_dict(),
            "target_train": data.target_train.to_dict(), "window": data.window,
            "seed": seed, "meta": meta or {}}


def save_container(path, source: InteractionLog, target: InteractionLog,
                   table: PrivateAttributeTable, split: SplitSpec, window: int = 10,
                   n_negatives: int = 99, meta: dict | None = None) -> CrossDomainData:
    """Build the split bundle and write it as a deterministic text container."""
    data = build_dataset(source, target, table, split, window, n_negatives)
    payload = dataset_to_dict(data, target, split.seed, meta)
    payload["split"] = {"ratios": list(split.ratios), "seed": split.seed,
                        "public_fraction": split.public_fraction, "n_negatives": n_negatives}
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    Path(path).write_bytes(DATA_MAGIC + b"\n" + text.encode("utf-8") + b"\n")
    return data


def read_container(path) -> dict:
    raw = Path(path).read_bytes()
    magic, _, body = raw.partition(b"\n")
    if magic != DATA_MAGIC:
        raise FormatError(f"{path}: not a dataset container (expected {DATA_MAGIC.decode()})")
    try:
        return json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt dataset container ({exc})") from None


def load_container(path) -> tuple[CrossDomainData, InteractionLog, dict]:
    """Return ``(data, full_target_log, raw_payload)``."""
    d = read_container(path)
    source = InteractionLog.from_dict(d["source"])
    window = d["window"]
    hist, lengths, query = transfer_inputs(source, window)
    data = CrossDomainData(source, InteractionLog.from_dict(d["target_train"]),
                           EvalSet.from_dict(d["valid"]), EvalSet.from_dict(d["test"]),
                           PrivateAttributeTable.from_dict(d["table"]),
                           PrivacySplit.from_dict(d["privacy"]), window, hist, lengths, query)
    return data, InteractionLog.from_dict(d["target"]), d


def content_hash(path) -> str:
    """Git blob hash of a file: ``sha1(b"blob <size>\\0" + content)``."""
    raw = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(raw) + raw).hexdigest()
