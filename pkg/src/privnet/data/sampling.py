"""Training-example generation, leave-one-out splits and the public-user split."""

from __future__ import annotations

import logging

import numpy as np

from ..errors import ConfigError, DataError, NegativeSamplingError
from .types import EvalSet, InteractionLog, PrivacySplit, PrivateAttributeTable, RankingExamples

log = logging.getLogger(__name__)

# Stream tags keep independent consumers of one seed from sharing draws.
_TAG_TRAIN_NEG, _TAG_EVAL_NEG, _TAG_PUBLIC = 11, 13, 17


def user_rng(seed: int, user: int, tag: int = 0) -> np.random.Generator:
    """Deterministic per-user stream derived from ``(seed, user, tag)``."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, int(user), int(tag)])


def _complement(n_items: int, seen: np.ndarray) -> np.ndarray:
    keep = np.ones(n_items, dtype=bool)
    keep[seen] = False
    return np.flatnonzero(keep)


def pad_windows(seqs, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad the last ``window`` items of each sequence into a matrix."""
    out = np.zeros((len(seqs), window), dtype=np.int64)
    lengths = np.zeros(len(seqs), dtype=np.int64)
    for r, s in enumerate(seqs):
        tail = s[-window:] if window else s[:0]
        out[r, :len(tail)] = tail
        lengths[r] = len(tail)
    return out, lengths


def generate_ranking_examples(log_: InteractionLog, window: int = 10, neg_ratio: int = 1,
                              seed: int = 0, exclude=None) -> RankingExamples:
    """Slide over each user's sequence to build positive and negative examples.

    For ``[i_1, ..., i_l]`` the positives are ``(i_1..i_{c-1} -> i_c)`` for
    ``c = 2..l`` with the history cut to its last ``window`` items. Each
    positive is paired with ``neg_ratio`` negatives that reuse its history and
    draw the candidate uniformly from items the user never touched. Items in
    ``exclude[u]`` (e.g. held-out test items) are also never sampled.
    """
    if window < 1 or neg_ratio < 0:
        raise ConfigError(f"window must be >= 1 and neg_ratio >= 0, got {window}, {neg_ratio}")
    users, hists, cands, labels = [], [], [], []
    skipped = 0
    for u, seq in enumerate(log_.items):
        l = len(seq)
        if l < 2:
            skipped += 1
            continue
        prefixes = [seq[:c] for c in range(1, l)]
        pos = seq[1:]
        if neg_ratio:
            seen = seq if exclude is None else np.union1d(seq, exclude[u])
            pool = _complement(log_.n_items, seen)
            if len(pool) == 0:
                raise NegativeSamplingError(
                    f"user {u} interacted with every {log_.domain} item; cannot sample negatives",
                    user=u)
            negs = user_rng(seed, u, _TAG_TRAIN_NEG).choice(pool, size=(l - 1, neg_ratio))
        for k in range(l - 1):
            users.append(u)
            hists.append(prefixes[k])
            cands.append(pos[k])
            labels.append(1)
            for r in range(neg_ratio):
                users.append(u)
                hists.append(prefixes[k])
                cands.append(negs[k, r])
                labels.append(0)
    if skipped:
        log.warning("%d users with fewer than 2 %s interactions skipped", skipped, log_.domain)
    history, lengths = pad_windows(hists, window)
    return RankingExamples(log_.domain, np.array(users, dtype=np.int64), history, lengths,
                           np.array(cands, dtype=np.int64), np.array(labels, dtype=np.int64),
                           skipped_users=skipped)


def leave_one_out_split(log_: InteractionLog, n_negatives: int = 99, seed: int = 0,
                        window: int = 10, exclude=None) -> tuple[InteractionLog, EvalSet]:
    """Hold out every user's latest interaction and sample ranking negatives.

    Negatives are drawn without replacement from items absent from the
    user's sequence (and from ``exclude[u]``). Returns the remaining log and
    the held-out instances, whose histories are the last ``window`` items
    preceding the positive.
    """
    train, hist_seqs, positives, negatives = [], [], [], []
    train_ts = []
    for u, seq in enumerate(log_.items):
        if len(seq) < 2:
            raise DataError(f"user {u} has {len(seq)} {log_.domain} interactions; need at least 2")
        seen = seq if exclude is None else np.union1d(seq, exclude[u])
        pool = _complement(log_.n_items, seen)
        if len(pool) < n_negatives:
            raise NegativeSamplingError(
                f"user {u} has only {len(pool)} non-interacted items, {n_negatives} negatives requested",
                user=u)
        negatives.append(user_rng(seed, u, _TAG_EVAL_NEG).choice(pool, size=n_negatives, replace=False))
        positives.append(seq[-1])
        hist_seqs.append(seq[:-1])
        train.append(seq[:-1])
        train_ts.append(log_.timestamps[u][:-1])
    history, lengths = pad_windows(hist_seqs, window)
    heldout = EvalSet(np.arange(log_.n_users, dtype=np.int64), history, lengths,
                      np.array(positives, dtype=np.int64),
                      np.array(negatives, dtype=np.int64).reshape(log_.n_users, n_negatives))
    return log_.replace_items(train, train_ts), heldout


def ranking_splits(log_: InteractionLog, n_negatives: int = 99, seed: int = 0, window: int = 10):
    """Test on the latest item, validate on the second latest, train on the rest.

    Returns ``(train_log, valid, test)``. Validation negatives also avoid the
    test item, and test histories include the validation item.
    """
    full = log_.items
    rest, test = leave_one_out_split(log_, n_negatives, seed, window)
    train, valid = leave_one_out_split(rest, n_negatives, seed + 1, window, exclude=full)
    return train, valid, test


def split_public_users(table: PrivateAttributeTable, fraction: float, seed: int = 0,
                       ratios=(0.7, 0.1, 0.2)) -> PrivacySplit:
    """Randomly choose ``floor(fraction * m)`` public users (at least one).

    The public users form the attacker's training pool; a validation slice
    of relative size ``valid / (train + valid)`` is carved from them.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"public-user fraction must be in (0, 1), got {fraction}")
    m = table.n_users
    n_pub = max(1, int(np.floor(fraction * m + 1e-9)))
    if n_pub >= m:
        raise ConfigError(f"fraction {fraction} leaves no private users among {m}")
    perm = np.random.default_rng([int(seed) & 0xFFFFFFFF, _TAG_PUBLIC]).permutation(m)
    train, test = np.sort(perm[:n_pub]), np.sort(perm[n_pub:])
    share = ratios[1] / (ratios[0] + ratios[1])
    n_valid = int(round(n_pub * share)) if n_pub >= 2 else 0
    n_valid = min(max(n_valid, 1 if n_pub >= 2 else 0), n_pub - 1)
    inner = perm[:n_pub]
    return PrivacySplit(train, test, fit=np.sort(inner[n_valid:]), valid=np.sort(inner[:n_valid]))
