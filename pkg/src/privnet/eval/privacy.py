"""Attribute-inference evaluation: weighted P/R/F1 and a freshly trained attacker."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import nn
from ..errors import ContractError
from ..nn import AdamState, GradTape, Tensor


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Counts with true classes on rows and predicted classes on columns."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def weighted_prf(confusion) -> tuple[float, float, float]:
    """Support-weighted precision, recall and F1.

    A class never predicted contributes precision 0, and F1 0 when both its
    precision and recall are 0.
    """
    cm = np.asarray(confusion, dtype=np.float64)
    total = cm.sum()
    if total <= 0:
        raise ContractError("weighted_prf needs at least one instance")
    tp = np.diag(cm)
    predicted = cm.sum(axis=0)
    support = cm.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)
    w = support / total
    return float(w @ precision), float(w @ recall), float(w @ f1)


def majority_f1(y_true, n_classes: int, reference=None) -> float:
    """Weighted F1 of always predicting the most frequent class of ``reference``."""
    ref = np.asarray(y_true if reference is None else reference, dtype=np.int64)
    majority = int(np.bincount(ref, minlength=n_classes).argmax())
    y_true = np.asarray(y_true, dtype=np.int64)
    return weighted_prf(confusion_matrix(y_true, np.full_like(y_true, majority), n_classes))[2]


@dataclass
class PrivacyResult:
    attribute: str
    confusion: np.ndarray
    precision: float
    recall: float
    f1: float
    majority_f1: float

    @classmethod
    def from_predictions(cls, name, y_true, y_pred, n_classes, train_labels=None):
        cm = confusion_matrix(y_true, y_pred, n_classes)
        p, r, f = weighted_prf(cm)
        return cls(name, cm, p, r, f, majority_f1(y_true, n_classes, train_labels))


def attacker_f1(attacker, x_trans: np.ndarray, labels: np.ndarray) -> list[float]:
    from ..model import attacker_predict

    out = []
    for p, probs in enumerate(attacker_predict(attacker, x_trans)):
        cm = confusion_matrix(labels[:, p], probs.argmax(axis=1), probs.shape[1])
        out.append(weighted_prf(cm)[2])
    return out


@dataclass
class AttackConfig:
    hidden: int = 64
    learning_rate: float = 5e-4
    batch_size: int = 128
    max_epochs: int = 200
    patience: int = 10
    clip_norm: float = 5.0
    seed: int = 0


@dataclass
class AttackOutcome:
    results: list[PrivacyResult]
    attacker: object = None
    epochs: int = 0
    valid_losses: list[float] = field(default_factory=list)


def fit_attacker(train_x, train_y, valid_x, valid_y, class_counts, config: AttackConfig = AttackConfig()):
    """Train a new attacker from scratch, early-stopping on validation cross-entropy.

    Only the public users' representations and labels are passed in, so the
    private users' labels cannot leak into training.
    """
    from ..model import Attacker, attacker_loss

    rng = np.random.default_rng([config.seed, 7])
    attacker = Attacker(train_x.shape[1], class_counts, config.hidden, rng)
    params = attacker.parameters()
    opt = AdamState.for_params(params, lr=config.learning_rate)
    has_valid = len(valid_x) > 0
    vx = Tensor(valid_x) if has_valid else None
    best, best_state, bad, losses = np.inf, attacker.state_dict(), 0, []
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_x))
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            with GradTape() as tape:
                loss = attacker_loss(attacker, Tensor(train_x[idx]), train_y[idx])
            grads, _ = nn.clip_global_norm(nn.backward(loss, tape, params), config.clip_norm)
            new, opt = nn.adam_step([p.data for p in params], grads, opt)
            for p, v in zip(params, new):
                p.data = v
        if not has_valid:
            continue
        vloss = attacker_loss(attacker, vx, valid_y).item()
        losses.append(vloss)
        if vloss < best - 1e-9:
            best, best_state, bad = vloss, attacker.state_dict(), 0
        else:
            bad += 1
            if bad >= config.patience:
                break
    if has_valid:
        attacker.load_state_dict(best_state)
    return attacker, epoch, losses


def attack_representations(reps: np.ndarray, table, split, config: AttackConfig = AttackConfig()):
    """Fit on ``split.fit``, early-stop on ``split.valid``, evaluate on ``split.test``."""
    from ..model import attacker_predict

    if len(split.test) == 0:
        raise ContractError("test-time attack needs at least one private user")
    labels = table.values
    attacker, epochs, losses = fit_attacker(reps[split.fit], labels[split.fit],
                                            reps[split.valid], labels[split.valid],
                                            table.class_counts, config)
    probs = attacker_predict(attacker, reps[split.test])
    results = []
    for p, attr in enumerate(table.attributes):
        results.append(PrivacyResult.from_predictions(
            attr.name, labels[split.test, p], probs[p].argmax(axis=1), attr.n_classes,
            train_labels=labels[split.train, p]))
    return AttackOutcome(results, attacker, epochs, losses)


def user_representations(model, data, users=None) -> np.ndarray:
    """Transferred representation of each user, computed in chunks."""
    users = np.arange(data.n_users) if users is None else np.asarray(users)
    chunks = []
    for start in range(0, len(users), 512):
        hist, mask, query = data.transfer_inputs(users[start:start + 512])
        chunks.append(model.transferred(hist, mask, query).data)
    return np.concatenate(chunks, axis=0)


def test_time_attack(model, data, config: AttackConfig = AttackConfig()) -> AttackOutcome:
    """Simulate an unseen attacker against a frozen trained model."""
    return attack_representations(user_representations(model, data), data.table,
                                  data.privacy, config)


test_time_attack.__test__ = False  # not a pytest test despite the name
