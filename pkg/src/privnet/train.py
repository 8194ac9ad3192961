"""Alternating adversarial training of the recommender and the simulated attacker."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import nn
from .data.dataset import CrossDomainData
from .data.sampling import generate_ranking_examples
from .data.types import RankingExamples
from .errors import ConfigError
from .eval.privacy import attacker_f1
from .eval.ranking import evaluate_ranking
from .model import Attacker, ModelConfig, Recommender, attacker_loss, privnet_loss
from .nn import AdamState, GradTape, Tensor

log = logging.getLogger(__name__)

LAMBDA_GRID = (0.0, 0.1, 0.25, 0.5, 0.75, 1.0)
PUBLIC_FRACTION_GRID = (0.1, 0.3, 0.5, 0.7, 0.8, 0.9)


@dataclass
class TrainConfig:
    lam: float = 1.0
    batch_size: int = 128
    learning_rate: float = 5e-4
    max_epochs: int = 50
    patience: int = 5
    clip_norm: float = 5.0
    neg_ratio: int = 1
    seed: int = 0
    embed_dim: int = 80
    hidden: tuple[int, ...] = (64,)
    n_transfer_layers: int = 1
    transfer: bool = True
    attacker_hidden: int = 64
    eval_k: int = 10

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self) -> "TrainConfig":
        if self.lam < 0:
            raise ConfigError(f"lambda must be non-negative, got {self.lam}")
        for name in ("batch_size", "max_epochs", "patience", "embed_dim", "eval_k", "attacker_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ConfigError("learning_rate and clip_norm must be positive")
        if self.neg_ratio < 1:
            raise ConfigError(f"neg_ratio must be a positive integer, got {self.neg_ratio}")
        return self

    def model_config(self, data: CrossDomainData) -> ModelConfig:
        return ModelConfig(data.source.n_items, data.target_train.n_items, self.embed_dim,
                           self.hidden, self.n_transfer_layers, self.transfer,
                           self.attacker_hidden, self.seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainState:
    epoch: int = 0
    best_hr: float = -np.inf
    best_epoch: int = 0
    rec_opt: AdamState | None = None
    att_opt: AdamState | None = None
    best_model: dict | None = None
    best_attacker: dict | None = None


@dataclass
class FitResult:
    model: Recommender
    attacker: Attacker
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0


def build_models(data: CrossDomainData, config: TrainConfig):
    mcfg = config.model_config(data)
    rng = np.random.default_rng([config.seed, 1])
    model = Recommender(mcfg, rng)
    attacker = Attacker(mcfg.trans_width, data.table.class_counts, config.attacker_hidden, rng)
    return model, attacker


def _update(params, grads, opt: AdamState, clip: float) -> AdamState:
    grads, _ = nn.clip_global_norm(grads, clip)
    new, opt = nn.adam_step([p.data for p in params], grads, opt)
    for p, value in zip(params, new):
        p.data = value
    return opt


def _ranking_batch(ex: RankingExamples, idx, data: CrossDomainData, with_transfer: bool) -> dict:
    mask = np.arange(ex.history.shape[1])[None, :] < ex.lengths[idx][:, None]
    batch = {"history": ex.history[idx], "mask": mask,
             "candidates": ex.candidates[idx], "labels": ex.labels[idx]}
    if with_transfer:
        batch["src_history"], batch["src_mask"], batch["src_query"] = data.transfer_inputs(ex.users[idx])
    return batch


def privacy_batch(data: CrossDomainData, users) -> dict:
    hist, mask, query = data.transfer_inputs(users)
    return {"users": np.asarray(users), "src_history": hist, "src_mask": mask,
            "src_query": query, "labels": data.table.values[users]}


def attacker_step(model: Recommender, attacker: Attacker, pbatch: dict, opt: AdamState,
                  config: TrainConfig):
    """Lines 1-3 of the inner loop: fit the attacker on frozen transferred representations."""
    x_trans = Tensor(model.transferred(pbatch["src_history"], pbatch["src_mask"],
                                       pbatch["src_query"]).data)
    params = attacker.parameters()
    with GradTape() as tape:
        loss = attacker_loss(attacker, x_trans, pbatch["labels"])
    grads = nn.backward(loss, tape, params)
    return loss.item(), _update(params, grads, opt, config.clip_norm)


def recommender_step(model: Recommender, attacker: Attacker, tbatch, sbatch, pbatch,
                     opt: AdamState, config: TrainConfig):
    """Line 4: descend the adversarially regularised loss with respect to theta."""
    params = model.parameters()
    with GradTape() as tape:
        loss = privnet_loss(model, attacker, tbatch, sbatch, pbatch, config.lam)
    grads = nn.backward(loss, tape, params)
    return loss.item(), _update(params, grads, opt, config.clip_norm)


def target_exclusions(data: CrossDomainData):
    """Held-out items per user, never to be drawn as training negatives."""
    return [np.array([data.valid.positives[u], data.test.positives[u]])
            for u in range(data.n_users)]


def train_epoch(model: Recommender, attacker: Attacker, data: CrossDomainData,
                config: TrainConfig, state: TrainState) -> dict:
    """One pass over the target training examples.

    Source batches and privacy batches are drawn cyclically alongside. With
    ``lam == 0`` the attacker is never touched.
    """
    lam = config.lam
    if lam > 0 and len(data.privacy.fit) == 0:
        raise ConfigError("lambda > 0 requires labelled public users")
    epoch = state.epoch
    rng = np.random.default_rng([config.seed, 2, epoch])
    tex = generate_ranking_examples(data.target_train, data.window, config.neg_ratio,
                                    seed=config.seed * 1000 + 2 * epoch,
                                    exclude=target_exclusions(data))
    sex = generate_ranking_examples(data.source, data.window, config.neg_ratio,
                                    seed=config.seed * 1000 + 2 * epoch + 1)
    t_order = rng.permutation(len(tex))
    s_order = rng.permutation(len(sex))
    p_order = rng.permutation(data.privacy.fit)
    bs = config.batch_size
    if state.rec_opt is None:
        state.rec_opt = AdamState.for_params(model.parameters(), lr=config.learning_rate)
    if state.att_opt is None:
        state.att_opt = AdamState.for_params(attacker.parameters(), lr=config.learning_rate)

    rec_losses, att_losses = [], []
    s_pos = p_pos = 0
    for start in range(0, len(t_order), bs):
        t_idx = t_order[start:start + bs]
        s_idx = np.take(s_order, np.arange(s_pos, s_pos + len(t_idx)), mode="wrap")
        s_pos = (s_pos + len(t_idx)) % len(s_order)
        tbatch = _ranking_batch(tex, t_idx, data, with_transfer=True)
        sbatch = _ranking_batch(sex, s_idx, data, with_transfer=False)
        pbatch = None
        if lam > 0:
            n_p = min(bs, len(p_order))
            users = np.take(p_order, np.arange(p_pos, p_pos + n_p), mode="wrap")
            p_pos = (p_pos + n_p) % len(p_order)
            pbatch = privacy_batch(data, users)
            a_loss, state.att_opt = attacker_step(model, attacker, pbatch, state.att_opt, config)
            att_losses.append(a_loss)
        r_loss, state.rec_opt = recommender_step(model, attacker, tbatch, sbatch, pbatch,
                                                 state.rec_opt, config)
        rec_losses.append(r_loss)
    return {"rec_loss": float(np.mean(rec_losses)),
            "attacker_loss": float(np.mean(att_losses)) if att_losses else float("nan")}


class EarlyStopping:
    """Tracks the best validation score; ``step`` returns True when training should stop."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def step(self, epoch: int, score: float) -> bool:
        if score > self.best:
            self.best, self.best_epoch, self.bad_epochs = score, epoch, 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def validation_metrics(model, attacker, data: CrossDomainData, config: TrainConfig) -> dict:
    metrics = evaluate_ranking(model, data, data.valid, config.eval_k).metrics()
    row = {"val_hr": metrics["hr"], "val_ndcg": metrics["ndcg"], "val_mrr": metrics["mrr"]}
    if len(data.privacy.valid):
        pb = privacy_batch(data, data.privacy.valid)
        x = Tensor(model.transferred(pb["src_history"], pb["src_mask"], pb["src_query"]).data)
        row["val_attacker_loss"] = attacker_loss(attacker, x, pb["labels"]).item()
        for attr, f1 in zip(data.table.attributes, attacker_f1(attacker, x.data, pb["labels"])):
            row[f"val_f1_{attr.name}"] = f1
    return row


def fit(data: CrossDomainData, config: TrainConfig, callback=None) -> FitResult:
    """Train up to ``max_epochs`` and return the checkpoint with the best validation HR@K.

    ``callback(epoch, row)`` is invoked after every epoch's validation.
    """
    config.validate()
    model, attacker = build_models(data, config)
    state = TrainState()
    stopper = EarlyStopping(config.patience)
    history = []
    for epoch in range(1, config.max_epochs + 1):
        state.epoch = epoch
        row = {"epoch": epoch, **train_epoch(model, attacker, data, config, state)}
        row.update(validation_metrics(model, attacker, data, config))
        history.append(row)
        log.info("epoch %d: %s", epoch, row)
        if callback is not None:
            callback(epoch, row)
        stop = stopper.step(epoch, row["val_hr"])
        if stopper.best_epoch == epoch:
            state.best_hr, state.best_epoch = row["val_hr"], epoch
            state.best_model, state.best_attacker = model.state_dict(), attacker.state_dict()
        if stop:
            break
    model.load_state_dict(state.best_model)
    attacker.load_state_dict(state.best_attacker)
    return FitResult(model, attacker, history, state.best_epoch)


def write_history(path, history: list[dict]):
    """History CSV: epoch, losses, validation ranking metrics, per-attribute attacker F1."""
    cols = []
    for row in history:
        cols += [k for k in row if k not in cols]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for row in history:
            writer.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})


def lambda_sweep(data: CrossDomainData, config: TrainConfig, grid=LAMBDA_GRID) -> dict[float, FitResult]:
    """One training run per lambda value, everything else fixed."""
    out = {}
    for lam in grid:
        cfg = TrainConfig.from_dict({**config.to_dict(), "lam": float(lam)})
        out[float(lam)] = fit(data, cfg)
    return out
