"""Dual-domain recommender with a translation-matrix transfer unit, plus attacker heads.

Row-vector convention throughout: a layer computes ``x @ W + b`` with ``W``
of shape ``(fan_in, fan_out)``, and a translation matrix acts as
``x @ H``. Activation ``k`` of a network is its input to layer ``k``
(``k = 0`` is the concatenation ``[x_u, x_item]``). For the first
``n_transfer`` layers the target network feeds ``x_T @ M_k + x_S @ H_k``
into layer ``k`` instead of ``x_T``; the transferred representation of a user
is the concatenation of the ``x_S @ H_k`` terms.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .errors import ConfigError, ContractError, DataError, DimensionError
from .nn import Tensor


@dataclass(frozen=True)
class ModelConfig:
    n_source_items: int
    n_target_items: int
    embed_dim: int = 80
    hidden: tuple[int, ...] = (64,)
    n_transfer_layers: int = 1
    transfer: bool = True
    attacker_hidden: int = 64
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if min(self.n_source_items, self.n_target_items, self.embed_dim) <= 0:
            raise ConfigError(f"item counts and embedding size must be positive: {self}")
        if not 0 <= self.n_transfer_layers <= len(self.hidden) + 1:
            raise ConfigError(f"n_transfer_layers must be in [0, {len(self.hidden) + 1}]")

    @property
    def widths(self) -> tuple[int, ...]:
        return (2 * self.embed_dim,) + self.hidden + (1,)

    @property
    def trans_width(self) -> int:
        return sum(self.widths[:self.n_transfer_layers])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class ForwardTrace:
    """Intermediates of a batched target (or source) forward pass."""

    user_vec: Tensor
    alpha: Tensor
    target_acts: list[Tensor]
    source_acts: list[Tensor] = field(default_factory=list)
    source_alpha: Tensor | None = None
    transfers: list[Tensor] = field(default_factory=list)
    x_trans: Tensor | None = None
    logits: Tensor | None = None

    @property
    def scores(self) -> np.ndarray:
        return nn.tensor._sigmoid(self.logits.data)


def encode_users(table: Tensor, history: np.ndarray, mask: np.ndarray, query: np.ndarray):
    """Attention pooling of history embeddings, queried by the candidate embedding.

    ``history``/``mask`` are ``(B, w)``, ``query`` is ``(B,)``. Returns
    ``(x_u, alpha, x_query)`` with ``x_u`` of shape ``(B, d)``.
    """
    if mask is None:
        mask = np.ones(np.shape(history), dtype=bool)
    if not np.asarray(mask).any(axis=1).all():
        raise ContractError("encode_users: every history must be non-empty")
    hist = nn.embedding(table, history)                      # (B, w, d)
    q = nn.embedding(table, query)                           # (B, d)
    b, d = q.shape
    logits = (hist * q.reshape(b, 1, d)).sum(axis=-1)        # (B, w)
    alpha = nn.softmax(logits, axis=-1, mask=mask)
    x_u = (hist * alpha.reshape(b, -1, 1)).sum(axis=1)
    return x_u, alpha, q


def encode_user(history_embeddings, candidate_embedding):
    """Unbatched attention pooling over raw vectors; returns ``(x_u, alpha)``."""
    hist = np.asarray(history_embeddings, dtype=np.float64)
    if hist.ndim != 2 or len(hist) == 0:
        raise ContractError("encode_user: history must be a non-empty list of vectors")
    cand = np.asarray(candidate_embedding, dtype=np.float64)
    table = Tensor(np.vstack([hist, cand[None, :]]))
    x_u, alpha, _ = encode_users(table, np.arange(len(hist))[None, :],
                                 np.ones((1, len(hist)), dtype=bool), np.array([len(hist)]))
    return x_u.data[0], alpha.data[0]


class Recommender:
    """Parameters ``theta`` of the source network, target network and transfer unit."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator | None = None):
        self.config = config
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        d, widths = config.embed_dim, config.widths
        glorot = nn.glorot_uniform
        p: dict[str, Tensor] = {}
        p["A_T"] = Tensor.parameter(glorot(rng, config.n_target_items, d), "A_T")
        p["A_S"] = Tensor.parameter(glorot(rng, config.n_source_items, d), "A_S")
        for net in ("target", "source"):
            for k in range(len(widths) - 1):
                p[f"{net}.W{k}"] = Tensor.parameter(glorot(rng, widths[k], widths[k + 1]), f"{net}.W{k}")
                p[f"{net}.b{k}"] = Tensor.parameter(np.zeros(widths[k + 1]), f"{net}.b{k}")
        for k in range(config.n_transfer_layers):
            w = widths[k]
            p[f"mix.{k}"] = Tensor.parameter(glorot(rng, w, w), f"mix.{k}")
            h = glorot(rng, w, w) if config.transfer else np.zeros((w, w))
            p[f"H.{k}"] = Tensor.parameter(h, f"H.{k}")
        self.tensors = p

    def parameters(self) -> list[Tensor]:
        """Trainable tensors; translation matrices are excluded when transfer is off."""
        if self.config.transfer:
            return list(self.tensors.values())
        return [t for n, t in self.tensors.items() if not n.startswith("H.")]

    def n_parameters(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def __getitem__(self, name) -> Tensor:
        return self.tensors[name]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self.tensors.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        for n, t in self.tensors.items():
            if n not in state:
                raise DataError(f"checkpoint lacks parameter {n}")
            if state[n].shape != t.shape:
                raise DimensionError(f"{n}: checkpoint shape {state[n].shape}, model {t.shape}")
            t.data = np.array(state[n], dtype=np.float64)

    # -- forward passes --------------------------------------------------

    def _layers(self, net: str, h: Tensor, source_acts=None):
        n_layers = len(self.config.widths) - 1
        acts, transfers = [h], []
        for k in range(n_layers):
            inp = h
            if source_acts is not None and k < self.config.n_transfer_layers:
                trans = source_acts[k] @ self.tensors[f"H.{k}"]
                transfers.append(trans)
                inp = h @ self.tensors[f"mix.{k}"] + trans
            z = inp @ self.tensors[f"{net}.W{k}"] + self.tensors[f"{net}.b{k}"]
            h = nn.sigmoid(z) if k < n_layers - 1 else z
            acts.append(h)
        return acts, transfers

    def forward_source(self, history, mask, candidates) -> ForwardTrace:
        x_u, alpha, x_j = encode_users(self.tensors["A_S"], history, mask, candidates)
        acts, _ = self._layers("source", nn.concat([x_u, x_j], axis=-1))
        return ForwardTrace(x_u, alpha, acts, logits=acts[-1].reshape(-1))

    def transferred(self, src_history, src_mask, src_query) -> Tensor:
        """``x_trans`` for users described by their transfer inputs, shape ``(B, trans_width)``."""
        src = self.forward_source(src_history, src_mask, src_query)
        parts = [src.target_acts[k] @ self.tensors[f"H.{k}"]
                 for k in range(self.config.n_transfer_layers)]
        return nn.concat(parts, axis=-1)

    def forward_target(self, history, mask, candidates, src_history=None, src_mask=None,
                       src_query=None, source_acts=None) -> ForwardTrace:
        """Target scores; ``source_acts`` may replace the transfer inputs when precomputed."""
        x_u, alpha, x_i = encode_users(self.tensors["A_T"], history, mask, candidates)
        src = None
        if self.config.n_transfer_layers and source_acts is None:
            src = self.forward_source(src_history, src_mask, src_query)
            source_acts = src.target_acts
        acts, transfers = self._layers("target", nn.concat([x_u, x_i], axis=-1), source_acts)
        return ForwardTrace(
            x_u, alpha, acts,
            source_acts=source_acts or [],
            source_alpha=src.alpha if src is not None else None,
            transfers=transfers,
            x_trans=nn.concat(transfers, axis=-1) if transfers else None,
            logits=acts[-1].reshape(-1))

    def score(self, history, candidate: int, domain: str = "target",
              source_history=None, source_query: int | None = None):
        """Probability that one user interacts with ``candidate``, with its trace.

        In the target domain the paired source representation comes from
        ``source_history`` queried by ``source_query`` (the user's latest
        source item).
        """
        hist = np.asarray(history, dtype=np.int64)[None, :]
        mask = np.ones_like(hist, dtype=bool)
        cand = np.array([candidate], dtype=np.int64)
        vocab = self.config.n_target_items if domain == "target" else self.config.n_source_items
        if not 0 <= candidate < vocab:
            raise IndexError(f"candidate {candidate} outside {domain} vocabulary of size {vocab}")
        if domain == "source":
            trace = self.forward_source(hist, mask, cand)
        else:
            if source_history is None or source_query is None:
                raise ContractError("target scoring needs the user's source history and query")
            sh = np.asarray(source_history, dtype=np.int64)[None, :]
            trace = self.forward_target(hist, mask, cand, sh, np.ones_like(sh, dtype=bool),
                                        np.array([source_query], dtype=np.int64))
        return float(trace.scores[0]), trace


def expected_param_count(config: ModelConfig) -> int:
    """Closed-form size of ``theta``."""
    d, widths = config.embed_dim, config.widths
    emb = d * (config.n_source_items + config.n_target_items)
    mlp = sum(widths[k] * widths[k + 1] + widths[k + 1] for k in range(len(widths) - 1))
    transfer = sum(2 * widths[k] ** 2 for k in range(config.n_transfer_layers))
    return emb + 2 * mlp + transfer


class Attacker:
    """One MLP head per private attribute: ``x_trans -> hidden (sigmoid) -> c_p logits``."""

    def __init__(self, in_width: int, class_counts, hidden: int = 64,
                 rng: np.random.Generator | None = None, zero: bool = False):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_width = int(in_width)
        self.class_counts = [int(c) for c in class_counts]
        self.hidden = hidden
        self.tensors: dict[str, Tensor] = {}
        for p, c in enumerate(self.class_counts):
            if c < 1:
                raise ConfigError(f"attribute {p} must have at least one class")
            w1 = np.zeros((in_width, hidden)) if zero else nn.glorot_uniform(rng, in_width, hidden)
            w2 = np.zeros((hidden, c)) if zero else nn.glorot_uniform(rng, hidden, c)
            self.tensors[f"head{p}.W0"] = Tensor.parameter(w1, f"head{p}.W0")
            self.tensors[f"head{p}.b0"] = Tensor.parameter(np.zeros(hidden), f"head{p}.b0")
            self.tensors[f"head{p}.W1"] = Tensor.parameter(w2, f"head{p}.W1")
            self.tensors[f"head{p}.b1"] = Tensor.parameter(np.zeros(c), f"head{p}.b1")

    @property
    def n_attributes(self) -> int:
        return len(self.class_counts)

    def parameters(self) -> list[Tensor]:
        return list(self.tensors.values())

    def state_dict(self):
        return {n: t.data.copy() for n, t in self.tensors.items()}

    def load_state_dict(self, state):
        for n, t in self.tensors.items():
            if state[n].shape != t.shape:
                raise DimensionError(f"{n}: checkpoint shape {state[n].shape}, model {t.shape}")
            t.data = np.array(state[n], dtype=np.float64)

    def logits(self, x_trans, frozen: bool = False) -> list[Tensor]:
        x_trans = nn.as_tensor(x_trans)
        if x_trans.ndim != 2 or x_trans.shape[1] != self.in_width:
            raise DimensionError(f"attacker expects width {self.in_width}, got shape {x_trans.shape}")
        t = self.tensors
        if frozen:
            t = {n: v.detach() for n, v in t.items()}
        out = []
        for p in range(self.n_attributes):
            h = nn.sigmoid(x_trans @ t[f"head{p}.W0"] + t[f"head{p}.b0"])
            out.append(h @ t[f"head{p}.W1"] + t[f"head{p}.b1"])
        return out


def attacker_predict(attacker: Attacker, x_trans) -> list[np.ndarray]:
    """Class-probability matrices, one ``(B, c_p)`` array per attribute."""
    return [nn.softmax(z, axis=-1).data for z in attacker.logits(x_trans)]


# -- losses ------------------------------------------------------------------

def binary_nll(logits: Tensor, labels) -> Tensor:
    """Mean Bernoulli negative log-likelihood of ``sigmoid(logits)``."""
    r = np.asarray(labels, dtype=np.float64)
    ll = nn.log_sigmoid(logits) * r + nn.log_sigmoid(-logits) * (1.0 - r)
    return -ll.mean()


def recommender_loss(model: Recommender, target_batch: dict, source_batch: dict | None) -> Tensor:
    """Joint negative log-likelihood over a target and a source mini-batch.

    ``target_batch`` carries ``history``, ``mask``, ``candidates``, ``labels``
    and the users' transfer inputs ``src_history``, ``src_mask``,
    ``src_query``; ``source_batch`` carries the first four.
    """
    tb = target_batch
    trace = model.forward_target(tb["history"], tb["mask"], tb["candidates"],
                                 tb["src_history"], tb["src_mask"], tb["src_query"])
    loss = binary_nll(trace.logits, tb["labels"])
    if source_batch is not None and len(source_batch["labels"]):
        sb = source_batch
        src = model.forward_source(sb["history"], sb["mask"], sb["candidates"])
        loss = loss + binary_nll(src.logits, sb["labels"])
    return loss


def attacker_loss(attacker: Attacker, x_trans, labels, frozen: bool = False) -> Tensor:
    """Multitask cross-entropy averaged over attributes."""
    labels = np.asarray(labels)
    x_trans = nn.as_tensor(x_trans)
    if labels.ndim != 2 or labels.shape != (x_trans.shape[0], attacker.n_attributes):
        raise DataError(f"expected labels of shape {(x_trans.shape[0], attacker.n_attributes)}, "
                        f"got {labels.shape}")
    if (labels < 0).any():
        raise DataError("missing attribute label in privacy batch")
    rows = np.arange(len(labels))
    total = None
    for p, z in enumerate(attacker.logits(x_trans, frozen=frozen)):
        nll = -nn.log_softmax(z, axis=-1)[rows, labels[:, p]].mean()
        total = nll if total is None else total + nll
    return total * (1.0 / attacker.n_attributes)


def privnet_loss(model: Recommender, attacker: Attacker, target_batch, source_batch,
                 privacy_batch: dict | None, lam: float) -> Tensor:
    """Recommender loss minus ``lam`` times the attacker loss on the privacy batch.

    The attacker acts as a constant: gradients reach ``theta`` through the
    transferred representation only, and the active tape marks the attacker
    parameters frozen.
    """
    if lam < 0:
        raise ConfigError(f"lambda must be non-negative, got {lam}")
    rec = recommender_loss(model, target_batch, source_batch)
    if lam == 0 or privacy_batch is None:
        return rec
    tape = nn.tensor._active_tape()
    if tape is not None:
        tape.freeze(attacker.parameters())
    pb = privacy_batch
    x_trans = model.transferred(pb["src_history"], pb["src_mask"], pb["src_query"])
    return rec - attacker_loss(attacker, x_trans, pb["labels"], frozen=True) * lam
