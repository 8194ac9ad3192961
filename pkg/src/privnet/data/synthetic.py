"""Controllable two-domain datasets with a tunable attribute leak.

Every user draws a latent preference vector shared by both domains, so the
source history is genuinely informative about target taste. A binary private
attribute is drawn independently of the latent; with correlation ``rho`` the
user's source-item logits receive a bonus of ``rho * block_shift`` on the
half of the source catalogue belonging to their attribute class. At
``rho = 0`` the attribute is independent of all interactions; at ``rho = 1``
it shows up as the dominant block of the source history. The target domain
never sees the attribute.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError
from .types import Attribute, InteractionLog, PrivateAttributeTable


@dataclass(frozen=True)
class SyntheticConfig:
    n_users: int = 2000
    n_source_items: int = 500
    n_target_items: int = 500
    latent_dim: int = 8
    rho: float = 0.0
    seed: int = 0
    source_length: int = 20
    target_length: int = 6
    affinity_scale: float = 2.5
    block_shift: float = 4.0
    minority_share: float = 0.3

    def validate(self) -> "SyntheticConfig":
        if min(self.n_users, self.n_source_items, self.n_target_items, self.latent_dim) <= 0:
            raise ConfigError(f"degenerate synthetic config: {self}")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"rho must lie in [0, 1], got {self.rho}")
        if self.source_length > self.n_source_items or self.target_length > self.n_target_items:
            raise ConfigError("sequence length exceeds the item vocabulary")
        if not 0.0 < self.minority_share <= 0.5:
            raise ConfigError(f"minority_share must be in (0, 0.5], got {self.minority_share}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def _sample_sequences(rng, logits: np.ndarray, length: int) -> np.ndarray:
    # Gumbel top-k in descending key order is sequential sampling without
    # replacement from softmax(logits); the order doubles as the timeline.
    keys = logits + rng.gumbel(size=logits.shape)
    top = np.argpartition(-keys, length - 1, axis=1)[:, :length]
    order = np.argsort(-np.take_along_axis(keys, top, axis=1), axis=1, kind="stable")
    return np.take_along_axis(top, order, axis=1)


def generate_synthetic(config: SyntheticConfig):
    """Return ``(source_log, target_log, attribute_table)`` for ``config``."""
    cfg = config.validate()
    rng = np.random.default_rng(cfg.seed)
    k = cfg.latent_dim
    users = rng.normal(size=(cfg.n_users, k))
    src_items = rng.normal(size=(cfg.n_source_items, k))
    tgt_items = rng.normal(size=(cfg.n_target_items, k))
    attr = (rng.random(cfg.n_users) < cfg.minority_share).astype(np.int64)

    scale = cfg.affinity_scale / np.sqrt(k)
    block = (np.arange(cfg.n_source_items) >= cfg.n_source_items // 2).astype(np.int64)
    src_logits = scale * users @ src_items.T
    src_logits += cfg.rho * cfg.block_shift * (block[None, :] == attr[:, None])
    tgt_logits = scale * users @ tgt_items.T

    src_seq = _sample_sequences(rng, src_logits, cfg.source_length)
    tgt_seq = _sample_sequences(rng, tgt_logits, cfg.target_length)

    source = InteractionLog("source", cfg.n_source_items, list(src_seq))
    target = InteractionLog("target", cfg.n_target_items, list(tgt_seq))
    table = PrivateAttributeTable([Attribute("attribute", 2, ("majority", "minority"))],
                                  attr[:, None])
    return source, target, table
