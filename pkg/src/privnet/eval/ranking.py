"""Leave-one-out ranking metrics: HR@K, NDCG@K, MRR and AUC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from ..nn import Tensor


@dataclass
class RankingResult:
    """Per-user 1-based rank of the held-out positive among ``n_candidates``."""

    ranks: np.ndarray
    n_candidates: int = 100
    k: int = 10

    def __post_init__(self):
        self.ranks = np.asarray(self.ranks, dtype=np.int64)
        if len(self.ranks) and (self.ranks.min() < 1 or self.ranks.max() > self.n_candidates):
            raise ContractError(f"ranks must lie in [1, {self.n_candidates}]")

    def metrics(self, k: int | None = None) -> dict[str, float]:
        return rank_metrics(self.ranks, k or self.k, self.n_candidates)


def rank_of_positive(scores: np.ndarray) -> np.ndarray:
    """Rank of the last column within each row of ``scores``.

    Ties count against the positive, so an all-equal row ranks it last.
    """
    scores = np.asarray(scores, dtype=np.float64)
    pos = scores[:, -1:]
    return 1 + (scores[:, :-1] >= pos).sum(axis=1)


def rank_metrics(ranks, k: int = 10, n_candidates: int = 100) -> dict[str, float]:
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        raise ContractError("rank_metrics needs at least one ranked user")
    hit = ranks <= k
    return {
        "hr": float(hit.mean()),
        "ndcg": float(np.where(hit, 1.0 / np.log2(ranks + 1.0), 0.0).mean()),
        "mrr": float((1.0 / ranks).mean()),
        "auc": float(((n_candidates - ranks) / (n_candidates - 1)).mean()),
    }


def score_candidates(model, data, evalset, chunk: int = 128) -> np.ndarray:
    """Target-domain scores for every user's candidate list, shape ``(U, n_cand)``."""
    cands = evalset.candidates
    n_users, n_cand = cands.shape
    mask_all = evalset.mask()
    out = np.empty((n_users, n_cand))
    for start in range(0, n_users, chunk):
        sl = slice(start, start + chunk)
        users = evalset.users[sl]
        b = len(users)
        src_hist, src_mask, src_query = data.transfer_inputs(users)
        src = model.forward_source(src_hist, src_mask, src_query)
        source_acts = [Tensor(np.repeat(a.data, n_cand, axis=0)) for a in src.target_acts]
        trace = model.forward_target(np.repeat(evalset.history[sl], n_cand, axis=0),
                                     np.repeat(mask_all[sl], n_cand, axis=0),
                                     cands[sl].reshape(-1), source_acts=source_acts)
        out[sl] = trace.logits.data.reshape(b, n_cand)
    return out


def evaluate_ranking(model, data, evalset, k: int = 10) -> RankingResult:
    scores = score_candidates(model, data, evalset)
    return RankingResult(rank_of_positive(scores), evalset.candidates.shape[1], k)
