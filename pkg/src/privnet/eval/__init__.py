"""Ranking, privacy-inference and clustering evaluation."""

from .clustering import contingency, kmeans, kmeans_vmeasure, v_measure, v_measure_from_contingency
from .privacy import (
    AttackConfig,
    AttackOutcome,
    PrivacyResult,
    attack_representations,
    attacker_f1,
    confusion_matrix,
    fit_attacker,
    majority_f1,
    test_time_attack,
    user_representations,
    weighted_prf,
)
from .ranking import RankingResult, evaluate_ranking, rank_metrics, rank_of_positive, score_candidates
from .report import EvalReport, ReportRow, evaluate_model, read_embeddings, write_embeddings

__all__ = [
    "AttackConfig", "AttackOutcome", "EvalReport", "ReportRow", "evaluate_model",
    "read_embeddings", "write_embeddings", "PrivacyResult", "RankingResult", "attack_representations",
    "attacker_f1", "confusion_matrix", "contingency", "evaluate_ranking", "fit_attacker",
    "kmeans", "kmeans_vmeasure", "majority_f1", "rank_metrics", "rank_of_positive",
    "score_candidates", "test_time_attack", "user_representations", "v_measure",
    "v_measure_from_contingency", "weighted_prf",
]
