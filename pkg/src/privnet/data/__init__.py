"""Interaction logs, attribute tables, example generation and dataset containers."""

from .dataset import (
    CrossDomainData,
    build_dataset,
    content_hash,
    filter_users,
    load_container,
    read_container,
    save_container,
)
from .movielens import age_bucket, load_movielens
from .sampling import (
    generate_ranking_examples,
    leave_one_out_split,
    pad_windows,
    ranking_splits,
    split_public_users,
    user_rng,
)
from .synthetic import SyntheticConfig, generate_synthetic
from .types import (
    Attribute,
    EvalSet,
    InteractionLog,
    PrivacyExample,
    PrivacySplit,
    PrivateAttributeTable,
    RankingExample,
    RankingExamples,
    SplitSpec,
)

__all__ = [
    "Attribute", "CrossDomainData", "EvalSet", "InteractionLog", "PrivacyExample",
    "PrivacySplit", "PrivateAttributeTable", "RankingExample", "RankingExamples", "SplitSpec",
    "SyntheticConfig", "age_bucket", "build_dataset", "content_hash", "filter_users",
    "generate_ranking_examples", "generate_synthetic", "leave_one_out_split", "load_container",
    "load_movielens", "pad_windows", "ranking_splits", "read_container", "save_container",
    "split_public_users", "user_rng",
]
