"""Compare source-side defenses under one recommender architecture.

Run with ``python3 demos/defense_baselines.py``.

Randomized-response noise and dummy-item padding both rewrite the source
logs before training; the adversarial strategy leaves the data alone and
changes the objective instead. Each strategy is trained with the same seed
and evaluated on the same held-out users.
"""

from privnet.data import SplitSpec, SyntheticConfig, build_dataset, generate_synthetic
from privnet.defenses import DefenseConfig, apply_defense
from privnet.eval import EvalReport, evaluate_model
from privnet.train import TrainConfig, fit

source, target, table = generate_synthetic(SyntheticConfig(
    n_users=1000, latent_dim=2, affinity_scale=6.0, source_length=30, target_length=4,
    rho=1.0, seed=3))
data = build_dataset(source, target, table, SplitSpec(seed=3))

combined = EvalReport()
for strategy in ("none", "ldp_noise", "blurme", "adversarial"):
    defense = DefenseConfig(strategy, seed=3)
    run_data = data.with_source(apply_defense(data.source, defense))
    config = TrainConfig(lam=defense.effective_lambda(1.0), learning_rate=5e-3, embed_dim=16,
                         hidden=(16,), attacker_hidden=16, max_epochs=20, patience=5, seed=3)
    result = fit(run_data, config)
    report, _, _ = evaluate_model(result.model, run_data, method=strategy, lam=config.lam)
    combined.extend(report)
    print(f"{strategy:12s} HR@10 {report.get('HR@10'):.3f}  F1 {report.get('F1', 'attribute'):.3f}")

print()
print(combined.table())
