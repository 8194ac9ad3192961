import csv

import numpy as np
import pytest

from privnet import nn, train
from privnet.data import SplitSpec, SyntheticConfig, build_dataset, generate_synthetic
from privnet.errors import ConfigError
from privnet.model import attacker_loss
from privnet.nn import AdamState, GradTape, Tensor
from privnet.train import (
    EarlyStopping,
    TrainConfig,
    TrainState,
    attacker_step,
    build_models,
    fit,
    privacy_batch,
    recommender_step,
    train_epoch,
    write_history,
)


@pytest.fixture(scope="module")
def data():
    s, t, tab = generate_synthetic(SyntheticConfig(n_users=80, n_source_items=120,
                                                   n_target_items=120, rho=1.0, seed=0))
    return build_dataset(s, t, tab, SplitSpec(seed=0), window=5, n_negatives=30)


def small_config(**kw):
    base = dict(embed_dim=6, hidden=(5,), attacker_hidden=4, batch_size=32, max_epochs=2)
    base.update(kw)
    return TrainConfig(**base)


def snapshot(module):
    return {n: v.copy() for n, v in module.state_dict().items()}


def same(a, b):
    return all(np.array_equal(a[n], b[n]) for n in a)


def test_lambda_zero_leaves_attacker_untouched(data):
    cfg = small_config(lam=0.0)
    model, attacker = build_models(data, cfg)
    before_att, before_model = snapshot(attacker), snapshot(model)
    metrics = train_epoch(model, attacker, data, cfg, TrainState(epoch=1))
    assert same(before_att, snapshot(attacker))
    assert not same(before_model, snapshot(model))
    assert np.isnan(metrics["attacker_loss"])


def test_epoch_is_deterministic(data):
    cfg = small_config(lam=1.0)
    outs = []
    for _ in range(2):
        model, attacker = build_models(data, cfg)
        train_epoch(model, attacker, data, cfg, TrainState(epoch=1))
        outs.append((snapshot(model), snapshot(attacker)))
    assert same(outs[0][0], outs[1][0]) and same(outs[0][1], outs[1][1])


def test_attacker_step_touches_only_attacker(data):
    cfg = small_config()
    model, attacker = build_models(data, cfg)
    pb = privacy_batch(data, data.privacy.fit[:16])
    before = snapshot(model)
    att_before = snapshot(attacker)
    attacker_step(model, attacker, pb, AdamState.for_params(attacker.parameters()), cfg)
    assert same(before, snapshot(model))
    assert not same(att_before, snapshot(attacker))


def test_recommender_step_touches_only_recommender(data):
    cfg = small_config()
    model, attacker = build_models(data, cfg)
    state = TrainState(epoch=1)
    tbatch, sbatch = _batches(data, model)
    pb = privacy_batch(data, data.privacy.fit[:16])
    att_before, before = snapshot(attacker), snapshot(model)
    recommender_step(model, attacker, tbatch, sbatch, pb,
                     AdamState.for_params(model.parameters()), cfg)
    assert same(att_before, snapshot(attacker))
    assert not same(before, snapshot(model))
    del state


def _batches(data, model):
    from privnet.data import generate_ranking_examples

    tex = generate_ranking_examples(data.target_train, data.window, 1, seed=0)
    sex = generate_ranking_examples(data.source, data.window, 1, seed=1)
    idx = np.arange(16)
    return (train._ranking_batch(tex, idx, data, True), train._ranking_batch(sex, idx, data, False))


def test_one_attacker_iteration_matches_hand_update(data):
    cfg = small_config(learning_rate=1e-2, clip_norm=0.01)
    model, attacker = build_models(data, cfg)
    pb = privacy_batch(data, data.privacy.fit[:16])
    params = attacker.parameters()
    x = Tensor(model.transferred(pb["src_history"], pb["src_mask"], pb["src_query"]).data)
    with GradTape() as tape:
        loss = attacker_loss(attacker, x, pb["labels"])
    grads = nn.backward(loss, tape, params)
    norm = np.sqrt(sum((g ** 2).sum() for g in grads))
    assert norm > 0.01  # clipping is active
    expected = []
    for p, g in zip(params, grads):
        g = g * (0.01 / norm)
        m_hat = 0.1 * g / (1 - 0.9)
        v_hat = 0.001 * g * g / (1 - 0.999)
        expected.append(p.data - 1e-2 * m_hat / (np.sqrt(v_hat) + 1e-8))
    value, opt = attacker_step(model, attacker, pb, AdamState.for_params(params, lr=1e-2), cfg)
    assert value == loss.item() and opt.step == 1
    for p, e in zip(params, expected):
        np.testing.assert_allclose(p.data, e, rtol=1e-12, atol=1e-15)


def test_early_stopping_rule():
    stopper = EarlyStopping(patience=3)
    stops = [stopper.step(e, s) for e, s in enumerate([0.2, 0.3, 0.3, 0.3, 0.3], start=1)]
    assert stops == [False, False, False, False, True]
    assert stopper.best_epoch == 2


def _scripted_fit(data, monkeypatch, scores, max_epochs, patience):
    it = iter(scores)
    calls = []

    def fake_epoch(model, attacker, data, config, state):
        model["A_T"].data[0, 0] = float(state.epoch)  # fingerprint of the epoch
        calls.append(state.epoch)
        return {"rec_loss": 0.0, "attacker_loss": float("nan")}

    monkeypatch.setattr(train, "train_epoch", fake_epoch)
    monkeypatch.setattr(train, "validation_metrics", lambda *a: {"val_hr": next(it)})
    res = fit(data, small_config(max_epochs=max_epochs, patience=patience))
    return res, calls


def test_fit_returns_best_checkpoint(data, monkeypatch):
    res, calls = _scripted_fit(data, monkeypatch, [0.2, 0.3, 0.3, 0.3, 0.3], 50, 3)
    assert calls == [1, 2, 3, 4, 5]
    assert res.best_epoch == 2
    assert res.model["A_T"].data[0, 0] == 2.0


def test_fit_runs_all_epochs_when_improving(data, monkeypatch):
    res, calls = _scripted_fit(data, monkeypatch, np.linspace(0.1, 0.9, 50), 50, 5)
    assert len(calls) == 50 and res.best_epoch == 50


def test_fit_history_and_csv(data, tmp_path):
    res = fit(data, small_config(lam=1.0, max_epochs=2))
    assert [r["epoch"] for r in res.history] == [1, 2]
    assert 1 <= res.best_epoch <= 2
    path = tmp_path / "history.csv"
    write_history(path, res.history)
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 2
    assert {"epoch", "rec_loss", "attacker_loss", "val_hr", "val_ndcg", "val_mrr",
            "val_f1_attribute"} <= set(rows[0])


@pytest.fixture(scope="module")
def leaky_data():
    s, t, tab = generate_synthetic(SyntheticConfig(n_users=600, n_source_items=200,
                                                   n_target_items=200, latent_dim=2,
                                                   affinity_scale=6.0, target_length=4,
                                                   rho=1.0, seed=1))
    return build_dataset(s, t, tab, SplitSpec(seed=1), window=5, n_negatives=50)


def _adv_config(lam):
    return small_config(lam=lam, embed_dim=16, hidden=(16,), attacker_hidden=16,
                        learning_rate=5e-3, max_epochs=6, patience=6, seed=1)


def test_attacker_loss_falls_during_first_epoch(leaky_data, monkeypatch):
    losses = []
    real_step = train.attacker_step

    def recording_step(*args):
        value, opt = real_step(*args)
        losses.append(value)
        return value, opt

    monkeypatch.setattr(train, "attacker_step", recording_step)
    model, attacker = build_models(leaky_data, _adv_config(1.0))
    train_epoch(model, attacker, leaky_data, _adv_config(1.0), TrainState(epoch=1))
    quarter = len(losses) // 4
    assert np.mean(losses[-quarter:]) < np.mean(losses[:quarter])


def test_adversary_raises_attacker_validation_loss(leaky_data):
    # With lambda = 0 the in-training attacker is never updated, so the
    # comparison uses a fresh attacker fitted to each run's representations.
    from privnet.eval import AttackConfig, test_time_attack

    best = {}
    for lam in (0.0, 1.0):
        res = fit(leaky_data, _adv_config(lam))
        outcome = test_time_attack(res.model, leaky_data, AttackConfig(hidden=16, max_epochs=60))
        best[lam] = min(outcome.valid_losses)
    assert best[1.0] > best[0.0], best


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(lam=-1)
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"lam": 1.0, "bogus": 3})
    cfg = TrainConfig.from_dict(TrainConfig(hidden=(32, 16)).to_dict())
    assert cfg.hidden == (32, 16)


def test_positive_lambda_needs_public_users(data):
    cfg = small_config(lam=1.0)
    model, attacker = build_models(data, cfg)
    from dataclasses import replace

    empty = replace(data, privacy=replace(data.privacy, fit=np.array([], dtype=np.int64)))
    with pytest.raises(ConfigError):
        train_epoch(model, attacker, empty, cfg, TrainState(epoch=1))
