import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from privnet.data import InteractionLog
from privnet.defenses import DefenseConfig, apply_blurme, apply_defense, apply_ldp
from privnet.errors import ConfigError, NegativeSamplingError


def source_log(seed=0, m=30, n=60, length=12):
    rng = np.random.default_rng(seed)
    return InteractionLog("source", n, [rng.choice(n, length, replace=False) for _ in range(m)])


def test_zero_noise_is_identity():
    log = source_log()
    out = apply_ldp(log, 0.0, seed=3)
    assert out.equals(log) and out is not log


def test_zero_dummies_is_identity():
    log = source_log()
    assert apply_blurme(log, 0, seed=3).equals(log)


def test_ldp_preserves_counts_and_replaces_with_unseen_items():
    log = source_log()
    out = apply_ldp(log, 0.3, seed=1).validate()
    assert np.array_equal(out.lengths(), log.lengths())
    changed = 0
    for before, after in zip(log.items, out.items):
        diff = before != after
        changed += int(diff.sum())
        assert not set(after[diff].tolist()) & set(before.tolist())
    assert 0 < changed < log.n_events


def test_ldp_flip_rate_matches_noise_level():
    log = source_log(m=400, n=300, length=25)
    out = apply_ldp(log, 0.10, seed=0)
    rate = np.mean([np.mean(a != b) for a, b in zip(log.items, out.items)])
    assert 0.08 <= rate <= 0.12


def test_blurme_inserts_dummies_keeping_order():
    log = source_log()
    out = apply_blurme(log, 5, seed=2).validate()
    assert np.array_equal(out.lengths(), log.lengths() + 5)
    for before, after in zip(log.items, out.items):
        original = set(before.tolist())
        kept = [x for x in after.tolist() if x in original]
        assert kept == before.tolist()
        assert len(set(after.tolist()) - original) == 5


def test_blurme_exhausted_vocabulary():
    log = InteractionLog("source", 4, [[0, 1, 2]])
    with pytest.raises(NegativeSamplingError):
        apply_blurme(log, 2)


def test_defenses_are_deterministic():
    log = source_log()
    assert apply_ldp(log, 0.2, 5).equals(apply_ldp(log, 0.2, 5))
    assert apply_blurme(log, 3, 5).equals(apply_blurme(log, 3, 5))
    assert not apply_ldp(log, 0.2, 5).equals(apply_ldp(log, 0.2, 6))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), noise=st.floats(0.0, 1.0), dummies=st.integers(0, 8))
def test_transforms_keep_logs_valid(seed, noise, dummies):
    log = source_log(seed, m=5, n=40, length=10)
    for out in (apply_ldp(log, noise, seed), apply_blurme(log, dummies, seed)):
        out.validate()
        assert out.n_users == log.n_users and out.n_items == log.n_items


def test_config_validation_and_dispatch():
    with pytest.raises(ConfigError):
        DefenseConfig("shuffle")
    with pytest.raises(ConfigError):
        DefenseConfig("ldp_noise", noise_level=1.5)
    with pytest.raises(ConfigError):
        DefenseConfig("blurme", dummy_count=-1)
    log = source_log()
    assert apply_defense(log, DefenseConfig("none")) is log
    assert apply_defense(log, DefenseConfig("adversarial")) is log
    assert apply_defense(log, DefenseConfig("ldp_noise", seed=1)).equals(apply_ldp(log, 0.1, 1))
    assert DefenseConfig("blurme").effective_lambda(1.0) == 0.0
    assert DefenseConfig("adversarial").effective_lambda(0.5) == 0.5


def test_full_noise_replaces_every_event():
    log = source_log(m=20, n=80, length=10)
    out = apply_ldp(log, 1.0, seed=4).validate()
    for before, after in zip(log.items, out.items):
        assert not set(after.tolist()) & set(before.tolist())
