import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from privnet.data import (
    Attribute,
    InteractionLog,
    PrivateAttributeTable,
    SplitSpec,
    SyntheticConfig,
    age_bucket,
    build_dataset,
    content_hash,
    filter_users,
    generate_ranking_examples,
    generate_synthetic,
    leave_one_out_split,
    load_container,
    load_movielens,
    ranking_splits,
    save_container,
    split_public_users,
)
from privnet.errors import ConfigError, DataError, FormatError, NegativeSamplingError, ParseError
from privnet.eval.privacy import confusion_matrix, majority_f1, weighted_prf


def make_log(seqs, n_items, domain="target"):
    return InteractionLog(domain, n_items, seqs)


def table_of(m, n_classes=2, seed=0):
    values = np.random.default_rng(seed).integers(0, n_classes, size=(m, 1))
    return PrivateAttributeTable([Attribute("a", n_classes)], values)


# -- MovieLens ---------------------------------------------------------------

MOVIES = """1::Old Film (1970)::Drama
2::Older Film, The (1965)::Comedy
3::New Film (1999)::Action
4::Newer Film (2000)::Action|Drama
"""

USERS = """1::F::1::10::48067
2::M::56::16::70072
3::M::35::7::55117
4::F::25::20::55455
"""

# user 1: ratings-3 excluded; user 3 only rates source; user 4 has a timestamp tie
RATINGS = """1::1::5::100
1::3::3::101
1::4::4::102
2::3::5::50
2::2::4::60
2::1::5::70
3::1::5::10
3::2::4::11
4::4::5::300
4::3::4::300
4::1::4::200
"""


@pytest.fixture
def ml_files(tmp_path):
    paths = []
    for name, text in (("ratings.dat", RATINGS), ("users.dat", USERS), ("movies.dat", MOVIES)):
        p = tmp_path / name
        p.write_text(text, encoding="latin-1")
        paths.append(p)
    return paths


def test_movielens_split_by_year_and_rating(ml_files):
    source, target, table = load_movielens(*ml_files, year_threshold=1990)
    # user 3 only has source events and is dropped; users 1, 2, 4 remain
    assert source.n_users == target.n_users == table.n_users == 3
    assert source.n_items == 2 and target.n_items == 2
    # user 1: movie 3 rated 3 stars is excluded, so target holds only movie 4
    assert source.items[0].tolist() == [0] and target.items[0].tolist() == [1]
    # user 2: source events 2 (t=60) then 1 (t=70); dense ids are by MovieID
    assert source.items[1].tolist() == [1, 0]
    # user 4: tie at t=300 resolves to file order (movie 4 before movie 3)
    assert target.items[2].tolist() == [1, 0]
    assert target.timestamps[2].tolist() == [300, 300]


def test_movielens_attributes(ml_files):
    _, _, table = load_movielens(*ml_files, year_threshold=1990)
    assert [a.name for a in table.attributes] == ["gender", "age"]
    assert table.values.tolist() == [[0, 0], [1, 2], [0, 0]]


def test_age_buckets():
    assert age_bucket(36) == 1
    assert [age_bucket(a) for a in (1, 18, 25, 35, 45, 50, 56)] == [0, 0, 0, 1, 2, 2, 2]


def test_movielens_parse_errors(ml_files, tmp_path):
    ratings, users, movies = ml_files
    bad = tmp_path / "bad_users.dat"
    bad.write_text(USERS + "5::F::30::1::00000\n")
    with pytest.raises(ParseError, match=r"bad_users.dat:5: unknown age code 30"):
        load_movielens(ratings, bad, movies, 1990)
    broken = tmp_path / "bad_ratings.dat"
    broken.write_text(RATINGS + "1::2\n")
    with pytest.raises(ParseError) as info:
        load_movielens(broken, users, movies, 1990)
    assert info.value.line == 12


def test_movielens_requires_threshold(ml_files):
    with pytest.raises(ConfigError):
        load_movielens(*ml_files, year_threshold=None)


# -- ranking examples --------------------------------------------------------

def test_sliding_positives():
    ex = generate_ranking_examples(make_log([[0, 1, 2]], 5), window=10, neg_ratio=0)
    assert [(e.history, e.candidate) for e in (ex[0], ex[1])] == [((0,), 1), ((0, 1), 2)]
    assert ex.labels.tolist() == [1, 1]


def test_example_counts():
    ex = generate_ranking_examples(make_log([[0, 1, 2, 3, 4]], 20), neg_ratio=3)
    assert int(ex.labels.sum()) == 4 and int((ex.labels == 0).sum()) == 12


def test_only_remaining_item_is_sampled():
    ex = generate_ranking_examples(make_log([[0, 1]], 3), neg_ratio=5, seed=4)
    assert ex.candidates[ex.labels == 0].tolist() == [2] * 5


def test_history_cut_to_window():
    ex = generate_ranking_examples(make_log([list(range(15))], 30), window=4, neg_ratio=0)
    assert ex[-1].history == (10, 11, 12, 13)


def test_short_users_skipped_with_warning(caplog):
    ex = generate_ranking_examples(make_log([[0], [1, 2]], 5), neg_ratio=1)
    assert ex.skipped_users == 1
    assert "1 users" in caplog.text
    assert set(ex.users.tolist()) == {1}


def test_exhausted_vocabulary_names_user():
    with pytest.raises(NegativeSamplingError) as info:
        generate_ranking_examples(make_log([[0, 1], [2, 0, 1]], 3), neg_ratio=1)
    assert info.value.user == 1


@st.composite
def sequences(draw):
    """Vocabulary size and per-user duplicate-free sequences shorter than it."""
    n = draw(st.integers(3, 25))
    seqs = draw(st.lists(st.permutations(list(range(n))).flatmap(
        lambda p: st.integers(2, n - 1).map(lambda k: list(p[:k]))), min_size=1, max_size=6))
    return n, seqs


@settings(max_examples=60, deadline=None)
@given(data=sequences(), window=st.integers(1, 6), seed=st.integers(0, 10_000))
def test_examples_invariants(data, window, seed):
    n, seqs = data
    log = make_log(seqs, n)
    ex = generate_ranking_examples(log, window=window, neg_ratio=2, seed=seed)
    for i in range(len(ex)):
        e = ex[i]
        seq = seqs[e.user]
        assert 1 <= len(e.history) <= window
        if e.label == 0:
            assert e.candidate not in seq
        else:
            c = seq.index(e.candidate)
            assert list(e.history) == seq[max(0, c - window):c]
    again = generate_ranking_examples(log, window=window, neg_ratio=2, seed=seed)
    assert np.array_equal(ex.candidates, again.candidates)


# -- leave-one-out -----------------------------------------------------------

def test_leave_one_out_latest_item():
    train, test = leave_one_out_split(make_log([[4, 2, 7]], 10), n_negatives=5, seed=0)
    assert test.positives.tolist() == [7]
    assert train.items[0].tolist() == [4, 2]
    assert test.candidates[0, -1] == 7


def test_leave_one_out_errors():
    with pytest.raises(NegativeSamplingError, match="user 0"):
        leave_one_out_split(make_log([[0, 1, 2]], 10), n_negatives=8)
    with pytest.raises(DataError):
        leave_one_out_split(make_log([[0]], 10), n_negatives=1)


@settings(max_examples=60, deadline=None)
@given(data=sequences(), seed=st.integers(0, 10_000))
def test_leave_one_out_invariants(data, seed):
    n, seqs = data
    k = min(n - max(len(s) for s in seqs), 4)
    log = make_log(seqs, n)
    train, test = leave_one_out_split(log, n_negatives=k, seed=seed)
    for u, seq in enumerate(seqs):
        assert train.items[u].tolist() + [int(test.positives[u])] == seq
        assert not set(test.negatives[u].tolist()) & set(seq)
        assert len(set(test.negatives[u].tolist())) == k
    _, again = leave_one_out_split(log, n_negatives=k, seed=seed)
    assert np.array_equal(test.negatives, again.negatives)


def test_ranking_splits_validation_is_second_latest():
    log = make_log([[0, 1, 2, 3, 4]], 30)
    train, valid, test = ranking_splits(log, n_negatives=10, seed=3)
    assert train.items[0].tolist() == [0, 1, 2]
    assert valid.positives.tolist() == [3] and test.positives.tolist() == [4]
    assert 4 not in valid.negatives[0]
    assert test.history[0, :test.lengths[0]].tolist() == [0, 1, 2, 3]


# -- public-user split -------------------------------------------------------

def test_public_split_sizes():
    train, test = split_public_users(table_of(10), 0.8, seed=0)
    assert len(train) == 8 and len(test) == 2
    train, test = split_public_users(table_of(10), 0.1, seed=0)
    assert len(train) == 1 and len(test) == 9


def test_public_split_errors():
    with pytest.raises(ConfigError):
        split_public_users(table_of(10), 0.0)
    with pytest.raises(ConfigError):
        split_public_users(table_of(1), 0.5)


@settings(max_examples=50, deadline=None)
@given(m=st.integers(2, 200), fraction=st.floats(0.01, 0.99), seed=st.integers(0, 1000))
def test_public_split_partition(m, fraction, seed):
    try:
        split = split_public_users(table_of(m), fraction, seed)
    except ConfigError:
        return
    train, test = split
    assert not set(train) & set(test)
    assert sorted(np.concatenate([train, test]).tolist()) == list(range(m))
    assert sorted(np.concatenate([split.fit, split.valid]).tolist()) == train.tolist()
    assert len(split.fit) >= 1
    again = split_public_users(table_of(m), fraction, seed)
    assert np.array_equal(again.test, test)


def test_split_spec_validation():
    SplitSpec(ratios=(0.7, 0.1, 0.2))
    with pytest.raises(ConfigError):
        SplitSpec(ratios=(0.7, 0.2, 0.2))
    with pytest.raises(ConfigError):
        SplitSpec(ratios=(1.0, 0.0, 0.0))


# -- synthetic generator -----------------------------------------------------

def test_synthetic_shapes_and_validity():
    cfg = SyntheticConfig(n_users=100, rho=0.5, seed=1)
    source, target, table = generate_synthetic(cfg)
    assert source.n_users == target.n_users == table.n_users == 100
    source.validate()
    target.validate()
    table.validate()


def test_synthetic_is_deterministic():
    a = generate_synthetic(SyntheticConfig(n_users=50, rho=1.0, seed=3))
    b = generate_synthetic(SyntheticConfig(n_users=50, rho=1.0, seed=3))
    assert a[0].equals(b[0]) and a[1].equals(b[1])
    assert np.array_equal(a[2].values, b[2].values)


def test_synthetic_rejects_degenerate():
    with pytest.raises(ConfigError):
        generate_synthetic(SyntheticConfig(n_source_items=0))
    with pytest.raises(ConfigError):
        generate_synthetic(SyntheticConfig(rho=1.5))


def _probe_f1(rho: float, seed: int):
    from sklearn.linear_model import LogisticRegression

    source, _, table = generate_synthetic(SyntheticConfig(rho=rho, seed=seed))
    x = source.binary_matrix()
    y = table.values[:, 0]
    perm = np.random.default_rng(seed).permutation(len(y))
    tr, te = perm[:1600], perm[1600:]
    clf = LogisticRegression(C=0.05, max_iter=2000).fit(x[tr], y[tr])
    pred = clf.predict(x[te])
    f1 = weighted_prf(confusion_matrix(y[te], pred, 2))[2]
    return f1, majority_f1(y[te], 2, reference=y[tr])


def test_synthetic_rho0_probe_matches_majority():
    for seed in range(5):
        f1, base = _probe_f1(0.0, seed)
        assert abs(f1 - base) <= 0.05, (seed, f1, base)


def test_synthetic_rho1_probe_recovers_attribute():
    for seed in range(5):
        f1, _ = _probe_f1(1.0, seed)
        assert f1 > 0.95, (seed, f1)


# -- dataset bundle and container -------------------------------------------

def small_dataset(m=60, seed=0):
    source, target, table = generate_synthetic(
        SyntheticConfig(n_users=m, n_source_items=150, n_target_items=150, rho=1.0, seed=seed))
    return source, target, table


def test_filter_users_drops_short_histories():
    source = make_log([[0, 1], [0], [1, 2, 3]], 5, "source")
    target = make_log([[0, 1, 2], [0, 1, 2], [3, 4]], 5)
    s, t, tab = filter_users(source, target, table_of(3))
    assert s.n_users == 1 and t.items[0].tolist() == [0, 1, 2]


def test_build_dataset_rejects_mismatched_users():
    source, target, table = small_dataset()
    with pytest.raises(DataError):
        build_dataset(source.subset(range(10)), target, table)


def test_transfer_inputs_exclude_query():
    source, target, table = small_dataset()
    data = build_dataset(source, target, table, SplitSpec(seed=0), window=5, n_negatives=20)
    hist, mask, query = data.transfer_inputs([0])
    seq = source.items[0]
    assert query[0] == seq[-1]
    assert hist[0][mask[0]].tolist() == seq[-6:-1].tolist()


def test_container_roundtrip_is_byte_identical(tmp_path):
    source, target, table = small_dataset()
    split = SplitSpec(seed=4)
    a, b = tmp_path / "a.data", tmp_path / "b.data"
    data = save_container(a, source, target, table, split, window=10, n_negatives=20)
    save_container(b, source, target, table, split, window=10, n_negatives=20)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes().startswith(b"PRIVNET-DATA-1\n")
    assert content_hash(a) == content_hash(b)
    loaded, full_target, payload = load_container(a)
    assert loaded.source.equals(data.source) and full_target.equals(target)
    assert np.array_equal(loaded.test.negatives, data.test.negatives)
    assert np.array_equal(loaded.privacy.test, data.privacy.test)
    assert np.array_equal(loaded.table.public, data.table.public)
    assert payload["seed"] == 4


def test_container_rejects_foreign_files(tmp_path):
    p = tmp_path / "x.data"
    p.write_bytes(b"SOMETHING\n{}")
    with pytest.raises(FormatError):
        load_container(p)
    p.write_bytes(b"PRIVNET-DATA-1\n{not json")
    with pytest.raises(FormatError):
        load_container(p)


def test_content_hash_matches_git_blob(tmp_path):
    p = tmp_path / "f"
    p.write_bytes(b"hello\n")
    assert content_hash(p) == "ce013625030ba8dba906f756967f9e9ca394464a"


def test_table_roundtrip():
    table = table_of(5, n_classes=3).with_public([0, 2])
    back = PrivateAttributeTable.from_dict(json.loads(json.dumps(table.to_dict())))
    assert np.array_equal(back.values, table.values) and back.public.tolist() == [1, 0, 1, 0, 0]
