import math
import zlib

import numpy as np
import pytest
import scipy.sparse as sp

import oracles
from conftest import catalog_of, make_set
from zsrec.errors import ConfigError
from zsrec.recommenders import (MODELS, EaseR, MostPop, NotFittedError, RandomRecommender,
                                UserKNN, ease_r_fit, item_knn_scores, make_recommender,
                                random_scores, rank_scores, rp3beta_weights, tfidf_matrix,
                                user_knn_scores, vsm_scores)


def random_binary(rng, max_users=8, max_items=10):
    m, n = int(rng.integers(1, max_users + 1)), int(rng.integers(1, max_items + 1))
    return (rng.random((m, n)) < 0.4).astype(float)


def test_rank_scores_ties_by_index():
    s = np.array([1.0, 3.0, 3.0, 0.5, 3.0])
    assert rank_scores(s, 3).tolist() == [1, 2, 4]
    assert rank_scores(s, 10, np.array([2])).tolist() == [1, 4, 0, 3]


def test_mostpop_excludes_seen():
    train = make_set({"u1": ["A"], "u2": ["A", "B"], "u3": ["A", "B", "C"]})
    model = MostPop().fit(train)
    assert model.recommend("u1", 2).items == ("B", "C")
    assert model.recommend("u1", 10).items == ("B", "C")
    assert model.recommend("u1", 2, exclude_seen=False).items == ("A", "B")


def test_recommend_before_fit():
    with pytest.raises(NotFittedError):
        MostPop().recommend("u", 5)


def test_unknown_user():
    model = MostPop().fit(make_set({"u1": ["A"]}))
    with pytest.raises(KeyError):
        model.recommend("ghost", 3)


@pytest.mark.parametrize("bad", [0, -3, 1.5])
def test_knn_rejects_bad_k(bad):
    with pytest.raises(ConfigError):
        UserKNN(k_neighbors=bad)


def test_unknown_param_and_kind():
    with pytest.raises(ConfigError):
        make_recommender("EaseR", alpha=3)
    with pytest.raises(ConfigError):
        make_recommender("SVD")
    with pytest.raises(ConfigError):
        EaseR(**{"lambda": 0})


def test_user_knn_example():
    # u1={A,B}, u2={A,C}, u3={D}
    x = sp.csr_matrix(np.array([[1, 1, 0, 0], [1, 0, 1, 0], [0, 0, 0, 1]], float))
    s = user_knn_scores(x, 0, 2)
    assert s[2] == pytest.approx(0.5) and s[3] == 0.0
    assert not user_knn_scores(sp.csr_matrix(np.ones((1, 3))), 0, 5).any()


def test_user_knn_duplicate_users():
    x = np.array([[1, 0, 1], [1, 0, 1], [0, 1, 0]], float)
    np.testing.assert_allclose(user_knn_scores(sp.csr_matrix(x), 0, 1), x[1], atol=1e-12)


def test_item_knn_example():
    # items A={u1,u2}, B={u1}, C={u2}; u2's profile is {A, C}
    x = sp.csr_matrix(np.array([[1, 1, 0], [1, 0, 1]], float))
    s = item_knn_scores(x, 1, 2)
    assert s[1] == pytest.approx(1 / math.sqrt(2), abs=1e-12)


def test_knn_oracles_on_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(60):
        x = random_binary(rng)
        k = int(rng.integers(1, 6))
        u = int(rng.integers(0, x.shape[0]))
        np.testing.assert_allclose(user_knn_scores(sp.csr_matrix(x), u, k),
                                   oracles.user_knn(x, u, k), atol=1e-10)
        np.testing.assert_allclose(item_knn_scores(sp.csr_matrix(x), u, k),
                                   oracles.item_knn(x, u, k), atol=1e-10)


def test_item_knn_full_k_is_unpruned_sum():
    rng = np.random.default_rng(3)
    x = random_binary(rng, 6, 6)
    sim = x.T @ x / np.maximum(np.outer(np.linalg.norm(x, axis=0), np.linalg.norm(x, axis=0)), 1e-300)
    np.fill_diagonal(sim, 0)
    np.testing.assert_allclose(item_knn_scores(sp.csr_matrix(x), 0, x.shape[1]), x[0] @ sim.T, atol=1e-12)


GENRES = {"A": ["x", "y"], "B": ["x"], "C": ["z"]}


def test_tfidf_hand_fixture():
    cat = catalog_of("ABC", GENRES)
    m = tfidf_matrix(cat, {"A": 0, "B": 1, "C": 2}).toarray()
    # vocab x, y, z with df 2, 1, 1
    l32, l3 = math.log(3 / 2), math.log(3)
    np.testing.assert_allclose(m, [[l32, l3, 0], [l32, 0, 0], [0, 0, l3]])
    sim_ab = l32 * l32 / (math.sqrt(l32 ** 2 + l3 ** 2) * l32)
    a, b = m[0], m[1]
    assert a @ b / np.linalg.norm(a) / np.linalg.norm(b) == pytest.approx(sim_ab, abs=1e-12)
    np.testing.assert_allclose(m, oracles.tfidf([set(GENRES[i]) for i in "ABC"], 3))


def test_tfidf_zero_idf_feature():
    cat = catalog_of("AB", {"A": ["all", "p"], "B": ["all"]})
    m = tfidf_matrix(cat, {"A": 0, "B": 1}).toarray()
    assert m[:, 0].tolist() == [0.0, 0.0]


def test_attribute_models_against_oracle():
    rng = np.random.default_rng(21)
    vocab = list("pqrstu")
    for _ in range(30):
        x = random_binary(rng)
        items = [f"i{j}" for j in range(x.shape[1])]
        feats = {i: [f for f in vocab if rng.random() < 0.35] for i in items}
        cat = catalog_of(items, feats)
        ix = {i: j for j, i in enumerate(items)}
        tf = oracles.tfidf([set(feats[i]) for i in items], len(items))
        m = tfidf_matrix(cat, ix)
        np.testing.assert_allclose(m.toarray(), tf, atol=1e-12)
        k = int(rng.integers(1, 5))
        for u in range(x.shape[0]):
            np.testing.assert_allclose(vsm_scores(sp.csr_matrix(x), m, u),
                                       oracles.vsm(x, tf, u), atol=1e-10)
        train = make_set({f"u{r}": [items[c] for c in np.flatnonzero(x[r])] for r in range(x.shape[0])},
                         items=items, users=[f"u{r}" for r in range(x.shape[0])])
        if not len(train) or not tf.any():
            continue
        aik = make_recommender("AttributeItemKNN", k_neighbors=k).fit(train, cat)
        auk = make_recommender("AttributeUserKNN", k_neighbors=k).fit(train, cat)
        users = train.users
        for r, user in enumerate(users):
            np.testing.assert_allclose(aik.scores(user), oracles.item_knn(x, r, k, tf), atol=1e-10)
            np.testing.assert_allclose(auk.scores(user), oracles.user_knn(x, r, k, x @ tf), atol=1e-10)


def test_attribute_models_need_features():
    train = make_set({"u": ["A", "B"]})
    for kind in ("AttributeItemKNN", "AttributeUserKNN", "VSM"):
        with pytest.raises(ConfigError):
            make_recommender(kind).fit(train, catalog_of("AB"))


def test_vsm_single_item_profile_is_cosine():
    cat = catalog_of("ABC", GENRES)
    m = tfidf_matrix(cat, {"A": 0, "B": 1, "C": 2})
    s = vsm_scores(sp.csr_matrix(np.array([[1.0, 0, 0]])), m, 0)
    d = m.toarray()
    expect = [d[0] @ d[j] / np.linalg.norm(d[0]) / np.linalg.norm(d[j]) for j in range(3)]
    np.testing.assert_allclose(s, expect, atol=1e-12)


def test_ease_hand_example():
    x = np.array([[1, 1], [1, 0]], float)
    b = ease_r_fit(sp.csr_matrix(x), 0.5)
    np.testing.assert_allclose(b, [[0, 0.4], [1 / 1.5, 0]], atol=1e-12)
    scores = x[0] @ b
    assert round(scores[0], 4) == 0.6667 and round(scores[1], 4) == 0.4


def test_ease_identity_gives_zero():
    assert not ease_r_fit(sp.identity(4, format="csr"), 10.0).any()


def test_ease_oracles():
    rng = np.random.default_rng(5)
    for _ in range(20):
        x = random_binary(rng, 12, 15)
        lam = float(rng.uniform(0.1, 50))
        b = ease_r_fit(sp.csr_matrix(x), lam)
        assert np.all(np.diag(b) == 0)
        np.testing.assert_allclose(b, oracles.ease_by_regression(x, lam), atol=1e-8)


def test_rp3_beta_zero_is_walk_product():
    rng = np.random.default_rng(9)
    for _ in range(20):
        x = random_binary(rng)
        np.testing.assert_allclose(rp3beta_weights(sp.csr_matrix(x), 0.0), oracles.rp3_product(x),
                                   atol=1e-10)


def test_rp3_single_cell():
    assert rp3beta_weights(sp.csr_matrix(np.ones((1, 1))), 0.6).tolist() == [[1.0]]


def test_rp3_beta_penalises_popular_column():
    # items 0 and 1 reach the same pre-penalty weight from item 2; item 0 is more popular
    x = np.array([[1, 1, 1], [1, 0, 0], [1, 0, 0]], float)
    w0 = rp3beta_weights(sp.csr_matrix(x), 0.0)
    ratios = []
    for beta in (0.0, 0.3, 0.6, 1.0):
        w = rp3beta_weights(sp.csr_matrix(x), beta)
        ratios.append(w[2, 0] / w[2, 1])
    assert w0[2, 0] == pytest.approx(w0[2, 1])
    assert all(a > b for a, b in zip(ratios, ratios[1:]))
    with pytest.raises(ConfigError):
        rp3beta_weights(sp.csr_matrix(x), -0.1)


def test_random_uniform_top1():
    counts = np.zeros(4)
    for trial in range(10_000):
        counts[np.argmax(random_scores(4, trial, "u"))] += 1
    assert np.all(np.abs(counts / 10_000 - 0.25) < 0.02)


def test_random_deterministic_and_empty():
    train = make_set({"u1": ["a"], "u2": ["b", "c", "d"]})
    a = RandomRecommender(seed=3).fit(train).recommend("u1", 3)
    assert a == RandomRecommender(seed=3).fit(train).recommend("u1", 3)
    assert random_scores(0, 1, "u").size == 0


@pytest.mark.parametrize("kind", sorted(MODELS))
def test_every_model_contract(kind):
    rng = np.random.default_rng(zlib.crc32(kind.encode()))
    items = [f"i{j}" for j in range(9)]
    feats = {i: [g for g in "abcde" if rng.random() < 0.4] or ["a"] for i in items}
    profiles = {f"u{r}": [i for i in items if rng.random() < 0.4] or [items[r]] for r in range(7)}
    train = make_set(profiles, items=items)
    model = make_recommender(kind).fit(train, catalog_of(items, feats))
    for u in train.users:
        rec = model.recommend(u, 5)
        seen = {r.item for r in train.profile(u)}
        assert not seen & set(rec.items)
        assert len(rec) == min(5, len(items) - len(seen))
        pairs = list(zip(rec.scores, [train.item_index[i] for i in rec.items]))
        assert all((-s1, i1) < (-s2, i2) for (s1, i1), (s2, i2) in zip(pairs, pairs[1:]))
