from collections import Counter

import numpy as np
import pytest

import oracles
from conftest import make_set
from zsrec.dataset import ItemCatalog, Split, cold_start_user_filter, popularity_stats
from zsrec.errors import ConfigError
from zsrec.experiments import (COLD_START, ExperimentConfig, EvalReport, LlmModel,
                               build_fixed_mostpop_candidates, build_neighbor_candidates,
                               compare_runs, evaluate_run, neighbor_candidate_items,
                               run_cold_start, run_free_top50, run_rerank)
from zsrec.llm import ChatClient
from zsrec.llm.client import CandidateStub, numbered
from zsrec.llm.pipeline import make_stub
from zsrec.metrics import MetricError
from zsrec.recommenders import MostPop, RandomRecommender


def catalog(items):
    return ItemCatalog({i: f"Film {i}" for i in items}, {})


def fixture_split(n_users=8, n_items=12, seed=0):
    rng = np.random.default_rng(seed)
    items = [f"i{j:02d}" for j in range(n_items)]
    train, test = {}, {}
    for u in range(n_users):
        perm = rng.permutation(n_items)
        size = 2 + u  # distinct counts, so the quartile is easy to reason about
        train[f"u{u}"] = [items[j] for j in perm[:size]]
        test[f"u{u}"] = [items[j] for j in perm[size:size + 2]]
    users = list(train)
    return Split(make_set(train, items=items, users=users), make_set(test, items=items, users=users),
                 seed, 0.8), catalog(items)


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(kind="Nope")
    with pytest.raises(ConfigError):
        ExperimentConfig(cutoffs=(20, 10))
    with pytest.raises(ConfigError):
        ExperimentConfig(cold_start_mode=COLD_START)


def test_free_top50_roster():
    split, cat = fixture_split(5)
    runs, reports = run_free_top50([MostPop(), RandomRecommender()], split, cat)
    assert set(runs) == {"MostPop", "Random"} and not reports
    assert all(len(r.lists) == 5 for r in runs.values())


def test_echo_stub_llm_equals_mostpop():
    split, cat = fixture_split()
    llm = LlmModel("LLM", ChatClient(make_stub("echo-mostpop", split, cat, 50), "stub"))
    runs, reports = run_free_top50([MostPop(), llm], split, cat)
    stats = popularity_stats(split.train)
    a = evaluate_run(runs["MostPop"], split, stats, (2, 4, 6))
    b = evaluate_run(runs["LLM"], split, stats, (2, 4, 6))
    assert a.vector() == b.vector()
    assert reports["LLM"].rate == 0.0


def test_llm_skips_users_without_profile():
    items = ["a", "b", "c"]
    train = make_set({"u1": ["a"], "u2": ["b"]}, items=items, users=["u1", "u2", "u3"])
    test = make_set({"u1": ["b"], "u3": ["c"]}, items=items, users=["u1", "u2", "u3"])
    split = Split(train, test, 0, 0.8)
    cat = catalog(items)
    llm = LlmModel("LLM", ChatClient(lambda r: numbered(["Film c"]), "stub"))
    runs, _ = run_free_top50([MostPop(), llm], split, cat)
    assert set(runs["LLM"].lists) == {"u1"}
    assert set(runs["MostPop"].lists) == {"u1", "u3"}


def test_fixed_mostpop_candidates():
    train = make_set({"u1": ["A", "B", "C"], "u2": ["A", "B"], "u3": ["A", "C"]})
    cat = ItemCatalog({"A": "a", "B": "b", "C": "c"}, {})
    assert build_fixed_mostpop_candidates(train, cat, 2) == ["a", "b"]  # B and C tie; B first
    assert build_fixed_mostpop_candidates(train, cat, 10) == ["a", "b", "c"]


def test_neighbor_candidates_disjoint_case():
    # target t shares one item with each of 10 neighbours; each neighbour has 5 private favourites
    profiles = {"t": [(f"s{v}", 5.0) for v in range(10)]}
    for v in range(10):
        profiles[f"n{v}"] = [(f"s{v}", 1.0)] + [(f"p{v}_{j}", 5.0 - j * 0.5) for j in range(5)]
    profiles["far"] = [("zz", 5.0)]
    train = make_set(profiles, rating_scale=(0.5, 5.0))
    items = neighbor_candidate_items(train, ["t"], 10, 5, seed=1)["t"]
    assert len(items) == len(set(items)) == 50
    assert set(items) == {f"p{v}_{j}" for v in range(10) for j in range(5)}
    again = neighbor_candidate_items(train, ["t"], 10, 5, seed=1)["t"]
    assert items == again
    assert neighbor_candidate_items(train, ["t"], 10, 5, seed=2)["t"] != items


def test_neighbor_backfill_trace():
    # n1 and n2 both rank item X first; the later neighbour backfills with its 6th-rated item
    top = [("X", 5.0)]
    n1 = top + [(f"a{j}", 4.5 - 0.5 * j) for j in range(5)]
    n2 = top + [(f"b{j}", 4.5 - 0.5 * j) for j in range(5)]
    train = make_set({"t": [("a0", 3.0), ("b0", 3.0)], "n1": n1, "n2": n2}, rating_scale=(0.5, 5.0))
    sim_rank = neighbor_candidate_items(train, ["t"], n_neighbors=2, per_neighbor=5, seed=0)
    got = set(sim_rank["t"])
    assert got == {"X", "a0", "a1", "a2", "a3", "b0", "b1", "b2", "b3", "b4"}
    assert len(sim_rank["t"]) == 10
    titles = build_neighbor_candidates(train, "t", catalog(train.items), 2, 5, 0)
    assert sorted(titles) == sorted(f"Film {i}" for i in got)


def test_neighbor_exclude_seen_option():
    n1 = [("X", 5.0), ("Y", 4.0)]
    train = make_set({"t": [("X", 1.0)], "n1": n1}, rating_scale=(0.5, 5.0))
    assert set(neighbor_candidate_items(train, ["t"], 1, 2)["t"]) == {"X", "Y"}
    assert neighbor_candidate_items(train, ["t"], 1, 2, exclude_seen=True)["t"] == ["Y"]


def test_rerank_identity_and_reversal():
    split, cat = fixture_split()
    users = split.test.active_users()
    fixed = build_fixed_mostpop_candidates(split.train, cat, 6)
    ids = {t: i for i, t in cat.titles.items()}
    cands = {u: [ids[t] for t in fixed] for u in users}
    echo = LlmModel("Echo", ChatClient(CandidateStub(), "s1"))
    rev = LlmModel("Reverse", ChatClient(CandidateStub(reverse=True), "s2"))
    runs, reports = run_rerank([echo, rev], cands, split, cat)
    assert set(runs) == {"MostPop", "Echo", "Reverse"}
    for u in users:
        assert Counter(runs["Echo"].lists[u].items) == Counter(cands[u])
        assert list(runs["Reverse"].lists[u].items) == cands[u][::-1]
    stats = popularity_stats(split.train)
    assert evaluate_run(runs["Echo"], split, stats).vector() == \
        evaluate_run(runs["MostPop"], split, stats).vector()
    assert reports["Reverse"].off_list_fraction == 0.0
    with pytest.raises(ConfigError):
        run_rerank([MostPop()], cands, split, cat)


def test_cold_start_reports_cold_users_only():
    split, cat = fixture_split(8, seed=1)  # seed with relevant items in both popularity groups
    stats = popularity_stats(split.train)
    reports, cold = run_cold_start([MostPop()], split, cat, stats, cutoffs=(10,))
    assert cold == cold_start_user_filter(split.train)
    assert {len(split.train.profile(u)) for u in cold} == {2, 3}  # counts 2..9, Q1 = 3.75
    assert reports["MostPop"].metadata["cold_users"] == 2
    full = evaluate_run(run_free_top50([MostPop()], split, cat, 50, users=sorted(cold))[0]["MostPop"],
                        split, stats, (10,), users=cold)
    assert reports["MostPop"].vector() == full.vector()


def test_cold_start_surfaces_popreo_gap():
    split, cat = fixture_split(8, seed=0)  # cold users' test items all sit in the short head
    with pytest.raises(MetricError, match="head_share"):
        run_cold_start([MostPop()], split, cat, popularity_stats(split.train))


def test_evaluate_run_cardinality_and_oracle():
    split, cat = fixture_split(6)
    stats = popularity_stats(split.train)
    run = run_free_top50([MostPop()], split, cat)[0]["MostPop"]
    report = evaluate_run(run, split, stats, (10, 20, 50))
    assert len(report.values) == 36
    lists = {u: list(r.items) for u, r in run.lists.items()}
    rel = {u: frozenset(r.item for r in split.test.profile(u)) for u in split.test.active_users()}
    assert report.get("nDCG", 10) == pytest.approx(oracles.ndcg(lists, rel, 10), abs=1e-12)
    assert report.get("MAP", 20) == pytest.approx(oracles.mean_ap(lists, rel, 20), abs=1e-12)
    assert report.get("ARP", 10) == pytest.approx(oracles.arp(lists, 10, stats.phi), abs=1e-12)
    assert EvalReport.from_dict(report.to_dict()).vector() == report.vector()
    assert report.metadata["dataset_fingerprint"] == split.fingerprint()


def test_self_comparison():
    split, cat = fixture_split()
    run = run_free_top50([MostPop()], split, cat)[0]["MostPop"]
    rows = compare_runs({"a": run, "b": run}, (5,))
    assert rows == [{"a": "a", "b": "b", "cutoff": 5, "Jaccard": 1.0, "Kendall": 1.0}]
