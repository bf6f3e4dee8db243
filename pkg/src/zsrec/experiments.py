"""The four experimental configurations: free top-50, re-rank of a fixed popular list,
re-rank of a neighbour-built list, and cold-start evaluation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .dataset import (InteractionSet, ItemCatalog, PopularityStats, Split,
                      cold_start_user_filter, id_sort_key, stable_hash)
from .errors import ConfigError
from .llm.client import ChatClient
from .llm.pipeline import RERANK, TOP_N, HallucinationReport, run_llm_recommender
from .metrics import (MetricValue, jaccard_at_k, kendall_tau_at_k, make_context,
                      single_run_metrics)
from .recommenders import RecommendationList, Recommender, cosine_similarity
from .runs import RecommendationRun, config_hash

log = logging.getLogger(__name__)

FREE_TOP50, RERANK_MOSTPOP, RERANK_NEIGHBORS, COLD_START = (
    "FreeTop50", "RerankMostPop", "RerankNeighbors", "ColdStart")
EXPERIMENT_KINDS = (FREE_TOP50, RERANK_MOSTPOP, RERANK_NEIGHBORS, COLD_START)


@dataclass
class LlmModel:
    """An LLM roster entry; list construction happens in the LLM pipeline."""

    name: str
    client: ChatClient
    threshold: float = 0.8
    token_budget: int = 4096
    response_reserve: int = 1000
    concurrency: int = 1
    max_failure_fraction: float = 0.1


Model = Union[Recommender, LlmModel]


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = FREE_TOP50
    cutoffs: tuple[int, ...] = (10, 20, 50)
    n: int = 50
    seed: int = 42
    cold_start_mode: str = FREE_TOP50

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        cut = list(self.cutoffs)
        if not cut or any(c < 1 for c in cut) or cut != sorted(set(cut)):
            raise ConfigError(f"cutoffs must be positive and strictly ascending, got {cut}")
        if self.cold_start_mode == COLD_START:
            raise ConfigError("cold-start must wrap another experiment kind")


@dataclass
class EvalReport:
    model: str
    values: list[MetricValue]
    metadata: dict = field(default_factory=dict)

    def get(self, name: str, cutoff: int) -> float:
        for v in self.values:
            if v.name == name and v.cutoff == cutoff:
                return v.value
        raise KeyError(f"{name}@{cutoff}")

    def vector(self) -> dict[str, float]:
        return {v.label: v.value for v in self.values}

    def to_dict(self) -> dict:
        return {"model": self.model, "metadata": self.metadata,
                "values": [{"name": v.name, "cutoff": v.cutoff, "value": v.value,
                            "orientation": v.orientation} for v in self.values]}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(d["model"], [MetricValue(v["name"], v["cutoff"], v["value"], v["orientation"])
                                for v in d["values"]], d.get("metadata", {}))


def recommend_all(model: Recommender, users: Iterable[str], n: int,
                  exclude_seen: bool = True) -> RecommendationRun:
    lists = {u: model.recommend(u, n, exclude_seen) for u in users}
    return RecommendationRun(model.name, lists, {"kind": model.kind, "params": dict(model.params),
                                                 "n": n, "exclude_seen": exclude_seen})


def _llm_run(model: LlmModel, mode, users, split, catalog, n, candidates=None):
    return run_llm_recommender(
        model.client, mode, users, split, catalog, n=n, candidates=candidates,
        threshold=model.threshold, token_budget=model.token_budget,
        response_reserve=model.response_reserve, concurrency=model.concurrency,
        max_failure_fraction=model.max_failure_fraction, name=model.name)


def evaluable_users(split: Split) -> list[str]:
    return split.test.active_users()


def run_free_top50(models: Sequence[Model], split: Split, catalog: ItemCatalog, n: int = 50,
                   users: Optional[Sequence[str]] = None,
                   ) -> tuple[dict[str, RecommendationRun], dict[str, HallucinationReport]]:
    """Top-n lists from every model; baselines exclude seen items, LLMs go through prompt 1."""
    users = list(users) if users is not None else evaluable_users(split)
    runs, reports = {}, {}
    for model in models:
        if isinstance(model, LlmModel):
            with_profile = [u for u in users if split.train.profile(u)]
            runs[model.name], reports[model.name] = _llm_run(model, TOP_N, with_profile,
                                                             split, catalog, n)
        else:
            if model.train is None:
                model.fit(split.train, catalog)
            runs[model.name] = recommend_all(model, users, n)
    return runs, reports


def fixed_mostpop_items(train: InteractionSet, n: int = 50) -> list[str]:
    phi: dict[str, int] = {i: 0 for i in train.item_index}
    for rec in train.interactions:
        phi[rec.item] += 1
    return sorted(phi, key=lambda i: (-phi[i], id_sort_key(i)))[:n]


def build_fixed_mostpop_candidates(train: InteractionSet, catalog: ItemCatalog, n: int = 50) -> list[str]:
    """Titles of the n most popular train items; the same list for every user."""
    return [catalog.title(i) for i in fixed_mostpop_items(train, n) if i in catalog]


def neighbor_candidate_items(train: InteractionSet, users: Sequence[str], n_neighbors: int = 10,
                             per_neighbor: int = 5, seed: int = 42,
                             exclude_seen: bool = False) -> dict[str, list[str]]:
    """Per user: the top-rated items of each nearest neighbour, de-duplicated and shuffled.

    A neighbour whose top item was already taken contributes its next-rated items
    instead, so the list reaches ``n_neighbors * per_neighbor`` whenever the pool allows.
    """
    x = train.matrix(binary=True)
    sim = cosine_similarity(x)
    index_users = train.users
    by_rating = {}
    for u in train.active_users():
        by_rating[u] = [r.item for r in sorted(train.profile(u),
                                               key=lambda r: (-r.rating, id_sort_key(r.item)))]
    target = n_neighbors * per_neighbor
    out = {}
    for user in users:
        if not train.profile(user):
            raise ValueError(f"user {user!r} has no train interactions")
        u = train.user_index[user]
        row = sim[u].copy()
        row[u] = -np.inf
        order = np.lexsort((np.arange(len(row)), -row))
        neighbors = [index_users[v] for v in order if v != u and index_users[v] in by_rating]
        blocked = {r.item for r in train.profile(user)} if exclude_seen else set()
        taken: list[str] = []
        chosen = set()
        for v in neighbors[:n_neighbors]:
            got = 0
            for item in by_rating[v]:
                if got == per_neighbor:
                    break
                if item in chosen or item in blocked:
                    continue
                chosen.add(item)
                taken.append(item)
                got += 1
        if len(taken) < target:
            log.info("neighbour pool for user %s holds %d of %d items", user, len(taken), target)
        rng = np.random.default_rng([seed, stable_hash(user)])
        out[user] = [taken[k] for k in rng.permutation(len(taken))]
    return out


def build_neighbor_candidates(train: InteractionSet, user: str, catalog: ItemCatalog,
                              n_neighbors: int = 10, per_neighbor: int = 5, seed: int = 42,
                              exclude_seen: bool = False) -> list[str]:
    items = neighbor_candidate_items(train, [user], n_neighbors, per_neighbor, seed, exclude_seen)[user]
    return [catalog.title(i) for i in items]


def candidate_run(name: str, candidates: dict[str, list[str]]) -> RecommendationRun:
    """A candidate list evaluated as-is (the reference row of a re-rank table)."""
    lists = {u: RecommendationList(u, tuple(c), tuple(1.0 / r for r in range(1, len(c) + 1)))
             for u, c in candidates.items()}
    return RecommendationRun(name, lists, {"kind": "candidates"})


def run_rerank(models: Sequence[Model], candidates_per_user: dict[str, list[str]], split: Split,
               catalog: ItemCatalog, baseline_name: str = "MostPop",
               ) -> tuple[dict[str, RecommendationRun], dict[str, HallucinationReport]]:
    """LLMs re-rank each user's candidates with prompt 2; the untouched list is the reference row."""
    if not candidates_per_user or any(not c for c in candidates_per_user.values()):
        raise ValueError("every user needs a non-empty candidate list")
    runs = {baseline_name: candidate_run(baseline_name, candidates_per_user)}
    reports = {}
    users = [u for u in candidates_per_user if split.train.profile(u)]
    for model in models:
        if not isinstance(model, LlmModel):
            raise ConfigError(f"re-rank experiments take LLM models only, got {model.name}")
        n = max(len(c) for c in candidates_per_user.values())
        runs[model.name], reports[model.name] = _llm_run(model, RERANK, users, split, catalog, n,
                                                         candidates_per_user)
    return runs, reports


def evaluate_run(run: RecommendationRun, split: Split, stats: PopularityStats,
                 cutoffs: Sequence[int] = (10, 20, 50), rating_threshold: Optional[float] = None,
                 users: Optional[Iterable[str]] = None, metadata: Optional[dict] = None) -> EvalReport:
    """All twelve single-run metrics at every cutoff, optionally over a user subset."""
    ctx = make_context(split, stats, cutoffs[0], rating_threshold)
    if users is not None:
        users = set(users)
        ctx = ctx.restrict(users)
        run = run.restrict(users)
    values = []
    for k in cutoffs:
        values.extend(single_run_metrics(run, ctx.with_cutoff(k)))
    meta = {"split_seed": split.seed, "split_ratio": split.ratio,
            "dataset_fingerprint": split.fingerprint(), "cutoffs": list(cutoffs),
            "n_users": len(run.lists), "config_hash": config_hash(run.config)}
    meta.update(metadata or {})
    return EvalReport(run.model, values, meta)


def compare_runs(runs: dict[str, RecommendationRun], cutoffs: Sequence[int] = (10, 20, 50),
                 reference: Optional[str] = None) -> list[dict]:
    """Jaccard and Kendall between run pairs (or each run and ``reference``)."""
    names = list(runs)
    pairs = ([(reference, b) for b in names if b != reference] if reference
             else [(a, b) for i, a in enumerate(names) for b in names[i + 1:]])
    rows = []
    for a, b in pairs:
        for k in cutoffs:
            rows.append({"a": a, "b": b, "cutoff": k,
                         "Jaccard": jaccard_at_k(runs[a], runs[b], k).value,
                         "Kendall": kendall_tau_at_k(runs[a], runs[b], k).value})
    return rows


def run_cold_start(models: Sequence[Model], split: Split, catalog: ItemCatalog,
                   stats: PopularityStats, cutoffs: Sequence[int] = (10,), n: int = 50,
                   ) -> tuple[dict[str, EvalReport], set[str]]:
    """Free top-n recommendations, evaluated only over lower-quartile (cold) users."""
    cold = cold_start_user_filter(split.train)
    cold_eval = [u for u in evaluable_users(split) if u in cold]
    if not cold:
        raise ValueError("cold-start user set is empty")
    runs, _ = run_free_top50(models, split, catalog, n, users=cold_eval)
    reports = {name: evaluate_run(run, split, stats, cutoffs, users=cold,
                                  metadata={"experiment": COLD_START, "cold_users": len(cold)})
               for name, run in runs.items()}
    return reports, cold

