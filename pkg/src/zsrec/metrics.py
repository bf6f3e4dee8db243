"""Accuracy, coverage/novelty, popularity-bias and list-similarity metrics at a cutoff.

Conventions:

* accuracy metrics and EPC average over users with a non-empty relevance set;
  a relevant user without a list counts as an empty list;
* exposure metrics (coverage, Gini, ACLT, ARP) count every user in the run;
* AP@k and the ideal DCG are normalized by ``min(k, |rel_u|)``;
* PopREO compares the short head and the long tail with population std / mean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .dataset import PopularityStats, Split

HIGHER, LOWER = "higher_better", "lower_better"

SINGLE_RUN_METRICS = ("Precision", "Recall", "F1", "HR", "MAP", "nDCG",
                      "ItemCoverage", "Gini", "EPC", "ACLT", "ARP", "PopREO")
PAIRWISE_METRICS = ("Jaccard", "Kendall")
ORIENTATION = {name: HIGHER for name in SINGLE_RUN_METRICS + PAIRWISE_METRICS}
ORIENTATION.update(ARP=LOWER, PopREO=LOWER)


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricValue:
    name: str
    cutoff: int
    value: float
    orientation: str

    @property
    def label(self) -> str:
        return f"{self.name}@{self.cutoff}"


@dataclass(frozen=True)
class EvalContext:
    relevant: dict[str, frozenset]
    stats: PopularityStats
    n_items: int
    cutoff: int

    def __post_init__(self):
        if self.cutoff < 1:
            raise MetricError(f"cutoff must be >= 1, got {self.cutoff}")

    @property
    def evaluated_users(self) -> list[str]:
        return [u for u, rel in self.relevant.items() if rel]

    def with_cutoff(self, cutoff: int) -> "EvalContext":
        return EvalContext(self.relevant, self.stats, self.n_items, cutoff)

    def restrict(self, users) -> "EvalContext":
        users = set(users)
        return EvalContext({u: r for u, r in self.relevant.items() if u in users},
                           self.stats, self.n_items, self.cutoff)


def make_context(split: Split, stats: PopularityStats, cutoff: int,
                 rating_threshold: float | None = None) -> EvalContext:
    """Relevance sets from the test split; every test interaction counts unless a threshold is set."""
    relevant = {}
    for user in split.test.active_users():
        relevant[user] = frozenset(
            r.item for r in split.test.profile(user)
            if rating_threshold is None or r.rating >= rating_threshold)
    return EvalContext(relevant, stats, len(split.train.item_index), cutoff)


Lists = Mapping[str, Sequence[str]]


def _lists(run) -> Lists:
    if hasattr(run, "lists"):
        return {u: list(r.items) for u, r in run.lists.items()}
    return run


def _mv(name: str, k: int, value: float) -> MetricValue:
    return MetricValue(name, k, float(value), ORIENTATION[name])


def _accuracy_users(lists: Lists, ctx: EvalContext):
    users = ctx.evaluated_users
    if not users:
        raise MetricError("no evaluable users (every test relevance set is empty)")
    k = ctx.cutoff
    for u in users:
        yield list(lists.get(u, ()))[:k], ctx.relevant[u]


def precision_recall_f1_at_k(run, ctx: EvalContext) -> tuple[MetricValue, MetricValue, MetricValue]:
    lists, k = _lists(run), ctx.cutoff
    p_sum = r_sum = f_sum = 0.0
    n = 0
    for top, rel in _accuracy_users(lists, ctx):
        hits = sum(1 for i in top if i in rel)
        p, r = hits / k, hits / len(rel)
        p_sum += p
        r_sum += r
        f_sum += 2 * p * r / (p + r) if p + r > 0 else 0.0
        n += 1
    return _mv("Precision", k, p_sum / n), _mv("Recall", k, r_sum / n), _mv("F1", k, f_sum / n)


def hit_ratio_at_k(run, ctx: EvalContext) -> MetricValue:
    lists = _lists(run)
    hits = [any(i in rel for i in top) for top, rel in _accuracy_users(lists, ctx)]
    return _mv("HR", ctx.cutoff, sum(hits) / len(hits))


def map_at_k(run, ctx: EvalContext) -> MetricValue:
    lists, k = _lists(run), ctx.cutoff
    aps = []
    for top, rel in _accuracy_users(lists, ctx):
        hits, total = 0, 0.0
        for r, item in enumerate(top, start=1):
            if item in rel:
                hits += 1
                total += hits / r
        aps.append(total / min(k, len(rel)))
    return _mv("MAP", k, sum(aps) / len(aps))


def _disc(rank: int) -> float:
    return 1.0 / math.log2(rank + 1)


def ndcg_at_k(run, ctx: EvalContext) -> MetricValue:
    lists, k = _lists(run), ctx.cutoff
    vals = []
    for top, rel in _accuracy_users(lists, ctx):
        dcg = sum(_disc(r) for r, i in enumerate(top, start=1) if i in rel)
        idcg = sum(_disc(r) for r in range(1, min(k, len(rel)) + 1))
        vals.append(dcg / idcg)
    return _mv("nDCG", k, sum(vals) / len(vals))


def item_coverage_at_k(run, ctx: EvalContext) -> MetricValue:
    """Number of distinct items shown in any top-k list."""
    lists, k = _lists(run), ctx.cutoff
    shown = set()
    for top in lists.values():
        shown.update(list(top)[:k])
    return _mv("ItemCoverage", k, len(shown))


def gini_diversity_at_k(run, ctx: EvalContext) -> MetricValue:
    """``1 - Gini`` of the exposure counts over the whole catalog (zeros included)."""
    lists, k = _lists(run), ctx.cutoff
    counts: dict[str, int] = {}
    for top in lists.values():
        for item in list(top)[:k]:
            counts[item] = counts.get(item, 0) + 1
    total = sum(counts.values())
    if total == 0:
        raise MetricError("Gini needs at least one recommended item")
    n = max(ctx.n_items, len(counts))
    c = np.zeros(n)
    c[:len(counts)] = sorted(counts.values())
    c.sort()
    weights = 2 * np.arange(1, n + 1) - n - 1
    gini = float(weights @ c) / (n * total)
    return _mv("Gini", k, 1.0 - gini)


def epc_at_k(run, ctx: EvalContext) -> MetricValue:
    """Expected popularity complement with novelty ``1 - phi(i)/|U|``, normalized by
    the discounted relevant mass of the list."""
    lists, k = _lists(run), ctx.cutoff
    phi, n_users = ctx.stats.phi, ctx.stats.n_users
    vals = []
    for top, rel in _accuracy_users(lists, ctx):
        num = den = 0.0
        for r, item in enumerate(top, start=1):
            if item in rel:
                d = _disc(r)
                num += d * (1.0 - phi.get(item, 0) / n_users)
                den += d
        vals.append(num / den if den > 0 else 0.0)
    return _mv("EPC", k, sum(vals) / len(vals))


def aclt_at_k(run, ctx: EvalContext) -> MetricValue:
    lists, k = _lists(run), ctx.cutoff
    if not lists:
        return _mv("ACLT", k, 0.0)
    tail = ctx.stats.long_tail
    total = sum(sum(1 for i in list(top)[:k] if i in tail) for top in lists.values())
    return _mv("ACLT", k, total / len(lists))


def arp_at_k(run, ctx: EvalContext) -> MetricValue:
    """Mean over users of the mean train popularity of their top-k; empty lists count as 0."""
    lists, k = _lists(run), ctx.cutoff
    if not lists:
        return _mv("ARP", k, 0.0)
    phi = ctx.stats.phi
    per_user = []
    for top in lists.values():
        top = list(top)[:k]
        per_user.append(sum(phi.get(i, 0) for i in top) / len(top) if top else 0.0)
    return _mv("ARP", k, sum(per_user) / len(per_user))


def pop_reo_at_k(run, ctx: EvalContext) -> MetricValue:
    lists, k = _lists(run), ctx.cutoff
    groups = (ctx.stats.short_head, ctx.stats.long_tail)
    num = [0, 0]
    den = [0, 0]
    for top, rel in _accuracy_users(lists, ctx):
        top = set(top)
        for g, members in enumerate(groups):
            rel_g = rel & members
            den[g] += len(rel_g)
            num[g] += len(rel_g & top)
    if min(den) == 0:
        raise MetricError("PopREO needs test-relevant items in both the short head and the "
                          "long tail; choose a different head_share")
    p = np.array(num, dtype=float) / np.array(den, dtype=float)
    mean = p.mean()
    return _mv("PopREO", k, float(p.std() / mean) if mean > 0 else 0.0)


def _shared_users(a: Lists, b: Lists, k: int):
    for u in a:
        if u in b:
            la, lb = list(a[u])[:k], list(b[u])[:k]
            if la or lb:
                yield la, lb


def jaccard_at_k(run_a, run_b, k: int) -> MetricValue:
    vals = [len(set(la) & set(lb)) / len(set(la) | set(lb))
            for la, lb in _shared_users(_lists(run_a), _lists(run_b), k)]
    return _mv("Jaccard", k, sum(vals) / len(vals) if vals else 0.0)


def kendall_tau_at_k(run_a, run_b, k: int) -> MetricValue:
    """Kendall's tau over the items both top-k lists share; fewer than two shared items gives 0."""
    vals = []
    for la, lb in _shared_users(_lists(run_a), _lists(run_b), k):
        pos_b = {item: r for r, item in enumerate(lb)}
        common = [i for i in la if i in pos_b]
        m = len(common)
        if m < 2:
            vals.append(0.0)
            continue
        score = 0
        for x, y in combinations(range(m), 2):
            score += 1 if pos_b[common[x]] < pos_b[common[y]] else -1
        vals.append(score / (m * (m - 1) / 2))
    return _mv("Kendall", k, sum(vals) / len(vals) if vals else 0.0)


def single_run_metrics(run, ctx: EvalContext) -> list[MetricValue]:
    """The twelve single-run metrics at ``ctx.cutoff``, in canonical order."""
    p, r, f1 = precision_recall_f1_at_k(run, ctx)
    return [p, r, f1, hit_ratio_at_k(run, ctx), map_at_k(run, ctx), ndcg_at_k(run, ctx),
            item_coverage_at_k(run, ctx), gini_diversity_at_k(run, ctx), epc_at_k(run, ctx),
            aclt_at_k(run, ctx), arp_at_k(run, ctx), pop_reo_at_k(run, ctx)]
