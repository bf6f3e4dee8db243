"""Run an LLM as a recommender: prompt, complete, parse, match, account."""
from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

from ..dataset import ItemCatalog, Split
from ..errors import ConfigError, EndpointError
from ..recommenders import MostPop, RecommendationList
from ..runs import RecommendationRun
from .client import CandidateStub, ChatClient, ChatRequest, EchoStub, GibberishStub
from .matching import TitleMatcher, parse_recommendations
from .prompts import build_prompt_rerank, build_prompt_top_n

log = logging.getLogger(__name__)

TOP_N, RERANK = "top_n", "rerank"


class RunFailedError(EndpointError):
    """Too many users failed for the run to be meaningful."""


@dataclass
class LlmExchange:
    user_id: str
    prompt: str
    response: str
    parsed: list[str]
    matched: list[str]
    unmatched: list[dict]
    duplicates: list[str]
    model: str
    cache_key: str
    off_list: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class HallucinationReport:
    parsed: int = 0
    unmatched: int = 0
    off_list: int = 0
    returned: int = 0
    empty_responses: int = 0
    failures: dict[str, str] = field(default_factory=dict)

    @property
    def rate(self) -> float:
        """Share of parsed titles that matched no catalog item."""
        return self.unmatched / self.parsed if self.parsed else 0.0

    @property
    def off_list_fraction(self) -> float:
        """Share of matched items that were not among the re-rank candidates."""
        return self.off_list / self.returned if self.returned else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(rate=self.rate, off_list_fraction=self.off_list_fraction)
        return d


def match_response(raw: str, matcher: TitleMatcher) -> tuple[list[str], list[str], list[dict], list[str]]:
    """Parsed titles, matched ids (response order, first occurrence), unmatched, duplicates."""
    parsed = parse_recommendations(raw)
    matched, unmatched, duplicates = [], [], []
    seen = set()
    for title in parsed:
        item, sim = matcher.best(title)
        if item is None or sim < matcher.threshold:
            unmatched.append({"title": title, "best_item": item, "similarity": sim})
        elif item in seen:
            duplicates.append(title)
        else:
            seen.add(item)
            matched.append(item)
    return parsed, matched, unmatched, duplicates


def _prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


def run_llm_recommender(client: ChatClient, mode: str, users: Sequence[str], split: Split,
                        catalog: ItemCatalog, n: int = 50,
                        candidates: Optional[dict[str, list[str]]] = None,
                        threshold: float = 0.8, token_budget: int = 4096,
                        response_reserve: int = 1000, concurrency: int = 1,
                        max_failure_fraction: float = 0.1,
                        name: Optional[str] = None) -> tuple[RecommendationRun, HallucinationReport]:
    """One exchange per user; the ranked list is the matched items in reply order, scored ``1/rank``.

    In re-rank mode ``candidates`` maps each user to candidate item ids; matched
    items outside that list are kept and flagged as off-list. Failed users are
    recorded and left out of the run.
    """
    if mode not in (TOP_N, RERANK):
        raise ValueError(f"unknown prompt mode {mode!r}")
    if mode == RERANK and candidates is None:
        raise ValueError("re-rank mode needs candidate lists")
    train = split.train
    usable = catalog.restrict(train.item_index)
    matcher = TitleMatcher(usable, threshold)
    max_rating = train.rating_scale[1] if train.is_explicit else None

    def one(user: str) -> LlmExchange:
        profile = train.profile(user)
        cand_titles: list[str] = []
        if mode == TOP_N:
            prompt = build_prompt_top_n(user, profile, catalog, n, max_rating,
                                        token_budget, response_reserve)
        else:
            cand_titles = [catalog.title(i) for i in candidates.get(user, [])]
            prompt = build_prompt_rerank(user, profile, cand_titles, catalog, max_rating,
                                         token_budget, response_reserve)
        raw = client.complete(ChatRequest(prompt, user, tuple(cand_titles)))
        parsed, matched, unmatched, dups = match_response(raw, matcher)
        off = []
        if mode == RERANK:
            allowed = set(candidates.get(user, []))
            off = [i for i in matched if i not in allowed]
        return LlmExchange(user, prompt, raw, parsed, matched, unmatched, dups,
                           client.model, client.key(prompt), off)

    def guarded(user: str):
        try:
            return one(user)
        except ConfigError:
            raise
        except (EndpointError, ValueError, KeyError) as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        results = list(pool.map(guarded, users))

    report = HallucinationReport()
    lists, hashes, flags = {}, {}, {}
    for user, res in zip(users, results):
        if isinstance(res, Exception):
            report.failures[user] = f"{type(res).__name__}: {res}"
            log.warning("user %s failed: %s", user, res)
            continue
        report.parsed += len(res.parsed)
        report.unmatched += len(res.unmatched)
        report.returned += len(res.matched)
        report.off_list += len(res.off_list)
        if not res.parsed:
            report.empty_responses += 1
        items = res.matched[:n] if mode == TOP_N else res.matched
        lists[user] = RecommendationList(user, tuple(items),
                                         tuple(1.0 / r for r in range(1, len(items) + 1)))
        hashes[user] = _prompt_hash(res.prompt)
        user_flags = {}
        if res.unmatched:
            user_flags["unmatched"] = [u["title"] for u in res.unmatched]
        if res.off_list:
            user_flags["off_list"] = res.off_list
        if user_flags:
            flags[user] = user_flags
        if client.cache is not None:
            client.cache.put(res.cache_key, {**res.to_dict(), "temperature": client.temperature})
    if users and len(report.failures) / len(users) > max_failure_fraction:
        raise RunFailedError(f"{len(report.failures)} of {len(users)} users failed; "
                             f"first: {next(iter(report.failures.values()))}")
    config = {"mode": mode, "n": n, "threshold": threshold, "model": client.model,
              "temperature": client.temperature}
    run = RecommendationRun(name or client.model, lists, config, hashes, flags)
    return run, report


def make_stub(name: str, split: Split, catalog: ItemCatalog, n: int = 50):
    """Build a named offline backend: echo-mostpop, echo-candidates, reverse-candidates, gibberish."""
    if name == "echo-mostpop":
        model = MostPop().fit(split.train, catalog)
        lists = {u: [catalog.title(i) for i in model.recommend(u, n).items if i in catalog]
                 for u in split.train.active_users()}
        return EchoStub(lists, name=name)
    if name == "echo-candidates":
        return CandidateStub(reverse=False)
    if name == "reverse-candidates":
        return CandidateStub(reverse=True, name=name)
    if name == "gibberish":
        return GibberishStub(n=n)
    raise ValueError(f"unknown stub {name!r}")
