"""Persona-pattern prompt templates for top-n and re-rank requests."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from ..dataset import Interaction, ItemCatalog

PREFIX = "Given a user, as a recommender system, provide recommendations."
PROFILE = "The user {user_id} likes the following items: {item_list}."
TOP_N_SUFFIX = "Give me back {n} recommendations."
RERANK_SUFFIX = "Re-rank me the following list: {candidates}"


class PromptBudgetError(ValueError):
    """A rendered prompt does not fit the token budget."""

    def __init__(self, user: str, tokens: int, limit: int):
        super().__init__(f"prompt for user {user!r} needs ~{tokens} tokens, limit is {limit}")
        self.user, self.tokens, self.limit = user, tokens, limit


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


def _fmt_number(x: float) -> str:
    return f"{x:g}"


@dataclass(frozen=True)
class PromptTemplate:
    prefix: str = PREFIX
    profile: str = PROFILE
    suffix: str = TOP_N_SUFFIX

    def render_item(self, title: str, rating: Optional[float], max_rating: Optional[float]) -> str:
        if rating is None or max_rating is None:
            return title
        return f"{title} {_fmt_number(rating)}/{_fmt_number(max_rating)}"

    def render(self, user: str, profile: Sequence[Interaction], catalog: ItemCatalog,
               max_rating: Optional[float] = None, **suffix_fields) -> str:
        if not profile:
            raise ValueError(f"user {user!r} has an empty train profile")
        items = ", ".join(
            self.render_item(catalog.title(r.item), r.rating if max_rating is not None else None,
                             max_rating)
            for r in profile)
        body = self.profile.format(user_id=user, item_list=items)
        return f"{self.prefix} {body} {self.suffix.format(**suffix_fields)}"


TOP_N = PromptTemplate()
RERANK = PromptTemplate(suffix=RERANK_SUFFIX)


def check_budget(prompt: str, user: str, token_budget: int, response_reserve: int) -> str:
    limit = token_budget - response_reserve
    tokens = estimate_tokens(prompt)
    if tokens > limit:
        raise PromptBudgetError(user, tokens, limit)
    return prompt


def build_prompt_top_n(user: str, train_profile: Sequence[Interaction], catalog: ItemCatalog,
                       n: int = 50, max_rating: Optional[float] = None,
                       token_budget: int = 4096, response_reserve: int = 1000) -> str:
    """Prompt asking for ``n`` free recommendations.

    Pass ``max_rating`` for explicit-feedback data to render each title as
    ``Title r/max``; the item domain is never named.
    """
    prompt = TOP_N.render(user, train_profile, catalog, max_rating, n=n)
    return check_budget(prompt, user, token_budget, response_reserve)


def build_prompt_rerank(user: str, train_profile: Sequence[Interaction], candidate_titles: Sequence[str],
                        catalog: ItemCatalog, max_rating: Optional[float] = None,
                        token_budget: int = 4096, response_reserve: int = 1000) -> str:
    if not candidate_titles:
        raise ValueError("re-rank needs a non-empty candidate list")
    prompt = RERANK.render(user, train_profile, catalog, max_rating,
                           candidates=", ".join(candidate_titles))
    return check_budget(prompt, user, token_budget, response_reserve)
