import sys
from importlib import resources
from pathlib import Path

import pytest

from zsrec.dataset import Interaction, InteractionSet, ItemCatalog, PopularityStats
from zsrec.metrics import EvalContext


def make_set(profiles, rating_scale=None, items=None, users=None):
    """``profiles`` maps user -> list of item ids or (item, rating) pairs."""
    recs = []
    for u, entries in profiles.items():
        for e in entries:
            item, rating = e if isinstance(e, tuple) else (e, 1.0)
            recs.append(Interaction(u, item, rating))
    return InteractionSet.from_records(recs, rating_scale, users=users or profiles.keys(), items=items)


def make_ctx(relevant, k, phi=None, short_head=(), long_tail=(), n_items=None, n_users=1):
    phi = dict(phi or {})
    stats = PopularityStats(phi, max(phi.values(), default=0), frozenset(short_head),
                            frozenset(long_tail), {}, n_users)
    rel = {u: frozenset(v) for u, v in relevant.items()}
    return EvalContext(rel, stats, n_items if n_items is not None else len(phi), k)


def catalog_of(items, features=None):
    return ItemCatalog({i: f"Title {i}" for i in items},
                       {i: tuple(features.get(i, ())) for i in items} if features else {})


@pytest.fixture
def toy_dir() -> Path:
    return Path(str(resources.files("zsrec") / "data" / "toy"))


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(acceptance.RESULTS):
        status, title, detail = acceptance.RESULTS[number]
        terminalreporter.write_line(f"{status} criterion {number}: {title} ({detail})")
