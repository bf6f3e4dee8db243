"""Interaction data: loading, history caps, hold-out splits and popularity stats."""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp


class DatasetError(ValueError):
    """Raised for unreadable, malformed or degenerate interaction data."""


def id_sort_key(value: str):
    """Natural ordering for opaque ids: numeric ids by value, then the rest lexically."""
    return (0, int(value), "") if value.isdigit() else (1, 0, value)


def stable_hash(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")


@dataclass(frozen=True)
class Interaction:
    user: str
    item: str
    rating: float = 1.0
    timestamp: Optional[int] = None


@dataclass(frozen=True)
class InteractionSet:
    """Deduplicated (user, item) interactions plus dense index maps.

    Records are kept in dataset order: timestamp ascending when every record
    carries one, file order otherwise. Index maps are sorted by natural id order,
    so dense-index tie-breaks coincide with id tie-breaks.
    """

    interactions: tuple[Interaction, ...]
    user_index: dict[str, int]
    item_index: dict[str, int]
    rating_scale: Optional[tuple[float, float]] = None
    _by_user: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        by_user: dict[str, list[Interaction]] = {}
        seen = set()
        for rec in self.interactions:
            key = (rec.user, rec.item)
            if key in seen:
                raise DatasetError(f"duplicate interaction {key}")
            seen.add(key)
            if rec.user not in self.user_index or rec.item not in self.item_index:
                raise DatasetError(f"interaction {key} missing from index")
            if self.rating_scale is not None:
                lo, hi = self.rating_scale
                if not lo <= rec.rating <= hi:
                    raise DatasetError(f"rating {rec.rating} outside scale {self.rating_scale}")
            by_user.setdefault(rec.user, []).append(rec)
        object.__setattr__(self, "_by_user", by_user)

    @classmethod
    def from_records(cls, records: Iterable[Interaction], rating_scale=None,
                     users: Optional[Iterable[str]] = None,
                     items: Optional[Iterable[str]] = None) -> "InteractionSet":
        records = tuple(records)
        if all(r.timestamp is not None for r in records):
            records = tuple(sorted(records, key=lambda r: r.timestamp))
        users = set(users) if users is not None else {r.user for r in records}
        items = set(items) if items is not None else {r.item for r in records}
        return cls(
            interactions=records,
            user_index={u: k for k, u in enumerate(sorted(users, key=id_sort_key))},
            item_index={i: k for k, i in enumerate(sorted(items, key=id_sort_key))},
            rating_scale=rating_scale,
        )

    def __len__(self) -> int:
        return len(self.interactions)

    @property
    def users(self) -> list[str]:
        return list(self.user_index)

    @property
    def items(self) -> list[str]:
        return list(self.item_index)

    @property
    def is_explicit(self) -> bool:
        return self.rating_scale is not None

    def active_users(self) -> list[str]:
        """Users with at least one interaction, in index order."""
        return [u for u in self.user_index if u in self._by_user]

    def profile(self, user: str) -> list[Interaction]:
        return list(self._by_user.get(user, ()))

    def user_counts(self) -> dict[str, int]:
        return {u: len(recs) for u, recs in self._by_user.items()}

    def matrix(self, binary: bool = True) -> sp.csr_matrix:
        """User x item CSR matrix over the full index maps."""
        rows = [self.user_index[r.user] for r in self.interactions]
        cols = [self.item_index[r.item] for r in self.interactions]
        if binary:
            vals = [1.0 if r.rating > 0 else 0.0 for r in self.interactions]
        else:
            vals = [r.rating for r in self.interactions]
        m = sp.csr_matrix((vals, (rows, cols)), shape=(len(self.user_index), len(self.item_index)))
        m.eliminate_zeros()
        return m

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for r in sorted(self.interactions, key=lambda r: (id_sort_key(r.user), id_sort_key(r.item))):
            h.update(f"{r.user}\t{r.item}\t{r.rating!r}\t{r.timestamp}\n".encode())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class ItemCatalog:
    """item id -> (title, features)."""

    titles: dict[str, str]
    features: dict[str, tuple[str, ...]]

    def __post_init__(self):
        for item, title in self.titles.items():
            if not title or not title.strip():
                raise DatasetError(f"item {item} has an empty title")

    def __len__(self) -> int:
        return len(self.titles)

    def __contains__(self, item: str) -> bool:
        return item in self.titles

    def title(self, item: str) -> str:
        return self.titles[item]

    def restrict(self, items: Iterable[str]) -> "ItemCatalog":
        keep = [i for i in items if i in self.titles]
        return ItemCatalog({i: self.titles[i] for i in keep},
                           {i: self.features.get(i, ()) for i in keep})


@dataclass(frozen=True)
class Split:
    train: InteractionSet
    test: InteractionSet
    seed: int
    ratio: float

    def fingerprint(self) -> str:
        return f"{self.train.fingerprint()}-{self.test.fingerprint()}-s{self.seed}-r{self.ratio:g}"


@dataclass(frozen=True)
class PopularityStats:
    phi: dict[str, int]
    max_phi: int
    short_head: frozenset
    long_tail: frozenset
    user_counts: dict[str, int]
    n_users: int


def _rows(path: Path, fmt: str):
    if fmt == "csv_header":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise DatasetError(f"{path}: empty file")
            for row in reader:
                yield reader.line_num, row
    elif fmt == "tsv":
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\r\n")
                if line:
                    yield lineno, line.split("\t")
    else:
        raise DatasetError(f"unknown interaction format {fmt!r}")


def load_interactions(path, fmt: str = "csv_header",
                      rating_scale: Optional[Sequence[float]] = None) -> InteractionSet:
    """Read a MovieLens-style CSV (``userId,movieId,rating,timestamp``) or a
    ``user<TAB>item[<TAB>weight]`` TSV.

    Duplicate (user, item) rows collapse to the latest by timestamp, or the last
    one in file order when timestamps are absent.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"{path}: no such file")
    scale = tuple(float(v) for v in rating_scale) if rating_scale is not None else None
    latest: dict[tuple[str, str], tuple[tuple, Interaction]] = {}
    for order, (lineno, row) in enumerate(_rows(path, fmt)):
        try:
            if fmt == "csv_header":
                if len(row) < 3:
                    raise ValueError("expected user,item,rating[,timestamp]")
                user, item, rating = row[0].strip(), row[1].strip(), float(row[2])
                ts = int(float(row[3])) if len(row) > 3 and row[3].strip() else None
            else:
                if len(row) < 2:
                    raise ValueError("expected user<TAB>item[<TAB>weight]")
                user, item = row[0].strip(), row[1].strip()
                rating = float(row[2]) if len(row) > 2 and row[2].strip() else 1.0
                ts = None
            if not user or not item:
                raise ValueError("empty user or item id")
            if not math.isfinite(rating):
                raise ValueError(f"non-finite rating {rating}")
        except ValueError as exc:
            raise DatasetError(f"{path}: line {lineno}: {exc}") from None
        if scale is not None and not scale[0] <= rating <= scale[1]:
            raise DatasetError(f"{path}: line {lineno}: rating {rating} outside scale {scale}")
        rec = Interaction(user, item, rating, ts)
        rank = (ts if ts is not None else -math.inf, order)
        prev = latest.get((user, item))
        if prev is None or rank >= prev[0]:
            latest[(user, item)] = (rank, rec)
    if not latest:
        raise DatasetError(f"{path}: empty file")
    records = [rec for _, rec in sorted(latest.values(), key=lambda v: v[0][1])]
    return InteractionSet.from_records(records, rating_scale=scale)


def load_catalog(path) -> ItemCatalog:
    """Metadata TSV: ``item<TAB>title<TAB>feature1|feature2|...``."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"{path}: no such file")
    titles, features = {}, {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 2 or not parts[1].strip():
                raise DatasetError(f"{path}: line {lineno}: expected item<TAB>title[<TAB>features]")
            item = parts[0].strip()
            if item in titles:
                raise DatasetError(f"{path}: line {lineno}: duplicate item {item}")
            titles[item] = parts[1].strip()
            raw = parts[2] if len(parts) > 2 else ""
            features[item] = tuple(f.strip() for f in raw.split("|") if f.strip())
    if not titles:
        raise DatasetError(f"{path}: empty file")
    return ItemCatalog(titles, features)


def filter_min_interactions(data: InteractionSet, min_user: int = 0, min_item: int = 0) -> InteractionSet:
    """Iterative n-core style filter; a no-op when both thresholds are 0."""
    records = list(data.interactions)
    while True:
        ucount, icount = {}, {}
        for r in records:
            ucount[r.user] = ucount.get(r.user, 0) + 1
            icount[r.item] = icount.get(r.item, 0) + 1
        kept = [r for r in records if ucount[r.user] >= min_user and icount[r.item] >= min_item]
        if len(kept) == len(records):
            break
        records = kept
    if not records:
        raise DatasetError("minimum-interaction filter removed every interaction")
    return InteractionSet.from_records(records, rating_scale=data.rating_scale)


def apply_history_cap(data: InteractionSet, cap: int) -> InteractionSet:
    """Drop every user with more than ``cap`` interactions (users are removed, not truncated)."""
    if cap < 1:
        raise DatasetError(f"history cap must be >= 1, got {cap}")
    counts = data.user_counts()
    kept = [r for r in data.interactions if counts[r.user] <= cap]
    if not kept:
        raise DatasetError(f"history cap {cap} removed every user")
    return InteractionSet.from_records(kept, rating_scale=data.rating_scale)


def split_holdout(data: InteractionSet, ratio: float = 0.8, seed: int = 42) -> Split:
    """Per-user random hold-out: ceil(ratio * n_u) interactions go to train."""
    if not 0 < ratio < 1:
        raise DatasetError(f"split ratio must be in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for user in data.user_index:
        recs = data.profile(user)
        if not recs:
            continue
        n_train = math.ceil(ratio * len(recs))
        perm = rng.permutation(len(recs))
        chosen = set(perm[:n_train].tolist())
        for k, rec in enumerate(recs):
            (train if k in chosen else test).append(rec)
    users, items = data.user_index.keys(), data.item_index.keys()
    return Split(
        train=InteractionSet.from_records(train, data.rating_scale, users, items),
        test=InteractionSet.from_records(test, data.rating_scale, users, items),
        seed=seed,
        ratio=ratio,
    )


def popularity_stats(train: InteractionSet, head_share: float = 0.8) -> PopularityStats:
    """Item popularity (distinct train users) and the short-head / long-tail split.

    The short head is the smallest prefix of items, sorted by descending
    popularity with ties broken by id, whose popularity mass reaches
    ``head_share`` of the total.
    """
    if not 0 < head_share < 1:
        raise DatasetError(f"head_share must be in (0, 1), got {head_share}")
    phi = {item: 0 for item in train.item_index}
    for rec in train.interactions:
        phi[rec.item] += 1
    order = sorted(phi, key=lambda i: (-phi[i], id_sort_key(i)))
    total = sum(phi.values())
    head, mass = [], 0
    for item in order:
        if mass >= head_share * total:
            break
        head.append(item)
        mass += phi[item]
    return PopularityStats(
        phi=phi,
        max_phi=max(phi.values(), default=0),
        short_head=frozenset(head),
        long_tail=frozenset(order[len(head):]),
        user_counts=train.user_counts(),
        n_users=len(train.active_users()),
    )


def cold_start_user_filter(train: InteractionSet) -> set[str]:
    """Users whose train count is at or below the first quartile (linear interpolation)."""
    counts = train.user_counts()
    if len(counts) < 4:
        raise DatasetError("cold-start filter needs at least 4 users")
    q1 = float(np.percentile(np.fromiter(counts.values(), dtype=float), 25))
    return {u for u, c in counts.items() if c <= q1}
