"""Classical recommender baselines behind a uniform ``fit`` / ``recommend`` contract.

Every collaborative model works on the binarized train matrix. Scores are
dense vectors over the train item index; rankings break score ties by item
index, which follows natural id order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .dataset import InteractionSet, ItemCatalog, stable_hash
from .errors import ConfigError


class NotFittedError(RuntimeError):
    pass


@dataclass(frozen=True)
class RecommendationList:
    user: str
    items: tuple[str, ...]
    scores: tuple[float, ...]

    def __len__(self):
        return len(self.items)

    def top(self, k: int) -> list[str]:
        return list(self.items[:k])


def rank_scores(scores: np.ndarray, n: int, exclude: Optional[np.ndarray] = None) -> np.ndarray:
    """Indices of the top-n scores, descending, ties by ascending index."""
    idx = np.arange(len(scores))
    if exclude is not None and len(exclude):
        keep = np.ones(len(scores), dtype=bool)
        keep[exclude] = False
        idx = idx[keep]
    order = np.lexsort((idx, -scores[idx]))
    return idx[order[:n]]


def _l2_normalize_rows(m: sp.csr_matrix) -> sp.csr_matrix:
    norms = np.sqrt(np.asarray(m.multiply(m).sum(axis=1)).ravel())
    inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    return sp.csr_matrix(sp.diags(inv) @ m)


def _l1_normalize_rows(m: sp.csr_matrix) -> sp.csr_matrix:
    sums = np.asarray(m.sum(axis=1)).ravel()
    inv = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums > 0)
    return sp.csr_matrix(sp.diags(inv) @ m)


def cosine_similarity(rows: sp.spmatrix) -> np.ndarray:
    """Dense all-pairs cosine similarity between the rows of ``rows``."""
    n = _l2_normalize_rows(sp.csr_matrix(rows, dtype=float))
    return np.asarray((n @ n.T).todense())


def top_k_neighbors(sim: np.ndarray, k: int) -> sp.csr_matrix:
    """Keep, per row, the k largest off-diagonal similarities (ties by column index)."""
    n = sim.shape[0]
    k = min(k, n - 1)
    rows, cols, vals = [], [], []
    if k > 0:
        masked = sim.astype(float, copy=True)
        np.fill_diagonal(masked, -np.inf)
        for r in range(n):
            order = np.lexsort((np.arange(n), -masked[r]))[:k]
            rows.extend([r] * len(order))
            cols.extend(order.tolist())
            vals.extend(sim[r, order].tolist())
    return sp.csr_matrix((vals, (rows, cols)), shape=sim.shape)


def tfidf_matrix(catalog: ItemCatalog, item_index: dict[str, int]) -> sp.csr_matrix:
    """Binary-tf TF-IDF rows over the catalog features, ``idf = ln(N / df)``.

    N is the number of items in ``item_index``; items missing from the catalog
    or without features get all-zero rows.
    """
    vocab = sorted({f for item in item_index for f in catalog.features.get(item, ())})
    col = {f: j for j, f in enumerate(vocab)}
    rows, cols = [], []
    for item, r in item_index.items():
        for f in sorted(set(catalog.features.get(item, ()))):
            rows.append(r)
            cols.append(col[f])
    tf = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(item_index), len(vocab)))
    df = np.asarray((tf > 0).sum(axis=0)).ravel()
    idf = np.log(len(item_index) / np.maximum(df, 1))
    return sp.csr_matrix(tf @ sp.diags(idf))


# --- score functions -------------------------------------------------------

def user_knn_scores(x: sp.csr_matrix, user: int, k_neighbors: int) -> np.ndarray:
    sim = cosine_similarity(x)
    w = top_k_neighbors(sim, k_neighbors)
    return np.asarray((w[user] @ x).todense()).ravel()


def item_knn_scores(x: sp.csr_matrix, user: int, k_neighbors: int) -> np.ndarray:
    sim = cosine_similarity(x.T)
    w = top_k_neighbors(sim, k_neighbors)
    return np.asarray((x[user] @ w.T).todense()).ravel()


def rp3beta_weights(x: sp.csr_matrix, beta: float) -> np.ndarray:
    """Item-item transition weights ``P_iu @ P_ui`` with columns divided by ``phi^beta``."""
    if beta < 0:
        raise ConfigError(f"RP3beta requires beta >= 0, got {beta}")
    a = sp.csr_matrix(x, dtype=float)
    p_ui = _l1_normalize_rows(a)
    p_iu = _l1_normalize_rows(sp.csr_matrix(a.T))
    w = np.asarray((p_iu @ p_ui).todense())
    phi = np.asarray((a > 0).sum(axis=0)).ravel().astype(float)
    penalty = np.divide(1.0, phi ** beta, out=np.zeros_like(phi), where=phi > 0)
    return w * penalty[None, :]


def ease_r_fit(x: sp.spmatrix, lam: float) -> np.ndarray:
    """Closed-form EASE^R item weights with a zero diagonal."""
    if not lam > 0:
        raise ConfigError(f"EASE^R requires lambda > 0, got {lam}")
    x = sp.csr_matrix(x, dtype=float)
    g = np.asarray((x.T @ x).todense()) + lam * np.eye(x.shape[1])
    p = np.linalg.inv(g)
    b = -p / np.diag(p)[None, :]
    np.fill_diagonal(b, 0.0)
    if not np.all(np.isfinite(b)):
        raise FloatingPointError("EASE^R produced non-finite weights")
    return b


def vsm_scores(x: sp.csr_matrix, features: sp.csr_matrix, user: int) -> np.ndarray:
    items = _l2_normalize_rows(features)
    profile = _l2_normalize_rows(sp.csr_matrix(x[user] @ items))
    return np.asarray((items @ profile.T).todense()).ravel()


def random_scores(n_items: int, seed: int, user: str) -> np.ndarray:
    rng = np.random.default_rng([seed, stable_hash(user)])
    return rng.permutation(n_items).astype(float)


# --- models ----------------------------------------------------------------

class Recommender:
    """Base class: subclasses fill ``_fit`` and ``_scores``."""

    kind = "base"
    defaults: dict = {}

    def __init__(self, **params):
        unknown = set(params) - set(self.defaults)
        if unknown:
            raise ConfigError(f"{self.kind}: unknown parameter(s) {sorted(unknown)}")
        self.params = {**self.defaults, **params}
        self._validate()
        self.train: Optional[InteractionSet] = None

    def _validate(self):
        k = self.params.get("k_neighbors")
        if k is not None and (not isinstance(k, int) or k < 1):
            raise ConfigError(f"{self.kind}: k_neighbors must be a positive integer, got {k!r}")

    @property
    def name(self) -> str:
        return self.kind

    def fit(self, train: InteractionSet, catalog: Optional[ItemCatalog] = None) -> "Recommender":
        if not len(train):
            raise ValueError("cannot fit on an empty train set")
        self.train = train
        self._x = train.matrix(binary=True)
        self._items = train.items
        self._fit(catalog)
        return self

    def _fit(self, catalog):
        pass

    def scores(self, user: str) -> np.ndarray:
        if self.train is None:
            raise NotFittedError(f"{self.kind} must be fit before recommending")
        if user not in self.train.user_index:
            raise KeyError(f"unknown user {user!r}")
        return self._scores(user, self.train.user_index[user])

    def _scores(self, user: str, u: int) -> np.ndarray:
        raise NotImplementedError

    def recommend(self, user: str, n: int, exclude_seen: bool = True) -> RecommendationList:
        if n < 1:
            raise ValueError(f"n must be positive, got {n}")
        s = self.scores(user)
        seen = self._x[self.train.user_index[user]].indices if exclude_seen else None
        top = rank_scores(s, n, seen)
        return RecommendationList(user, tuple(self._items[i] for i in top),
                                  tuple(float(s[i]) for i in top))


class RandomRecommender(Recommender):
    kind = "Random"
    defaults = {"seed": 42}

    def _scores(self, user, u):
        return random_scores(self._x.shape[1], self.params["seed"], user)


class MostPop(Recommender):
    kind = "MostPop"

    def _fit(self, catalog):
        self.phi = np.asarray((self._x > 0).sum(axis=0)).ravel().astype(float)

    def _scores(self, user, u):
        return self.phi


class UserKNN(Recommender):
    kind = "UserKNN"
    defaults = {"k_neighbors": 50}

    def _similarity(self, catalog) -> np.ndarray:
        return cosine_similarity(self._x)

    def _fit(self, catalog):
        self.neighbors = top_k_neighbors(self._similarity(catalog), self.params["k_neighbors"])

    def _scores(self, user, u):
        return np.asarray((self.neighbors[u] @ self._x).todense()).ravel()


class ItemKNN(Recommender):
    kind = "ItemKNN"
    defaults = {"k_neighbors": 50}

    def _similarity(self, catalog) -> np.ndarray:
        return cosine_similarity(self._x.T)

    def _fit(self, catalog):
        self.neighbors_t = sp.csr_matrix(
            top_k_neighbors(self._similarity(catalog), self.params["k_neighbors"]).T)

    def _scores(self, user, u):
        return np.asarray((self._x[u] @ self.neighbors_t).todense()).ravel()


def _require_features(kind: str, catalog: Optional[ItemCatalog], items) -> sp.csr_matrix:
    if catalog is None:
        raise ConfigError(f"{kind} needs an item catalog with features")
    feats = tfidf_matrix(catalog, items)
    if feats.shape[1] == 0:
        raise ConfigError(f"{kind}: every catalog item has an empty feature list")
    return feats


class AttributeItemKNN(ItemKNN):
    kind = "AttributeItemKNN"

    def _similarity(self, catalog):
        self.features = _require_features(self.kind, catalog, self.train.item_index)
        return cosine_similarity(self.features)


class AttributeUserKNN(UserKNN):
    """User profiles are sums of their train items' TF-IDF vectors."""

    kind = "AttributeUserKNN"

    def _similarity(self, catalog):
        self.features = _require_features(self.kind, catalog, self.train.item_index)
        return cosine_similarity(self._x @ self.features)


class RP3Beta(Recommender):
    kind = "RP3Beta"
    defaults = {"beta": 0.6}

    def _validate(self):
        if self.params["beta"] < 0:
            raise ConfigError(f"RP3Beta: beta must be >= 0, got {self.params['beta']}")

    def _fit(self, catalog):
        self.weights = rp3beta_weights(self._x, self.params["beta"])

    def _scores(self, user, u):
        return np.asarray(self._x[u] @ self.weights).ravel()


class EaseR(Recommender):
    kind = "EaseR"
    defaults = {"lambda": 100.0}

    def _validate(self):
        if not self.params["lambda"] > 0:
            raise ConfigError(f"EaseR: lambda must be > 0, got {self.params['lambda']}")

    def _fit(self, catalog):
        self.weights = ease_r_fit(self._x, float(self.params["lambda"]))

    def _scores(self, user, u):
        return np.asarray(self._x[u] @ self.weights).ravel()


class VSM(Recommender):
    kind = "VSM"

    def _fit(self, catalog):
        self.features = _require_features(self.kind, catalog, self.train.item_index)

    def _scores(self, user, u):
        return vsm_scores(self._x, self.features, u)


MODELS = {cls.kind: cls for cls in (
    RandomRecommender, MostPop, UserKNN, ItemKNN, AttributeUserKNN,
    AttributeItemKNN, RP3Beta, EaseR, VSM,
)}


def make_recommender(kind: str, **params) -> Recommender:
    try:
        cls = MODELS[kind]
    except KeyError:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {sorted(MODELS)}") from None
    return cls(**params)
