"""
Classical baselines on the bundled toy data
============================================

Load the 16-user toy catalog, split it 80/20, fit all nine baselines and
print nDCG@10 next to two popularity-bias numbers.
"""

from importlib import resources
from pathlib import Path

from zsrec import (MODELS, evaluate_run, load_catalog, load_interactions, make_recommender,
                   popularity_stats, run_free_top50, split_holdout)

toy = Path(str(resources.files("zsrec") / "data" / "toy"))

###############################################################################
# Ratings come as ``userId,movieId,rating,timestamp``; the catalog is a TSV
# of id, title and ``|``-separated genres.
data = load_interactions(toy / "ratings.csv", "csv_header", rating_scale=(0.5, 5.0))
catalog = load_catalog(toy / "movies.tsv")
split = split_holdout(data, ratio=0.8, seed=42)
print(f"{len(split.train)} train / {len(split.test)} test interactions")

###############################################################################
# Popularity is counted on the training part only. The short head is the
# smallest set of top items holding 80% of training interactions.
stats = popularity_stats(split.train)
print("short head:", sorted(stats.short_head, key=lambda i: -stats.phi[i]))

###############################################################################
# Small neighbourhoods suit a catalog this size.
models = []
for kind in sorted(MODELS):
    params = {"k_neighbors": 5} if "KNN" in kind else {}
    models.append(make_recommender(kind, **params))
runs, _ = run_free_top50(models, split, catalog, n=10)

print(f"\n{'model':<18}{'nDCG@10':>9}{'ACLT@10':>9}{'ARP@10':>9}")
for name, run in sorted(runs.items()):
    rep = evaluate_run(run, split, stats, cutoffs=(10,))
    print(f"{name:<18}{rep.get('nDCG', 10):9.4f}{rep.get('ACLT', 10):9.3f}{rep.get('ARP', 10):9.3f}")

# MostPop never reaches the long tail, so its ACLT is zero.
