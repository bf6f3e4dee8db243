"""
Prompting, parsing and matching with an offline chat stub
==========================================================

Build the two prompt templates for one user, answer them with offline stubs,
and look at how replies are matched back to catalog ids.
"""

from importlib import resources
from pathlib import Path

from zsrec import load_catalog, load_interactions, popularity_stats, split_holdout
from zsrec.experiments import build_fixed_mostpop_candidates, evaluate_run
from zsrec.llm import (RERANK, TOP_N, ChatClient, build_prompt_rerank, build_prompt_top_n,
                       make_stub, run_llm_recommender)

toy = Path(str(resources.files("zsrec") / "data" / "toy"))
data = load_interactions(toy / "ratings.csv", "csv_header", rating_scale=(0.5, 5.0))
catalog = load_catalog(toy / "movies.tsv")
split = split_holdout(data, ratio=0.8, seed=42)
user = split.train.active_users()[0]

###############################################################################
# Explicit ratings are shown as ``Title r/max``.
print(build_prompt_top_n(user, split.train.profile(user), catalog, n=10, max_rating=5.0))
print()
candidates = build_fixed_mostpop_candidates(split.train, catalog, 5)
print(build_prompt_rerank(user, split.train.profile(user), candidates, catalog, max_rating=5.0))

###############################################################################
# The echo stub answers with MostPop's titles. Every title matches, so the
# hallucination rate is zero and the metrics equal MostPop's.
users = [u for u in split.train.active_users()]
echo = ChatClient(make_stub("echo-mostpop", split, catalog, 10), "stub:echo-mostpop")
run, report = run_llm_recommender(echo, TOP_N, users, split, catalog, n=10)
stats = popularity_stats(split.train)
print("\necho   rate", report.rate, " nDCG@10", round(evaluate_run(run, split, stats, (10,)).get("nDCG", 10), 4))

###############################################################################
# Gibberish never clears the 0.8 similarity threshold.
gib = ChatClient(make_stub("gibberish", split, catalog, 10), "stub:gibberish")
run, report = run_llm_recommender(gib, TOP_N, users, split, catalog, n=10)
print("gibberish rate", report.rate, " empty lists:", all(not r.items for r in run.lists.values()))

###############################################################################
# Re-rank mode: the reverse stub flips the candidate order.
ids = {t: i for i, t in catalog.titles.items()}
cands = {u: [ids[t] for t in candidates] for u in users}
rev = ChatClient(make_stub("reverse-candidates", split, catalog), "stub:reverse")
run, report = run_llm_recommender(rev, RERANK, users, split, catalog, n=5, candidates=cands)
print("\ncandidates:", cands[user])
print("reranked:  ", list(run.lists[user].items))
