"""Command-line entry point: ``zsrec <command> --config run.yaml``.

Commands run in order ``prepare``, ``run-baselines`` / ``run-llm``, ``evaluate``,
then ``compare`` and ``report``. Every output lives under ``output.dir``.
Exit codes: 0 success, 1 configuration error, 2 data error, 3 endpoint error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig, load_config
from .dataset import (DatasetError, Interaction, InteractionSet, Split, apply_history_cap,
                      cold_start_user_filter, filter_min_interactions, load_catalog,
                      load_interactions, popularity_stats, split_holdout)
from .errors import ConfigError, EndpointError
from .experiments import (COLD_START, RERANK_MOSTPOP, RERANK_NEIGHBORS, EvalReport,
                          candidate_run, compare_runs, evaluable_users, evaluate_run,
                          fixed_mostpop_items, neighbor_candidate_items, recommend_all)
from .llm.client import ChatClient, ClientConfig, LiveBackend, ResponseCache
from .llm.pipeline import RERANK, TOP_N, make_stub, run_llm_recommender
from .metrics import MetricError
from .recommenders import make_recommender
from .report import emit_comparison_table
from .runs import load_run, save_run

log = logging.getLogger("zsrec")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_ENDPOINT = 0, 1, 2, 3


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_interactions(path: Path, data: InteractionSet) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["userId", "itemId", "rating", "timestamp"])
        for r in data.interactions:
            w.writerow([r.user, r.item, repr(r.rating), "" if r.timestamp is None else r.timestamp])


def _prepared(cfg: RunConfig) -> Path:
    return cfg.out_dir / "prepared"


def cmd_prepare(cfg: RunConfig, args) -> None:
    ds = cfg.dataset
    data = load_interactions(cfg.path(ds.interactions), ds.format, ds.rating_scale)
    load_catalog(cfg.path(ds.catalog))
    pre = cfg.preprocess
    if pre.min_user_interactions or pre.min_item_interactions:
        data = filter_min_interactions(data, pre.min_user_interactions, pre.min_item_interactions)
    if pre.history_cap is not None:
        data = apply_history_cap(data, pre.history_cap)
    split = split_holdout(data, cfg.split.ratio, cfg.split.seed)
    stats = popularity_stats(split.train, cfg.split.head_share)
    out = _prepared(cfg)
    out.mkdir(parents=True, exist_ok=True)
    _write_interactions(out / "train.csv", split.train)
    _write_interactions(out / "test.csv", split.test)
    _write_json(out / "index.json", {"users": data.users, "items": data.items,
                                     "rating_scale": list(ds.rating_scale) if ds.rating_scale else None})
    _write_json(out / "split.json", {
        "seed": split.seed, "ratio": split.ratio, "fingerprint": split.fingerprint(),
        "dataset_fingerprint": data.fingerprint(), "n_interactions": len(data),
        "n_users": len(data.user_index), "n_items": len(data.item_index),
        "n_train": len(split.train), "n_test": len(split.test)})
    order = sorted(stats.phi, key=lambda i: (-stats.phi[i], split.train.item_index[i]))
    _write_json(out / "stats.json", {
        "head_share": cfg.split.head_share, "max_phi": stats.max_phi, "n_users": stats.n_users,
        "phi": {i: stats.phi[i] for i in order},
        "short_head": [i for i in order if i in stats.short_head],
        "long_tail": [i for i in order if i in stats.long_tail]})
    print(f"prepared {len(split.train)} train / {len(split.test)} test interactions in {out}")


def load_prepared(cfg: RunConfig) -> Split:
    out = _prepared(cfg)
    if not (out / "split.json").exists():
        raise DatasetError(f"{out}: no prepared split; run `prepare` first")
    index = json.loads((out / "index.json").read_text(encoding="utf-8"))
    meta = json.loads((out / "split.json").read_text(encoding="utf-8"))
    scale = tuple(index["rating_scale"]) if index["rating_scale"] else None

    def read(name):
        with open(out / name, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            recs = [Interaction(u, i, float(r), int(t) if t else None) for u, i, r, t in reader]
        return InteractionSet.from_records(recs, scale, index["users"], index["items"])

    return Split(read("train.csv"), read("test.csv"), meta["seed"], meta["ratio"])


def _cold_users(cfg: RunConfig, split: Split) -> list[str]:
    cold = cold_start_user_filter(split.train)
    return [u for u in evaluable_users(split) if u in cold]


def _candidates(cfg: RunConfig, split: Split) -> tuple[str, dict[str, list[str]]]:
    exp = cfg.experiment
    users = evaluable_users(split)
    if exp.kind == RERANK_MOSTPOP:
        fixed = fixed_mostpop_items(split.train, exp.n)
        return "MostPop", {u: list(fixed) for u in users}
    items = neighbor_candidate_items(split.train, users, exp.n_neighbors, exp.per_neighbor,
                                     exp.candidate_seed, exp.exclude_seen_candidates)
    return "NearestNeighbors", items


def _run_dir(cfg: RunConfig, name: str) -> Path:
    return cfg.out_dir / "runs" / name


def _seeds(cfg: RunConfig) -> dict:
    return {"split": cfg.split.seed, "candidates": cfg.experiment.candidate_seed}


def cmd_run_baselines(cfg: RunConfig, args) -> None:
    split = load_prepared(cfg)
    catalog = load_catalog(cfg.path(cfg.dataset.catalog))
    kind = cfg.experiment.kind
    fp = split.fingerprint()
    if kind in (RERANK_MOSTPOP, RERANK_NEIGHBORS):
        name, cands = _candidates(cfg, split)
        run = candidate_run(name, cands)
        run.config.update(experiment=kind)
        save_run(run, _run_dir(cfg, name), fp, _seeds(cfg))
        print(f"saved candidate list run {name}")
        return
    labels = [m.label for m in cfg.models]
    if len(set(labels)) != len(labels):
        raise ConfigError("config key 'models': model names must be unique")
    users = _cold_users(cfg, split) if kind == COLD_START else evaluable_users(split)
    for mc in cfg.models:
        model = make_recommender(mc.kind, **mc.params).fit(split.train, catalog)
        run = recommend_all(model, users, cfg.experiment.n)
        run.model = mc.label
        run.config.update(experiment=kind)
        save_run(run, _run_dir(cfg, mc.label), fp, _seeds(cfg))
        print(f"saved {mc.label}: {len(run.lists)} lists")


def cmd_run_llm(cfg: RunConfig, args) -> None:
    llm = cfg.llm
    split = load_prepared(cfg)
    catalog = load_catalog(cfg.path(cfg.dataset.catalog))
    kind = cfg.experiment.kind
    client_name = args.client or llm.client
    ccfg = ClientConfig(endpoint=llm.endpoint, model=llm.model, temperature=llm.temperature,
                        token_budget=llm.token_budget, response_reserve=llm.response_reserve,
                        max_retries=llm.max_retries, requests_per_minute=llm.requests_per_minute,
                        concurrency=llm.concurrency, cache_dir=str(cfg.cache_dir),
                        api_key_env=llm.api_key_env)
    if client_name.startswith("stub:"):
        backend = make_stub(client_name[5:], split, catalog, cfg.experiment.n)
        model_id = client_name
    elif client_name == "live":
        backend = _LazyLive(ccfg)
        model_id = llm.model
    else:
        raise ConfigError(f"config key 'llm.client': unknown client {client_name!r}")
    client = ChatClient(backend, model_id, llm.temperature, ResponseCache(cfg.cache_dir))
    candidates = None
    if kind in (RERANK_MOSTPOP, RERANK_NEIGHBORS):
        mode = RERANK
        _, candidates = _candidates(cfg, split)
        users = list(candidates)
    else:
        mode = TOP_N
        users = _cold_users(cfg, split) if kind == COLD_START else evaluable_users(split)
    users = [u for u in users if split.train.profile(u)]
    n = cfg.experiment.n
    if candidates:
        n = max(len(c) for c in candidates.values())
    run, report = run_llm_recommender(
        client, mode, users, split, catalog, n=n, candidates=candidates,
        threshold=llm.threshold, token_budget=llm.token_budget,
        response_reserve=llm.response_reserve, concurrency=llm.concurrency,
        max_failure_fraction=llm.max_failure_fraction, name=llm.name)
    run.config.update(experiment=kind, client=client_name)
    directory = _run_dir(cfg, llm.name)
    save_run(run, directory, split.fingerprint(), _seeds(cfg))
    _write_json(directory / "hallucination.json", report.to_dict())
    print(f"saved {llm.name}: {len(run.lists)} lists, hallucination rate {report.rate:.4f}, "
          f"{client.backend_calls} endpoint calls")


class _LazyLive:
    """Defers credential lookup until a cache miss actually needs the endpoint."""

    def __init__(self, config: ClientConfig):
        self.config = config
        self._backend = None

    def __call__(self, request):
        if self._backend is None:
            self._backend = LiveBackend(self.config)
        return self._backend(request)


def _run_names(cfg: RunConfig) -> list[str]:
    root = cfg.out_dir / "runs"
    if not root.exists():
        raise DatasetError(f"{root}: no runs; run `run-baselines` or `run-llm` first")
    return sorted(p.name for p in root.iterdir() if (p / "manifest.json").exists())


def cmd_evaluate(cfg: RunConfig, args) -> None:
    split = load_prepared(cfg)
    stats = popularity_stats(split.train, cfg.split.head_share)
    kind = cfg.experiment.kind
    users, cutoffs = None, cfg.experiment.cutoffs
    if kind == COLD_START:
        users, cutoffs = cold_start_user_filter(split.train), cfg.experiment.cold_start_cutoffs
    for name in _run_names(cfg):
        run, manifest = load_run(_run_dir(cfg, name))
        if manifest["dataset_fingerprint"] != split.fingerprint():
            raise DatasetError(f"run {name} was produced from a different split; re-run it")
        rep = evaluate_run(run, split, stats, cutoffs, cfg.split.rating_threshold, users,
                           metadata={"experiment": kind, "dataset": cfg.dataset.name})
        _write_json(cfg.out_dir / "eval" / f"{name}.json", rep.to_dict())
        print(f"evaluated {name}")


def cmd_compare(cfg: RunConfig, args) -> None:
    names = args.runs or _run_names(cfg)
    runs = {n: load_run(_run_dir(cfg, n))[0] for n in names}
    if args.reference and args.reference not in runs:
        runs[args.reference] = load_run(_run_dir(cfg, args.reference))[0]
    rows = compare_runs(runs, cfg.experiment.cutoffs, args.reference)
    path = cfg.out_dir / "compare" / f"compare_{cfg.dataset.name}_{cfg.experiment.kind}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "b", "cutoff", "Jaccard", "Kendall"])
        for r in rows:
            w.writerow([r["a"], r["b"], r["cutoff"], repr(r["Jaccard"]), repr(r["Kendall"])])
    print(f"wrote {path}")


def cmd_report(cfg: RunConfig, args) -> None:
    root = cfg.out_dir / "eval"
    files = sorted(root.glob("*.json")) if root.exists() else []
    if not files:
        raise DatasetError(f"{root}: no evaluation reports; run `evaluate` first")
    reports = [EvalReport.from_dict(json.loads(f.read_text(encoding="utf-8"))) for f in files]
    sort = args.sort or f"nDCG@{reports[0].values[0].cutoff}"
    paths = emit_comparison_table(reports, cfg.out_dir, cfg.dataset.name, cfg.experiment.kind, sort)
    for p in paths:
        print(f"wrote {p}")


COMMANDS = {
    "prepare": cmd_prepare,
    "run-baselines": cmd_run_baselines,
    "run-llm": cmd_run_llm,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zsrec", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", "-c", required=True, help="YAML run config")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config key, e.g. split.seed=7")
        if name == "run-llm":
            p.add_argument("--client", help="'live' or stub:echo-mostpop|echo-candidates|"
                                            "reverse-candidates|gibberish")
        if name == "compare":
            p.add_argument("--runs", nargs="*", help="run names (default: all)")
            p.add_argument("--reference", help="compare every run against this one")
        if name == "report":
            p.add_argument("--sort", help="sort column, default nDCG@<first cutoff>")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, MetricError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EndpointError as exc:
        print(f"endpoint error: {exc}", file=sys.stderr)
        return EXIT_ENDPOINT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
