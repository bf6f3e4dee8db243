"""Recommendation runs and their on-disk manifest format."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .recommenders import RecommendationList


@dataclass
class RecommendationRun:
    """Per-user ranked lists from one model, plus provenance."""

    model: str
    lists: dict[str, RecommendationList]
    config: dict = field(default_factory=dict)
    prompt_hashes: dict[str, str] = field(default_factory=dict)
    flags: dict[str, dict] = field(default_factory=dict)

    @property
    def users(self) -> list[str]:
        return list(self.lists)

    def top(self, user: str, k: int) -> list[str]:
        rec = self.lists.get(user)
        return rec.top(k) if rec is not None else []

    def restrict(self, users) -> "RecommendationRun":
        users = set(users)
        return RecommendationRun(
            self.model,
            {u: r for u, r in self.lists.items() if u in users},
            dict(self.config),
            {u: h for u, h in self.prompt_hashes.items() if u in users},
            {u: f for u, f in self.flags.items() if u in users},
        )


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def save_run(run: RecommendationRun, directory, dataset_fingerprint: str = "", seeds=None) -> Path:
    """Write ``manifest.json`` and ``lists.tsv`` (user, rank, item, score) under ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "lists.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("user\trank\titem\tscore\n")
        for user, rec in run.lists.items():
            for rank, (item, score) in enumerate(zip(rec.items, rec.scores), start=1):
                fh.write(f"{user}\t{rank}\t{item}\t{score!r}\n")
    manifest = {
        "model": run.model,
        "config": run.config,
        "config_hash": config_hash(run.config),
        "dataset_fingerprint": dataset_fingerprint,
        "seeds": seeds or {},
        "users": run.users,
        "lists_file": "lists.tsv",
        "prompt_hashes": run.prompt_hashes,
        "flags": run.flags,
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_run(directory) -> tuple[RecommendationRun, dict]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    items: dict[str, list] = {u: [] for u in manifest["users"]}
    with open(directory / manifest["lists_file"], encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            user, _rank, item, score = line.rstrip("\n").split("\t")
            items.setdefault(user, []).append((item, float(score)))
    lists = {u: RecommendationList(u, tuple(i for i, _ in v), tuple(s for _, s in v))
             for u, v in items.items()}
    run = RecommendationRun(manifest["model"], lists, manifest["config"],
                            manifest["prompt_hashes"], manifest["flags"])
    return run, manifest
