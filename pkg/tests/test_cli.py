import json
import shutil
from pathlib import Path

import httpx
import pytest

import oracles
from zsrec import cli
from zsrec.experiments import EvalReport
from zsrec.runs import load_run

GOLDEN = Path(__file__).parent / "golden"
PIPELINE = ("prepare", "run-baselines", "evaluate", "report")


@pytest.fixture
def workdir(tmp_path, toy_dir):
    for f in toy_dir.iterdir():
        if f.is_file():
            shutil.copy(f, tmp_path / f.name)
    return tmp_path


def run(workdir, *argv, config="toy.yaml"):
    cmd, *rest = argv
    return cli.main([cmd, "-c", str(workdir / config), *rest])


def pipeline(workdir, *extra):
    for cmd in PIPELINE:
        assert run(workdir, cmd, *extra) == 0, cmd
    return workdir / "run"


def load_eval(out, name):
    return EvalReport.from_dict(json.loads((out / "eval" / f"{name}.json").read_text()))


def test_toy_pipeline_matches_golden(workdir):
    out = pipeline(workdir)
    for name in ("report_toy_FreeTop50.csv", "report_toy_FreeTop50.md"):
        assert (out / name).read_bytes() == (GOLDEN / name).read_bytes(), name
    assert len(list((out / "runs").iterdir())) == 9


def test_rerun_is_byte_identical(tmp_path, toy_dir):
    outputs = []
    for sub in ("a", "b"):
        d = tmp_path / sub
        d.mkdir()
        for f in toy_dir.iterdir():
            if f.is_file():
                shutil.copy(f, d / f.name)
        out = pipeline(d)
        assert run(d, "run-llm") == 0
        outputs.append({p.relative_to(out): p.read_bytes() for p in out.rglob("*")
                        if p.is_file() and "cache" not in p.parts})
    assert outputs[0] == outputs[1]


def test_echo_llm_matches_mostpop(workdir):
    assert run(workdir, "prepare") == 0
    assert run(workdir, "run-baselines") == 0
    assert run(workdir, "run-llm", "--client", "stub:echo-mostpop") == 0
    assert run(workdir, "evaluate") == 0
    out = workdir / "run"
    assert load_eval(out, "LLM").vector() == load_eval(out, "MostPop").vector()
    hall = json.loads((out / "runs" / "LLM" / "hallucination.json").read_text())
    assert hall["rate"] == 0.0


def test_gibberish_client(workdir):
    assert run(workdir, "prepare") == 0
    assert run(workdir, "run-llm", "--client", "stub:gibberish") == 0
    hall = json.loads((workdir / "run" / "runs" / "LLM" / "hallucination.json").read_text())
    assert hall["rate"] == 1.0


def test_missing_dataset_exits_1_and_names_key(workdir, capsys):
    (workdir / "ratings.csv").unlink()
    assert run(workdir, "prepare") == 1
    assert "dataset.interactions" in capsys.readouterr().err


def test_bad_override_exits_1(workdir, capsys):
    assert run(workdir, "prepare", "--set", "split.ratio=1.5") == 1
    assert "split.ratio" in capsys.readouterr().err


def test_missing_prepare_exits_2(workdir, capsys):
    assert run(workdir, "run-baselines") == 2
    assert "prepare" in capsys.readouterr().err


def test_live_endpoint_failure_exits_3(workdir, monkeypatch, capsys):
    monkeypatch.setenv("ZSREC_TEST_KEY", "k")

    def refuse(*a, **kw):
        raise httpx.ConnectError("refused")

    monkeypatch.setattr(httpx.Client, "send", refuse)
    monkeypatch.setattr("time.sleep", lambda s: None)
    assert run(workdir, "prepare") == 0
    code = run(workdir, "run-llm", "--client", "live", "--set", "llm.api_key_env=ZSREC_TEST_KEY",
               "--set", "llm.endpoint=http://127.0.0.1:9/v1/chat/completions",
               "--set", "llm.max_retries=0")
    assert code == 3
    assert "endpoint error" in capsys.readouterr().err


def test_compare_self_reference(workdir):
    pipeline(workdir)
    assert run(workdir, "compare", "--runs", "MostPop", "EaseR", "--reference", "MostPop") == 0
    path = workdir / "run" / "compare" / "compare_toy_FreeTop50.csv"
    lines = path.read_text().splitlines()
    assert lines[0] == "a,b,cutoff,Jaccard,Kendall"
    lists = {n: {u: list(r.items) for u, r in load_run(workdir / "run" / "runs" / n)[0].lists.items()}
             for n in ("MostPop", "EaseR")}
    expect = [f"MostPop,EaseR,{k},{oracles.jaccard(lists['MostPop'], lists['EaseR'], k)!r},"
              f"{oracles.kendall(lists['MostPop'], lists['EaseR'], k)!r}" for k in (5, 10)]
    rows = [line.split(",") for line in lines[1:]]
    assert [r[:3] for r in rows] == [e.split(",")[:3] for e in expect]  # reference not paired with itself
    for r, e in zip(rows, expect):
        assert float(r[3]) == pytest.approx(float(e.split(",")[3]), abs=1e-12)
        assert float(r[4]) == pytest.approx(float(e.split(",")[4]), abs=1e-12)


@pytest.mark.parametrize("kind,client", [("RerankMostPop", "stub:echo-candidates"),
                                         ("RerankNeighbors", "stub:reverse-candidates")])
def test_rerank_kinds(workdir, kind, client):
    extra = ("--set", f"experiment.kind={kind}", "--set", "experiment.n=10")
    assert run(workdir, "prepare", *extra) == 0
    assert run(workdir, "run-baselines", *extra) == 0
    assert run(workdir, "run-llm", "--client", client, *extra) == 0
    assert run(workdir, "evaluate", *extra) == 0
    assert run(workdir, "report", *extra) == 0
    out = workdir / "run"
    base = "MostPop" if kind == "RerankMostPop" else "NearestNeighbors"
    if client == "stub:echo-candidates":
        assert load_eval(out, "LLM").vector() == load_eval(out, base).vector()
    hall = json.loads((out / "runs" / "LLM" / "hallucination.json").read_text())
    assert hall["off_list_fraction"] == 0.0
    assert (out / f"report_toy_{kind}.md").exists()


def test_cold_start_kind(workdir):
    extra = ("--set", "experiment.kind=ColdStart")
    out = pipeline(workdir, *extra)
    rep = load_eval(out, "MostPop")
    assert rep.metadata["experiment"] == "ColdStart"
    manifest = json.loads((out / "runs" / "MostPop" / "manifest.json").read_text())
    assert manifest["users"] == ["1", "4", "7"]  # the toy quartile picks three light users
    assert (out / "report_toy_ColdStart.csv").exists()
