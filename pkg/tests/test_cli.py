import json
import subprocess
import sys

import pytest

from sisindex.cli import main
from sisindex.evaluation import load_report


def run_ok(*argv):
    assert main([str(a) for a in argv]) == 0


def run_err(capsys, *argv):
    rc = main([str(a) for a in argv])
    err = capsys.readouterr().err
    assert rc != 0
    return err


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    run_ok("generate", "--seed", 3, "--items", 300, "--queries", 20, "--big", 10, "--dim", 8, "--out", d / "ds")
    run_ok("build", "--data", d / "ds", "--alpha", 3, "--out", d / "index.json")
    return d


def test_generate_writes_bundle_and_manifest(data):
    names = {p.name for p in (data / "ds").iterdir()}
    assert {"taxonomy.json", "db_probs.jsonl", "query_probs.jsonl", "db_features.jsonl",
            "query_features.jsonl", "ground_truth.jsonl", "manifest.json"} <= names
    manifest = json.loads((data / "ds" / "manifest.json").read_text())
    assert manifest["argv"][0] == "generate" and manifest["seed"] == 3


def test_pipeline_sis_vs_linear(data, capsys):
    d = data
    run_ok("query", "--data", d / "ds", "--index", d / "index.json", "--beta", 3,
           "--out", d / "sis.jsonl", "--scopes", d / "sis.scopes.jsonl", "--top-k", 0)
    run_ok("linear-scan", "--data", d / "ds", "--out", d / "lin.jsonl", "--top-k", 0)
    run_ok("eval", "--data", d / "ds", "--results", d / "sis.jsonl", "--scopes", d / "sis.scopes.jsonl",
           "--out", d / "sis.report.json", "--repeats", 1)
    run_ok("eval", "--data", d / "ds", "--results", d / "lin.jsonl", "--out", d / "lin.report.json", "--repeats", 1)
    sis_rep = load_report(d / "sis.report.json")
    lin_rep = load_report(d / "lin.report.json")
    assert 0 < sis_rep.ratio_scope < 1 and 0 < sis_rep.recall <= 1
    assert (lin_rep.recall, lin_rep.ratio_scope, lin_rep.ratio_time) == (1.0, 1.0, 1.0)
    run_ok("compare", "--reports", d / "lin.report.json", d / "sis.report.json",
           "--out", d / "cmp.json", "--text", d / "cmp.txt")
    rows = json.loads((d / "cmp.json").read_text())["rows"]
    assert [r["Index"] for r in rows] == ["LinearScan", "SIS"]
    assert (d / "cmp.txt").read_text().split()[:8] == [
        "Index", "Detector", "b_total", "b_selected", "mAP", "Recall", "Ratio_scope", "Ratio_time"]


def test_ivf_pipeline(data):
    d = data
    run_ok("ivf-build", "--data", d / "ds", "--nlist", 6, "--out", d / "ivf.json")
    run_ok("ivf-query", "--data", d / "ds", "--index", d / "ivf.json", "--nprobe", 6,
           "--out", d / "ivf.jsonl", "--scopes", d / "ivf.scopes.jsonl", "--top-k", 0)
    run_ok("eval", "--data", d / "ds", "--results", d / "ivf.jsonl", "--scopes", d / "ivf.scopes.jsonl",
           "--out", d / "ivf.report.json", "--no-timing")
    run_ok("linear-scan", "--data", d / "ds", "--out", d / "lin2.jsonl", "--top-k", 0, "--no-timing")
    run_ok("eval", "--data", d / "ds", "--results", d / "lin2.jsonl", "--out", d / "lin2.report.json",
           "--no-timing")
    ivf_rep = load_report(d / "ivf.report.json")
    assert ivf_rep.recall == 1.0 and ivf_rep.ratio_scope == 1.0
    assert ivf_rep.mAP == load_report(d / "lin2.report.json").mAP


def test_sweep_and_inspect(data, capsys):
    d = data
    run_ok("sweep", "--data", d / "ds", "--alpha", "1,3", "--beta", "1,3", "--no-timing", "--out", d / "sweep.csv")
    lines = (d / "sweep.csv").read_text().splitlines()
    assert lines[0] == "alpha,beta,mAP,Recall,Ratio_scope,Ratio_time" and len(lines) == 5
    capsys.readouterr()
    run_ok("inspect", "--index", d / "index.json", "--data", d / "ds", "--beta", 3)
    out = capsys.readouterr().out
    assert "E_s=" in out and "mean S_real=" in out


def test_build_is_byte_stable_and_replayable(data, tmp_path):
    run_ok("build", "--data", data / "ds", "--alpha", 3, "--out", tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == (data / "index.json").read_bytes()
    (tmp_path / "again.json").unlink()
    run_ok("--replay", tmp_path / "again.json.manifest.json")
    assert (tmp_path / "again.json").read_bytes() == (data / "index.json").read_bytes()


def test_beta_zero_is_range_error(data, capsys, tmp_path):
    err = run_err(capsys, "query", "--data", data / "ds", "--index", data / "index.json", "--beta", 0,
                  "--out", tmp_path / "x.jsonl")
    assert "code=RANGE_ERROR" in err
    assert not (tmp_path / "x.jsonl").exists()


def test_unknown_flag_is_usage_error(capsys):
    assert "code=USAGE_ERROR" in run_err(capsys, "build", "--frobnicate")


def test_missing_file(capsys, tmp_path):
    err = run_err(capsys, "build", "--data", tmp_path / "nope", "--out", tmp_path / "i.json")
    assert "code=" in err and "nope" in err


def test_version_mismatch(data, capsys, tmp_path):
    doc = json.loads((data / "index.json").read_text())
    doc["format_version"] = 99
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    err = run_err(capsys, "inspect", "--index", bad)
    assert "code=VERSION_ERROR" in err


def test_keypoint_dataset(tmp_path, capsys):
    run_ok("gen", "--seed", 1, "--items", 60, "--queries", 5, "--big", 4, "--feature", "keypoints",
           "--kp-min", 2, "--kp-max", 8, "--dim", 8, "--out", tmp_path / "kp")
    run_ok("build", "--data", tmp_path / "kp", "--alpha", 2, "--out", tmp_path / "i.json")
    run_ok("query", "--data", tmp_path / "kp", "--index", tmp_path / "i.json", "--beta", 2,
           "--metric", "keypoints", "--out", tmp_path / "r.jsonl", "--no-timing")
    first = json.loads((tmp_path / "r.jsonl").read_text().splitlines()[0])
    assert first["query_id"] and isinstance(first["entries"], list)
    err = run_err(capsys, "ivf-build", "--data", tmp_path / "kp", "--nlist", 2, "--out", tmp_path / "v.json")
    assert "code=VALIDATION_ERROR" in err


def test_console_module_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sisindex.cli", "query", "--beta", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "code=USAGE_ERROR" in proc.stderr
