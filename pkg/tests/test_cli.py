import json

import pytest

from stabfrag.cli import EXIT_OK, EXIT_USAGE, main


def run(tmp_path, *argv):
    out = tmp_path / "out"
    code = main([*argv, "--out", str(out)])
    return code, out


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_constants(tmp_path, capsys):
    code, out = run(tmp_path, "constants", "--alpha", "1.5")
    assert code == EXIT_OK
    doc = json.loads((out / "constants.json").read_text())
    assert doc["c_big"] == pytest.approx(0.42314218766081724)
    assert manifest(out)["files"] == ["constants.json"]
    assert '"c_small"' in capsys.readouterr().out


def test_missing_alpha_is_a_usage_error(tmp_path, capsys):
    code, _ = run(tmp_path, "constants")
    assert code == EXIT_USAGE
    assert "alpha" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["constants", "--alpha", "2.5"], ["nonsense"], ["sample", "--alpha", "1.5", "--n-rep", "0"]])
def test_bad_arguments(tmp_path, argv):
    assert run(tmp_path, *argv)[0] == EXIT_USAGE


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"alpha": 1.4, "seed": 9}))
    code, out = run(tmp_path, "constants", "--config", str(cfg), "--seed", "3")
    assert code == EXIT_OK
    m = manifest(out)["config"]
    assert m["alpha"] == 1.4 and m["seed"] == 3


def test_config_unknown_field(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"alpha": 1.5, "colour": "red"}))
    assert run(tmp_path, "constants", "--config", str(cfg))[0] == EXIT_USAGE


def test_density_csv(tmp_path):
    code, out = run(tmp_path, "density", "--alpha", "1.5", "--kind", "weight", "--t-grid", "0.3")
    assert code == EXIT_OK
    text = (out / "density.csv").read_bytes()
    assert b"\r" not in text and text.splitlines()[0] == b"kind,t,x,pdf,cdf"


@pytest.mark.parametrize("kind", ["stable", "partition", "semigroup", "small-time", "bridge", "jump-field"])
def test_sample_kinds(tmp_path, kind):
    code, out = run(tmp_path, "sample", "--alpha", "1.5", "--sampler", kind, "--n-rep", "3", "--dust", "0.01", "--eps", "0.1")
    assert code == EXIT_OK
    lines = (out / "samples.jsonl").read_text().splitlines()
    assert len(lines) == 3 and all(json.loads(line)["stream_id"] == i for i, line in enumerate(lines))


def test_sample_is_reproducible(tmp_path):
    a = main(["sample", "--alpha", "1.5", "--n-rep", "4", "--seed", "5", "--out", str(tmp_path / "a")])
    b = main(["sample", "--alpha", "1.5", "--n-rep", "4", "--seed", "5", "--out", str(tmp_path / "b")])
    assert a == b == EXIT_OK
    assert (tmp_path / "a" / "samples.jsonl").read_text() == (tmp_path / "b" / "samples.jsonl").read_text()


def test_frag_path(tmp_path):
    code, out = run(tmp_path, "frag-path", "--alpha", "1.5", "--eps", "0.05", "--n-rep", "2", "--t-grid", "0,0.5", "--mode", "first_passage")
    assert code == EXIT_OK
    assert (out / "summary.csv").read_text().splitlines()[0] == "t,mean_F1,mean_F2,mean_sumsq,n"
    assert len((out / "traces.jsonl").read_text().splitlines()) == 4


def test_frag_kernel(tmp_path):
    code, out = run(tmp_path, "frag-kernel", "--alpha", "1.5", "--eps-cut", "0.3", "--floor", "1e-3", "--n-rep", "2", "--t-grid", "0,1")
    assert code == EXIT_OK
    assert sorted(manifest(out)["files"]) == ["summary.csv", "traces.jsonl"]
