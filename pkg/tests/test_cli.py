import json

import pytest

from gapsim import cli
from gapsim import gaussian as gs

RICE = ["rice", "--kernel", "gaussian", "--n-paths", "1000", "--r-max", "20", "--seed", "7"]


def run(args, out):
    return cli.main(args + ["--out", str(out)])


def test_rice_byte_identical(tmp_path):
    assert run(RICE, tmp_path / "a") == 0
    assert run(["run", "--experiment"] + RICE, tmp_path / "b") == 0
    assert (tmp_path / "a" / "rice.csv").read_bytes() == (tmp_path / "b" / "rice.csv").read_bytes()
    s = json.loads((tmp_path / "a" / "rice_summary.json").read_text())
    assert abs(s["rel_error"]) < 0.05


def test_workers_do_not_change_outputs(tmp_path):
    args = ["splitting", "--n-paths", "30000", "--s", "1", "--s", "4", "--r", "1", "--seed", "3"]
    assert run(args + ["--workers", "1"], tmp_path / "w1") == 0
    assert run(args + ["--workers", "8"], tmp_path / "w8") == 0
    assert (tmp_path / "w1" / "splitting.csv").read_bytes() == (tmp_path / "w8" / "splitting.csv").read_bytes()


def test_manifest_reproduces(tmp_path):
    assert run(["clustering", "--kernel", "cauchy:alpha=0.5", "--n-paths", "10000", "--r", "1"], tmp_path / "a") == 0
    man = tmp_path / "a" / "manifest_clustering.json"
    m = json.loads(man.read_text())
    assert m["config"]["seed"] == 0 and "git_describe" in m and "wall_time_s" in m
    assert run(["clustering", "--config", str(man)], tmp_path / "b") == 0
    assert (tmp_path / "a" / "clustering.csv").read_bytes() == (tmp_path / "b" / "clustering.csv").read_bytes()


def test_config_file_and_override(tmp_path, monkeypatch):
    cfg = tmp_path / "c.txt"
    cfg.write_text("# comment\nkernel = cauchy:alpha=0.5\nn-paths=1000\nr_max=10\nseed=4\n")
    assert run(["rice", "--config", str(cfg), "--seed", "5"], tmp_path / "o") == 0
    m = json.loads((tmp_path / "o" / "manifest_rice.json").read_text())
    assert m["config"]["kernel"] == "cauchy:alpha=0.5" and m["config"]["seed"] == 5
    monkeypatch.setenv("GAPSIM_SEED", "99")
    assert run(["rice", "--n-paths", "100", "--r-max", "5"], tmp_path / "e") == 0
    assert json.loads((tmp_path / "e" / "manifest_rice.json").read_text())["config"]["seed"] == 99


def test_config_errors(tmp_path, capsys):
    assert run(["rice", "--kernel", "cauchy"], tmp_path / "x") == cli.EXIT_CONFIG
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rec["error"] == "config" and rec["exit_code"] == cli.EXIT_CONFIG
    assert run(["rice", "--n-paths", "-3"], tmp_path / "y") == cli.EXIT_CONFIG
    assert run(["nonsense"], tmp_path / "y") == cli.EXIT_CONFIG
    bad = tmp_path / "bad.txt"
    bad.write_text("colour=blue\n")
    assert run(["rice", "--config", str(bad)], tmp_path / "y") == cli.EXIT_CONFIG


def test_unwritable_out(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(RICE + ["--out", str(blocker / "sub")]) == cli.EXIT_OUTDIR


def test_embedding_failure_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise gs.EmbeddingError("most negative eigenvalue -1")

    monkeypatch.setattr(gs, "stationary_sampler", boom)
    assert run(RICE, tmp_path / "z") == cli.EXIT_EMBEDDING
    assert json.loads((tmp_path / "z" / "error.json").read_text())["error"] == "embedding"


def test_help_documents_exit_codes(capsys):
    with pytest.raises(SystemExit):
        cli.main(["rice", "--help"])
    text = capsys.readouterr().out
    for code in (cli.EXIT_CONFIG, cli.EXIT_OUTDIR, cli.EXIT_EMBEDDING):
        assert f"  {code}  " in text


def test_poisson_and_report(tmp_path):
    out = tmp_path / "p"
    args = ["poisson", "--n-runs", "6", "--R", "40", "--R", "80", "--n-paths", "2000", "--n-samples", "20000",
            "--r-max", "6", "--n-r", "31"]
    assert run(args, out) == 0
    lines = (out / "runs.csv").read_text().splitlines()
    assert lines[0] == "run_id,R,L_R,Z_R,n_zeros,seed" and len(lines) == 13
    s = json.loads((out / "poisson_summary.json").read_text())
    assert [b["R"] for b in s["by_R"]] == [40.0, 80.0]
    assert {"kernel", "R", "n_runs", "ks_gumbel", "ks_uniform", "p_values", "m_hat"} <= set(s["by_R"][0])
    assert run(["poisson", "--n-runs", "4", "--R", "40", "--table", str(out / "scaling.csv")], tmp_path / "q") == 0
    assert run(["report"], out) == 0
    assert (out / "report.txt").exists()


def test_scaling_outputs(tmp_path):
    out = tmp_path / "s"
    assert run(["scaling", "--n-paths", "5000", "--n-samples", "20000", "--r-max", "8", "--n-r", "41"], out) == 0
    head = (out / "scaling.csv").read_text().splitlines()[0]
    assert head == "r,G_hat,G_lo,G_hi,lambda_hat,lambda_lo,lambda_hi,theta_hat"
    fit = json.loads((out / "scaling_fit.json").read_text())
    assert fit["zeta_predicted"] is None and "fit" in fit
