import subprocess
import sys

import numpy as np

from omd import io

from clitools import FAST, differing_outputs, hmm_pipeline, run


def test_sample_prior_then_check_order(tmp_path, capsys):
    m = tmp_path / "omd.csv"
    code, out, _ = run(capsys, "sample-prior", "--family", "omd", "--K", 4, "--A", 6, "--seed", 3, "--out", m)
    assert code == 0 and out == [str(m)]
    assert io.read_sidecar(m)["family"] == "omd"
    code, out, _ = run(capsys, "check-order", m, "--strict")
    assert (code, out) == (0, ["ordered"])


def test_check_order_verdicts(tmp_path, capsys):
    p = tmp_path / "m.csv"
    io.write_matrix(p, np.eye(3))
    assert run(capsys, "check-order", p)[1] == ["ordered"]
    io.write_matrix(p, [[0.0, 1.0], [1.0, 0.0]])
    assert run(capsys, "check-order", p)[:2] == (0, ["not ordered"])
    assert run(capsys, "check-order", p, "--strict")[0] == 1
    io.write_matrix(p, [[0.5, 0.6]])
    assert run(capsys, "check-order", p)[1] == ["not stochastic"]


def test_bmd_prior_writes_banded_matrix(tmp_path, capsys):
    p = tmp_path / "b.csv"
    code, _, _ = run(capsys, "sample-prior", "--family", "bmd", "--K", 5, "--alpha", "1,2,3", "--out", p)
    m, _ = io.read_matrix(p)
    assert code == 0 and np.all(np.triu(m, 2) == 0) and np.all(np.tril(m, -2) == 0)


def test_usage_errors_exit_2(tmp_path, capsys):
    assert run(capsys, "sample-prior", "--family", "omd", "--K", 2)[0] == 2
    assert run(capsys, "sample-prior", "--family", "omd", "--K", 2, "--A", 3, "--alpha", "1,1")[0] == 2
    assert run(capsys, "sample-prior", "--family", "bmd", "--K", 3, "--alpha", "1,1")[0] == 2
    assert run(capsys, "fit", "--data", "x.csv", "--K", 2, "--prior", "bmd+omd")[0] == 2
    assert run(capsys, "nonsense")[0] == 2
    assert run(capsys, "fit", "--data", "x.csv", "--K", 2, "--threads", 0)[0] == 2


def test_runtime_errors_exit_1(tmp_path, capsys):
    code, _, err = run(capsys, "check-order", tmp_path / "missing.csv")
    assert code == 1 and "error" in err.lower() or "Error" in err
    bad = tmp_path / "bad.csv"
    bad.write_text("1,x\n")
    assert run(capsys, "check-order", bad)[0] == 1


def test_hmm_fit_then_evaluate(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(io.OUTPUT_DIR_ENV, str(tmp_path / "a"))
    root = hmm_pipeline(tmp_path / "a", capsys)
    rows = io.read_metric_rows(root / "r.csv")
    metrics = {r[4]: r[5] for r in rows}
    assert {"mae_observations", "mae_latent_states"} <= set(metrics)
    assert all(np.isfinite(v) for v in metrics.values())
    assert {r[3] for r in rows} == {"imputation"} and {r[2] for r in rows} == {"OMD+OMD"}
    assert (root / "post" / "emission.csv").exists()


def test_dpt_pipeline(tmp_path, capsys):
    data = tmp_path / "t.csv"
    assert run(capsys, "generate-synthetic", "--model", "dpt", "--V", 4, "--A", 5, "--T", 5, "--C", 2,
               "--K", 2, "--seed", 1, "--out", data)[0] == 0
    _, (train, test), _ = run(capsys, "split", data, "--model", "dpt", "--mode", "forecasting", "--fraction",
                              0.6, "--out", tmp_path / "s.csv")
    trace = tmp_path / "tr.jsonl"
    assert run(capsys, "fit", "--model", "dpt", "--data", train, "--K", 2, "--C", 2, *FAST,
               "--out", trace)[0] == 0
    report = tmp_path / "r.csv"
    code, _, err = run(capsys, "evaluate", "--trace", trace, "--train", train, "--test", test, "--out", report)
    assert code == 0, err
    value = {r[4]: r[5] for r in io.read_metric_rows(report)}["sppd"]
    assert 0 < value <= 1
    assert run(capsys, "summarize-posterior", trace, "--out-dir", tmp_path / "post")[0] == 0
    assert (tmp_path / "post" / "core_t000.csv").exists()


def test_events_round_trip_through_cli(tmp_path, capsys):
    ev = tmp_path / "e.tsv"
    assert run(capsys, "generate-events", "--seed", 2, "--start", "2015-01", "--out", ev)[0] == 0
    t = tmp_path / "t.csv"
    code, _, err = run(capsys, "ingest-events", ev, "--countries", "ARM,AZE,RUS,TUR,IRN,GEO",
                       "--start", "2015-01", "--months", 36, "--out", t)
    assert code == 0 and "kept" in err
    tensor = io.read_tensor(t)
    assert tensor.dims == (6, 6, 20, 36)
    assert tensor.to_dense().sum() == len(ev.read_text().splitlines()) - 1


def test_run_experiment_writes_report(tmp_path, capsys):
    cfg = tmp_path / "sweep.cfg"
    io.write_config(cfg, {"experiment_id": "tiny", "truth": "banded", "K": 3, "A": 4, "N": 10, "T": 5,
                          "seeds": "0,1", "configs": "omd+omd,smd+smd", "n_samples": 2, "burn_in": 5})
    out = tmp_path / "rep.csv"
    code, _, err = run(capsys, "run-experiment", cfg, "--out", out)
    assert code == 0, err
    rows = io.read_metric_rows(out)
    assert {r[1] for r in rows} == {0, 1} and {r[2] for r in rows} == {"OMD+OMD", "SMD+SMD"}
    assert run(capsys, "run-experiment", tmp_path / "nope.cfg")[0] == 1
    cfg.write_text("bogus_key = 1\n")
    assert run(capsys, "run-experiment", cfg)[0] == 2


def test_stochastic_subcommands_are_byte_reproducible(tmp_path, capsys, monkeypatch):
    mismatched = differing_outputs(tmp_path, capsys, monkeypatch)
    assert mismatched == []


def test_seed_changes_output(tmp_path, capsys):
    run(capsys, "sample-prior", "--family", "omd", "--K", 3, "--A", 4, "--seed", 1, "--out", tmp_path / "1.csv")
    run(capsys, "sample-prior", "--family", "omd", "--K", 3, "--A", 4, "--seed", 2, "--out", tmp_path / "2.csv")
    assert (tmp_path / "1.csv").read_bytes() != (tmp_path / "2.csv").read_bytes()


def test_console_entry_point(tmp_path):
    out = tmp_path / "m.csv"
    proc = subprocess.run([sys.executable, "-m", "omd.cli", "sample-prior", "--family", "smd", "--K", "2",
                           "--A", "3", "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
    proc = subprocess.run([sys.executable, "-m", "omd.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "check-order" in proc.stdout
