import json

import pytest

from bdris.cli import EXIT_IO, EXIT_NONCONVERGENCE, EXIT_OK, EXIT_VALIDATION, main
from bdris.envgen import load_environment

GEN = ["--n", "7", "--n-tx", "2", "--n-rx", "2", "--n-freq", "3"]


@pytest.fixture
def env_file(tmp_path):
    path = tmp_path / "env.json"
    assert main(["gen-env", *GEN, "--seed", "3", "--out", str(path)]) == EXIT_OK
    return path


def test_gen_env(env_file):
    env = load_environment(env_file)
    assert env.n_ports == 7 and env.n_freq == 3 and env.seed == 3


def test_run_csv_and_json(env_file, tmp_path, capsys):
    assert main(["run", "--env", str(env_file), "--variants", "OC,BD-123,BD-123:unaware", "--kpis", "siso,sum_rate"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "variant,kpi,mc_mode,mean,pct_vs_oc,n_cells"
    assert len(out) == 1 + 3 * 2
    dest = tmp_path / "r.json"
    args = ["run", "--env", str(env_file), "--variants", "OC,D-12", "--kpis", "logdet", "--format", "json",
            "--out", str(dest), "--freqs", "0:3:2", "--snr-db", "20"]
    assert main(args) == EXIT_OK
    doc = json.loads(dest.read_text())
    assert doc["metadata"]["frequency_indices"] == [0, 2]
    assert doc["metadata"]["snr_db"] == 20


def test_run_is_byte_identical(env_file, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["run", "--env", str(env_file), "--variants", "discrete", "--kpis", "siso"]
    assert main([*base, "--out", str(a)]) == 0
    assert main([*base, "--out", str(b), "--threads", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_run_generates_environment(capsys):
    assert main(["run", *GEN, "--variants", "OC", "--kpis", "siso"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("variant,")


def test_exit_codes(env_file, tmp_path):
    assert main(["run", "--env", str(tmp_path / "nope.json")]) == EXIT_IO
    truncated = tmp_path / "t.json"
    truncated.write_text(env_file.read_text()[:200])
    assert main(["run", "--env", str(truncated)]) == EXIT_VALIDATION
    assert main(["run", "--env", str(env_file), "--variants", "XX-1"]) == EXIT_VALIDATION
    assert main(["run", "--env", str(env_file), "--out", str(tmp_path / "no" / "r.csv"), "--variants", "OC",
                 "--kpis", "siso"]) == EXIT_IO


def test_catalog_mismatch_exit_code(env_file, tmp_path):
    from bdris.loadnet import LoadCatalog, save_catalog

    save_catalog(LoadCatalog.default([1e9]), tmp_path / "cat.json")
    assert main(["run", "--env", str(env_file), "--catalog", str(tmp_path / "cat.json")]) == EXIT_VALIDATION


def test_vvna_round_trip(tmp_path):
    meas, dis, est = tmp_path / "m.json", tmp_path / "d.json", tmp_path / "e.json"
    sim = ["vvna-sim", "--n", "4", "--n-tx", "1", "--n-rx", "1", "--n-freq", "3", "--freq-index", "2",
           "--n-meas", "60", "--out", str(meas), "--disambiguation-out", str(dis)]
    assert main(sim) == EXIT_OK
    assert main(["vvna-estimate", "--meas", str(meas), "--disambiguation", str(dis), "--out", str(est)]) == EXIT_OK
    doc = json.loads(est.read_text())
    assert doc["report"]["converged"]
    assert doc["sign"]["resolved"]
    assert len(doc["matrix"]) == 16


def test_vvna_non_convergence_exit_code(tmp_path):
    meas = tmp_path / "m.json"
    sim = ["vvna-sim", "--n", "4", "--n-tx", "1", "--n-rx", "1", "--n-freq", "1", "--n-meas", "40",
           "--noise", "0.01", "--out", str(meas)]
    assert main(sim) == EXIT_OK
    assert main(["vvna-estimate", "--meas", str(meas), "--starts", "1", "--out", str(tmp_path / "e.json")]) == (
        EXIT_NONCONVERGENCE
    )


def test_vvna_malformed_measurements(tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text('{"format": "bdris-measurements", "accessible": [0, 1]')
    assert main(["vvna-estimate", "--meas", str(bad)]) == EXIT_VALIDATION
