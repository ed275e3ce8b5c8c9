import csv
import json

import numpy as np
import pytest

from anchored_transfer import harness
from anchored_transfer.cli import main
from anchored_transfer.embed import EmbedShape, embed_matrix
from anchored_transfer.matcore import MatrixFormatError, read_matrix, write_matrix
from anchored_transfer.metrics import AGGREGATE_HEADER, RESULTS_HEADER


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _cov(tmp_path, name="c", **params):
    cfg = harness.RunConfig.from_mapping("covariance", {"out": str(tmp_path / name), **params})
    return cfg, harness.run_covariance_experiment(cfg)


def test_parse_config_text():
    text = "# comment\nkind = covariance\n\np1=10  # inline\nn2_grid = 30, 50\n"
    assert harness.parse_config_text(text) == {"kind": "covariance", "p1": "10", "n2_grid": "30, 50"}


@pytest.mark.parametrize("text, match", [
    ("p1 10\n", ":1: expected key=value"),
    ("p1=1\np1=2\n", ":2: duplicate"),
    ("=3\n", ":1: empty key"),
])
def test_parse_config_errors(text, match):
    with pytest.raises(harness.ConfigError, match=match):
        harness.parse_config_text(text)


def test_unknown_key_is_error(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("kind=covariance\np_1=10\n")
    with pytest.raises(harness.ConfigError, match="unknown key 'p_1'"):
        harness.load_config(path)


def test_key_from_other_kind_rejected():
    with pytest.raises(harness.ConfigError, match="sparse_edits"):
        harness.RunConfig.from_mapping("covariance", {"sparse_edits": "2"})


def test_kind_mismatch_rejected():
    with pytest.raises(harness.ConfigError, match="does not match"):
        harness.RunConfig.from_mapping("markov", {"kind": "covariance"})


def test_bad_value():
    with pytest.raises(harness.ConfigError, match="p1"):
        harness.RunConfig.from_mapping("covariance", {"p1": "ten"})


def test_typed_values(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("kind=covariance\nn2_grid={30,50,80}\ntiming=true\ntolerance=1e-6\n")
    cfg = harness.load_config(path, overrides={"trials": 2, "jobs": None})
    assert cfg.params["n2_grid"] == (30, 50, 80)
    assert cfg.timing is True and cfg.tolerance == 1e-6 and cfg.trials == 2 and cfg.jobs == 1


def test_denoise_missing_input(tmp_path):
    with pytest.raises(FileNotFoundError):
        harness.RunConfig.from_mapping("denoise-file", {"y2": str(tmp_path / "nope.txt"), "l1": "x"})


def test_single_cell_gives_three_rows(tmp_path):
    _, res = _cov(tmp_path, trials="1", n2_grid="30")
    assert [r.method for r in res.records] == ["transfer", "nontransfer", "pca"]
    assert not res.failures


def test_row_count_and_order(tmp_path):
    cfg, res = _cov(tmp_path, trials="2", n2_grid="30,60")
    assert len(res.records) == 2 * 2 * 3
    keys = [r.sort_key() for r in res.records]
    assert keys == sorted(keys)
    paths = harness.write_results(res, cfg.out)
    rows = _rows(paths["results"])
    assert tuple(rows[0]) == RESULTS_HEADER and len(rows) == 13
    assert tuple(_rows(paths["aggregate"])[0]) == AGGREGATE_HEADER
    assert harness.verify_aggregates(paths["results"], paths["aggregate"]) == []


def test_aggregate_matches_independent_recompute(tmp_path):
    cfg, res = _cov(tmp_path, trials="3", n2_grid="40")
    paths = harness.write_results(res, cfg.out)
    rows = [r for r in _rows(paths["results"])[1:] if r[1] == "transfer"]
    errs = np.array([float(r[4]) for r in rows])
    agg = {r[0]: r for r in _rows(paths["aggregate"])[1:]}["transfer"]
    assert float(agg[2]) == pytest.approx(errs.mean(), rel=1e-15)
    assert float(agg[3]) == pytest.approx(errs.std(ddof=1) / np.sqrt(3), rel=1e-12)
    assert int(agg[6]) == 3


def test_verify_flags_tampering(tmp_path):
    cfg, res = _cov(tmp_path, trials="2", n2_grid="40")
    paths = harness.write_results(res, cfg.out)
    rows = _rows(paths["aggregate"])
    rows[1][2] = "123.0"
    with open(paths["aggregate"], "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    assert harness.verify_aggregates(paths["results"], paths["aggregate"])


def test_single_trial_stderr_zero(tmp_path):
    _, res = _cov(tmp_path, trials="1", n2_grid="30")
    assert all(a["stderr_err_L"] == 0.0 for a in res.aggregates)


def test_byte_identical_reruns(tmp_path):
    outs = []
    for name in ("a", "b"):
        cfg, res = _cov(tmp_path, name, trials="2", n2_grid="30,50")
        outs.append(harness.write_results(res, cfg.out))
    for key in ("results", "aggregate"):
        assert outs[0][key].read_bytes() == outs[1][key].read_bytes()


def test_parallel_matches_serial(tmp_path):
    _, serial = _cov(tmp_path, "s", trials="2", n2_grid="30")
    _, par = _cov(tmp_path, "p", trials="2", n2_grid="30", jobs="2")
    assert [r.as_row() for r in serial.records] == [r.as_row() for r in par.records]


def test_failures_recorded(tmp_path, monkeypatch):
    real = harness.generate_instance

    def flaky(spec, trial):
        if trial == 1:
            raise RuntimeError("boom")
        return real(spec, trial)

    monkeypatch.setattr(harness, "generate_instance", flaky)
    cfg, res = _cov(tmp_path, trials="3", n2_grid="30")
    assert len(res.failures) == 1 and res.failure_rate == pytest.approx(1 / 3)
    assert "boom" in res.failures[0]["error"]
    assert len(res.records) == 6
    paths = harness.write_results(res, cfg.out)
    assert "failures" in paths


def test_markov_rows_and_stochasticity(tmp_path):
    cfg = harness.RunConfig.from_mapping("markov", {
        "out": str(tmp_path / "m"), "trials": "2", "n1": "20000", "n2_grid": "500,1000,2000,4000"})
    res = harness.run_markov_experiment(cfg)
    assert len(res.records) == 4 * 2 * 2
    assert all(r["row_stochastic"] and r["freq_exact"] for r in res.extra)
    paths = harness.write_results(res, cfg.out)
    assert len(_rows(paths["transition"])) == 1 + 16


def test_denoise_reproduces_embedded_source(tmp_path):
    rng = np.random.default_rng(0)
    l1 = rng.standard_normal((4, 2)) @ rng.standard_normal((2, 4))
    write_matrix(tmp_path / "l1.txt", l1)
    y2 = embed_matrix(l1, EmbedShape(6, 6))
    write_matrix(tmp_path / "y2.txt", y2)
    cfg = harness.RunConfig.from_mapping("denoise-file", {
        "y2": str(tmp_path / "y2.txt"), "l1": str(tmp_path / "l1.txt"),
        "out": str(tmp_path / "out"), "incoherence_mu": "3"})
    harness.denoise_file(cfg)
    est = read_matrix(tmp_path / "out" / "L_hat.txt") + read_matrix(tmp_path / "out" / "S_hat.txt")
    assert np.max(np.abs(est - y2)) < 1e-8
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["converged"] and report["objective_trace"]
    assert report["incoherence_ok"] in (True, False) and report["coherence"] > 0


def test_denoise_from_y1(tmp_path):
    rng = np.random.default_rng(1)
    y1 = rng.standard_normal((4, 1)) @ rng.standard_normal((1, 4))
    write_matrix(tmp_path / "y1.txt", y1)
    write_matrix(tmp_path / "y2.txt", embed_matrix(y1, EmbedShape(5, 5)))
    cfg = harness.RunConfig.from_mapping("denoise-file", {
        "y2": str(tmp_path / "y2.txt"), "y1": str(tmp_path / "y1.txt"), "rank": "1",
        "out": str(tmp_path / "o")})
    out = harness.denoise_file(cfg)
    assert out["report"]["anchor_rank"] == 1


def test_denoise_malformed_file(tmp_path):
    (tmp_path / "y2.txt").write_text("2 2\n1 2\n3 oops\n")
    write_matrix(tmp_path / "l1.txt", np.eye(2))
    cfg = harness.RunConfig.from_mapping("denoise-file", {
        "y2": str(tmp_path / "y2.txt"), "l1": str(tmp_path / "l1.txt"), "out": str(tmp_path / "o")})
    with pytest.raises(MatrixFormatError) as info:
        harness.denoise_file(cfg)
    assert info.value.line == 3


def test_cli_cov(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("kind = covariance\nn2_grid = 30\n")
    assert main(["cov", "--config", str(cfg), "--trials", "1", "--out", str(tmp_path / "o"), "--seed", "4"]) == 0
    assert len(_rows(tmp_path / "o" / "results.csv")) == 4
    assert "3 rows" in capsys.readouterr().out


def test_cli_unknown_key_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("n2grid = 30\n")
    assert main(["cov", "--config", str(cfg)]) == 2
    assert "unknown key" in capsys.readouterr().err


def test_cli_missing_config(tmp_path, capsys):
    assert main(["markov", "--config", str(tmp_path / "none.cfg")]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_denoise_missing_input(tmp_path, capsys):
    cfg = tmp_path / "d.cfg"
    cfg.write_text(f"y2 = {tmp_path / 'missing.txt'}\nl1 = {tmp_path / 'missing.txt'}\n")
    assert main(["denoise", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "not found" in capsys.readouterr().err


def test_cli_denoise_malformed(tmp_path, capsys):
    (tmp_path / "y2.txt").write_text("2 2\n1 2\n")
    write_matrix(tmp_path / "l1.txt", np.eye(2))
    cfg = tmp_path / "d.cfg"
    cfg.write_text(f"y2 = {tmp_path / 'y2.txt'}\nl1 = {tmp_path / 'l1.txt'}\n")
    assert main(["denoise", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "y2.txt:3:" in capsys.readouterr().err


def test_cli_failure_threshold(tmp_path, monkeypatch):
    monkeypatch.setattr(harness, "generate_instance", lambda spec, trial: 1 / 0)
    cfg = tmp_path / "c.cfg"
    cfg.write_text("n2_grid = 30\n")
    assert main(["cov", "--config", str(cfg), "--trials", "2", "--out", str(tmp_path / "o")]) == 1
