import json

import pytest

from csiauth import cli
from csiauth.cli import build_parser, main, parse_snr_grid, resolve_config


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture()
def fast_config(tmp_path):
    """Small grid and short training so pipeline commands stay quick."""
    cfg = {
        "snr_grid": "0:8:4",
        "gan": {"max_epochs": 2},
        "detectors": {"iforest_trees": 20, "iforest_subsample": 64},
        "analytic_trials": 3,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_parse_snr_grid():
    assert parse_snr_grid("0:30:2") == tuple(float(s) for s in range(0, 31, 2))
    assert parse_snr_grid("0:8:4") == (0.0, 4.0, 8.0)
    with pytest.raises(Exception):
        parse_snr_grid("5:1:2")
    with pytest.raises(Exception):
        parse_snr_grid("nope")


def test_help_documents_global_flags(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["--help"])
    text = capsys.readouterr().out
    for flag in ("--seed", "--out", "--config", "--jobs", "--pooled", "--snr-grid", "--z-mult"):
        assert flag in text
    for command in ("gen", "train", "fit-detector", "eval", "analytic", "report"):
        assert command in text


def test_subcommand_help_has_global_flags(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["gen", "--help"])
    text = capsys.readouterr().out
    for flag in ("--seed", "--snr-grid", "--z-mult"):
        assert flag in text


def test_config_precedence(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps({"seed": 11, "jobs": 3, "snr_grid": "0:4:2"}))
    parser = build_parser()
    args = parser.parse_args(["gen", "--config", str(cfg_path), "--seed", "99"])
    rc = resolve_config(args)
    assert rc.seed == 99  # CLI wins
    assert rc.jobs == 3  # file wins over default
    assert rc.snr_grid == (0.0, 2.0, 4.0)
    args2 = parser.parse_args(["gen"])
    assert resolve_config(args2).seed == cli.DEFAULT_SEED


def test_out_dir_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv("CSIAUTH_OUT", str(tmp_path / "envout"))
    args = build_parser().parse_args(["analytic"])
    assert resolve_config(args).out_dir == tmp_path / "envout"


def test_no_command_prints_help(capsys):
    assert main([]) == 2
    assert "COMMAND" in capsys.readouterr().out


def test_gen_writes_and_validates(tmp_path, fast_config):
    out = tmp_path / "run"
    assert run_cli("gen", "--config", fast_config, "--out", out, "--seed", "5") == 0
    for name in ("master", "train", "test", "test_accidental", "test_nefarious"):
        assert (out / "datasets" / f"{name}.csv").exists()
        assert (out / "datasets" / f"{name}.manifest.json").exists()
    doc = json.loads((out / "datasets" / "master.manifest.json").read_text())
    assert doc["seed"] == 5
    assert doc["counts"]["0"]["legitimate"] == 1000


def test_gen_is_deterministic(tmp_path, fast_config):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("gen", "--config", fast_config, "--out", a, "--seed", "5") == 0
    assert run_cli("gen", "--config", fast_config, "--out", b, "--seed", "5") == 0
    for f in sorted((a / "datasets").iterdir()):
        assert f.read_bytes() == (b / "datasets" / f.name).read_bytes()


def test_train_and_eval_pipeline(tmp_path, fast_config, capsys):
    out = tmp_path / "run"
    assert run_cli("gen", "--config", fast_config, "--out", out) == 0

    # eval without models fails, naming what to run
    assert run_cli("eval", "--config", fast_config, "--out", out) == 1
    err = capsys.readouterr().err
    assert "csiauth train" in err

    assert run_cli("train", "--config", fast_config, "--out", out) == 0
    ckpts = sorted((out / "models").glob("gan_snr*.json"))
    reports = sorted((out / "models").glob("gan_snr*_train_report.csv"))
    assert len(ckpts) == 3 and len(reports) == 3

    assert run_cli("eval", "--config", fast_config, "--out", out) == 1
    err = capsys.readouterr().err
    assert "fit-detector" in err

    for algo in ("lof", "iforest", "ocsvm"):
        assert run_cli("fit-detector", "--algo", algo, "--config", fast_config, "--out", out) == 0
        assert len(list((out / "models").glob(f"{algo}_snr*.json"))) == 3

    assert run_cli("eval", "--config", fast_config, "--out", out) == 0
    for ds in ("accidental", "nefarious"):
        acc_csv = out / "reports" / ds / "accuracy.csv"
        lines = acc_csv.read_text().splitlines()
        methods = {ln.split(",")[0] for ln in lines[1:]}
        assert methods == {
            "gan", "lof", "iforest", "ocsvm",
            "hypothesis-z1", "hypothesis-z3", "hypothesis-z5", "hypothesis-z6",
        }
        assert len(lines) == 1 + 8 * 3
        assert (out / "reports" / ds / "accuracy.svg").exists()

    # report stage regenerates byte-identical outputs from confusion files
    before = (out / "reports" / "accidental" / "accuracy.csv").read_bytes()
    assert run_cli("report", "--config", fast_config, "--out", out) == 0
    assert (out / "reports" / "accidental" / "accuracy.csv").read_bytes() == before


def test_train_pooled_single_checkpoint(tmp_path, fast_config):
    out = tmp_path / "run"
    assert run_cli("gen", "--config", fast_config, "--out", out) == 0
    assert run_cli("train", "--pooled", "--config", fast_config, "--out", out) == 0
    assert (out / "models" / "gan_pooled.json").exists()
    assert len(list((out / "models").glob("gan_pooled*.json"))) == 1


def test_train_missing_dataset_errors(tmp_path, capsys):
    assert run_cli("train", "--out", tmp_path / "nowhere") == 1
    assert "csiauth gen" in capsys.readouterr().err


def test_report_without_eval_errors(tmp_path, capsys):
    assert run_cli("report", "--out", tmp_path / "empty") == 1
    assert "csiauth eval" in capsys.readouterr().err


def test_analytic_sweep_csv(tmp_path, fast_config):
    out = tmp_path / "run"
    assert run_cli("analytic", "--config", fast_config, "--out", out, "--seed", "3") == 0
    path = out / "analytic" / "auth_probability_sweep.csv"
    lines = path.read_text().splitlines()
    assert lines[0] == "n_rx,m_tx,multiplier,probability"
    assert len(lines) == 1 + 4 * 6  # configs x multipliers
    values = {}
    for ln in lines[1:]:
        n, m, mult, p = ln.split(",")
        values[(int(n), float(mult))] = float(p)
    for mult in (1.0, 2.0, 3.0):
        assert values[(1, mult)] > values[(2, mult)] > values[(4, mult)] > values[(8, mult)]


def test_jobs_flag_gives_same_results(tmp_path, fast_config):
    a, b = tmp_path / "a", tmp_path / "b"
    for out, jobs in ((a, "1"), (b, "4")):
        assert run_cli("gen", "--config", fast_config, "--out", out) == 0
        assert run_cli("train", "--config", fast_config, "--out", out, "--jobs", jobs) == 0
    for f in sorted((a / "models").glob("*.json")):
        assert f.read_bytes() == (b / "models" / f.name).read_bytes()
