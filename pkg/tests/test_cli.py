import numpy as np
import pytest

from exdyna import cli
from exdyna.core import CSV_COLUMNS

SMALL = ["--workers", "4", "--gradients", "20000", "--density", "0.01", "--iters", "25",
         "--blocks", "64", "--seed", "7"]


def test_parse_config_text():
    text = "# comment\nworkers = 4\nblk_move = 2   # inline\ndelta0 = none\nstatic-partitions = yes\n\n"
    assert cli.parse_config_text(text) == {"workers": 4, "blk-move": 2, "delta0": None,
                                           "static-partitions": True}


@pytest.mark.parametrize("text", ["workers 4", "colour = red", "workers = four"])
def test_parse_config_errors(text):
    with pytest.raises(cli.ConfigError):
        cli.parse_config_text(text)


def test_config_round_trip():
    settings = {name: default for name, (_, default) in cli.OPTIONS.items()}
    settings.update(alpha=1.3, gradients=12345, workload="logistic", **{"static-partitions": True})
    assert cli.parse_config_text(cli.format_config_text(settings)) == settings


def test_flags_override_config(tmp_path):
    conf = tmp_path / "c.txt"
    conf.write_text("workers = 3\ndensity = 0.05\n")
    ns = cli.make_parser().parse_args(["run", "--config", str(conf), "--workers", "6"])
    s = cli.resolve_settings(ns)
    assert s["workers"] == 6 and s["density"] == 0.05 and s["alpha"] == 1.1


def test_run_writes_csv_and_summary(tmp_path):
    out = tmp_path / "run.csv"
    assert cli.main(["run", *SMALL, "--out", str(out)]) == 0
    rows = cli.read_csv(out)
    assert len(rows) == 25
    assert tuple(rows[0]) == CSV_COLUMNS
    assert [int(r["t"]) for r in rows] == list(range(25))
    summary = out.with_suffix(".summary.txt").read_text()
    assert "exdyna-ledger/1" in summary and "workers = 4" in summary


def test_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cli.main(["run", *SMALL, "--out", str(a)])
    cli.main(["run", *SMALL, "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_single_worker_topk_has_no_build_up(tmp_path):
    out = tmp_path / "t.csv"
    cli.main(["run", "--sparsifier", "topk", "--workers", "1", "--gradients", "5000",
              "--density", "0.01", "--iters", "5", "--blocks", "64", "--out", str(out)])
    assert {r["k_prime"] for r in cli.read_csv(out)} == {"50"}


def test_logistic_workload_records_loss(tmp_path):
    out = tmp_path / "l.csv"
    cli.main(["run", "--workload", "logistic", "--workers", "2", "--gradients", "512",
              "--density", "0.05", "--iters", "20", "--blocks", "16", "--out", str(out)])
    losses = [float(r["loss"]) for r in cli.read_csv(out)]
    assert losses[-1] < losses[0]


def test_invalid_config_exits_2(capsys):
    assert cli.main(["run", "--workers", "4", "--blocks", "4", "--gradients", "4096"]) == 2
    assert "n_b < n·min_blk" in capsys.readouterr().err


def test_compare_needs_two(capsys):
    assert cli.main(["compare", "exdyna", *SMALL]) == 2
    assert "at least two" in capsys.readouterr().err


def test_compare_static_vs_dynamic(tmp_path, capsys):
    assert cli.main(["compare", "exdyna", "exdyna-static", *SMALL, "--out-dir", str(tmp_path)]) == 0
    table = capsys.readouterr().out
    assert "exdyna-static" in table
    dyn = np.mean([float(r["f_t"]) for r in cli.read_csv(tmp_path / "exdyna.csv")])
    sta = np.mean([float(r["f_t"]) for r in cli.read_csv(tmp_path / "exdyna-static.csv")])
    assert dyn >= 1.0 and sta >= 1.0
