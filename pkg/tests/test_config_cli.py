import numpy as np
import pytest

from fracpatch import ConfigurationError, RunConfig, parse_config
from fracpatch import io
from fracpatch.cli import main, verdict_line
from fracpatch.config import parse_config_text


def test_defaults():
    cfg = parse_config_text("")
    assert cfg == RunConfig()
    assert cfg.operator_spec.s == 0.75


def test_sectioned_and_top_level_keys():
    cfg = parse_config_text("s = 0.6\n[grid]\nL = 16\nN = 257\n[operator]\nnormalization = PaperConstant\n")
    assert cfg.operator.s == 0.6
    assert (cfg.grid.L, cfg.grid.N) == (16.0, 257)
    assert cfg.operator.normalization == "paper"


@pytest.mark.parametrize("text, fragment", [
    ("[operator]\ns = 0.4\n", "operator.s: s must lie in (0.5, 1)"),
    ("[model]\np = 0.5\n", "model.p: p ≥ 1"),
    ("[grid]\nN = 2.5\n", "grid.N"),
    ("[grid]\nfoo = 1\n", "grid.foo: unknown key"),
    ("[nonsense]\nx = 1\n", "unknown section"),
    ("bogus = 1\n", "bogus: unknown key"),
    ("[operator]\ndrift_scheme = sideways\n", "operator.drift_scheme"),
])
def test_invalid_configs_name_the_key(text, fragment):
    with pytest.raises(ConfigurationError) as info:
        parse_config_text(text)
    assert fragment in str(info.value)


def test_effective_config_round_trip(tmp_path, monkeypatch):
    monkeypatch.setenv("FRACPATCH_OUTPUT_DIR", str(tmp_path / "out"))
    path = tmp_path / "run.ini"
    path.write_text("[grid]\nL = 8\nN = 129\n[eigen]\nR_schedule = 2, 4, 8\n")
    cfg = parse_config(path)
    echoed = (tmp_path / "out" / "config_effective.ini").read_text()
    assert parse_config_text(echoed) == cfg
    assert cfg.eigen.R_schedule == (2.0, 4.0, 8.0)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigurationError):
        parse_config(tmp_path / "nope.ini")


def test_verdict_line():
    assert verdict_line(-0.25).endswith("predicted outcome = Persist (dichotomy)")
    assert "Extinct" in verdict_line(0.0)


@pytest.fixture
def small_run(tmp_path, monkeypatch):
    out = tmp_path / "out"
    monkeypatch.setenv("FRACPATCH_OUTPUT_DIR", str(out))
    cfg = tmp_path / "run.ini"
    cfg.write_text("[grid]\nL = 16\nN = 257\n[sim]\nT_max = 40\nsnapshot_stride = 100\n"
                   "[thresholds]\nc_max = 6\nn_scan = 7\n[eigen]\nR_schedule = 4, 8, 16\n")
    return cfg, out


@pytest.mark.parametrize("command, files", [
    (["symbol-check"], ["symbol.csv"]),
    (["eigen"], ["eigen.csv", "phi.csv"]),
    (["eigen-line"], ["eigen_line.csv"]),
    (["evolve"], ["manifest.csv"]),
    (["wave"], ["wave_below.csv", "wave_above.csv"]),
    (["thresholds"], ["lambda_of_c.csv"]),
    (["hypotheses"], []),
    (["bench-matvec", "--N", "512", "--repeats", "1"], ["bench.csv"]),
])
def test_cli_subcommands(small_run, capsys, command, files):
    cfg, out = small_run
    assert main(command + ["--config", str(cfg)]) == 0
    name = command[0].replace("-", "_")
    assert (out / f"{name}_summary.txt").exists()
    assert (out / "config_effective.ini").exists()
    for f in files:
        assert (out / f).exists()
    assert capsys.readouterr().out


def test_cli_eigen_prints_verdict(small_run, capsys):
    cfg, _ = small_run
    assert main(["eigen", "--config", str(cfg)]) == 0
    assert "predicted outcome = Persist (dichotomy)" in capsys.readouterr().out


def test_cli_tail_fit_from_saved_profile(small_run, capsys):
    cfg, out = small_run
    assert main(["wave", "--config", str(cfg)]) == 0
    assert main(["tail-fit", "--config", str(cfg), "--profile", str(out / "wave_above.csv")]) == 0
    text = (out / "tail_fit.csv").read_text().splitlines()
    assert text[0] == "side,x_lo,x_hi,slope,stderr"
    assert {line.split(",")[0] for line in text[1:]} == {"Left", "Right"}


def test_cli_barrier_check(small_run):
    cfg, out = small_run
    assert main(["barrier-check", "--config", str(cfg)]) == 0
    assert "certified = True" in (out / "barrier_check_summary.txt").read_text()


def test_cli_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[operator]\ns = 2\n")
    assert main(["eigen", "--config", str(bad)]) == 1
    assert "operator.s" in capsys.readouterr().err


def test_snapshot_manifest_round_trip(small_run):
    cfg, out = small_run
    assert main(["evolve", "--config", str(cfg)]) == 0
    lines = (out / "manifest.csv").read_text().splitlines()
    assert lines[0] == "t,filename"
    t, name = lines[-1].split(",")
    snap = io.read_field(out / name)
    assert snap.grid.n_points == 257
    assert np.all(snap.values >= 0)
