import csv
import json

import pytest

from skewmix import cli
from skewmix.config import load_config, parse_config, parse_range
from skewmix.errors import ConfigError


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr().out.strip().splitlines()[-1]
    return code, json.loads(out)


def test_parse_range():
    assert parse_range("1..8") == [float(k) for k in range(1, 9)]
    assert parse_range("1,4,9") == [1.0, 4.0, 9.0]
    assert parse_range("500") == [500.0]
    with pytest.raises(ConfigError):
        parse_range("a..b")


def test_config_preset_and_custom(tmp_path):
    cfg = parse_config({"preset": "tripling_cos", "experiment": {"b": [2.0]}})
    assert cfg.skew.name == "tripling_cos" and cfg.experiment["b"] == [2.0]
    custom = {
        "map": {"pieces": [{"lo": 0, "hi": 1, "poly": [0, 3]}]},
        "roof": {"pieces": [{"lo": 0, "hi": 1, "trig": [[1.0, 1, 0.25]]}], "sup_derivative": 6.283185307179586},
        "constants": {"lambda": 1.0986122886681098, "alpha": 1.0, "D": 0.0},
    }
    path = tmp_path / "c.json"
    path.write_text(json.dumps(custom))
    skew = load_config(path).skew
    assert skew.lam == pytest.approx(1.0986122886681098)
    assert skew.c_tau == pytest.approx(6.283185307179586 / 2)


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        parse_config({"preset": "nope"})
    with pytest.raises(ConfigError):
        parse_config({"map": "doubling"})
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_unknown_preset_exit(tmp_path, capsys):
    code, doc = run(["decay", "--preset", "nope", "--out", str(tmp_path)], capsys)
    assert code == 2 and doc["error"] == "config"


def test_no_source_exit(tmp_path, capsys):
    code, doc = run(["spectrum", "--out", str(tmp_path)], capsys)
    assert code == 2 and doc["error"] == "config"


def test_families_infeasible_exit(tmp_path, capsys):
    code, doc = run(["families", "--preset", "doubling_cos", "--out", str(tmp_path)], capsys)
    assert code == 2 and doc["error"] == "infeasible_parameters"


def test_spectrum(tmp_path, capsys):
    code, doc = run(["spectrum", "--preset", "doubling_cos", "--b", "1..3", "--resolution", "1024",
                     "--out", str(tmp_path)], capsys)
    assert code == 0 and doc["checks"]["all_below_1"]
    rows = json.loads((tmp_path / "spectrum.json").read_text())
    assert [r["b"] for r in rows] == [1.0, 2.0, 3.0]
    assert json.loads((tmp_path / "summary.json").read_text())["command"] == "spectrum"


def test_transversality_coboundary(tmp_path, capsys):
    code, doc = run(["transversality", "--preset", "coboundary", "--nmax", "8", "--out", str(tmp_path)], capsys)
    assert code == 0 and doc["checks"]["verdict"] == "cohomologous-suspected"
    w = json.loads((tmp_path / "witness.json").read_text())
    assert w["verdict"] == "cohomologous-suspected"
    assert w["cohomology"]["verdict"] == "cohomologous-suspected"


def test_decay(tmp_path, capsys):
    code, doc = run(["decay", "--preset", "doubling_cos", "--nmax", "12", "--resolution", "1024",
                     "--out", str(tmp_path)], capsys)
    assert code == 0
    assert doc["checks"]["bound_n10"]
    with open(tmp_path / "decay.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 13 and rows[10]["bound"] != ""
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert set(fit) >= {"C", "gamma3", "r2", "verdict"}


def test_cancel_small(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"preset": "doubling_cos", "experiment": {
        "b": [16.0], "delta": 0.125, "eps0": 1.0, "a": 7.0, "B": 4.0, "resolution": 1024}}))
    code, doc = run(["cancel", "--config", str(cfg), "--out", str(tmp_path)], capsys)
    assert code == 0 and all(doc["checks"].values())
    rep = json.loads((tmp_path / "reduction.json").read_text())
    assert rep["gamma1"] > 0
    assert (tmp_path / "reduction.csv").read_text().startswith("k,old_weight")
