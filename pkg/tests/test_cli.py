import csv
import json
import math

import pytest

from spikepgd.cli import main
from spikepgd.config import ConfigError, config_from_dict, load_config, parse_config_text

TINY = """\
# a minute-free configuration
n_train = 60
n_test = 20
classes = 4
image_size = 8
channels = 1
width = 4
train_epochs = 2
epsilon = 8/255
iterations = 3
t0 = 3
"""


def _write(tmp_path, extra="", name="cfg.txt"):
    path = tmp_path / name
    path.write_text(TINY + extra)
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _no_nan(rows):
    for row in rows[1:]:
        for cell in row:
            try:
                assert not math.isnan(float(cell))
            except ValueError:
                pass


def test_parse_config_text():
    got = parse_config_text("a = 1\n# note\n  b=x y # trailing\n\n")
    assert got == {"a": "1", "b": "x y"}
    with pytest.raises(ConfigError):
        parse_config_text("just words")
    with pytest.raises(ConfigError):
        parse_config_text("a = 1\na = 2")


def test_config_values():
    cfg = config_from_dict({"epsilon": "8/255", "rho_grid": "0, 0.01", "t_grid": "1,2", "surrogate": "no"}, task="pareto")
    assert cfg.epsilon == 8 / 255
    assert cfg.rho_grid == [0.0, 0.01]
    assert cfg.t_grid == [1, 2]
    assert cfg.surrogate is False
    with pytest.raises(ConfigError):
        config_from_dict({"colour": "red"})
    with pytest.raises(ConfigError):
        config_from_dict({"iterations": "many"})
    with pytest.raises(ConfigError):
        config_from_dict({"checkpoint": "/no/such/file.npz"})
    with pytest.raises(ConfigError):
        config_from_dict({"rho_grid": ""}, task="pareto")
    with pytest.raises(ConfigError):
        config_from_dict({"task": "dance"})


def test_pareto_equivalence_and_row_count(tmp_path):
    cfg = _write(tmp_path, "rho_grid = 0\nt_grid = 3\n")
    out = tmp_path / "out"
    assert main(["pareto", "--config", str(cfg), "--out", str(out)]) == 0
    rows = _rows(out / "pareto.csv")
    assert rows[0][:2] == ["method", "rho"]
    assert len(rows) - 1 == 1 * 3 + 1
    by = {r[0]: r for r in rows[1:]}
    h = rows[0]
    cost, acc = h.index("relative_cost_pct"), h.index("accuracy_under_attack")
    assert float(by["pgd"][cost]) == float(by["spiking_pgd"][cost]) == 100.0
    assert by["pgd"][acc] == by["spiking_pgd"][acc]
    _no_nan(rows)


def test_pareto_row_count(tmp_path):
    cfg = _write(tmp_path, "rho_grid = 0, 0.01, 0.05\nt_grid = 1, 2\n")
    out = tmp_path / "out"
    assert main(["pareto", "--config", str(cfg), "--out", str(out)]) == 0
    assert len(_rows(out / "pareto.csv")) - 1 == 2 * 3 + 3


def test_manifest_echoes_config(tmp_path):
    cfg = _write(tmp_path, "method = spiking_pgd\nrho = 0.02\n")
    out = tmp_path / "out"
    assert main(["attack", "--config", str(cfg), "--out", str(out), "--seed", "4"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"] == parse_config_text(cfg.read_text())
    assert manifest["seed"] == 4
    assert manifest["task"] == "attack"
    assert set(manifest["outputs"]) == {"attack.csv", "ledger.csv"}
    assert "numpy" in manifest["versions"]
    assert manifest["failures"] == []


@pytest.mark.parametrize("task", ["train", "attack", "redundancy", "maskopt", "advtrain"])
def test_tasks_write_clean_csvs(tmp_path, task):
    cfg = _write(tmp_path, "mask_instances = 2\nat_epochs = 2\neval_iterations = 2\n")
    out = tmp_path / "out"
    assert main([task, "--config", str(cfg), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    for name in manifest["outputs"]:
        if name.endswith(".csv"):
            rows = _rows(out / name)
            assert len(rows) >= 2
            assert all(len(r) == len(rows[0]) for r in rows)
            _no_nan(rows)


def test_rerun_is_reproducible(tmp_path):
    cfg = _write(tmp_path, "rho_grid = 0, 0.02\nt_grid = 1, 3\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["pareto", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["pareto", "--config", str(cfg), "--out", str(b)]) == 0
    assert (a / "pareto.csv").read_bytes() == (b / "pareto.csv").read_bytes()


def test_checkpoint_reuse(tmp_path):
    cfg = _write(tmp_path)
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "m")]) == 0
    cfg2 = _write(tmp_path, f"checkpoint = {tmp_path / 'm' / 'model.npz'}\n", name="cfg2.txt")
    assert load_config(cfg2).checkpoint.endswith("model.npz")
    assert main(["attack", "--config", str(cfg2), "--out", str(tmp_path / "a")]) == 0


def test_error_exit_codes(tmp_path, capsys):
    assert main(["attack", "--config", str(tmp_path / "missing.txt")]) == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("spikepgd: error:") and "\n" not in err
    bad = _write(tmp_path, "method = teleport\n")
    out = tmp_path / "out"
    assert main(["attack", "--config", str(bad), "--out", str(out)]) == 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["failures"] and "teleport" in manifest["failures"][0]
    with pytest.raises(SystemExit):
        main(["dance", "--config", str(bad)])
