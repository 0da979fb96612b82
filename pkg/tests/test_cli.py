import csv
import json

import numpy as np
import pytest

from parahedge import ContractError
from parahedge.cli import main
from parahedge.config import from_dict, load_config

CORRELATED = {
    "model": {"family": "constant", "params": {"A": [[1.0, 0.3], [0.3, 1.0]], "b": [0.0, 0.0]}},
    "domain": {"gamma": [1.0, 0.0], "k": 0.0},
    "x0": [1.0, 0.0],
    "montecarlo": {"n_paths": 300, "n_steps": 32},
    "verify": {"symmetry_samples": 200},
    "bounds": {"model_samples": 300},
}


def _write(tmp_path, name, blob):
    path = tmp_path / name
    path.write_text(json.dumps(blob))
    return str(path)


def test_defaults_merge_and_overrides():
    cfg = from_dict({"T": 2.0}, {"montecarlo.seed": 7})
    assert cfg.raw["T"] == 2.0 and cfg.raw["montecarlo"]["seed"] == 7
    assert cfg.paths().n_paths == 10000
    assert cfg.config_hash() == from_dict({"T": 2.0}, {"montecarlo.seed": 7}).config_hash()


@pytest.mark.parametrize("blob, field", [
    ({"modle": {}}, "modle"),
    ({"payoff": {"family": "foo"}}, "payoff.family"),
    ({"model": {"family": "bar"}}, "model.family"),
    ({"T": -1.0}, "T"),
    ({"montecarlo": {"n_paths": 5}}, "montecarlo"),
    ({"domain": {"gamma": [1.0, 0.0], "k": 0.0}}, "x0"),
])
def test_validation_names_the_field(blob, field):
    with pytest.raises(ContractError, match=field):
        from_dict(blob)


def test_shipped_configs_load():
    for name in ("bm_1d", "drift_1d", "rotated_2d"):
        cfg = load_config(f"configs/{name}.json")
        assert cfg.model().d == cfg.domain().d


def test_verify_passes_and_report_is_reproducible(tmp_path):
    cfg = _write(tmp_path, "c.json", CORRELATED)
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    first = (tmp_path / "a" / "report.json").read_bytes()
    assert first == (tmp_path / "b" / "report.json").read_bytes()
    report = json.loads(first)
    assert report["summary"]["ERROR"] == 0 and report["summary"]["TOLERANCE"] == 0
    # degenerate checks do not apply to a correlated model
    assert {r["check"]: r["status"] for r in report["records"]}["degenerate_h0"] == "SKIP"
    consts = json.loads((tmp_path / "a" / "constants.json").read_text())
    assert consts["constants"]["C13"] is None


def test_missed_tolerance_gives_exit_two(tmp_path):
    blob = dict(CORRELATED, tolerances={"parametrix_rel": 1e-16})
    assert main(["verify", "--config", _write(tmp_path, "c.json", blob), "--out", str(tmp_path / "o")]) == 2


def test_bad_config_gives_exit_one(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.json", {"payoff": {"family": "foo"}})
    assert main(["price", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "payoff.family" in capsys.readouterr().err
    assert main(["price", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 1


def test_price_writes_paths_csv(tmp_path):
    blob = {"montecarlo": {"n_paths": 200, "n_steps": 32, "dump_paths": 5}, "bounds": {"model_samples": 200}}
    out = tmp_path / "o"
    assert main(["price", "--config", _write(tmp_path, "p.json", blob), "--out", str(out), "--seed", "3"]) == 0
    with open(out / "paths.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) > 1
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["montecarlo"]["seed"] == 3


def test_kernel_dump(tmp_path):
    out = tmp_path / "k"
    assert main(["kernel-dump", "--config", "configs/drift_1d.json", "--out", str(out)]) == 0
    with open(out / "kernels.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 75
    assert all(np.isfinite(float(r["p"])) for r in rows)
