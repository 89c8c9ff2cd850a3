import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from threadpoolctl import threadpool_limits

from rmda import cli, config, runner
from rmda.config import ConfigError, ExperimentConfig


def _small(**changes):
    cfg = config.load_preset("synthetic-logreg")
    base = dict(epochs=4, data={**cfg.data, "n": 200, "n_val": 100},
                optimizer={**cfg.optimizer.to_dict(), "restart_epochs": [2]})
    base.update(changes)
    return cfg.replace(**base)


def test_presets_load():
    names = config.list_presets()
    assert {"synthetic-logreg", "synthetic-logreg-proxsgd", "mnist-logreg"} <= set(names)
    for name in names:
        assert config.parse(config.serialize(config.load_preset(name))) == config.load_preset(name)
    with pytest.raises(ConfigError):
        config.load_preset("nope")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 500), st.floats(1e-6, 1.0),
       st.sampled_from(["rmda", "rda", "proxsgd", "msgd"]), st.floats(0.0, 0.99))
def test_config_round_trip(seed, epochs, lam, kind, mom):
    cfg = ExperimentConfig(seed=seed, epochs=epochs,
                           regularizer={"kind": "group_lasso", "lam": lam})
    cfg.optimizer.kind = kind
    cfg.optimizer.momentum = mom
    cfg.validate()
    assert config.parse(config.serialize(cfg)) == cfg


def test_config_errors():
    with pytest.raises(ConfigError, match="seed"):
        config.parse("epochs: 3\n")
    with pytest.raises(ConfigError, match="unknown config keys"):
        config.parse("seed: 1\nepoch: 3\n")
    with pytest.raises(ConfigError, match="unknown optimizer keys"):
        config.parse("seed: 1\noptimizer: {kind: rmda, lr: 0.1}\n")
    with pytest.raises(ConfigError):
        config.parse("seed: 1\nepochs: 5\noptimizer: {kind: rmda, restart_epochs: [3, 2]}\n")
    with pytest.raises(ConfigError):
        config.parse("seed: [1\n")


def test_one_epoch_gives_one_record():
    records = runner.run_experiment(_small(epochs=1, optimizer={"kind": "rmda"}))
    assert len(records) == 1 and records[0].epoch == 0


def test_restart_resets_dual_state():
    seen = []
    runner.run_experiment(_small(), on_step=lambda e, s: seen.append((e, s.t, s.alpha)))
    per_epoch = 200 // 50
    first_of = {e: next(x for x in seen if x[0] == e) for e in range(4)}
    assert first_of[2][1] == 1                      # t restarts at the restart epoch
    assert first_of[2][2] == pytest.approx(0.1 * 0.1 ** 0)   # alpha = eta(2) * beta_1
    assert first_of[1][1] == per_epoch + 1          # no restart at epoch 1
    assert first_of[3][1] == per_epoch + 1


def test_byte_identical_logs(tmp_path):
    log = tmp_path / "run.jsonl"          # the path is part of the logged config
    cfg = _small(output=str(log))
    runs = []
    for threads in (1, 1, 4):
        with threadpool_limits(limits=threads):
            runner.run_experiment(cfg)
        runs.append(log.read_bytes())
    assert runs[0] == runs[1] == runs[2]
    lines = [json.loads(line) for line in log.read_text().splitlines()]
    assert [x["type"] for x in lines] == ["header"] + ["epoch"] * 4 + ["summary"]


def test_iterates_agree_at_convergence():
    """At the end of the synthetic preset ||W - W~|| is below 1e-4 (1 + ||W||)."""
    final = {}
    runner.run_experiment(config.load_preset("synthetic-logreg"),
                          on_epoch=lambda e, s: final.update(W=s.W, Wt=s.Wtilde))
    W = final["W"]
    assert np.linalg.norm(W - final["Wt"]) < 1e-4 * (1 + np.linalg.norm(W))


def test_compare_and_table(tmp_path):
    good = tmp_path / "good.jsonl"
    runner.run_experiment(_small(output=str(good)))
    (tmp_path / "empty.jsonl").write_text("")
    (tmp_path / "bad.jsonl").write_text("{not json\n")
    rows = runner.compare([good, tmp_path / "empty.jsonl", tmp_path / "bad.jsonl",
                           tmp_path / "missing.jsonl"])
    assert rows[0]["error"] is None and rows[0]["epochs_logged"] == 4
    assert all(r["error"] for r in rows[1:])
    table = runner.format_table(rows).splitlines()
    assert table[0].split() == ["run", "optimizer", "final_val_accuracy",
                                "final_group_sparsity", "pattern_stable", "error"]
    assert len(table) == 5
    assert runner.compare([]) == []


def _yaml(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(config.serialize(cfg))
    return str(p)


def test_cli_exit_codes(tmp_path, capsys):
    log = tmp_path / "run.jsonl"
    assert cli.main(["run", _yaml(tmp_path, _small(epochs=2, optimizer={"kind": "rmda"})),
                     "--out", str(log)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["epochs_logged"] == 2 and log.exists()

    bad = tmp_path / "bad.yaml"
    bad.write_text("seed: 1\nepochs: 0\n")
    assert cli.main(["run", str(bad)]) == 2
    assert cli.main(["run", str(tmp_path / "absent.yaml")]) == 2

    idx = _small(data={"source": "idx", "train_images": str(tmp_path / "x"),
                       "train_labels": str(tmp_path / "y")}, grouping={"train": "column"})
    assert cli.main(["run", _yaml(tmp_path, idx, "idx.yaml")]) == 3

    # the loss is overflow-safe, so only a step that leaves the float range fails
    boom = _small(optimizer={"kind": "msgd", "momentum": 0.9,
                             "eta": {"kind": "constant", "base": 1.7e308}})
    with np.errstate(all="ignore"):
        assert cli.main(["run", _yaml(tmp_path, boom, "boom.yaml")]) == 4

    assert cli.main(["compare", str(log)]) == 0
    assert "synthetic-logreg" in capsys.readouterr().out


def test_cli_validate_schedule(tmp_path, capsys):
    # the 1e-5 floor only dominates alpha after ~2e5 steps, so use the full horizon
    assert cli.main(["validate-schedule", "synthetic-logreg"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["steps_per_epoch"] == 20 and report["passed"]
    grow = _small(optimizer={"kind": "rmda",
                             "eta": {"kind": "multistep", "base": 0.1, "period": 1,
                                     "factor": 1.01}})
    assert cli.main(["validate-schedule", _yaml(tmp_path, grow), "--horizon", "100000"]) == 1


def test_cli_gen_data(tmp_path, capsys):
    out = tmp_path / "d.npz"
    assert cli.main(["gen-data", "synthetic-logreg", "--out", str(out)]) == 0
    with np.load(out) as z:
        assert z["inputs"].shape == (1000, 50) and z["truth_pattern"].sum() == 5
    idx = config.load_preset("mnist-logreg")
    assert cli.main(["gen-data", _yaml(tmp_path, idx)]) == 2


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "rmda", "--help"], capture_output=True, text=True)
    assert done.returncode == 0 and "validate-schedule" in done.stdout
