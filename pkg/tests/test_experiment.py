import csv
import json
import time

import numpy as np
import pytest

from dtsync import cli, sac
from dtsync import experiment as ex
from dtsync.baselines import SacPolicy
from dtsync.config import ConfigError, ExperimentConfig, SystemConfig, TrainConfig, load_config, parse_config
from dtsync.dynamics import POLICY_TAG, make_rng

SMOKE_TEXT = """
[system]
num_uds = 2
num_slots = 10

[train]
n_epoch = 1
n_step = 500
"""


# --------------------------------------------------------------------------- config

def test_empty_config_gives_table_defaults(tmp_path):
    path = tmp_path / "empty.ini"
    path.write_text("")
    cfg = load_config(path)
    assert cfg == ExperimentConfig()
    assert cfg.train.gamma == 0.99
    assert cfg.train.lr == 1e-4
    assert cfg.train.batch_size == 256
    assert cfg.train.buffer_size == 1_000_000
    assert cfg.train.target_sync_every == 320
    assert (cfg.train.n_epoch, cfg.train.n_step) == (20, 5000)
    assert cfg.system.penalty_w == 10
    assert cfg.system.bandwidth == 0.2e6
    assert cfg.system.num_uds == 6 and cfg.system.num_slots == 25
    assert cfg.system.deadline == pytest.approx(0.9)
    assert load_config(None) == cfg


def test_log_unit_aliases():
    cfg = parse_config("[system]\nbeta0_db = -30\nnoise_power_dbm = -80\n")
    assert cfg.system.beta0 == pytest.approx(1e-3)
    assert cfg.system.noise_power == pytest.approx(1e-11)


@pytest.mark.parametrize("text,line,needle", [
    ("[system]\neta = 1.5\n", 2, "eta"),
    ("[system]\nnum_uds = 3\nd_min = 0.9e6\n", 3, "d_min"),
    ("\n[train]\nlr = 1e-3\nlearning_rate = 2\n", 4, "learning_rate"),
    ("[train]\nbatch_size = many\n", 2, "batch_size"),
    ("[experiment]\npolicy = ppo\n", 2, "policy"),
    ("[physics]\nx = 1\n", 1, "physics"),
])
def test_config_errors_name_the_line(text, line, needle):
    with pytest.raises(ConfigError) as err:
        parse_config(text, source="exp.ini")
    msg = str(err.value)
    assert f"exp.ini:{line}:" in msg
    assert needle in msg


def test_config_overrides_round_trip():
    cfg = parse_config("""
[system]
num_uds = 4
phi_min = 0.5
[train]
hidden = 32
target_entropy = -3
[experiment]
seed = 9
policy = greedy
sweep_axis = K
sweep_values = 2, 4, 6
""")
    assert cfg.system.num_uds == 4 and cfg.system.phi_min == 0.5
    assert cfg.train.hidden == 32 and cfg.train.target_entropy == -3.0
    assert cfg.seed == 9 and cfg.policy == "greedy"
    assert cfg.sweep_values == (2.0, 4.0, 6.0)


# --------------------------------------------------------------------------- training

def smoke_cfg(**kw):
    return parse_config(SMOKE_TEXT).replace(**kw)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_smoke_training_run(tmp_path):
    start = time.perf_counter()
    assert ex.run_training(smoke_cfg(seed=1), tmp_path / "a") == 0
    assert time.perf_counter() - start < 60
    rows = read_csv(tmp_path / "a" / "metrics.csv")
    assert rows[0] == ex.METRICS_COLUMNS
    assert len(rows) == 1 + 50
    assert all(len(r) == len(ex.METRICS_COLUMNS) for r in rows)
    agent = sac.load_agent(tmp_path / "a" / "checkpoint", state_dim=4, action_dim=8)
    assert agent.updates == 500 - 256 + 1


def test_identical_seeds_give_identical_csv(tmp_path):
    cfg = smoke_cfg(seed=2, train=TrainConfig(n_epoch=1, n_step=300, hidden=32, batch_size=64))
    ex.run_training(cfg, tmp_path / "a")
    ex.run_training(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_interrupted_run_leaves_whole_rows(tmp_path, monkeypatch):
    real_update = sac.update
    calls = {"n": 0}

    def flaky(agent, buffer, rng):
        calls["n"] += 1
        if calls["n"] == 100:
            raise KeyboardInterrupt
        return real_update(agent, buffer, rng)

    monkeypatch.setattr(sac, "update", flaky)
    cfg = smoke_cfg(train=TrainConfig(n_epoch=1, n_step=300, hidden=16, batch_size=32))
    with pytest.raises(KeyboardInterrupt):
        ex.run_training(cfg, tmp_path)
    rows = read_csv(tmp_path / "metrics.csv")
    assert len(rows) > 1
    assert all(len(r) == len(ex.METRICS_COLUMNS) for r in rows)
    assert (tmp_path / "metrics.csv").read_text().endswith("\n")


def test_divergence_exits_nonzero_and_keeps_checkpoint(tmp_path, monkeypatch):
    real_update = sac.update

    def diverging(agent, buffer, rng):
        if agent.updates >= 150:
            raise sac.TrainingDiverged("loss is nan")
        return real_update(agent, buffer, rng)

    monkeypatch.setattr(sac, "update", diverging)
    cfg = smoke_cfg(train=TrainConfig(n_epoch=3, n_step=100, hidden=16, batch_size=32))
    assert ex.run_training(cfg, tmp_path) == 2
    kept = sac.load_agent(tmp_path / "checkpoint")
    assert 0 < kept.updates < 150


def test_analytic_policy_is_not_trainable(tmp_path):
    assert ex.run_training(smoke_cfg(policy="greedy"), tmp_path) == 1


# --------------------------------------------------------------------------- evaluation

def test_greedy_eval_summary():
    cfg = ExperimentConfig(policy="greedy", eval_episodes=10)
    s = ex.run_eval(cfg)
    assert np.isfinite(s.mean_latency) and s.std_latency >= 0
    assert s.edge_violation_rate == 0.0
    assert s.max_edge_usage <= 1.0
    assert s.bounds_respected
    assert s.max_decomposition_error <= 1e-12


def test_random_is_slower_than_greedy():
    system = SystemConfig()
    r = ex.evaluate_policy(system, ex.policy_factory("random", system), "random")
    g = ex.evaluate_policy(system, ex.policy_factory("greedy", system), "greedy")
    assert r.episodes == g.episodes == 50
    assert r.mean_latency >= g.mean_latency


def test_fresh_sampling_policy_is_near_random():
    system = SystemConfig()
    agent = sac.Agent.create(12, 24, TrainConfig(), make_rng(0, sac.AGENT_TAG))
    fresh = ex.evaluate_policy(system, lambda seed: SacPolicy(agent, False, make_rng(seed, POLICY_TAG)), "fresh")
    rand = ex.evaluate_policy(system, ex.policy_factory("random", system), "random")
    assert abs(fresh.mean_latency - rand.mean_latency) <= 0.2 * rand.mean_latency


def test_eval_checkpoint_and_mismatch(tmp_path):
    cfg = smoke_cfg(train=TrainConfig(n_epoch=1, n_step=100, hidden=16, batch_size=32), eval_episodes=3)
    ex.run_training(cfg, tmp_path)
    s = ex.run_eval(cfg, checkpoint=tmp_path / "checkpoint")
    assert s.policy == "sac" and s.episodes == 3
    again = ex.run_eval(cfg, checkpoint=tmp_path / "checkpoint")
    assert again == s
    with pytest.raises(ValueError):
        ex.run_eval(cfg.replace(system=SystemConfig()), checkpoint=tmp_path / "checkpoint")


# --------------------------------------------------------------------------- sweeps

def sweep(axis, values):
    cfg = ExperimentConfig(policy="greedy", eval_episodes=10)
    rows = ex.run_sweep(cfg, axis, values)
    assert all(r["status"] == "ok" for r in rows)
    return [r["mean_latency"] for r in rows]


def test_sweep_trends_greedy():
    k = sweep("K", [2, 4, 6, 8])
    assert all(a < b for a, b in zip(k, k[1:]))
    phi = sweep("phi_min", [0.4, 0.6, 0.8, 1.0])
    assert all(a <= b for a, b in zip(phi, phi[1:]))
    f = sweep("f_u_max", [0.6, 0.8, 1.0])
    assert all(a >= b for a, b in zip(f, f[1:]))


def test_sweep_flags_failures_and_continues(tmp_path):
    cfg = ExperimentConfig(policy="greedy", eval_episodes=2)
    rows = ex.run_sweep(cfg, "phi_min", [0.5, 1.5, 0.7], tmp_path / "s.csv")
    assert [r["status"] == "ok" for r in rows] == [True, False, True]
    table = read_csv(tmp_path / "s.csv")
    assert table[0] == ex.SWEEP_COLUMNS
    assert len(table) == 4


def test_apply_axis_units():
    base = SystemConfig()
    assert ex.apply_axis(base, "D_range", 0.8).d_min == pytest.approx(0.7e6)
    assert ex.apply_axis(base, "D_range", 0.8).d_max == pytest.approx(0.9e6)
    assert ex.apply_axis(base, "f_u_max", 0.6).f_u_max == pytest.approx(0.6e9)
    with pytest.raises(ConfigError):
        ex.apply_axis(base, "K", 2.5)


# --------------------------------------------------------------------------- command line

def test_cli_train_eval_sweep(tmp_path, monkeypatch, capsys):
    conf = tmp_path / "smoke.ini"
    conf.write_text(SMOKE_TEXT.replace("n_step = 500", "n_step = 100") + "hidden = 16\nbatch_size = 32\n"
                    "[experiment]\neval_episodes = 2\n")
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "out"))
    assert cli.main(["train", "--config", str(conf), "--seed", "4"]) == 0
    assert (tmp_path / "out" / "metrics.csv").exists()
    capsys.readouterr()

    assert cli.main(["eval", "--config", str(conf), "--checkpoint", str(tmp_path / "out" / "checkpoint")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["policy"] == "sac" and summary["episodes"] == 2

    assert cli.main(["eval", "--config", str(conf), "--policy", "greedy", "--episodes", "3"]) == 0
    assert json.loads(capsys.readouterr().out)["episodes"] == 3

    assert cli.main(["sweep", "--config", str(conf), "--axis", "K", "--values", "2,3", "--policy", "greedy"]) == 0
    path = capsys.readouterr().out.strip()
    assert len(read_csv(path)) == 3


def test_cli_errors(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[system]\neta = 1.5\n")
    assert cli.main(["eval", "--config", str(bad), "--policy", "greedy"]) == 2
    assert "bad.ini:2" in capsys.readouterr().err
    assert cli.main(["eval", "--checkpoint", str(tmp_path / "missing")]) == 2
    with pytest.raises(SystemExit):
        cli.main(["sweep", "--axis", "bandwidth", "--values", "1"])
