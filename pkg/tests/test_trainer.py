import json
from pathlib import Path

import numpy as np
import pytest

from bitrl.checkpoint import checkpoint_hash, restore
from bitrl.config import background_from_name
from bitrl.env import REWARD_LOWER_BOUND
from bitrl.errors import DivergenceError
from bitrl.trainer import evaluate, latest_checkpoint, train
from conftest import tiny_config


def micro_config(**overrides):
    base = dict(total_env_steps=90, initial_collect=30, eval_every=45, eval_episodes=1, horizon=10)
    base.update(overrides)
    return tiny_config(**base)


def read_log(run_dir, name="train_log.jsonl"):
    with open(Path(run_dir) / name) as f:
        return [json.loads(line) for line in f if line.strip()]


@pytest.fixture(scope="module")
def micro_run(tmp_path_factory):
    cfg = micro_config()
    run_dir = train(cfg, tmp_path_factory.mktemp("runs") / "micro")
    return cfg, run_dir


def test_run_directory_layout(micro_run):
    cfg, run_dir = micro_run
    assert (run_dir / "config.json").exists()
    assert (run_dir / "train_log.jsonl").exists()
    assert (run_dir / "eval_log.jsonl").exists()
    assert (run_dir / "ckpt_0.bin").exists()
    assert (run_dir / f"ckpt_{cfg.total_env_steps}.bin").exists()
    loaded = json.loads((run_dir / "config.json").read_text())
    assert loaded["total_env_steps"] == cfg.total_env_steps
    assert loaded["aug"]["kind"] == cfg.aug.kind


def test_update_ordering_per_iteration(micro_run):
    cfg, run_dir = micro_run
    records = read_log(run_dir)
    by_iter = {}
    for r in records:
        by_iter.setdefault(r["iter"], []).append(r["kind"])
    assert by_iter, "no update records"
    for it, kinds in by_iter.items():
        assert kinds == ["rl"] * cfg.omega + ["bit", "ema"], f"iteration {it}: {kinds}"


def test_step_accounting(micro_run):
    cfg, run_dir = micro_run
    kinds = [r["kind"] for r in read_log(run_dir)]
    assert kinds.count("rl") == cfg.omega * kinds.count("bit")
    assert kinds.count("bit") == kinds.count("ema")
    expected_iters = cfg.total_env_steps - cfg.initial_collect + 1  # updates start at the warm step
    assert kinds.count("bit") == expected_iters


def test_variant_echoed_in_every_record(micro_run):
    _, run_dir = micro_run
    for name in ("train_log.jsonl", "eval_log.jsonl"):
        records = read_log(run_dir, name)
        assert records and all(r["variant"] == "full" for r in records)


def test_baseline_has_no_bit_or_ema_records(tmp_path):
    run_dir = train(micro_config(ablation="baseline"), tmp_path / "baseline")
    kinds = {r["kind"] for r in read_log(run_dir)}
    assert kinds == {"rl"}


def test_determinism_same_config_same_artifacts(tmp_path):
    cfg = micro_config(seed=11)
    a = train(cfg, tmp_path / "a")
    b = train(cfg, tmp_path / "b")
    assert (a / "train_log.jsonl").read_bytes() == (b / "train_log.jsonl").read_bytes()
    assert (a / "eval_log.jsonl").read_bytes() == (b / "eval_log.jsonl").read_bytes()
    assert checkpoint_hash(latest_checkpoint(a)) == checkpoint_hash(latest_checkpoint(b))


def test_seed_changes_artifacts(tmp_path):
    a = train(micro_config(seed=1), tmp_path / "a")
    b = train(micro_config(seed=2), tmp_path / "b")
    assert checkpoint_hash(latest_checkpoint(a)) != checkpoint_hash(latest_checkpoint(b))


def test_evaluate_is_pure_and_repeatable(micro_run):
    cfg, run_dir = micro_run
    ckpt = latest_checkpoint(run_dir)
    before = checkpoint_hash(ckpt)
    backgrounds = [background_from_name("clean"), background_from_name("hard")]
    r1 = evaluate(ckpt, backgrounds, episodes=2, seeds=[0, 1])
    r2 = evaluate(ckpt, backgrounds, episodes=2, seeds=[0, 1])
    assert checkpoint_hash(ckpt) == before
    assert r1.to_dict() == r2.to_dict()
    assert [r.tier for r in r1.results] == ["clean", "hard"]
    for result in r1.results:
        assert result.episode_count == 4
        assert REWARD_LOWER_BOUND * cfg.horizon <= result.mean_return <= 0.0


def test_eval_log_matches_schedule(micro_run):
    cfg, run_dir = micro_run
    records = read_log(run_dir, "eval_log.jsonl")
    steps = sorted({r["step"] for r in records})
    assert steps == [45, 90]
    tiers = {r["background"] for r in records}
    assert tiers == {bg.tier for bg in cfg.eval_backgrounds}


def test_checkpoint_restore_roundtrip(micro_run):
    cfg, run_dir = micro_run
    config, extractor, heads, policy = restore(latest_checkpoint(run_dir))
    assert config.to_dict() == cfg.to_dict()
    obs = np.zeros(cfg.obs_shape, dtype=np.float32)
    z = extractor.encode(obs)
    assert z.shape == (cfg.latent_dim,)
    action = policy.select_action(z, deterministic=True)
    assert np.all(np.abs(action) <= 1.0)


def test_latest_checkpoint_picks_highest_step(tmp_path, micro_run):
    _, run_dir = micro_run
    assert latest_checkpoint(run_dir).name == "ckpt_90.bin"
    with pytest.raises(FileNotFoundError):
        latest_checkpoint(tmp_path)


def test_divergence_aborts_with_dump(tmp_path):
    cfg = micro_config(critic_lr=1e18, total_env_steps=60, initial_collect=20)
    with pytest.raises(DivergenceError):
        train(cfg, tmp_path / "diverge")
    assert (tmp_path / "diverge" / "divergence_dump.bin").exists()
