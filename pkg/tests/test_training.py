import json
import threading

import numpy as np
import pytest

from src.autodiff import ParamSet, load_checkpoint
from src.errors import ConfigError, GraftError, NumericError, RoutingError
from src.models.policy import LearnedPolicy, count_policy_params, init_policy_params
from src.training.bench import MIN_STEPS, throughput
from src.training.optim import OptimizerState, adamw_step, clip_grad_norm, global_norm
from src.training.stages import build_stage, lr_at, resolve_trainable
from src.training.trainer import METRICS_NAME, graft, prepare_params, train_stage
from src.world.environment import Environment
from tests.conftest import tiny_stage


@pytest.fixture(scope="module")
def stage1_run(dataset, tmp_path_factory):
    return train_stage(tiny_stage(1), dataset, tmp_path_factory.mktemp("stage1"))


@pytest.fixture(scope="module")
def stage2_run(dataset, stage1_run, tmp_path_factory):
    return train_stage(tiny_stage(2), dataset, tmp_path_factory.mktemp("stage2"), init=stage1_run.final)


def _metrics(run):
    with open(run.out_dir / METRICS_NAME, encoding="utf-8") as f:
        return [json.loads(line) for line in f]


class TestSchedule:
    def test_constant(self):
        cfg = build_stage(1)
        assert lr_at(cfg, 0, 10) == lr_at(cfg, 9, 10) == pytest.approx(1e-4)

    def test_cosine(self):
        cfg = build_stage(3)
        assert lr_at(cfg, 0, 100) == pytest.approx(2e-5)
        assert lr_at(cfg, 50, 100) == pytest.approx(1e-5)
        assert lr_at(cfg, 100, 100) == pytest.approx(0.0, abs=1e-12)

    def test_cosine_step_out_of_range(self):
        with pytest.raises(ConfigError):
            lr_at(build_stage(3), 101, 100)

    def test_stage_defaults(self):
        assert build_stage(2).data.filter.embodiment == "arm3"
        assert build_stage(3).data.filter.tasks == ["sort-2"]
        with pytest.raises(ConfigError):
            build_stage(4)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            build_stage(1, learning_rate=0.1)


class TestTrainableSets:
    def test_stage2_freezes_vision(self):
        cfg = tiny_stage(2)
        params = init_policy_params(cfg.architecture, 80, 2)
        trainable, frozen = resolve_trainable(cfg, params)
        assert frozen and all(n.startswith("backbone/vision/") for n in frozen)
        assert not any(n.startswith("backbone/vision/") for n in trainable)
        assert any(n.startswith("connector/") for n in trainable)

    def test_unmatched_names_rejected(self):
        cfg = tiny_stage(1, trainable=["expert/*"])
        params = init_policy_params(cfg.architecture, 80, 1)
        with pytest.raises(ConfigError):
            resolve_trainable(cfg, params)

    def test_param_count_matches_analytic(self):
        cfg = tiny_stage(2)
        params = prepare_params(tiny_stage(2, init={"from_scratch": True}), 80)
        assert params.count() == count_policy_params(cfg.architecture, 80, 2)


class TestOptimizer:
    def test_first_step_moves_by_lr(self):
        params = ParamSet({"w": np.ones(3, dtype=np.float32)})
        adamw_step(params, {"w": np.array([0.5, -2.0, 1e-3])}, OptimizerState(), lr=0.1)
        np.testing.assert_allclose(params["w"], [0.9, 1.1, 0.9], atol=1e-4)

    def test_frozen_and_absent_untouched(self):
        params = ParamSet({"a": np.ones(2), "b": np.ones(2), "c": np.ones(2)}, frozen=["b"])
        state = adamw_step(params, {"a": np.ones(2), "b": np.ones(2)}, OptimizerState(), lr=0.1)
        np.testing.assert_array_equal(params["b"], 1.0)
        np.testing.assert_array_equal(params["c"], 1.0)
        assert set(state.m) == {"a"}

    def test_non_finite_gradient(self):
        params = ParamSet({"a": np.ones(2)})
        with pytest.raises(NumericError):
            adamw_step(params, {"a": np.array([np.nan, 1.0])}, OptimizerState(), lr=0.1)

    def test_non_finite_gradient_leaves_everything_untouched(self):
        params = ParamSet({"a": np.ones(2), "b": np.ones(2)})
        state = adamw_step(params, {"a": np.ones(2), "b": np.ones(2)}, OptimizerState(), lr=0.1)
        before = params.copy()
        m_a = state.m["a"].copy()

        with pytest.raises(NumericError, match="b no passo 2"):
            adamw_step(params, {"a": np.ones(2), "b": np.array([np.nan, 1.0])}, state, lr=0.1)

        for name in ("a", "b"):
            np.testing.assert_array_equal(params[name], before[name])
        assert state.step == 1
        assert state.t == {"a": 1, "b": 1}
        np.testing.assert_array_equal(state.m["a"], m_a)

    def test_clip(self):
        grads = {"a": np.array([3.0, 0.0]), "b": np.array([0.0, 4.0])}
        clipped = clip_grad_norm(grads, 1.0)
        assert global_norm(clipped) == pytest.approx(1.0, rel=1e-4)
        assert clip_grad_norm(grads, None)["a"] is grads["a"]


class TestGraft:
    def test_stage1_to_stage2(self):
        arch = tiny_stage(1).architecture
        s1 = init_policy_params(arch, 80, 1, seed=1)
        fresh = init_policy_params(arch, 80, 2, seed=2)
        out = graft(s1, fresh, 2)
        assert not out.match("stage1/*")
        assert out.digest("expert/time/fc1/W") == s1.digest("expert/time/fc1/W")
        assert out.digest("head/arm3/in/W") == s1.digest("head/arm3/in/W")
        assert out.digest("backbone/embed") == fresh.digest("backbone/embed")

    def test_missing_expert(self):
        arch = tiny_stage(1).architecture
        s1 = init_policy_params(arch, 80, 1)
        s1.remove(s1.match("expert/*"))
        with pytest.raises(GraftError):
            graft(s1, init_policy_params(arch, 80, 2), 2)

    def test_stage3_needs_backbone(self):
        arch = tiny_stage(1).architecture
        with pytest.raises(GraftError):
            graft(init_policy_params(arch, 80, 1), init_policy_params(arch, 80, 3), 3)

    def test_stage2_without_init(self):
        with pytest.raises(ConfigError):
            prepare_params(tiny_stage(2), 80)


class TestStageRuns:
    def test_stage1_outputs(self, stage1_run):
        rows = _metrics(stage1_run)
        assert len(rows) == stage1_run.steps == 3
        assert all(r["l_ntp"] == 0.0 and np.isfinite(r["loss"]) for r in rows)
        for name in ("manifest.json", "params.bin", "vocab.json", "norm_stats.json"):
            assert (stage1_run.final / name).exists()
        assert stage1_run.best.exists()
        assert (stage1_run.out_dir / "resolved_config.json").exists()

    def test_stage1_is_deterministic(self, dataset, stage1_run, tmp_path):
        again = train_stage(tiny_stage(1), dataset, tmp_path)
        assert _metrics(again) == _metrics(stage1_run)
        a, _ = load_checkpoint(again.final)
        b, _ = load_checkpoint(stage1_run.final)
        assert a.digests() == b.digests()

    def test_stopping_at_max_steps_releases_prefetch(self, dataset, tmp_path):
        run = train_stage(tiny_stage(1, max_steps=2), dataset, tmp_path)
        assert run.steps == 2
        assert not [t for t in threading.enumerate() if t.name == "prefetch" and t.is_alive()]

    def test_stage2_drops_stage1_and_keeps_frozen(self, dataset, stage2_run):
        params, metadata = load_checkpoint(stage2_run.final)
        assert metadata["stage"] == 2
        assert not params.match("stage1/*")
        fresh = prepare_params(tiny_stage(2, init={"from_scratch": True}), len(dataset.vocab))
        for name in params.match("backbone/vision/*"):
            assert params.digest(name) == fresh.digest(name)

    def test_stage2_leaves_unused_heads(self, stage1_run, stage2_run):
        before, _ = load_checkpoint(stage1_run.final)
        after, _ = load_checkpoint(stage2_run.final)
        for name in after.match("head/arm2/*") + after.match("head/biman2x2/*"):
            assert after.digest(name) == before.digest(name)
        assert any(after.digest(n) != before.digest(n) for n in after.match("head/arm3/*"))

    def test_stage2_logs_both_losses(self, stage2_run):
        rows = _metrics(stage2_run)
        assert all(r["l_ntp"] > 0 and r["embodiment"] == "arm3" for r in rows)
        assert all(r["loss"] == pytest.approx(r["l_diff"] + r["l_ntp"], rel=1e-5) for r in rows)

    def test_stage3_from_stage2(self, dataset, stage2_run, tmp_path):
        run = train_stage(tiny_stage(3, max_steps=2), dataset, tmp_path, init=stage2_run.final)
        rows = _metrics(run)
        assert rows[0]["lr"] == pytest.approx(2e-5)
        assert rows[1]["lr"] < rows[0]["lr"]

    def test_stage3_rejects_stage1_checkpoint(self, dataset, stage1_run, tmp_path):
        with pytest.raises(GraftError):
            train_stage(tiny_stage(3), dataset, tmp_path, init=stage1_run.final)


class TestLearnedPolicy:
    def test_act_returns_denormalized_chunk(self, stage2_run):
        policy = LearnedPolicy.from_checkpoint(stage2_run.final)
        assert policy.multimodal
        obs = Environment("sort-2", "arm3", 0).reset()
        action = policy.act(obs, np.random.default_rng(0))
        assert action.actions.shape == (policy.arch.horizon, 4)
        assert np.all(np.isfinite(action.actions))
        assert isinstance(action.reasoning, str)

    def test_stage1_policy_has_no_reasoning(self, stage1_run):
        policy = LearnedPolicy.from_checkpoint(stage1_run.final)
        obs = Environment("sort-2", "arm2", 0).reset()
        action = policy.act(obs, np.random.default_rng(0))
        assert action.actions.shape == (policy.arch.horizon, 3)
        assert action.reasoning == ""

    def test_missing_head_is_routing_error(self, stage1_run):
        policy = LearnedPolicy.from_checkpoint(stage1_run.final)
        policy.params.remove(policy.params.match("head/biman2x2/*"))
        obs = Environment("sort-2", "biman2x2", 0).reset()
        with pytest.raises(RoutingError):
            policy.act(obs, np.random.default_rng(0))


class TestThroughput:
    def test_measures_steps(self, dataset):
        result = throughput(tiny_stage(1), dataset, steps=MIN_STEPS)
        assert result.steps == MIN_STEPS
        assert result.steps_per_sec > 0

    def test_minimum_steps(self, dataset):
        with pytest.raises(ConfigError):
            throughput(tiny_stage(1), dataset, steps=MIN_STEPS - 1)


@pytest.mark.slow
class TestConvergence:
    def test_stage1_loss_decreases(self, dataset, tmp_path):
        run = train_stage(tiny_stage(1, max_steps=200, epochs=50, lr=1e-3), dataset, tmp_path)
        losses = [r["loss"] for r in _metrics(run)]
        assert np.mean(losses[-10:]) < np.mean(losses[:10])
