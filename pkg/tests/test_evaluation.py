import json

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from src.errors import ConfigError, FormatError
from src.evaluation import CONDITIONS, Trace, generalization_eval, rubric_for, run_suite, run_trial, summarize
from src.evaluation.ablations import CHECKS, Budget, Pipeline, run_ablation
from src.evaluation.plots import plot_directory, plot_losses, plot_scores
from src.evaluation.trials import (
    FIXTURE_SEEDS,
    SCORES_NAME,
    STEP_CAP_FACTOR,
    TRIALS_NAME,
    TrialReport,
    run_trials,
    scripted_length,
    step_cap,
)
from src.models.policy import PolicyAction, ScriptedOraclePolicy
from src.training.bench import MIN_STEPS
from src.world.environment import sample_instance
from tests.conftest import TINY_BACKBONE, TINY_RECIPE

FAR = (-5.0, -5.0)


class IdlePolicy:
    """Nunca se move; serve de piso para as rubricas."""

    def reset(self, env):
        pass

    def act(self, obs, rng):
        dim = 4 if obs.embodiment == "arm3" else 3
        return PolicyAction(actions=np.zeros((8, dim)))


def _trace(instance, states):
    poses = np.stack([p for p, _ in states])
    held = np.stack([h for _, h in states])
    return Trace(instance.scene, poses, held)


class TestRubrics:
    @pytest.mark.parametrize("task,points", [("pick-place", 2), ("sort-2", 2), ("sort-4", 4), ("stack-fold", 3)])
    def test_max_points(self, task, points):
        assert rubric_for(sample_instance(task, "arm3", 0)).max_points == points

    def test_grasp_then_place(self):
        instance = sample_instance("pick-place", "arm3", 0)
        goal = instance.subgoals[0]
        n = len(instance.scene.objects)
        away = instance.scene.poses.copy()
        away[goal.obj] = FAR
        inside = away.copy()
        inside[goal.obj] = instance.scene.zone(goal.zone).center
        free = np.full(n, -1)
        holding = free.copy()
        holding[goal.obj] = 0

        rubric = rubric_for(instance)
        grasp_only = _trace(instance, [(away, free), (away, holding)])
        assert rubric.score(grasp_only)[0] == 1

        full = _trace(instance, [(away, free), (away, holding), (inside, free)])
        points, met = rubric.score(full)
        assert points == 2
        assert met[0].startswith("grasp ") and met[1].startswith("place ")

    def test_held_object_is_not_placed(self):
        instance = sample_instance("pick-place", "arm3", 0)
        goal = instance.subgoals[0]
        inside = instance.scene.poses.copy()
        inside[goal.obj] = instance.scene.zone(goal.zone).center
        holding = np.full(len(instance.scene.objects), -1)
        holding[goal.obj] = 0
        points, met = rubric_for(instance).score(_trace(instance, [(inside, holding)]))
        assert points == 1
        assert met == [n for n in rubric_for(instance).names if n.startswith("grasp ")]


class TestTrials:
    def test_oracle_scores_full(self):
        report = run_trial(ScriptedOraclePolicy(), "pick-place", "arm3", seed=0)
        assert report.normalized == 1.0
        assert report.phrases == []
        assert report.steps <= step_cap("pick-place", "arm3")

    def test_oracle_needs_reset(self):
        obs = None
        with pytest.raises(ConfigError):
            ScriptedOraclePolicy().act(obs, np.random.default_rng(0))

    def test_idle_policy_scores_zero(self):
        report = run_trial(IdlePolicy(), "sort-2", "arm3", seed=0, cap=24)
        assert report.points == 0
        assert report.steps == 24

    def test_step_cap_from_scripted_median(self):
        lengths = [scripted_length("sort-2", "arm2", s) for s in FIXTURE_SEEDS]
        assert step_cap("sort-2", "arm2") == int(STEP_CAP_FACTOR * np.median(lengths))

    def test_trials_are_seeded_sequentially(self):
        reports = run_trials(IdlePolicy(), "pick-place", "arm2", trials=3, base_seed=40)
        assert [r.seed for r in reports] == [40, 41, 42]

    def test_trials_must_be_positive(self):
        with pytest.raises(ConfigError):
            run_trials(IdlePolicy(), "pick-place", "arm2", trials=0)

    def test_summarize(self):
        reports = [
            TrialReport("sort-2", "arm3", 0, 2, 2, 100),
            TrialReport("sort-2", "arm3", 1, 1, 2, 300),
            TrialReport("sort-4", "arm3", 0, 1, 4, 50),
        ]
        table = summarize(reports).set_index("task")
        assert table.loc["sort-2", "mean_score"] == pytest.approx(0.75)
        assert table.loc["sort-2", "std_score"] == pytest.approx(np.std([1.0, 0.5], ddof=1))
        assert table.loc["sort-2", "mean_steps"] == pytest.approx(200)
        assert table.loc["sort-4", "std_score"] == 0.0
        assert table.loc["sort-4", "trials"] == 1

    def test_suite_writes_reports(self, tmp_path):
        table = run_suite(ScriptedOraclePolicy(), ["pick-place", "sort-2"], "arm2", trials=2, out_dir=tmp_path)
        assert list(table["task"]) == ["pick-place", "sort-2"]
        assert np.allclose(table["mean_score"], 1.0)
        lines = (tmp_path / TRIALS_NAME).read_text().splitlines()
        assert len(lines) == 4
        assert json.loads(lines[0])["normalized"] == 1.0
        assert pd.read_csv(tmp_path / SCORES_NAME).shape[0] == 2


class TestGeneralization:
    def test_conditions_share_seeds(self):
        table = generalization_eval(ScriptedOraclePolicy(), "pick-place", "arm3", trials=1)
        assert list(table["condition"]) == list(CONDITIONS)
        assert table["palette"].nunique() == len(CONDITIONS)
        assert np.allclose(table["mean_score"], 1.0)
        assert table["mean_steps"].nunique() == 1


class TestPlots:
    def test_scores_figure(self, tmp_path):
        csv = tmp_path / SCORES_NAME
        summarize([TrialReport("sort-2", "arm3", 0, 1, 2, 10)]).to_csv(csv, index=False)
        assert plot_scores(csv).exists()

    def test_table_without_score_column(self, tmp_path):
        csv = tmp_path / "scores.csv"
        pd.DataFrame({"task": ["sort-2"], "other": [1]}).to_csv(csv, index=False)
        with pytest.raises(FormatError):
            plot_scores(csv)

    def test_losses_figure(self, tmp_path):
        metrics = tmp_path / "metrics.jsonl"
        rows = [{"step": i, "loss": 1.0 / (i + 1), "l_diff": 1.0 / (i + 1), "l_ntp": 0.0} for i in range(5)]
        metrics.write_text("".join(json.dumps(r) + "\n" for r in rows))
        assert plot_losses(metrics).name == "losses.png"

    def test_directory(self, tmp_path):
        summarize([TrialReport("sort-2", "arm3", 0, 1, 2, 10)]).to_csv(tmp_path / SCORES_NAME, index=False)
        assert len(plot_directory(tmp_path)) == 1

    def test_empty_directory(self, tmp_path):
        with pytest.raises(FormatError):
            plot_directory(tmp_path)


class TestAblations:
    def test_budget_limits(self):
        with pytest.raises(ValidationError):
            Budget(recipe=TINY_RECIPE, trials=0)
        with pytest.raises(ValidationError):
            Budget(recipe=TINY_RECIPE, bench_steps=MIN_STEPS - 1)

    def test_unknown_ablation(self, tmp_path):
        with pytest.raises(ConfigError):
            run_ablation("dropout", Budget(recipe=TINY_RECIPE), tmp_path)

    def test_ordering_checks(self):
        runs = pd.DataFrame({
            "arm": ["stage1-only", "stage2-only", "stage1+2", "stage1+2+3"],
            "mean_score": [0.2, 0.1, 0.7, 0.8],
        })
        assert all(CHECKS["stages"](runs).values())
        runs.loc[2, "mean_score"] = 0.4
        assert not CHECKS["stages"](runs)["stage1+2 >= 0.6"]

    def test_pipeline_reuses_prefix(self, dataset, tmp_path):
        tiny = {"epochs": 1, "max_steps": 2, "prefetch": 1}
        budget = Budget(recipe=TINY_RECIPE, batch=2, expert="tiny", stage1=tiny,
                        stage2={**tiny, "backbone": TINY_BACKBONE.model_dump()},
                        stage3={**tiny, "backbone": TINY_BACKBONE.model_dump()})
        pipeline = Pipeline(budget, dataset, tmp_path, "sort-2")
        first = pipeline.run((1, 2), 0, "tiny", (True, True))
        second = pipeline.run((1, 2, 3), 0, "tiny", (True, True, True))
        assert first.exists() and second.exists()
        assert len(list((tmp_path / "runs").iterdir())) == 3

    def test_scratch_stage2_arm(self, dataset, tmp_path):
        budget = Budget(recipe=TINY_RECIPE, batch=2, expert="tiny",
                        stage2={"epochs": 1, "max_steps": 1, "prefetch": 1, "backbone": TINY_BACKBONE.model_dump()})
        ckpt = Pipeline(budget, dataset, tmp_path, "sort-2").run((2,), 0, "tiny", (True,))
        assert (ckpt / "params.bin").exists()
