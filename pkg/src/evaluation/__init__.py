from src.evaluation.rubrics import Rubric, Trace, rubric_for
from src.evaluation.trials import TrialReport, run_suite, run_trial, run_trials, step_cap, summarize
from src.evaluation.generalization import CONDITIONS, generalization_eval
from src.evaluation.ablations import ABLATIONS, Budget, run_ablation

__all__ = [
    "Rubric",
    "Trace",
    "rubric_for",
    "TrialReport",
    "run_suite",
    "run_trial",
    "run_trials",
    "step_cap",
    "summarize",
    "CONDITIONS",
    "generalization_eval",
    "ABLATIONS",
    "Budget",
    "run_ablation",
]
