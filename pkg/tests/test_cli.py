from pathlib import Path

import pandas as pd
import pytest

from src import cli
from src.data.episode_io import read_manifest
from src.evaluation.trials import SCORES_NAME

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

TINY_TRAIN = ["--set", "expert=tiny", "--set", "max_steps=2", "--set", "epochs=1", "--set", "batch=2",
              "--set", "prefetch=1", "--quiet"]


@pytest.fixture(scope="module")
def stage1_checkpoint(dataset_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli-stage1")
    code = cli.dispatch(["train", "--stage", "1", "--config", str(CONFIGS / "stage1.yaml"),
                         "--data", str(dataset_dir), "--out", str(out), *TINY_TRAIN])
    assert code == 0
    return out / "final"


class TestTrain:
    def test_stage2_requires_init(self, dataset_dir, tmp_path, capsys):
        code = cli.dispatch(["train", "--stage", "2", "--config", str(CONFIGS / "stage2.yaml"),
                             "--data", str(dataset_dir), "--out", str(tmp_path)])
        assert code == 1
        err = capsys.readouterr().err.strip().splitlines()
        assert err[-1].startswith("error code=E_CONFIG message=")

    def test_config_of_other_stage(self, dataset_dir, tmp_path, capsys):
        code = cli.dispatch(["train", "--stage", "1", "--config", str(CONFIGS / "stage2.yaml"),
                             "--data", str(dataset_dir), "--out", str(tmp_path)])
        assert code == 1
        assert "E_CONFIG" in capsys.readouterr().err

    def test_missing_init_checkpoint(self, dataset_dir, tmp_path, capsys):
        code = cli.dispatch(["train", "--stage", "2", "--data", str(dataset_dir), "--out", str(tmp_path),
                             "--init", str(tmp_path / "nada")])
        assert code == 1
        assert "E_CONFIG" in capsys.readouterr().err

    def test_stage1_run(self, stage1_checkpoint):
        assert (stage1_checkpoint / "params.bin").exists()
        assert (stage1_checkpoint / "vocab.json").exists()

    def test_bad_override(self, dataset_dir, tmp_path, capsys):
        code = cli.dispatch(["train", "--stage", "1", "--data", str(dataset_dir), "--out", str(tmp_path),
                             "--set", "expert"])
        assert code == 1
        assert "E_CONFIG" in capsys.readouterr().err


class TestInspect:
    def test_counts_match(self, stage1_checkpoint, capsys):
        assert cli.dispatch(["inspect", str(stage1_checkpoint)]) == 0
        out = capsys.readouterr().out
        assert "head/arm3" in out
        assert "(ok)" in out

    def test_missing_checkpoint(self, tmp_path, capsys):
        assert cli.dispatch(["inspect", str(tmp_path / "nada")]) == 1
        assert "E_CHECKPOINT" in capsys.readouterr().err


class TestEval:
    def test_oracle(self, tmp_path):
        code = cli.dispatch(["eval", "oracle", "--tasks", "pick-place", "--embodiment", "arm2",
                             "--trials", "2", "--out", str(tmp_path)])
        assert code == 0
        table = pd.read_csv(tmp_path / SCORES_NAME)
        assert table["mean_score"].tolist() == [1.0]

    @pytest.mark.slow
    def test_learned_checkpoint(self, stage1_checkpoint, tmp_path):
        code = cli.dispatch(["eval", str(stage1_checkpoint), "--tasks", "pick-place", "--embodiment", "arm2",
                             "--trials", "1", "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / SCORES_NAME).exists()


class TestMisc:
    def test_gen_data_with_override(self, tmp_path):
        out = tmp_path / "data"
        code = cli.dispatch(["gen-data", "--config", str(CONFIGS / "recipes" / "smoke.yaml"), "--out", str(out),
                             "--seed", "2", "--quiet",
                             "--set", "entries=[{embodiment: arm2, task: pick-place, episodes: 1}]"])
        assert code == 0
        manifest = read_manifest(out)
        assert len(manifest["episodes"]) == 1

    def test_plot_missing_path(self, tmp_path, capsys):
        assert cli.dispatch(["plot", str(tmp_path / "nada.csv")]) == 1
        assert "E_CONFIG" in capsys.readouterr().err

    def test_internal_error(self, monkeypatch, tmp_path, capsys):
        def boom(checkpoint):
            raise RuntimeError("falha inesperada")

        monkeypatch.setattr(cli.inspect_ckpt, "main", boom)
        assert cli.dispatch(["inspect", str(tmp_path)]) == cli.INTERNAL_EXIT
        err = capsys.readouterr().err
        assert "error code=E_INTERNAL" in err and "RuntimeError" in err

    def test_unknown_verb(self):
        with pytest.raises(SystemExit):
            cli.dispatch(["treinar"])
