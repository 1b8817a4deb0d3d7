"""Test the CLI commands on tiny configurations."""
import os
from unittest import mock

import numpy as np
import pytest
from absl import app
from scene_common import events
from scene_common.events import RunTerminationReason

from eam_classifier import checkpoint, cleanup, utils
from eam_classifier.commands import COMMANDS, BaseCommand
from eam_classifier.commands.base_command import EXIT_SUCCESS, EXIT_USAGE
from eam_classifier.commands.gradcam import heatmap_peak
from eam_classifier.configs import Strategy
from eam_classifier.run_config import RunConfig
from eam_classifier.training import datasets, metrics
from eam_classifier.training.metrics import Metrics
from eam_classifier.utils import images

TINY_MODEL = {
    "c_prime": 8,
    "mlp_reduction": 2,
    "backbone_channels": "8,16,32,64",
}
TINY_TRAINING = {"epochs": 1, "batch": 4, "augment": False}


@pytest.fixture(name="event_logger")
def fixture_event_logger():
    return mock.MagicMock()


@pytest.fixture(name="run_command")
def fixture_run_command(event_logger):

    def run(name, **values):
        config = RunConfig(**values)
        handler = cleanup.TerminationHandler(name, event_logger)
        command = COMMANDS[name](config, event_logger, handler)
        return command.run(), command

    return run


def _logged(event_logger, event_type):
    return [
        call.args[0]
        for call in event_logger.log.call_args_list
        if isinstance(call.args[0], event_type)
    ]


@pytest.fixture(name="trained_model")
def fixture_trained_model(run_command, tmp_path):
    out = tmp_path / "train"
    exit_code, _ = run_command("train",
                               out=str(out),
                               synthetic="3,4,32",
                               **TINY_MODEL,
                               **TINY_TRAINING)
    assert exit_code == EXIT_SUCCESS
    return out / utils.MODEL_FILENAME


def test_registered_commands():
    assert set(COMMANDS) == {
        "train", "evaluate", "ablate", "gradcheck", "gradcam", "synthesize"
    }


def test_train_writes_outputs(trained_model, event_logger):
    out = trained_model.parent
    for filename in (utils.MODEL_FILENAME, utils.METRICS_FILENAME,
                     utils.CURVES_FILENAME, utils.CONFUSION_FILENAME):
        assert (out / filename).exists()

    rows = metrics.read_csv(out / utils.METRICS_FILENAME)
    assert rows[0]["split"] == "0"
    assert rows[0]["ratio"] == "50:50"
    assert rows[0]["strategy"] == "eam+aspp+gap"
    assert rows[-1]["split"] == metrics.SUMMARY_KEY
    assert len(metrics.read_csv(out / utils.CURVES_FILENAME)) == 2

    saved = _logged(event_logger, events.CheckpointSaved)
    assert saved[0].num_tensors == len(
        checkpoint.load_checkpoint(trained_model).store)
    finished = _logged(event_logger, events.RunFinished)[-1]
    assert finished.exit_code == EXIT_SUCCESS
    assert str(out / utils.MODEL_FILENAME) in finished.outputs


def test_run_started_records_config(run_command, event_logger, tmp_path):
    run_command("synthesize", out=str(tmp_path), synthetic="2,1,32")

    started = _logged(event_logger, events.RunStarted)[0]
    assert started.command == "synthesize"
    assert started.config["synthetic"] == "2,1,32"
    assert started.config["strategy"] == "eam+aspp+gap"


def test_train_requires_out(run_command, event_logger):
    with pytest.raises(app.UsageError) as err:
        run_command("train", synthetic="3,4,32")

    assert err.value.exitcode == EXIT_USAGE
    assert "--out" in str(err.value)
    terminated = _logged(event_logger, events.RunTerminated)[0]
    assert terminated.reason == RunTerminationReason.USAGE


@pytest.mark.parametrize("values", [{}, {"synthetic": "3,4,32", "data": "x"}])
def test_train_requires_one_dataset(run_command, tmp_path, values):
    with pytest.raises(app.UsageError):
        run_command("train", out=str(tmp_path), **values)


def test_invalid_synthetic_dataset_is_usage_error(run_command, tmp_path):
    with pytest.raises(app.UsageError, match="--synthetic"):
        run_command("train", out=str(tmp_path), synthetic="9,4,32")


def test_too_wide_c_prime_is_usage_error(run_command, tmp_path):
    with pytest.raises(app.UsageError, match="c_prime"):
        run_command("train",
                    out=str(tmp_path),
                    synthetic="3,4,32",
                    c_prime=16,
                    mlp_reduction=2,
                    backbone_channels="8,16,32,64")


def test_missing_data_directory_is_runtime_failure(run_command, tmp_path,
                                                   event_logger):
    exit_code, _ = run_command("train",
                               out=str(tmp_path),
                               data=str(tmp_path / "missing"))

    assert exit_code == cleanup.EXIT_FAILURE
    terminated = _logged(event_logger, events.RunTerminated)[0]
    assert terminated.reason == RunTerminationReason.ERROR
    assert "not a directory" in terminated.detail
    assert terminated.traceback


def test_evaluate_scores_every_sample(run_command, trained_model, tmp_path,
                                      capsys):
    out = tmp_path / "eval"
    exit_code, _ = run_command("evaluate",
                               out=str(out),
                               synthetic="3,2,32",
                               seed=8,
                               model=str(trained_model))

    assert exit_code == EXIT_SUCCESS
    rows = metrics.read_csv(out / utils.METRICS_FILENAME)
    assert rows[0]["ratio"] == "0:100"
    confusion = metrics.read_csv(out / utils.CONFUSION_FILENAME)
    assert sum(int(row[str(j)]) for row in confusion for j in range(3)) == 6
    assert "loss," in capsys.readouterr().out


def test_evaluate_rejects_other_variant(run_command, trained_model, tmp_path):
    exit_code, _ = run_command("evaluate",
                               out=str(tmp_path),
                               synthetic="3,2,32",
                               model=str(trained_model),
                               variant="cbam")

    assert exit_code == cleanup.EXIT_FAILURE


def test_evaluate_rejects_other_extent(run_command, trained_model, tmp_path):
    with pytest.raises(app.UsageError, match="extent"):
        run_command("evaluate",
                    out=str(tmp_path),
                    synthetic="3,2,64",
                    model=str(trained_model))


def test_gradcam_writes_heatmap_and_overlay(run_command, trained_model,
                                           tmp_path, capsys):
    image_path = tmp_path / "scene.ppm"
    images.write_ppm(image_path, datasets.synth_dataset(3, 1, 32)[2].image)
    out = tmp_path / "cam"

    exit_code, command = run_command("gradcam",
                                     out=str(out),
                                     model=str(trained_model),
                                     image=str(image_path),
                                     class_index=2,
                                     level=4)

    assert exit_code == EXIT_SUCCESS
    heatmap = images.read_pgm(out / utils.HEATMAP_FILENAME)
    assert heatmap.shape == (32, 32)
    assert images.read_ppm(out / utils.OVERLAY_FILENAME).shape == (3, 32, 32)
    assert len(command.outputs) == 2
    assert "heatmap peak (row, col)" in capsys.readouterr().out


@pytest.mark.parametrize("values,message", [
    ({"class_index": 3}, "out of range"),
    ({"class_index": None}, "--class"),
])
def test_gradcam_usage_errors(run_command, trained_model, tmp_path, values,
                              message):
    image_path = tmp_path / "scene.ppm"
    images.write_ppm(image_path, np.zeros((3, 32, 32)))

    with pytest.raises(app.UsageError, match=message):
        run_command("gradcam",
                    out=str(tmp_path / "cam"),
                    model=str(trained_model),
                    image=str(image_path),
                    **values)


def test_gradcam_peak():
    heatmap = np.zeros((4, 5))
    heatmap[2, 3] = 1.0

    assert heatmap_peak(heatmap) == (2, 3)


def test_gradcheck_passing_op(run_command, capsys):
    exit_code, _ = run_command("gradcheck", op=["conv2d"])

    assert exit_code == EXIT_SUCCESS
    assert "1/1 passed" in capsys.readouterr().out


def test_gradcheck_failure_returns_one(run_command):
    exit_code, _ = run_command("gradcheck", op=["sigmoid"], tol=1e-12)

    assert exit_code == cleanup.EXIT_FAILURE


def test_gradcheck_unknown_op(run_command):
    with pytest.raises(app.UsageError, match="Unknown --op"):
        run_command("gradcheck", op=["softmax"])


def test_synthesize_writes_loadable_dataset(run_command, tmp_path):
    out = tmp_path / "data"
    exit_code, _ = run_command("synthesize", out=str(out), synthetic="2,3,32")

    assert exit_code == EXIT_SUCCESS
    assert sorted(os.listdir(out)) == datasets.synth_class_names(2)
    assert len(datasets.load_dataset(out)) == 6


@mock.patch("eam_classifier.commands.ablate.protocol.five_split_protocol")
def test_ablate_grid(mock_protocol, run_command, tmp_path):
    mock_protocol.return_value = Metrics(confusion=np.eye(3, dtype=int),
                                         per_split=[0.2, 0.4, 0.6, 0.8, 1.0])

    exit_code, _ = run_command("ablate",
                               out=str(tmp_path),
                               synthetic="3,4,32",
                               ratio="20:80",
                               **TINY_MODEL)

    assert exit_code == EXIT_SUCCESS
    assert mock_protocol.call_count == 16
    rows = metrics.read_csv(tmp_path / utils.ABLATION_FILENAME)
    assert len(rows) == 16
    assert [(r["strategy"], r["variant"], r["conv_features"])
            for r in rows[:4]] == [("gap", "icbam", "true"),
                                   ("gap", "icbam", "false"),
                                   ("gap", "cbam", "true"),
                                   ("gap", "cbam", "false")]
    assert {r["ratio"] for r in rows} == {"20:80"}
    assert rows[0]["mean"] == "0.600000"
    splits = metrics.read_csv(tmp_path / utils.ABLATION_SPLITS_FILENAME)
    assert len(splits) == 16 * 5


@mock.patch("eam_classifier.commands.ablate.protocol.five_split_protocol")
def test_ablate_selected_strategies(mock_protocol, run_command, tmp_path):
    mock_protocol.return_value = Metrics(confusion=np.eye(3, dtype=int),
                                         per_split=[0.5])

    run_command("ablate",
                out=str(tmp_path),
                synthetic="3,4,32",
                strategies="eam+gap",
                **TINY_MODEL)

    strategies = {
        call.args[3].strategy for call in mock_protocol.call_args_list
    }
    assert strategies == {Strategy.EAM_GAP}


@mock.patch("psutil.cpu_count", return_value=2)
def test_jobs_are_capped_by_cpu_count(mock_cpu_count, event_logger):
    del mock_cpu_count  # unused
    command = COMMANDS["ablate"](RunConfig(jobs=8), event_logger,
                                 mock.MagicMock())

    assert command.jobs == 2


def test_runtime_exception_maps_to_exit_failure(event_logger):

    class FailingCommand(BaseCommand):
        NAME = "failing"

        def execute(self):
            try:
                raise OSError("disk full")
            except OSError as err:
                raise RuntimeError("could not write") from err

    handler = cleanup.TerminationHandler("failing", event_logger)
    exit_code = FailingCommand(RunConfig(), event_logger, handler).run()

    assert exit_code == cleanup.EXIT_FAILURE
    assert handler.termination_logged
    assert _logged(event_logger, events.RunTerminated)[0].detail == "disk full"
    assert not _logged(event_logger, events.RunFinished)
