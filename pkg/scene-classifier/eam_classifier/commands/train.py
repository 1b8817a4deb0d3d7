"""`train`: fits one model on split 0 of the stratified train:test split."""
from absl import logging
from scene_common import events
from typing_extensions import override

from eam_classifier import checkpoint, utils
from eam_classifier.commands.base_command import EXIT_SUCCESS, BaseCommand
from eam_classifier.training import datasets, metrics, protocol, trainer


class TrainCommand(BaseCommand):
    NAME = "train"

    @override
    def execute(self) -> int:
        self.require("out")
        samples = self.load_samples()
        train_set, test_set = protocol.stratified_split(samples,
                                                        self.config.ratio,
                                                        self.config.seed)
        model_config = self.model_config(datasets.num_classes(samples),
                                         samples[0].extent[0])
        result = trainer.train(train_set,
                               model_config,
                               self.config.train_config(),
                               test_set=test_set,
                               event_logger=self.event_logger)

        model_path = self.output_path(utils.MODEL_FILENAME)
        num_tensors = checkpoint.save_checkpoint(result.model, model_path)
        self.event_logger.log(
            events.CheckpointSaved(command=self.NAME,
                                   path=model_path,
                                   num_tensors=num_tensors))

        split_result = metrics.SplitResult(
            split=0,
            ratio=protocol.format_ratio(self.config.ratio),
            strategy=model_config.strategy.value,
            variant=model_config.eam.variant.value,
            accuracy=result.metrics.overall_accuracy)
        metrics.write_metrics_csv(self.output_path(utils.METRICS_FILENAME),
                                  [split_result], result.metrics)
        metrics.write_curves_csv(self.output_path(utils.CURVES_FILENAME),
                                 result.curve)
        metrics.write_confusion_csv(self.output_path(utils.CONFUSION_FILENAME),
                                    result.metrics)

        logging.info("Train accuracy %s",
                     metrics.format_value(result.train_accuracy))
        self.report(",".join(split_result.row()))
        return EXIT_SUCCESS
