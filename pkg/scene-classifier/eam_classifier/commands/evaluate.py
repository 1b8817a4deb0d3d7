"""`evaluate`: scores a saved model on a whole dataset."""
from typing_extensions import override

from eam_classifier import checkpoint, utils
from eam_classifier.commands.base_command import (
    EXIT_SUCCESS,
    BaseCommand,
    usage_error,
)
from eam_classifier.training import datasets, metrics, trainer

# Ratio column of evaluation rows: every sample is a test sample.
EVALUATION_RATIO = "0:100"


class EvaluateCommand(BaseCommand):
    NAME = "evaluate"

    @override
    def execute(self) -> int:
        self.require("out")
        # The variant is checked only when it was asked for explicitly.
        expected_variant = None
        if "variant" in self.config.__fields_set__:
            expected_variant = self.config.variant
        model = checkpoint.load_checkpoint(self.require("model"),
                                           expected_variant=expected_variant)

        samples = self.load_samples()
        extent = samples[0].extent[0]
        if extent != model.config.image_extent:
            raise usage_error(f"Dataset extent {extent} does not match the "
                              f"model extent {model.config.image_extent}")
        if datasets.num_classes(samples) > model.config.num_classes:
            raise usage_error(
                f"Dataset has {datasets.num_classes(samples)} classes, the "
                f"model {model.config.num_classes}")

        loss, result = trainer.evaluate(model, samples)
        split_result = metrics.SplitResult(
            split=0,
            ratio=EVALUATION_RATIO,
            strategy=model.config.strategy.value,
            variant=model.config.eam.variant.value,
            accuracy=result.overall_accuracy)
        metrics.write_metrics_csv(self.output_path(utils.METRICS_FILENAME),
                                  [split_result], result)
        metrics.write_confusion_csv(self.output_path(utils.CONFUSION_FILENAME),
                                    result)

        self.report(f"loss,{metrics.format_value(loss)}")
        self.report(",".join(split_result.row()))
        return EXIT_SUCCESS
