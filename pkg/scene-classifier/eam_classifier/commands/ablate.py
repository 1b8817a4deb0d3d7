"""`ablate`: the strategy x variant x conv-features grid.

Each cell runs the five-split protocol; rows come out in grid order.
"""
import itertools

from typing_extensions import override

from eam_classifier import utils
from eam_classifier.commands.base_command import EXIT_SUCCESS, BaseCommand
from eam_classifier.configs import AttentionVariant
from eam_classifier.training import datasets, metrics, protocol

CONV_FEATURE_SETTINGS = (True, False)


class AblateCommand(BaseCommand):
    NAME = "ablate"

    @override
    def execute(self) -> int:
        self.require("out")
        samples = self.load_samples()
        num_classes = datasets.num_classes(samples)
        extent = samples[0].extent[0]
        ratio = protocol.format_ratio(self.config.ratio)
        jobs = self.jobs

        cells = []
        for strategy, variant, conv_features in itertools.product(
                self.config.strategies, AttentionVariant,
                CONV_FEATURE_SETTINGS):
            model_config = self.model_config(
                num_classes,
                extent,
                strategy=strategy,
                variant=variant,
                conv_features=conv_features)
            result = protocol.five_split_protocol(
                samples,
                self.config.ratio,
                self.config.train_config(),
                model_config,
                jobs=jobs,
                event_logger=self.event_logger)
            cell = metrics.AblationCell(strategy=strategy.value,
                                        variant=variant.value,
                                        conv_features=conv_features,
                                        ratio=ratio,
                                        metrics=result)
            self.report(",".join(cell.row()))
            cells.append(cell)

        metrics.write_ablation_csv(self.output_path(utils.ABLATION_FILENAME),
                                   cells)
        metrics.write_ablation_splits_csv(
            self.output_path(utils.ABLATION_SPLITS_FILENAME), cells)
        return EXIT_SUCCESS
