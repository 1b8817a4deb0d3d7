"""`gradcam`: heatmap and overlay of one image for one class."""
from typing_extensions import override

from eam_classifier import checkpoint, explain, utils
from eam_classifier.commands.base_command import (
    EXIT_SUCCESS,
    BaseCommand,
    usage_error,
)
from eam_classifier.utils import images


class GradcamCommand(BaseCommand):
    NAME = "gradcam"

    @override
    def execute(self) -> int:
        self.require("out")
        class_index = self.require("class_index", flag="class")
        model = checkpoint.load_checkpoint(self.require("model"))
        image = images.read_ppm(self.require("image"))

        config = model.config
        if class_index >= config.num_classes:
            raise usage_error(f"--class {class_index} is out of range for a "
                              f"{config.num_classes}-class model")
        if image.shape[1:] != (config.image_extent, config.image_extent):
            raise usage_error(
                f"Image extent {image.shape[1]}x{image.shape[2]} does not "
                f"match the model extent {config.image_extent}")
        target = explain.CamTarget(self.config.target)
        if target == explain.CamTarget.EAM and not config.strategy.uses_eam:
            raise usage_error(f"A '{config.strategy.value}' model has no "
                              "attention output; use --target tap")

        heatmap = explain.grad_cam(model,
                                   image,
                                   class_index,
                                   level=self.config.level,
                                   target=target)
        images.write_pgm(self.output_path(utils.HEATMAP_FILENAME), heatmap)
        images.write_ppm(self.output_path(utils.OVERLAY_FILENAME),
                         images.overlay(image, heatmap))

        self.report(f"heatmap peak (row, col): {heatmap_peak(heatmap)}")
        return EXIT_SUCCESS


def heatmap_peak(heatmap) -> tuple[int, int]:
    row, col = divmod(int(heatmap.argmax()), heatmap.shape[1])
    return row, col
