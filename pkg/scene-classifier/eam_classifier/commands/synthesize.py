"""`synthesize`: writes a procedural dataset as PPM class folders."""
from typing_extensions import override

from eam_classifier.commands.base_command import EXIT_SUCCESS, BaseCommand
from eam_classifier.run_config import parse_synthetic
from eam_classifier.training import datasets


class SynthesizeCommand(BaseCommand):
    NAME = "synthesize"

    @override
    def execute(self) -> int:
        out_dir = self.require("out")
        k, _, _ = parse_synthetic(self.require("synthetic"))
        samples = self.load_samples()
        datasets.write_dataset(samples, out_dir,
                               datasets.synth_class_names(k))
        self.outputs.append(out_dir)
        self.report(f"{len(samples)} samples in {k} classes -> {out_dir}")
        return EXIT_SUCCESS
