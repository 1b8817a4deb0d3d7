"""`gradcheck`: finite-difference checks of every differentiable op."""
from typing_extensions import override

from eam_classifier import gradcheck_suite
from eam_classifier.cleanup import EXIT_FAILURE
from eam_classifier.commands.base_command import (
    EXIT_SUCCESS,
    BaseCommand,
    usage_error,
)


class GradcheckCommand(BaseCommand):
    NAME = "gradcheck"

    @override
    def execute(self) -> int:
        names = self.config.op or gradcheck_suite.available_checks()
        unknown = sorted(set(names) - set(gradcheck_suite.available_checks()))
        if unknown:
            raise usage_error(
                f"Unknown --op {', '.join(unknown)}. Available: "
                f"{', '.join(gradcheck_suite.available_checks())}")

        reports = gradcheck_suite.run_suite(names,
                                            tol_rel=self.config.tol,
                                            tol_abs=self.config.tol_abs,
                                            seed=self.config.seed)
        for report in reports:
            self.report(report.row())

        failed = [r.op_name for r in reports if not r.passed]
        self.report(f"{len(reports) - len(failed)}/{len(reports)} passed")
        return EXIT_FAILURE if failed else EXIT_SUCCESS
