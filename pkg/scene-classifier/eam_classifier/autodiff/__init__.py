# noqa: D104
from eam_classifier.autodiff import ops  # noqa: I001
from eam_classifier.autodiff.gradcheck import (
    GradCheckReport,
    finite_diff_check,
)
from eam_classifier.autodiff.node import (
    GraphError,
    Node,
    Parameter,
    backward,
    constant,
    grad_enabled,
    no_grad,
    record_kinks,
)
