"""Central finite-difference certification of analytic gradients."""
import dataclasses
from collections.abc import Callable, Mapping

import numpy as np

from eam_classifier.autodiff.node import (
    Node,
    backward,
    no_grad,
    record_kinks,
)

DEFAULT_STEP = 1e-4
DEFAULT_TOL_REL = 1e-4
# 0 leaves only exact agreement to the absolute criterion.
DEFAULT_TOL_ABS = 0.0
MIN_SAMPLES_PER_PARAM = 32

# Keeps 0/0 comparisons finite; zero gradients on both sides give 0.
REL_ERROR_FLOOR = float(np.finfo(np.float64).eps)


@dataclasses.dataclass
class GradCheckReport:
    op_name: str
    max_rel_error: float
    max_abs_error: float
    tol_rel: float
    tol_abs: float
    num_checked: int = 0
    num_skipped: int = 0
    num_failed: int = 0

    @property
    def passed(self) -> bool:
        return (self.max_rel_error <= self.tol_rel or
                self.max_abs_error <= self.tol_abs)

    def row(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{self.op_name:<22} {status:<5} "
                f"rel={self.max_rel_error:.3e} abs={self.max_abs_error:.3e} "
                f"checked={self.num_checked} failed={self.num_failed} "
                f"skipped={self.num_skipped}")


def _evaluate(f: Callable[[], Node]) -> tuple[float, list[np.ndarray]]:
    with no_grad(), record_kinks() as patterns:
        value = float(f().value)
    return value, patterns


def _same_pieces(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return len(a) == len(b) and all(
        np.array_equal(x, y) for x, y in zip(a, b))


def finite_diff_check(
    f: Callable[[], Node],
    params: Mapping[str, Node],
    h: float = DEFAULT_STEP,
    tol_rel: float = DEFAULT_TOL_REL,
    tol_abs: float = DEFAULT_TOL_ABS,
    num_samples: int = MIN_SAMPLES_PER_PARAM,
    seed: int = 0,
    op_name: str = "f",
) -> GradCheckReport:
    """Compares analytic gradients of `f` against central differences.

    Args:
        f: Deterministic function building a scalar loss node from the
            current values of `params`.
        params: Leaf nodes to check, by name. Their values are perturbed in
            place and restored.
        h: Finite-difference step.
        tol_rel: Relative tolerance.
        tol_abs: Absolute tolerance.
        num_samples: Coordinates sampled per parameter (all if fewer).
        seed: Seed of the coordinate sampler.
        op_name: Name reported back.

    Coordinates whose +h and -h evaluations select different ReLU/max
    pieces straddle a kink; they are skipped and counted.

    The report passes when the largest relative error is within `tol_rel`
    or the largest absolute error is within `tol_abs`.
    """
    if h <= 0:
        raise ValueError(f"Finite-difference step must be positive, got {h}")

    for param in params.values():
        param.zero_grad()
    backward(f())

    rng = np.random.default_rng(seed)
    report = GradCheckReport(op_name=op_name,
                             max_rel_error=0.0,
                             max_abs_error=0.0,
                             tol_rel=tol_rel,
                             tol_abs=tol_abs)

    for param in params.values():
        analytic = (param.grad if param.grad is not None else np.zeros_like(
            param.value))
        size = param.value.size
        if size <= num_samples:
            coords = np.arange(size)
        else:
            coords = np.sort(rng.choice(size, num_samples, replace=False))

        for flat_index in coords:
            index = np.unravel_index(flat_index, param.value.shape)
            original = param.value[index]

            param.value[index] = original + h
            plus, plus_pieces = _evaluate(f)
            param.value[index] = original - h
            minus, minus_pieces = _evaluate(f)
            param.value[index] = original

            if not _same_pieces(plus_pieces, minus_pieces):
                report.num_skipped += 1
                continue

            numeric = (plus - minus) / (2 * h)
            exact = float(analytic[index])
            abs_error = abs(exact - numeric)
            rel_error = abs_error / max(abs(exact), abs(numeric),
                                        REL_ERROR_FLOOR)

            report.num_checked += 1
            if rel_error > tol_rel and abs_error > tol_abs:
                report.num_failed += 1
            report.max_abs_error = max(report.max_abs_error, abs_error)
            report.max_rel_error = max(report.max_rel_error, rel_error)

    return report
