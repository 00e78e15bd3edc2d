"""
Finite-difference gradient verification.

`check_gradients` compares the tape gradient of a scalar loss against
central differences (h = 1e-5) and reports the worst relative error
|a - n| / max(|a|, |n|, 1e-6). Suites build a random problem from a seed;
op suites live here, network suites are registered by `tryon.verify`.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from . import ops
from .tensor import Tensor, backward, no_grad

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4
RELATIVE_FLOOR = 1e-6

LossFn = Callable[[], Tensor]
SuiteBuilder = Callable[[np.random.Generator], Tuple[LossFn, Dict[str, Tensor]]]


@dataclass
class GradcheckResult:
    suite: str
    seed: int
    max_rel_error: float
    worst: str
    checked: int
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_error)) and self.max_rel_error < self.tolerance

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "seed": self.seed,
            "max_rel_error": self.max_rel_error,
            "worst": self.worst,
            "checked": self.checked,
            "passed": self.passed,
        }


def relative_error(analytic: float, numeric: float, floor: float = RELATIVE_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_gradients(loss_fn: LossFn, tensors: Dict[str, Tensor], rng: Optional[np.random.Generator] = None,
                    h: float = DEFAULT_STEP, max_coords: Optional[int] = None) -> Tuple[float, str, int]:
    """
    Compare analytic and central-difference gradients of `loss_fn`.

    Args:
        loss_fn: rebuilds the scalar loss from the current tensor values
        tensors: named tensors to perturb; each must have requires_grad set
        rng: picks the coordinates when `max_coords` limits them
        h: finite-difference step
        max_coords: coordinates checked per tensor (all when None)

    Returns:
        (max relative error, "<tensor>[index]" of the worst coordinate, coordinates checked)
    """
    rng = rng or np.random.default_rng(0)
    for tensor in tensors.values():
        tensor.grad = None
    backward(loss_fn())
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for name, t in tensors.items()}

    worst_error, worst_name, checked = 0.0, "", 0
    with no_grad():
        for name, tensor in tensors.items():
            if max_coords is not None and tensor.size > max_coords:
                coords = rng.choice(tensor.size, size=max_coords, replace=False)
            else:
                coords = range(tensor.size)
            for flat in coords:
                index = np.unravel_index(int(flat), tensor.shape)
                original = tensor.data[index]
                tensor.data[index] = original + h
                plus = loss_fn().item()
                tensor.data[index] = original - h
                minus = loss_fn().item()
                tensor.data[index] = original
                numeric = (plus - minus) / (2.0 * h)
                error = relative_error(float(analytic[name][index]), numeric)
                checked += 1
                if error > worst_error or not np.isfinite(error):
                    worst_error, worst_name = error, f"{name}{list(index)}"
    return worst_error, worst_name, checked


def projected_loss(out: Tensor, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    """A fixed random projection that turns any op output into a scalar."""
    weights = rng.normal(size=out.shape)
    return lambda value: ops.sum(ops.mul(value, weights))


def _leaf(rng: np.random.Generator, *shape, low: Optional[float] = None, high: Optional[float] = None) -> Tensor:
    if low is not None:
        return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)
    return Tensor(rng.normal(size=shape), requires_grad=True)


def _unary(op: Callable[[Tensor], Tensor], shape=(2, 3, 4)) -> SuiteBuilder:
    def build(rng):
        x = _leaf(rng, *shape)
        project = projected_loss(op(x), rng)
        return (lambda: project(op(x))), {"x": x}
    return build


def _binary(op: Callable[[Tensor, Tensor], Tensor], a_shape, b_shape, b_range=None) -> SuiteBuilder:
    def build(rng):
        a = _leaf(rng, *a_shape)
        if b_range is None:
            b = _leaf(rng, *b_shape)
        else:
            b = Tensor(rng.uniform(*b_range, size=b_shape) * rng.choice([-1.0, 1.0], size=b_shape),
                       requires_grad=True)
        project = projected_loss(op(a, b), rng)
        return (lambda: project(op(a, b))), {"a": a, "b": b}
    return build


def _conv_suite(stride: int, padding: int) -> SuiteBuilder:
    def build(rng):
        x = _leaf(rng, 2, 3, 6, 6)
        w = _leaf(rng, 4, 3, 3, 3)
        b = _leaf(rng, 4)
        fn = lambda: ops.conv2d(x, w, b, stride=stride, padding=padding)  # noqa: E731
        project = projected_loss(fn(), rng)
        return (lambda: project(fn())), {"x": x, "weight": w, "bias": b}
    return build


def _concat_suite(axis: int) -> SuiteBuilder:
    def build(rng):
        a = _leaf(rng, 2, 3, 4, 4)
        b = _leaf(rng, 2, 3, 4, 4)
        fn = lambda: ops.concat([a, b, a], axis=axis)  # noqa: E731
        project = projected_loss(fn(), rng)
        return (lambda: project(fn())), {"a": a, "b": b}
    return build


def _linear_suite(rng):
    x = _leaf(rng, 2, 5, 6)
    w = _leaf(rng, 3, 6)
    b = _leaf(rng, 3)
    fn = lambda: ops.linear(x, w, b)  # noqa: E731
    project = projected_loss(fn(), rng)
    return (lambda: project(fn())), {"x": x, "weight": w, "bias": b}


def _mse_suite(rng):
    a = _leaf(rng, 2, 4, 3, 3)
    b = _leaf(rng, 2, 4, 3, 3)
    return (lambda: ops.mse(a, b)), {"a": a, "b": b}


def _l2_suite(rng):
    x = _leaf(rng, 3, 4, 2, 2)
    fn = lambda: ops.l2_norm(x, axis=(1, 2, 3))  # noqa: E731
    project = projected_loss(fn(), rng)
    return (lambda: project(fn())), {"x": x}


def _reduction_suite(rng):
    x = _leaf(rng, 2, 3, 4)
    fn = lambda: ops.mul(ops.sum(x, axis=1, keepdims=True), ops.mean(x, axis=(0, 2)))  # noqa: E731
    project = projected_loss(fn(), rng)
    return (lambda: project(fn())), {"x": x}


OP_SUITES: Dict[str, SuiteBuilder] = {
    "add": _binary(ops.add, (2, 3, 4), (3, 1)),
    "sub": _binary(ops.sub, (2, 3, 4), (2, 3, 4)),
    "mul": _binary(ops.mul, (2, 1, 4), (3, 4)),
    "div": _binary(ops.div, (2, 3, 4), (2, 3, 4), b_range=(0.5, 2.0)),
    "sigmoid": _unary(ops.sigmoid),
    "silu": _unary(ops.silu),
    "reductions": _reduction_suite,
    "reshape_transpose": _unary(lambda x: ops.transpose(ops.reshape(x, (4, 6)), (1, 0))),
    "slice": _unary(lambda x: ops.slice_axis(x, 2, 1, 3)),
    "concat_channel": _concat_suite(1),
    "concat_width": _concat_suite(-1),
    "matmul": _binary(ops.matmul, (2, 3, 4), (4, 5)),
    "linear": _linear_suite,
    "softmax": _unary(lambda x: ops.softmax(x, axis=-1)),
    "conv2d": _conv_suite(stride=1, padding=1),
    "conv2d_strided": _conv_suite(stride=2, padding=1),
    "upsample_nearest": _unary(lambda x: ops.upsample_nearest(x, 2), shape=(1, 2, 3, 3)),
    "mse": _mse_suite,
    "l2_norm": _l2_suite,
}


def run_suite(name: str, builder: SuiteBuilder, seeds: Iterable[int], max_coords: Optional[int] = 8,
              tolerance: float = DEFAULT_TOLERANCE) -> List[GradcheckResult]:
    results = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        loss_fn, tensors = builder(rng)
        error, worst, checked = check_gradients(loss_fn, tensors, rng=rng, max_coords=max_coords)
        result = GradcheckResult(name, int(seed), float(error), worst, checked, tolerance)
        if not result.passed:
            logger.warning(f"gradcheck {name} seed={seed}: max rel error {error:.3e} at {worst}")
        results.append(result)
    return results
