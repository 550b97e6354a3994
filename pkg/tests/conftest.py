"""
Shared fixtures: seeded generators, tiny model configs, a small synthetic
dataset and the central-difference gradient harness
"""

from contextlib import contextmanager
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pytest

from dpaseg.core import functional as F
from dpaseg.core.network import ModelConfig
from dpaseg.core.tensor import Parameter, Tensor, no_grad
from dpaseg.utils.synthetic import gen_synthetic

FD_STEP = 1e-5

TINY_WIDTHS = (2, 3, 4, 5, 6)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config() -> ModelConfig:
    """Full model (IMA + IFA) small enough for per-test forward passes"""
    return ModelConfig(resolution=16, widths=TINY_WIDTHS, n_refs=2, seed=3)


@pytest.fixture
def tiny_dataset():
    return gen_synthetic(seed=11, n_videos=3, length=6, height=16, width=16, difficulty=0.5)


def param(rng: np.random.Generator, *shape: int, scale: float = 1.0) -> Parameter:
    return Parameter(rng.normal(0.0, scale, size=shape))


def projection_loss(out: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar sum(out * W) with a fixed random W, so every output entry matters"""
    return (out * Tensor(weights)).sum()


@contextmanager
def relu_patterns() -> Iterator[List[np.ndarray]]:
    """Collect the activation mask of every ReLU evaluated inside the block"""
    masks: List[np.ndarray] = []
    original = F.ReLU.forward

    def recording_forward(self, x):
        out = original(self, x)
        masks.append(self.mask)
        return out

    F.ReLU.forward = recording_forward
    try:
        yield masks
    finally:
        F.ReLU.forward = original


def _evaluate(loss_fn: Callable[[], Tensor]) -> Tuple[float, List[np.ndarray]]:
    with no_grad(), relu_patterns() as masks:
        value = loss_fn().item()
    return value, masks


def _same_pattern(a: List[np.ndarray], b: List[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def numeric_gradient(
    loss_fn: Callable[[], Tensor],
    tensor: Tensor,
    index: tuple,
    h: float = FD_STEP,
    reference: Optional[List[np.ndarray]] = None,
) -> Optional[float]:
    """
    Central difference of loss_fn with respect to one entry of `tensor`.

    With a `reference` ReLU pattern, returns None when either step flips a
    ReLU, since the difference then straddles a kink.
    """
    original = tensor.data[index]
    tensor.data[index] = original + h
    plus, plus_masks = _evaluate(loss_fn)
    tensor.data[index] = original - h
    minus, minus_masks = _evaluate(loss_fn)
    tensor.data[index] = original
    if reference is not None and not (_same_pattern(reference, plus_masks) and _same_pattern(reference, minus_masks)):
        return None
    return (plus - minus) / (2.0 * h)


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    samples_per_tensor: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    h: float = FD_STEP,
    skip_kinks: bool = True,
    max_skip_fraction: float = 0.5,
) -> float:
    """
    Compare backward() with central differences.

    Returns the max-norm relative error max|a - n| / max(|a|, |n|) over every
    checked entry of every tensor. With `samples_per_tensor` set, only that
    many random entries of each tensor are perturbed. Entries whose steps
    cross a ReLU kink are skipped, up to `max_skip_fraction` of them.
    """
    for t in tensors:
        t.zero_grad()
    loss_fn().backward()
    reference = _evaluate(loss_fn)[1] if skip_kinks else None

    rng = rng or np.random.default_rng(0)
    analytic: List[float] = []
    numeric: List[float] = []
    skipped = 0
    for t in tensors:
        grad = t.grad if t.grad is not None else np.zeros_like(t.data)
        indices = list(np.ndindex(t.shape))
        if samples_per_tensor is not None and len(indices) > samples_per_tensor:
            picks = rng.choice(len(indices), size=samples_per_tensor, replace=False)
            indices = [indices[i] for i in picks]
        for index in indices:
            value = numeric_gradient(loss_fn, t, index, h, reference)
            if value is None:
                skipped += 1
                continue
            analytic.append(grad[index])
            numeric.append(value)

    assert numeric, "every step crossed a ReLU kink"
    assert skipped <= max_skip_fraction * (skipped + len(numeric)), f"{skipped} entries crossed a ReLU kink"
    analytic_arr, numeric_arr = np.array(analytic), np.array(numeric)
    scale = max(np.abs(analytic_arr).max(), np.abs(numeric_arr).max())
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic_arr - numeric_arr).max() / scale)
