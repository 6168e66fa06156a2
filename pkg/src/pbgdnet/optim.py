"""Pseudo-batch gradient descent: decoupled input and update batches.

Gradients are computed on small input batches (size n_i, typically 1 so
images never need a common shape) and summed into an accumulator; the
parameters move only once n_u examples' worth of gradients have been
collected.  With fixed-size inputs this reproduces plain mini-batch
descent exactly: n_u = n_i is mini-batch, n_u = n_i = 1 is per-example
SGD, n_u = dataset size is full-batch descent.

The update batch size can also be chosen adaptively as the smallest
number of upcoming images whose total pixel count reaches the training
set's average image pixel count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .tensor import Tensor


class ParameterSetMismatchError(ValueError):
    """Accumulator and parameter list disagree."""


class EmptyAccumulatorError(RuntimeError):
    """step() called before any gradients were accumulated."""


@dataclass
class PBGDConfig:
    """Optimizer settings.

    ``alpha`` scales the per-input-batch loss; None means mean-loss
    semantics (1 / n_u, recomputed as 1 / count for a short end-of-epoch
    batch).  ``n_u`` is an integer or "adaptive".
    """
    eta: float = 1e-4
    alpha: Optional[float] = None
    n_i: int = 1
    n_u: Union[int, str] = 8
    lr_factor: float = 0.1
    lr_patience: int = 5

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.n_i < 1:
            raise ValueError(f"n_i must be >= 1, got {self.n_i}")
        if isinstance(self.n_u, str):
            if self.n_u != "adaptive":
                raise ValueError(f"n_u must be an integer or 'adaptive', got {self.n_u!r}")
        elif self.n_u < self.n_i:
            raise ValueError(f"n_u ({self.n_u}) must be >= n_i ({self.n_i})")


class GradAccumulator:
    """Per-parameter running gradient sums between updates."""

    def __init__(self, params: Sequence[Tensor]):
        ids = [p.param_id for p in params]
        if len(set(ids)) != len(ids) or None in ids:
            raise ParameterSetMismatchError("parameters need unique non-null param_ids")
        self._ids = tuple(ids)
        self._sums = {p.param_id: np.zeros_like(p.data) for p in params}
        self.examples_accumulated = 0

    @property
    def count(self) -> int:
        return self.examples_accumulated

    def sum_for(self, param_id: str) -> np.ndarray:
        return self._sums[param_id]

    def _check(self, params: Sequence[Tensor]) -> None:
        if tuple(p.param_id for p in params) != self._ids:
            raise ParameterSetMismatchError(
                f"parameter set changed: accumulator holds {list(self._ids)}")


def accumulate(acc: GradAccumulator, params: Sequence[Tensor], n_examples: int) -> None:
    """Add each parameter's current gradient into the running sums.

    Gradients are expected to come from backward() on an input-batch loss
    of the form alpha * sum of per-example losses; a parameter left
    untouched by backward counts as a zero gradient.
    """
    acc._check(params)
    for p in params:
        if p.grad is not None:
            acc._sums[p.param_id] += p.grad
    acc.examples_accumulated += int(n_examples)


def step(acc: GradAccumulator, params: Sequence[Tensor], eta: float,
         rescale: float = 1.0) -> None:
    """theta <- theta - eta * accumulated sums, then clear the accumulator."""
    if acc.examples_accumulated == 0:
        raise EmptyAccumulatorError("step() on an empty accumulator")
    acc._check(params)
    k = float(eta) * float(rescale)
    for p in params:
        s = acc._sums[p.param_id]
        p.data -= k * s
        s[...] = 0.0
    acc.examples_accumulated = 0


def compute_adaptive_nu(image_dims: Sequence[tuple[int, int]], avg_pixels: float) -> int:
    """Smallest prefix of (w, h) dims whose total pixels reach avg_pixels.

    Falls back to the full list length when even the whole list stays
    short (the end-of-epoch remainder).
    """
    if avg_pixels <= 0:
        raise ValueError(f"average pixel count must be positive, got {avg_pixels}")
    if not image_dims:
        raise ValueError("empty dimension list")
    total = 0
    for n, (w, h) in enumerate(image_dims, start=1):
        if w <= 0 or h <= 0:
            raise ValueError(f"nonpositive image dimensions ({w}, {h})")
        total += w * h
        if total >= avg_pixels:
            return n
    return len(image_dims)


@dataclass
class PlateauState:
    """Learning-rate schedule state: divide eta when validation stalls."""
    current_eta: float
    best_val_acc: float = float("-inf")
    epochs_since_improve: int = 0


def plateau_update(state: PlateauState, val_acc: float, factor: float = 0.1,
                   patience: int = 5) -> float:
    """Track validation accuracy; after `patience` epochs without a new
    best, multiply eta by `factor`.  Returns the eta to use next."""
    if not 0.0 <= val_acc <= 1.0:
        raise ValueError(f"validation accuracy must be in [0,1], got {val_acc}")
    if val_acc > state.best_val_acc:
        state.best_val_acc = val_acc
        state.epochs_since_improve = 0
    else:
        state.epochs_since_improve += 1
        if state.epochs_since_improve >= patience:
            state.current_eta *= factor
            state.epochs_since_improve = 0
    return state.current_eta
