"""Learnable noise-residual layer seeded from SRM high-pass filters.

The bank holds 3 residual output channels x 3 color channels of 5x5
kernels, no bias.  Each kernel starts as one of the three classic SRM
filters (second-order 3x3, the 5x5 "KV" kernel, first-order 1x3), each of
which sums to zero, so at init the layer annihilates constant images
exactly.  Input is padded by edge replication so that property holds all
the way to the borders and the output keeps the input's spatial size.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor
from .layers import Conv2dParams, SizedInputError, conv2d, pad2d


def _embed5(k3: np.ndarray) -> np.ndarray:
    out = np.zeros((5, 5), dtype=np.float64)
    out[1:4, 1:4] = k3
    return out


SRM_FILTERS = (
    _embed5(np.array([[-1, 2, -1],
                      [2, -4, 2],
                      [-1, 2, -1]], dtype=np.float64) / 4.0),
    np.array([[-1, 2, -2, 2, -1],
              [2, -6, 8, -6, 2],
              [-2, 8, -12, 8, -2],
              [2, -6, 8, -6, 2],
              [-1, 2, -2, 2, -1]], dtype=np.float64) / 12.0,
    _embed5(np.array([[0, 0, 0],
                      [1, -2, 1],
                      [0, 0, 0]], dtype=np.float64) / 2.0),
)

PAD = 2  # 5x5 kernels, stride 1: shape-preserving


class ResidualKernelBank:
    """The residual layer's parameter: weight (3, 3, 5, 5), freezable as a unit."""

    def __init__(self, weight: Tensor):
        if weight.shape != (3, 3, 5, 5):
            raise ValueError(f"residual bank weight must be (3,3,5,5), got {list(weight.shape)}")
        self.weight = weight

    @property
    def frozen(self) -> bool:
        return self.weight.frozen


def init_srm() -> ResidualKernelBank:
    """Bank with weight[k][c] = SRM_k / 3 for every color channel c.

    The 1/3 split makes the three color copies of one filter sum back to
    the canonical single-channel SRM response.
    """
    w = np.empty((3, 3, 5, 5), dtype=np.float64)
    for k, f in enumerate(SRM_FILTERS):
        w[k, :] = f / 3.0
    return ResidualKernelBank(Tensor(w, requires_grad=True, param_id="residual.weight"))


def apply_residual(image: Tensor, bank: ResidualKernelBank) -> Tensor:
    """Shape-preserving residual extraction of a (3, H, W) image."""
    if image.data.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"residual input must be (3,H,W), got {list(image.shape)}")
    _, h, w = image.shape
    if h < 5 or w < 5:
        raise SizedInputError(
            f"residual layer: input {h}x{w} is below the 5x5 minimum")
    padded = pad2d(image, PAD, mode="edge")
    return conv2d(padded, Conv2dParams(weight=bank.weight, bias=None, stride=1, padding=0))


def set_frozen(bank: ResidualKernelBank, flag: bool) -> None:
    """Toggle whether the bank is excluded from optimizer updates."""
    bank.weight.frozen = bool(flag)
