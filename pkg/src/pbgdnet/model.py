"""TinyNet: a small fixed backbone that accepts any image size.

Pipeline: optional residual layer -> conv(3->16) relu pool2 ->
conv(16->32) relu pool2 -> conv(32->32) relu -> SPP {1,2,4} ->
linear(672 -> 2).  The pyramid makes the feature length independent of the
input size, so one set of head weights serves every resolution.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor
from .layers import (Conv2dParams, SizedInputError, SppSpec, conv2d, linear,
                     maxpool2d, relu, spp)
from .residual import ResidualKernelBank, apply_residual, init_srm

N_CLASSES = 2
_BACKBONE_CHANNELS = (16, 32, 32)
_POOLS = 2  # two 2x2 stride-2 pools ahead of the pyramid


def _kaiming_uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class TinyNet:
    """Fixed-architecture classifier over variable-size (3, H, W) images."""

    def __init__(self, spp_scales=(1, 2, 4), residual: bool = True, seed: int = 0):
        self.spp_spec = SppSpec(scales=tuple(int(s) for s in spp_scales))
        rng = np.random.default_rng(seed)
        ch = _BACKBONE_CHANNELS
        self.convs: list[Conv2dParams] = []
        cin = 3
        for li, cout in enumerate(ch, start=1):
            w = _kaiming_uniform(rng, (cout, cin, 3, 3), fan_in=cin * 9)
            if li == 1:
                # cancel the mean of [0,1] inputs so no first-layer filter
                # starts saturated or dead under the ReLU
                b = -0.5 * w.sum(axis=(1, 2, 3))
            else:
                b = np.zeros(cout)
            self.convs.append(Conv2dParams(
                weight=Tensor(w, requires_grad=True, param_id=f"conv{li}.weight"),
                bias=Tensor(b, requires_grad=True, param_id=f"conv{li}.bias"),
                stride=1, padding=1))
            cin = cout
        feat = ch[-1] * self.spp_spec.bins
        self.fc_weight = Tensor(_kaiming_uniform(rng, (N_CLASSES, feat), fan_in=feat),
                                requires_grad=True, param_id="fc.weight")
        self.fc_bias = Tensor(np.zeros(N_CLASSES), requires_grad=True, param_id="fc.bias")
        self.residual_bank: ResidualKernelBank | None = init_srm() if residual else None

    @property
    def min_input_side(self) -> int:
        # Largest pyramid scale must survive the backbone's downsampling;
        # the residual layer's own 5px minimum is below this for any scale set.
        side = max(self.spp_spec.scales) * (2 ** _POOLS)
        return max(side, 5 if self.residual_bank is not None else 1)

    def parameters(self) -> list[Tensor]:
        ps: list[Tensor] = []
        if self.residual_bank is not None:
            ps.append(self.residual_bank.weight)
        for cp in self.convs:
            ps.append(cp.weight)
            ps.append(cp.bias)
        ps.append(self.fc_weight)
        ps.append(self.fc_bias)
        return ps

    def backbone_parameters(self) -> list[Tensor]:
        """Everything except the residual bank (backbone plus head)."""
        return [p for p in self.parameters() if not p.param_id.startswith("residual.")]

    def trainable_parameters(self) -> list[Tensor]:
        return [p for p in self.parameters() if not p.frozen]

    def forward(self, image: Tensor) -> Tensor:
        return model_forward(image, self)


def model_forward(image: Tensor, model: TinyNet) -> Tensor:
    """Image (3, H, W) -> logits (2,), any H, W above the model minimum."""
    if image.data.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"model input must be (3,H,W), got {list(image.shape)}")
    _, h, w = image.shape
    m = model.min_input_side
    if h < m or w < m:
        raise SizedInputError(
            f"model input {h}x{w} is below the {m}x{m} minimum")
    x = image
    if model.residual_bank is not None:
        x = apply_residual(x, model.residual_bank)
    for li, cp in enumerate(model.convs):
        x = relu(conv2d(x, cp))
        if li < _POOLS:
            x = maxpool2d(x, 2)
    feats = spp(x, model.spp_spec)
    return linear(feats, model.fc_weight, model.fc_bias)
