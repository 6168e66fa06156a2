"""Spatial pyramid pooling: one feature length for every image size.

Run: python demos/02_variable_size_features.py
"""

import numpy as np

from pbgdnet.tensor import Tensor
from pbgdnet.layers import spp
from pbgdnet.model import TinyNet, model_forward

rng = np.random.default_rng(1)

print("SPP over scales {1,2,4}: 21 bins per channel, any H x W")
for h, w in ((17, 23), (64, 64), (48, 128), (101, 37)):
    x = Tensor(rng.uniform(size=(8, h, w)))
    feats = spp(x, (1, 2, 4))
    print(f"  input 8x{h}x{w:<4} -> feature length {feats.shape[0]}")

print("\nTinyNet logits are 2-vectors regardless of resolution:")
model = TinyNet(residual=False, seed=0)
for h, w in ((48, 64), (97, 33), (160, 160)):
    logits = model_forward(Tensor(rng.uniform(size=(3, h, w))), model)
    print(f"  image 3x{h}x{w:<4} -> logits {np.round(logits.data, 4)}")

print(f"\nminimum input side for this model: {model.min_input_side} px")
print("(the largest pyramid scale must survive two 2x downsamplings)")
