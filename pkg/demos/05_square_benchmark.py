"""The Square toy task: why fixed-size resizing destroys the label.

Each image carries one filled rectangle; the class says whether it is a
square.  The rectangle's aspect is independent of the image's aspect, so
resizing to a fixed canvas multiplies the rectangle aspect by H/W and the
classes blur into each other.  The demo shows that geometric damage
directly, then runs a couple of training epochs end to end at native and
fixed resolution.  Run: python demos/05_square_benchmark.py
"""

import numpy as np

from pbgdnet.tensor import Tensor
from pbgdnet.data import (ImageSample, InMemoryDataset, SquareConfig,
                          render_square_sample, resize_bilinear)
from pbgdnet.model import TinyNet
from pbgdnet.optim import PBGDConfig
from pbgdnet.training import make_state, plain_train

cfg = SquareConfig(count=240, seed=42)
rng = np.random.default_rng(cfg.seed)

print("what resizing to 64x64 does to square rectangles:")
for _ in range(5):
    img, geom = render_square_sample(rng, cfg, label=1)
    w, h = geom["size"]
    _, _, rw, rh = geom["rect"]
    new_aspect = (rw * 64 / w) / (rh * 64 / h)
    print(f"  image {w:>3}x{h:<3}: square {rw}x{rh} -> aspect {new_aspect:.2f} after resizing")

print("\nand to non-square rectangles (some land near 1.0 and look square):")
for _ in range(5):
    img, geom = render_square_sample(rng, cfg, label=0)
    w, h = geom["size"]
    _, _, rw, rh = geom["rect"]
    old = rw / rh
    new_aspect = (rw * 64 / w) / (rh * 64 / h)
    print(f"  image {w:>3}x{h:<3}: rect {rw}x{rh} (aspect {old:.2f}) -> {new_aspect:.2f}")

# A short end-to-end run of both pipelines (two epochs only: this is about
# exercising the machinery, not about reaching the experiment's accuracy;
# squareness is a slow-burning task for a small from-scratch backbone).
labels = np.repeat([0, 1], cfg.count // 2)
rng = np.random.default_rng(cfg.seed)
rng.shuffle(labels)
native, resized = [], []
for i, lab in enumerate(labels):
    img, _ = render_square_sample(rng, cfg, int(lab))
    native.append(ImageSample(Tensor(img), int(lab), f"n{i}"))
    resized.append(ImageSample(resize_bilinear(img, 64, 64), int(lab), f"r{i}"))

n_train = int(0.8 * cfg.count)
opt = PBGDConfig(eta=1e-4, alpha=64.0, n_u=8)
for name, samples in (("arbitrary-size", native), ("resized-to-64x64", resized)):
    model = TinyNet(residual=False, seed=42)
    state = make_state(model, opt, seed=[42, 1])
    plain_train(state, InMemoryDataset(samples[:n_train]),
                InMemoryDataset(samples[n_train:]), opt, epochs=2)
    losses = ", ".join(f"{r['train_loss']:.4f}" for r in state.history)
    print(f"\n{name}: per-epoch training loss {losses}")
print("\n(the full 2000-image, 10-epoch protocol lives in tests/test_acceptance.py)")
