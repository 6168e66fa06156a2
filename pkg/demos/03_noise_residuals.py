"""The SRM-initialized residual layer: what a high-pass front end sees.

Writes residual maps for a synthetic image with a pasted patch into
demos/out/.  Run: python demos/03_noise_residuals.py
"""

from pathlib import Path

import numpy as np

from pbgdnet.tensor import Tensor
from pbgdnet.data import normalize_minmax, save_pgm, save_ppm
from pbgdnet.residual import SRM_FILTERS, apply_residual, init_srm

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

bank = init_srm()
print("residual kernel bank: weight", list(bank.weight.shape), "(no bias)")
for k, name in enumerate(("second-order 3x3", "5x5 KV", "first-order")):
    print(f"  kernel {k} ({name}): slice sum = {SRM_FILTERS[k].sum():+.1e}")

# Constant regions vanish: the layer responds only to texture.
flat = Tensor(np.full((3, 16, 16), 0.4))
print(f"\nmax |residual| of a constant image: {np.abs(apply_residual(flat, bank).data).max():.2e}")

# Build a smooth background with a noisy pasted patch (a crude splice).
rng = np.random.default_rng(7)
yy, xx = np.mgrid[0:96, 0:128]
smooth = 0.4 + 0.2 * np.sin(xx / 25.0) * np.cos(yy / 19.0)
img = np.stack([smooth, smooth * 0.9, smooth * 1.1]).clip(0, 1)
patch = rng.uniform(0.3, 0.7, size=(3, 24, 32))
img[:, 40:64, 60:92] = patch

save_ppm(out_dir / "spliced.ppm", img)
residual = apply_residual(Tensor(img), bank).data
for k in range(3):
    save_pgm(out_dir / f"residual.{k}.pgm", normalize_minmax(residual[k]))

inside = np.abs(residual[:, 40:64, 60:92]).mean()
outside = np.abs(residual[:, :40, :]).mean()
print(f"\nmean |residual| inside pasted patch : {inside:.4f}")
print(f"mean |residual| on smooth background: {outside:.4f}")
print(f"wrote spliced.ppm and residual.{{0,1,2}}.pgm to {out_dir}")
