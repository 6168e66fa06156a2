"""Pseudo-batch gradient descent and its degenerate modes.

Per-example gradients are accumulated until n_u examples have been seen,
then the parameters step once.  With fixed-size inputs this is exactly
mini-batch descent: the demo checks the trajectories agree to double
precision, and shows the adaptive update-batch rule.

Run: python demos/04_pseudo_batch_descent.py
"""

import numpy as np

from pbgdnet.tensor import Tape, Tensor, add_n, backward, scale, zero_grads
from pbgdnet.layers import softmax_cross_entropy
from pbgdnet.model import TinyNet, model_forward
from pbgdnet.optim import GradAccumulator, accumulate, compute_adaptive_nu, step

rng = np.random.default_rng(3)
images = [Tensor(rng.uniform(size=(3, 16, 16))) for _ in range(16)]
labels = [int(i % 2) for i in range(16)]
eta, n_u = 0.05, 8


def fresh():
    return TinyNet(spp_scales=(1, 2), residual=False, seed=11)


# Route 1: pseudo-batch -- one image per tape, alpha = 1/n_u, step every n_u.
pbgd = fresh()
params = pbgd.trainable_parameters()
acc = GradAccumulator(params)
for start in range(0, 16, n_u):
    for i in range(start, start + n_u):
        with Tape() as tape:
            loss = scale(softmax_cross_entropy(model_forward(images[i], pbgd), labels[i]),
                         1.0 / n_u)
        backward(loss, tape)
        accumulate(acc, params, 1)
        zero_grads(params)
    step(acc, params, eta)

# Route 2: conventional mini-batch -- one tape per batch, mean loss.
mbgd = fresh()
params2 = mbgd.trainable_parameters()
acc2 = GradAccumulator(params2)
for start in range(0, 16, n_u):
    with Tape() as tape:
        losses = [softmax_cross_entropy(model_forward(images[i], mbgd), labels[i])
                  for i in range(start, start + n_u)]
        batch_loss = scale(add_n(losses), 1.0 / n_u)
    backward(batch_loss, tape)
    accumulate(acc2, params2, n_u)
    zero_grads(params2)
    step(acc2, params2, eta)

worst = max(np.abs(a.data - b.data).max() / max(np.abs(b.data).max(), 1e-30)
            for a, b in zip(pbgd.parameters(), mbgd.parameters()))
print(f"PBGD(n_i=1, n_u={n_u}) vs mini-batch({n_u}): worst relative parameter "
      f"difference = {worst:.2e}")

# Adaptive n_u: smallest number of upcoming images reaching the average
# pixel count of the training set.
dims = [(120, 80), (50, 40), (60, 60), (200, 150), (48, 48)]
avg = float(np.mean([w * h for w, h in dims]))
print(f"\naverage pixels N = {avg:.0f}")
remaining = list(dims)
while remaining:
    nu = compute_adaptive_nu(remaining, avg)
    batch, remaining = remaining[:nu], remaining[nu:]
    print(f"  update batch of {nu}: {batch} "
          f"({sum(w * h for w, h in batch)} px)")
