"""Tour of the tensor core: tapes, backward, gradient accumulation.

Run: python demos/01_autodiff_basics.py
"""

import numpy as np

from pbgdnet.tensor import Tensor, Tape, add, backward, matmul, mul, sum_all, zero_grads

# A tape records every differentiable op executed while it is active.
x = Tensor([3.0], requires_grad=True, param_id="x")
with Tape() as tape:
    y = mul(x, x)
backward(y, tape)
print(f"d(x^2)/dx at x=3      -> {x.grad[0]}")

# Gradients accumulate until cleared; two backward passes double them.
backward(y, tape)
print(f"after second backward -> {x.grad[0]}  (accumulates additively)")
zero_grads([x])

# Anything built from the primitives differentiates end to end.
rng = np.random.default_rng(0)
w = Tensor(rng.normal(size=(2, 3)), requires_grad=True, param_id="w")
v = Tensor(rng.normal(size=(3, 2)), requires_grad=True, param_id="v")
with Tape() as tape:
    z = sum_all(mul(matmul(w, v), matmul(w, v)))
backward(z, tape)
print(f"\nloss = sum((w@v)^2) at random w, v: {z.item():.6f}")
print(f"dz/dw norm {np.linalg.norm(w.grad):.6f}, dz/dv norm {np.linalg.norm(v.grad):.6f}")

# Central finite differences agree with the analytic gradient.
h = 1e-6
i, j = 1, 2
orig = w.data[i, j]
w.data[i, j] = orig + h
zp = sum_all(mul(matmul(w, v), matmul(w, v))).item()
w.data[i, j] = orig - h
zm = sum_all(mul(matmul(w, v), matmul(w, v))).item()
w.data[i, j] = orig
fd = (zp - zm) / (2 * h)
print(f"\nanalytic dz/dw[{i},{j}] = {w.grad[i, j]:.9f}")
print(f"numeric  dz/dw[{i},{j}] = {fd:.9f}")
