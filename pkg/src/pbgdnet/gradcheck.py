"""Central finite-difference verification of every backward rule.

Each case builds a tiny randomized graph, runs one analytic backward pass,
then re-evaluates the forward function with coordinates nudged by +-h.
Error is |analytic - numeric| / max(1, |analytic|, |numeric|), so it reads
as absolute near zero and relative away from it.  Coordinates are
subsampled deterministically for the bigger tensors.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import (Tape, Tensor, add, backward, matmul, mul, scale, sub,
                     sum_all, zero_grads)
from .layers import (Conv2dParams, conv2d, linear, maxpool2d, pad2d, relu,
                     softmax_cross_entropy, spp)
from .model import TinyNet, model_forward
from .residual import apply_residual, init_srm

DEFAULT_TOL = 1e-5
FD_STEP = 1e-6


@dataclass
class OpReport:
    name: str
    max_rel_err: float
    coords: int
    passed: bool


def _check_case(tensors: Sequence[Tensor], forward: Callable[[], Tensor],
                rng: np.random.Generator, tol: float,
                max_coords: int = 24) -> tuple[float, int]:
    with Tape() as tape:
        loss = forward()
    backward(loss, tape)
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
                for t in tensors]
    zero_grads(tensors)
    worst = 0.0
    checked = 0
    for t, ga in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        gflat = ga.reshape(-1)
        n = flat.size
        idx = np.arange(n) if n <= max_coords else np.sort(
            rng.choice(n, size=max_coords, replace=False))
        for i in idx:
            orig = flat[i]
            flat[i] = orig + FD_STEP
            fp = forward().item()
            flat[i] = orig - FD_STEP
            fm = forward().item()
            flat[i] = orig
            numeric = (fp - fm) / (2 * FD_STEP)
            denom = max(1.0, abs(gflat[i]), abs(numeric))
            worst = max(worst, abs(gflat[i] - numeric) / denom)
            checked += 1
    return worst, checked


def _rand(rng, *shape, lo=-1.0, hi=1.0):
    return Tensor(rng.uniform(lo, hi, size=shape), requires_grad=True)


def _case_add(rng):
    a, b = _rand(rng, 3, 4), _rand(rng, 3, 4)
    proj = rng.normal(size=(3, 4))
    return [a, b], lambda: sum_all(mul(add(a, b), Tensor(proj)))


def _case_sub(rng):
    a, b = _rand(rng, 2, 5), _rand(rng, 2, 5)
    proj = rng.normal(size=(2, 5))
    return [a, b], lambda: sum_all(mul(sub(a, b), Tensor(proj)))


def _case_mul(rng):
    a, b = _rand(rng, 4, 3), _rand(rng, 4, 3)
    proj = rng.normal(size=(4, 3))
    return [a, b], lambda: sum_all(mul(mul(a, b), Tensor(proj)))


def _case_scale(rng):
    a = _rand(rng, 6)
    k = float(rng.uniform(0.5, 2.0))
    proj = rng.normal(size=6)
    return [a], lambda: sum_all(mul(scale(a, k), Tensor(proj)))


def _case_matmul(rng):
    m, k, n = (int(rng.integers(2, 6)) for _ in range(3))
    a, b = _rand(rng, m, k), _rand(rng, k, n)
    proj = rng.normal(size=(m, n))
    return [a, b], lambda: sum_all(mul(matmul(a, b), Tensor(proj)))


def _case_relu(rng):
    # keep activations away from the kink by at least 0.05
    vals = rng.uniform(0.05, 1.0, size=(3, 7)) * rng.choice([-1.0, 1.0], size=(3, 7))
    x = Tensor(vals, requires_grad=True)
    proj = rng.normal(size=(3, 7))
    return [x], lambda: sum_all(mul(relu(x), Tensor(proj)))


def _case_maxpool2d(rng):
    h, w = int(rng.integers(4, 9)), int(rng.integers(4, 9))
    x = _rand(rng, 2, h, w)
    proj = rng.normal(size=maxpool2d(Tensor(x.data), 2).shape)
    return [x], lambda: sum_all(mul(maxpool2d(x, 2), Tensor(proj)))


def _case_conv2d(rng):
    h, w = int(rng.integers(5, 10)), int(rng.integers(5, 10))
    x = _rand(rng, 2, h, w)
    wt = _rand(rng, 3, 2, 3, 3, lo=-0.5, hi=0.5)
    b = _rand(rng, 3, lo=-0.2, hi=0.2)
    proj = rng.normal(size=(3, h, w))

    def fwd():
        y = conv2d(x, Conv2dParams(weight=wt, bias=b, stride=1, padding=1))
        return sum_all(mul(y, Tensor(proj)))

    return [x, wt, b], fwd


def _case_spp(rng):
    h, w = int(rng.integers(4, 12)), int(rng.integers(4, 12))
    x = _rand(rng, 2, h, w)
    proj = rng.normal(size=2 * 21)
    return [x], lambda: sum_all(mul(spp(x, (1, 2, 4)), Tensor(proj)))


def _case_linear(rng):
    d, k = int(rng.integers(3, 8)), int(rng.integers(2, 5))
    x, wt, b = _rand(rng, d), _rand(rng, k, d), _rand(rng, k)
    proj = rng.normal(size=k)
    return [x, wt, b], lambda: sum_all(mul(linear(x, wt, b), Tensor(proj)))


def _case_softmax_cross_entropy(rng):
    k = int(rng.integers(2, 6))
    logits = _rand(rng, k, lo=-2.0, hi=2.0)
    label = int(rng.integers(0, k))
    return [logits], lambda: softmax_cross_entropy(logits, label)


def _case_pad2d_edge(rng):
    x = _rand(rng, 2, 4, 5)
    proj = rng.normal(size=(2, 8, 9))
    return [x], lambda: sum_all(mul(pad2d(x, 2, "edge"), Tensor(proj)))


def _case_residual_layer(rng):
    img = Tensor(rng.uniform(0.1, 0.9, size=(3, 8, 9)), requires_grad=True)
    bank = init_srm()
    proj = rng.normal(size=(3, 8, 9))

    def fwd():
        return sum_all(mul(apply_residual(img, bank), Tensor(proj)))

    return [img, bank.weight], fwd


def _case_model_forward(rng):
    h, w = int(rng.integers(8, 14)), int(rng.integers(8, 14))
    model = TinyNet(spp_scales=(1, 2), residual=True, seed=int(rng.integers(1 << 30)))
    img = Tensor(rng.uniform(0.1, 0.9, size=(3, h, w)), requires_grad=True)
    label = int(rng.integers(0, 2))

    def fwd():
        return softmax_cross_entropy(model_forward(img, model), label)

    return [img] + model.parameters(), fwd


CASES: dict[str, Callable] = {
    "add": _case_add,
    "sub": _case_sub,
    "mul": _case_mul,
    "scale": _case_scale,
    "matmul": _case_matmul,
    "relu": _case_relu,
    "maxpool2d": _case_maxpool2d,
    "conv2d": _case_conv2d,
    "spp": _case_spp,
    "linear": _case_linear,
    "softmax_cross_entropy": _case_softmax_cross_entropy,
    "pad2d_edge": _case_pad2d_edge,
    "residual_layer": _case_residual_layer,
    "model_forward": _case_model_forward,
}


def run_gradcheck(ops: Optional[Sequence[str]] = None, seed: int = 0,
                  tol: float = DEFAULT_TOL) -> list[OpReport]:
    """Check the named ops (all by default); raises KeyError on unknown names."""
    names = list(CASES) if ops is None else list(ops)
    if not names:
        raise ValueError("empty op list")
    reports = []
    for name in names:
        if name not in CASES:
            raise KeyError(name)
        rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
        tensors, forward = CASES[name](rng)
        worst, checked = _check_case(tensors, forward, rng, tol)
        reports.append(OpReport(name=name, max_rel_err=worst, coords=checked,
                                passed=worst <= tol))
    return reports


def format_report(reports: Sequence[OpReport]) -> str:
    lines = [f"{'op':<24}{'max_rel_err':>14}{'coords':>8}  status"]
    for r in reports:
        lines.append(f"{r.name:<24}{r.max_rel_err:>14.3e}{r.coords:>8}  "
                     f"{'ok' if r.passed else 'FAIL'}")
    return "\n".join(lines)
