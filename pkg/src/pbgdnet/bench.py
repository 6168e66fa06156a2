"""Wall-clock benchmarks: update-batch-size sweep and inference vs resolution.

Absolute numbers are machine-dependent; what these workloads expose are the
trends — small update batches pay for frequent parameter updates, and
inference cost grows with input area.  Each measurement is the minimum
over a few repetitions.
"""

from __future__ import annotations

import time
from typing import Sequence

import numpy as np

from .tensor import Tensor
from .data import ImageSample, InMemoryDataset
from .model import TinyNet, model_forward
from .optim import PBGDConfig
from .training import make_state, train_epoch

UPDATE_BATCH_SIZES = (1, 2, 4, 8, 16, 32, 64, 128)
RESOLUTIONS = (224, 512, 1024, 1920)


def _synthetic_dataset(n: int, side: int, seed: int) -> InMemoryDataset:
    rng = np.random.default_rng(seed)
    return InMemoryDataset([
        ImageSample(pixels=Tensor(rng.uniform(size=(3, side, side))),
                    label=int(i % 2), source_id=f"bench{i}")
        for i in range(n)])


def bench_update_batch(nus: Sequence[int] = UPDATE_BATCH_SIZES, n_images: int = 256,
                       side: int = 16, reps: int = 5, seed: int = 0):
    """Seconds for one training pass over a fixed workload, per n_u.

    The sweep is interleaved across repetitions so machine-load drift hits
    every batch size equally; each entry reports its minimum.
    """
    ds = _synthetic_dataset(n_images, side, seed)
    best = {int(nu): float("inf") for nu in nus}
    for _ in range(reps):
        for nu in nus:
            cfg = PBGDConfig(eta=1e-4, n_u=int(nu))
            model = TinyNet(residual=False, seed=seed)
            state = make_state(model, cfg, seed=seed)
            t0 = time.perf_counter()
            train_epoch(state, ds, cfg)
            best[int(nu)] = min(best[int(nu)], time.perf_counter() - t0)
    return [(int(nu), best[int(nu)]) for nu in nus]


def bench_resolution(sides: Sequence[int] = RESOLUTIONS, reps: int = 3,
                     seed: int = 0):
    """Per-image inference seconds at square input resolutions."""
    model = TinyNet(residual=False, seed=seed)
    rng = np.random.default_rng(seed)
    results = []
    for side in sides:
        img = Tensor(rng.uniform(size=(3, int(side), int(side))))
        model_forward(img, model)  # warm the path before timing
        best = float("inf")
        for _ in range(reps):
            t0 = time.perf_counter()
            model_forward(img, model)
            best = min(best, time.perf_counter() - t0)
        results.append((int(side), best))
    return results


def format_update_batch(results) -> str:
    lines = [f"{'n_u':>6}  {'time_s':>10}"]
    lines += [f"{nu:>6}  {sec:>10.4f}" for nu, sec in results]
    return "\n".join(lines)


def format_resolution(results) -> str:
    lines = [f"{'resolution':>12}  {'time_ms':>10}"]
    lines += [f"{side}x{side:<6}  {sec * 1e3:>10.2f}".rjust(0) for side, sec in results]
    return "\n".join(lines)
