"""Epoch loops, validation, and the 3-phase alternate schedule.

One epoch is a full shuffled pass: each image runs forward/backward on its
own tape, gradients land in the accumulator, and the parameters step once
per update batch.  The alternate schedule trains with the residual kernels
frozen, then with everything else frozen, repeats that alternation, and
finally relaxes all parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import math

import numpy as np

from .tensor import Tape, add_n, backward, scale, zero_grads
from .layers import SizedInputError, softmax_cross_entropy
from .model import TinyNet, model_forward
from .optim import (GradAccumulator, PBGDConfig, PlateauState, accumulate,
                    compute_adaptive_nu, plateau_update, step)
from .residual import set_frozen


class NumericFailureError(RuntimeError):
    """Training produced a non-finite loss."""


class Phase(Enum):
    RESIDUAL_FROZEN = "residual-frozen"
    BACKBONE_FROZEN = "backbone-frozen"
    ALL_RELAXED = "all-relaxed"
    PLAIN = "plain"


@dataclass
class PhaseSchedule:
    """(ResidualFrozen -> BackboneFrozen) x alternations, then AllRelaxed.

    ``converge_delta`` optionally stops alternating early once an
    alternation improves validation accuracy by less than the delta.
    """
    alternations: int = 3
    epochs_per_phase: int = 2
    converge_delta: Optional[float] = None

    def __post_init__(self):
        if self.alternations < 1 or self.epochs_per_phase < 1:
            raise ValueError("schedule needs at least one alternation and one epoch per phase")

    def phases(self) -> list[Phase]:
        seq = [Phase.RESIDUAL_FROZEN, Phase.BACKBONE_FROZEN] * self.alternations
        seq.append(Phase.ALL_RELAXED)
        return seq


@dataclass
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0


@dataclass
class TrainState:
    """Everything a run needs to continue: model, clocks, rng, schedule position."""
    model: TinyNet
    rng: np.random.Generator
    plateau: PlateauState
    epoch: int = 0
    phase_index: int = 0
    epoch_in_phase: int = 0
    history: list = field(default_factory=list)


def make_state(model: TinyNet, cfg: PBGDConfig, seed: int = 0) -> TrainState:
    return TrainState(model=model, rng=np.random.default_rng(seed),
                      plateau=PlateauState(current_eta=cfg.eta))


def _apply_phase_freezing(model: TinyNet, phase: Phase) -> None:
    if phase in (Phase.PLAIN, Phase.ALL_RELAXED):
        residual_frozen, backbone_frozen = False, False
    elif phase is Phase.RESIDUAL_FROZEN:
        residual_frozen, backbone_frozen = True, False
    else:
        residual_frozen, backbone_frozen = False, True
    if model.residual_bank is not None:
        set_frozen(model.residual_bank, residual_frozen)
    for p in model.backbone_parameters():
        p.frozen = backbone_frozen


def train_epoch(state: TrainState, dataset, cfg: PBGDConfig,
                avg_pixels: Optional[float] = None,
                undersized: str = "abort") -> float:
    """One full shuffled pass; returns the mean per-example loss.

    ``avg_pixels`` feeds the adaptive update batch size and must be the
    training split's average pixel count (computed once per run).
    """
    model = state.model
    n = len(dataset)
    if n == 0:
        raise ValueError("empty dataset")
    order = [int(i) for i in state.rng.permutation(n)]

    min_side = model.min_input_side
    kept = []
    for i in order:
        w, h = dataset.dims(i)
        if w < min_side or h < min_side:
            if undersized == "skip":
                continue
            raise SizedInputError(
                f"sample {i} is {w}x{h}, below the model minimum {min_side}x{min_side}")
        kept.append(i)
    if not kept:
        raise ValueError("no usable samples after size filtering")

    adaptive = cfg.n_u == "adaptive"
    if adaptive and avg_pixels is None:
        avg_pixels = float(np.mean([dataset.dims(i)[0] * dataset.dims(i)[1] for i in kept]))
    dims_in_order = [dataset.dims(i) for i in kept] if adaptive else None

    params = model.trainable_parameters()
    all_params = model.parameters()  # frozen ones still collect grads; keep them clean
    acc = GradAccumulator(params)
    eta = state.plateau.current_eta
    losses: list[float] = []

    pos = 0
    while pos < len(kept):
        if adaptive:
            nu = compute_adaptive_nu(dims_in_order[pos:], avg_pixels)
        else:
            nu = min(int(cfg.n_u), len(kept) - pos)
        alpha = cfg.alpha if cfg.alpha is not None else 1.0 / nu
        batch = kept[pos:pos + nu]
        for c0 in range(0, len(batch), cfg.n_i):
            chunk = batch[c0:c0 + cfg.n_i]
            with Tape() as tape:
                per_example = []
                for i in chunk:
                    s = dataset.sample(i)
                    logits = model_forward(s.pixels, model)
                    loss = softmax_cross_entropy(logits, s.label)
                    per_example.append(loss)
                    losses.append(loss.item())
                batch_loss = scale(add_n(per_example), alpha)
                if not math.isfinite(batch_loss.item()):
                    raise NumericFailureError(
                        f"non-finite loss at epoch {state.epoch}, sample {chunk[0]}")
                backward(batch_loss, tape)
            accumulate(acc, params, len(chunk))
            zero_grads(all_params)
        step(acc, params, eta)
        pos += nu

    return float(np.mean(losses))


def validate(model: TinyNet, dataset) -> ConfusionCounts:
    """Argmax-of-logits evaluation; class 1 (forged) is the positive class."""
    counts = ConfusionCounts()
    for i in range(len(dataset)):
        s = dataset.sample(i)
        logits = model_forward(s.pixels, model)  # no tape: inference only
        pred = int(np.argmax(logits.data))
        if pred == 1 and s.label == 1:
            counts.tp += 1
        elif pred == 0 and s.label == 0:
            counts.tn += 1
        elif pred == 1 and s.label == 0:
            counts.fp += 1
        else:
            counts.fn += 1
    return counts


EpochCallback = Callable[[TrainState, dict], None]


def _run_phase_epochs(state: TrainState, phase: Phase, epochs: int, train_ds, val_ds,
                      cfg: PBGDConfig, avg_pixels: Optional[float],
                      undersized: str, on_epoch: Optional[EpochCallback]) -> float:
    """Run epochs of one phase starting at state.epoch_in_phase; returns last val acc."""
    val_acc = float("nan")
    while state.epoch_in_phase < epochs:
        train_loss = train_epoch(state, train_ds, cfg, avg_pixels, undersized)
        counts = validate(state.model, val_ds)
        val_acc = counts.accuracy
        eta = plateau_update(state.plateau, val_acc, cfg.lr_factor, cfg.lr_patience)
        state.epoch += 1
        state.epoch_in_phase += 1
        record = {"epoch": state.epoch, "phase": phase.value,
                  "train_loss": train_loss, "val_acc": val_acc,
                  "eta": eta, "n_u": cfg.n_u}
        state.history.append(record)
        if on_epoch is not None:
            on_epoch(state, record)
    return val_acc


def plain_train(state: TrainState, train_ds, val_ds, cfg: PBGDConfig, epochs: int,
                avg_pixels: Optional[float] = None, undersized: str = "abort",
                on_epoch: Optional[EpochCallback] = None) -> TrainState:
    """Single-phase training with everything trainable (residual layer optional)."""
    _apply_phase_freezing(state.model, Phase.PLAIN)
    state.epoch_in_phase = state.epoch  # plain runs count epochs globally
    _run_phase_epochs(state, Phase.PLAIN, epochs, train_ds, val_ds, cfg,
                      avg_pixels, undersized, on_epoch)
    return state


def alternate_train(state: TrainState, train_ds, val_ds, schedule: PhaseSchedule,
                    cfg: PBGDConfig, avg_pixels: Optional[float] = None,
                    undersized: str = "abort",
                    on_epoch: Optional[EpochCallback] = None) -> TrainState:
    """Execute the freeze/unfreeze phase sequence over the dataset.

    Resumes mid-schedule from state.phase_index / state.epoch_in_phase.
    With ``schedule.converge_delta`` set, alternation stops early once an
    alternation's validation accuracy gain drops below the delta, then the
    final all-relaxed phase still runs.
    """
    if state.model.residual_bank is None:
        raise ValueError("alternate training needs a model with a residual bank")
    phases = schedule.phases()
    acc_before_alternation: Optional[float] = None
    while state.phase_index < len(phases):
        phase = phases[state.phase_index]
        if (schedule.converge_delta is not None
                and phase is Phase.RESIDUAL_FROZEN and state.epoch_in_phase == 0):
            acc_before_alternation = validate(state.model, val_ds).accuracy
        _apply_phase_freezing(state.model, phase)
        last_acc = _run_phase_epochs(state, phase, schedule.epochs_per_phase,
                                     train_ds, val_ds, cfg, avg_pixels,
                                     undersized, on_epoch)
        state.phase_index += 1
        state.epoch_in_phase = 0
        # An alternation ends with its backbone-frozen phase; when it gained
        # less than the threshold, jump straight to the all-relaxed phase.
        if (schedule.converge_delta is not None
                and phase is Phase.BACKBONE_FROZEN
                and acc_before_alternation is not None
                and state.phase_index < len(phases) - 1
                and last_acc - acc_before_alternation < schedule.converge_delta):
            state.phase_index = len(phases) - 1
    _apply_phase_freezing(state.model, Phase.ALL_RELAXED)  # leave nothing frozen
    return state
