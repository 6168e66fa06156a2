"""Command-line entry point.

Subcommands: synth-square, train, eval, extract-residual, grad-check,
bench.  Run configuration comes from a plain-text file of ``key = value``
lines (``#`` starts a comment); every run writes its resolved settings
next to its outputs.  Exit codes: 0 success, 2 config error, 3 data
error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .tensor import Tensor
from .data import (DataError, ManifestDataset, SquareConfig, compute_avg_pixels,
                   load_manifest, load_ppm, normalize_minmax, save_pgm, split,
                   synth_square)
from .layers import SizedInputError
from .model import TinyNet
from .optim import PBGDConfig
from .residual import apply_residual, init_srm
from .training import (NumericFailureError, PhaseSchedule, alternate_train,
                       make_state, plain_train, validate)
from .checkpoint import (CheckpointFormatError, load_checkpoint, restore_state,
                         save_checkpoint)
from . import bench as bench_mod
from .gradcheck import format_report, run_gradcheck

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

SEED_ENV_VAR = "PBGDNET_SEED"


class ConfigError(ValueError):
    """Bad run configuration: unknown key, bad value, missing input."""


@dataclass
class RunConfig:
    """Resolved settings for one training run."""
    eta: float = 1e-4
    alpha: Union[float, str] = "auto"
    n_i: int = 1
    n_u: Union[int, str] = 8
    lr_factor: float = 0.1
    lr_patience: int = 5
    alternations: int = 3
    epochs_per_phase: int = 2
    converge_delta: Union[float, str] = "none"
    epochs: int = 10
    backbone: str = "tinynet"
    spp_scales: str = "1,2,4"
    residual_layer: str = "on"
    manifest: str = ""
    synth_count: int = 0
    val_fraction: float = 0.2
    undersized: str = "abort"
    seed: int = 0
    out: str = ""

    def scales_tuple(self) -> tuple:
        try:
            scales = tuple(int(s) for s in self.spp_scales.split(","))
        except ValueError:
            raise ConfigError(f"spp_scales must be comma-separated ints, got "
                              f"{self.spp_scales!r}") from None
        if not scales or any(s < 1 for s in scales):
            raise ConfigError(f"spp_scales must be positive, got {self.spp_scales!r}")
        return scales

    def pbgd(self) -> PBGDConfig:
        alpha = None if self.alpha == "auto" else float(self.alpha)
        return PBGDConfig(eta=self.eta, alpha=alpha, n_i=self.n_i, n_u=self.n_u,
                          lr_factor=self.lr_factor, lr_patience=self.lr_patience)

    def schedule(self) -> PhaseSchedule:
        delta = None if self.converge_delta == "none" else float(self.converge_delta)
        return PhaseSchedule(alternations=self.alternations,
                             epochs_per_phase=self.epochs_per_phase,
                             converge_delta=delta)


def parse_config_text(text: str) -> dict[str, str]:
    """key = value lines; blank lines and # comments ignored."""
    out: dict[str, str] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {ln}: empty key or value in {raw!r}")
        if key in out:
            raise ConfigError(f"line {ln}: duplicate key {key!r}")
        out[key] = value
    return out


def resolve_config(kv: dict[str, str]) -> RunConfig:
    known = {f.name: f for f in fields(RunConfig)}
    unknown = set(kv) - set(known)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig()
    for key, raw in kv.items():
        current = getattr(cfg, key)
        try:
            if key == "alpha":
                value = raw if raw == "auto" else float(raw)
            elif key == "n_u":
                value = raw if raw == "adaptive" else int(raw)
            elif key == "converge_delta":
                value = raw if raw == "none" else float(raw)
            elif isinstance(current, int):
                value = int(raw)
            elif isinstance(current, float):
                value = float(raw)
            else:
                value = raw
        except ValueError:
            raise ConfigError(f"bad value for {key}: {raw!r}") from None
        setattr(cfg, key, value)
    if "seed" not in kv and SEED_ENV_VAR in os.environ:
        try:
            cfg.seed = int(os.environ[SEED_ENV_VAR])
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer") from None
    _validate_run_config(cfg)
    return cfg


def _validate_run_config(cfg: RunConfig) -> None:
    if cfg.backbone != "tinynet":
        raise ConfigError(f"unknown backbone {cfg.backbone!r}")
    if cfg.residual_layer not in ("on", "off"):
        raise ConfigError(f"residual_layer must be on/off, got {cfg.residual_layer!r}")
    if cfg.undersized not in ("abort", "skip"):
        raise ConfigError(f"undersized must be abort/skip, got {cfg.undersized!r}")
    if not 0.0 < cfg.val_fraction < 1.0:
        raise ConfigError(f"val_fraction must be in (0,1), got {cfg.val_fraction}")
    if not cfg.out:
        raise ConfigError("config needs an 'out' directory")
    if bool(cfg.manifest) == bool(cfg.synth_count):
        raise ConfigError("config needs exactly one of 'manifest' or 'synth_count'")
    if cfg.epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {cfg.epochs}")
    cfg.scales_tuple()
    cfg.pbgd()
    cfg.schedule()


def write_resolved_config(cfg: RunConfig, path) -> None:
    # emitted in the same key = value syntax the parser accepts; empty
    # values (the unused data source) are omitted
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(RunConfig)
             if getattr(cfg, f.name) != ""]
    Path(path).write_text("\n".join(lines) + "\n")


def _env_seed(explicit: Optional[int]) -> int:
    if explicit is not None:
        return explicit
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is not None:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer") from None
    return 0


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth_square(args) -> int:
    seed = _env_seed(args.seed)
    cfg = SquareConfig(count=args.count, seed=seed)
    manifest = synth_square(cfg, args.out)
    counts = manifest.class_counts()
    print(f"wrote {len(manifest.entries)} images to {args.out}")
    print(f"class counts: non-square={counts.get(0, 0)} square={counts.get(1, 0)}")
    return EXIT_OK


def _build_datasets(cfg: RunConfig, out_dir: Path):
    if cfg.synth_count:
        manifest = synth_square(SquareConfig(count=cfg.synth_count, seed=cfg.seed),
                                out_dir / "data")
    else:
        manifest = load_manifest(cfg.manifest)
    split(manifest, (1.0 - cfg.val_fraction, cfg.val_fraction), seed=cfg.seed)
    return ManifestDataset(manifest, "train"), ManifestDataset(manifest, "val"), manifest


def cmd_train(args) -> int:
    kv = parse_config_text(Path(args.config).read_text())
    cfg = resolve_config(kv)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved_config(cfg, out_dir / "config.resolved")

    train_ds, val_ds, manifest = _build_datasets(cfg, out_dir)
    pbgd = cfg.pbgd()
    avg_pixels = compute_avg_pixels(manifest) if cfg.n_u == "adaptive" else None

    if args.resume:
        ckpt = load_checkpoint(args.resume)
        if (tuple(ckpt.meta["spp_scales"]) != cfg.scales_tuple()
                or ckpt.meta["residual"] != (cfg.residual_layer == "on")):
            raise ConfigError("checkpoint architecture does not match the config")
        state = restore_state(ckpt)
        log_mode = "a"
    else:
        model = TinyNet(spp_scales=cfg.scales_tuple(),
                        residual=cfg.residual_layer == "on", seed=cfg.seed)
        state = make_state(model, pbgd, seed=[cfg.seed, 1])
        log_mode = "w"

    metrics_path = out_dir / "metrics.jsonl"
    best_acc = float("-inf")

    with open(metrics_path, log_mode) as log:
        def on_epoch(st, record):
            nonlocal best_acc
            log.write(json.dumps(record) + "\n")
            log.flush()
            save_checkpoint(out_dir / "last.ckpt", st, pbgd)
            if record["val_acc"] > best_acc:
                best_acc = record["val_acc"]
                save_checkpoint(out_dir / "best.ckpt", st, pbgd)
            print(f"epoch {record['epoch']:>3} [{record['phase']}] "
                  f"loss {record['train_loss']:.4f} val_acc {record['val_acc']:.4f} "
                  f"eta {record['eta']:.2e}")

        if cfg.residual_layer == "on":
            alternate_train(state, train_ds, val_ds, cfg.schedule(), pbgd,
                            avg_pixels=avg_pixels, undersized=cfg.undersized,
                            on_epoch=on_epoch)
        else:
            plain_train(state, train_ds, val_ds, pbgd, epochs=cfg.epochs,
                        avg_pixels=avg_pixels, undersized=cfg.undersized,
                        on_epoch=on_epoch)
    print(f"done; best val_acc {best_acc:.4f}; checkpoints in {out_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    state = restore_state(load_checkpoint(args.checkpoint))
    manifest = load_manifest(args.manifest)
    if args.split != "all":
        seed = _env_seed(args.seed)
        split(manifest, (1.0 - args.val_fraction, args.val_fraction), seed=seed)
        ds = ManifestDataset(manifest, args.split)
    else:
        ds = ManifestDataset(manifest)
    counts = validate(state.model, ds)
    result = {"accuracy": counts.accuracy, "tp": counts.tp, "tn": counts.tn,
              "fp": counts.fp, "fn": counts.fn, "n": counts.total}
    print(json.dumps(result))
    return EXIT_OK


def cmd_extract_residual(args) -> int:
    img = load_ppm(args.image)
    if args.checkpoint:
        state = restore_state(load_checkpoint(args.checkpoint))
        if state.model.residual_bank is None:
            raise DataError("checkpoint model has no residual layer")
        bank = state.model.residual_bank
    else:
        bank = init_srm()
    residual = apply_residual(Tensor(img), bank)
    out_prefix = Path(args.out)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    for k in range(3):
        path = out_prefix.with_name(out_prefix.name + f".{k}.pgm")
        save_pgm(path, normalize_minmax(residual.data[k]))
        print(f"wrote {path}")
    return EXIT_OK


def cmd_grad_check(args) -> int:
    seed = _env_seed(args.seed)
    ops = None
    if args.ops is not None:
        ops = [s for s in (part.strip() for part in args.ops.split(",")) if s]
        if not ops:
            raise ConfigError("--ops was given but names no operations")
    try:
        reports = run_gradcheck(ops=ops, seed=seed)
    except KeyError as e:
        raise ConfigError(f"unknown op {e.args[0]!r}") from None
    print(format_report(reports))
    if all(r.passed for r in reports):
        print("grad-check: all ops within tolerance")
        return EXIT_OK
    print("grad-check: FAILURES above tolerance")
    return EXIT_NUMERIC


def cmd_bench(args) -> int:
    if args.mode == "update-batch":
        results = bench_mod.bench_update_batch()
        print(bench_mod.format_update_batch(results))
        times = dict(results)
        print(f"\ntrend time(n_u=1) > time(n_u=16): "
              f"{'yes' if times[1] > times[16] else 'no'} "
              f"({times[1]:.3f}s vs {times[16]:.3f}s)")
    else:
        results = bench_mod.bench_resolution()
        print(bench_mod.format_resolution(results))
        vals = [s for _, s in results]
        mono = all(a < b for a, b in zip(vals, vals[1:]))
        print(f"\ntrend monotonic in resolution: {'yes' if mono else 'no'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pbgdnet",
                                description="variable-resolution CNN training engine")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-square", help="generate the Square toy dataset")
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_synth_square)

    s = sub.add_parser("train", help="train from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--resume", default=None, help="checkpoint to continue from")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--split", choices=("all", "train", "val"), default="all")
    s.add_argument("--val-fraction", type=float, default=0.2)
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("extract-residual", help="write residual maps as PGM files")
    s.add_argument("--image", required=True)
    s.add_argument("--out", required=True, help="output path prefix")
    s.add_argument("--checkpoint", default=None)
    s.set_defaults(fn=cmd_extract_residual)

    s = sub.add_parser("grad-check", help="finite-difference check of backward rules")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--ops", default=None, help="comma-separated op names (default: all)")
    s.set_defaults(fn=cmd_grad_check)

    s = sub.add_parser("bench", help="wall-clock trend benchmarks")
    s.add_argument("--mode", choices=("update-batch", "resolution"), required=True)
    s.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, CheckpointFormatError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, SizedInputError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericFailureError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
