"""Experiment runner: `run` executes one configured experiment, `grid` a
directory of them, `grad-check` the finite-difference verification suite.

Exit codes: 0 success, 1 config error, 2 data error, 3 training failure.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys
import time

import numpy as np

from . import gradsuite
from .augment import augment_dataset_traditional, load_style_bank, sample_pair_batch
from .config import ConfigError, ExperimentConfig, parse_config
from .container import MODEL_MAGIC, write_container
from .data import DataError, SplitDataset, load_idx, load_image_dir, normalize, split
from .losses import LossConfig
from .models import InputSpec, augnet_forward, build_models, param_count
from .tensor import Tensor
from .train import MetricsHistory, TrainingDivergedError, train_neural, train_plain

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_TRAINING = 3

_MODE_LABELS = {
    ("none", "none"): "None",
    ("traditional", "none"): "Traditional",
    ("style_bank", "none"): "GANs",
    ("neural", "none"): "Neural + No Loss",
    ("neural", "content"): "Neural + Content Loss",
    ("neural", "style"): "Neural + Style",
    ("control", "none"): "Control",
    ("control", "content"): "Control + Content Loss",
    ("control", "style"): "Control + Style",
}


def _fail(category: str, message) -> None:
    text = " ".join(str(message).split())  # single line, machine-parsable
    print(f"ERROR {category}: {text}", file=sys.stderr)


def _prepare_data(cfg: ExperimentConfig) -> SplitDataset:
    if cfg.dataset_kind == "idx":
        ds = load_idx(cfg.idx_images, cfg.idx_labels, cfg.idx_classes, cfg.per_class_cap)
    else:
        ds = load_image_dir(cfg.image_root, cfg.class_a, cfg.class_b, cfg.per_class_cap,
                            resize_to=cfg.resize_to)
    splits = split(ds, train_fraction=0.8, test_fraction=cfg.test_fraction, seed=cfg.seed)

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xA06]))
    if cfg.aug_mode == "traditional":
        splits.train = augment_dataset_traditional(splits.train, rng)
    elif cfg.aug_mode == "style_bank":
        splits.train = load_style_bank(splits.train, cfg.style_dir, rng)
    return normalize(splits, cfg.norm)


def _experiment_label(cfg: ExperimentConfig) -> str:
    return _MODE_LABELS.get((cfg.aug_mode, cfg.aug_loss), f"{cfg.aug_mode} + {cfg.aug_loss}")


def _run_experiment(cfg: ExperimentConfig) -> tuple[int, MetricsHistory | None]:
    """Execute one experiment, writing all outputs under cfg.output_dir.
    Returns (exit code, history); partial outputs are removed on failure."""
    from . import report

    out_dir = cfg.output_dir
    created_dir = not os.path.isdir(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    samples_dir = os.path.join(out_dir, "samples")
    created: list[str] = []

    def _cleanup() -> None:
        for path in created:
            if os.path.isfile(path):
                os.remove(path)
        if os.path.isdir(samples_dir) and not os.listdir(samples_dir):
            os.rmdir(samples_dir)
        if created_dir and os.path.isdir(out_dir) and not os.listdir(out_dir):
            os.rmdir(out_dir)

    t0 = time.monotonic()
    try:
        data = _prepare_data(cfg)
        h, w, c = data.train.image_shape
        input_spec = InputSpec(h, w, c)
        smallnet, augnet, params = build_models(input_spec, cfg.seed,
                                                dropout_rate=cfg.dropout_rate)

        neural = cfg.aug_mode in ("neural", "control")
        loss_cfg = LossConfig(aug_mode=cfg.aug_loss if neural else "none",
                              alpha=cfg.alpha, beta=cfg.beta)
        try:
            loss_cfg.validate_channels(c)
        except ValueError as e:
            raise ConfigError(str(e)) from e

        epoch_hook = None
        if neural and cfg.samples_per_epoch > 0:
            os.makedirs(samples_dir, exist_ok=True)
            stats = data.train.norm_stats

            def epoch_hook(epoch, history):
                rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5A9, epoch]))
                pairs, _, _ = sample_pair_batch(data.train, cfg.samples_per_epoch, rng,
                                                control=cfg.aug_mode == "control")
                augmented = augnet_forward(augnet, Tensor(pairs)).data
                for i in range(cfg.samples_per_epoch):
                    path = os.path.join(samples_dir, f"epoch_{epoch}_{i}.png")
                    report.save_triptych(path, pairs[i, :, :, :c], pairs[i, :, :, c:],
                                         augmented[i], norm_stats=stats,
                                         label=f"epoch {epoch}")
                    created.append(path)

        if neural:
            history = train_neural(smallnet, augnet, data, loss_cfg, cfg,
                                   control=cfg.aug_mode == "control",
                                   epoch_hook=epoch_hook)
        else:
            history = train_plain(smallnet, data, cfg, epoch_hook=epoch_hook)

        wall = time.monotonic() - t0
        metrics_path = os.path.join(out_dir, "metrics.csv")
        report.write_metrics_csv(metrics_path, history)
        created.append(metrics_path)

        figure_path = os.path.join(out_dir, "accuracy.png")
        report.save_accuracy_plot(figure_path, history, title=_experiment_label(cfg))
        created.append(figure_path)

        checkpoint_path = os.path.join(out_dir, "checkpoint.bin")
        write_container(checkpoint_path, history.best_params, MODEL_MAGIC)
        created.append(checkpoint_path)

        summary_path = os.path.join(out_dir, "summary.txt")
        report.write_summary(summary_path, {
            "name": cfg.name,
            "augmentation": _experiment_label(cfg),
            "best_val_acc": f"{history.best_val_acc:.4f}",
            "best_epoch": history.best_epoch,
            "final_train_acc": f"{history.records[-1].train_acc:.4f}",
            "epochs": len(history.records),
            "train_images": len(data.train),
            "val_images": len(data.val),
            "parameters": param_count(params),
            "alpha": cfg.alpha,
            "beta": cfg.beta,
            "lr": cfg.lr,
            "batch_size": cfg.batch_size,
            "seed": cfg.seed,
            "wall_time_s": f"{wall:.1f}",
        })
        created.append(summary_path)
        return EXIT_OK, history
    except ConfigError as e:
        _cleanup()
        _fail("config", e)
        return EXIT_CONFIG, None
    except (DataError, OSError) as e:
        _cleanup()
        _fail("data", e)
        return EXIT_DATA, None
    except TrainingDivergedError as e:
        _cleanup()
        _fail("training", e)
        return EXIT_TRAINING, None


def _load_config(path, args) -> ExperimentConfig:
    cfg = parse_config(path)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.epochs is not None:
        cfg.epochs = args.epochs
        cfg.validate()
    return cfg


def _cmd_run(args) -> int:
    try:
        cfg = _load_config(args.config, args)
    except ConfigError as e:
        _fail("config", e)
        return EXIT_CONFIG
    code, _ = _run_experiment(cfg)
    return code


def _cmd_grid(args) -> int:
    paths = sorted(glob.glob(os.path.join(args.dir, "*.cfg")))
    if not os.path.isdir(args.dir):
        _fail("config", f"config directory not found: {args.dir}")
        return EXIT_CONFIG
    if not paths:
        _fail("config", f"no .cfg files in {args.dir}")
        return EXIT_CONFIG

    rows = ["name,aug_mode,loss_mode,best_val_acc,best_epoch,wall_time_s"]
    any_failed = False
    for path in paths:
        t0 = time.monotonic()
        name = os.path.splitext(os.path.basename(path))[0]
        try:
            cfg = _load_config(path, args)
        except ConfigError as e:
            _fail("config", e)
            rows.append(f"{name},,,FAILED,,{time.monotonic() - t0:.1f}")
            any_failed = True
            continue
        code, history = _run_experiment(cfg)
        wall = time.monotonic() - t0
        if code == EXIT_OK:
            rows.append(f"{cfg.name},{cfg.aug_mode},{cfg.aug_loss},"
                        f"{history.best_val_acc:.4f},{history.best_epoch},{wall:.1f}")
        else:
            rows.append(f"{cfg.name},{cfg.aug_mode},{cfg.aug_loss},FAILED,,{wall:.1f}")
            any_failed = True

    summary_path = os.path.join(args.dir, "grid_summary.csv")
    with open(summary_path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(rows) + "\n")
    print(f"wrote {summary_path}")
    return EXIT_CONFIG if any_failed else EXIT_OK


def _cmd_grad_check(_args) -> int:
    results = gradsuite.run_suite()
    width = max(len(name) for name, _ in results)
    ok = True
    for name, err in results:
        status = "ok" if err < gradsuite.TOLERANCE else "FAIL"
        ok &= err < gradsuite.TOLERANCE
        print(f"{name:<{width}}  {err:10.3e}  {status}")
    print(f"{'all checks' if ok else 'FAILURES'}: max error tolerance {gradsuite.TOLERANCE:g}")
    return EXIT_OK if ok else EXIT_TRAINING


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="augnet",
        description="Data-augmentation experiments: classifier plus learned augmentation network.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--epochs", type=int, default=None, help="override the config epochs")
    p_run.set_defaults(func=_cmd_run)

    p_grid = sub.add_parser("grid", help="run every *.cfg in a directory")
    p_grid.add_argument("--dir", required=True)
    p_grid.add_argument("--seed", type=int, default=None)
    p_grid.add_argument("--epochs", type=int, default=None)
    p_grid.set_defaults(func=_cmd_grid)

    p_gc = sub.add_parser("grad-check", help="run the finite-difference verification suite")
    p_gc.set_defaults(func=_cmd_grad_check)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
