"""Command-line pipeline driver: generate, calibrate, train, eval, predict, bench.

Exit codes: 0 success, 1 usage error, 2 data/validation error.  All
diagnostics go to stderr; only `predict` writes its result to stdout.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import harness, network, pivot, report, simulator, weights_io
from .config import ConfigError
from .seeding import stream_seed


class UsageError(SystemExit):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise UsageError(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="needletrack",
                     description="Optical needle-tip tracking pipeline on synthetic scattering images.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH", default=None,
                       help="experiment config JSON (defaults used when omitted)")
        p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                       dest="overrides", help="override a config field by dotted path")
        return p

    add("generate", "render a labeled synthetic dataset directory")
    p = add("calibrate", "pivot calibration from a pose list file")
    p.add_argument("--poses", metavar="PATH", required=True, help="pose list JSON")
    p.add_argument("--output", metavar="PATH", default="calibration.json")
    add("train", "train the tip-regression network on the generated dataset")
    add("eval", "evaluate trained weights on the held-out test split")
    p = add("predict", "predict (x, y, z) cm for one image, printed to stdout")
    p.add_argument("--image", metavar="PATH", required=True, help="grayscale or RGB PNG")
    p.add_argument("--weights", metavar="PATH", default=None,
                   help="weights file (default: paths.weights from the config)")
    p = add("bench", "measure per-frame inference latency")
    p.add_argument("--runs", type=int, default=100, help="timed runs (>= 10)")
    return parser


def _load_config(args) -> config_mod.ExperimentConfig:
    return config_mod.load(args.config, args.overrides)


def _check_geometry(cfg: config_mod.ExperimentConfig) -> None:
    if cfg.optics.image_side != cfg.network.input_side:
        raise ConfigError(
            f"optics.image_side={cfg.optics.image_side} does not match "
            f"network.input_side={cfg.network.input_side}")


def _load_split(cfg: config_mod.ExperimentConfig):
    records, _, ds_norm = simulator.load_dataset(Path(cfg.paths.dataset_dir))
    if ds_norm != cfg.normalization:
        raise ConfigError(
            f"normalization in dataset manifest ({ds_norm}) differs from "
            f"config ({cfg.normalization})")
    return harness.split_dataset(records, cfg.train.split_ratio,
                                 stream_seed(cfg.seed, "split"))


def _load_checked_weights(path, net_cfg: network.NetworkConfig):
    params = weights_io.load_weights(path)
    expected = network.parameter_shapes(net_cfg)
    if set(params) != set(expected):
        raise ConfigError(f"weights file {path} holds tensors {sorted(params)}, "
                          f"expected {sorted(expected)}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ConfigError(f"weights tensor '{name}' has shape {params[name].shape}, "
                              f"network expects {shape}")
    return params


def _cmd_generate(args) -> int:
    cfg = _load_config(args)
    records = simulator.generate_dataset(cfg.dataset.n, cfg.optics,
                                         cfg.normalization, cfg.seed)
    manifest = simulator.save_dataset(Path(cfg.paths.dataset_dir), records,
                                      cfg.optics, cfg.normalization,
                                      raw_sidecar=cfg.dataset.raw_sidecar)
    print(f"wrote {len(records)} samples to {manifest.parent}", file=sys.stderr)
    return 0


def _cmd_calibrate(args) -> int:
    poses = pivot.load_poses(args.poses)
    result = pivot.pivot_calibrate(poses)
    pivot.save_calibration(args.output, result)
    print(f"tip offset {np.round(result.tip_offset, 6).tolist()} cm, "
          f"rms residual {result.rms_residual:.6g} cm -> {args.output}", file=sys.stderr)
    return 0


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    _check_geometry(cfg)
    train_set, _ = _load_split(cfg)
    params, losses = harness.train(train_set, cfg.train, cfg.network, cfg.normalization)
    weights_io.save_weights(cfg.paths.weights, params)
    report_dir = Path(cfg.paths.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    report.write_loss_history(losses, report_dir / "loss.csv")
    report.plot_loss_curve(losses, report_dir / "loss_curve.png")
    print(f"trained {len(train_set)} samples for {cfg.train.epochs} epochs, "
          f"final MSE {losses[-1]:.6g}; weights -> {cfg.paths.weights}", file=sys.stderr)
    return 0


def _cmd_eval(args) -> int:
    cfg = _load_config(args)
    _check_geometry(cfg)
    _, test_set = _load_split(cfg)
    params = _load_checked_weights(cfg.paths.weights, cfg.network)
    metrics = harness.evaluate(params, test_set, cfg.network, cfg.normalization)
    errors = harness.prediction_errors_mm(params, test_set, cfg.network, cfg.normalization)
    report_dir = Path(cfg.paths.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    report.write_metrics(metrics, report_dir / "metrics.json",
                         report_dir / "metrics.txt",
                         config_digest=config_mod.digest(cfg))
    report.plot_error_distribution(errors, report_dir / "error_distribution.png")
    print(report.metrics_table(metrics), file=sys.stderr, end="")
    return 0


def _cmd_predict(args) -> int:
    from PIL import Image

    cfg = _load_config(args)
    weights_path = args.weights or cfg.paths.weights
    params = _load_checked_weights(weights_path, cfg.network)
    img_path = Path(args.image)
    if not img_path.is_file():
        raise ConfigError(f"image file not found: {img_path}")
    raw = np.asarray(Image.open(img_path).convert("L"), dtype=np.float64)
    tip = harness.predict(params, raw, cfg.network, cfg.normalization,
                          max_count=cfg.optics.max_count)
    print(f"{tip[0]:.6f} {tip[1]:.6f} {tip[2]:.6f}")
    return 0


def _cmd_bench(args) -> int:
    cfg = _load_config(args)
    params = network.build_network(cfg.network, stream_seed(cfg.seed, "init"))
    stats = harness.benchmark_inference(params, cfg.network, n_runs=args.runs)
    report_dir = Path(cfg.paths.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    report.write_latency(stats, report_dir / "latency.json")
    report.plot_latency([stats], report_dir / "latency.png")
    print(f"{cfg.network.input_side} px: mean {stats.mean_ms:.3f} ms, "
          f"p50 {stats.p50_ms:.3f} ms, p95 {stats.p95_ms:.3f} ms "
          f"(reference {stats.reference_ms:.0f} ms)", file=sys.stderr)
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "calibrate": _cmd_calibrate,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return exc.code or 1
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"needletrack {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
