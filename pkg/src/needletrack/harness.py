"""Training loop, dataset split, error metrics and latency benchmark."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import network, ops, optim
from .normalization import NormalizationConfig, normalize_image, normalize_position, denormalize_position
from .simulator import SampleRecord
from .weights_io import save_weights

MM_PER_CM = 10.0
REFERENCE_LATENCY_MS = 20.0  # published real-time processing budget
EVAL_BATCH = 16


class TrainingDivergedError(RuntimeError):
    """The training loss became non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    optimizer: optim.AdamWConfig = field(default_factory=optim.AdamWConfig)
    seed: int = 0
    split_ratio: float = 0.8
    checkpoint_path: str | None = None
    checkpoint_every: int = 25

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError(f"split_ratio must be in (0, 1), got {self.split_ratio}")


@dataclass(frozen=True)
class AxisStat:
    mean_mm: float
    std_mm: float


@dataclass(frozen=True)
class Metrics:
    x: AxisStat
    y: AxisStat
    z: AxisStat
    l2: AxisStat
    n_test: int


@dataclass(frozen=True)
class LatencyStats:
    mean_ms: float
    p50_ms: float
    p95_ms: float
    preprocess_mean_ms: float
    forward_mean_ms: float
    n_runs: int
    image_side: int
    reference_ms: float = REFERENCE_LATENCY_MS


def split_dataset(records: list[SampleRecord], ratio: float, seed):
    """Deterministic shuffled split; |train| = round(ratio * n), remainder test."""
    if not records:
        raise ValueError("cannot split an empty dataset")
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    perm = np.random.default_rng(seed).permutation(len(records))
    n_train = int(round(ratio * len(records)))
    train = [records[i] for i in perm[:n_train]]
    test = [records[i] for i in perm[n_train:]]
    return train, test


def _prepare(records: list[SampleRecord], net_cfg: network.NetworkConfig,
             norm_cfg: NormalizationConfig, max_count: float = 255.0):
    """Stack normalized images and targets into float32 batch arrays."""
    images = np.stack([normalize_image(r.image, max_count) for r in records])
    if images.shape[1:] != (net_cfg.input_channels, net_cfg.input_side, net_cfg.input_side):
        raise ops.ShapeError(
            f"dataset images have shape {images.shape[1:]}, network expects "
            f"({net_cfg.input_channels}, {net_cfg.input_side}, {net_cfg.input_side})")
    targets = np.stack([normalize_position(r.ground_truth, norm_cfg)[0] for r in records])
    return images.astype(np.float32), targets.astype(np.float32)


def train(train_records: list[SampleRecord], cfg: TrainConfig,
          net_cfg: network.NetworkConfig, norm_cfg: NormalizationConfig):
    """Mini-batch training with MSE on normalized targets and AdamW updates.

    Returns (trained parameters, per-epoch mean training loss).
    """
    if not train_records:
        raise ValueError("training set is empty")
    from .seeding import stream_rng, stream_seed

    images, targets = _prepare(train_records, net_cfg, norm_cfg)
    params = network.build_network(net_cfg, stream_seed(cfg.seed, "init"))
    state = optim.init_state(params)
    dropout_rng = stream_rng(cfg.seed, "dropout")
    shuffle_rng = stream_rng(cfg.seed, "shuffle")

    n = len(train_records)
    loss_history = []
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            pred, chain = network.forward(params, images[idx], net_cfg,
                                          mode="train", rng=dropout_rng)
            loss, grad_pred = ops.mse_loss(pred, targets[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}")
            grads = network.backward(chain, grad_pred)
            params, state = optim.adamw_step(params, grads, state, cfg.optimizer)
            epoch_loss += loss * len(idx)
        loss_history.append(epoch_loss / n)
        if cfg.checkpoint_path and (epoch + 1) % cfg.checkpoint_every == 0:
            save_weights(cfg.checkpoint_path, params)
    return params, loss_history


def predict(params: dict[str, np.ndarray], raw_image: np.ndarray,
            net_cfg: network.NetworkConfig, norm_cfg: NormalizationConfig,
            max_count: float = 255.0) -> np.ndarray:
    """Raw pixel counts -> physical (x, y, z) cm, eval mode."""
    img = normalize_image(raw_image, max_count).astype(np.float32)
    pred, _ = network.forward(params, img, net_cfg, mode="eval")
    return denormalize_position(pred, norm_cfg)


def prediction_errors_mm(params, records, net_cfg: network.NetworkConfig,
                         norm_cfg: NormalizationConfig) -> np.ndarray:
    """Signed per-axis prediction errors in mm, one row per record."""
    images, _ = _prepare(records, net_cfg, norm_cfg)
    preds = []
    for start in range(0, len(records), EVAL_BATCH):
        pred, _ = network.forward(params, images[start:start + EVAL_BATCH],
                                  net_cfg, mode="eval")
        preds.append(pred)
    pred_cm = denormalize_position(np.concatenate(preds), norm_cfg)
    truth_cm = np.stack([r.ground_truth for r in records])
    return (pred_cm - truth_cm) * MM_PER_CM


def evaluate(params, test_records: list[SampleRecord], net_cfg: network.NetworkConfig,
             norm_cfg: NormalizationConfig,
             train_norm_cfg: NormalizationConfig | None = None) -> Metrics:
    """Per-axis mean absolute error and mean L2 error over the test set, mm.

    Standard deviations are population (ddof=0) over absolute errors.
    If the normalization used at training time is known it must match.
    """
    if not test_records:
        raise ValueError("test set is empty")
    if train_norm_cfg is not None and train_norm_cfg != norm_cfg:
        raise ValueError(f"normalization config mismatch: training used "
                         f"{train_norm_cfg}, evaluation got {norm_cfg}")
    errors = prediction_errors_mm(params, test_records, net_cfg, norm_cfg)
    abs_err = np.abs(errors)
    l2 = np.linalg.norm(errors, axis=1)
    axes = [AxisStat(float(abs_err[:, k].mean()), float(abs_err[:, k].std())) for k in range(3)]
    return Metrics(x=axes[0], y=axes[1], z=axes[2],
                   l2=AxisStat(float(l2.mean()), float(l2.std())),
                   n_test=len(test_records))


def midpoint_baseline(test_records: list[SampleRecord],
                      norm_cfg: NormalizationConfig) -> Metrics:
    """Metrics of the constant predictor at the physical range midpoint."""
    mid = denormalize_position(np.zeros(3), norm_cfg)
    truth = np.stack([r.ground_truth for r in test_records])
    errors = (mid[None, :] - truth) * MM_PER_CM
    abs_err = np.abs(errors)
    l2 = np.linalg.norm(errors, axis=1)
    axes = [AxisStat(float(abs_err[:, k].mean()), float(abs_err[:, k].std())) for k in range(3)]
    return Metrics(x=axes[0], y=axes[1], z=axes[2],
                   l2=AxisStat(float(l2.mean()), float(l2.std())),
                   n_test=len(test_records))


def benchmark_inference(params, net_cfg: network.NetworkConfig,
                        n_runs: int = 100, warmup: int = 5,
                        max_count: float = 255.0, seed: int = 0) -> LatencyStats:
    """Per-frame wall time of image normalization plus eval-mode forward.

    Warm-up runs are excluded; preprocess and forward segments are also
    reported separately since the published 20 ms budget does not say which
    it covers.
    """
    if n_runs < 10:
        raise ValueError(f"n_runs must be >= 10, got {n_runs}")
    rng = np.random.default_rng(seed)
    raw = rng.uniform(0, max_count, (net_cfg.input_side, net_cfg.input_side))
    pre_ms = np.empty(n_runs)
    fwd_ms = np.empty(n_runs)
    for run in range(-warmup, n_runs):
        t0 = time.perf_counter()
        img = normalize_image(raw, max_count).astype(np.float32)
        t1 = time.perf_counter()
        network.forward(params, img, net_cfg, mode="eval")
        t2 = time.perf_counter()
        if run >= 0:
            pre_ms[run] = (t1 - t0) * 1e3
            fwd_ms[run] = (t2 - t1) * 1e3
    total = pre_ms + fwd_ms
    return LatencyStats(mean_ms=float(total.mean()),
                        p50_ms=float(np.percentile(total, 50)),
                        p95_ms=float(np.percentile(total, 95)),
                        preprocess_mean_ms=float(pre_ms.mean()),
                        forward_mean_ms=float(fwd_ms.mean()),
                        n_runs=n_runs,
                        image_side=net_cfg.input_side)
