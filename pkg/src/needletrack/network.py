"""Tip-regression CNN: two strided/pooled conv blocks, a wide hidden layer
with dropout, and a linear 3-coordinate head.

Default geometry (3x400x400 input): conv 3x3/stride 2/pad 1 -> 16x200x200,
pool -> 16x100x100, conv 3x3/stride 1/pad 1 -> 32x100x100, pool -> 32x50x50,
flatten 80000 -> 512 -> 3.  A desk-scale config (input_side 64) runs the
same stack at laptop speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops

PARAM_NAMES = ("conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias",
               "fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias")

CONV1_KERNEL, CONV1_STRIDE, CONV1_PAD = 3, 2, 1
CONV2_KERNEL, CONV2_STRIDE, CONV2_PAD = 3, 1, 1


class ConfigError(ValueError):
    """A network configuration violates one of its invariants."""


@dataclass(frozen=True)
class NetworkConfig:
    input_channels: int = 3
    input_side: int = 400
    conv1_out: int = 16
    conv2_out: int = 32
    hidden: int = 512
    output_dim: int = 3
    dropout_rate: float = 0.5

    def __post_init__(self):
        for name in ("input_channels", "input_side", "conv1_out", "conv2_out",
                     "hidden", "output_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        # one stride-2 conv plus two 2x2 pools halve the side three times
        if self.input_side % 8:
            raise ConfigError(f"input_side must be divisible by 8, got {self.input_side}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def feature_side(self) -> int:
        return self.input_side // 8

    @property
    def flatten_size(self) -> int:
        return self.conv2_out * self.feature_side ** 2


def parameter_shapes(config: NetworkConfig) -> dict[str, tuple[int, ...]]:
    return {
        "conv1.weight": (config.conv1_out, config.input_channels, CONV1_KERNEL, CONV1_KERNEL),
        "conv1.bias": (config.conv1_out,),
        "conv2.weight": (config.conv2_out, config.conv1_out, CONV2_KERNEL, CONV2_KERNEL),
        "conv2.bias": (config.conv2_out,),
        "fc1.weight": (config.hidden, config.flatten_size),
        "fc1.bias": (config.hidden,),
        "fc2.weight": (config.output_dim, config.hidden),
        "fc2.bias": (config.output_dim,),
    }


def parameter_counts(params: dict[str, np.ndarray]) -> dict[str, int]:
    """Parameter count per layer (weight + bias)."""
    layers = sorted({name.split(".")[0] for name in params})
    return {layer: int(params[f"{layer}.weight"].size + params[f"{layer}.bias"].size)
            for layer in layers}


def build_network(config: NetworkConfig, seed, dtype=np.float32) -> dict[str, np.ndarray]:
    """He-initialized weights (normal, std = sqrt(2/fan_in)), zero biases.

    Deterministic for a fixed seed; returns a name -> array map.
    """
    # SFC64 keeps the full-size (41M parameter) draw fast; determinism only
    # requires a fixed generator, not a particular one
    rng = np.random.Generator(np.random.SFC64(seed))
    params: dict[str, np.ndarray] = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:]))
            std = np.sqrt(2.0 / fan_in)
            draw = rng.standard_normal(shape, dtype=dtype)  # draw at target dtype
            draw *= std
            params[name] = draw
    return params


def _check_image_shape(config: NetworkConfig, image: np.ndarray) -> bool:
    """Return True if the image carries a batch axis; raise on a bad shape."""
    expected = (config.input_channels, config.input_side, config.input_side)
    if image.shape == expected:
        return False
    if image.ndim == 4 and image.shape[1:] == expected:
        return True
    raise ops.ShapeError(f"image shape {image.shape} incompatible with expected {expected}")


def forward(params: dict[str, np.ndarray], image: np.ndarray, config: NetworkConfig,
            mode: str = "eval", rng: np.random.Generator | None = None):
    """Run the network on one image (C,S,S) or a batch (N,C,S,S).

    Returns (prediction, ctx_chain).  The prediction is the raw linear head
    output (normalized-coordinate scale, no clamping); ctx_chain feeds
    :func:`backward` after a train-mode pass.
    """
    batched = _check_image_shape(config, image)
    chain = []

    h, ctx = ops.conv2d(image, params["conv1.weight"], params["conv1.bias"],
                        stride=CONV1_STRIDE, padding=CONV1_PAD)
    chain.append(("conv1", ctx))
    h, ctx = ops.relu(h)
    chain.append(("relu1", ctx))
    h, ctx = ops.maxpool2d(h)
    chain.append(("pool1", ctx))

    h, ctx = ops.conv2d(h, params["conv2.weight"], params["conv2.bias"],
                        stride=CONV2_STRIDE, padding=CONV2_PAD)
    chain.append(("conv2", ctx))
    h, ctx = ops.relu(h)
    chain.append(("relu2", ctx))
    h, ctx = ops.maxpool2d(h)
    chain.append(("pool2", ctx))

    conv_shape = h.shape
    h = h.reshape(h.shape[0], -1) if batched else h.reshape(-1)
    chain.append(("flatten", conv_shape))

    h, ctx = ops.linear(h, params["fc1.weight"], params["fc1.bias"])
    chain.append(("fc1", ctx))
    h, ctx = ops.relu(h)
    chain.append(("relu3", ctx))
    h, ctx = ops.dropout(h, config.dropout_rate, mode, rng)
    chain.append(("dropout", ctx))
    pred, ctx = ops.linear(h, params["fc2.weight"], params["fc2.bias"])
    chain.append(("fc2", ctx))

    return pred, chain


def backward(chain, grad_prediction: np.ndarray) -> dict[str, np.ndarray]:
    """Backpropagate through a forward ctx chain; returns per-parameter gradients."""
    grads: dict[str, np.ndarray] = {}
    g = grad_prediction
    for name, ctx in reversed(chain):
        if name in ("fc1", "fc2"):
            g, gw, gb = ops.linear_backward(ctx, g)
            grads[f"{name}.weight"], grads[f"{name}.bias"] = gw, gb
        elif name.startswith("relu"):
            g = ops.relu_backward(ctx, g)
        elif name.startswith("pool"):
            g = ops.maxpool2d_backward(ctx, g)
        elif name == "dropout":
            g = ops.dropout_backward(ctx, g)
        elif name == "flatten":
            g = g.reshape(ctx)
        elif name in ("conv1", "conv2"):
            g, gw, gb = ops.conv2d_backward(ctx, g)
            grads[f"{name}.weight"], grads[f"{name}.bias"] = gw, gb
        else:  # pragma: no cover
            raise RuntimeError(f"unknown layer '{name}' in ctx chain")
    return grads


def intermediate_shapes(config: NetworkConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Per-layer output shapes for a single sample, in forward order."""
    s2 = config.input_side // 2
    s4 = config.input_side // 4
    s8 = config.input_side // 8
    return [
        ("input", (config.input_channels, config.input_side, config.input_side)),
        ("conv1", (config.conv1_out, s2, s2)),
        ("relu1", (config.conv1_out, s2, s2)),
        ("pool1", (config.conv1_out, s4, s4)),
        ("conv2", (config.conv2_out, s4, s4)),
        ("relu2", (config.conv2_out, s4, s4)),
        ("pool2", (config.conv2_out, s8, s8)),
        ("flatten", (config.flatten_size,)),
        ("fc1", (config.hidden,)),
        ("relu3", (config.hidden,)),
        ("dropout", (config.hidden,)),
        ("fc2", (config.output_dim,)),
        ("output", (config.output_dim,)),
    ]
