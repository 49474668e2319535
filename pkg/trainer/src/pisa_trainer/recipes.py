"""Training recipes: dataset, topology and schedule in one value.

A topology string is an input shape followed by layer tokens:

    "28x28x1 f256 f256 f256 f10"
    "32x32x3 64c3s1p1 64c3s2p1 128c3s1p1 128c3s2p1 256c3s1p1 256c3s2p1 f1024 f10"

`HxW[xC]` fixes the frame, `<out>c<k>[s<stride>][p<pad>]` adds a conv layer
and `f<out>` a fully connected one. Conv layers cannot follow fc layers.

Weights are +/-1 everywhere. The W:I target ("1:4") sets how many bits the
hidden activations keep; an fc first layer always emits 1-bit sign
activations instead, matching the in-sensor comparator downstream.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

# six binary-weight conv layers and two fc, strided where a pool would sit
DEFAULT_TOPOLOGY = (
    "32x32x3 64c3s1p1 64c3s2p1 128c3s1p1 128c3s2p1 "
    "256c3s1p1 256c3s2p1 f1024 f10"
)
MNIST_TOPOLOGY = "28x28x1 f256 f256 f256 f10"

HIDDEN_BITS_CHOICES = (2, 4, 8, 16)
DATASETS = ("mnist", "svhn", "cifar10")


def hidden_bits(wi: str) -> int:
    """Activation bits from a W:I target like '1:4'."""
    m = re.fullmatch(r"1:(\d+)", wi)
    if not m or int(m.group(1)) not in HIDDEN_BITS_CHOICES:
        raise ValueError(
            "W:I target must be 1:N with N in %s, got %r" % (HIDDEN_BITS_CHOICES, wi)
        )
    return int(m.group(1))


@dataclass(frozen=True)
class LayerShape:
    kind: str  # 'conv' or 'fc'
    in_channels: int
    out_channels: int
    kernel_h: int = 1
    kernel_w: int = 1
    stride: int = 1
    padding: int = 0

    @property
    def window_elems(self) -> int:
        return self.kernel_h * self.kernel_w * self.in_channels


def parse_topology(text: str):
    """Parse a topology string into ((h, w, c), [LayerShape, ...])."""
    tokens = text.split()
    if len(tokens) < 2:
        raise ValueError("topology needs an input shape and at least one layer")
    m = re.fullmatch(r"(\d+)x(\d+)(?:x(\d+))?", tokens[0])
    if not m:
        raise ValueError("bad input shape %r, want HxW or HxWxC" % tokens[0])
    h, w, c = int(m.group(1)), int(m.group(2)), int(m.group(3) or 1)
    if 0 in (h, w, c):
        raise ValueError("zero-sized input shape %r" % tokens[0])
    input_shape = (h, w, c)

    layers = []
    seen_fc = False
    for tok in tokens[1:]:
        mfc = re.fullmatch(r"f(\d+)", tok)
        mcv = re.fullmatch(r"(\d+)c(\d+)(?:s(\d+))?(?:p(\d+))?", tok)
        if mfc:
            out = int(mfc.group(1))
            if not out:
                raise ValueError("zero-width layer %r" % tok)
            layers.append(LayerShape("fc", h * w * c, out))
            h, w, c = 1, 1, out
            seen_fc = True
        elif mcv:
            if seen_fc:
                raise ValueError("conv layer %r after an fc layer" % tok)
            out, k = int(mcv.group(1)), int(mcv.group(2))
            stride = int(mcv.group(3) or 1)
            pad = int(mcv.group(4) or 0)
            if 0 in (out, k, stride):
                raise ValueError("zero-sized field in %r" % tok)
            oh = (h + 2 * pad - k) // stride + 1
            ow = (w + 2 * pad - k) // stride + 1
            if oh < 1 or ow < 1:
                raise ValueError("kernel %r does not fit a %dx%d input" % (tok, h, w))
            layers.append(LayerShape("conv", c, out, k, k, stride, pad))
            h, w, c = oh, ow, out
        else:
            raise ValueError("cannot parse layer token %r" % tok)
    return input_shape, layers


@dataclass(frozen=True)
class TrainRecipe:
    dataset: str
    topology: str = DEFAULT_TOPOLOGY
    epochs: int = 18
    wi: str = "1:4"  # weight:activation bit target for hidden layers
    seed: int = 20240811
    data_dir: str = "data"
    batch_size: int = 100
    lr: float = 2.5e-3
    val_frames: int = 2000
    train_limit: int | None = None  # cap on training frames, smoke runs only

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ValueError("unknown dataset %r, know %s" % (self.dataset, DATASETS))
        if self.epochs < 1 or self.batch_size < 1 or self.val_frames < 1:
            raise ValueError("epochs, batch_size and val_frames must be positive")
        self.hidden_bits  # reject a bad W:I target at construction time
        parse_topology(self.topology)

    @property
    def hidden_bits(self) -> int:
        return hidden_bits(self.wi)

    def with_overrides(self, **kw) -> "TrainRecipe":
        return replace(self, **kw)


def recipe_for(dataset: str, data_dir=None, **overrides) -> TrainRecipe:
    """Default recipe for a dataset name; keyword overrides win."""
    base = {
        "mnist": dict(topology=MNIST_TOPOLOGY, data_dir="data/mnist", epochs=24),
        "svhn": dict(data_dir="data/svhn"),
        "cifar10": dict(data_dir="data/cifar10"),
    }.get(dataset, {})
    if data_dir is not None:
        base["data_dir"] = str(data_dir)
    base.update(overrides)
    return TrainRecipe(dataset=dataset, **base)


def mnist_recipe(data_dir="data/mnist", **overrides) -> TrainRecipe:
    """784-256-256-256-10 fully connected; lands around 95.5% held-out accuracy."""
    return recipe_for("mnist", data_dir, **overrides)


def svhn_recipe(data_dir="data/svhn", **overrides) -> TrainRecipe:
    """Full conv stack on 32x32x3 frames. No data ships with this package;
    convert SVHN to IDX first (see datasets.DATASET_FILES for the names)."""
    return recipe_for("svhn", data_dir, **overrides)


def cifar10_recipe(data_dir="data/cifar10", **overrides) -> TrainRecipe:
    """Same conv stack as the SVHN recipe, pointed at CIFAR-10 in IDX form."""
    return recipe_for("cifar10", data_dir, **overrides)
