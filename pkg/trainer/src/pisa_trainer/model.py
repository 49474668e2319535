"""Straight-through-estimator training for binary-weight networks.

Latent weights stay float inside [-1, 1]; every forward pass sees only
their signs (sign(0) -> +1, the same convention the weight file uses).
Three layer roles cover a whole network:

    sign    first fc layer; RMS-normalized preactivation, hard 1-bit sign
    quant   hidden layer; affine batch norm into a uniform [0, top] quantizer
    logits  last layer; raw preactivations, softmax only during training

Gradients pass through the hard nonlinearities via the usual windows: the
sign gets d/dn inside |n| <= 1, the quantizer gets d/dy while y stays
inside its clipping range. Batch-norm statistics are kept as running
averages for evaluation and folded into per-channel (scale, bias) pairs
when a checkpoint is exported.
"""

from __future__ import annotations

import numpy as np

from .checkpoint import FoldedLayer
from .errors import FormatError
from .recipes import LayerShape, hidden_bits, parse_topology

BN_EPS = 1e-5
RMS_EPS = 1e-8
EMA = 0.95  # running-statistics momentum
LOGIT_BIAS = 4096.0  # keeps exported 16-bit logits positive
TAU = 32.0  # softmax temperature; argmax-invariant, training only


def binarize(w: np.ndarray) -> np.ndarray:
    return np.where(w >= 0, 1.0, -1.0)


def im2col(x: np.ndarray, shape: LayerShape):
    """(B, H, W, C) -> (B, P, K) windows plus the output (oh, ow).

    Window elements ravel as (ky, kx, channel), channel fastest; the
    exported kernel rows use the same order.
    """
    b, h, w, c = x.shape
    p = shape.padding
    if p:
        x = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    oh = (h + 2 * p - shape.kernel_h) // shape.stride + 1
    ow = (w + 2 * p - shape.kernel_w) // shape.stride + 1
    cols = np.empty((b, oh * ow, shape.window_elems), dtype=x.dtype)
    idx = 0
    for yy in range(oh):
        for xx in range(ow):
            y0, x0 = yy * shape.stride, xx * shape.stride
            patch = x[:, y0 : y0 + shape.kernel_h, x0 : x0 + shape.kernel_w]
            cols[:, idx] = patch.reshape(b, -1)
            idx += 1
    return cols, (oh, ow)


def col2im(dcols: np.ndarray, shape: LayerShape, hwc):
    """Scatter window gradients back onto the (B, H, W, C) input."""
    h, w, c = hwc
    b = dcols.shape[0]
    p = shape.padding
    out = np.zeros((b, h + 2 * p, w + 2 * p, c))
    oh = (h + 2 * p - shape.kernel_h) // shape.stride + 1
    ow = (w + 2 * p - shape.kernel_w) // shape.stride + 1
    idx = 0
    for yy in range(oh):
        for xx in range(ow):
            y0, x0 = yy * shape.stride, xx * shape.stride
            out[:, y0 : y0 + shape.kernel_h, x0 : x0 + shape.kernel_w] += dcols[
                :, idx
            ].reshape(b, shape.kernel_h, shape.kernel_w, c)
            idx += 1
    return out[:, p : p + h, p : p + w] if p else out


def _adam_step(state, grad, lr, t, b1=0.9, b2=0.999, eps=1e-8):
    m, v = state
    m[:] = b1 * m + (1 - b1) * grad
    v[:] = b2 * v + (1 - b2) * grad * grad
    mh = m / (1 - b1**t)
    vh = v / (1 - b2**t)
    return lr * mh / (np.sqrt(vh) + eps)


class _Layer:
    """Latent weights plus the normalizer state its role needs."""

    def __init__(self, shape: LayerShape, role: str, top: int, rng):
        self.shape = shape
        self.role = role
        self.top = top
        o, k = shape.out_channels, shape.window_elems
        if rng is None:
            self.w = np.zeros((o, k))
        else:
            lim = np.sqrt(6.0 / (k + o))
            self.w = rng.uniform(-lim, lim, (o, k))
        if role == "sign":
            self.sigma = np.ones(o)
        elif role == "quant":
            self.gamma = np.full(o, top / 6.0)
            self.beta = np.full(o, top / 2.0)
            self.mu = np.zeros(o)
            self.var = np.ones(o)

    def param_names(self):
        if self.role == "sign":
            return ("w", "sigma")
        if self.role == "quant":
            return ("w", "gamma", "beta", "mu", "var")
        return ("w",)


class BwnnModel:
    """A chain of binary-weight layers built from a topology string."""

    def __init__(self, topology: str, hidden_bits: int, rng=None):
        self.topology = topology
        self.hidden_bits = hidden_bits
        self.input_shape, shapes = parse_topology(topology)
        top = (1 << hidden_bits) - 1
        self.layers = []
        for i, shape in enumerate(shapes):
            if i == len(shapes) - 1:
                role = "logits"
            elif i == 0 and shape.kind == "fc":
                role = "sign"
            else:
                role = "quant"
            self.layers.append(_Layer(shape, role, top, rng))
        self.opt = {}

    # -- forward / backward -------------------------------------------------

    def forward(self, x, train: bool):
        """x: (B, H, W, C) float in [0, 1]. Returns (logits, caches)."""
        caches = []
        for layer in self.layers:
            sh, role = layer.shape, layer.role
            wb = binarize(layer.w)
            if sh.kind == "fc":
                x = x.reshape(x.shape[0], -1)
                cols, spatial = x, None
                v = cols @ wb.T
            else:
                cols, spatial = im2col(x, sh)
                v = cols @ wb.T  # (B, P, O)
            cache = {"cols": cols, "wb": wb, "spatial": spatial, "vshape": v.shape}

            if role == "sign":
                if train:
                    s = np.sqrt(np.mean(v * v, axis=0) + RMS_EPS)
                    layer.sigma = EMA * layer.sigma + (1 - EMA) * s
                else:
                    s = layer.sigma
                n = v / s
                x = (n > 0).astype(np.float64)
                cache.update(s=s, n=n)
            elif role == "quant":
                flat = v.reshape(-1, sh.out_channels)
                if train:
                    mu = flat.mean(axis=0)
                    var = flat.var(axis=0)
                    layer.mu = EMA * layer.mu + (1 - EMA) * mu
                    layer.var = EMA * layer.var + (1 - EMA) * var
                else:
                    mu, var = layer.mu, layer.var
                sd = np.sqrt(var + BN_EPS)
                n = (flat - mu) / sd
                y = layer.gamma * n + layer.beta
                a = np.clip(np.floor(y + 0.5), 0, layer.top)
                cache.update(sd=sd, n=n, y=y)
                if spatial is None:
                    x = a
                else:
                    oh, ow = spatial
                    x = a.reshape(v.shape[0], oh, ow, sh.out_channels)
            else:
                x = v
            caches.append(cache)
        return x, caches

    def train_batch(self, x, labels, lr: float, t: int) -> float:
        """One optimizer step; returns the batch cross-entropy loss."""
        logits, caches = self.forward(x, train=True)
        b = len(labels)
        z = logits / TAU
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        loss = -np.mean(np.log(p[np.arange(b), labels] + 1e-12))
        dx = p.copy()
        dx[np.arange(b), labels] -= 1.0
        dx /= b * TAU

        grads = {}
        for i in range(len(self.layers) - 1, -1, -1):
            layer, cache = self.layers[i], caches[i]
            sh, role = layer.shape, layer.role
            o = sh.out_channels
            if role == "logits":
                dv = dx
            elif role == "quant":
                dflat = dx.reshape(-1, o)
                dy = dflat * ((cache["y"] > -0.5) & (cache["y"] < layer.top + 0.5))
                grads["gamma%d" % i] = np.sum(dy * cache["n"], axis=0)
                grads["beta%d" % i] = np.sum(dy, axis=0)
                dn = dy * layer.gamma
                dv = (dn - dn.mean(axis=0) - cache["n"] * np.mean(dn * cache["n"], axis=0))
                dv /= cache["sd"]
                dv = dv.reshape(cache["vshape"])
            else:  # sign
                dn = dx.reshape(cache["vshape"]) * (np.abs(cache["n"]) <= 1.0)
                dv = (dn - cache["n"] * np.mean(dn * cache["n"], axis=0)) / cache["s"]

            cols = cache["cols"]
            grads["w%d" % i] = (
                dv.reshape(-1, o).T @ cols.reshape(-1, sh.window_elems)
            )
            if i > 0:
                dcols = dv @ cache["wb"]
                if sh.kind == "fc":
                    prev = self.layers[i - 1]
                    if prev.shape.kind == "conv":
                        # fc consumed the raveled (oh, ow, O) map of the conv below
                        oh, ow = caches[i - 1]["spatial"]
                        dx = dcols.reshape(-1, oh, ow, prev.shape.out_channels)
                    else:
                        dx = dcols
                else:
                    h_in, w_in = self._conv_input_hw(i)
                    dx = col2im(dcols, sh, (h_in, w_in, sh.in_channels))

        self._apply(grads, lr, t)
        return float(loss)

    def _conv_input_hw(self, i):
        """Spatial size feeding conv layer i, walked from the input frame."""
        h, w, _ = self.input_shape
        for layer in self.layers[:i]:
            sh = layer.shape
            if sh.kind == "fc":
                break
            p, k, s = sh.padding, sh.kernel_h, sh.stride
            h = (h + 2 * p - k) // s + 1
            w = (w + 2 * p - sh.kernel_w) // sh.stride + 1
        return h, w

    def _apply(self, grads, lr, t):
        for i, layer in enumerate(self.layers):
            g = grads["w%d" % i]
            layer.w -= _adam_step(self._state("w%d" % i, g.shape), g, lr, t)
            np.clip(layer.w, -1.0, 1.0, out=layer.w)
            if layer.role == "quant":
                for name, park in (("gamma", layer.gamma), ("beta", layer.beta)):
                    gg = grads["%s%d" % (name, i)]
                    park -= _adam_step(self._state("%s%d" % (name, i), gg.shape), gg, lr, t)

    def _state(self, name, shape):
        if name not in self.opt:
            self.opt[name] = [np.zeros(shape), np.zeros(shape)]
        return self.opt[name]

    # -- state and folding --------------------------------------------------

    def arrays(self) -> dict:
        out = {}
        for i, layer in enumerate(self.layers):
            for name in layer.param_names():
                out["%s%d" % (name, i)] = np.array(getattr(layer, name))
        return out

    def load_arrays(self, arrays: dict):
        for i, layer in enumerate(self.layers):
            for name in layer.param_names():
                key = "%s%d" % (name, i)
                if key not in arrays:
                    raise FormatError("checkpoint is missing array %r" % key)
                want = getattr(layer, name).shape
                got = np.asarray(arrays[key], dtype=np.float64)
                if got.shape != want:
                    raise FormatError(
                        "checkpoint array %r shaped %r, expected %r"
                        % (key, got.shape, want)
                    )
                setattr(layer, name, got.copy())

    def fold(self) -> list:
        """Collapse normalizers into per-channel (scale, bias); see FoldedLayer.

        The first layer consumed inputs scaled by 1/input_top during
        training, so its folded scale absorbs that factor. A sign first
        layer needs no such correction: positive scaling never moves the
        comparator.
        """
        input_top = 255.0
        folded = []
        bits_in = 8
        for i, layer in enumerate(self.layers):
            o = layer.shape.out_channels
            if layer.role == "sign":
                scale = np.ones(o, dtype=np.float32)
                bias = np.zeros(o, dtype=np.float32)
                bits_out = 1
            elif layer.role == "quant":
                sd = np.sqrt(layer.var + BN_EPS)
                scale = (layer.gamma / sd).astype(np.float32)
                bias = (layer.beta - layer.gamma * layer.mu / sd).astype(np.float32)
                if i == 0:
                    scale = (scale.astype(np.float64) / input_top).astype(np.float32)
                bits_out = self.hidden_bits
            else:
                s = 1.0 / input_top if i == 0 else 1.0
                scale = np.full(o, s, dtype=np.float32)
                bias = np.full(o, LOGIT_BIAS, dtype=np.float32)
                bits_out = 16
            folded.append(
                FoldedLayer(
                    shape=layer.shape,
                    signs=binarize(layer.w).astype(np.int8),
                    bn_scale=scale,
                    bn_bias=bias,
                    input_bits=bits_in,
                )
            )
            bits_in = bits_out
        return folded


def rebuild(checkpoint) -> BwnnModel:
    """Reconstruct the trained network from a checkpoint's meta and arrays."""
    meta = getattr(checkpoint, "meta", None) or {}
    topology = meta.get("topology")
    wi = meta.get("wi")
    if not topology or not wi:
        raise FormatError("checkpoint describes no trained network")
    try:
        model = BwnnModel(str(topology), hidden_bits(str(wi)))
    except ValueError as e:
        raise FormatError("checkpoint metadata is unusable: %s" % e) from None
    state = {
        k: np.asarray(v)
        for k, v in checkpoint.arrays.items()
        if not k.startswith("hist_")
    }
    model.load_arrays(state)
    return model
