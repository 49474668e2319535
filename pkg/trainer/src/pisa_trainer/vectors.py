"""Golden-vector emission: integer replay of the folded network.

A golden file records raw sensor bytes plus every layer's integer output
so the simulator on the other side can be checked bit-for-bit:

    {"input_domain": "photodiode-complement", "adc_bits": 8,
     "frames": [{"input": [...], "layers": [[...], ...],
                 "prediction": 3, "label": 3}]}

`input` holds what the camera saw; the network consumes the complement
(255 - byte), which is what the photodiode integrates. Frames whose first
sign layer has any zero preactivation are skipped: an analog comparator
resolves a zero margin by electrical accident, not arithmetic, and such a
frame could never be compared exactly.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError
from .model import im2col, rebuild

ADC_BITS = 8
INPUT_TOP = (1 << ADC_BITS) - 1
LOGIT_BITS = 16


def activation_plan(folded):
    """Per-layer (activation, top): what each layer's output quantizes to.

    A layer feeding a 1-bit consumer is a sign layer; everything else
    rounds into [0, top]. The last layer always emits full-width logits.
    """
    plan = []
    for i in range(len(folded)):
        if i + 1 < len(folded):
            nbits = folded[i + 1].input_bits
            plan.append(("sign", 1) if nbits == 1 else ("quant", (1 << nbits) - 1))
        else:
            plan.append(("quant", (1 << LOGIT_BITS) - 1))
    return plan


def replay(folded, frames) -> list:
    """Run complement frames (B, H, W, C) through the integer pipeline.

    Returns one (B, n) int64 array per layer, flattened per frame in
    row-major (h, w, channel) order, exactly as a golden file stores them.
    """
    x = np.asarray(frames, dtype=np.int64)
    outs = []
    for fl, (act, top) in zip(folded, activation_plan(folded)):
        sh = fl.shape
        signs = fl.signs.astype(np.int64)
        if sh.kind == "fc":
            val = x.reshape(x.shape[0], -1) @ signs.T
            spatial = None
        else:
            cols, spatial = im2col(x, sh)
            val = cols @ signs.T  # (B, P, O)
        y = val.astype(np.float64) * fl.bn_scale.astype(np.float64)
        y += fl.bn_bias.astype(np.float64)
        if act == "sign":
            a = (y > 0).astype(np.int64)
        else:
            a = np.clip(np.floor(y + 0.5), 0, top).astype(np.int64)
        outs.append(a.reshape(a.shape[0], -1))
        if spatial is None:
            x = a
        else:
            x = a.reshape(a.shape[0], spatial[0], spatial[1], sh.out_channels)
    return outs


def predict(folded, frames) -> np.ndarray:
    """Predicted class per complement frame (B, H, W, C)."""
    return np.argmax(replay(folded, frames)[-1], axis=1)


def emit_vectors(checkpoint, images, labels=None, count: int = 16) -> dict:
    """Build a golden-vector document from raw frames.

    `images`: (N, H, W) or (N, H, W, 1) bytes as stored in the dataset.
    Raises FormatError when fewer than `count` frames survive the
    zero-margin filter, or when the network wants multi-channel input
    (golden frames hold exactly one byte per pixel).
    """
    model = rebuild(checkpoint)
    folded = model.fold()
    h, w, c = model.input_shape
    if c != 1:
        raise FormatError(
            "golden frames hold one byte per pixel; this network wants %d channels" % c
        )
    if count < 1:
        raise FormatError("a golden file needs at least one frame")
    images = np.asarray(images)
    if images.ndim == 4 and images.shape[3] == 1:
        images = images[..., 0]
    if images.ndim != 3 or images.shape[1:] != (h, w):
        raise FormatError(
            "frames shaped %r do not fit the %dx%d input" % (images.shape, h, w)
        )
    if images.size and (images.min() < 0 or images.max() > INPUT_TOP):
        raise FormatError("frame bytes must lie in 0..%d" % INPUT_TOP)

    sign_first = activation_plan(folded)[0][0] == "sign"
    signs0 = folded[0].signs.astype(np.int64)
    frames = []
    for i in range(len(images)):
        raw = images[i].astype(np.int64)
        comp = INPUT_TOP - raw
        if sign_first and (signs0 @ comp.ravel() == 0).any():
            continue
        outs = replay(folded, comp[None, :, :, None])
        entry = {
            "input": [int(b) for b in raw.ravel()],
            "layers": [[int(v) for v in out[0]] for out in outs],
            "prediction": int(np.argmax(outs[-1][0])),
        }
        if labels is not None:
            entry["label"] = int(labels[i])
        frames.append(entry)
        if len(frames) == count:
            break
    if len(frames) < count:
        raise FormatError(
            "only %d of %d requested frames had clean first-layer margins"
            % (len(frames), count)
        )
    return {"input_domain": "photodiode-complement", "adc_bits": ADC_BITS,
            "frames": frames}
