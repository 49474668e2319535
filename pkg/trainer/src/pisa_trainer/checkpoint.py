"""Checkpoints: trained state plus enough metadata to rebuild the model.

A checkpoint is a plain .npz holding one JSON metadata entry and the raw
per-layer training arrays (latent weights and normalizer statistics), so
batch norm stays float until an exporter folds it. History arrays carry a
`hist_` prefix and are ignored when reconstructing the network.
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .recipes import LayerShape

META_KEYS = ("dataset", "topology", "wi", "seed", "epochs")


@dataclass
class FoldedLayer:
    """One exported layer: +/-1 signs and the folded affine per channel."""

    shape: LayerShape
    signs: np.ndarray  # (out_channels, K) int8, +1/-1
    bn_scale: np.ndarray  # (out_channels,) float32
    bn_bias: np.ndarray  # (out_channels,) float32
    input_bits: int


@dataclass
class Checkpoint:
    meta: dict
    arrays: dict

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(
            path, meta=np.array(json.dumps(self.meta)), **self.arrays
        )
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        try:
            with np.load(path, allow_pickle=False) as npz:
                names = set(npz.files)
                meta_raw = str(npz["meta"][()]) if "meta" in names else None
                arrays = {k: npz[k] for k in names if k != "meta"}
        except (OSError, ValueError, zipfile.BadZipFile) as e:
            raise FormatError("%s: cannot read checkpoint: %s" % (path, e)) from None
        if meta_raw is None:
            raise FormatError("%s: no metadata entry, not a checkpoint" % path)
        try:
            meta = json.loads(meta_raw)
        except json.JSONDecodeError as e:
            raise FormatError("%s: metadata is not JSON: %s" % (path, e)) from None
        if not isinstance(meta, dict):
            raise FormatError("%s: metadata is not an object" % path)
        missing = [k for k in META_KEYS if k not in meta]
        if missing:
            raise FormatError("%s: metadata lacks %s" % (path, ", ".join(missing)))
        return cls(meta=meta, arrays=arrays)

    def history(self, name: str) -> np.ndarray:
        return np.asarray(self.arrays.get("hist_" + name, []))
