"""The training loop: recipe in, checkpoint out.

Held-out validation frames never appear in a training batch. Validation
accuracy is measured on the folded integer network, the same arithmetic
the exported artifact will run, and is logged once per epoch. The
checkpoint keeps whichever epoch validated best.
"""

from __future__ import annotations

import time

import numpy as np

from .checkpoint import Checkpoint
from .datasets import load_training_pair
from .model import BwnnModel
from .recipes import TrainRecipe
from .vectors import predict

INPUT_TOP = 255


def _prepare(recipe: TrainRecipe, data, want_shape):
    if data is None:
        images, labels = load_training_pair(recipe.dataset, recipe.data_dir)
    else:
        images, labels = data
        images = np.asarray(images)
        labels = np.asarray(labels, dtype=np.int64)
        if images.ndim == 3:
            images = images[..., None]
    if images.shape[1:] != want_shape:
        raise ValueError(
            "dataset frames are shaped %r but the topology wants %r"
            % (images.shape[1:], want_shape)
        )
    return images, labels


def train(recipe: TrainRecipe, data=None, log=print) -> Checkpoint:
    """Train a recipe to a checkpoint.

    `data` may carry (images, labels) arrays directly, bypassing the
    dataset files; `log` receives one line per epoch.
    """
    rng = np.random.default_rng(recipe.seed)
    model = BwnnModel(recipe.topology, recipe.hidden_bits, rng)
    images, labels = _prepare(recipe, data, model.input_shape)
    classes = model.layers[-1].shape.out_channels
    if labels.min() < 0 or labels.max() >= classes:
        raise ValueError(
            "labels span %d..%d, network has %d classes"
            % (labels.min(), labels.max(), classes)
        )

    comp = INPUT_TOP - images.astype(np.int64)  # what the photodiode integrates
    u = comp / float(INPUT_TOP)

    perm = rng.permutation(len(images))
    n_val = min(recipe.val_frames, max(1, len(images) // 4))
    val_idx = perm[:n_val]
    train_idx = perm[n_val:]
    if recipe.train_limit is not None:
        train_idx = train_idx[: recipe.train_limit]
    if not len(train_idx):
        raise ValueError("no frames left to train on after the validation split")

    batch_loss, epoch_loss, val_curve = [], [], []
    best = (-1.0, None, -1)
    t = 0
    for epoch in range(recipe.epochs):
        tic = time.time()
        lr = recipe.lr * 0.5 * (1 + np.cos(np.pi * epoch / recipe.epochs))
        order = rng.permutation(len(train_idx))
        losses = []
        for i in range(0, len(order), recipe.batch_size):
            sel = train_idx[order[i : i + recipe.batch_size]]
            t += 1
            losses.append(model.train_batch(u[sel], labels[sel], lr, t))
        batch_loss.extend(losses)
        epoch_loss.append(float(np.mean(losses)))

        folded = model.fold()
        val_acc = float(np.mean(predict(folded, comp[val_idx]) == labels[val_idx]))
        val_curve.append(val_acc)
        log(
            "epoch %2d/%d  loss %.4f  val %.4f  lr %.5f  %.1fs"
            % (epoch + 1, recipe.epochs, epoch_loss[-1], val_acc, lr,
               time.time() - tic)
        )
        if val_acc > best[0]:
            best = (val_acc, model.arrays(), epoch)

    model.load_arrays(best[1])
    h, w, c = model.input_shape
    meta = {
        "format": 1,
        "dataset": recipe.dataset,
        "topology": recipe.topology,
        "wi": recipe.wi,
        "seed": recipe.seed,
        "epochs": recipe.epochs,
        "batch_size": recipe.batch_size,
        "lr": recipe.lr,
        "train_frames": int(len(train_idx)),
        "val_frames": int(n_val),
        "best_epoch": int(best[2] + 1),
        "best_val_accuracy": float(best[0]),
        "input_hw": [h, w],
        "input_channels": c,
        "classes": int(classes),
    }
    arrays = model.arrays()
    arrays["hist_batch_loss"] = np.asarray(batch_loss)
    arrays["hist_epoch_loss"] = np.asarray(epoch_loss)
    arrays["hist_val_accuracy"] = np.asarray(val_curve)
    return Checkpoint(meta=meta, arrays=arrays)
