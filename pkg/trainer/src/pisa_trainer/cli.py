"""Command-line entry points.

    pisa-trainer train --dataset mnist --out ckpt.npz
    pisa-trainer export --checkpoint ckpt.npz --out net.pisaw
    pisa-trainer vectors --checkpoint ckpt.npz --images t10k-images-idx3-ubyte.gz \
        --labels t10k-labels-idx1-ubyte.gz --count 16 --out golden.json

Exit codes: 0 success, 1 usage, 2 bad inputs (missing datasets, unreadable
checkpoints, malformed arguments), 3 unexpected internal failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .checkpoint import Checkpoint
from .datasets import load_idx
from .errors import TrainerError
from .recipes import recipe_for
from .train import train
from .vectors import emit_vectors
from .weightfile import export


def cmd_train(args) -> int:
    overrides = {}
    for name in ("topology", "wi", "epochs", "seed", "lr", "train_limit"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    if args.batch is not None:
        overrides["batch_size"] = args.batch
    if args.val_frames is not None:
        overrides["val_frames"] = args.val_frames
    recipe = recipe_for(args.dataset, args.data_dir, **overrides)
    ckpt = train(recipe)
    ckpt.save(args.out)
    print(
        "wrote %s  best epoch %d  val %.4f"
        % (args.out, ckpt.meta["best_epoch"], ckpt.meta["best_val_accuracy"])
    )
    return 0


def cmd_export(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    blob = export(ckpt, args.out)
    print("wrote %s (%d bytes, %d layers)"
          % (args.out, len(blob), len(ckpt.meta.get("topology", "").split()) - 1))
    return 0


def cmd_vectors(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    images = load_idx(args.images, want_dims=(3, 4))
    labels = load_idx(args.labels, want_dims=(1,)) if args.labels else None
    doc = emit_vectors(ckpt, images, labels, count=args.count)
    Path(args.out).write_text(json.dumps(doc) + "\n", encoding="utf-8")
    hits = sum(
        1 for f in doc["frames"]
        if "label" in f and f["prediction"] == f["label"]
    )
    note = "" if labels is None else ", %d/%d labelled correctly" % (hits, args.count)
    print("wrote %s (%d frames%s)" % (args.out, len(doc["frames"]), note))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pisa-trainer",
                                description="train and export binary-weight networks")
    sub = p.add_subparsers(dest="command", required=True)

    pt = sub.add_parser("train", help="train a recipe into a checkpoint")
    pt.add_argument("--dataset", required=True,
                    choices=("mnist", "svhn", "cifar10"))
    pt.add_argument("--data-dir", dest="data_dir")
    pt.add_argument("--topology")
    pt.add_argument("--wi", help="W:I target, e.g. 1:4")
    pt.add_argument("--epochs", type=int)
    pt.add_argument("--seed", type=int)
    pt.add_argument("--batch", type=int)
    pt.add_argument("--lr", type=float)
    pt.add_argument("--val-frames", dest="val_frames", type=int)
    pt.add_argument("--train-limit", dest="train_limit", type=int)
    pt.add_argument("--out", required=True)
    pt.set_defaults(func=cmd_train)

    pe = sub.add_parser("export", help="write a checkpoint's weight file")
    pe.add_argument("--checkpoint", required=True)
    pe.add_argument("--out", required=True)
    pe.set_defaults(func=cmd_export)

    pv = sub.add_parser("vectors", help="emit golden test vectors")
    pv.add_argument("--checkpoint", required=True)
    pv.add_argument("--images", required=True)
    pv.add_argument("--labels")
    pv.add_argument("--count", type=int, default=16)
    pv.add_argument("--out", required=True)
    pv.set_defaults(func=cmd_vectors)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1
    try:
        return args.func(args)
    except (TrainerError, OSError, ValueError) as e:
        print("error: %s" % e, file=sys.stderr)
        return 2
    except Exception as e:  # pragma: no cover - last resort
        print("internal error: %r" % e, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
