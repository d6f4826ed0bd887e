"""`pinf-export`: embed an image folder plus label prompts into a PINF file."""
from __future__ import annotations

import argparse
import sys

import numpy as np
from PIL import Image, UnidentifiedImageError

from .backends import STUB_DIM, ClipBackend, StubBackend
from .manifest import scan_folder
from .pinf import write_pinf


def export(in_dir, out_path, model_id: str, stub: bool = False, batch: int = 16,
           device: str = "cpu", stub_seed: int = 0, stub_dim: int = STUB_DIM,
           log=print) -> dict:
    """Run the export; returns a summary dict with counts."""
    manifest = scan_folder(in_dir)
    backend = StubBackend(stub_dim, stub_seed) if stub else ClipBackend(model_id, device)

    features, labels, domains = [], [], []
    skipped = 0
    pending_imgs, pending_meta = [], []

    def flush():
        nonlocal pending_imgs, pending_meta
        if not pending_imgs:
            return
        embedded = backend.embed_images(pending_imgs)
        for row, (label, domain) in zip(embedded, pending_meta):
            features.append(row)
            labels.append(label)
            domains.append(domain)
        pending_imgs, pending_meta = [], []

    for entry in manifest.entries:
        try:
            with Image.open(entry.path) as img:
                pending_imgs.append(img.convert("RGB"))
        except (OSError, UnidentifiedImageError) as exc:
            skipped += 1
            log(f"warning: skipping unreadable image {entry.path}: {exc}")
            continue
        pending_meta.append((entry.label, entry.domain))
        if len(pending_imgs) >= batch:
            flush()
    flush()

    if not features:
        raise RuntimeError(f"no images exported from {in_dir} ({skipped} skipped)")

    anchors = backend.embed_prompts()
    write_pinf(out_path, np.stack(features), labels, domains, anchors)
    summary = {"exported": len(features), "skipped": skipped,
               "dim": int(features[0].shape[0]), "out": str(out_path)}
    log(f"exported {summary['exported']} embeddings (dim {summary['dim']}), "
        f"skipped {skipped} -> {out_path}")
    return summary


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pinf-export",
        description="Export image embeddings and label-prompt anchors to PINF.")
    parser.add_argument("--in", dest="in_dir", required=True,
                        help="folder with train/id_test/ood_test over real/fake")
    parser.add_argument("--out", required=True, help="output PINF path")
    parser.add_argument("--model", default="openai/clip-vit-large-patch14",
                        help="model identifier for the real backend")
    parser.add_argument("--stub", action="store_true",
                        help="seeded pixel-statistics projection instead of a model")
    parser.add_argument("--batch", type=int, default=16)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--stub-seed", type=int, default=0)
    parser.add_argument("--stub-dim", type=int, default=STUB_DIM)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        export(args.in_dir, args.out, args.model, stub=args.stub, batch=args.batch,
               device=args.device, stub_seed=args.stub_seed, stub_dim=args.stub_dim)
    except (RuntimeError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
