"""Writer for the PINF feature container consumed by the training engine.

Layout, little-endian: magic "PINF", version u16 = 1, flags u16 (bit0:
anchors present), n u64, D u32; if anchors: d_text u32 then two rows of
d_text float32 (real prompt first); then n records of D float32 plus
label u8 (1 = fake) and domain u8 (0 train, 1 id_test, 2 ood_test).
"""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"PINF"
VERSION = 1
DOMAIN_CODE = {"train": 0, "id_test": 1, "ood_test": 2}


def write_pinf(path, features: np.ndarray, labels, domains,
               anchors: tuple[np.ndarray, np.ndarray] | None = None) -> None:
    features = np.asarray(features, dtype="<f4")
    if features.ndim != 2:
        raise ValueError("features must be a 2-D array of shape (n, D)")
    n, dim = features.shape
    if len(labels) != n or len(domains) != n:
        raise ValueError("labels and domains must match the feature count")
    flags = 1 if anchors is not None else 0
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HHQI", VERSION, flags, n, dim))
        if anchors is not None:
            t_real, t_fake = (np.asarray(a, dtype="<f4") for a in anchors)
            if t_real.shape != t_fake.shape or t_real.ndim != 1:
                raise ValueError("anchors must be two equal-length vectors")
            fh.write(struct.pack("<I", t_real.shape[0]))
            fh.write(t_real.tobytes())
            fh.write(t_fake.tobytes())
        for i in range(n):
            label = int(labels[i])
            domain = domains[i]
            if label not in (0, 1):
                raise ValueError(f"label {label} outside {{0,1}}")
            if domain not in DOMAIN_CODE:
                raise ValueError(f"unknown domain {domain!r}")
            fh.write(features[i].tobytes())
            fh.write(struct.pack("<BB", label, DOMAIN_CODE[domain]))
