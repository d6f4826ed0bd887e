"""Folder scanning: label and domain are pure functions of the relative path.

Expected layout:  <root>/{train,id_test,ood_test}/{real,fake}/<image files>
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

DOMAIN_DIRS = ("train", "id_test", "ood_test")
LABEL_DIRS = {"real": 0, "fake": 1}
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp", ".tiff"}


@dataclass
class ManifestEntry:
    path: Path
    label: int      # 1 = fake
    domain: str


@dataclass
class ExportManifest:
    entries: list[ManifestEntry]
    root: Path

    def __len__(self) -> int:
        return len(self.entries)


def classify(relative: Path) -> tuple[int, str] | None:
    """(label, domain) from a relative path, or None when it does not conform."""
    parts = relative.parts
    if len(parts) < 3:
        return None
    domain, label_dir = parts[0], parts[1]
    if domain not in DOMAIN_DIRS or label_dir not in LABEL_DIRS:
        return None
    if relative.suffix.lower() not in IMAGE_SUFFIXES:
        return None
    return LABEL_DIRS[label_dir], domain


def scan_folder(root) -> ExportManifest:
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"input folder {root} does not exist")
    entries = []
    for path in sorted(root.rglob("*")):
        if not path.is_file():
            continue
        parsed = classify(path.relative_to(root))
        if parsed is None:
            continue
        label, domain = parsed
        entries.append(ManifestEntry(path, label, domain))
    return ExportManifest(entries, root)
