"""Offline exporter writing vision-language embeddings to the PINF format."""
from .backends import PROMPT_FAKE, PROMPT_REAL, StubBackend
from .cli import export
from .manifest import ExportManifest, classify, scan_folder
from .pinf import write_pinf

__version__ = "0.1.0"
