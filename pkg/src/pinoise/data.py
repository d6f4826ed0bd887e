"""Planted-shortcut benchmark generation and the PINF feature-file format.

The benchmark embeds two orthonormal directions in R^D: a causal one whose
sign always matches the label, and a stronger shortcut one whose sign
matches the label only on the training side. Out-of-distribution test data
breaks the shortcut correlation, so a detector that leans on it collapses
there while the causal Bayes accuracy Phi(alpha_c / sigma) stays reachable.

PINF layout, all integers little-endian:
    magic "PINF" | version u16 = 1 | flags u16 (bit0: anchors) | n u64 | D u32
    [if anchors: d_text u32, then two rows of d_text float32]
    n records of (D float32, label u8 in {0,1}, domain u8 in {0,1,2})
Features are stored 32-bit and widened to 64-bit on load.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"PINF"
VERSION = 1
DOMAINS = ("train", "id_test", "ood_test")
_DOMAIN_CODE = {name: i for i, name in enumerate(DOMAINS)}


class FormatError(Exception):
    """Malformed feature file; `offset` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass
class FeatureRecord:
    x_raw: np.ndarray   # float32, length D
    y: int              # 1 = fake
    domain: str


@dataclass
class ShortcutSpec:
    dim: int = 64
    alpha_causal: float = 1.0
    alpha_shortcut: float = 2.0
    sigma: float = 1.0
    p_corr_train: float = 1.0
    ood_policy: str = "uncorrelated"
    n_train: int = 20000
    n_id: int = 4000
    n_ood: int = 4000
    seed: int = 0

    def validate(self) -> "ShortcutSpec":
        if self.dim < 2:
            raise ValueError("dim must be >= 2 to hold two orthonormal directions")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not (0.0 <= self.p_corr_train <= 1.0):
            raise ValueError("p_corr_train must lie in [0, 1]")
        if self.ood_policy not in ("uncorrelated", "flipped"):
            raise ValueError(f"unknown ood_policy {self.ood_policy!r}")
        if min(self.n_train, self.n_id, self.n_ood) < 0:
            raise ValueError("split sizes must be >= 0")
        if self.alpha_shortcut <= self.alpha_causal:
            raise ValueError("alpha_shortcut must exceed alpha_causal")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "ShortcutSpec":
        import dataclasses
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown shortcut spec keys: {sorted(unknown)}")
        return cls(**data).validate()

    def to_dict(self) -> dict:
        import dataclasses
        return dataclasses.asdict(self)


def shortcut_directions(spec: ShortcutSpec) -> tuple[np.ndarray, np.ndarray]:
    """Seeded orthonormal (u_causal, u_shortcut) via Gram-Schmidt."""
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(spec.seed, spawn_key=(0,))))
    g1 = gen.standard_normal(spec.dim)
    g2 = gen.standard_normal(spec.dim)
    u_c = g1 / np.linalg.norm(g1)
    u_s = g2 - (g2 @ u_c) * u_c
    u_s /= np.linalg.norm(u_s)
    return u_c, u_s


def gen_shortcut_dataset(spec: ShortcutSpec) -> list[FeatureRecord]:
    """Sample the three domains; labels uniform, shortcut sign per domain policy."""
    spec.validate()
    u_c, u_s = shortcut_directions(spec)
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(spec.seed, spawn_key=(1,))))
    records: list[FeatureRecord] = []
    for domain, count in (("train", spec.n_train), ("id_test", spec.n_id), ("ood_test", spec.n_ood)):
        for _ in range(count):
            y = int(gen.integers(0, 2))
            y_sign = 1.0 if y else -1.0
            if domain == "ood_test":
                if spec.ood_policy == "uncorrelated":
                    s = 1.0 if gen.random() < 0.5 else -1.0
                else:
                    s = -y_sign
            else:
                s = y_sign if gen.random() < spec.p_corr_train else -y_sign
            x = (spec.alpha_causal * y_sign * u_c
                 + spec.alpha_shortcut * s * u_s
                 + spec.sigma * gen.standard_normal(spec.dim))
            records.append(FeatureRecord(x.astype(np.float32), y, domain))
    return records


def bayes_accuracy_causal(spec: ShortcutSpec) -> float:
    """Phi(alpha_c / sigma): accuracy of the causal-direction-only probe."""
    return 0.5 * (1.0 + math.erf(spec.alpha_causal / spec.sigma / math.sqrt(2.0)))


def true_posterior_fake(x: np.ndarray, spec: ShortcutSpec, domain: str) -> np.ndarray:
    """Closed-form P(fake | x) of the generative model on one domain.

    Rows of x; uses only the projections on the two planted directions since
    the isotropic part cancels from the likelihood ratio.
    """
    u_c, u_s = shortcut_directions(spec)
    pc = x @ u_c / spec.sigma ** 2
    ps = x @ u_s / spec.sigma ** 2
    ac, as_ = spec.alpha_causal, spec.alpha_shortcut
    if domain == "ood_test":
        p_plus = 0.5 if spec.ood_policy == "uncorrelated" else 0.0
    else:
        p_plus = spec.p_corr_train  # P(s = y_sign | y)

    def log_lik(y_sign: float) -> np.ndarray:
        # logsumexp over the shortcut sign mixture; constant terms cancel later
        terms = []
        for s_sign, weight in ((y_sign, p_plus), (-y_sign, 1.0 - p_plus)):
            if weight == 0.0:
                continue
            terms.append(np.log(weight) + ac * y_sign * pc + as_ * s_sign * ps)
        stacked = np.stack(terms, axis=0)
        peak = stacked.max(axis=0)
        return peak + np.log(np.exp(stacked - peak).sum(axis=0))

    log_odds = log_lik(1.0) - log_lik(-1.0)
    from .functional import sigmoid
    return sigmoid(log_odds)


def to_arrays(records: list[FeatureRecord], domain: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(X float64, y int) for one domain, or all records when domain is None."""
    chosen = [r for r in records if domain is None or r.domain == domain]
    if not chosen:
        return np.zeros((0, 0)), np.zeros(0, dtype=np.int64)
    x = np.stack([r.x_raw for r in chosen]).astype(np.float64)
    y = np.array([r.y for r in chosen], dtype=np.int64)
    return x, y


def write_features(path, records: list[FeatureRecord],
                   anchors: tuple[np.ndarray, np.ndarray] | None = None) -> None:
    """Bit-exact PINF writer; see the module docstring for the layout."""
    dims = {r.x_raw.shape[0] for r in records}
    if len(dims) > 1:
        raise ValueError(f"records carry inconsistent dimensions {sorted(dims)}")
    dim = dims.pop() if dims else 0
    flags = 1 if anchors is not None else 0
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HHQI", VERSION, flags, len(records), dim))
        if anchors is not None:
            t_real, t_fake = anchors
            if t_real.shape != t_fake.shape or t_real.ndim != 1:
                raise ValueError("anchors must be two equal-length vectors")
            fh.write(struct.pack("<I", t_real.shape[0]))
            fh.write(np.asarray(t_real, dtype="<f4").tobytes())
            fh.write(np.asarray(t_fake, dtype="<f4").tobytes())
        for r in records:
            if r.y not in (0, 1):
                raise ValueError(f"label {r.y} outside {{0,1}}")
            if r.domain not in _DOMAIN_CODE:
                raise ValueError(f"unknown domain {r.domain!r}")
            fh.write(np.asarray(r.x_raw, dtype="<f4").tobytes())
            fh.write(struct.pack("<BB", r.y, _DOMAIN_CODE[r.domain]))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, count: int, what: str) -> bytes:
        if self.pos + count > len(self.blob):
            raise FormatError(f"truncated while reading {what}", self.pos)
        out = self.blob[self.pos:self.pos + count]
        self.pos += count
        return out


def read_features(path) -> tuple[list[FeatureRecord], tuple[np.ndarray, np.ndarray] | None]:
    """Validating PINF reader; errors carry the offending byte offset."""
    with open(path, "rb") as fh:
        blob = fh.read()
    rd = _Reader(blob)
    if rd.take(4, "magic") != MAGIC:
        raise FormatError("bad magic, expected 'PINF'", 0)
    version, flags, count, dim = struct.unpack("<HHQI", rd.take(16, "header"))
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if flags & ~1:
        raise FormatError(f"unknown flag bits 0x{flags:04x}", 6)
    anchors = None
    if flags & 1:
        (d_text,) = struct.unpack("<I", rd.take(4, "anchor width"))
        if d_text == 0:
            raise FormatError("anchors flag set but anchor width is zero", rd.pos - 4)
        t_real = np.frombuffer(rd.take(4 * d_text, "real anchor"), dtype="<f4").copy()
        t_fake = np.frombuffer(rd.take(4 * d_text, "fake anchor"), dtype="<f4").copy()
        anchors = (t_real, t_fake)
    records = []
    for i in range(count):
        x = np.frombuffer(rd.take(4 * dim, f"record {i} features"), dtype="<f4").copy()
        label_offset = rd.pos
        label, domain = struct.unpack("<BB", rd.take(2, f"record {i} tail"))
        if label not in (0, 1):
            raise FormatError(f"record {i} label {label} outside {{0,1}}", label_offset)
        if domain >= len(DOMAINS):
            raise FormatError(f"record {i} domain code {domain} outside 0..2", label_offset + 1)
        records.append(FeatureRecord(x, int(label), DOMAINS[domain]))
    if rd.pos != len(blob):
        raise FormatError(f"{len(blob) - rd.pos} trailing bytes after last record", rd.pos)
    return records, anchors
