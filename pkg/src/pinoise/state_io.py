"""PINS model-state container: named float64 tensors behind one binary header.

Layout, little-endian throughout:
    magic "PINS" | version u16 = 1 | config u32-length-prefixed JSON |
    tensor count u32 | per tensor: name u16-len + bytes, rank u8,
    dims u32 each, float64 payload.

The file holds every parameter tensor (frozen projection and anchors
included), the optimizer moments, the step counter, and the training curve,
so identical seeds reproduce identical bytes and curves can be re-emitted
without retraining.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .data import FormatError
from .encoder import EncoderParams, TextAnchors
from .noisegen import NoiseGenParams
from .objective import CurvePoint, Heads, RunConfig, TrainState
from .rng import RngStreams

MAGIC = b"PINS"
VERSION = 1

CURVE_COLUMNS = ("step", "loss_base", "loss_vpn", "loss_total", "batch_acc")


def _state_tensors(state: TrainState) -> dict[str, np.ndarray]:
    tensors = {
        "encoder.proj": state.encoder.proj,
        "anchors.t_real": state.anchors.t_real,
        "anchors.t_fake": state.anchors.t_fake,
        "step": np.asarray(float(state.step)),
    }
    tensors.update(state.trainable())
    for name, arr in state.adam_m.items():
        tensors[f"adam.m.{name}"] = arr
    for name, arr in state.adam_v.items():
        tensors[f"adam.v.{name}"] = arr
    return tensors


def save_state(path, state: TrainState, config: RunConfig,
               curve: list[CurvePoint] | None = None) -> None:
    tensors = _state_tensors(state)
    if curve:
        tensors["curve"] = np.array(
            [[c.step, c.loss_base, c.loss_vpn, c.loss_total, c.batch_acc] for c in curve])
    else:
        tensors["curve"] = np.zeros((0, 5))
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.asarray(tensors[name], dtype=np.float64)
            encoded = name.encode()
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.astype("<f8").tobytes())


def load_state(path) -> tuple[TrainState, RunConfig, list[CurvePoint]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    pos = 0

    def take(count: int, what: str) -> bytes:
        nonlocal pos
        if pos + count > len(blob):
            raise FormatError(f"truncated while reading {what}", pos)
        out = blob[pos:pos + count]
        pos += count
        return out

    if take(4, "magic") != MAGIC:
        raise FormatError("bad magic, expected 'PINS'", 0)
    (version,) = struct.unpack("<H", take(2, "version"))
    if version != VERSION:
        raise FormatError(f"unsupported state version {version}", 4)
    (cfg_len,) = struct.unpack("<I", take(4, "config length"))
    try:
        config = RunConfig.from_dict(json.loads(take(cfg_len, "config")))
    except (ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"invalid embedded config: {exc}", pos - cfg_len)
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "tensor name length"))
        name = take(name_len, "tensor name").decode()
        (rank,) = struct.unpack("<B", take(1, "tensor rank"))
        shape = tuple(struct.unpack("<I", take(4, "tensor dim"))[0] for _ in range(rank))
        n_items = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(take(8 * n_items, f"tensor {name}"), dtype="<f8")
        tensors[name] = data.reshape(shape).copy()
    if pos != len(blob):
        raise FormatError(f"{len(blob) - pos} trailing bytes", pos)

    required = ["encoder.proj", "encoder.lora_b", "encoder.lora_a", "anchors.t_real",
                "anchors.t_fake", "noisegen.w_query", "noisegen.w_key", "noisegen.w_value",
                "noisegen.w_mu", "noisegen.w_var", "heads.clean_w", "heads.clean_b",
                "heads.noise_w", "heads.noise_b", "step"]
    missing = [k for k in required if k not in tensors]
    if missing:
        raise FormatError(f"missing tensors {missing}", pos)

    encoder = EncoderParams(
        proj=tensors["encoder.proj"],
        lora_b=tensors["encoder.lora_b"],
        lora_a=tensors["encoder.lora_a"],
        rank=config.r_lora,
        alpha=config.lora_alpha,
        dropout_rate=config.dropout_rate,
    )
    anchors = TextAnchors(tensors["anchors.t_real"], tensors["anchors.t_fake"],
                          "loaded-from-file")
    gen = NoiseGenParams(tensors["noisegen.w_query"], tensors["noisegen.w_key"],
                         tensors["noisegen.w_value"], tensors["noisegen.w_mu"],
                         tensors["noisegen.w_var"])
    heads = Heads(tensors["heads.clean_w"], tensors["heads.clean_b"],
                  tensors["heads.noise_w"], tensors["heads.noise_b"])
    state = TrainState(encoder, anchors, gen, heads, {}, {}, int(tensors["step"]),
                       RngStreams(config.seed))
    state.adam_m = {k: tensors.get(f"adam.m.{k}", np.zeros_like(v))
                    for k, v in state.trainable().items()}
    state.adam_v = {k: tensors.get(f"adam.v.{k}", np.zeros_like(v))
                    for k, v in state.trainable().items()}
    curve = [CurvePoint(int(row[0]), row[1], row[2], row[3], row[4])
             for row in tensors.get("curve", np.zeros((0, 5)))]
    return state, config, curve
