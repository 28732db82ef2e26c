"""Model persistence.

A checkpoint is a pair of files: a JSON envelope (``*.json``) with metadata,
the vocabulary, the attribute schema and a tensor table, and a blob
(``*.bin``) of little-endian float64 values that the table references by
offset. Writing is deterministic, so save -> load -> save reproduces the
same bytes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .amas import AmasModel
from .data import AttributeSchema, Vocabulary
from .errors import SchemaError
from .mlas import MlasModel
from .nas import NasModel
from .olas import OlasModel

FORMAT = "attrseq-checkpoint"
VERSION = 1
FRAMEWORKS = {"nas": NasModel, "mlas": MlasModel, "olas": OlasModel, "amas": AmasModel}


@dataclass(frozen=True)
class Checkpoint:
    framework: str
    hyperparameters: dict
    params: dict = field(repr=False)
    vocab: Vocabulary
    schema: AttributeSchema | None = None
    extra: dict = field(default_factory=dict)


def framework_of(model) -> str:
    for tag, cls in FRAMEWORKS.items():
        if isinstance(model, cls):
            return tag
    raise SchemaError(f"cannot checkpoint object of type {type(model).__name__}")


def blob_path(path: Path) -> Path:
    return path.with_suffix(".bin")


def encode_checkpoint(ckpt: Checkpoint, blob_name: str) -> tuple[bytes, bytes]:
    """Return ``(envelope_bytes, blob_bytes)``."""
    table, chunks, offset = [], [], 0
    for name in sorted(ckpt.params):
        arr = np.ascontiguousarray(ckpt.params[name], dtype="<f8")
        table.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        chunks.append(arr.tobytes())
        offset += arr.size * 8
    blob = b"".join(chunks)
    envelope = {
        "format": FORMAT,
        "version": VERSION,
        "framework": ckpt.framework,
        "hyperparameters": ckpt.hyperparameters,
        "vocabulary": list(ckpt.vocab.items),
        "attributes": ckpt.schema.to_json() if ckpt.schema is not None else None,
        "extra": ckpt.extra,
        "blob": blob_name,
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
        "tensors": table,
    }
    return (json.dumps(envelope, indent=1, sort_keys=True) + "\n").encode("utf-8"), blob


def save_checkpoint(path, model, vocab: Vocabulary, schema: AttributeSchema | None = None,
                    extra: dict | None = None) -> Path:
    path = Path(path)
    ckpt = Checkpoint(framework_of(model), model.hyperparameters(), model.params, vocab, schema, extra or {})
    envelope, blob = encode_checkpoint(ckpt, blob_path(path).name)
    blob_path(path).write_bytes(blob)
    path.write_bytes(envelope)
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        env = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not a checkpoint envelope: {exc.msg}") from None
    if not isinstance(env, dict) or env.get("format") != FORMAT:
        raise SchemaError(f"{path} is not an {FORMAT} file")
    if env.get("version") != VERSION:
        raise SchemaError(f"checkpoint version {env.get('version')} is not supported (expected {VERSION})")
    if env.get("framework") not in FRAMEWORKS:
        raise SchemaError(f"unknown framework tag {env.get('framework')!r}")
    blob = (path.parent / env["blob"]).read_bytes()
    if hashlib.sha256(blob).hexdigest() != env["blob_sha256"]:
        raise SchemaError("checkpoint blob does not match its checksum")
    params = {}
    for entry in env["tensors"]:
        start, count = entry["offset"], entry["count"]
        if start + 8 * count > len(blob):
            raise SchemaError(f"tensor {entry['name']} extends past the end of the blob")
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=start).astype(np.float64)
        params[entry["name"]] = arr.reshape(entry["shape"])
    schema = AttributeSchema.from_json(env["attributes"]) if env.get("attributes") is not None else None
    return Checkpoint(env["framework"], env["hyperparameters"], params, Vocabulary(tuple(env["vocabulary"])),
                      schema, env.get("extra", {}))


def model_from_checkpoint(ckpt: Checkpoint):
    h, p = ckpt.hyperparameters, ckpt.params
    try:
        if ckpt.framework == "nas":
            return NasModel(h["u"], h["r"], h["d"], tuple(h["enc_widths"]), p, h["candidate"], h["conditioned"])
        if ckpt.framework == "mlas":
            return MlasModel(h["u"], h["r"], tuple(h["att_widths"]), h["seq_width"], h["fusion"], p, h["act"],
                             h["margin"])
        if ckpt.framework == "olas":
            return OlasModel(h["u"], h["r"], tuple(h["fc_widths"]), h["lstm_width"], h["n"], p, h["margin"],
                             h["distance"])
        return AmasModel(h["u"], h["r"], h["att_width"], h["lstm_width"], tuple(h["classes"]), h["variant"], p,
                         h["head"], h["scalar_scores"], h["l2"])
    except KeyError as exc:
        raise SchemaError(f"checkpoint hyperparameters lack {exc.args[0]!r}") from None


def inspect(path) -> dict:
    """Summary of a checkpoint without building the model."""
    ckpt = load_checkpoint(path)
    return {
        "framework": ckpt.framework,
        "version": VERSION,
        "hyperparameters": ckpt.hyperparameters,
        "r": ckpt.vocab.r,
        "u": ckpt.schema.u if ckpt.schema is not None else None,
        "n_parameters": int(sum(v.size for v in ckpt.params.values())),
        "tensors": {k: list(v.shape) for k, v in sorted(ckpt.params.items())},
    }
