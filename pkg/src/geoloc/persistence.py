"""Binary model archive (.glmodel).

Layout, all little-endian:

    bytes 0..7    magic b"GLMODEL1"
    bytes 8..15   u64 header length H
    bytes 16..16+H  JSON header
    rest          payload: every model state array as raw float64

The header records format_version, model kind, input width, build seed,
the architecture dict, a per-array manifest (block name + shape, in
payload order), and the payload's sha256.  Loading rebuilds the model
from the recorded architecture and seed, then overwrites its state
arrays with the payload, so a round trip reproduces predictions bit for
bit, batch-norm running statistics included.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .errors import ArchiveError
from .models import LocalizerModel, ModelConfig, UmlpModel, build_localizer, build_umlp

MAGIC = b"GLMODEL1"
FORMAT_VERSION = 1


def _block_manifest(model) -> list:
    manifest = []
    for name, net in model.blocks.items():
        for arr in net.state_arrays():
            manifest.append({"block": name, "shape": list(arr.shape)})
    return manifest


def save_model(model, path) -> None:
    """Serialize a localizer or unified model to a .glmodel archive."""
    if isinstance(model, LocalizerModel):
        kind = "localizer"
    elif isinstance(model, UmlpModel):
        kind = "umlp"
    else:
        raise ArchiveError(f"cannot archive objects of type {type(model).__name__}")
    payload = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes() for arr in model.state_arrays()
    )
    header = {
        "format_version": FORMAT_VERSION,
        "model_kind": kind,
        "input_dim": model.input_dim,
        "seed": model.seed,
        "architecture": model.config.to_dict(),
        "arrays": _block_manifest(model),
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header_bytes).to_bytes(8, "little"))
        fh.write(header_bytes)
        fh.write(payload)


def _read_archive(path) -> tuple[dict, bytes]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:8] != MAGIC:
        raise ArchiveError(f"{path}: not a .glmodel archive")
    header_len = int.from_bytes(blob[8:16], "little")
    if len(blob) < 16 + header_len:
        raise ArchiveError(f"{path}: truncated header")
    try:
        header = json.loads(blob[16 : 16 + header_len])
    except json.JSONDecodeError as exc:
        raise ArchiveError(f"{path}: corrupt header: {exc}") from None
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise ArchiveError(
            f"{path}: format version {version} not supported (expected {FORMAT_VERSION})"
        )
    payload = blob[16 + header_len :]
    expected = 8 * sum(
        int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        for entry in header["arrays"]
    )
    if len(payload) != expected:
        raise ArchiveError(
            f"{path}: payload holds {len(payload)} bytes, manifest expects {expected}"
        )
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise ArchiveError(f"{path}: payload checksum mismatch")
    return header, payload


def _payload_arrays(header: dict, payload: bytes):
    offset = 0
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        offset += 8 * count
        yield entry["block"], arr.reshape(shape)


def load_model(path):
    """Rebuild a model from an archive; returns it in inference mode."""
    header, payload = _read_archive(path)
    config = ModelConfig.from_dict(header["architecture"])
    kind = header["model_kind"]
    if kind == "localizer":
        model = build_localizer(header["input_dim"], config, seed=header["seed"])
    elif kind == "umlp":
        model = build_umlp(header["input_dim"], config, seed=header["seed"])
    else:
        raise ArchiveError(f"{path}: unknown model kind {kind!r}")
    targets = model.state_arrays()
    stored = list(_payload_arrays(header, payload))
    if len(targets) != len(stored):
        raise ArchiveError(
            f"{path}: manifest lists {len(stored)} arrays, model has {len(targets)}"
        )
    for target, (_, values) in zip(targets, stored):
        if target.shape != values.shape:
            raise ArchiveError(
                f"{path}: stored shape {values.shape} does not match model shape {target.shape}"
            )
        target[...] = values
    model.set_mode("infer")
    return model


def extract_base(path) -> list[np.ndarray]:
    """Read only the transferable base-block arrays from a saved localizer."""
    header, payload = _read_archive(path)
    if header["model_kind"] != "localizer":
        raise ArchiveError(
            f"{path}: a {header['model_kind']} archive has no base block to extract"
        )
    arrays = [values.copy() for block, values in _payload_arrays(header, payload) if block == "base"]
    if not arrays:
        raise ArchiveError(f"{path}: archive contains no base-block arrays")
    return arrays
