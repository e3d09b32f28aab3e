"""Versioned checkpoint files with config payloads and lineage hashes."""

import hashlib
import os
from typing import Optional

import torch

from .errors import CheckpointError

FORMAT_VERSION = 1


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def save_checkpoint(
    path: str,
    kind: str,
    config: dict,
    state_dict: dict,
    extra: Optional[dict] = None,
) -> str:
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "config": config,
        "state_dict": state_dict,
        "extra": extra or {},
    }
    dirname = os.path.dirname(os.path.abspath(path))
    os.makedirs(dirname, exist_ok=True)
    torch.save(payload, path)
    return file_sha256(path)


def load_checkpoint(path: str, kind: str) -> dict:
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint format")
    if payload.get("kind") != kind:
        raise CheckpointError(f"{path}: expected a {kind!r} checkpoint, found {payload.get('kind')!r}")
    return payload
