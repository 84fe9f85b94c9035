"""Flat binary weight archive: one little-endian float32 blob per tensor.

A directory holds ``manifest.json``, a list of {name, dtype, shape}
records, plus one ``<name>.bin`` file per tensor. Tensors are loaded
back as float64 for numerically tight forward passes; the on-disk dtype
stays f32.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import DataIOError

MANIFEST_NAME = "manifest.json"


def save_weights(weights: dict[str, np.ndarray], directory) -> None:
    os.makedirs(directory, exist_ok=True)
    manifest = []
    for name in sorted(weights):
        arr = np.asarray(weights[name], dtype="<f4")
        blob = os.path.join(directory, name + ".bin")
        try:
            arr.tofile(blob)
        except OSError as exc:
            raise DataIOError(f"cannot write {blob}: {exc}") from exc
        manifest.append({"name": name, "dtype": "f32",
                         "shape": list(arr.shape)})
    with open(os.path.join(directory, MANIFEST_NAME), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def load_weights(directory) -> dict[str, np.ndarray]:
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise DataIOError(f"cannot read {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataIOError(f"{manifest_path} is not valid JSON: {exc}") from exc

    weights = {}
    for entry in manifest:
        name, shape = entry["name"], tuple(entry["shape"])
        if entry.get("dtype", "f32") != "f32":
            raise DataIOError(f"{name}: unsupported dtype {entry['dtype']}")
        blob = os.path.join(directory, name + ".bin")
        try:
            flat = np.fromfile(blob, dtype="<f4")
        except OSError as exc:
            raise DataIOError(f"cannot read {blob}: {exc}") from exc
        expected = int(np.prod(shape)) if shape else 1
        if flat.size != expected:
            raise DataIOError(
                f"{blob}: has {flat.size} values, manifest says {expected}")
        weights[name] = flat.reshape(shape).astype(np.float64)
    return weights
