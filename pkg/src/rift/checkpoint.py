"""Checkpoint container: a zip archive holding a JSON manifest (format
version, architecture config, seed, iteration) plus one .npy entry per named
parameter array.

Entries are written in sorted order with a fixed timestamp so that two runs
producing identical parameters produce byte-identical files. Loading rejects
archives whose architecture config does not match the requested one.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np
import torch

from .errors import ValidationError

FORMAT_VERSION = 1
_FIXED_DATE = (1980, 1, 1, 0, 0, 0)


def _tensor_tree_to_arrays(prefix: str, obj, out: dict[str, np.ndarray]) -> object:
    """Replace tensors/arrays in a nested structure by string references and
    collect them in ``out``. Returns the JSON-safe skeleton."""
    if isinstance(obj, torch.Tensor):
        key = f"{prefix}.npy"
        out[key] = obj.detach().cpu().numpy()
        return {"__array__": key}
    if isinstance(obj, np.ndarray):
        key = f"{prefix}.npy"
        out[key] = obj
        return {"__array__": key}
    if isinstance(obj, dict):
        return {str(k): _tensor_tree_to_arrays(f"{prefix}/{k}", v, out) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_tensor_tree_to_arrays(f"{prefix}/{i}", v, out) for i, v in enumerate(obj)]
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    raise ValidationError(f"cannot serialize object of type {type(obj).__name__}")


def _arrays_to_tensor_tree(obj, arrays: dict[str, np.ndarray]):
    if isinstance(obj, dict):
        if set(obj) == {"__array__"}:
            return torch.from_numpy(arrays[obj["__array__"]].copy())
        return {k: _arrays_to_tensor_tree(v, arrays) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_arrays_to_tensor_tree(v, arrays) for v in obj]
    return obj


def save_checkpoint(
    path: str | Path,
    config: dict,
    seed: int,
    iteration: int,
    states: dict[str, dict],
) -> Path:
    """Write a checkpoint archive. ``states`` maps group names (generator,
    discriminator, optimizers, rng) to nested dicts of tensors/arrays/scalars."""
    path = Path(path)
    arrays: dict[str, np.ndarray] = {}
    skeleton = {
        name: _tensor_tree_to_arrays(f"arrays/{name}", tree, arrays)
        for name, tree in states.items()
    }
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": config,
        "seed": seed,
        "iteration": iteration,
        "states": skeleton,
    }
    manifest_bytes = json.dumps(manifest, indent=1, sort_keys=True).encode()

    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        info = zipfile.ZipInfo("manifest.json", date_time=_FIXED_DATE)
        zf.writestr(info, manifest_bytes)
        for key in sorted(arrays):
            buf = io.BytesIO()
            np.save(buf, arrays[key])
            info = zipfile.ZipInfo(key, date_time=_FIXED_DATE)
            zf.writestr(info, buf.getvalue())
    return path


def load_checkpoint(path: str | Path, expected_config: dict | None = None) -> dict:
    """Read a checkpoint archive back into {config, seed, iteration, states}.

    If ``expected_config`` is given, any mismatch in its keys is rejected.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"checkpoint {path} does not exist")
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format_version") != FORMAT_VERSION:
            raise ValidationError(
                f"checkpoint format version {manifest.get('format_version')} is not "
                f"supported (expected {FORMAT_VERSION})"
            )
        arrays = {
            name: np.load(io.BytesIO(zf.read(name)))
            for name in zf.namelist()
            if name.startswith("arrays/")
        }
    config = manifest["config"]
    if expected_config is not None:
        mismatched = {
            k: (expected_config[k], config.get(k))
            for k in expected_config
            if config.get(k) != expected_config[k]
        }
        if mismatched:
            raise ValidationError(f"checkpoint architecture config mismatch: {mismatched}")
    states = {
        name: _arrays_to_tensor_tree(tree, arrays)
        for name, tree in manifest["states"].items()
    }
    return {
        "config": config,
        "seed": manifest["seed"],
        "iteration": manifest["iteration"],
        "states": states,
    }
