"""On-disk container: a JSON manifest plus one raw float64 file per array.

Layout of a container directory:

    manifest.json        format name, version, array table, metadata
    <array>.bin          little-endian float64, C order, no header

The manifest records shape and SHA-256 per array, so round trips are bit
exact and corruption is detected on load.  Version mismatches, checksum
failures and missing arrays raise distinct error types.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .operators import RawDataset
from .volume import GridSpec

FORMAT_NAME = "mpibench"
FORMAT_VERSION = 1


class ContainerError(Exception):
    """Malformed or foreign container."""


class UnsupportedVersionError(ContainerError):
    """Manifest declares a version this code does not read."""


class ChecksumError(ContainerError):
    """Stored array bytes do not match the manifest checksum."""


class MissingArrayError(ContainerError):
    """Manifest or directory lacks an expected array."""


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def save_arrays(path: Path | str, kind: str, arrays: dict[str, np.ndarray], metadata: dict) -> Path:
    """Write a container directory; returns the manifest path."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    table = {}
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=np.float64)
        data = np.ascontiguousarray(arr).astype("<f8").tobytes()
        fname = f"{name}.bin"
        (path / fname).write_bytes(data)
        table[name] = {
            "file": fname,
            "shape": list(arr.shape),
            "dtype": "<f8",
            "sha256": _sha256(data),
        }
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "kind": kind,
        "arrays": table,
        "metadata": metadata,
    }
    out = path / "manifest.json"
    out.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def load_manifest(path: Path | str) -> dict:
    path = Path(path)
    mpath = path / "manifest.json"
    if not mpath.is_file():
        raise ContainerError(f"no manifest.json under {path}")
    manifest = json.loads(mpath.read_text())
    if manifest.get("format") != FORMAT_NAME:
        raise ContainerError(
            f"container format {manifest.get('format')!r} is not {FORMAT_NAME!r}"
        )
    if manifest.get("version") != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"container version {manifest.get('version')!r} is unsupported "
            f"(expected {FORMAT_VERSION})"
        )
    return manifest


def load_arrays(path: Path | str, expected: tuple[str, ...] = ()) -> tuple[dict, dict]:
    """Read all arrays of a container; returns (arrays, manifest)."""
    path = Path(path)
    manifest = load_manifest(path)
    table = manifest.get("arrays", {})
    for name in expected:
        if name not in table:
            raise MissingArrayError(f"container {path} lacks required array {name!r}")
    arrays = {}
    for name, entry in table.items():
        fpath = path / entry["file"]
        if not fpath.is_file():
            raise MissingArrayError(f"array file {entry['file']} missing under {path}")
        data = fpath.read_bytes()
        if _sha256(data) != entry["sha256"]:
            raise ChecksumError(f"{entry['file']}: checksum mismatch")
        arr = np.frombuffer(data, dtype="<f8")
        shape = tuple(entry["shape"])
        if arr.size != int(np.prod(shape)):
            raise ContainerError(
                f"{entry['file']}: payload has {arr.size} values, shape {shape} expected"
            )
        arrays[name] = arr.reshape(shape).astype(np.float64)
    return arrays, manifest


def manifest_checksum(path: Path | str) -> str:
    """SHA-256 of the manifest file bytes."""
    return _sha256((Path(path) / "manifest.json").read_bytes())


def save_dataset(ds: RawDataset, path: Path | str) -> Path:
    arrays = {
        "system_rows": ds.system_rows,
        "row_labels": ds.row_labels.astype(np.float64),
        "background": ds.background,
        "background_samples": ds.background_samples,
    }
    if ds.measurement is not None:
        arrays["measurement"] = ds.measurement
    if ds.snr_per_row is not None:
        arrays["snr_per_row"] = ds.snr_per_row
    metadata = {"grid": ds.grid.to_dict(), "seed": ds.seed, "meta": ds.meta}
    return save_arrays(path, "raw_dataset", arrays, metadata)


def load_dataset(path: Path | str) -> RawDataset:
    arrays, manifest = load_arrays(
        path, expected=("system_rows", "row_labels", "background", "background_samples")
    )
    if manifest.get("kind") != "raw_dataset":
        raise ContainerError(f"container kind {manifest.get('kind')!r} is not raw_dataset")
    md = manifest["metadata"]
    return RawDataset(
        system_rows=arrays["system_rows"],
        row_labels=arrays["row_labels"].astype(np.int64),
        grid=GridSpec.from_dict(md["grid"]),
        seed=int(md["seed"]),
        background=arrays["background"],
        background_samples=arrays["background_samples"],
        measurement=arrays.get("measurement"),
        snr_per_row=arrays.get("snr_per_row"),
        meta=md.get("meta", {}),
    )
