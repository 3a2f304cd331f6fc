"""On-disk container round trips and corruption detection."""

import json

import numpy as np
import pytest

from mpibench.container import (
    ChecksumError,
    ContainerError,
    MissingArrayError,
    UnsupportedVersionError,
    load_arrays,
    load_dataset,
    load_manifest,
    manifest_checksum,
    save_arrays,
    save_dataset,
)
from mpibench.operators import SpectralModel, synth_measurement, synth_operator


def _dataset(tiny_grid, spike_volume):
    ds = synth_operator(SpectralModel(decay_beta=1.0, n_rows=20), tiny_grid, seed=2)
    return synth_measurement(ds, spike_volume, 0.05, background_scale=0.5, seed=4)


def test_array_roundtrip_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {"a": rng.standard_normal((4, 5)), "b": rng.standard_normal(7)}
    manifest_path = save_arrays(tmp_path / "c", "blob", arrays, {"note": 1})
    assert manifest_path.name == "manifest.json"
    loaded, manifest = load_arrays(tmp_path / "c")
    assert manifest["kind"] == "blob"
    assert manifest["metadata"] == {"note": 1}
    for name in arrays:
        assert np.array_equal(loaded[name], arrays[name])


def test_dataset_roundtrip_bitwise(tmp_path, tiny_grid, spike_volume):
    ds = _dataset(tiny_grid, spike_volume)
    save_dataset(ds, tmp_path / "ds")
    back = load_dataset(tmp_path / "ds")
    assert np.array_equal(back.system_rows, ds.system_rows)
    assert np.array_equal(back.row_labels, ds.row_labels)
    assert np.array_equal(back.measurement, ds.measurement)
    assert np.array_equal(back.background, ds.background)
    assert np.array_equal(back.background_samples, ds.background_samples)
    assert np.array_equal(back.snr_per_row, ds.snr_per_row)
    assert back.grid == ds.grid
    assert back.seed == ds.seed
    assert back.meta == ds.meta


def test_manifest_checksum_stable_across_directories(tmp_path, tiny_grid, spike_volume):
    ds = _dataset(tiny_grid, spike_volume)
    save_dataset(ds, tmp_path / "one")
    save_dataset(ds, tmp_path / "two")
    assert manifest_checksum(tmp_path / "one") == manifest_checksum(tmp_path / "two")


def test_tampered_payload_raises(tmp_path, tiny_grid, spike_volume):
    ds = _dataset(tiny_grid, spike_volume)
    save_dataset(ds, tmp_path / "ds")
    target = tmp_path / "ds" / "background.bin"
    data = bytearray(target.read_bytes())
    data[0] ^= 0xFF
    target.write_bytes(bytes(data))
    with pytest.raises(ChecksumError):
        load_dataset(tmp_path / "ds")


def test_unsupported_version_raises(tmp_path):
    save_arrays(tmp_path / "c", "blob", {"a": np.zeros(3)}, {})
    mpath = tmp_path / "c" / "manifest.json"
    manifest = json.loads(mpath.read_text())
    manifest["version"] = 99
    mpath.write_text(json.dumps(manifest))
    with pytest.raises(UnsupportedVersionError):
        load_manifest(tmp_path / "c")


def test_foreign_format_raises(tmp_path):
    save_arrays(tmp_path / "c", "blob", {"a": np.zeros(3)}, {})
    mpath = tmp_path / "c" / "manifest.json"
    manifest = json.loads(mpath.read_text())
    manifest["format"] = "other"
    mpath.write_text(json.dumps(manifest))
    with pytest.raises(ContainerError):
        load_manifest(tmp_path / "c")


def test_missing_expected_array_raises(tmp_path):
    save_arrays(tmp_path / "c", "blob", {"a": np.zeros(3)}, {})
    with pytest.raises(MissingArrayError):
        load_arrays(tmp_path / "c", expected=("a", "b"))


def test_missing_payload_file_raises(tmp_path):
    save_arrays(tmp_path / "c", "blob", {"a": np.zeros(3)}, {})
    (tmp_path / "c" / "a.bin").unlink()
    with pytest.raises(MissingArrayError):
        load_arrays(tmp_path / "c")


def test_missing_manifest_raises(tmp_path):
    (tmp_path / "c").mkdir()
    with pytest.raises(ContainerError):
        load_manifest(tmp_path / "c")


def test_wrong_kind_rejected_by_dataset_loader(tmp_path):
    save_arrays(tmp_path / "c", "blob", {
        "system_rows": np.zeros((2, 8)),
        "row_labels": np.zeros((2, 3)),
        "background": np.zeros(2),
        "background_samples": np.zeros((2, 2)),
    }, {"grid": None, "seed": 0, "meta": {}})
    with pytest.raises(ContainerError):
        load_dataset(tmp_path / "c")
