"""Synthetic operators, measurements and noise calibration."""

import math

import numpy as np
import pytest

from mpibench.operators import (
    IM,
    RE,
    LangevinModel,
    SpectralModel,
    _langevin_ratio,
    sigma_for_snr_db,
    synth_measurement,
    synth_operator,
)
from mpibench.volume import GridSpec, Volume


def test_spectral_model_validation():
    with pytest.raises(ValueError):
        SpectralModel(decay_beta=0.0, n_rows=10)
    with pytest.raises(ValueError):
        SpectralModel(decay_beta=1.0, n_rows=9)  # odd
    with pytest.raises(ValueError):
        SpectralModel(decay_beta=1.0, n_rows=10, scale=0.0)


def test_spectral_singular_values(tiny_grid):
    ds = synth_operator(SpectralModel(decay_beta=1.0, n_rows=20), tiny_grid, seed=7)
    sv = np.sort(np.linalg.svd(ds.system_rows, compute_uv=False))[::-1]
    expected = np.arange(1, 21, dtype=np.float64) ** -1.0
    assert np.max(np.abs(sv - expected)) <= 1e-12


def test_spectral_labels_pair_re_im(tiny_grid):
    ds = synth_operator(SpectralModel(decay_beta=1.0, n_rows=12), tiny_grid, seed=0, coils=2)
    labels = ds.row_labels
    assert labels.shape == (12, 3)
    assert set(labels[:, 0]) == {0, 1}
    assert set(labels[:, 2]) == {RE, IM}
    # every (coil, freq) appears exactly once per part
    for part in (RE, IM):
        pairs = {tuple(row[:2]) for row in labels[labels[:, 2] == part]}
        assert len(pairs) == 6


def test_spectral_deterministic(tiny_grid):
    a = synth_operator(SpectralModel(decay_beta=1.5, n_rows=10), tiny_grid, seed=3)
    b = synth_operator(SpectralModel(decay_beta=1.5, n_rows=10), tiny_grid, seed=3)
    assert np.array_equal(a.system_rows, b.system_rows)
    assert np.array_equal(a.background, b.background)


def test_background_pattern_unit_rms(tiny_grid):
    ds = synth_operator(SpectralModel(decay_beta=1.0, n_rows=30), tiny_grid, seed=5)
    assert np.sqrt(np.mean(ds.background**2)) == pytest.approx(1.0, rel=1e-12)


def test_langevin_ratio_series_switch():
    lo, hi = _langevin_ratio(np.array([1e-3 - 1e-9, 1e-3 + 1e-9]))
    assert abs(lo - hi) <= 1e-8
    assert _langevin_ratio(np.array([0.0]))[0] == 1.0 / 3.0
    # closed form away from zero
    x = 10.0
    expected = (1.0 / math.tanh(x) - 1.0 / x) / x
    assert _langevin_ratio(np.array([x]))[0] == pytest.approx(expected, rel=1e-12)


def test_langevin_model_validation():
    with pytest.raises(ValueError):
        LangevinModel(ratios=(2, 4, 5))  # not coprime
    with pytest.raises(ValueError):
        LangevinModel(kappa=-0.1)
    with pytest.raises(ValueError):
        LangevinModel(freq_min=10, freq_max=5)
    with pytest.raises(ValueError):
        LangevinModel(samples_per_period=64, freq_max=40)  # above Nyquist


def test_langevin_rows_shape_and_determinism(tiny_grid):
    model = LangevinModel(samples_per_period=128, freq_min=1, freq_max=20)
    a = synth_operator(model, tiny_grid, coils=2, seed=1)
    assert a.system_rows.shape == (2 * 20 * 2, tiny_grid.n_voxels)
    assert a.row_labels.shape == (80, 3)
    b = synth_operator(model, tiny_grid, coils=2, seed=1)
    assert np.array_equal(a.system_rows, b.system_rows)
    assert np.all(np.isfinite(a.system_rows))


def test_langevin_linear_regime_scales_with_kappa_zero(tiny_grid):
    # kappa = 0 is the linear limit m = H/3; rows must be finite and nonzero
    model = LangevinModel(kappa=0.0, samples_per_period=128, freq_max=15)
    ds = synth_operator(model, tiny_grid, seed=0)
    assert np.all(np.isfinite(ds.system_rows))
    assert np.linalg.norm(ds.system_rows) > 0


def test_synth_measurement_deterministic(tiny_grid, spike_volume):
    ds = synth_operator(SpectralModel(decay_beta=1.0, n_rows=20), tiny_grid, seed=2)
    a = synth_measurement(ds, spike_volume, 0.1, background_scale=0.5, seed=9)
    b = synth_measurement(ds, spike_volume, 0.1, background_scale=0.5, seed=9)
    assert np.array_equal(a.measurement, b.measurement)
    assert np.array_equal(a.background_samples, b.background_samples)
    c = synth_measurement(ds, spike_volume, 0.1, background_scale=0.5, seed=10)
    assert not np.array_equal(a.measurement, c.measurement)


def test_synth_measurement_fields(tiny_grid, spike_volume):
    ds = synth_operator(SpectralModel(decay_beta=1.0, n_rows=20), tiny_grid, seed=2)
    out = synth_measurement(ds, spike_volume, 0.1, background_scale=0.25, seed=4,
                            n_background=5)
    assert out.measurement.shape == (20,)
    assert out.background_samples.shape == (5, 20)
    assert out.snr_per_row.shape == (20,)
    assert np.all(out.snr_per_row >= 0)
    assert out.meta["background_scale"] == 0.25
    assert out.meta["measurement_seed"] == 4
    assert out.meta["noise_sigma_rms"] == pytest.approx(0.1)
    # the original dataset is untouched
    assert ds.measurement is None


def test_synth_measurement_zero_sigma_snr(tiny_grid, spike_volume):
    ds = synth_operator(SpectralModel(decay_beta=1.0, n_rows=20), tiny_grid, seed=2)
    out = synth_measurement(ds, spike_volume, 0.0, seed=4)
    clean = ds.system_rows @ spike_volume.flat
    assert np.array_equal(out.measurement, clean)
    assert np.all(np.isinf(out.snr_per_row))


def test_synth_measurement_validation(tiny_grid, spike_volume):
    ds = synth_operator(SpectralModel(decay_beta=1.0, n_rows=20), tiny_grid, seed=2)
    wrong = Volume(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        synth_measurement(ds, wrong, 0.1)
    with pytest.raises(ValueError):
        synth_measurement(ds, spike_volume, -0.1)
    with pytest.raises(ValueError):
        synth_measurement(ds, spike_volume, 0.1, n_background=1)


def test_sigma_for_snr_db_hits_target(tiny_grid, spike_volume):
    ds = synth_operator(SpectralModel(decay_beta=1.0, n_rows=40), tiny_grid, seed=6)
    clean = ds.system_rows @ spike_volume.flat
    for target in (10.0, 20.0):
        sigma = sigma_for_snr_db(ds, spike_volume, target)
        realized = []
        for seed in range(3):
            out = synth_measurement(ds, spike_volume, sigma, seed=seed)
            noise = out.measurement - clean
            realized.append(10 * np.log10(np.sum(clean**2) / np.sum(noise**2)))
        assert abs(np.mean(realized) - target) <= 1.5


def test_synth_operator_unknown_model(tiny_grid):
    with pytest.raises(TypeError):
        synth_operator(object(), tiny_grid)
