"""Shared fixtures: tiny grids and a small synthetic system builder."""

import numpy as np
import pytest

from mpibench.operators import SpectralModel, synth_measurement, synth_operator
from mpibench.preprocess import PreprocessConfig, build_system
from mpibench.volume import GridSpec, Volume


@pytest.fixture
def tiny_grid():
    return GridSpec(5, 4, 3, (10.0, 8.0, 6.0), (-5.0, -4.0, -3.0))


@pytest.fixture
def spike_volume(tiny_grid):
    """Three isolated unit spikes on the tiny grid."""
    vals = np.zeros(tiny_grid.shape)
    for s in ((1, 1, 1), (3, 2, 0), (0, 3, 2)):
        vals[s] = 100.0
    return Volume(vals, tiny_grid.voxel_size)


def build_small_system(grid, phantom, n_rows=20, rank=20, seed=11,
                       noise_frac=0.05, meas_seed=21, decay_beta=0.5):
    """Spectral dataset + measurement + preprocessing, sized for unit tests."""
    ds = synth_operator(SpectralModel(decay_beta=decay_beta, n_rows=n_rows), grid, seed=seed)
    clean = ds.system_rows @ phantom.flat
    sigma = noise_frac * float(np.sqrt(np.mean(clean**2)))
    ds = synth_measurement(ds, phantom, sigma, seed=meas_seed)
    return build_system(ds, PreprocessConfig(rank=rank, snr_threshold=0.0, whitening=True))


@pytest.fixture
def small_system(tiny_grid, spike_volume):
    return build_small_system(tiny_grid, spike_volume)
