"""Autoencoder assembly: layout, init, shapes and the full backward pass."""

import numpy as np
import pytest

from mpibench.dip.network import Autoencoder, AutoencoderSpec, build_network


def test_spec_validation():
    with pytest.raises(ValueError):
        AutoencoderSpec(encoder_channels=())
    with pytest.raises(ValueError):
        AutoencoderSpec(encoder_channels=(4, 0))
    with pytest.raises(ValueError):
        AutoencoderSpec(kernel=4)


def test_stage_dims_halve_with_ceil():
    net = Autoencoder(AutoencoderSpec(encoder_channels=(4, 6, 8)), (19, 19, 19))
    assert net.stage_dims == ((19, 19, 19), (10, 10, 10), (5, 5, 5), (3, 3, 3))


def test_layout_partitions_parameter_vector():
    net = Autoencoder(AutoencoderSpec(encoder_channels=(4, 6)), (7, 7, 7))
    sizes = {name: int(np.prod(shape)) for name, _, shape in net.layout.entries}
    assert sum(sizes.values()) == net.n_params
    # encoder: two conv+norm stages; decoder mirrors with norm on all but last
    k3 = 27
    assert sizes["enc0.conv.w"] == 4 * 1 * k3
    assert sizes["enc1.conv.w"] == 6 * 4 * k3
    assert sizes["dec0.conv.w"] == 4 * 6 * k3
    assert sizes["dec1.conv.w"] == 1 * 4 * k3
    assert "dec0.norm.gamma" in sizes
    assert "dec1.norm.gamma" not in sizes
    # offsets tile the vector without gaps
    offs = sorted((off, off + int(np.prod(shape))) for _, off, shape in net.layout.entries)
    assert offs[0][0] == 0
    assert all(a[1] == b[0] for a, b in zip(offs, offs[1:]))
    assert offs[-1][1] == net.n_params


def test_layout_slice_errors():
    net = Autoencoder(AutoencoderSpec(encoder_channels=(4,)), (5, 5, 5))
    theta = net.init_params(0)
    with pytest.raises(KeyError):
        net.layout.slice_of(theta, "enc7.conv.w")


def test_init_params_deterministic_and_structured():
    net = Autoencoder(AutoencoderSpec(encoder_channels=(4, 6)), (7, 7, 7))
    a = net.init_params(3)
    b = net.init_params(3)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, net.init_params(4))
    assert np.array_equal(net.layout.slice_of(a, "enc0.norm.gamma"), np.ones(4))
    assert np.array_equal(net.layout.slice_of(a, "enc0.norm.beta"), np.zeros(4))
    w = net.layout.slice_of(a, "enc1.conv.w")
    assert np.max(np.abs(w)) <= 1.0 / np.sqrt(4 * 27)


def test_forward_shape_and_nonnegativity():
    net, theta = build_network(AutoencoderSpec(encoder_channels=(4, 6), seed=1), (7, 6, 5))
    rng = np.random.default_rng(0)
    z = rng.uniform(0.0, 0.7, (1, 7, 6, 5))
    out, caches = net.forward(theta, z, want_cache=True)
    assert out.shape == (7, 6, 5)
    assert out.min() >= 0.0
    assert caches is not None
    out2, none_cache = net.forward(theta, z)
    assert none_cache is None
    assert np.array_equal(out, out2)


def test_forward_validation():
    net, theta = build_network(AutoencoderSpec(encoder_channels=(4,)), (5, 5, 5))
    with pytest.raises(ValueError):
        net.forward(theta, np.zeros((1, 4, 5, 5)))
    with pytest.raises(ValueError):
        net.forward(theta[:-1], np.zeros((1, 5, 5, 5)))


def test_backward_matches_finite_differences():
    # wide perturbation from init escapes flat/degenerate regions; the floor
    # in the denominator absorbs cancellation noise on true-zero gradients
    spec = AutoencoderSpec(encoder_channels=(4, 6), seed=2)
    net = Autoencoder(spec, (5, 5, 5))
    rng = np.random.default_rng(7)
    z = rng.uniform(0.0, 0.7, (1, 5, 5, 5))
    theta = net.init_params(rng) + 0.5 * rng.standard_normal(net.n_params)
    g_out = rng.standard_normal((5, 5, 5))

    def loss(tv):
        out, _ = net.forward(tv, z)
        return float(np.sum(out * g_out))

    _, caches = net.forward(theta, z, want_cache=True)
    grad = net.backward(caches, g_out)
    assert np.linalg.norm(grad) > 1e-3
    h = 1e-6
    worst = 0.0
    for name, off, shape in net.layout.entries:
        size = int(np.prod(shape))
        for i in rng.choice(size, size=min(4, size), replace=False):
            j = off + int(i)
            orig = theta[j]
            theta[j] = orig + h
            up = loss(theta)
            theta[j] = orig - h
            dn = loss(theta)
            theta[j] = orig
            fd = (up - dn) / (2 * h)
            rel = abs(fd - grad[j]) / max(abs(fd), abs(grad[j]), 1e-3)
            worst = max(worst, rel)
    assert worst <= 1e-4
