"""Symmetric 3D convolutional autoencoder over a flat parameter vector.

The encoder halves each spatial dimension per stage (ceil division) with
stride-2 convolutions; the decoder mirrors the recorded stage sizes with
nearest-neighbor upsampling followed by stride-1 convolutions.  There are
no skip connections.  Interior activations are leaky rectifiers behind
per-channel instance normalization; the output layer is a plain rectifier,
so reconstructions are nonnegative by construction.

All parameters live in one flat float64 vector with a layout table, which
keeps the whole gradient checkable against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from . import layers as L


@dataclass(frozen=True)
class AutoencoderSpec:
    """Architecture knobs: stage channels, kernel size, slopes, init seed."""

    encoder_channels: tuple[int, ...] = (64, 128, 256)
    kernel: int = 3
    leaky_slope: float = 0.2
    norm_eps: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if not self.encoder_channels or min(self.encoder_channels) < 1:
            raise ValueError(f"need positive stage channels, got {self.encoder_channels}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd and positive, got {self.kernel}")
        object.__setattr__(self, "encoder_channels", tuple(int(c) for c in self.encoder_channels))


@dataclass(frozen=True)
class ParamLayout:
    """Name, offset and shape of every parameter block in the flat vector."""

    entries: tuple[tuple[str, int, tuple[int, ...]], ...]
    total: int

    def slice_of(self, theta: np.ndarray, name: str) -> np.ndarray:
        for n, off, shape in self.entries:
            if n == name:
                size = int(np.prod(shape))
                return theta[off : off + size].reshape(shape)
        raise KeyError(f"no parameter block named {name!r}")

    @property
    def names(self) -> list[str]:
        return [n for n, _, _ in self.entries]


class Autoencoder:
    """Network structure bound to a fixed input spatial shape."""

    def __init__(self, spec: AutoencoderSpec, input_shape: tuple[int, int, int]):
        if len(input_shape) != 3 or min(input_shape) < 1:
            raise ValueError(f"input shape must be three positive dims, got {input_shape}")
        self.spec = spec
        self.input_shape = tuple(int(n) for n in input_shape)
        chans = (1,) + spec.encoder_channels
        dims = [self.input_shape]
        for _ in spec.encoder_channels:
            nxt = tuple(ceil(n / 2) for n in dims[-1])
            if min(nxt) < 1:
                raise ValueError(f"spatial dimension collapsed to zero below {dims[-1]}")
            dims.append(nxt)
        self.stage_dims: tuple[tuple[int, int, int], ...] = tuple(dims)
        self.channels = chans

        entries: list[tuple[str, int, tuple[int, ...]]] = []
        offset = 0

        def add(name: str, shape: tuple[int, ...]) -> None:
            nonlocal offset
            entries.append((name, offset, shape))
            offset += int(np.prod(shape))

        k = spec.kernel
        n_stages = len(spec.encoder_channels)
        for i in range(n_stages):
            cin, cout = chans[i], chans[i + 1]
            add(f"enc{i}.conv.w", (cout, cin, k, k, k))
            add(f"enc{i}.conv.b", (cout,))
            add(f"enc{i}.norm.gamma", (cout,))
            add(f"enc{i}.norm.beta", (cout,))
        for j in range(n_stages):
            cin, cout = chans[n_stages - j], chans[n_stages - j - 1]
            cout = max(cout, 1)
            add(f"dec{j}.conv.w", (cout, cin, k, k, k))
            add(f"dec{j}.conv.b", (cout,))
            if j < n_stages - 1:
                add(f"dec{j}.norm.gamma", (cout,))
                add(f"dec{j}.norm.beta", (cout,))
        self.layout = ParamLayout(tuple(entries), offset)

    @property
    def n_params(self) -> int:
        return self.layout.total

    def init_params(self, rng: np.random.Generator | int | None = None) -> np.ndarray:
        """Fan-in-scaled uniform weights, unit norm scales, zero offsets."""
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(self.spec.seed if rng is None else rng)
        theta = np.empty(self.layout.total)
        bound = 1.0
        for name, off, shape in self.layout.entries:
            block = theta[off : off + int(np.prod(shape))]
            if name.endswith(".conv.w"):
                fan_in = int(np.prod(shape[1:]))
                bound = 1.0 / np.sqrt(fan_in)  # bias reuses the weight bound
                block[:] = rng.uniform(-bound, bound, block.size)
            elif name.endswith(".conv.b"):
                block[:] = rng.uniform(-bound, bound, block.size)
            elif name.endswith(".gamma"):
                block[:] = 1.0
            else:  # beta
                block[:] = 0.0
        return theta

    def forward(
        self, theta: np.ndarray, z: np.ndarray, want_cache: bool = False
    ) -> tuple[np.ndarray, list | None]:
        """Map latent z (1, nx, ny, nz) to a (nx, ny, nz) volume array."""
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (1,) + self.input_shape:
            raise ValueError(
                f"latent shape {z.shape} does not match (1, {self.input_shape})"
            )
        if theta.shape != (self.layout.total,):
            raise ValueError(
                f"parameter vector has {theta.shape}, layout expects ({self.layout.total},)"
            )
        spec = self.spec
        n_stages = len(spec.encoder_channels)
        p = self.layout.slice_of
        caches: list = []
        x = z
        for i in range(n_stages):
            pads = tuple(L.down_pads(n, spec.kernel) for n in self.stage_dims[i])
            x, cc = L.conv3d_forward(x, p(theta, f"enc{i}.conv.w"), p(theta, f"enc{i}.conv.b"), 2, pads)
            L.check_finite(f"enc{i}.conv", x)
            x, cn = L.instnorm_forward(x, p(theta, f"enc{i}.norm.gamma"),
                                       p(theta, f"enc{i}.norm.beta"), spec.norm_eps)
            L.check_finite(f"enc{i}.norm", x)
            x, ca = L.leaky_relu_forward(x, spec.leaky_slope)
            caches.append((f"enc{i}", cc, cn, ca))
        for j in range(n_stages):
            target = self.stage_dims[n_stages - j - 1]
            x, cu = L.upsample_nearest_forward(x, target)
            pads = tuple(L.same_pads(n, spec.kernel) for n in target)
            x, cc = L.conv3d_forward(x, p(theta, f"dec{j}.conv.w"), p(theta, f"dec{j}.conv.b"), 1, pads)
            L.check_finite(f"dec{j}.conv", x)
            if j < n_stages - 1:
                x, cn = L.instnorm_forward(x, p(theta, f"dec{j}.norm.gamma"),
                                           p(theta, f"dec{j}.norm.beta"), spec.norm_eps)
                L.check_finite(f"dec{j}.norm", x)
                x, ca = L.leaky_relu_forward(x, spec.leaky_slope)
            else:
                cn = None
                x, ca = L.relu_forward(x)
            caches.append((f"dec{j}", cu, cc, cn, ca))
        out = x[0]
        return (out, caches) if want_cache else (out, None)

    def backward(self, caches: list, g_out: np.ndarray) -> np.ndarray:
        """Gradient of sum(g_out * output) with respect to theta."""
        spec = self.spec
        n_stages = len(spec.encoder_channels)
        grad = np.zeros(self.layout.total)

        def store(name: str, value: np.ndarray) -> None:
            for n, off, shape in self.layout.entries:
                if n == name:
                    grad[off : off + value.size] = value.ravel()
                    return
            raise KeyError(name)

        g = np.asarray(g_out, dtype=np.float64)[None]
        for j in range(n_stages - 1, -1, -1):
            name, cu, cc, cn, ca = caches[n_stages + j]
            if j < n_stages - 1:
                g = L.leaky_relu_backward(g, ca)
                g, dgamma, dbeta = L.instnorm_backward(g, cn)
                store(f"dec{j}.norm.gamma", dgamma)
                store(f"dec{j}.norm.beta", dbeta)
            else:
                g = L.relu_backward(g, ca)
            g, gw, gb = L.conv3d_backward(g, cc)
            L.check_finite(f"dec{j}.conv.grad", g)
            store(f"dec{j}.conv.w", gw)
            store(f"dec{j}.conv.b", gb)
            g = L.upsample_nearest_backward(g, cu)
        for i in range(n_stages - 1, -1, -1):
            name, cc, cn, ca = caches[i]
            g = L.leaky_relu_backward(g, ca)
            g, dgamma, dbeta = L.instnorm_backward(g, cn)
            store(f"enc{i}.norm.gamma", dgamma)
            store(f"enc{i}.norm.beta", dbeta)
            g, gw, gb = L.conv3d_backward(g, cc)
            L.check_finite(f"enc{i}.conv.grad", g)
            store(f"enc{i}.conv.w", gw)
            store(f"enc{i}.conv.b", gb)
        return grad


def build_network(
    spec: AutoencoderSpec, input_shape: tuple[int, int, int]
) -> tuple[Autoencoder, np.ndarray]:
    """Construct the network and a seeded initial parameter vector."""
    net = Autoencoder(spec, input_shape)
    return net, net.init_params()
