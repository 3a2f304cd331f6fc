"""Deep-image-prior reconstruction: fit network weights to one measurement.

The latent input is drawn once from U[0, 0.7) with the run seed and stays
frozen; only the weights move.  The loss is ||A phi(theta, z) - y||_p^p
(no 1/p factor) with p = 1 by default, optimized by Adam.  Checkpoints
record the reconstruction after the scheduled iteration counts; the final
rectifier keeps every checkpoint nonnegative.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..optim import Adam
from ..preprocess import ProcessedSystem
from ..schedule import Checkpoint, CheckpointSchedule, SolverTrace, default_schedule
from ..volume import Volume
from .network import Autoencoder, AutoencoderSpec

INPUT_LOW, INPUT_HIGH = 0.0, 0.7


@dataclass(frozen=True)
class DipConfig:
    """Optimization knobs for a single fit."""

    lr: float = 1e-3
    iterations: int = 20000
    momenta: tuple[float, float] = (0.9, 0.999)
    fidelity_p: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.iterations < 1:
            raise ValueError(f"need at least one iteration, got {self.iterations}")
        if self.fidelity_p not in (1, 2):
            raise ValueError(f"fidelity_p must be 1 or 2, got {self.fidelity_p}")


def _loss_and_residual_grad(r: np.ndarray, p: int) -> tuple[float, np.ndarray]:
    if p == 1:
        return float(np.abs(r).sum()), np.sign(r)
    return float(r @ r), 2.0 * r


def grad_theta(
    theta: np.ndarray,
    z: np.ndarray,
    sys: ProcessedSystem,
    fidelity_p: int,
    net: Autoencoder,
) -> tuple[float, np.ndarray]:
    """Loss ||A phi(theta, z) - y||_p^p and its gradient in theta.

    The chain is: network forward, flatten x-fastest, apply A, p-norm loss;
    the adjoint walks back through A^T and the network backward pass.
    Subgradients use sign(0) = 0.
    """
    out, caches = net.forward(theta, z, want_cache=True)
    r = sys.A @ out.ravel(order="F") - sys.y
    loss, gr = _loss_and_residual_grad(r, fidelity_p)
    g_flat = sys.A.T @ gr
    g_out = g_flat.reshape(out.shape, order="F")
    return loss, net.backward(caches, g_out)


def dip_reconstruct(
    sys: ProcessedSystem,
    cfg: DipConfig = DipConfig(),
    spec: AutoencoderSpec = AutoencoderSpec(),
    schedule: CheckpointSchedule | None = None,
) -> SolverTrace:
    """Fit the autoencoder to one processed system and checkpoint along the way."""
    grid = sys.grid
    rng = np.random.default_rng(cfg.seed)
    z = rng.uniform(INPUT_LOW, INPUT_HIGH, size=(1,) + grid.shape)
    net = Autoencoder(spec, grid.shape)
    theta = net.init_params(rng)
    opt = Adam(cfg.lr, cfg.momenta)
    if schedule is None:
        schedule = default_schedule(cfg.iterations)
    schedule = schedule.capped(cfg.iterations)
    scheduled = set(schedule.indices)

    trace = SolverTrace(
        config={
            "method": "dip_reconstruct",
            "lr": cfg.lr,
            "iterations": cfg.iterations,
            "fidelity_p": cfg.fidelity_p,
            "seed": cfg.seed,
            "encoder_channels": list(spec.encoder_channels),
            "stage_dims": [list(d) for d in net.stage_dims],
        },
        grid=grid,
    )
    t0 = time.perf_counter()
    for t in range(1, cfg.iterations + 1):
        loss, g = grad_theta(theta, z, sys, cfg.fidelity_p, net)
        theta = opt.step(theta, g)
        if t in scheduled:
            out, _ = net.forward(theta, z)
            r = sys.A @ out.ravel(order="F") - sys.y
            fid, _ = _loss_and_residual_grad(r, cfg.fidelity_p)
            trace.checkpoints.append(
                Checkpoint(
                    iteration=t,
                    volume=Volume(out, grid.voxel_size),
                    fidelity=fid,
                    objective=fid,
                    wall_time=time.perf_counter() - t0,
                )
            )
    trace.warnings = {"divergence": False}
    return trace
