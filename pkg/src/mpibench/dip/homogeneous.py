"""Norm-constrained reconstruction through a homogeneous reparametrization.

The iterate is c = g_tau(theta) * theta with g_tau(theta) =
tau^(1/p) / ||theta||_p, so every iterate satisfies ||c||_p^p = tau
exactly while theta moves freely under Adam on the squared-l2 data
fidelity.  If theta collapses to zero the parametrization is undefined;
the solver redraws theta and records the event.
"""

from __future__ import annotations

import time

import numpy as np

from ..optim import Adam
from ..preprocess import ProcessedSystem
from ..schedule import Checkpoint, CheckpointSchedule, SolverTrace, default_schedule
from ..volume import Volume


def gtau_scale(theta: np.ndarray, p: int, tau: float) -> float:
    """The scaling factor tau^(1/p) / ||theta||_p."""
    norm = float(np.sum(np.abs(theta) ** p) ** (1.0 / p))
    if norm == 0.0:
        raise ZeroDivisionError("g_tau is undefined for theta = 0")
    return tau ** (1.0 / p) / norm


def homogeneous_dip(
    sys: ProcessedSystem,
    p: int,
    tau: float,
    iterations: int = 500,
    lr: float = 1e-2,
    seed: int = 0,
    schedule: CheckpointSchedule | None = None,
) -> SolverTrace:
    """Minimize ||A c - y||_2^2 subject to ||c||_p^p = tau by construction."""
    if p not in (1, 2):
        raise ValueError(f"p must be 1 or 2, got {p}")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if iterations < 1:
        raise ValueError(f"need at least one iteration, got {iterations}")
    A, y, grid = sys.A, sys.y, sys.grid
    if schedule is None:
        schedule = default_schedule(iterations)
    schedule = schedule.capped(iterations)
    scheduled = set(schedule.indices)

    rng = np.random.default_rng(seed)
    theta = rng.standard_normal(A.shape[1])
    opt = Adam(lr)
    reinit_events = 0
    trace = SolverTrace(
        config={"method": "homogeneous_dip", "p": p, "tau": tau,
                "iterations": iterations, "lr": lr, "seed": seed},
        grid=grid,
    )
    t0 = time.perf_counter()
    for t in range(1, iterations + 1):
        norm_p = float(np.sum(np.abs(theta) ** p) ** (1.0 / p))
        if norm_p == 0.0:
            theta = rng.standard_normal(A.shape[1])
            reinit_events += 1
            norm_p = float(np.sum(np.abs(theta) ** p) ** (1.0 / p))
        scale = tau ** (1.0 / p) / norm_p
        c = scale * theta
        r = A @ c - y
        g_c = 2.0 * (A.T @ r)
        # Chain rule through c = scale(theta) * theta: the radial component
        # of g_c along the p-norm gradient direction is removed.
        dnorm = np.sign(theta) * np.abs(theta) ** (p - 1)
        g_theta = scale * (g_c - (float(g_c @ theta) / norm_p**p) * dnorm)
        theta = opt.step(theta, g_theta)
        if t in scheduled:
            norm_p = float(np.sum(np.abs(theta) ** p) ** (1.0 / p))
            if norm_p == 0.0:
                theta = rng.standard_normal(A.shape[1])
                reinit_events += 1
                norm_p = float(np.sum(np.abs(theta) ** p) ** (1.0 / p))
            c = (tau ** (1.0 / p) / norm_p) * theta
            r = A @ c - y
            fid = float(r @ r)
            trace.checkpoints.append(
                Checkpoint(
                    iteration=t,
                    volume=Volume.from_flat(c, grid.shape, grid.voxel_size),
                    fidelity=fid,
                    objective=fid,
                    wall_time=time.perf_counter() - t0,
                )
            )
    trace.warnings = {"reinit_events": reinit_events}
    return trace
