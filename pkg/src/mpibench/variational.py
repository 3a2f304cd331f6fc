"""Penalized least-squares reconstruction driven by AMSGrad.

Minimizes  (1/p) ||A c - y||_p^p + lambda R(c) + rho/2 ||c||_2^2  over
nonnegative c, with R one of: l2 (R = ||c||^2 / 2), l1 (R = ||c||_1), tv
(smoothed anisotropic total variation), or l1_plus_l2 (l1 in R, the l2
part carried by rho).  Subgradients use sign(0) = 0; nonnegativity is a
projection after every iteration.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .linalg import project_nonneg
from .optim import AmsGrad
from .preprocess import ProcessedSystem
from .schedule import Checkpoint, CheckpointSchedule, SolverTrace, default_schedule
from .volume import Volume

PENALTY_KINDS = ("l2", "l1", "l1_plus_l2", "tv")


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty kind plus weights: lam scales R, rho adds rho/2 ||c||^2."""

    kind: str
    lam: float = 0.0
    rho: float = 0.0
    tv_epsilon: float = 1e-2

    def __post_init__(self):
        if self.kind not in PENALTY_KINDS:
            raise ValueError(f"penalty kind must be one of {PENALTY_KINDS}, got {self.kind!r}")
        if self.lam < 0 or self.rho < 0:
            raise ValueError(f"penalty weights must be nonnegative, got {self}")
        if self.tv_epsilon <= 0:
            raise ValueError(f"tv_epsilon must be positive, got {self.tv_epsilon}")


def tv_penalty(values: np.ndarray, epsilon: float) -> tuple[float, np.ndarray]:
    """Smoothed anisotropic TV: sum of sqrt(d^2 + eps^2) - eps over forward
    differences along each axis, replicate boundary (edge differences are
    zero and drop out).  Returns the value and its analytic gradient.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 3:
        raise ValueError(f"expected a 3D array, got shape {v.shape}")
    value = 0.0
    grad = np.zeros_like(v)
    for axis in range(3):
        d = np.diff(v, axis=axis)
        root = np.sqrt(d * d + epsilon * epsilon)
        value += float(np.sum(root - epsilon))
        w = d / root
        head = [slice(None)] * 3
        tail = [slice(None)] * 3
        head[axis] = slice(0, -1)
        tail[axis] = slice(1, None)
        grad[tuple(tail)] += w
        grad[tuple(head)] -= w
    return value, grad


def penalty_value_grad(c3d: np.ndarray, pen: PenaltyConfig) -> tuple[float, np.ndarray]:
    """Value and (sub)gradient of the full penalty at a 3D iterate."""
    c3d = np.asarray(c3d, dtype=np.float64)
    if pen.kind == "l2":
        value = pen.lam * 0.5 * float(np.sum(c3d * c3d))
        grad = pen.lam * c3d
    elif pen.kind in ("l1", "l1_plus_l2"):
        value = pen.lam * float(np.sum(np.abs(c3d)))
        grad = pen.lam * np.sign(c3d)
    else:  # tv
        tv, gtv = tv_penalty(c3d, pen.tv_epsilon)
        value = pen.lam * tv
        grad = pen.lam * gtv
    if pen.rho > 0:
        value += 0.5 * pen.rho * float(np.sum(c3d * c3d))
        grad = grad + pen.rho * c3d
    return value, grad


def var_solve(
    sys: ProcessedSystem,
    fidelity_p: int,
    penalty: PenaltyConfig,
    iterations: int = 500,
    lr: float = 1e-2,
    momenta: tuple[float, float] = (0.9, 0.999),
    schedule: CheckpointSchedule | None = None,
    x0: Volume | None = None,
    seed: int = 0,
) -> SolverTrace:
    """AMSGrad descent on the penalized p-norm fidelity objective.

    fidelity_p is 1 or 2; the fidelity term carries a 1/p factor.  Aborts
    with the iteration index if the objective turns non-finite.
    """
    if fidelity_p not in (1, 2):
        raise ValueError(f"fidelity_p must be 1 or 2, got {fidelity_p}")
    if iterations < 1:
        raise ValueError(f"need at least one iteration, got {iterations}")
    A, y, grid = sys.A, sys.y, sys.grid
    if schedule is None:
        schedule = default_schedule(iterations)
    schedule = schedule.capped(iterations)
    scheduled = set(schedule.indices)

    c = np.zeros(A.shape[1]) if x0 is None else x0.flat.copy()
    opt = AmsGrad(lr, momenta)
    trace = SolverTrace(
        config={
            "method": "var_solve",
            "fidelity_p": fidelity_p,
            "penalty": {"kind": penalty.kind, "lambda": penalty.lam,
                        "rho": penalty.rho, "tv_epsilon": penalty.tv_epsilon},
            "iterations": iterations,
            "lr": lr,
            "seed": seed,
        },
        grid=grid,
    )

    def eval_objective(cv: np.ndarray) -> tuple[float, float]:
        r = A @ cv - y
        if fidelity_p == 2:
            fid = 0.5 * float(r @ r)
        else:
            fid = float(np.abs(r).sum())
        pv, _ = penalty_value_grad(cv.reshape(grid.shape, order="F"), penalty)
        return fid, fid + pv

    t0 = time.perf_counter()
    for t in range(1, iterations + 1):
        r = A @ c - y
        if fidelity_p == 2:
            g = A.T @ r
        else:
            g = A.T @ np.sign(r)
        pv, pg = penalty_value_grad(c.reshape(grid.shape, order="F"), penalty)
        g = g + pg.ravel(order="F")
        if not np.all(np.isfinite(g)):
            raise RuntimeError(f"var_solve: non-finite gradient at iteration {t}")
        c = project_nonneg(opt.step(c, g))
        if t in scheduled:
            fid, obj = eval_objective(c)
            if not np.isfinite(obj):
                raise RuntimeError(f"var_solve: non-finite objective at iteration {t}")
            trace.checkpoints.append(
                Checkpoint(
                    iteration=t,
                    volume=Volume.from_flat(c.copy(), grid.shape, grid.voxel_size),
                    fidelity=fid,
                    objective=obj,
                    wall_time=time.perf_counter() - t0,
                )
            )
    trace.warnings = {"divergence": False}
    return trace
