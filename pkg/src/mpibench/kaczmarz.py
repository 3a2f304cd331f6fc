"""Row-action solvers: regularized Kaczmarz sweeps with optional shrinkage.

The l2-regularized sweep runs Kaczmarz on the augmented system
[A, sqrt(rho) I] [c; u] = y, which converges to the Tikhonov solution
(A^T A + rho I)^-1 A^T y from a zero start.  Per row i:

    beta = (y_i - <a_i, c> - sqrt(rho) u_i) / (||a_i||^2 + rho)
    c   += beta * a_i
    u_i += beta * sqrt(rho)

Rows are visited in order.  Nonnegativity is enforced by projection after
every full sweep; the l1 variants additionally soft-shrink before the
projection with a step-normalized threshold.
"""

from __future__ import annotations

import time

import numpy as np

from .linalg import project_nonneg, soft_shrink
from .preprocess import ProcessedSystem
from .schedule import Checkpoint, CheckpointSchedule, SolverTrace, default_schedule
from .volume import Volume

DIVERGENCE_FACTOR = 10.0


def _objective(A, y, c, rho, lam):
    r = A @ c - y
    fid = 0.5 * float(r @ r)
    obj = fid + 0.5 * rho * float(c @ c) + lam * float(np.abs(c).sum())
    return fid, obj


def _kaczmarz_core(
    sys: ProcessedSystem,
    rho: float,
    lam: float,
    sweeps: int,
    schedule: CheckpointSchedule | None,
    x0: Volume | None,
    nonneg: bool,
    method: str,
) -> SolverTrace:
    if rho < 0 or lam < 0:
        raise ValueError(f"rho and lambda must be nonnegative, got {rho}, {lam}")
    if sweeps < 1:
        raise ValueError(f"need at least one sweep, got {sweeps}")
    A, y, grid = sys.A, sys.y, sys.grid
    if schedule is None:
        schedule = default_schedule(sweeps)
    schedule = schedule.capped(sweeps)
    scheduled = set(schedule.indices)

    c = np.zeros(A.shape[1]) if x0 is None else x0.flat.copy()
    if c.shape != (A.shape[1],):
        raise ValueError(f"x0 has {c.shape[0]} voxels, system expects {A.shape[1]}")
    u = np.zeros(A.shape[0])
    row_sq = np.einsum("ij,ij->i", A, A)
    sqrt_rho = np.sqrt(rho)
    # Threshold per sweep for the shrinkage step, normalized by the mean
    # squared row norm so lambda stays comparable across operator scalings.
    lam_step = lam / (float(row_sq.mean()) + rho) if lam > 0 else 0.0

    zero_row_skips = 0
    diverged = False
    prev_norm = float(np.linalg.norm(c))
    trace = SolverTrace(
        config={
            "method": method,
            "rho": rho,
            "lambda": lam,
            "lambda_step": lam_step,
            "sweeps": sweeps,
            "nonneg": nonneg,
        },
        grid=grid,
    )
    t0 = time.perf_counter()
    for s in range(1, sweeps + 1):
        for i in range(A.shape[0]):
            denom = row_sq[i] + rho
            if denom == 0.0:
                zero_row_skips += 1
                continue
            a = A[i]
            beta = (y[i] - a @ c - sqrt_rho * u[i]) / denom
            c += beta * a
            u[i] += beta * sqrt_rho
        if lam > 0:
            c = soft_shrink(c, lam_step)
        if nonneg:
            c = project_nonneg(c)
        norm = float(np.linalg.norm(c))
        if prev_norm > 0 and norm > DIVERGENCE_FACTOR * prev_norm:
            diverged = True
        prev_norm = norm
        if s in scheduled:
            fid, obj = _objective(A, y, c, rho, lam)
            trace.checkpoints.append(
                Checkpoint(
                    iteration=s,
                    volume=Volume.from_flat(c.copy(), grid.shape, grid.voxel_size),
                    fidelity=fid,
                    objective=obj,
                    wall_time=time.perf_counter() - t0,
                )
            )
    trace.warnings = {"zero_row_skips": zero_row_skips, "divergence": diverged}
    return trace


def kaczmarz_l2(
    sys: ProcessedSystem,
    rho: float,
    sweeps: int = 500,
    schedule: CheckpointSchedule | None = None,
    x0: Volume | None = None,
    nonneg: bool = True,
) -> SolverTrace:
    """Kaczmarz sweeps for the l2-regularized least-squares problem."""
    return _kaczmarz_core(sys, rho, 0.0, sweeps, schedule, x0, nonneg, "kaczmarz_l2")


def kaczmarz_l1l2(
    sys: ProcessedSystem,
    rho: float,
    lam: float,
    sweeps: int = 500,
    schedule: CheckpointSchedule | None = None,
    x0: Volume | None = None,
    nonneg: bool = True,
) -> SolverTrace:
    """Kaczmarz sweeps with added soft-shrinkage for an l1 + l2 penalty.

    With lam = 0 this reproduces kaczmarz_l2 checkpoint for checkpoint.
    """
    return _kaczmarz_core(sys, rho, lam, sweeps, schedule, x0, nonneg, "kaczmarz_l1l2")


def kaczmarz_l1(
    sys: ProcessedSystem,
    lam: float,
    sweeps: int = 500,
    schedule: CheckpointSchedule | None = None,
    x0: Volume | None = None,
    nonneg: bool = True,
) -> SolverTrace:
    """Pure l1 variant: no l2 term in the row update (rho = 0)."""
    return _kaczmarz_core(sys, 0.0, lam, sweeps, schedule, x0, nonneg, "kaczmarz_l1")


def select_rows_by_norm(sys: ProcessedSystem, rows_kept: int) -> ProcessedSystem:
    """Keep the rows_kept largest-norm rows of (A, y), in original order.

    rows_kept must be one of {32, 64, 128, 256, 512, 1024} and at most the
    current row count.  Ties are broken toward the lower row index.
    """
    allowed = (32, 64, 128, 256, 512, 1024)
    if rows_kept not in allowed:
        raise ValueError(f"rows_kept must be one of {allowed}, got {rows_kept}")
    if rows_kept > sys.n_rows:
        raise ValueError(f"cannot keep {rows_kept} of {sys.n_rows} rows")
    norms = np.linalg.norm(sys.A, axis=1)
    order = np.argsort(-norms, kind="stable")[:rows_kept]
    idx = np.sort(order)
    meta = dict(sys.meta)
    meta["rows_kept_by_norm"] = int(rows_kept)
    return ProcessedSystem(
        A=sys.A[idx],
        y=sys.y[idx],
        grid=sys.grid,
        retained_labels=sys.retained_labels,
        whitening_weights=sys.whitening_weights,
        svd=sys.svd,
        config=sys.config,
        rank_clamped=sys.rank_clamped,
        meta=meta,
    )
