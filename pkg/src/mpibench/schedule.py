"""Checkpoint schedules and the common solver trace record."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import container as cio
from .volume import GridSpec, Volume


@dataclass(frozen=True)
class CheckpointSchedule:
    """Strictly increasing iteration indices at which solvers snapshot."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise ValueError("schedule needs at least one index")
        if idx[0] < 1 or any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("schedule indices must be strictly increasing and >= 1")
        object.__setattr__(self, "indices", idx)

    def capped(self, cap: int) -> "CheckpointSchedule":
        kept = tuple(i for i in self.indices if i <= cap)
        if not kept:
            raise ValueError(f"no schedule indices at or below {cap}")
        return CheckpointSchedule(kept)

    @property
    def last(self) -> int:
        return self.indices[-1]

    def __contains__(self, i: int) -> bool:
        return i in set(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __len__(self):
        return len(self.indices)


def default_schedule(cap: int = 20000) -> CheckpointSchedule:
    """The benchmark's dense-early checkpoint grid, truncated at `cap`.

    Indices: 1..10 step 1, 12..30 step 2, 35..50 step 5, 60..150 step 10,
    175..500 step 25, 600..2000 step 100, 2500..5000 step 500 and
    6000..20000 step 1000.
    """
    idx = (
        list(range(1, 11))
        + list(range(12, 31, 2))
        + list(range(35, 51, 5))
        + list(range(60, 151, 10))
        + list(range(175, 501, 25))
        + list(range(600, 2001, 100))
        + list(range(2500, 5001, 500))
        + list(range(6000, 20001, 1000))
    )
    return CheckpointSchedule(tuple(idx)).capped(cap)


@dataclass
class Checkpoint:
    iteration: int
    volume: Volume
    fidelity: float
    objective: float
    wall_time: float


@dataclass
class SolverTrace:
    """Checkpointed reconstructions with fidelity/objective values."""

    checkpoints: list[Checkpoint] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    warnings: dict = field(default_factory=dict)
    grid: GridSpec | None = None

    @property
    def iterations(self) -> list[int]:
        return [c.iteration for c in self.checkpoints]

    @property
    def volumes(self) -> list[Volume]:
        return [c.volume for c in self.checkpoints]

    def final(self) -> Checkpoint:
        if not self.checkpoints:
            raise ValueError("trace has no checkpoints")
        return self.checkpoints[-1]

    def checkpoint_at(self, iteration: int) -> Checkpoint:
        for c in self.checkpoints:
            if c.iteration == iteration:
                return c
        raise KeyError(f"no checkpoint at iteration {iteration}")

    def summary_rows(self) -> list[tuple[int, float, float]]:
        return [(c.iteration, c.fidelity, c.objective) for c in self.checkpoints]


def save_trace(trace: SolverTrace, path: Path | str) -> Path:
    """Write a trace container plus a per-checkpoint CSV summary."""
    path = Path(path)
    vols = np.stack([c.volume.values for c in trace.checkpoints])
    arrays = {
        "volumes": vols,
        "iterations": np.array(trace.iterations, dtype=np.float64),
        "fidelity": np.array([c.fidelity for c in trace.checkpoints]),
        "objective": np.array([c.objective for c in trace.checkpoints]),
        "wall_time": np.array([c.wall_time for c in trace.checkpoints]),
    }
    metadata = {
        "config": trace.config,
        "warnings": trace.warnings,
        "grid": trace.grid.to_dict() if trace.grid else None,
        "voxel_size": list(trace.checkpoints[0].volume.voxel_size),
    }
    manifest = cio.save_arrays(path, "solver_trace", arrays, metadata)
    with open(path / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "fidelity", "objective"])
        for it, fid, obj in trace.summary_rows():
            writer.writerow([it, repr(fid), repr(obj)])
    return manifest


def load_trace(path: Path | str) -> SolverTrace:
    arrays, manifest = cio.load_arrays(
        path, expected=("volumes", "iterations", "fidelity", "objective", "wall_time")
    )
    if manifest.get("kind") != "solver_trace":
        raise cio.ContainerError(f"container kind {manifest.get('kind')!r} is not solver_trace")
    md = manifest["metadata"]
    voxel_size = tuple(md.get("voxel_size", (1.0, 1.0, 1.0)))
    grid = GridSpec.from_dict(md["grid"]) if md.get("grid") else None
    checkpoints = [
        Checkpoint(
            iteration=int(it),
            volume=Volume(vol, voxel_size),
            fidelity=float(fid),
            objective=float(obj),
            wall_time=float(wt),
        )
        for it, vol, fid, obj, wt in zip(
            arrays["iterations"],
            arrays["volumes"],
            arrays["fidelity"],
            arrays["objective"],
            arrays["wall_time"],
        )
    ]
    return SolverTrace(
        checkpoints=checkpoints,
        config=md.get("config", {}),
        warnings=md.get("warnings", {}),
        grid=grid,
    )
