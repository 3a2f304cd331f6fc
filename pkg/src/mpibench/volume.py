"""Voxel grids and 3D concentration volumes.

Volumes are stored as (nx, ny, nz) float64 arrays.  Wherever a volume has
to interact with a system matrix it is flattened x-fastest, i.e. the flat
index is ix + nx*(iy + ny*iz).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Regular voxel grid: voxel counts, field of view and origin in mm.

    The grid covers [origin, origin + fov) along each axis; voxel (0, 0, 0)
    sits at the origin corner.
    """

    nx: int
    ny: int
    nz: int
    fov: tuple[float, float, float]
    origin: tuple[float, float, float]

    def __post_init__(self):
        counts = (self.nx, self.ny, self.nz)
        if min(counts) < 1:
            raise ValueError(f"voxel counts must be positive, got {counts}")
        object.__setattr__(self, "fov", tuple(float(v) for v in self.fov))
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        if len(self.fov) != 3 or len(self.origin) != 3:
            raise ValueError("fov and origin must have three components")
        if min(self.fov) <= 0:
            raise ValueError(f"field of view must be positive, got {self.fov}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def n_voxels(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def voxel_size(self) -> tuple[float, float, float]:
        return (self.fov[0] / self.nx, self.fov[1] / self.ny, self.fov[2] / self.nz)

    @property
    def voxel_volume(self) -> float:
        dx, dy, dz = self.voxel_size
        return dx * dy * dz

    def axis_centers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Voxel center coordinates along each axis (1D arrays, mm)."""
        out = []
        for n, f, o in zip(self.shape, self.fov, self.origin):
            d = f / n
            out.append(o + (np.arange(n) + 0.5) * d)
        return tuple(out)

    def centers(self) -> np.ndarray:
        """All voxel centers as an (N, 3) array in x-fastest order."""
        cx, cy, cz = self.axis_centers()
        gx, gy, gz = np.meshgrid(cx, cy, cz, indexing="ij")
        return np.column_stack(
            [gx.ravel(order="F"), gy.ravel(order="F"), gz.ravel(order="F")]
        )

    def to_dict(self) -> dict:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "nz": self.nz,
            "fov": list(self.fov),
            "origin": list(self.origin),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(
            nx=int(d["nx"]),
            ny=int(d["ny"]),
            nz=int(d["nz"]),
            fov=tuple(d["fov"]),
            origin=tuple(d["origin"]),
        )


@dataclass
class Volume:
    """A scalar field sampled on a voxel grid."""

    values: np.ndarray
    voxel_size: tuple[float, float, float] = (1.0, 1.0, 1.0)
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ValueError(f"volume values must be 3D, got shape {self.values.shape}")
        self.voxel_size = tuple(float(v) for v in self.voxel_size)
        self.warnings = tuple(self.warnings)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def n_voxels(self) -> int:
        return self.values.size

    @property
    def flat(self) -> np.ndarray:
        """Values flattened x-fastest."""
        return self.values.ravel(order="F")

    @property
    def voxel_volume(self) -> float:
        dx, dy, dz = self.voxel_size
        return dx * dy * dz

    def total_mass(self) -> float:
        """Integral of the field: sum of voxel values times voxel volume."""
        return float(self.values.sum()) * self.voxel_volume

    @classmethod
    def from_flat(
        cls,
        vec: np.ndarray,
        shape: tuple[int, int, int],
        voxel_size: tuple[float, float, float] = (1.0, 1.0, 1.0),
    ) -> "Volume":
        vec = np.asarray(vec, dtype=np.float64)
        n = shape[0] * shape[1] * shape[2]
        if vec.shape != (n,):
            raise ValueError(f"expected flat vector of length {n}, got shape {vec.shape}")
        return cls(vec.reshape(shape, order="F"), voxel_size)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "Volume":
        return cls(np.zeros(grid.shape), grid.voxel_size)
