"""Analytic test phantoms and their rasterization onto voxel grids.

Each phantom is a closed-form indicator function in millimetre coordinates
times a tracer concentration.  Rasterization integrates the indicator per
voxel with a midpoint subsample rule, so voxel values are exact fractions
of covered subcells times the tracer value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import radians, tan

import numpy as np

from .volume import GridSpec, Volume


@dataclass(frozen=True)
class ConeSpec:
    """Truncated cone along +x, centered at the coordinate origin.

    The tip face of radius tip_radius sits at x = -height/2 and the radius
    grows with the apex angle (angle between axis and lateral surface).
    """

    tip_radius: float = 1.0
    apex_angle_deg: float = 10.0
    height: float = 22.0
    tracer_value: float = 50.0

    def __post_init__(self):
        if min(self.tip_radius, self.height, self.tracer_value) < 0 or (
            self.tip_radius <= 0 or self.height <= 0
        ):
            raise ValueError("cone tip_radius and height must be strictly positive")
        if not 0.0 < self.apex_angle_deg < 90.0:
            raise ValueError(f"apex angle must be in (0, 90) deg, got {self.apex_angle_deg}")

    @property
    def base_radius(self) -> float:
        return self.tip_radius + self.height * tan(radians(self.apex_angle_deg))

    def analytic_volume(self) -> float:
        """Frustum volume in cubic millimetres (microlitres)."""
        r0, r1, h = self.tip_radius, self.base_radius, self.height
        return np.pi * h / 3.0 * (r0 * r0 + r0 * r1 + r1 * r1)


@dataclass(frozen=True)
class FiveTubeSpec:
    """Five cylindrical tubes fanning out from a common origin.

    One tube runs along +y; two more are tilted within the x-y plane and two
    within the y-z plane.  The common origin sits at (0, -tube_length/2, 0).
    """

    tube_radius: float = 1.0
    xy_angles_deg: tuple[float, float] = (20.0, 30.0)
    yz_angles_deg: tuple[float, float] = (10.0, 15.0)
    tube_length: float = 18.0
    tracer_value: float = 50.0

    def __post_init__(self):
        if self.tube_radius <= 0 or self.tube_length <= 0:
            raise ValueError("tube radius and length must be strictly positive")
        for a in tuple(self.xy_angles_deg) + tuple(self.yz_angles_deg):
            if not 0.0 < a < 90.0:
                raise ValueError(f"tube angles must be in (0, 90) deg, got {a}")

    def directions(self) -> np.ndarray:
        """Unit direction of each tube, shape (5, 3)."""
        dirs = [np.array([0.0, 1.0, 0.0])]
        a1, a2 = (radians(a) for a in self.xy_angles_deg)
        dirs.append(np.array([np.sin(a1), np.cos(a1), 0.0]))
        dirs.append(np.array([-np.sin(a2), np.cos(a2), 0.0]))
        b1, b2 = (radians(a) for a in self.yz_angles_deg)
        dirs.append(np.array([0.0, np.cos(b1), np.sin(b1)]))
        dirs.append(np.array([0.0, np.cos(b2), -np.sin(b2)]))
        return np.vstack(dirs)

    @property
    def origin(self) -> np.ndarray:
        return np.array([0.0, -self.tube_length / 2.0, 0.0])


@dataclass(frozen=True)
class CuboidUnionSpec:
    """Union of axis-aligned boxes, each given as (min corner, size) in mm."""

    boxes: tuple[tuple[tuple[float, float, float], tuple[float, float, float]], ...] = ()
    tracer_value: float = 50.0

    def __post_init__(self):
        norm = []
        for corner, size in self.boxes:
            corner = tuple(float(v) for v in corner)
            size = tuple(float(v) for v in size)
            if len(corner) != 3 or len(size) != 3:
                raise ValueError("each box needs a 3-vector corner and size")
            if min(size) <= 0:
                raise ValueError(f"box sizes must be strictly positive, got {size}")
            norm.append((corner, size))
        object.__setattr__(self, "boxes", tuple(norm))
        if not self.boxes:
            raise ValueError("cuboid union needs at least one box")


PhantomSpec = ConeSpec | FiveTubeSpec | CuboidUnionSpec

_KINDS = {"cone": ConeSpec, "five_tube": FiveTubeSpec, "cuboid_union": CuboidUnionSpec}


def phantom_to_dict(spec: PhantomSpec) -> dict:
    if isinstance(spec, ConeSpec):
        return {
            "kind": "cone",
            "tip_radius": spec.tip_radius,
            "apex_angle_deg": spec.apex_angle_deg,
            "height": spec.height,
            "tracer_value": spec.tracer_value,
        }
    if isinstance(spec, FiveTubeSpec):
        return {
            "kind": "five_tube",
            "tube_radius": spec.tube_radius,
            "xy_angles_deg": list(spec.xy_angles_deg),
            "yz_angles_deg": list(spec.yz_angles_deg),
            "tube_length": spec.tube_length,
            "tracer_value": spec.tracer_value,
        }
    if isinstance(spec, CuboidUnionSpec):
        return {
            "kind": "cuboid_union",
            "boxes": [[list(c), list(s)] for c, s in spec.boxes],
            "tracer_value": spec.tracer_value,
        }
    raise TypeError(f"unknown phantom spec type {type(spec)!r}")


def phantom_from_dict(d: dict) -> PhantomSpec:
    kind = d.get("kind")
    if kind not in _KINDS:
        raise ValueError(f"unknown phantom kind {kind!r}")
    args = {k: v for k, v in d.items() if k != "kind"}
    if kind == "cuboid_union" and "boxes" in args:
        args["boxes"] = tuple((tuple(c), tuple(s)) for c, s in args["boxes"])
    if kind == "five_tube":
        for key in ("xy_angles_deg", "yz_angles_deg"):
            if key in args:
                args[key] = tuple(args[key])
    return _KINDS[kind](**args)


def _inside_cone(spec: ConeSpec, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    x3 = x[:, None, None]
    r2 = y[None, :, None] ** 2 + z[None, None, :] ** 2
    x0 = -spec.height / 2.0
    axial = x3 - x0
    radius = spec.tip_radius + tan(radians(spec.apex_angle_deg)) * axial
    return (axial >= 0.0) & (axial <= spec.height) & (r2 <= radius * radius)


def _inside_five_tube(
    spec: FiveTubeSpec, x: np.ndarray, y: np.ndarray, z: np.ndarray
) -> np.ndarray:
    px = x[:, None, None] - spec.origin[0]
    py = y[None, :, None] - spec.origin[1]
    pz = z[None, None, :] - spec.origin[2]
    p2 = px * px + py * py + pz * pz
    inside = np.zeros(np.broadcast_shapes(px.shape, py.shape, pz.shape), dtype=bool)
    r2 = spec.tube_radius**2
    for d in spec.directions():
        t = px * d[0] + py * d[1] + pz * d[2]
        inside |= (t >= 0.0) & (t <= spec.tube_length) & (p2 - t * t <= r2)
    return inside


def _inside_cuboids(
    spec: CuboidUnionSpec, x: np.ndarray, y: np.ndarray, z: np.ndarray
) -> np.ndarray:
    inside = np.zeros((x.shape[0], y.shape[0], z.shape[0]), dtype=bool)
    for corner, size in spec.boxes:
        mx = (x >= corner[0]) & (x <= corner[0] + size[0])
        my = (y >= corner[1]) & (y <= corner[1] + size[1])
        mz = (z >= corner[2]) & (z <= corner[2] + size[2])
        inside |= mx[:, None, None] & my[None, :, None] & mz[None, None, :]
    return inside


def phantom_indicator(
    spec: PhantomSpec, x: np.ndarray, y: np.ndarray, z: np.ndarray
) -> np.ndarray:
    """Boolean indicator on the tensor grid spanned by 1D coordinate arrays."""
    if isinstance(spec, ConeSpec):
        return _inside_cone(spec, x, y, z)
    if isinstance(spec, FiveTubeSpec):
        return _inside_five_tube(spec, x, y, z)
    if isinstance(spec, CuboidUnionSpec):
        return _inside_cuboids(spec, x, y, z)
    raise TypeError(f"unknown phantom spec type {type(spec)!r}")


def _subsample_axis(n: int, fov: float, origin: float, supersample: int) -> np.ndarray:
    step = fov / n / supersample
    return origin + (np.arange(n * supersample) + 0.5) * step


def rasterize_phantom(
    spec: PhantomSpec,
    grid: GridSpec,
    shift: tuple[float, float, float] = (0.0, 0.0, 0.0),
    supersample: int = 5,
) -> Volume:
    """Rasterize a phantom translated by `shift` (mm) onto a voxel grid.

    Every voxel is probed at supersample^3 midpoint subcells; the voxel
    value is the tracer concentration times the covered fraction.  A
    phantom with no overlap at all is flagged, not an error.
    """
    if supersample < 1:
        raise ValueError(f"supersample must be >= 1, got {supersample}")
    s = int(supersample)
    xs = _subsample_axis(grid.nx, grid.fov[0], grid.origin[0], s) - shift[0]
    ys = _subsample_axis(grid.ny, grid.fov[1], grid.origin[1], s) - shift[1]
    zs = _subsample_axis(grid.nz, grid.fov[2], grid.origin[2], s) - shift[2]
    inside = phantom_indicator(spec, xs, ys, zs)
    counts = (
        inside.reshape(grid.nx, s, grid.ny, s, grid.nz, s)
        .sum(axis=(1, 3, 5), dtype=np.int64)
    )
    values = spec.tracer_value * counts.astype(np.float64) / float(s**3)
    warnings = ()
    if not inside.any():
        warnings = ("phantom_outside_grid",)
    return Volume(values, grid.voxel_size, warnings)
