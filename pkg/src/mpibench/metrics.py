"""Image quality metrics: PSNR, 3D SSIM and shift-maximized variants.

The shift-maximized scores compare a reconstruction against rasterizations
of the analytic phantom translated over a symmetric grid of subvoxel
offsets, and report the best value over all shifts.  This removes the
penalty for the small spatial displacement a reconstruction may carry.
Reference stacks are cached per (phantom, grid, shifts, supersample); the
cached and uncached paths produce bitwise identical results.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter

from .phantoms import PhantomSpec, phantom_to_dict, rasterize_phantom
from .volume import GridSpec, Volume

DEFAULT_DATA_RANGE = 100.0
SSIM_WINDOW = 7
_CACHE_LIMIT = 4
_REFERENCE_CACHE: dict[str, dict] = {}


@dataclass(frozen=True)
class ShiftGrid:
    """Symmetric cubic lattice of shifts: [-extent, extent] per axis."""

    extent_mm: float = 3.0
    step_mm: float = 0.5

    def __post_init__(self):
        if self.extent_mm < 0 or self.step_mm <= 0:
            raise ValueError(
                f"need extent >= 0 and step > 0, got {self.extent_mm}, {self.step_mm}"
            )

    def axis_offsets(self) -> np.ndarray:
        n = int(round(self.extent_mm / self.step_mm))
        return np.arange(-n, n + 1) * self.step_mm

    def shifts(self) -> np.ndarray:
        """All shift vectors, shape (S, 3), z fastest."""
        off = self.axis_offsets()
        gx, gy, gz = np.meshgrid(off, off, off, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

    def zero_index(self) -> int:
        n = int(round(self.extent_mm / self.step_mm))
        per = 2 * n + 1
        return (n * per + n) * per + n

    def __len__(self):
        per = 2 * int(round(self.extent_mm / self.step_mm)) + 1
        return per**3


def psnr(x: Volume | np.ndarray, ref: Volume | np.ndarray,
         data_range: float = DEFAULT_DATA_RANGE) -> float:
    """Peak signal-to-noise ratio in dB; +inf for an exact match."""
    xv = x.values if isinstance(x, Volume) else np.asarray(x, dtype=np.float64)
    rv = ref.values if isinstance(ref, Volume) else np.asarray(ref, dtype=np.float64)
    if xv.shape != rv.shape:
        raise ValueError(f"shape mismatch: {xv.shape} vs {rv.shape}")
    if data_range <= 0:
        raise ValueError(f"data_range must be positive, got {data_range}")
    mse = float(np.mean((xv - rv) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(data_range * data_range / mse))


def _window_mean(arr: np.ndarray, batched: bool) -> np.ndarray:
    size = (1, SSIM_WINDOW, SSIM_WINDOW, SSIM_WINDOW) if batched else SSIM_WINDOW
    return uniform_filter(arr, size=size, mode="constant")


def _crop(arr: np.ndarray) -> np.ndarray:
    pad = SSIM_WINDOW // 2
    sl = (slice(pad, -pad),) * 3
    return arr[(Ellipsis,) + sl]


def _ssim_constants(data_range: float) -> tuple[float, float, float]:
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    n = SSIM_WINDOW**3
    return c1, c2, n / (n - 1.0)


def ssim3d(x: Volume | np.ndarray, ref: Volume | np.ndarray,
           data_range: float = DEFAULT_DATA_RANGE) -> float:
    """Structural similarity with a 7^3 uniform window.

    Local statistics use the unbiased covariance; the score is the mean of
    the local map over windows that fit entirely inside the volume.
    """
    xv = x.values if isinstance(x, Volume) else np.asarray(x, dtype=np.float64)
    rv = ref.values if isinstance(ref, Volume) else np.asarray(ref, dtype=np.float64)
    if xv.shape != rv.shape:
        raise ValueError(f"shape mismatch: {xv.shape} vs {rv.shape}")
    if min(xv.shape) < SSIM_WINDOW:
        raise ValueError(f"volume shape {xv.shape} is smaller than the {SSIM_WINDOW}^3 window")
    if data_range <= 0:
        raise ValueError(f"data_range must be positive, got {data_range}")
    c1, c2, cov_norm = _ssim_constants(data_range)
    ux = _crop(_window_mean(xv, False))
    uy = _crop(_window_mean(rv, False))
    uxx = _crop(_window_mean(xv * xv, False))
    uyy = _crop(_window_mean(rv * rv, False))
    uxy = _crop(_window_mean(xv * rv, False))
    vx = cov_norm * (uxx - ux * ux)
    vy = cov_norm * (uyy - uy * uy)
    vxy = cov_norm * (uxy - ux * uy)
    s = ((2 * ux * uy + c1) * (2 * vxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
    return float(s.mean())


@dataclass
class QualityReport:
    """Shift-maximized scores plus the per-shift curves behind them."""

    eps_psnr: float | None
    eps_ssim: float | None
    best_shift_psnr: tuple[float, float, float] | None
    best_shift_ssim: tuple[float, float, float] | None
    unshifted_psnr: float | None
    unshifted_ssim: float | None
    data_range: float
    shifts: np.ndarray = field(repr=False, default=None)
    psnr_per_shift: np.ndarray | None = field(repr=False, default=None)
    ssim_per_shift: np.ndarray | None = field(repr=False, default=None)

    @staticmethod
    def _encode(v):
        if v is None:
            return None
        v = float(v)
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v

    def to_dict(self, include_curves: bool = True) -> dict:
        d = {
            "eps_psnr": self._encode(self.eps_psnr),
            "eps_ssim": self._encode(self.eps_ssim),
            "best_shift_psnr": list(self.best_shift_psnr) if self.best_shift_psnr else None,
            "best_shift_ssim": list(self.best_shift_ssim) if self.best_shift_ssim else None,
            "unshifted_psnr": self._encode(self.unshifted_psnr),
            "unshifted_ssim": self._encode(self.unshifted_ssim),
            "data_range": self.data_range,
        }
        if include_curves and self.psnr_per_shift is not None:
            d["psnr_per_shift"] = [self._encode(v) for v in self.psnr_per_shift]
        if include_curves and self.ssim_per_shift is not None:
            d["ssim_per_shift"] = [float(v) for v in self.ssim_per_shift]
        return d

    def to_json(self, include_curves: bool = True) -> str:
        return json.dumps(self.to_dict(include_curves), indent=2, sort_keys=True)


def _cache_key(spec: PhantomSpec, grid: GridSpec, shiftgrid: ShiftGrid,
               supersample: int) -> str:
    payload = json.dumps(
        {
            "phantom": phantom_to_dict(spec),
            "grid": grid.to_dict(),
            "shifts": [list(map(float, s)) for s in shiftgrid.shifts()],
            "supersample": supersample,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def clear_reference_cache() -> None:
    _REFERENCE_CACHE.clear()


def _build_stack(spec: PhantomSpec, grid: GridSpec, shiftgrid: ShiftGrid,
                 supersample: int) -> np.ndarray:
    shifts = shiftgrid.shifts()
    stack = np.empty((shifts.shape[0],) + grid.shape)
    for i, sh in enumerate(shifts):
        stack[i] = rasterize_phantom(spec, grid, tuple(sh), supersample).values
    return stack


def reference_stack(spec: PhantomSpec, grid: GridSpec, shiftgrid: ShiftGrid,
                    supersample: int = 5, use_cache: bool = True) -> dict:
    """Rasterized references for every shift, plus lazily cached SSIM moments."""
    key = _cache_key(spec, grid, shiftgrid, supersample)
    if use_cache and key in _REFERENCE_CACHE:
        return _REFERENCE_CACHE[key]
    entry = {"stack": _build_stack(spec, grid, shiftgrid, supersample)}
    if use_cache:
        while len(_REFERENCE_CACHE) >= _CACHE_LIMIT:
            _REFERENCE_CACHE.pop(next(iter(_REFERENCE_CACHE)))
        _REFERENCE_CACHE[key] = entry
    return entry


def _psnr_curve(xv: np.ndarray, stack: np.ndarray, data_range: float) -> np.ndarray:
    flat_refs = stack.reshape(stack.shape[0], -1)
    flat_x = xv.ravel()
    out = np.empty(stack.shape[0])
    chunk = 256
    for lo in range(0, stack.shape[0], chunk):
        hi = min(lo + chunk, stack.shape[0])
        mse = np.mean((flat_x - flat_refs[lo:hi]) ** 2, axis=1)
        with np.errstate(divide="ignore"):
            out[lo:hi] = np.where(
                mse == 0.0, np.inf, 10.0 * np.log10(data_range * data_range / mse)
            )
    return out


def _ssim_ref_moments(entry: dict, data_range_key: str, cov_norm: float) -> tuple:
    if data_range_key not in entry:
        stack = entry["stack"]
        uy = _crop(_window_mean(stack, True))
        uyy = _crop(_window_mean(stack * stack, True))
        vy = cov_norm * (uyy - uy * uy)
        entry[data_range_key] = (uy, vy)
    return entry[data_range_key]


def _ssim_curve(xv: np.ndarray, entry: dict, data_range: float) -> np.ndarray:
    c1, c2, cov_norm = _ssim_constants(data_range)
    uy, vy = _ssim_ref_moments(entry, "ssim_moments", cov_norm)
    stack = entry["stack"]
    ux = _crop(_window_mean(xv, False))
    uxx = _crop(_window_mean(xv * xv, False))
    vx = cov_norm * (uxx - ux * ux)
    out = np.empty(stack.shape[0])
    chunk = 256
    for lo in range(0, stack.shape[0], chunk):
        hi = min(lo + chunk, stack.shape[0])
        uxy = _crop(_window_mean(xv[None] * stack[lo:hi], True))
        vxy = cov_norm * (uxy - ux[None] * uy[lo:hi])
        s = ((2 * ux[None] * uy[lo:hi] + c1) * (2 * vxy + c2)) / (
            (ux[None] * ux[None] + uy[lo:hi] * uy[lo:hi] + c1)
            * (vx[None] + vy[lo:hi] + c2)
        )
        out[lo:hi] = s.mean(axis=(1, 2, 3))
    return out


def eps_metrics(
    x: Volume,
    spec: PhantomSpec,
    grid: GridSpec,
    shiftgrid: ShiftGrid | None = None,
    data_range: float = DEFAULT_DATA_RANGE,
    supersample: int = 5,
    metrics: tuple[str, ...] = ("psnr", "ssim"),
    use_cache: bool = True,
) -> QualityReport:
    """Best PSNR/SSIM against the phantom over all shifts in the grid.

    The reported values can only improve on the unshifted comparison since
    the zero shift is always part of the grid.
    """
    if shiftgrid is None:
        shiftgrid = ShiftGrid()
    if x.shape != grid.shape:
        raise ValueError(f"volume shape {x.shape} does not match grid {grid.shape}")
    unknown = set(metrics) - {"psnr", "ssim"}
    if unknown:
        raise ValueError(f"unknown metrics {sorted(unknown)}")
    entry = reference_stack(spec, grid, shiftgrid, supersample, use_cache)
    shifts = shiftgrid.shifts()
    zero = shiftgrid.zero_index()
    xv = x.values

    report = QualityReport(
        eps_psnr=None, eps_ssim=None, best_shift_psnr=None, best_shift_ssim=None,
        unshifted_psnr=None, unshifted_ssim=None, data_range=data_range,
        shifts=shifts,
    )
    if "psnr" in metrics:
        curve = _psnr_curve(xv, entry["stack"], data_range)
        best = int(np.argmax(curve))
        report.psnr_per_shift = curve
        report.eps_psnr = float(curve[best])
        report.best_shift_psnr = tuple(shifts[best])
        report.unshifted_psnr = float(curve[zero])
    if "ssim" in metrics:
        if min(grid.shape) < SSIM_WINDOW:
            raise ValueError(
                f"grid shape {grid.shape} is smaller than the {SSIM_WINDOW}^3 SSIM window"
            )
        curve = _ssim_curve(xv, entry, data_range)
        best = int(np.argmax(curve))
        report.ssim_per_shift = curve
        report.eps_ssim = float(curve[best])
        report.best_shift_ssim = tuple(shifts[best])
        report.unshifted_ssim = float(curve[zero])
    return report
