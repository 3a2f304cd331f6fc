"""Measurement preprocessing: row selection, whitening, rank reduction.

The chain mirrors common system-matrix practice: keep frequency rows inside
a band whose SNR clears a threshold (real and imaginary parts of a
frequency stand or fall together), whiten rows by their background noise
standard deviation, then project everything onto the leading left singular
subspace of the whitened row matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import container as cio
from .linalg import SvdFactors, rsvd
from .operators import RawDataset
from .volume import GridSpec

VARIANCE_EPS = 1e-24


@dataclass(frozen=True)
class PreprocessConfig:
    """Selection band, SNR threshold, whitening toggle and target rank.

    bandpass is an inclusive (min, max) frequency-index pair applied to all
    coils, or a mapping {coil: (min, max)} for per-coil bands.
    """

    rank: int
    snr_threshold: float = 0.0
    bandpass: tuple[int, int] | dict[int, tuple[int, int]] | None = None
    whitening: bool = True
    rsvd_seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError(f"rank must be positive, got {self.rank}")
        if self.snr_threshold < 0:
            raise ValueError(f"snr_threshold must be nonnegative, got {self.snr_threshold}")

    def band_for(self, coil: int) -> tuple[float, float]:
        if self.bandpass is None:
            return (-np.inf, np.inf)
        if isinstance(self.bandpass, dict):
            band = self.bandpass.get(coil)
            return tuple(band) if band is not None else (-np.inf, np.inf)
        return tuple(self.bandpass)

    def to_dict(self) -> dict:
        band = self.bandpass
        if isinstance(band, dict):
            band = {str(k): list(v) for k, v in band.items()}
        elif band is not None:
            band = list(band)
        return {
            "rank": self.rank,
            "snr_threshold": self.snr_threshold,
            "bandpass": band,
            "whitening": self.whitening,
            "rsvd_seed": self.rsvd_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        band = d.get("bandpass")
        if isinstance(band, dict):
            band = {int(k): tuple(v) for k, v in band.items()}
        elif band is not None:
            band = tuple(band)
        return cls(
            rank=int(d["rank"]),
            snr_threshold=float(d.get("snr_threshold", 0.0)),
            bandpass=band,
            whitening=bool(d.get("whitening", True)),
            rsvd_seed=int(d.get("rsvd_seed", 0)),
        )


@dataclass
class ProcessedSystem:
    """Rank-reduced system ready for the solvers.

    A is (K, N), y is (K,).  retained_labels are the (coil, freq, part)
    labels of the rows that survived selection (they index the selected raw
    rows, not the projected ones).  rank_clamped records whether the
    requested rank exceeded what the surviving rows could support.
    """

    A: np.ndarray
    y: np.ndarray
    grid: GridSpec
    retained_labels: np.ndarray = None
    whitening_weights: np.ndarray | None = None
    svd: SvdFactors | None = None
    config: PreprocessConfig | None = None
    rank_clamped: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.A.ndim != 2 or self.y.shape != (self.A.shape[0],):
            raise ValueError(
                f"incompatible system shapes: A {self.A.shape}, y {self.y.shape}"
            )
        if self.A.shape[1] != self.grid.n_voxels:
            raise ValueError(
                f"A has {self.A.shape[1]} columns but the grid has "
                f"{self.grid.n_voxels} voxels"
            )
        if self.retained_labels is None:
            self.retained_labels = np.zeros((0, 3), dtype=np.int64)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_voxels(self) -> int:
        return self.A.shape[1]


def select_rows(
    ds: RawDataset, cfg: PreprocessConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Bandpass plus SNR-threshold row selection.

    Real and imaginary rows of one (coil, frequency) pair are kept or
    dropped together using the maximum of the pair's SNR values.  Returns
    (selected rows, selected measurement minus background, selected labels,
    selected row indices), all in original row order.
    """
    if ds.measurement is None or ds.snr_per_row is None:
        raise ValueError("dataset has no measurement; run synth_measurement first")
    labels = ds.row_labels
    pair_snr = {}
    for i in range(ds.n_rows):
        key = (labels[i, 0], labels[i, 1])
        snr = ds.snr_per_row[i]
        if key not in pair_snr or snr > pair_snr[key]:
            pair_snr[key] = snr
    keep = np.zeros(ds.n_rows, dtype=bool)
    for i in range(ds.n_rows):
        coil, freq = labels[i, 0], labels[i, 1]
        lo, hi = cfg.band_for(int(coil))
        keep[i] = (lo <= freq <= hi) and (pair_snr[(coil, freq)] >= cfg.snr_threshold)
    if not keep.any():
        raise ValueError(
            f"no rows survive selection (snr_threshold={cfg.snr_threshold}, "
            f"bandpass={cfg.bandpass})"
        )
    idx = np.flatnonzero(keep)
    data = ds.measurement - ds.background
    return ds.system_rows[idx], data[idx], labels[idx], idx


def whitening_matrix(background_samples: np.ndarray) -> np.ndarray:
    """Per-row whitening weights 1/sqrt(var + eps) from background draws.

    background_samples is (B, M): B repeated empty-scanner measurements.
    Uses the unbiased sample variance, hence B >= 2.
    """
    samples = np.asarray(background_samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ValueError(
            f"need at least 2 background samples for whitening, got shape {samples.shape}"
        )
    var = samples.var(axis=0, ddof=1)
    return 1.0 / np.sqrt(var + VARIANCE_EPS)


def build_system(ds: RawDataset, cfg: PreprocessConfig) -> ProcessedSystem:
    """Run the full chain: select, whiten, rank-reduce.

    The requested rank silently clamps to the number of surviving rows (and
    matrix width); the clamp is recorded on the result.
    """
    rows, data, labels, idx = select_rows(ds, cfg)
    weights = None
    if cfg.whitening:
        weights = whitening_matrix(ds.background_samples)[idx]
        rows = rows * weights[:, None]
        data = data * weights
    max_rank = min(rows.shape[0], rows.shape[1])
    rank = min(cfg.rank, max_rank)
    svd = rsvd(rows, rank, seed=cfg.rsvd_seed)
    A = svd.U.T @ rows
    y = svd.U.T @ data
    return ProcessedSystem(
        A=A,
        y=y,
        grid=ds.grid,
        retained_labels=labels,
        whitening_weights=weights,
        svd=svd,
        config=cfg,
        rank_clamped=rank < cfg.rank,
        meta={"dataset_seed": ds.seed, "surviving_rows": int(rows.shape[0])},
    )


def save_system(sys: ProcessedSystem, path: Path | str) -> Path:
    arrays = {
        "A": sys.A,
        "y": sys.y,
        "retained_labels": sys.retained_labels.astype(np.float64),
    }
    if sys.whitening_weights is not None:
        arrays["whitening_weights"] = sys.whitening_weights
    if sys.svd is not None:
        arrays["svd_U"] = sys.svd.U
        arrays["svd_s"] = sys.svd.s
        arrays["svd_V"] = sys.svd.V
    metadata = {
        "grid": sys.grid.to_dict(),
        "config": sys.config.to_dict() if sys.config else None,
        "rank_clamped": sys.rank_clamped,
        "meta": sys.meta,
    }
    return cio.save_arrays(path, "processed_system", arrays, metadata)


def load_system(path: Path | str) -> ProcessedSystem:
    arrays, manifest = cio.load_arrays(path, expected=("A", "y", "retained_labels"))
    if manifest.get("kind") != "processed_system":
        raise cio.ContainerError(
            f"container kind {manifest.get('kind')!r} is not processed_system"
        )
    md = manifest["metadata"]
    svd = None
    if "svd_U" in arrays:
        svd = SvdFactors(arrays["svd_U"], arrays["svd_s"], arrays["svd_V"])
    cfg = PreprocessConfig.from_dict(md["config"]) if md.get("config") else None
    return ProcessedSystem(
        A=arrays["A"],
        y=arrays["y"],
        grid=GridSpec.from_dict(md["grid"]),
        retained_labels=arrays["retained_labels"].astype(np.int64),
        whitening_weights=arrays.get("whitening_weights"),
        svd=svd,
        config=cfg,
        rank_clamped=bool(md.get("rank_clamped", False)),
        meta=md.get("meta", {}),
    )
