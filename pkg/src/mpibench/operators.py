"""Synthetic forward operators, measurements and the raw dataset record.

Two operator families are provided.  The `spectral` kind synthesizes a
dense matrix with an algebraically decaying spectrum from seeded orthogonal
factors; it is the workhorse for solver studies because its conditioning is
known exactly.  The `langevin` kind runs a small physics chain: a field
free point on a 3D Lissajous trajectory, Langevin magnetization per voxel,
time differentiation and projection onto Fourier atoms, stacked as real and
imaginary rows per receive coil.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import gcd

import numpy as np

from .linalg import matrix_with_spectrum
from .volume import GridSpec, Volume

RE, IM = 0, 1


@dataclass(frozen=True)
class SpectralModel:
    """Operator with singular values scale * k**(-decay_beta)."""

    decay_beta: float
    n_rows: int
    scale: float = 1.0

    def __post_init__(self):
        if self.decay_beta <= 0:
            raise ValueError(f"decay exponent must be positive, got {self.decay_beta}")
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if self.n_rows < 2 or self.n_rows % 2:
            raise ValueError(f"n_rows must be a positive even count, got {self.n_rows}")


@dataclass(frozen=True)
class LangevinModel:
    """Langevin-particle operator on a Lissajous field-free-point path.

    drive_mT: drive amplitudes per axis (mT); gradient_tpm: selection field
    gradient (T/m, anisotropy fixed to (-1/2, -1/2, 1)); ratios: integer
    Lissajous frequency ratios, pairwise coprime; kappa: particle parameter
    (1/mT) controlling saturation, kappa -> 0 is the linear regime;
    samples_per_period: time samples over one full cycle; freq_min/freq_max:
    band of Fourier indices turned into rows.
    """

    drive_mT: tuple[float, float, float] = (9.5, 9.5, 4.75)
    gradient_tpm: float = 1.0
    ratios: tuple[int, int, int] = (32, 33, 35)
    kappa: float = 0.05
    samples_per_period: int = 1024
    freq_min: int = 1
    freq_max: int = 160

    def __post_init__(self):
        if min(self.drive_mT) <= 0:
            raise ValueError(f"drive amplitudes must be positive, got {self.drive_mT}")
        if self.gradient_tpm <= 0:
            raise ValueError(f"gradient must be positive, got {self.gradient_tpm}")
        r = self.ratios
        if len(r) != 3 or min(r) < 1:
            raise ValueError(f"need three positive frequency ratios, got {r}")
        for i in range(3):
            for j in range(i + 1, 3):
                if gcd(r[i], r[j]) != 1:
                    raise ValueError(f"frequency ratios must be pairwise coprime, got {r}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be nonnegative, got {self.kappa}")
        if self.samples_per_period < 4:
            raise ValueError("samples_per_period must be at least 4")
        if not 1 <= self.freq_min <= self.freq_max:
            raise ValueError(f"bad frequency band ({self.freq_min}, {self.freq_max})")
        if self.freq_max >= self.samples_per_period // 2:
            raise ValueError(
                f"freq_max {self.freq_max} must stay below Nyquist "
                f"{self.samples_per_period // 2}"
            )

    @property
    def gradient_mT_per_mm(self) -> np.ndarray:
        # T/m times mm gives mT, so the numeric gradient applies directly
        # to mm coordinates.
        return self.gradient_tpm * np.array([-0.5, -0.5, 1.0])


OperatorModel = SpectralModel | LangevinModel


@dataclass
class RawDataset:
    """A synthetic scan: system rows, labels, measurement and background.

    system_rows is (M, N) with M = 2 * (retained frequencies summed over
    coils) and N grid voxels (x-fastest).  row_labels is (M, 3) int64 with
    columns (coil, frequency index, part) where part is RE=0 or IM=1.
    Before synth_measurement runs, `background` holds the unit-RMS pattern,
    `measurement`/`snr_per_row` are None and background_samples is empty.
    """

    system_rows: np.ndarray
    row_labels: np.ndarray
    grid: GridSpec
    seed: int
    background: np.ndarray
    background_samples: np.ndarray
    measurement: np.ndarray | None = None
    snr_per_row: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.system_rows = np.asarray(self.system_rows, dtype=np.float64)
        self.row_labels = np.asarray(self.row_labels, dtype=np.int64)
        m = self.system_rows.shape[0]
        if self.row_labels.shape != (m, 3):
            raise ValueError(
                f"row_labels shape {self.row_labels.shape} does not match "
                f"{m} system rows"
            )
        if self.system_rows.shape[1] != self.grid.n_voxels:
            raise ValueError(
                f"system rows have {self.system_rows.shape[1]} columns but the "
                f"grid has {self.grid.n_voxels} voxels"
            )

    @property
    def n_rows(self) -> int:
        return self.system_rows.shape[0]


def _background_pattern(rng: np.random.Generator, m: int, harmonics: int = 5) -> np.ndarray:
    """Smooth deterministic offset over the row index, normalized to unit RMS."""
    idx = np.arange(m)
    pattern = np.zeros(m)
    for k in range(harmonics + 1):
        a, b = rng.standard_normal(2) / (k + 1.0)
        pattern += a * np.cos(2 * np.pi * k * idx / m) + b * np.sin(2 * np.pi * k * idx / m)
    rms = np.sqrt(np.mean(pattern**2))
    return pattern / rms if rms > 0 else pattern


def _langevin_ratio(xi: np.ndarray) -> np.ndarray:
    """L(xi)/xi with L the Langevin function, series-stabilized near zero."""
    xi = np.asarray(xi, dtype=np.float64)
    out = np.empty_like(xi)
    small = xi < 1e-3
    xs = xi[small]
    out[small] = 1.0 / 3.0 - xs * xs / 45.0
    xl = xi[~small]
    out[~small] = (1.0 / np.tanh(xl) - 1.0 / xl) / xl
    return out


def _magnetization(model: LangevinModel, H: np.ndarray) -> np.ndarray:
    """m(H) = L(kappa*|H|)/kappa * H/|H|, linear limit H/3 for kappa -> 0.

    H has shape (..., 3); the reduction m = H * g(kappa*|H|) with
    g(xi) = L(xi)/xi is finite for |H| -> 0 and kappa -> 0.
    """
    mag = np.sqrt(np.sum(H * H, axis=-1))
    if model.kappa == 0.0:
        return H / 3.0
    return H * _langevin_ratio(model.kappa * mag)[..., None]


def _synth_langevin_rows(
    model: LangevinModel, grid: GridSpec, coils: int
) -> tuple[np.ndarray, np.ndarray]:
    if not 1 <= coils <= 3:
        raise ValueError(f"langevin trajectory supports 1 to 3 coils, got {coils}")
    n_t = model.samples_per_period
    period = 1.0
    t = np.arange(n_t) * (period / n_t)
    drive = np.stack(
        [
            model.drive_mT[ax] * np.sin(2 * np.pi * model.ratios[ax] * t / period)
            for ax in range(3)
        ],
        axis=-1,
    )  # (n_t, 3) in mT
    g = model.gradient_mT_per_mm
    centers = grid.centers()  # (N, 3) mm
    freqs = np.arange(model.freq_min, model.freq_max + 1)
    n_f = freqs.shape[0]
    # Fourier coefficient of the time derivative against orthonormal atoms
    # psi_j = (-1)^j / sqrt(T) * exp(2i pi j t / T).
    factor = (
        ((-1.0) ** freqs)
        * np.sqrt(period)
        * (1j * 2 * np.pi * freqs / period)
        / n_t
    )

    n_vox = centers.shape[0]
    coil_blocks = [np.empty((n_f, n_vox), dtype=np.complex128) for _ in range(coils)]
    chunk = max(1, int(2**22 // (3 * n_t)))
    for lo in range(0, n_vox, chunk):
        hi = min(lo + chunk, n_vox)
        sel = centers[lo:hi] * g  # (chunk, 3) static selection field in mT
        H = sel[:, None, :] + drive[None, :, :]  # (chunk, n_t, 3)
        m = _magnetization(model, H)
        for ax in range(coils):
            spec = np.fft.rfft(m[:, :, ax], axis=1)  # (chunk, n_t//2+1)
            coil_blocks[ax][:, lo:hi] = (spec[:, freqs] * factor).T

    rows = []
    labels = []
    for ax in range(coils):
        rows.append(np.real(coil_blocks[ax]))
        labels.append(np.column_stack([np.full(n_f, ax), freqs, np.full(n_f, RE)]))
        rows.append(np.imag(coil_blocks[ax]))
        labels.append(np.column_stack([np.full(n_f, ax), freqs, np.full(n_f, IM)]))
    return np.vstack(rows), np.vstack(labels).astype(np.int64)


def _synth_spectral_rows(
    model: SpectralModel, grid: GridSpec, coils: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    m = model.n_rows
    n_freq = m // 2
    if n_freq % coils:
        raise ValueError(
            f"{n_freq} frequencies cannot be split evenly over {coils} coils"
        )
    k = np.arange(1, min(m, grid.n_voxels) + 1, dtype=np.float64)
    spectrum = model.scale * k ** (-model.decay_beta)
    rows = matrix_with_spectrum(spectrum, m, grid.n_voxels, seed=rng.integers(2**63))
    per_coil = n_freq // coils
    labels = []
    for coil in range(coils):
        freqs = np.arange(coil * per_coil, (coil + 1) * per_coil)
        labels.append(np.column_stack([np.full(per_coil, coil), freqs, np.full(per_coil, RE)]))
        labels.append(np.column_stack([np.full(per_coil, coil), freqs, np.full(per_coil, IM)]))
    return rows, np.vstack(labels).astype(np.int64)


def synth_operator(
    model: OperatorModel, grid: GridSpec, coils: int = 1, seed: int = 0
) -> RawDataset:
    """Build system rows for a grid; returns a dataset without measurements."""
    rng = np.random.default_rng(seed)
    if isinstance(model, SpectralModel):
        rows, labels = _synth_spectral_rows(model, grid, coils, rng)
        meta = {"operator": {"kind": "spectral", "decay_beta": model.decay_beta,
                             "n_rows": model.n_rows, "scale": model.scale}}
    elif isinstance(model, LangevinModel):
        rows, labels = _synth_langevin_rows(model, grid, coils)
        meta = {"operator": {"kind": "langevin", "drive_mT": list(model.drive_mT),
                             "gradient_tpm": model.gradient_tpm,
                             "ratios": list(model.ratios), "kappa": model.kappa,
                             "samples_per_period": model.samples_per_period,
                             "freq_min": model.freq_min, "freq_max": model.freq_max}}
    else:
        raise TypeError(f"unknown operator model {type(model)!r}")
    meta["coils"] = coils
    pattern = _background_pattern(rng, rows.shape[0])
    return RawDataset(
        system_rows=rows,
        row_labels=labels,
        grid=grid,
        seed=seed,
        background=pattern,
        background_samples=np.zeros((0, rows.shape[0])),
        meta=meta,
    )


def synth_measurement(
    ds: RawDataset,
    phantom: Volume,
    noise_sigma_per_row: np.ndarray | float,
    background_scale: float = 0.0,
    seed: int = 0,
    n_background: int = 8,
) -> RawDataset:
    """Simulate a measurement of `phantom` through the dataset's operator.

    measurement = rows @ phantom + background_scale * pattern + noise, with
    independent Gaussian noise per row.  Also draws n_background empty-
    scanner samples (pattern + fresh noise) and records per-row SNR as
    |clean signal| / sigma (inf where sigma is zero).
    """
    if phantom.shape != ds.grid.shape:
        raise ValueError(
            f"phantom shape {phantom.shape} does not match grid {ds.grid.shape}"
        )
    if n_background < 2:
        raise ValueError(f"need at least 2 background samples, got {n_background}")
    m = ds.n_rows
    sigma = np.broadcast_to(np.asarray(noise_sigma_per_row, dtype=np.float64), (m,)).copy()
    if np.any(sigma < 0):
        raise ValueError("noise sigmas must be nonnegative")
    rng = np.random.default_rng(seed)
    clean = ds.system_rows @ phantom.flat
    background = background_scale * ds.background
    measurement = clean + background + sigma * rng.standard_normal(m)
    samples = background[None, :] + sigma[None, :] * rng.standard_normal((n_background, m))
    with np.errstate(divide="ignore"):
        snr = np.where(sigma > 0, np.abs(clean) / np.where(sigma > 0, sigma, 1.0), np.inf)
    meta = dict(ds.meta)
    meta["noise_sigma_rms"] = float(np.sqrt(np.mean(sigma**2)))
    meta["background_scale"] = float(background_scale)
    meta["measurement_seed"] = int(seed)
    return replace(
        ds,
        background=background,
        background_samples=samples,
        measurement=measurement,
        snr_per_row=snr,
        meta=meta,
    )


def sigma_for_snr_db(ds: RawDataset, phantom: Volume, snr_db: float) -> float:
    """Uniform noise sigma giving the requested dataset-level SNR in dB.

    SNR is ||clean||^2 over the expected noise energy M * sigma^2.
    """
    clean = ds.system_rows @ phantom.flat
    return float(np.linalg.norm(clean) / np.sqrt(ds.n_rows) * 10 ** (-snr_db / 20.0))
