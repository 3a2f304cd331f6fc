"""Render sweep results: Markdown tables, graymap slices and figures.

Reads the sorted results CSV written by a sweep, picks the best checkpoint
per method and preprocessing config, and emits a Markdown report, a
delimited best-of summary, central-slice portable graymaps of the winning
reconstructions and matplotlib overview figures.  Regenerating a report
from the same inputs reproduces every output byte for byte.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .schedule import load_trace
from .sweep import SUMMARY_COLUMNS, best_rows, make_run_id
from .volume import Volume


class ReportError(RuntimeError):
    pass


def parse_results(path: Path | str) -> list[dict]:
    """Read a results CSV back into typed rows."""
    path = Path(path)
    if not path.exists():
        raise ReportError(f"no results file at {path}")
    rows = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            rows.append({
                "run_id": raw["run_id"],
                "method": raw["method"],
                "pp_index": int(raw["pp_index"]),
                "pp_rank": int(raw["pp_rank"]),
                "pp_snr_threshold": float(raw["pp_snr_threshold"]),
                "pp_whitening": raw["pp_whitening"] == "True",
                "seed": int(raw["seed"]),
                "params": raw["params"],
                "checkpoint": int(raw["checkpoint"]) if raw["checkpoint"] else None,
                "eps_psnr": float(raw["eps_psnr"]) if raw["eps_psnr"] else None,
                "eps_ssim": float(raw["eps_ssim"]) if raw["eps_ssim"] else None,
                "unshifted_psnr": float(raw["unshifted_psnr"]) if raw["unshifted_psnr"] else None,
                "unshifted_ssim": float(raw["unshifted_ssim"]) if raw["unshifted_ssim"] else None,
                "status": raw["status"],
                "error": raw["error"] or None,
            })
    return rows


def write_pgm(path: Path | str, plane: np.ndarray, data_range: float) -> Path:
    """Binary portable graymap with the fixed mapping [0, data_range] -> 0..255."""
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise ValueError(f"need a 2D plane, got shape {plane.shape}")
    if data_range <= 0:
        raise ValueError(f"data_range must be positive, got {data_range}")
    gray = np.rint(np.clip(plane, 0.0, data_range) / data_range * 255.0).astype(np.uint8)
    h, w = gray.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())
    return path


def central_slices(volume: Volume) -> dict[str, np.ndarray]:
    """Central planes, each oriented with its first named axis horizontal."""
    v = volume.values
    nx, ny, nz = v.shape
    return {
        "xy": v[:, :, nz // 2].T,
        "xz": v[:, ny // 2, :].T,
        "yz": v[nx // 2, :, :].T,
    }


def _metric_cell(v) -> str:
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def _markdown_table(columns: tuple[str, ...], entries: list[dict]) -> list[str]:
    lines = ["| " + " | ".join(columns) + " |",
             "|" + "|".join([" --- "] * len(columns)) + "|"]
    for entry in entries:
        lines.append("| " + " | ".join(_metric_cell(entry[c]) for c in columns) + " |")
    return lines


def _best_volume(results_dir: Path, entry: dict, metric: str) -> Volume | None:
    run_id = make_run_id(entry["method"], entry["pp_index"],
                         json.loads(entry[f"{metric}_params"]),
                         entry[f"{metric}_seed"])
    trace_dir = results_dir / "traces" / run_id
    if not trace_dir.exists():
        return None
    trace = load_trace(trace_dir)
    return trace.checkpoint_at(entry[f"{metric}_checkpoint"]).volume


def _montage(fig_path: Path, picks: list[tuple[str, Volume]], data_range: float) -> None:
    n = len(picks)
    fig, axes = plt.subplots(n, 3, figsize=(6.0, 2.0 * n), squeeze=False)
    for i, (label, vol) in enumerate(picks):
        for j, (name, plane) in enumerate(central_slices(vol).items()):
            ax = axes[i][j]
            ax.imshow(plane, cmap="gray", vmin=0.0, vmax=data_range, origin="lower")
            ax.set_xticks([])
            ax.set_yticks([])
            if i == 0:
                ax.set_title(name, fontsize=8)
            if j == 0:
                ax.set_ylabel(label, fontsize=6)
    fig.savefig(fig_path, dpi=100, metadata={"Software": "mpibench"})
    plt.close(fig)


def _curves(fig_path: Path, rows: list[dict], summary: list[dict]) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for entry in summary:
        if entry["best_eps_psnr"] is None:
            continue
        pts = sorted(
            (r["checkpoint"], r["eps_psnr"]) for r in rows
            if r["status"] == "ok" and r["eps_psnr"] is not None
            and r["method"] == entry["method"]
            and r["pp_index"] == entry["pp_index"]
            and r["params"] == entry["eps_psnr_params"]
            and r["seed"] == entry["eps_psnr_seed"]
        )
        ax.plot([p[0] for p in pts], [p[1] for p in pts],
                label=f"{entry['method']} pp{entry['pp_index']}")
    ax.set_xscale("log")
    ax.set_xlabel("checkpoint")
    ax.set_ylabel("shift-maximized PSNR [dB]")
    ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(fig_path, dpi=100, metadata={"Software": "mpibench"})
    plt.close(fig)


def generate_report(results_dir: Path | str, out: Path | str,
                    data_range: float | None = None) -> dict[str, Path]:
    """Build the report tree under `out`; returns the generated paths."""
    results_dir = Path(results_dir)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rows = parse_results(results_dir / "results.csv")
    if not any(r["status"] == "ok" for r in rows):
        raise ReportError("results contain no successful runs")
    if data_range is None:
        meta_path = results_dir / "sweep_meta.json"
        if meta_path.exists():
            data_range = float(json.loads(meta_path.read_text())["eval"]["data_range"])
        else:
            data_range = 100.0

    summary = best_rows(rows)
    files: dict[str, Path] = {}

    files["best_summary"] = out / "best_summary.csv"
    with open(files["best_summary"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for entry in summary:
            writer.writerow([_metric_cell(entry[c]) for c in SUMMARY_COLUMNS])

    psnr_cols = ("method", "pp_index", "best_eps_psnr", "eps_psnr_checkpoint",
                 "eps_psnr_params", "eps_psnr_seed")
    ssim_cols = ("method", "pp_index", "best_eps_ssim", "eps_ssim_checkpoint",
                 "eps_ssim_params", "eps_ssim_seed")
    lines = ["# Reconstruction benchmark report", "",
             f"Gray mapping for slices and figures: [0, {data_range!r}] to 0..255.",
             "", "## Best checkpoints by shift-maximized PSNR", ""]
    lines += _markdown_table(psnr_cols, summary)
    lines += ["", "## Best checkpoints by shift-maximized SSIM", ""]
    lines += _markdown_table(ssim_cols, summary)

    picks: list[tuple[str, Volume]] = []
    slice_lines = []
    for entry in summary:
        if entry["best_eps_psnr"] is None:
            continue
        vol = _best_volume(results_dir, entry, "eps_psnr")
        if vol is None:
            continue
        label = f"{entry['method']}_pp{entry['pp_index']}"
        picks.append((label, vol))
        for name, plane in central_slices(vol).items():
            p = write_pgm(out / f"{label}_{name}.pgm", plane, data_range)
            files[f"{label}_{name}"] = p
            slice_lines.append(f"- `{p.name}`")

    if picks:
        files["montage"] = out / "montage.png"
        _montage(files["montage"], picks, data_range)
        files["curves"] = out / "curves.png"
        _curves(files["curves"], rows, summary)
        lines += ["", "## Central slices of best-PSNR reconstructions", ""]
        lines += slice_lines
        lines += ["", "Figures: `montage.png` (slices), `curves.png` (PSNR vs checkpoint)."]
    else:
        lines += ["", "No saved traces found; slices and figures skipped."]

    files["report"] = out / "report.md"
    files["report"].write_text("\n".join(lines) + "\n")
    return files
