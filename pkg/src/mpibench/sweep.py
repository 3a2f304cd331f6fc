"""Parameter sweeps over the solver families.

A sweep expands a config into a deterministic work queue of (method,
preprocessing, parameters, seed) runs, executes them across a worker
pool, scores every checkpoint against the analytic phantom and writes
sorted delimited results plus per-run traces.  Row content is independent
of the worker count; wall-clock durations go to a separate timings file
so the main results are byte-reproducible.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .container import load_dataset
from .dip import AutoencoderSpec, DipConfig, dip_reconstruct
from .kaczmarz import kaczmarz_l1, kaczmarz_l1l2, kaczmarz_l2, select_rows_by_norm
from .metrics import ShiftGrid, eps_metrics
from .phantoms import phantom_from_dict
from .preprocess import PreprocessConfig, build_system, load_system, save_system
from .schedule import SolverTrace, default_schedule, save_trace
from .variational import PenaltyConfig, var_solve
from .volume import GridSpec

PENALTY_GRID_SIZE = 40

METHOD_IDS = (
    "DIP-Dl1",
    "KACZ-l2",
    "KACZ-l1l2",
    "KACZ-l1",
    "KACZ-TSVD-l1",
    "VAR-D1-Pl1",
    "VAR-D1-Pl2",
    "VAR-D1-Ptv",
    "VAR-D2-Pl1",
    "VAR-D2-Pl2",
    "VAR-D2-Ptv",
)

RESULT_COLUMNS = (
    "run_id", "method", "pp_index", "pp_rank", "pp_snr_threshold",
    "pp_whitening", "seed", "params", "checkpoint", "eps_psnr", "eps_ssim",
    "unshifted_psnr", "unshifted_ssim", "status", "error",
)


def penalty_grid(n: int = PENALTY_GRID_SIZE) -> np.ndarray:
    """The geometric parameter grid {0.5^(i-1), i = 1..n}."""
    if n < 1:
        raise ValueError(f"grid size must be positive, got {n}")
    return 0.5 ** np.arange(n, dtype=np.float64)


def penalty_value(index: int) -> float:
    """Grid value for a 1-based index."""
    if not 1 <= index <= PENALTY_GRID_SIZE:
        raise ValueError(f"grid index must be in 1..{PENALTY_GRID_SIZE}, got {index}")
    return float(0.5 ** (index - 1))


def param_json(params: dict) -> str:
    return json.dumps(params, sort_keys=True, separators=(",", ":"))


def make_run_id(method: str, pp_index: int, params: dict, seed: int) -> str:
    digest = hashlib.sha256(param_json(params).encode()).hexdigest()[:8]
    return f"{method}_pp{pp_index}_s{seed}_{digest}"


@dataclass(frozen=True)
class RunSpec:
    """One solver execution within a sweep."""

    method: str
    pp_index: int
    params: dict
    seed: int

    @property
    def run_id(self) -> str:
        return make_run_id(self.method, self.pp_index, self.params, self.seed)


@dataclass
class SweepResult:
    rows: list[dict]
    n_runs: int
    n_failures: int
    out: Path
    files: dict = field(default_factory=dict)


def _values_from_entry(entry: dict, name: str, default: list | None = None) -> list[float]:
    """Resolve `<name>_indices` (1-based grid indices) or `<name>_values`."""
    idx_key, val_key = f"{name}_indices", f"{name}_values"
    if idx_key in entry and val_key in entry:
        raise ValueError(f"give either {idx_key} or {val_key}, not both")
    if idx_key in entry:
        return [penalty_value(int(i)) for i in entry[idx_key]]
    if val_key in entry:
        return [float(v) for v in entry[val_key]]
    if default is None:
        raise ValueError(f"method entry {entry.get('id')!r} needs {idx_key} or {val_key}")
    return default


def expand_method_params(entry: dict) -> list[dict]:
    """All parameter combinations for one method entry, in grid order."""
    method = entry["id"]
    if method not in METHOD_IDS:
        raise ValueError(f"unknown method id {method!r}")
    if method == "KACZ-l2":
        sweeps = int(entry.get("sweeps", 500))
        return [{"rho": r, "sweeps": sweeps} for r in _values_from_entry(entry, "rho")]
    if method == "KACZ-l1l2":
        sweeps = int(entry.get("sweeps", 500))
        rhos = _values_from_entry(entry, "rho")
        lams = _values_from_entry(entry, "lambda")
        return [{"rho": r, "lambda": l, "sweeps": sweeps} for r, l in product(rhos, lams)]
    if method == "KACZ-l1":
        sweeps = int(entry.get("sweeps", 500))
        return [{"lambda": l, "sweeps": sweeps} for l in _values_from_entry(entry, "lambda")]
    if method == "KACZ-TSVD-l1":
        sweeps = int(entry.get("sweeps", 500))
        kept = [int(k) for k in entry.get("rows_kept", [64])]
        lams = _values_from_entry(entry, "lambda")
        return [{"rows_kept": k, "lambda": l, "sweeps": sweeps} for k, l in product(kept, lams)]
    if method == "DIP-Dl1":
        iters = int(entry.get("iterations", 500))
        lrs = [float(v) for v in entry.get("lr_values", [1e-3])]
        channels = [int(c) for c in entry.get("channels", [64, 128, 256])]
        return [{"lr": lr, "iterations": iters, "channels": channels} for lr in lrs]
    # VAR-D{p}-P{kind}
    iters = int(entry.get("iterations", 500))
    lr = float(entry.get("lr", 1e-2))
    return [
        {"lambda": l, "iterations": iters, "lr": lr}
        for l in _values_from_entry(entry, "lambda")
    ]


def run_checkpoint_count(params: dict) -> int:
    """Number of checkpoints a successful run with these params will emit."""
    cap = int(params.get("sweeps", params.get("iterations")))
    return len(default_schedule(cap))


def expand_runs(cfg: dict) -> list[RunSpec]:
    seeds = [int(s) for s in cfg.get("seeds", [0])]
    n_pp = len(cfg["preprocess"])
    runs = []
    for entry in cfg["methods"]:
        pp_indices = [int(i) for i in entry.get("pp_indices", range(n_pp))]
        for bad in (i for i in pp_indices if not 0 <= i < n_pp):
            raise ValueError(f"pp_index {bad} out of range for {n_pp} preprocess configs")
        for params in expand_method_params(entry):
            for pp_index in pp_indices:
                for seed in seeds:
                    runs.append(RunSpec(entry["id"], pp_index, params, seed))
    return runs


def _var_settings(method: str) -> tuple[int, str]:
    # "VAR-D{p}-P{kind}" -> (p, penalty kind)
    d_part, p_part = method.split("-")[1:]
    kind = {"Pl1": "l1", "Pl2": "l2", "Ptv": "tv"}[p_part]
    return int(d_part[1:]), kind


def solve_run(sys, run: RunSpec) -> SolverTrace:
    """Dispatch one RunSpec to its solver."""
    p = run.params
    if run.method == "KACZ-l2":
        return kaczmarz_l2(sys, rho=p["rho"], sweeps=p["sweeps"])
    if run.method == "KACZ-l1l2":
        return kaczmarz_l1l2(sys, rho=p["rho"], lam=p["lambda"], sweeps=p["sweeps"])
    if run.method == "KACZ-l1":
        return kaczmarz_l1(sys, lam=p["lambda"], sweeps=p["sweeps"])
    if run.method == "KACZ-TSVD-l1":
        sub = select_rows_by_norm(sys, p["rows_kept"])
        return kaczmarz_l1(sub, lam=p["lambda"], sweeps=p["sweeps"])
    if run.method == "DIP-Dl1":
        cfg = DipConfig(lr=p["lr"], iterations=p["iterations"], fidelity_p=1, seed=run.seed)
        spec = AutoencoderSpec(encoder_channels=tuple(p["channels"]), seed=run.seed)
        return dip_reconstruct(sys, cfg, spec)
    if run.method.startswith("VAR-"):
        fidelity_p, kind = _var_settings(run.method)
        pen = PenaltyConfig(kind=kind, lam=p["lambda"])
        return var_solve(sys, fidelity_p, pen, iterations=p["iterations"], lr=p["lr"])
    raise ValueError(f"unknown method id {run.method!r}")


_SYSTEM_CACHE: dict[str, object] = {}


def _cached_system(path: str):
    if path not in _SYSTEM_CACHE:
        _SYSTEM_CACHE.clear()
        _SYSTEM_CACHE[path] = load_system(path)
    return _SYSTEM_CACHE[path]


def _format_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _execute_run(payload: dict) -> dict:
    """Worker entry point: solve, score every checkpoint, save the trace."""
    run = RunSpec(**payload["run"])
    pp = payload["pp_echo"]
    base = {
        "run_id": run.run_id,
        "method": run.method,
        "pp_index": run.pp_index,
        "pp_rank": pp["rank"],
        "pp_snr_threshold": pp["snr_threshold"],
        "pp_whitening": pp["whitening"],
        "seed": run.seed,
        "params": param_json(run.params),
    }
    t0 = time.perf_counter()
    try:
        sys = _cached_system(payload["system_path"])
        trace = solve_run(sys, run)
        phantom = phantom_from_dict(payload["phantom"])
        grid = GridSpec.from_dict(payload["grid"])
        ev = payload["eval"]
        shiftgrid = ShiftGrid(ev["shift_extent_mm"], ev["shift_step_mm"])
        rows = []
        for ck in trace.checkpoints:
            rep = eps_metrics(
                ck.volume, phantom, grid, shiftgrid,
                data_range=ev["data_range"], supersample=ev["supersample"],
                metrics=tuple(ev["metrics"]),
            )
            rows.append(dict(
                base, checkpoint=ck.iteration,
                eps_psnr=rep.eps_psnr, eps_ssim=rep.eps_ssim,
                unshifted_psnr=rep.unshifted_psnr, unshifted_ssim=rep.unshifted_ssim,
                status="ok", error=None,
            ))
        if payload["traces_dir"] is not None:
            save_trace(trace, Path(payload["traces_dir"]) / run.run_id)
    except Exception as exc:  # recorded per-row, sweep continues
        rows = [dict(
            base, checkpoint=None, eps_psnr=None, eps_ssim=None,
            unshifted_psnr=None, unshifted_ssim=None,
            status="failed", error=f"{type(exc).__name__}: {exc}",
        )]
    return {"rows": rows, "wall_seconds": time.perf_counter() - t0,
            "run_id": run.run_id}


def _row_sort_key(row: dict):
    return (
        row["method"], row["pp_index"], row["params"], row["seed"],
        row["checkpoint"] if row["checkpoint"] is not None else -1,
    )


def _write_csv(path: Path, columns: tuple[str, ...], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row[c]) for c in columns])


def best_rows(rows: list[dict]) -> list[dict]:
    """Best eps_psnr and eps_ssim per (method, pp_index) over ok rows."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        if row["status"] != "ok":
            continue
        groups.setdefault((row["method"], row["pp_index"]), []).append(row)
    out = []
    for (method, pp_index), grp in sorted(groups.items()):
        entry = {"method": method, "pp_index": pp_index}
        for metric in ("eps_psnr", "eps_ssim"):
            scored = [r for r in grp if r[metric] is not None]
            if scored:
                best = max(scored, key=lambda r: r[metric])
                entry[f"best_{metric}"] = best[metric]
                entry[f"{metric}_checkpoint"] = best["checkpoint"]
                entry[f"{metric}_params"] = best["params"]
                entry[f"{metric}_seed"] = best["seed"]
            else:
                entry[f"best_{metric}"] = None
                entry[f"{metric}_checkpoint"] = None
                entry[f"{metric}_params"] = None
                entry[f"{metric}_seed"] = None
        out.append(entry)
    return out


SUMMARY_COLUMNS = (
    "method", "pp_index",
    "best_eps_psnr", "eps_psnr_checkpoint", "eps_psnr_params", "eps_psnr_seed",
    "best_eps_ssim", "eps_ssim_checkpoint", "eps_ssim_params", "eps_ssim_seed",
)


def _write_summary_markdown(path: Path, summary: list[dict]) -> None:
    lines = ["# Sweep summary", "", "Best checkpoint per method and preprocessing config.", ""]
    header = "| " + " | ".join(SUMMARY_COLUMNS) + " |"
    rule = "|" + "|".join([" --- "] * len(SUMMARY_COLUMNS)) + "|"
    lines += [header, rule]
    for entry in summary:
        lines.append("| " + " | ".join(_format_cell(entry[c]) for c in SUMMARY_COLUMNS) + " |")
    path.write_text("\n".join(lines) + "\n")


def run_sweep(cfg: dict, out: Path | str, workers: int = 1) -> SweepResult:
    """Execute a sweep config and write results under `out`.

    Emits results.csv (sorted, no wall times), timings.csv, summary.csv,
    summary.md, preprocessed systems under pp<i>/ and traces under
    traces/<run_id>/.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ds = load_dataset(cfg["dataset"])
    phantom_dict = cfg.get("phantom") or ds.meta.get("phantom")
    if phantom_dict is None:
        raise ValueError("no phantom in config and none recorded in the dataset")
    phantom_from_dict(phantom_dict)  # validate early

    system_paths, pp_echoes = [], []
    for i, pp in enumerate(cfg["preprocess"]):
        pcfg = PreprocessConfig.from_dict(pp)
        system = build_system(ds, pcfg)
        system_paths.append(str(save_system(system, out / f"pp{i}").parent))
        pp_echoes.append({
            "rank": pcfg.rank, "snr_threshold": pcfg.snr_threshold,
            "whitening": pcfg.whitening,
        })

    ev = {
        "metrics": list(cfg.get("metrics", ["psnr", "ssim"])),
        "data_range": float(cfg.get("data_range", 100.0)),
        "shift_extent_mm": float(cfg.get("shift_extent_mm", 3.0)),
        "shift_step_mm": float(cfg.get("shift_step_mm", 0.5)),
        "supersample": int(cfg.get("supersample", 5)),
    }
    traces_dir = None
    if cfg.get("save_traces", True):
        traces_dir = out / "traces"
        traces_dir.mkdir(exist_ok=True)

    runs = expand_runs(cfg)
    payloads = [
        {
            "run": {"method": r.method, "pp_index": r.pp_index,
                    "params": r.params, "seed": r.seed},
            "system_path": system_paths[r.pp_index],
            "pp_echo": pp_echoes[r.pp_index],
            "phantom": phantom_dict,
            "grid": ds.grid.to_dict(),
            "eval": ev,
            "traces_dir": str(traces_dir) if traces_dir else None,
        }
        for r in runs
    ]

    if workers <= 1:
        outcomes = [_execute_run(p) for p in payloads]
    else:
        with ProcessPoolExecutor(
            max_workers=workers, mp_context=get_context("spawn")
        ) as pool:
            outcomes = list(pool.map(_execute_run, payloads))

    rows = [row for oc in outcomes for row in oc["rows"]]
    rows.sort(key=_row_sort_key)
    timings = sorted(
        ({"run_id": oc["run_id"], "wall_seconds": oc["wall_seconds"]} for oc in outcomes),
        key=lambda t: t["run_id"],
    )
    summary = best_rows(rows)

    files = {
        "results": out / "results.csv",
        "timings": out / "timings.csv",
        "summary_csv": out / "summary.csv",
        "summary_md": out / "summary.md",
        "meta": out / "sweep_meta.json",
    }
    files["meta"].write_text(json.dumps(
        {"eval": ev, "preprocess": pp_echoes, "methods": cfg["methods"],
         "seeds": [int(s) for s in cfg.get("seeds", [0])]},
        indent=2, sort_keys=True,
    ) + "\n")
    _write_csv(files["results"], RESULT_COLUMNS, rows)
    _write_csv(files["timings"], ("run_id", "wall_seconds"), timings)
    _write_csv(files["summary_csv"], SUMMARY_COLUMNS, summary)
    _write_summary_markdown(files["summary_md"], summary)

    n_failures = sum(1 for row in rows if row["status"] == "failed")
    return SweepResult(rows=rows, n_runs=len(runs), n_failures=n_failures,
                       out=out, files=files)
