"""Command line front end.

Subcommands cover the full pipeline: simulate a dataset, preprocess it
into a reduced system, run a single reconstruction, evaluate a trace,
sweep parameter grids and render a report.  Every subcommand reads a JSON
config (--config), writes under a target directory (--out) and returns
exit code 0 on success, 2 for config errors, 3 for data errors and 4 when
run failures were recorded.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import configs
from .container import ContainerError, load_dataset, manifest_checksum, save_dataset
from .metrics import ShiftGrid, eps_metrics
from .operators import (
    LangevinModel,
    SpectralModel,
    sigma_for_snr_db,
    synth_measurement,
    synth_operator,
)
from .phantoms import phantom_from_dict, phantom_to_dict, rasterize_phantom
from .preprocess import PreprocessConfig, build_system, load_system, save_system
from .report import ReportError, generate_report
from .schedule import load_trace, save_trace
from .sweep import RunSpec, expand_method_params, run_sweep, solve_run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUN = 4


def _operator_model(op: dict):
    kind = op["kind"]
    fields = {k: v for k, v in op.items() if k not in ("kind", "coils")}
    if kind == "spectral":
        return SpectralModel(**fields)
    for key in ("drive_mT", "ratios"):
        if key in fields:
            fields[key] = tuple(fields[key])
    return LangevinModel(**fields)


def cmd_simulate(cfg: dict, args) -> int:
    grid = configs.grid_from_config(cfg["grid"])
    phantom = phantom_from_dict(cfg["phantom"])
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    model = _operator_model(cfg["operator"])
    ds = synth_operator(model, grid, coils=int(cfg["operator"].get("coils", 1)), seed=seed)
    truth = rasterize_phantom(phantom, grid, supersample=int(cfg.get("supersample", 5)))

    noise = cfg.get("noise", {})
    if "sigma" in noise and "snr_db" in noise:
        raise configs.ConfigError("give either sigma or snr_db, not both", "$.noise")
    if "sigma" in noise:
        sigma = float(noise["sigma"])
    else:
        sigma = sigma_for_snr_db(ds, truth, float(noise.get("snr_db", 20.0)))
    ds = synth_measurement(
        ds, truth, sigma,
        background_scale=float(noise.get("background_scale", 0.0)),
        seed=seed + 1,
        n_background=int(noise.get("n_background", 8)),
    )
    ds.meta["phantom"] = phantom_to_dict(phantom)
    save_dataset(ds, args.out)
    print(f"dataset {args.out}")
    print(f"checksum {manifest_checksum(args.out)}")
    return EXIT_OK


def cmd_preprocess(cfg: dict, args) -> int:
    ds = load_dataset(cfg["dataset"])
    pcfg = PreprocessConfig.from_dict({k: v for k, v in cfg.items() if k != "dataset"})
    system = build_system(ds, pcfg)
    save_system(system, args.out)
    note = " (rank clamped)" if system.rank_clamped else ""
    print(f"system {args.out}: {system.n_rows} rows from "
          f"{system.meta.get('surviving_rows')} surviving{note}")
    return EXIT_OK


def cmd_reconstruct(cfg: dict, args) -> int:
    system = load_system(cfg["system"])
    entry = cfg["method"]
    combos = expand_method_params(entry)
    if len(combos) != 1:
        raise configs.ConfigError(
            f"reconstruct needs exactly one parameter combination, got {len(combos)}",
            "$.method")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    run = RunSpec(entry["id"], 0, combos[0], seed)
    trace = solve_run(system, run)
    save_trace(trace, args.out)
    final = trace.final()
    print(f"trace {args.out}: {len(trace.checkpoints)} checkpoints, "
          f"final iteration {final.iteration}, fidelity {final.fidelity!r}")
    return EXIT_OK


def cmd_evaluate(cfg: dict, args) -> int:
    trace = load_trace(cfg["trace"])
    if "dataset" in cfg:
        ds = load_dataset(cfg["dataset"])
        grid = ds.grid
        phantom_dict = ds.meta.get("phantom")
        if phantom_dict is None:
            raise configs.ConfigError(
                "dataset records no phantom; give one in the config", "$.phantom")
    elif "phantom" in cfg and "grid" in cfg:
        phantom_dict = cfg["phantom"]
        grid = configs.grid_from_config(cfg["grid"])
    else:
        raise configs.ConfigError(
            "need either a dataset or a phantom plus grid", "$")
    phantom = phantom_from_dict(phantom_dict)
    shiftgrid = ShiftGrid(float(cfg.get("shift_extent_mm", 3.0)),
                          float(cfg.get("shift_step_mm", 0.5)))
    metrics = tuple(cfg.get("metrics", ["psnr", "ssim"]))
    data_range = float(cfg.get("data_range", 100.0))
    supersample = int(cfg.get("supersample", 5))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, last = [], None
    for ck in trace.checkpoints:
        last = eps_metrics(ck.volume, phantom, grid, shiftgrid,
                           data_range=data_range, supersample=supersample,
                           metrics=metrics)
        rows.append([ck.iteration, last.eps_psnr, last.eps_ssim,
                     last.unshifted_psnr, last.unshifted_ssim])
    with open(out / "quality.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "eps_psnr", "eps_ssim",
                         "unshifted_psnr", "unshifted_ssim"])
        for row in rows:
            writer.writerow(["" if v is None else repr(v) if isinstance(v, float) else v
                             for v in row])
    (out / "quality.json").write_text(last.to_json() + "\n")
    print(f"evaluated {len(rows)} checkpoints; final eps_psnr "
          f"{last.eps_psnr!r}, eps_ssim {last.eps_ssim!r}")
    return EXIT_OK


def cmd_sweep(cfg: dict, args) -> int:
    workers = args.workers if args.workers is not None else int(cfg.get("workers", 1))
    result = run_sweep(cfg, args.out, workers=workers)
    print(f"sweep {args.out}: {result.n_runs} runs, "
          f"{len(result.rows)} rows, {result.n_failures} failures")
    print(f"results {result.files['results']}")
    if result.n_failures:
        return EXIT_RUN
    return EXIT_OK


def cmd_report(cfg: dict, args) -> int:
    files = generate_report(cfg["results"], args.out, cfg.get("data_range"))
    print(f"report {files['report']}")
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "preprocess": cmd_preprocess,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpibench",
        description="Reconstruction benchmark pipeline for simulated 3D "
                    "magnetic particle imaging data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--workers", type=int, default=None,
                       help="parallel worker count (sweep)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = configs.load_config(args.config, args.command)
        return _COMMANDS[args.command](cfg, args)
    except (configs.ConfigError, ValueError, TypeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ContainerError, ReportError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except RuntimeError as exc:
        print(f"run error: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
