"""Command-line experiment driver.

Subcommands select the mode; every run directory receives a config echo
(config.txt) pinning seeds and the package version, so any artifact can be
regenerated bit-identically.  Exit codes: 0 success, 1 configuration error,
2 runtime error, 3 I/O error.

    photonloop hbt --config desk.cfg --set t_p=0.01 --seed 7 --out runs/hbt
    photonloop sweep --set sweep_variable=t_p --set M=2000 --out runs/tp
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

from . import __version__
from .config import ConfigError, ExperimentConfig, parse_config
from .correlate import (
    correlation_from_histogram,
    hbt_correlate,
    hom_correlate,
    save_histogram,
)
from .ensemble import EnsembleResult, run_ensemble, run_hom_ensemble
from .oracle import oracle_report


def _resolve_jobs(parallelism: int) -> int:
    return parallelism if parallelism > 0 else (os.cpu_count() or 1)


def _write_population_csv(path, result: EnsembleResult) -> None:
    with open(path, "w") as f:
        f.write("t_over_gamma,excited_population,stderr\n")
        for t, m, s in zip(
            result.t_grid, result.mean_population, result.population_stderr
        ):
            f.write(f"{t:.10g},{m:.10g},{s:.10g}\n")


def _diagnostics(result: EnsembleResult) -> dict:
    return {
        "truncation_mean": result.truncation_mean,
        "truncation_max": result.truncation_max,
        "closure_dev_max": result.closure_dev_max,
        "norm_dev_max": result.norm_dev_max,
        "pjump_max": result.pjump_max,
        "mean_clicks": result.mean_clicks,
        "warnings": result.warnings,
    }


def _base_summary(cfg: ExperimentConfig) -> dict:
    return {
        "version": __version__,
        "mode": cfg.mode,
        "M": cfg.M,
        "master_seed": cfg.master_seed,
        "feedback": "on" if cfg.params.feedback_enabled else "off",
    }


def run_single(cfg: ExperimentConfig, outdir: str) -> dict:
    """Execute one non-sweep run, write its artifacts, return the summary."""
    os.makedirs(outdir, exist_ok=True)
    t_start = time.perf_counter()
    summary = _base_summary(cfg)

    if cfg.mode == "oracle":
        summary["oracle"] = oracle_report(cfg.params)
    else:
        jobs = _resolve_jobs(cfg.parallelism)
        if cfg.mode == "hom":
            result = run_hom_ensemble(
                cfg.params, cfg.M, cfg.master_seed, parallelism=jobs
            )
            hist = hom_correlate(result)
            corr = correlation_from_histogram(hist, "hom")
        else:
            result = run_ensemble(
                cfg.params, cfg.M, cfg.master_seed, parallelism=jobs, n_copies=1
            )
            hist = corr = None
            if cfg.mode == "hbt":
                hist = hbt_correlate(result, assign_seed=cfg.master_seed)
                corr = correlation_from_histogram(hist, "hbt")
        summary["efficiency"] = result.efficiency
        summary["efficiency_stderr"] = result.efficiency_stderr
        summary["diagnostics"] = _diagnostics(result)
        _write_population_csv(os.path.join(outdir, "population.csv"), result)
        if hist is not None:
            save_histogram(hist, os.path.join(outdir, "histogram.csv"))
            summary.update(corr.to_dict())
            if corr.indistinguishability is not None:
                summary["indistinguishability_err"] = corr.g2_err

    summary["runtime_seconds"] = round(time.perf_counter() - t_start, 3)
    with open(os.path.join(outdir, "config.txt"), "w") as f:
        f.write(cfg.echo())
    with open(os.path.join(outdir, "results.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return summary


def _point_config(
    cfg: ExperimentConfig, value: float, feedback_on: bool, mode: str
) -> ExperimentConfig:
    """Specialize the sweep base config to one (value, feedback) run."""
    p = cfg.params
    var = cfg.sweep_variable
    if var == "t_p":
        pulse = dataclasses.replace(p.pulse, t_p=value, t0=None)
        params = dataclasses.replace(p, pulse=pulse, feedback_enabled=feedback_on)
    elif var == "tau":
        # keep the time step near the base config's dt
        n_bins = max(1, round(value / p.dt))
        params = dataclasses.replace(
            p, tau=value, N=n_bins, feedback_enabled=feedback_on
        )
    else:
        params = dataclasses.replace(p, **{var: value}, feedback_enabled=feedback_on)
    return dataclasses.replace(cfg, mode=mode, params=params)


def run_sweep(cfg: ExperimentConfig, outdir: str) -> dict:
    """One HBT + one HOM run per (value, feedback) point; summary.csv at the end.

    Completed points (results.json present) are skipped, so an interrupted
    sweep resumes where it stopped and re-running a finished sweep only
    rewrites the identical summary.
    """
    os.makedirs(outdir, exist_ok=True)
    settings = (
        ("on", "off") if cfg.sweep_feedback == "both" else (cfg.sweep_feedback,)
    )
    rows = []
    for i, value in enumerate(cfg.sweep_values):
        for fb in settings:
            point_dir = os.path.join(
                outdir, f"{i:02d}_{cfg.sweep_variable}={value:g}_{fb}"
            )
            row = {"value": value, "feedback": fb}
            for mode in ("hbt", "hom"):
                run_dir = os.path.join(point_dir, mode)
                res_path = os.path.join(run_dir, "results.json")
                if os.path.exists(res_path):
                    with open(res_path) as f:
                        summary = json.load(f)
                else:
                    pcfg = _point_config(cfg, value, fb == "on", mode)
                    summary = run_single(pcfg, run_dir)
                if mode == "hbt":
                    row["g2"] = summary["g2"]
                    row["g2_err"] = summary["g2_err"]
                    row["eta"] = summary["efficiency"]
                else:
                    row["I"] = summary["indistinguishability"]
                    row["I_err"] = summary["indistinguishability_err"]
            rows.append(row)

    summary_path = os.path.join(outdir, "summary.csv")
    with open(summary_path, "w") as f:
        f.write("value,feedback,g2,g2_err,I,I_err,eta\n")
        for r in rows:
            f.write(
                f"{r['value']:.10g},{r['feedback']},{r['g2']:.10g},"
                f"{r['g2_err']:.10g},{r['I']:.10g},{r['I_err']:.10g},"
                f"{r['eta']:.10g}\n"
            )
    with open(os.path.join(outdir, "config.txt"), "w") as f:
        f.write(cfg.echo())
    return {"summary_csv": summary_path, "rows": len(rows)}


def run_experiment(cfg: ExperimentConfig) -> dict:
    if cfg.mode == "sweep":
        return run_sweep(cfg, cfg.output_dir)
    return run_single(cfg, cfg.output_dir)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="photonloop",
        description="Pulsed-emitter feedback-loop trajectory experiments",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for mode, blurb in (
        ("population", "excited-state population vs time"),
        ("hbt", "intensity-interferometer histogram and g2(0)"),
        ("hom", "two-source interference histogram and indistinguishability"),
        ("oracle", "Markovian reference values (feedback-off only)"),
        ("sweep", "parameter sweep with summary CSV"),
    ):
        sp = sub.add_parser(mode, help=blurb)
        sp.add_argument("--config", metavar="PATH", help="key=value config file")
        sp.add_argument(
            "--set",
            metavar="KEY=VALUE",
            action="append",
            default=[],
            dest="assignments",
            help="override one config key (repeatable)",
        )
        sp.add_argument("--seed", type=int, help="override master_seed")
        sp.add_argument("--jobs", type=int, help="override parallelism (0 = all cores)")
        sp.add_argument("--out", metavar="DIR", help="override output_dir")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    overrides: dict[str, str] = {"mode": args.command}
    for item in args.assignments:
        if "=" not in item:
            print(f"error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return 1
        key, _, val = item.partition("=")
        overrides[key.strip()] = val.strip()
    if args.seed is not None:
        overrides["master_seed"] = str(args.seed)
    if args.jobs is not None:
        overrides["parallelism"] = str(args.jobs)
    if args.out is not None:
        overrides["output_dir"] = args.out

    try:
        text = ""
        if args.config is not None:
            with open(args.config, encoding="utf-8") as f:
                text = f.read()
    except OSError as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return 3

    try:
        cfg = parse_config(text, overrides)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    try:
        outcome = run_experiment(cfg)
    except OSError as e:
        print(f"error: I/O failure: {e}", file=sys.stderr)
        return 3
    except Exception as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2

    if cfg.mode == "sweep":
        print(f"wrote {outcome['rows']} summary rows to {outcome['summary_csv']}")
    elif cfg.mode == "oracle":
        print(json.dumps(outcome["oracle"], indent=2, sort_keys=True))
    else:
        parts = [f"mode={cfg.mode}"]
        for key in ("g2", "indistinguishability", "efficiency"):
            if key in outcome:
                parts.append(f"{key}={outcome[key]:.6g}")
        print("  ".join(parts), f"artifacts={cfg.output_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
