"""Command-line runner: ``sample``, ``stability`` and ``experiment`` subcommands.

Exit codes: 0 success, 2 configuration error, 3 runtime failure. Relative
output paths are resolved against ``$IMPLICIT_HMC_OUTPUT_DIR`` when it is set.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import numpy as np

from . import experiments
from .adapt import AdaptConfig, TuningError
from .diagnostics import summarize
from .integrator import (
    IMPLICIT_MIDPOINT,
    LEAPFROG,
    eigenvalue_moduli,
    leapfrog_update_matrix,
    midpoint_update_matrix,
)
from .linalg import sym_eigenvalues
from .model import ModelError, ModelSpec, default_initial_position, make_model
from .sampler import ChainOutput, SamplerConfig, config_echo, make_rng, run_chain
from .solver import NewtonKrylovConfig
from .system import MassMatrix

OUTPUT_DIR_ENV = "IMPLICIT_HMC_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

SAMPLES_HEADER_PREFIX = "draw"
DIAGNOSTICS_HEADER = ["draw", "tree_depth", "divergent", "energy", "accept_stat", "n_grad", "n_hvp"]
STABILITY_HEADER = ["h", "integrator", "h_max_leapfrog", "max_modulus", "status"]

SUMMARY_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["model", "n_draws", "config", "stepsize", "integrator", "unreliable", "warnings", "summary"],
    "properties": {
        "model": {"type": "string"},
        "n_draws": {"type": "integer", "minimum": 0},
        "config": {"type": "object"},
        "stepsize": {"type": "number", "exclusiveMinimum": 0},
        "integrator": {"enum": [LEAPFROG, IMPLICIT_MIDPOINT]},
        "unreliable": {"type": "boolean"},
        "warnings": {"type": "array", "items": {"type": "string"}},
        "adapt": {"type": ["object", "null"]},
        "summary": {
            "type": ["object", "null"],
            "required": [
                "mean", "sd", "ess", "avg_grad_per_step", "avg_hvp_per_step",
                "avg_work_per_step", "avg_tree_depth", "avg_ess",
                "work_per_effective_sample", "divergence_rate",
            ],
        },
    },
}


class ConfigError(ValueError):
    """A configuration problem; the message names the offending field."""


@dataclass(frozen=True)
class OutputConfig:
    samples_path: str = "samples.csv"
    diagnostics_path: str = "diagnostics.csv"
    summary_path: str = "summary.json"


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec
    mass_matrix: dict[str, Any]
    sampler: SamplerConfig
    solver: NewtonKrylovConfig
    adapt: AdaptConfig | None
    output: OutputConfig


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _expect_mapping(value, where: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{where}: expected an object")
    return value


def _check_keys(section: dict, allowed, where: str, required=()):
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}: unknown field")
    for key in required:
        if key not in section:
            raise ConfigError(f"{where}.{key}: missing required field")


def _build(cls, section: dict, where: str, required=()):
    names = [f.name for f in fields(cls)]
    _check_keys(section, names, where, required)
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _parse_model(raw) -> ModelSpec:
    section = _expect_mapping(raw, "model")
    _check_keys(section, ["kind", "parameters"], "model", ["kind"])
    params = section.get("parameters", {})
    _expect_mapping(params, "model.parameters")
    allowed = {"gaussian": ["covariance"], "banana": ["a", "b"], "funnel": ["n", "scale"]}
    kind = section["kind"]
    if kind not in allowed:
        raise ConfigError(f"model.kind: unknown kind {kind!r}")
    _check_keys(params, allowed[kind], "model.parameters")
    return ModelSpec(kind, params)


def _parse_mass(raw, dim: int) -> MassMatrix:
    section = _expect_mapping(raw, "mass_matrix")
    _check_keys(section, ["form", "values"], "mass_matrix", ["form"])
    try:
        if section["form"] == "identity":
            return MassMatrix.identity(dim)
        if "values" not in section:
            raise ConfigError("mass_matrix.values: missing required field")
        return MassMatrix(section["form"], section["values"], dim=dim)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"mass_matrix: {exc}") from exc


def parse_run_config(data: dict) -> RunConfig:
    data = _expect_mapping(data, "config")
    _check_keys(
        data, ["model", "mass_matrix", "sampler", "solver", "adapt", "output"], "config",
        ["model", "sampler"],
    )
    model = _parse_model(data["model"])
    sampler = _build(SamplerConfig, _expect_mapping(data["sampler"], "sampler"), "sampler", ["stepsize"])
    solver = _build(NewtonKrylovConfig, _expect_mapping(data.get("solver", {}), "solver"), "solver")
    adapt = None
    adapt_raw = data.get("adapt")
    if adapt_raw is not None:
        adapt_raw = _expect_mapping(adapt_raw, "adapt")
        if adapt_raw.get("h0") is not None:
            adapt = _build(AdaptConfig, adapt_raw, "adapt")
        else:
            _check_keys(adapt_raw, [f.name for f in fields(AdaptConfig)], "adapt")
    output = _build(OutputConfig, _expect_mapping(data.get("output", {}), "output"), "output")
    mass = _expect_mapping(data.get("mass_matrix", {"form": "identity"}), "mass_matrix")
    return RunConfig(model, mass, sampler, solver, adapt, output)


def load_json(path: str | os.PathLike) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


def resolve_output(path: str) -> Path:
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def write_samples(path: Path, chain: ChainOutput) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    dim = chain.draws.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([SAMPLES_HEADER_PREFIX] + [f"q{i + 1}" for i in range(dim)])
        for i, row in enumerate(chain.draws):
            writer.writerow([i] + [_fmt(v) for v in row])


def write_diagnostics(path: Path, chain: ChainOutput) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DIAGNOSTICS_HEADER)
        for i, d in enumerate(chain.diagnostics):
            writer.writerow(
                [i, d.tree_depth, int(d.divergent), _fmt(d.energy), _fmt(d.accept_stat),
                 d.work.n_grad, d.work.n_hvp]
            )


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def build_summary(chain: ChainOutput) -> dict[str, Any]:
    warnings = []
    if chain.unreliable:
        warnings.append("more than half of the recorded draws were divergent; chain is unreliable")
    table = summarize(chain) if chain.draws.shape[0] > 0 else None
    return _jsonable(
        {
            "model": chain.model_name,
            "n_draws": int(chain.draws.shape[0]),
            "config": config_echo(chain.config),
            "stepsize": chain.metadata["stepsize"],
            "integrator": chain.metadata["integrator"],
            "unreliable": chain.unreliable,
            "warnings": warnings,
            "adapt": chain.metadata.get("adapt"),
            "summary": None if table is None else table.to_dict(),
        }
    )


def cmd_sample(config_path: str) -> int:
    try:
        cfg = parse_run_config(load_json(config_path))
        model = make_model(cfg.model)
        mass = _parse_mass(cfg.mass_matrix, model.dim)
    except (ConfigError, ModelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        chain = run_chain(
            model, mass, cfg.sampler, make_rng(cfg.sampler.seed), default_initial_position(cfg.model, model),
            cfg.solver, cfg.adapt,
        )
        summary = build_summary(chain)
        write_samples(resolve_output(cfg.output.samples_path), chain)
        write_diagnostics(resolve_output(cfg.output.diagnostics_path), chain)
        summary_path = resolve_output(cfg.output.summary_path)
        summary_path.parent.mkdir(parents=True, exist_ok=True)
        summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    except (TuningError, OSError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if chain.unreliable:
        print("warning: chain flagged unreliable (majority of draws divergent)", file=sys.stderr)
    return EXIT_OK


def stability_rows(precision: np.ndarray, mass: MassMatrix, h_grid) -> list[dict[str, Any]]:
    """Update-matrix eigenvalue moduli for both integrators over a stepsize grid.

    Leapfrog status follows ``h * omega_max`` against 2, where ``omega_max^2``
    is the largest eigenvalue of the mass-preconditioned precision.
    """
    chol_inv = np.linalg.inv(mass.cholesky)
    omega2 = sym_eigenvalues(chol_inv @ precision @ chol_inv.T)
    h_max = 2.0 / math.sqrt(omega2[-1])
    rows = []
    for h in h_grid:
        h = float(h)
        lf_mod = float(eigenvalue_moduli(leapfrog_update_matrix(precision, mass, h)).max())
        x = h / h_max
        if abs(x - 1.0) <= 1e-12:
            status = "boundary"
        else:
            status = "stable" if x < 1.0 else "unstable"
        rows.append(dict(h=h, integrator=LEAPFROG, h_max_leapfrog=h_max, max_modulus=lf_mod, status=status))
        mid_mod = float(eigenvalue_moduli(midpoint_update_matrix(precision, mass, h)).max())
        mid_status = "stable" if mid_mod <= 1.0 + 1e-10 else "unstable"
        rows.append(
            dict(h=h, integrator=IMPLICIT_MIDPOINT, h_max_leapfrog=h_max, max_modulus=mid_mod, status=mid_status)
        )
    return rows


def cmd_stability(config_path: str) -> int:
    try:
        data = _expect_mapping(load_json(config_path), "config")
        _check_keys(data, ["model", "mass_matrix", "h_grid", "output_path"], "config", ["model", "h_grid"])
        spec = _parse_model(data["model"])
        if spec.kind != "gaussian":
            raise ConfigError("model.kind: stability analysis needs a gaussian model (linear system)")
        grid = data["h_grid"]
        if not isinstance(grid, list) or not grid:
            raise ConfigError("h_grid: expected a nonempty list of stepsizes")
        if any(isinstance(h, bool) or not isinstance(h, (int, float)) or h <= 0 for h in grid):
            raise ConfigError("h_grid: stepsizes must be positive numbers")
        model = make_model(spec)
        mass = _parse_mass(data.get("mass_matrix", {"form": "identity"}), model.dim)
    except (ConfigError, ModelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    rows = stability_rows(model.precision, mass, grid)
    out_path = data.get("output_path")
    fh = open(resolve_output(out_path), "w", newline="") if out_path else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(STABILITY_HEADER)
        for row in rows:
            writer.writerow(
                [_fmt(row["h"]), row["integrator"], _fmt(row["h_max_leapfrog"]),
                 _fmt(row["max_modulus"]), row["status"]]
            )
    finally:
        if out_path:
            fh.close()
    return EXIT_OK


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_comparison(out: Path, prefix: str, result: experiments.ComparisonResult) -> None:
    draw_rows = []
    for label, chain in result.chains.items():
        for i, row in enumerate(chain.draws):
            draw_rows.append([label, i] + [_fmt(v) for v in row])
    dim = next(iter(result.chains.values())).draws.shape[1]
    _write_csv(out / f"{prefix}_draws.csv", ["method", "draw"] + [f"q{i + 1}" for i in range(dim)], draw_rows)

    labels = list(result.summaries)
    table_rows = [
        ("stepsize", lambda s, c: c.config.stepsize),
        ("avg_grad_per_step", lambda s, c: s.avg_grad_per_step),
        ("avg_hvp_per_step", lambda s, c: s.avg_hvp_per_step),
        ("avg_work_per_step", lambda s, c: s.avg_work_per_step),
        ("avg_tree_depth", lambda s, c: s.avg_tree_depth),
        ("avg_ess", lambda s, c: s.avg_ess),
        ("work_per_effective_sample", lambda s, c: s.work_per_effective_sample),
        ("divergence_rate", lambda s, c: s.divergence_rate),
    ]
    rows = [
        [name] + [_fmt(get(result.summaries[k], result.chains[k])) for k in labels]
        for name, get in table_rows
    ]
    _write_csv(out / f"{prefix}_summary.csv", ["row"] + labels, rows)
    payload = {
        k: {"stepsize": result.chains[k].config.stepsize, **result.summaries[k].to_dict()} for k in labels
    }
    (out / f"{prefix}_summary.json").write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def cmd_experiment(name: str, out_dir: str | None = None, seed: int = 1) -> int:
    if name not in experiments.EXPERIMENTS:
        print(f"config error: unknown experiment {name!r}; choose from {experiments.EXPERIMENTS}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(out_dir or os.environ.get(OUTPUT_DIR_ENV) or "experiment_output")
    try:
        out.mkdir(parents=True, exist_ok=True)
        if name == "gaussian_treedepth":
            rows = experiments.gaussian_treedepth(seed=seed)
            _write_csv(
                out / "gaussian_treedepth.csv",
                ["rho", "one_minus_rho", "method", "stepsize", "avg_tree_depth", "divergences"],
                [
                    [_fmt(r.rho), _fmt(1.0 - r.rho), r.method, _fmt(r.stepsize), _fmt(r.avg_tree_depth), r.divergences]
                    for r in rows
                ],
            )
        elif name == "banana":
            _write_comparison(out, "banana", experiments.banana(seed=seed))
        else:
            result = experiments.funnel(seed=seed)
            _write_comparison(out, "funnel", result)
            for label, table in result.summaries.items():
                print(table.render(label))
    except (OSError, TuningError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {name} outputs to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="implicit-hmc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("sample", help="run a chain from a JSON config")
    p.add_argument("--config", required=True)
    p = sub.add_parser("stability", help="linear stability sweep for a Gaussian target")
    p.add_argument("--config", required=True)
    p = sub.add_parser("experiment", help="rerun a benchmark experiment")
    p.add_argument("--name", required=True, choices=experiments.EXPERIMENTS)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=1)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "sample":
        return cmd_sample(args.config)
    if args.command == "stability":
        return cmd_stability(args.config)
    return cmd_experiment(args.name, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
