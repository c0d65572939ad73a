"""Desk-scale reruns of the three benchmark experiments with pinned seeds.

* ``gaussian_treedepth``: average NUTS tree depth against ``1 - rho`` for the
  correlated 2-D Gaussian. Leapfrog uses ``0.9 * 2 / sqrt(lambda_max)``;
  midpoint uses ``h = 6``.
* ``banana``: 1000 draws per method. The leapfrog stepsize comes from warmup
  halving; midpoint uses ten times that stepsize.
* ``funnel``: 1000 draws per method on the 11-dimensional funnel with
  ``h = 0.003`` (leapfrog) and ``h = 0.2`` (midpoint), summarized per method.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adapt import tune_stepsize
from .diagnostics import SummaryTable, summarize
from .integrator import IMPLICIT_MIDPOINT, LEAPFROG, stability_report
from .model import banana_model, correlated_gaussian, funnel_model
from .sampler import ChainOutput, SamplerConfig, make_rng, run_chain
from .system import MassMatrix

EXPERIMENTS = ("gaussian_treedepth", "banana", "funnel")
METHOD_LABELS = {LEAPFROG: "lfNUTS", IMPLICIT_MIDPOINT: "iNUTS"}

TREEDEPTH_RHOS = (0.5, 0.9, 0.99, 0.999)
TREEDEPTH_MIDPOINT_H = 6.0
TREEDEPTH_LEAPFROG_FRACTION = 0.9

FUNNEL_N = 10
FUNNEL_STEPSIZES = {LEAPFROG: 0.003, IMPLICIT_MIDPOINT: 0.2}
FUNNEL_MAX_TREE_DEPTH = 10

BANANA_A, BANANA_B = 1.0, 100.0
BANANA_H0 = 1.0
BANANA_MIDPOINT_FACTOR = 10.0


@dataclass
class TreeDepthRow:
    rho: float
    method: str
    stepsize: float
    avg_tree_depth: float
    divergences: int


def gaussian_treedepth(
    rhos=TREEDEPTH_RHOS, n_samples: int = 200, n_warmup: int = 20, seed: int = 1
) -> list[TreeDepthRow]:
    rows = []
    for k, rho in enumerate(rhos):
        model = correlated_gaussian(rho)
        mass = MassMatrix.identity(2)
        h_lf = float(TREEDEPTH_LEAPFROG_FRACTION * stability_report(model.precision).h_max_leapfrog)
        for integrator, h in ((LEAPFROG, h_lf), (IMPLICIT_MIDPOINT, TREEDEPTH_MIDPOINT_H)):
            cfg = SamplerConfig("nuts", integrator, h, n_samples=n_samples, n_warmup=n_warmup, seed=seed)
            chain = run_chain(model, mass, cfg, make_rng(seed, k))
            depth = float(np.mean([d.tree_depth for d in chain.diagnostics]))
            rows.append(
                TreeDepthRow(rho, METHOD_LABELS[integrator], h, depth, chain.metadata["divergences"])
            )
    return rows


@dataclass
class ComparisonResult:
    chains: dict[str, ChainOutput] = field(default_factory=dict)
    summaries: dict[str, SummaryTable] = field(default_factory=dict)


def funnel(
    n_samples: int = 1000, n_warmup: int = 100, seed: int = 1, n: int = FUNNEL_N
) -> ComparisonResult:
    model = funnel_model(n)
    mass = MassMatrix.identity(model.dim)
    result = ComparisonResult()
    for chain_id, (integrator, h) in enumerate(FUNNEL_STEPSIZES.items()):
        cfg = SamplerConfig(
            "nuts", integrator, h,
            max_tree_depth=FUNNEL_MAX_TREE_DEPTH, n_samples=n_samples, n_warmup=n_warmup, seed=seed,
        )
        chain = run_chain(model, mass, cfg, make_rng(seed, chain_id), np.zeros(model.dim))
        label = METHOD_LABELS[integrator]
        result.chains[label] = chain
        result.summaries[label] = summarize(chain)
    return result


def banana(n_samples: int = 1000, n_warmup: int = 100, seed: int = 1) -> ComparisonResult:
    model = banana_model(BANANA_A, BANANA_B)
    mass = MassMatrix.identity(2)
    q0 = np.array([0.0, BANANA_A**3 * BANANA_B])
    tuned = tune_stepsize(model, mass, LEAPFROG, BANANA_H0, 8, make_rng(seed, 99), q0)
    steps = {LEAPFROG: tuned.chosen_h, IMPLICIT_MIDPOINT: BANANA_MIDPOINT_FACTOR * tuned.chosen_h}
    result = ComparisonResult()
    for chain_id, (integrator, h) in enumerate(steps.items()):
        cfg = SamplerConfig("nuts", integrator, h, n_samples=n_samples, n_warmup=n_warmup, seed=seed)
        chain = run_chain(model, mass, cfg, make_rng(seed, chain_id), q0)
        label = METHOD_LABELS[integrator]
        result.chains[label] = chain
        result.summaries[label] = summarize(chain)
    return result
