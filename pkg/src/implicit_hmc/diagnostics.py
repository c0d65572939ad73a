"""Effective sample size and Table-1 style run summaries."""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .sampler import ChainOutput


class ConstantChainWarning(UserWarning):
    """ESS was requested for a sequence with zero variance."""


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Normalized autocorrelation at every lag, computed with an FFT."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    centered = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(centered, size)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), size)[:n]
    if acov[0] == 0:
        return np.zeros(n)
    return acov / acov[0]


def effective_sample_size(x) -> float:
    """ESS with Geyer's initial monotone sequence estimator, clamped to ``[1, N]``.

    A constant sequence returns 1 and raises :class:`ConstantChainWarning`.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 4:
        raise ValueError("ESS needs at least 4 draws")
    if np.ptp(x) == 0:
        warnings.warn("constant chain; ESS set to 1", ConstantChainWarning, stacklevel=2)
        return 1.0
    rho = autocorrelation(x)
    n_pairs = n // 2
    pairs = rho[: 2 * n_pairs].reshape(n_pairs, 2).sum(axis=1)
    tau = -1.0
    running = np.inf
    for gamma in pairs:
        if gamma <= 0:
            break
        running = min(running, gamma)
        tau += 2.0 * running
    tau = max(tau, 1.0 / n)
    return float(min(max(n / tau, 1.0), n))


@dataclass
class SummaryTable:
    mean: list[float]
    sd: list[float]
    ess: list[float]
    n_draws: int
    n_steps: int
    total_grad: int
    total_hvp: int
    avg_grad_per_step: float
    avg_hvp_per_step: float
    avg_work_per_step: float
    avg_tree_depth: float
    avg_ess: float
    work_per_effective_sample: float
    divergence_rate: float
    unreliable: bool = False

    @property
    def total_work(self) -> int:
        return self.total_grad + self.total_hvp

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def render(self, label: str = "") -> str:
        rows = [
            ("avg. grad evals/step", f"{self.avg_grad_per_step:.2f}"),
            ("avg. hess-vec evals/step", f"{self.avg_hvp_per_step:.2f}"),
            ("avg. work/step", f"{self.avg_work_per_step:.2f}"),
            ("avg. tree depth", f"{self.avg_tree_depth:.2f}"),
            ("avg. effective samples", f"{self.avg_ess:.2f}"),
            ("work/effective sample", f"{self.work_per_effective_sample:.2f}"),
            ("divergence rate", f"{self.divergence_rate:.4f}"),
        ]
        width = max(len(name) for name, _ in rows)
        lines = [f"{'':<{width}}  {label}"] if label else []
        lines += [f"{name:<{width}}  {value:>10}" for name, value in rows]
        return "\n".join(lines)


def summarize(chain: ChainOutput) -> SummaryTable:
    """Per-dimension moments and ESS plus per-step work averages.

    A step is any integrator step in any trajectory; only recorded
    (post-warmup) draws contribute.
    """
    draws = chain.draws
    diags = chain.diagnostics
    n = draws.shape[0]
    if n < 1:
        raise ValueError("summarize needs at least one recorded draw")
    steps = sum(d.n_steps for d in diags)
    grads = sum(d.work.n_grad for d in diags)
    hvps = sum(d.work.n_hvp for d in diags)
    if n >= 4:
        ess = [effective_sample_size(draws[:, j]) for j in range(draws.shape[1])]
    else:
        ess = [float(n)] * draws.shape[1]
    avg_ess = float(np.mean(ess))
    per_step = (lambda k: k / steps) if steps else (lambda k: 0.0)
    return SummaryTable(
        mean=draws.mean(axis=0).tolist(),
        sd=draws.std(axis=0, ddof=1).tolist() if n > 1 else [0.0] * draws.shape[1],
        ess=ess,
        n_draws=n,
        n_steps=steps,
        total_grad=grads,
        total_hvp=hvps,
        avg_grad_per_step=per_step(grads),
        avg_hvp_per_step=per_step(hvps),
        avg_work_per_step=per_step(grads + hvps),
        avg_tree_depth=float(np.mean([d.tree_depth for d in diags])),
        avg_ess=avg_ess,
        work_per_effective_sample=(grads + hvps) / avg_ess,
        divergence_rate=sum(d.divergent for d in diags) / n,
        unreliable=chain.unreliable,
    )
