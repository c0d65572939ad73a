"""End-to-end acceptance criteria, one test per criterion.

Each test prints a single ``[PASS]``/``[FAIL]`` line with the measured values
(also collected into the terminal summary) and then asserts the outcome.
"""

import csv
import json
import time

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE_LINES, builtin_models, random_point
from implicit_hmc import experiments
from implicit_hmc.cli import main
from implicit_hmc.diagnostics import effective_sample_size
from implicit_hmc.integrator import (
    IMPLICIT_MIDPOINT,
    LEAPFROG,
    Integrator,
    eigenvalue_moduli,
    hamiltonian,
    midpoint_update_matrix,
)
from implicit_hmc.model import finite_difference_gradient, finite_difference_hvp, gaussian_model
from implicit_hmc.sampler import SamplerConfig, make_rng, run_chain
from implicit_hmc.solver import NewtonKrylovConfig, newton_krylov_solve
from implicit_hmc.system import MassMatrix, PhasePoint


def verdict(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} | {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_criterion_01_stability_thresholds(tmp_path):
    t0 = time.perf_counter()
    out = tmp_path / "stability.csv"
    cfg = {
        "model": {"kind": "gaussian", "parameters": {"covariance": [[1.0]]}},
        "h_grid": [0.1, 1.99, 2.0, 2.01, 20.0],
        "output_path": str(out),
    }
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    code = main(["stability", "--config", str(tmp_path / "cfg.json")])
    with open(out) as fh:
        rows = {(float(r["h"]), r["integrator"]): r for r in csv.DictReader(fh)}
    elapsed = time.perf_counter() - t0

    lf_stable = rows[(1.99, LEAPFROG)]["status"] == "stable" and float(rows[(1.99, LEAPFROG)]["max_modulus"]) <= 1 + 1e-10
    lf_unstable = rows[(2.01, LEAPFROG)]["status"] == "unstable" and float(rows[(2.01, LEAPFROG)]["max_modulus"]) > 1
    moduli = np.concatenate(
        [eigenvalue_moduli(midpoint_update_matrix(np.eye(1), MassMatrix.identity(1), h)) for h in (0.1, 2.0, 20.0)]
    )
    csv_moduli = [float(rows[(h, IMPLICIT_MIDPOINT)]["max_modulus"]) for h in (0.1, 2.0, 20.0)]
    mid_ok = np.all(np.abs(moduli - 1) <= 1e-10) and np.all(np.abs(np.array(csv_moduli) - 1) <= 1e-10)
    ok = code == 0 and lf_stable and lf_unstable and mid_ok and elapsed < 1.0
    verdict(
        1, "stability thresholds", ok,
        f"lf|h=2.01 modulus={float(rows[(2.01, LEAPFROG)]['max_modulus']):.4f}, "
        f"max |mid modulus-1|={np.abs(moduli - 1).max():.1e}, {elapsed:.2f}s",
    )


def _energy_errors(kind, h, n_steps, stop_above=None):
    model = gaussian_model(np.eye(1))
    mass = MassMatrix.identity(1)
    integ = Integrator(kind, model, mass, h)
    z = PhasePoint(np.array([1.0]), np.array([0.0]))
    H0 = hamiltonian(model, mass, z)
    worst, first_cross = 0.0, None
    for n in range(1, n_steps + 1):
        z = integ.step(z).point
        err = abs(hamiltonian(model, mass, z) - H0)
        worst = max(worst, err)
        if stop_above is not None and err > stop_above:
            first_cross = n
            break
    return worst, first_cross


def test_criterion_02_long_trajectory_energy():
    t0 = time.perf_counter()
    lf_stable, _ = _energy_errors(LEAPFROG, 1.9, 10_000)
    _, cross = _energy_errors(LEAPFROG, 2.1, 1_000, stop_above=1e10)
    mid, _ = _energy_errors(IMPLICIT_MIDPOINT, 20.0, 10_000)
    elapsed = time.perf_counter() - t0
    ok = lf_stable <= 1.0 and cross is not None and mid <= 10.0 and elapsed < 5.0
    verdict(
        2, "long-trajectory energy", ok,
        f"lf h=1.9 max|dH|={lf_stable:.3f}, lf h=2.1 |dH|>1e10 at step {cross}, "
        f"mid h=20 max|dH|={mid:.1e}, {elapsed:.2f}s",
    )


def _jacobian(integ, x, eps=1e-6):
    n = x.size
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = eps
        plus = integ.step(PhasePoint(*np.split(x + e, 2))).point.as_vector()
        minus = integ.step(PhasePoint(*np.split(x - e, 2))).point.as_vector()
        J[:, j] = (plus - minus) / (2 * eps)
    return J


def test_criterion_03_symplectic_and_reversible():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    models = {k: v for k, v in builtin_models().items() if k in ("gaussian", "banana", "funnel")}
    stepsizes = {"gaussian": 0.3, "banana": 0.01, "funnel": 0.1}
    worst_det = worst_rev = 0.0
    solver = NewtonKrylovConfig(residual_tol=1e-13)
    for name, model in models.items():
        mass = MassMatrix.identity(model.dim)
        for kind in (LEAPFROG, IMPLICIT_MIDPOINT):
            integ = Integrator(kind, model, mass, stepsizes[name], solver)
            for _ in range(20):
                z = PhasePoint(random_point(name, model, rng), rng.normal(size=model.dim))
                det = np.linalg.det(_jacobian(integ, z.as_vector()))
                back = integ.step(integ.step(z).point.flipped()).point.flipped()
                worst_det = max(worst_det, abs(det - 1.0))
                worst_rev = max(worst_rev, np.abs(back.as_vector() - z.as_vector()).max())
    elapsed = time.perf_counter() - t0
    ok = worst_det <= 1e-6 and worst_rev < 1e-6 and elapsed < 10.0
    verdict(3, "symplecticity and reversibility", ok,
            f"max |det-1|={worst_det:.1e}, max return error={worst_rev:.1e}, {elapsed:.2f}s")


def test_criterion_04_derivative_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst_g = worst_h = 0.0
    for name, model in builtin_models().items():
        for _ in range(100):
            q = random_point(name, model, rng)
            v = rng.normal(size=model.dim)
            g, fd_g = model.gradient(q), finite_difference_gradient(model, q)
            hv, fd_hv = model.hessian_vec(q, v), finite_difference_hvp(model, q, v)
            worst_g = max(worst_g, np.linalg.norm(g - fd_g) / np.linalg.norm(fd_g))
            worst_h = max(worst_h, np.linalg.norm(hv - fd_hv) / np.linalg.norm(fd_hv))
    elapsed = time.perf_counter() - t0
    ok = worst_g < 1e-5 and worst_h < 1e-5 and elapsed < 5.0
    verdict(4, "derivative oracle", ok,
            f"max rel err grad={worst_g:.1e}, hvp={worst_h:.1e}, {elapsed:.2f}s")


def test_criterion_05_newton_krylov_cluster():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    eig = np.array([1.0] * 8 + [100.0])
    Q, _ = np.linalg.qr(rng.normal(size=(9, 9)))
    model = gaussian_model(np.linalg.inv(Q @ np.diag(eig) @ Q.T))
    mass = MassMatrix.identity(9)
    cfg = NewtonKrylovConfig(residual_tol=1e-10)
    worst_iters, worst_res, all_conv = 0, 0.0, True
    for h in (0.1, 0.5, 2.0):
        for _ in range(5):
            _, rep = newton_krylov_solve(model, mass, rng.normal(size=9), rng.normal(size=9), h, cfg)
            all_conv &= rep.converged
            worst_iters = max(worst_iters, max(rep.krylov_iters))
            worst_res = max(worst_res, rep.final_residual)
    elapsed = time.perf_counter() - t0
    ok = all_conv and worst_res < 1e-10 and worst_iters <= 3 and elapsed < 1.0
    verdict(5, "Newton-Krylov cluster convergence", ok,
            f"max Krylov iters/Newton step={worst_iters}, max residual={worst_res:.1e}, {elapsed:.2f}s")


def test_criterion_06_tree_depth_sweep():
    t0 = time.perf_counter()
    rows = experiments.gaussian_treedepth(rhos=(0.5, 0.9, 0.99, 0.999), n_samples=200, seed=1)
    elapsed = time.perf_counter() - t0
    lf = [r.avg_tree_depth for r in rows if r.method == "lfNUTS"]
    mid = [r.avg_tree_depth for r in rows if r.method == "iNUTS"]
    ok = all(a < b for a, b in zip(lf, lf[1:])) and max(mid) <= 2.0 and elapsed < 120.0
    verdict(6, "tree-depth sweep", ok,
            f"lfNUTS={['%.2f' % d for d in lf]}, iNUTS={['%.2f' % d for d in mid]}, {elapsed:.1f}s")


@pytest.mark.slow
def test_criterion_07_funnel_efficiency():
    t0 = time.perf_counter()
    result = experiments.funnel(n_samples=1000, seed=1)
    elapsed = time.perf_counter() - t0
    lf, mid = result.summaries["lfNUTS"], result.summaries["iNUTS"]
    ratio = mid.work_per_effective_sample / lf.work_per_effective_sample
    a = lf.avg_grad_per_step == 2.0 and lf.n_draws == 1000 and mid.n_draws == 1000
    b = mid.avg_tree_depth < lf.avg_tree_depth
    c = ratio < 0.7
    ok = a and b and c and elapsed < 600.0
    verdict(
        7, "funnel efficiency", ok,
        f"(a) lf grad/step={lf.avg_grad_per_step:.2f}; (b) depth iNUTS={mid.avg_tree_depth:.2f} vs "
        f"lfNUTS={lf.avg_tree_depth:.2f}; (c) work/ESS iNUTS={mid.work_per_effective_sample:.1f} vs "
        f"lfNUTS={lf.work_per_effective_sample:.1f} (ratio {ratio:.3f}); {elapsed:.0f}s",
    )


def _chi2_pvalue(x, bins=10):
    u = stats.norm.cdf(x)
    counts = np.bincount(np.minimum((u * bins).astype(int), bins - 1), minlength=bins)
    return stats.chisquare(counts).pvalue


def test_criterion_08_sampler_correctness():
    t0 = time.perf_counter()
    model = gaussian_model(np.eye(2))
    mass = MassMatrix.identity(2)
    details, ok = [], True
    for chain_id, (kind, h) in enumerate(((LEAPFROG, 0.5), (IMPLICIT_MIDPOINT, 1.0))):
        cfg = SamplerConfig("nuts", kind, h, n_samples=10_000, n_warmup=100, seed=8)
        draws = run_chain(model, mass, cfg, make_rng(8, chain_id)).draws
        mean_err = np.abs(draws.mean(axis=0)).max()
        var_err = np.abs(draws.var(axis=0, ddof=1) - 1.0).max()
        p_min = min(_chi2_pvalue(draws[:, j]) for j in range(2))
        ok &= mean_err < 0.05 and var_err < 0.1 and p_min > 0.001
        details.append(f"{kind}: |mean|={mean_err:.3f} |var-1|={var_err:.3f} min p={p_min:.3f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120.0
    verdict(8, "sampler correctness", ok, "; ".join(details) + f"; {elapsed:.1f}s")


def test_criterion_09_ess_oracle():
    t0 = time.perf_counter()
    n = 100_000
    rng = np.random.default_rng(9)
    ratios = []
    for phi in (0.0, 0.5, 0.9):
        eps = rng.normal(size=n)
        x = np.empty(n)
        x[0] = eps[0] / np.sqrt(1 - phi**2)
        for t in range(1, n):
            x[t] = phi * x[t - 1] + eps[t]
        ratios.append(effective_sample_size(x) / (n * (1 - phi) / (1 + phi)))
    elapsed = time.perf_counter() - t0
    ok = all(abs(r - 1) <= 0.2 for r in ratios) and elapsed < 10.0
    verdict(9, "ESS oracle", ok, f"ESS/expected={['%.3f' % r for r in ratios]}, {elapsed:.2f}s")


def test_criterion_10_determinism(tmp_path):
    t0 = time.perf_counter()
    outputs = []
    for run in range(2):
        out = tmp_path / f"run{run}"
        cfg = {
            "model": {"kind": "funnel", "parameters": {"n": 10}},
            "sampler": {"integrator": "implicit_midpoint", "stepsize": 0.2, "n_samples": 1000, "seed": 1},
            "output": {
                "samples_path": str(out / "samples.csv"),
                "diagnostics_path": str(out / "diagnostics.csv"),
                "summary_path": str(out / "summary.json"),
            },
        }
        (tmp_path / f"cfg{run}.json").write_text(json.dumps(cfg))
        assert main(["sample", "--config", str(tmp_path / f"cfg{run}.json")]) == 0
        outputs.append([(out / f).read_bytes() for f in ("samples.csv", "diagnostics.csv", "summary.json")])
    elapsed = time.perf_counter() - t0
    ok = outputs[0] == outputs[1] and elapsed < 60.0
    verdict(10, "determinism", ok, f"3 files byte-identical={outputs[0] == outputs[1]}, {elapsed:.1f}s")
