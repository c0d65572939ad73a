import numpy as np
import pytest

from conftest import unit_gaussian
from implicit_hmc.adapt import (
    AdaptConfig,
    TuningError,
    choose_integrator,
    estimate_local_hmax,
    tune_stepsize,
    warmup_tuning,
)
from implicit_hmc.integrator import IMPLICIT_MIDPOINT, LEAPFROG, Integrator, hamiltonian, is_divergent
from implicit_hmc.linalg import sym_eigenvalues
from implicit_hmc.model import TargetModel, banana_model, funnel_model
from implicit_hmc.sampler import SamplerConfig, make_rng, run_chain, sample_momentum
from implicit_hmc.system import MassMatrix, PhasePoint


def test_midpoint_keeps_large_step_on_gaussian():
    rep = tune_stepsize(unit_gaussian(), MassMatrix.identity(1), IMPLICIT_MIDPOINT, 4.0, 8, make_rng(0))
    assert rep.chosen_h == 4.0 and rep.halvings == 0


def test_leapfrog_halves_on_gaussian():
    rep = tune_stepsize(unit_gaussian(), MassMatrix.identity(1), LEAPFROG, 4.0, 8, make_rng(0))
    assert rep.chosen_h <= 2.0 and rep.halvings >= 1


@pytest.mark.slow
def test_funnel_midpoint_tuning():
    rep = tune_stepsize(funnel_model(10), MassMatrix.identity(11), IMPLICIT_MIDPOINT, 0.8, 8, make_rng(1))
    assert rep.chosen_h <= 0.2


def test_local_hmax_examples():
    assert estimate_local_hmax(unit_gaussian(), MassMatrix.identity(1), np.zeros(1)) == pytest.approx(2.0)
    f = funnel_model(10)
    mass = MassMatrix.identity(11)
    assert estimate_local_hmax(f, mass, np.zeros(11)) == pytest.approx(2.0, rel=1e-5)
    # neck curvature exp(q1) for the default funnel, exp(2 q1) for the sd form
    q = np.concatenate([[8.0], np.zeros(10)])
    assert estimate_local_hmax(f, mass, q) == pytest.approx(2 * np.exp(-4.0), rel=1e-5)
    q = np.concatenate([[4.0], np.zeros(10)])
    assert estimate_local_hmax(funnel_model(10, "sd"), mass, q) == pytest.approx(0.0366, abs=1e-4)


def test_local_hmax_matches_dense_hessian(rng):
    models = [(banana_model(), lambda: np.array([rng.normal(0, 0.5), 100 + rng.normal()])),
              (funnel_model(6), lambda: rng.normal(size=7))]
    for model, draw in models:
        mass = MassMatrix.identity(model.dim)
        for i in range(10):
            q = draw()
            lam = np.abs(sym_eigenvalues(model.hessian(q))).max()
            est = estimate_local_hmax(model, mass, q, tol=1e-10, seed=i)
            assert est == pytest.approx(2 / np.sqrt(lam), rel=0.01)


def test_choose_integrator_examples():
    assert choose_integrator([0.063], 1.0, 20.0) == IMPLICIT_MIDPOINT
    assert choose_integrator([2.0], 4.0, 20.0) == LEAPFROG
    assert choose_integrator([1.0], 2.0, 4.0) == LEAPFROG
    with pytest.raises(ValueError):
        choose_integrator([], 1.0, 4.0)


def test_choose_integrator_scale_consistent(rng):
    for _ in range(200):
        h_lf = rng.uniform(0.01, 3.0, size=3)
        h_mid = rng.uniform(0.1, 10.0)
        work = rng.uniform(2.0, 40.0)
        c = 2.0 ** rng.integers(-5, 6)
        assert choose_integrator(h_lf, h_mid, work) == choose_integrator(c * h_lf, c * h_mid, work)


def test_tuned_stepsize_survives_fresh_probes():
    model = banana_model()
    mass = MassMatrix.identity(2)
    q0 = np.array([0.0, 100.0])
    rep = tune_stepsize(model, mass, LEAPFROG, 1.0, 8, make_rng(5), q0)
    integ = Integrator(LEAPFROG, model, mass, rep.chosen_h)
    rng = make_rng(1234)
    failures = 0
    for _ in range(100):
        z = PhasePoint(q0, sample_momentum(mass, rng))
        H0 = hamiltonian(model, mass, z)
        for _ in range(32):
            z = integ.step(z).point
            if not z.is_finite() or is_divergent(H0, hamiltonian(model, mass, z)):
                failures += 1
                break
    assert failures <= 5


def test_tuning_error_when_nothing_is_stable():
    blowup = TargetModel(
        "blowup", 1, lambda q: 0.0, lambda q: np.array([np.nan]), lambda q, v: np.array([np.nan])
    )
    with pytest.raises(TuningError):
        tune_stepsize(blowup, MassMatrix.identity(1), LEAPFROG, 1.0, 2, make_rng(0))


@pytest.mark.parametrize("model,h0", [(unit_gaussian(), 4.0), (funnel_model(3), 0.5)])
def test_auto_integrator_follows_heuristic(model, h0):
    mass = MassMatrix.identity(model.dim)
    cfg = SamplerConfig(stepsize=1.0, n_samples=0)
    new_cfg, rep, q = warmup_tuning(
        model, mass, cfg, make_rng(0), np.zeros(model.dim), None,
        AdaptConfig(h0=h0, auto_integrator=True),
    )
    assert new_cfg.integrator == rep.recommended_integrator == rep.integrator
    assert new_cfg.stepsize == rep.chosen_h
    if rep.integrator == LEAPFROG:
        assert rep.chosen_h <= min(rep.h_leapfrog_estimates)


def test_auto_integrator_unit_gaussian_midpoint_wins():
    # one Newton iteration on a linear system: 2 gradients + 1 HVP per step at h=4
    cfg = SamplerConfig(stepsize=1.0, n_samples=0)
    _, rep, _ = warmup_tuning(
        unit_gaussian(), MassMatrix.identity(1), cfg, make_rng(0), np.zeros(1), None,
        AdaptConfig(h0=4.0, auto_integrator=True),
    )
    assert rep.avg_midpoint_work_per_step == pytest.approx(2 + 1.25)
    assert rep.recommended_integrator == choose_integrator([2.0], 4.0, 3.25) == IMPLICIT_MIDPOINT


def test_run_chain_records_adapt_report():
    cfg = SamplerConfig(integrator=LEAPFROG, stepsize=1.0, n_samples=5, seed=2)
    chain = run_chain(unit_gaussian(), MassMatrix.identity(1), cfg, adapt=AdaptConfig(h0=4.0))
    assert chain.metadata["adapt"]["chosen_h"] == chain.metadata["stepsize"] <= 2.0
    assert chain.config.stepsize == chain.metadata["stepsize"]


def test_adapt_config_validation():
    with pytest.raises(ValueError):
        AdaptConfig(h0=0.0)
    with pytest.raises(ValueError):
        AdaptConfig(h0=1.0, probe_budget=0)
