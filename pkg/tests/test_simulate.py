import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rollwaves.model import DomainError, ModelParams
from rollwaves.orbit import fourier_shift
from rollwaves.simulate import (CFLViolation, SimConfig, SimState, arc_weights, bloch_mode_perturbation,
                                growth_rate, run, run_metastability, run_stability_probe,
                                shift_optimized_distance, square_wave, stable_dt, step, tile_profile)

finite = dict(allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize("scheme", ["spectral", "central"])
def test_equilibrium_unchanged(scheme):
    cfg = SimConfig(n=64, L=5.0, c=0.4, scheme=scheme)
    s = SimState(0.0, np.ones(64), np.ones(64))
    s1 = step(s, cfg)
    assert np.abs(s1.tau - 1).max() < 1e-12 and np.abs(s1.u - 1).max() < 1e-12


@pytest.mark.parametrize("scheme", ["spectral", "central"])
@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_mean_tau_conserved(scheme, seed):
    rng = np.random.default_rng(seed)
    n, L = 64, 8.0
    x = np.arange(n) * L / n
    pert = sum(rng.normal() * 0.02 * np.sin(2 * np.pi * k * x / L + rng.uniform(0, 6)) for k in range(1, 4))
    cfg = SimConfig(n=n, L=L, T=1.0, c=0.3, scheme=scheme)
    s0 = SimState(0.0, 1.0 + pert, 1.0 - pert)
    s = s0
    for _ in range(20):
        prev = s.mean_tau
        s = step(s, cfg)
        assert abs(s.mean_tau - prev) < 1e-12 * n
    assert abs(s.mean_tau - s0.mean_tau) < 1e-8


def test_cfl_violation_and_config():
    cfg = SimConfig(n=64, L=5.0)
    s = SimState(0.0, np.ones(64), np.ones(64))
    with pytest.raises(CFLViolation):
        step(s, cfg, dt=10 * stable_dt(s, cfg))
    with pytest.raises(ValueError):
        SimConfig(scheme="upwind")
    with pytest.raises(ValueError):
        SimConfig(cfl=0.9)


def test_vacuum_aborts():
    cfg = SimConfig(n=16, L=1.0)
    tau = np.ones(16)
    tau[3] = -0.1
    with pytest.raises(DomainError):
        step(SimState(0.0, tau, np.ones(16)), cfg, dt=1e-6)


def test_profile_is_steady_in_comoving_frame(wave62):
    tau, u = tile_profile(wave62, 1, 512)
    cfg = SimConfig(params=wave62.params, L=wave62.X, n=512, T=10.0, c=wave62.c)
    end = run(SimState(0.0, tau, u), cfg)
    assert max(np.abs(end.tau - tau).max(), np.abs(end.u - u).max()) < 1e-6
    assert abs(end.mean_tau - tau.mean()) < 1e-8


def test_frame_consistency(wave62):
    n, T = 512, 10.0
    tau, u = tile_profile(wave62, 1, n)
    lab = run(SimState(0.0, tau, u), SimConfig(params=wave62.params, L=wave62.X, n=n, T=T, c=0.0))
    shifted_tau = fourier_shift(tau, wave62.c * T, wave62.X)
    assert np.abs(lab.tau - shifted_tau).max() < 1e-5


def test_shift_optimized_distance_recovers_shift():
    L, n = 10.0, 200
    x = np.arange(n) * L / n
    f = 1 + 0.3 * np.sin(2 * np.pi * x / L) + 0.1 * np.cos(4 * np.pi * x / L)
    g = fourier_shift(f, 0.37, L)
    d, delta = shift_optimized_distance(g, g, f, f, L)
    assert d < 1e-8
    assert delta == pytest.approx(0.37, abs=1e-6)


def test_helpers():
    x = np.linspace(0, 10, 100, endpoint=False)
    sq = square_wave(x, 5.0, 2.0, 0.1, 10.0)
    assert sq.max() == 0.1 and 19 <= (sq > 0).sum() <= 21
    w = arc_weights(100, 10.0, 2.05, 4.05)
    assert w.sum() * 0.1 == pytest.approx(2.0, abs=1e-12)


def test_zero_perturbation_probe(wave62):
    res = run_stability_probe(wave62, eps=0.0, T=5.0, n_diag=10)
    assert res.max_distance < 1e-6
    assert res.verdict == "bounded"


def test_zero_amplitude_metastability(family):
    res = run_metastability(family.members[-1], n=256, amplitude=0.0, n_diag=5, T=2.0)
    d = res.diagnostics.as_arrays()
    assert np.abs(d["energy_gradient_region"]).max() < 1e-12
    assert np.abs(d["energy_constant_region"]).max() < 1e-12


def test_linear_rate_matches_hill(wave45):
    ptau, pu, lam = bloch_mode_perturbation(wave45, periods=8, n_per=64)
    assert lam.real > 0
    res = run_stability_probe(wave45, eps=1e-6, T=20.0, periods=8, n_per=64, n_diag=40,
                              perturbation=(ptau, pu))
    rate = growth_rate(res.diagnostics, 5.0, 20.0)
    assert abs(rate - lam.real) < 0.2 * lam.real
