import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rollwaves.bloch import (Window, assemble_bloch_matrix, bloch_sample, build_coefficients,
                             choose_truncation, compute_spectrum, critical_curves, default_xi_grid,
                             fit_critical_curves, translation_mode_residual)
from rollwaves.model import ModelParams, constant_state_dispersion, find_equilibria
from rollwaves.orbit import equilibrium_profile

finite = dict(allow_nan=False, allow_infinity=False)


def hill_vs_dispersion(params, tau0, c, X, xi, N=32):
    u0 = tau0 ** (-(params.s + 1) / params.r)
    prof = equilibrium_profile(params, tau0, c, X)
    eq = find_equilibria(params, u0 + c * tau0, c)
    eq = min(eq, key=lambda e: abs(e.tau0 - tau0))
    w = np.linalg.eigvals(assemble_bloch_matrix(build_coefficients(prof), xi, N))
    ref = np.concatenate([constant_state_dispersion(params, eq, xi + 2 * np.pi * j / X).roots
                          for j in range(-N, N + 1)])
    # match both ways, relative to the size of the eigenvalue
    scale = np.maximum(1.0, np.abs(ref))
    return max((np.abs(w[:, None] - ref[None]) / scale[None]).min(1).max(),
               (np.abs(ref[:, None] - w[None]) / scale[:, None]).min(1).max())


@settings(max_examples=5, deadline=None)
@given(F=st.floats(2, 20, **finite), nu=st.floats(0.02, 0.5, **finite), r=st.floats(1, 2, **finite),
       s=st.floats(0, 2, **finite), tau0=st.floats(0.6, 1.6, **finite), c=st.floats(0.05, 1.0, **finite),
       X=st.floats(2, 20, **finite), xi_frac=st.floats(-0.5, 0.5, **finite))
def test_hill_constant_coefficient_oracle(F, nu, r, s, tau0, c, X, xi_frac):
    p = ModelParams(F=F, nu=nu, r=r, s=s)
    assert hill_vs_dispersion(p, tau0, c, X, xi_frac * 2 * np.pi / X) < 1e-8


def test_left_kernel_row_vanishes(wave62):
    co = build_coefficients(wave62)
    N = 24
    M0 = assemble_bloch_matrix(co, 0.0, N)
    assert np.abs(M0[N]).max() == 0.0


def test_translation_mode(wave62):
    co = build_coefficients(wave62.sample(256))
    assert translation_mode_residual(co, wave62.sample(256), 32) < 1e-7


@pytest.mark.parametrize("xi", [0.07, 0.3])
def test_conjugation_symmetry(wave62, xi):
    co = build_coefficients(wave62)
    a = np.sort_complex(np.linalg.eigvals(assemble_bloch_matrix(co, xi, 24)))
    b = np.sort_complex(np.conj(np.linalg.eigvals(assemble_bloch_matrix(co, -xi, 24))))
    big = np.abs(a) < 50
    assert np.allclose(a[big], b[np.abs(b) < 50], atol=1e-8)


def test_xi_grid():
    g = default_xi_grid(2.0, 11)
    assert 0.0 in g
    assert g.min() >= -np.pi / 2 and g.max() < np.pi / 2


def test_truncation_choice_and_check(wave62):
    co = build_coefficients(wave62)
    N = choose_truncation(co)
    assert N in (16, 24, 32, 48, 64)
    smp = bloch_sample(co, 0.1, N, Window(-1, 1, 2), check=True)
    assert smp.converged and smp.drift < 1e-6
    assert np.all(np.diff(smp.eigenvalues.real) <= 0)


def test_bad_truncation(wave62):
    with pytest.raises(ValueError):
        assemble_bloch_matrix(build_coefficients(wave62), 0.0, 0)


def test_fit_recovers_known_curves():
    X = 5.0
    z = np.array([0.3, -0.1])
    b = np.array([0.2, 0.05])
    xis = np.linspace(-0.3, 0.3, 41) / X
    pairs = np.stack([-1j * z[j] * xis - b[j] * xis**2 for j in range(2)], axis=1)
    cc = fit_critical_curves(xis, pairs, X)
    assert cc.trustworthy
    assert np.allclose(np.sort(cc.z.real), np.sort(z), atol=1e-8)
    assert np.allclose(np.sort(cc.b.real), np.sort(b), atol=1e-6)


def test_stable_wave_verdicts(wave62):
    rep = compute_spectrum(wave62, xi_grid=default_xi_grid(wave62.X, 41), N=32, check=False)
    assert rep.verdicts == {"D1": True, "D2": True, "D3'": True, "H4": True}
    assert rep.classification == "stable"
    assert rep.theta > 0
    cc = critical_curves(rep)
    assert np.all(np.abs(cc.z.imag) < 1e-6)


def test_elliptic_wave_unstable_origin(wave45):
    rep = compute_spectrum(wave45, xi_grid=default_xi_grid(wave45.X, 41), N=32, check=False)
    assert rep.classification == "unstable-origin"
    assert not rep.verdicts["D1"]
    assert rep.verdicts["D3'"] and rep.verdicts["H4"]


def test_long_wave_unstable_essential(family):
    prof = family.at_period(25.0)
    rep = compute_spectrum(prof, xi_grid=default_xi_grid(prof.X, 41), N=64, check=False)
    assert rep.classification == "unstable-essential"
    assert abs(rep.max_point[1]) > 0.1
