import numpy as np
import pytest

from rollwaves.bloch import Window, bloch_sample, build_coefficients, choose_truncation
from rollwaves.evans import (evans, evans_scale, evans_sweep, first_order_matrix, leading_order_ratio,
                             monodromy)
from rollwaves.model import ModelParams, constant_state_dispersion, find_equilibria
from rollwaves.orbit import equilibrium_profile


def test_origin(wave62):
    m = monodromy(wave62, 0.0)
    assert abs(evans(wave62, 0.0, 1.0, m)) < 1e-7 * evans_scale(m)


@pytest.mark.parametrize("lam", [0.0, 0.3 + 0.2j, -0.5 - 1j])
def test_abel_identity(wave62, lam):
    assert monodromy(wave62, lam).abel_defect < 1e-6


def test_group_property(wave62):
    lam = 0.3 + 0.2j
    h = wave62.X / 2
    a = monodromy(wave62, lam, 0.0, h)
    b = monodromy(wave62, lam, h, wave62.X)
    full = monodromy(wave62, lam)
    assert np.abs(b.Psi @ a.Psi - full.Psi).max() < 1e-8 * np.abs(full.Psi).max()


def test_conjugate_symmetry(wave62):
    lam, sigma = 0.2 + 0.4j, np.exp(0.7j)
    d = evans(wave62, lam, sigma)
    dc = evans(wave62, np.conj(lam), np.conj(sigma))
    assert abs(d - np.conj(dc)) < 1e-8 * evans_scale(monodromy(wave62, lam))


def test_constant_state_monodromy():
    """On a constant state the Floquet multipliers are exp(mu X) with lam(mu) on the dispersion relation."""
    p = ModelParams()
    c, tau0, X = 0.4, 1.0, 3.0
    prof = equilibrium_profile(p, tau0, c, X, n=32)
    eq = find_equilibria(p, prof.q, c)[0]
    lam = constant_state_dispersion(p, eq, 0.8).lambda_plus
    assert abs(evans(prof, lam, np.exp(0.8j * X))) < 1e-8 * evans_scale(monodromy(prof, lam))


def test_first_order_matrix_shape(params):
    A = first_order_matrix(params, 0.5, 1.5, 1.0, 0.0, 0.1)
    assert A.shape == (3, 3) and A.dtype == complex


def test_hill_eigenvalues_are_evans_zeros(wave62):
    co = build_coefficients(wave62)
    N = choose_truncation(co)
    worst = 0.0
    for xi in (0.1, 0.3):
        smp = bloch_sample(co, xi, N, Window(-0.5, 0.5, 1.0), check=False)
        for lam in smp.eigenvalues[:3]:
            m = monodromy(wave62, lam)
            worst = max(worst, abs(evans(wave62, lam, np.exp(1j * xi * wave62.X), m)) / evans_scale(m))
    assert worst < 1e-5


def test_large_lambda_has_no_unit_multiplier(wave62):
    m = monodromy(wave62, 5.0)
    assert np.all(np.abs(np.abs(np.linalg.eigvals(m.Psi)) - 1) > 1e-3)


def test_ratio(wave62, whitham62):
    r = leading_order_ratio(wave62, whitham62)
    assert r.passed
    assert r.spread < 0.05
    assert np.all(np.abs(r.gamma) > 0)


def test_sweep_rows(wave62):
    rows = evans_sweep(wave62, [0.0, 0.1j], [0.0, 1.0])
    assert len(rows) == 4 and len(rows[0]) == 5
