import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rollwaves.bloch import compute_spectrum, critical_curves
from rollwaves.whitham import averaged_quantities, characteristic_roots, verify_tangency, whitham_jacobians

finite = dict(allow_nan=False, allow_infinity=False)
entry = st.floats(-3, 3, **finite)


def test_constructed_hyperbolic():
    z1, z2, cls = characteristic_roots(np.eye(2), np.diag([1.0, -1.0]))
    assert cls == "hyperbolic"
    assert np.allclose([z1, z2], [-1, 1])


def test_constructed_elliptic():
    z1, z2, cls = characteristic_roots(np.eye(2), np.array([[0.0, -1.0], [1.0, 0.0]]))
    assert cls == "elliptic"
    assert np.allclose(sorted([z1, z2], key=lambda z: z.imag), [-1j, 1j])


def test_constructed_degenerate():
    assert characteristic_roots(np.eye(2), np.array([[1.0, 1.0], [0.0, 1.0]]))[2] == "degenerate"


def test_singular_J1_rejected():
    with pytest.raises(np.linalg.LinAlgError):
        characteristic_roots(np.zeros((2, 2)), np.eye(2))


@settings(max_examples=60, deadline=None)
@given(a=st.lists(entry, min_size=4, max_size=4), b=st.lists(entry, min_size=4, max_size=4))
def test_roots_solve_determinant(a, b):
    J1 = np.reshape(a, (2, 2))
    J2 = np.reshape(b, (2, 2))
    if abs(np.linalg.det(J1)) < 1e-2:
        return
    for z in characteristic_roots(J1, J2)[:2]:
        assert abs(np.linalg.det(z * J1 - J2)) < 1e-8 * max(1.0, abs(z)) ** 2 * 100


def test_averages(wave62):
    a = averaged_quantities(wave62)
    assert a.eulerian_length == pytest.approx(np.mean(wave62.tau) * wave62.X, rel=1e-8)
    assert a.k * a.eulerian_length == pytest.approx(1.0)
    assert a.cE == wave62.q and a.qE == wave62.c


@settings(max_examples=20, deadline=None)
@given(lam=st.complex_numbers(max_magnitude=2, **finite), nu=st.complex_numbers(max_magnitude=2, **finite),
       t=st.floats(0.01, 10, **finite))
def test_delta_homogeneous(whitham62, lam, nu, t):
    wd = whitham62
    for f in (wd.delta, wd.delta_lagrangian):
        assert abs(f(t * lam, t * nu) - t**2 * f(lam, nu)) <= 1e-9 * max(1.0, t**2 * abs(f(lam, nu)), t**2)


def test_stable_wave_hyperbolic_and_tangent(wave62, whitham62):
    wd = whitham62
    assert wd.classification == "hyperbolic"
    assert wd.nondegenerate
    # z_B are the roots of the Lagrangian dispersion polynomial along nu = i xi X
    for zb in wd.bloch_speeds():
        xi = 1e-3
        assert abs(wd.delta_lagrangian(-1j * zb * xi, 1j * xi * wd.averages.M / wd.averages.k)) < 1e-10
    fr = 0.3
    rep = compute_spectrum(wave62, xi_grid=np.linspace(-fr, fr, 25) / wave62.X, N=32, check=False)
    t = verify_tangency(wd, critical_curves(rep))
    assert t.passed and t.mismatch < 1e-3


def test_step_robustness(wave62, whitham62):
    other = whitham_jacobians(wave62, h=3e-5)
    assert np.allclose(other.z, whitham62.z, rtol=1e-5, atol=1e-7)


def test_elliptic_wave(wave45):
    assert whitham_jacobians(wave45).classification == "elliptic"
