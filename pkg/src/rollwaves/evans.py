"""Periodic Evans function from the monodromy of the first-order eigenvalue system.

The eigenvalue problem ``lambda v = (B v')' - (A v)' + C v`` with
``v = (tau, u)`` is written for ``Y = (tau, u, u')``: the first row gives
``tau' = (lambda tau - u') / c`` and the second row is solved for ``u''``.
The profile is integrated alongside from the converged shooting nodes so
that the coefficients are exact at every step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .model import ModelParams
from .orbit import PeriodicProfile, _fourier_eval, _profile_accel

RTOL = 1e-11
ATOL = 1e-13


class EvansError(RuntimeError):
    """Monodromy integration failed."""


def first_order_matrix(params: ModelParams, c: float, q: float, tau, dtau, lam: complex) -> np.ndarray:
    """3x3 coefficient ``A(x; lambda)`` from pointwise profile data."""
    nu, F, r, s = params.nu, params.F, params.r, params.s
    ddtau = _profile_accel(tau, dtau, c, q, params)
    u = q - c * tau
    ux, uxx = -c * dtau, -c * ddtau
    a21 = -(tau**-3) * (1.0 / F - 2.0 * nu * ux)
    a21_x = 3.0 * tau**-4 * dtau * (1.0 / F - 2.0 * nu * ux) + 2.0 * nu * tau**-3 * uxx
    c21 = -(s + 1.0) * tau**s * u**r
    c22 = -r * tau ** (s + 1.0) * u ** (r - 1.0)
    b22_x = -2.0 * nu * tau**-3 * dtau
    k = tau * tau / nu
    return np.array([
        [lam / c, 0.0, -1.0 / c],
        [0.0, 0.0, 1.0],
        [k * (a21_x + a21 * lam / c - c21), k * (lam - c22), k * (-b22_x - a21 / c - c)],
    ], dtype=complex)


def first_order_system(profile: PeriodicProfile, lam: complex):
    """Callable ``x -> A(x; lambda)`` using the trigonometric interpolant of the profile."""
    p = profile.params

    def A(x):
        xs = np.atleast_1d(float(x))
        tau = float(_fourier_eval(profile.tau, profile.X, xs)[0])
        dtau = float(_fourier_eval(profile.dtau, profile.X, xs)[0])
        return first_order_matrix(p, profile.c, profile.q, tau, dtau, lam)

    return A


def _rhs(x, y, lam, c, q, params):
    tau, dtau = y[0].real, y[1].real
    A = first_order_matrix(params, c, q, tau, dtau, lam)
    Psi = y[2:11].reshape(3, 3)
    out = np.empty(12, dtype=complex)
    out[0] = dtau
    out[1] = _profile_accel(tau, dtau, c, q, params)
    out[2:11] = (A @ Psi).ravel()
    out[11] = np.trace(A)
    return out


@dataclass
class MonodromySample:
    lam: complex
    Psi: np.ndarray
    trace_integral: complex
    condition: float
    log_det: complex = 0j  # sum of log det over the segment maps

    @property
    def abel_defect(self) -> float:
        """Relative mismatch between ``det Psi`` and ``exp(int tr A)``.

        Checked per segment: the full-period ``Psi`` is too ill-conditioned
        for a direct determinant.
        """
        return float(abs(np.expm1(self.log_det - self.trace_integral)))


def _propagate(profile: PeriodicProfile, lam: complex, x0: float, x1: float, start) -> tuple:
    sol = solve_ivp(_rhs, (x0, x1), start, method="DOP853", rtol=RTOL, atol=ATOL,
                    args=(complex(lam), profile.c, profile.q, profile.params))
    if sol.status != 0 or not np.all(np.isfinite(sol.y[:, -1])):
        raise EvansError(f"monodromy integration failed at lambda={lam}: {sol.message}")
    return sol.y[:, -1]


def monodromy(profile: PeriodicProfile, lam: complex, x_start: float = 0.0,
              x_end: float | None = None) -> MonodromySample:
    """Period map ``Psi`` with ``Psi(x_start) = I``, composed over shooting segments.

    Each segment restarts the profile from its converged node so errors in
    the (saddle-type) profile flow do not accumulate over long periods.
    """
    X = profile.X
    x_end = X if x_end is None else x_end
    nodes = np.asarray(profile.nodes, float)
    m = len(nodes)
    L = X / m
    cuts = sorted({x_start, x_end, *[j * L for j in range(m) if x_start < j * L < x_end]})
    Psi = np.eye(3, dtype=complex)
    tr = 0.0 + 0.0j
    logdet = 0.0 + 0.0j
    for a, b in zip(cuts[:-1], cuts[1:]):
        j = min(int(math.floor(a / L + 1e-12)), m - 1)
        if abs(a - j * L) < 1e-12 * X:
            prof0 = nodes[j]
        else:
            xs = np.array([a])
            prof0 = (float(_fourier_eval(profile.tau, X, xs)[0]), float(_fourier_eval(profile.dtau, X, xs)[0]))
        start = np.zeros(12, dtype=complex)
        start[0:2] = prof0
        start[2:11] = np.eye(3).ravel()
        y = _propagate(profile, lam, a, b, start)
        seg = y[2:11].reshape(3, 3)
        Psi = seg @ Psi
        logdet += np.log(complex(np.linalg.det(seg)))
        tr += y[11]
    cond = float(np.linalg.cond(Psi))
    return MonodromySample(lam=complex(lam), Psi=Psi, trace_integral=complex(tr), condition=cond,
                           log_det=complex(logdet))


def evans(profile: PeriodicProfile, lam: complex, sigma: complex, mono: MonodromySample | None = None) -> complex:
    """``D(lambda, sigma) = det(Psi(X; lambda) - sigma I)``."""
    mono = mono or monodromy(profile, lam)
    return complex(np.linalg.det(mono.Psi - sigma * np.eye(3)))


def evans_scale(mono: MonodromySample) -> float:
    """``||Psi||^3``, the natural size of ``D`` for relative tests."""
    return float(np.linalg.norm(mono.Psi, 2) ** 3)


@dataclass
class RatioDiagnostics:
    rays: list
    scales: np.ndarray
    ratios: np.ndarray  # (n_rays, n_scales)
    gamma: np.ndarray  # fitted limit per ray
    slopes: np.ndarray  # log-log slope of |ratio - gamma| vs t
    spread: float  # relative disagreement of gamma across rays
    passed: bool


def leading_order_ratio(profile: PeriodicProfile, wd, rays=((0.05 + 0.02j, 0.3j), (0.02 - 0.01j, 1.0 + 0.5j)),
                        scales=(1e-2, 5e-3, 2.5e-3, 1.25e-3, 6.25e-4, 3.125e-4, 1.5625e-4, 1e-4),
                        ray_tol: float = 0.05, slope_min: float = 0.9) -> RatioDiagnostics:
    """``D(t lam0, e^{t nu0}) / Delta(t lam0, t nu0)`` along rays as ``t -> 0``.

    ``Delta`` is the averaged dispersion polynomial in the co-moving
    Lagrangian frame.  The limit per ray is a linear fit in ``t`` and the
    remainder slope is the least-squares log-log slope of the deviation.
    """
    scales = np.asarray(scales, float)
    ratios = np.empty((len(rays), len(scales)), dtype=complex)
    for i, (lam0, nu0) in enumerate(rays):
        d0 = wd.delta_lagrangian(lam0, nu0)
        if abs(d0) == 0:
            raise ValueError(f"Delta vanishes along ray {lam0, nu0}")
        for j, t in enumerate(scales):
            D = evans(profile, t * lam0, np.exp(t * nu0))
            ratios[i, j] = D / wd.delta_lagrangian(t * lam0, t * nu0)
    gamma = np.empty(len(rays), dtype=complex)
    slopes = np.empty(len(rays))
    for i in range(len(rays)):
        V = np.column_stack([np.ones_like(scales), scales]).astype(complex)
        coef, *_ = np.linalg.lstsq(V, ratios[i], rcond=None)
        gamma[i] = coef[0]
        dev = np.abs(ratios[i] - gamma[i])
        ok = dev > 0
        slopes[i] = np.polyfit(np.log(scales[ok]), np.log(dev[ok]), 1)[0] if ok.sum() >= 2 else math.inf
    ref = np.abs(gamma).max()
    spread = float(np.abs(gamma - gamma[0]).max() / ref) if ref > 0 else math.inf
    passed = bool(spread < ray_tol and np.all(np.abs(gamma) > 0) and np.all(slopes >= slope_min))
    return RatioDiagnostics(rays=list(rays), scales=scales, ratios=ratios, gamma=gamma, slopes=slopes,
                            spread=spread, passed=passed)


def evans_sweep(profile: PeriodicProfile, lambdas, phases) -> list[tuple[float, float, float, float, float]]:
    """Rows ``(re_lambda, im_lambda, sigma_phase, re_D, im_D)`` for ``sigma = e^{i phase}``."""
    rows = []
    for lam in lambdas:
        mono = monodromy(profile, lam)
        for ph in phases:
            D = evans(profile, lam, np.exp(1j * ph), mono)
            rows.append((float(np.real(lam)), float(np.imag(lam)), float(ph), D.real, D.imag))
    return rows
