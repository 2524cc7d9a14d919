"""Generalized St. Venant model in Lagrangian coordinates.

Unknowns are the specific volume ``tau = 1/h`` and the velocity ``u``::

    tau_t - u_x = 0
    u_t + ((2F)^-1 tau^-2)_x = 1 - tau^(s+1) u^r + nu (tau^-2 u_x)_x

This module holds the parameters, the equilibrium states of the profile
equation, the Hopf bifurcation analysis and the dispersion relation of
constant states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq


class DomainError(ValueError):
    """State outside the model's validity region (vacuum or flow reversal)."""


@dataclass(frozen=True)
class ModelParams:
    F: float = 6.0
    nu: float = 0.1
    r: float = 2.0
    s: float = 0.0

    def __post_init__(self):
        if not self.F > 0:
            raise ValueError(f"Froude number must be positive, got F={self.F}")
        if not self.nu > 0:
            raise ValueError(f"viscosity must be positive, got nu={self.nu}")
        if not 1.0 <= self.r <= 2.0:
            raise ValueError(f"friction exponent r must lie in [1, 2], got {self.r}")
        if not 0.0 <= self.s <= 2.0:
            raise ValueError(f"friction exponent s must lie in [0, 2], got {self.s}")

    def sound_speed(self, tau):
        """Lagrangian characteristic speed ``c_s = tau^(-3/2) / sqrt(F)``."""
        return np.asarray(tau, dtype=float) ** -1.5 / math.sqrt(self.F)

    def friction(self, tau, u):
        """Source term ``1 - tau^(s+1) u^r``."""
        return 1.0 - tau ** (self.s + 1.0) * u**self.r


@dataclass(frozen=True)
class Equilibrium:
    tau0: float
    u0: float
    q: float
    c: float


def _identity_residual(params: ModelParams, tau0: float, u0: float) -> float:
    return tau0 ** (params.s + 1.0) * u0**params.r - 1.0


@dataclass(frozen=True)
class HopfPoint:
    tau0: float
    u0: float
    cs: float
    kH: float
    XH: float
    admissible: bool


@dataclass(frozen=True)
class DispersionRoots:
    k: float
    lambda_plus: complex
    lambda_minus: complex

    @property
    def roots(self) -> tuple[complex, complex]:
        return (self.lambda_minus, self.lambda_plus)


def lagrangian_rhs(tau, u, tau_x, u_x, tau_xx, u_xx, params: ModelParams):
    """Time derivatives ``(tau_t, u_t)`` from point values and derivatives.

    Works on scalars or arrays. The pressure and viscous fluxes are
    expanded with the chain rule so only point data is needed.
    """
    tau = np.asarray(tau, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(tau <= 0):
        raise DomainError("vacuum: tau <= 0")
    if np.any(u <= 0):
        raise DomainError("flow reversal: u <= 0")
    tau_t = np.asarray(u_x, dtype=float) * 1.0
    pressure_x = -(tau**-3) * tau_x / params.F
    viscous = params.nu * (tau**-2 * u_xx - 2.0 * tau**-3 * tau_x * u_x)
    u_t = -pressure_x + params.friction(tau, u) + viscous
    if tau_t.ndim == 0 and np.ndim(u_t) == 0:
        return float(tau_t), float(u_t)
    return tau_t, u_t


def _equilibrium(params: ModelParams, tau0: float, q: float, c: float) -> Equilibrium:
    return Equilibrium(tau0=tau0, u0=q - c * tau0, q=q, c=c)


def _polish(g, dg, x, lo, hi, iters=6):
    """Newton polish that stays inside the bracket."""
    for _ in range(iters):
        d = dg(x)
        if d == 0:
            break
        xn = x - g(x) / d
        if not lo <= xn <= hi:
            break
        if xn == x:
            break
        x = xn
    return x


def find_equilibria(params: ModelParams, q: float, c: float, n_scan: int = 10_000) -> list[Equilibrium]:
    """All equilibria ``tau0^(s+1) (q - c tau0)^r = 1`` with ``0 < tau0 < q/c``.

    A uniform scan brackets sign changes, then each bracket is refined by
    Brent's method and a final Newton polish. Sorted by ``tau0``.
    """
    if q <= 0:
        raise ValueError("q must be positive")
    if c < 0:
        raise ValueError("c must be nonnegative")
    r, s = params.r, params.s
    if c == 0:
        tau0 = q ** (-r / (s + 1.0))
        return [_equilibrium(params, tau0, q, c)]

    # log form is better scaled: (s+1) log tau + r log(q - c tau) = 0
    def g(t):
        return (s + 1.0) * math.log(t) + r * math.log(q - c * t)

    def dg(t):
        return (s + 1.0) / t - r * c / (q - c * t)

    upper = q / c
    ts = np.linspace(0.0, upper, n_scan + 1)[1:-1]
    vals = (s + 1.0) * np.log(ts) + r * np.log(q - c * ts)
    roots = []
    for i in np.flatnonzero(vals == 0.0):
        roots.append(float(ts[i]))
    sign_change = np.flatnonzero(vals[:-1] * vals[1:] < 0)
    for i in sign_change:
        a, b = float(ts[i]), float(ts[i + 1])
        t = brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        roots.append(_polish(g, dg, t, a, b))
    roots.sort()
    return [_equilibrium(params, t, q, c) for t in roots]


def equilibrium_residual(params: ModelParams, eq: Equilibrium) -> float:
    return abs(_identity_residual(params, eq.tau0, eq.u0))


def hopf_analysis(params: ModelParams, tau0: float) -> HopfPoint:
    """Hopf conditions at the equilibrium ``tau0`` (with ``u0`` from the identity).

    The critical speed is ``c_s = tau0^(-3/2)/sqrt(F)``. Real Hopf
    wavenumbers exist iff ``((s+1)/r) tau0^(-(r+s+1)/r) > c_s``.
    """
    if tau0 <= 0:
        raise DomainError("tau0 must be positive")
    r, s, nu = params.r, params.s, params.nu
    u0 = tau0 ** (-(s + 1.0) / r)
    cs = float(params.sound_speed(tau0))
    lhs = (s + 1.0) / r * tau0 ** (-(r + s + 1.0) / r)
    admissible = bool(lhs > cs)
    if not admissible:
        return HopfPoint(tau0=tau0, u0=u0, cs=cs, kH=math.nan, XH=math.nan, admissible=False)
    alpha = (s + 1.0) / tau0 - cs * r / u0
    kH = math.sqrt(alpha * tau0**2 / (cs * nu))
    return HopfPoint(tau0=tau0, u0=u0, cs=cs, kH=kH, XH=2.0 * math.pi / kH, admissible=True)


def hopf_polynomial(params: ModelParams, eq: Equilibrium, k):
    """Symbol of the profile ODE linearized about ``eq`` (zero at a Hopf point)."""
    r, s, nu = params.r, params.s, params.nu
    cs2 = float(params.sound_speed(eq.tau0)) ** 2
    c = eq.c
    return ((s + 1.0) / eq.tau0 - c * r / eq.u0 + 1j * k * (c * c - cs2)
            - c * nu * k * k / eq.tau0**2)


def _dispersion_coefficients(params: ModelParams, eq: Equilibrium, k):
    r = params.r
    nu = params.nu
    a = r / eq.u0 - 2j * eq.c * k + nu * k * k / eq.tau0**2
    b = 1j * k * hopf_polynomial(params, eq, k)
    return a, b


def dispersion_polynomial(params: ModelParams, eq: Equilibrium, k, lam):
    a, b = _dispersion_coefficients(params, eq, k)
    return lam * lam + a * lam + b


def constant_state_dispersion(params: ModelParams, eq: Equilibrium, k: float) -> DispersionRoots:
    """Roots of the constant-state dispersion relation at Fourier frequency ``k``.

    ``lambda_minus`` precedes ``lambda_plus`` in (Re, Im) order.
    """
    a, b = _dispersion_coefficients(params, eq, k)
    disc = np.sqrt(complex(a * a - 4.0 * b))
    # avoid cancellation in the smaller root
    big = -(a + disc) / 2.0 if (a.conjugate() * disc).real >= 0 else -(a - disc) / 2.0
    small = b / big if big != 0 else complex(-a - big)
    lo, hi = sorted((complex(big), complex(small)), key=lambda z: (z.real, z.imag))
    return DispersionRoots(k=float(k), lambda_plus=hi, lambda_minus=lo)


def neutral_branch(params: ModelParams, eq: Equilibrium, ks) -> np.ndarray:
    """The dispersion branch through ``lambda(0) = 0``, tracked by continuation.

    ``ks`` must be ordered outward from zero (either sign); each root is
    chosen nearest the previous one.
    """
    out = np.empty(len(ks), dtype=complex)
    prev = 0.0 + 0.0j
    for i, k in enumerate(ks):
        roots = constant_state_dispersion(params, eq, k).roots
        prev = min(roots, key=lambda z: abs(z - prev))
        out[i] = prev
    return out


def neutral_branch_derivatives(params: ModelParams, eq: Equilibrium) -> tuple[complex, complex]:
    """Closed-form ``lambda'(0)`` and ``lambda''(0)`` of the neutral branch.

    Implicit differentiation of ``lambda^2 + a(k) lambda + b(k) = 0`` at
    ``(k, lambda) = (0, 0)``.
    """
    r, s = params.r, params.s
    c, tau0, u0 = eq.c, eq.tau0, eq.u0
    cs2 = float(params.sound_speed(tau0)) ** 2
    a0 = r / u0
    d1 = -1j * ((s + 1.0) * u0 / (r * tau0) - c)
    # a'(0) = -2ic, b''(0) = -2(c^2 - cs^2)
    d2 = -(2.0 * d1 * d1 - 4j * c * d1 - 2.0 * (c * c - cs2)) / a0
    return complex(d1), complex(d2)


def neutral_branch_fd(params: ModelParams, eq: Equilibrium, h: float = 1e-3) -> tuple[complex, complex]:
    """Five-point finite-difference derivatives of the neutral branch at 0."""
    plus = neutral_branch(params, eq, [h, 2 * h])
    minus = neutral_branch(params, eq, [-h, -2 * h])
    lp1, lp2 = plus
    lm1, lm2 = minus
    d1 = (lm2 - 8 * lm1 + 8 * lp1 - lp2) / (12 * h)
    d2 = (-lp2 + 16 * lp1 + 16 * lm1 - lm2) / (12 * h * h)
    return complex(d1), complex(d2)


def dispersion_hopf_wavenumber(params: ModelParams, eq: Equilibrium, kmax: float = 50.0) -> float:
    """Positive ``k`` where ``lambda = 0`` solves the dispersion relation.

    Independent route to the Hopf wavenumber: the constant term of the
    quadratic is ``i k P(k)``; at ``c = c_s`` the real part of ``P``
    decides, located here by bracketing on a scan.
    """
    ks = np.linspace(1e-6, kmax, 20001)
    vals = np.array([(dispersion_polynomial(params, eq, k, 0.0) / (1j * k)).real for k in ks])
    idx = np.flatnonzero(vals[:-1] * vals[1:] < 0)
    if len(idx) == 0:
        return math.nan
    i = idx[0]
    return brentq(lambda k: (dispersion_polynomial(params, eq, k, 0.0) / (1j * k)).real,
                  ks[i], ks[i + 1], xtol=1e-15)
