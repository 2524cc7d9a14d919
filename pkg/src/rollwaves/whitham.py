"""Whitham averaged system of a periodic wave and its characteristic speeds.

Slow variables are the Eulerian wavenumber ``k`` and mass ``M``; the
averaged system reads

    k_t + (k c)_x = 0,    M_t + (c M - q)_x = 0

in Eulerian phase speed ``c`` and integration constant ``q``.  They are
obtained from a Lagrangian orbit through the mass-coordinate map: the
Eulerian period is ``L = int tau dx``, the Eulerian phase speed equals the
Lagrangian integration constant and the Eulerian integration constant
equals the Lagrangian speed (mass flux through a crest).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DomainError
from .orbit import OrbitError, PeriodicProfile, QClosure, resolve_from


@dataclass(frozen=True)
class AveragedQuantities:
    k: float
    M: float
    cE: float
    qE: float
    eulerian_length: float

    @property
    def flux(self) -> tuple[float, float]:
        """Fluxes ``(k cE, cE M - qE)`` of the averaged system."""
        return self.k * self.cE, self.cE * self.M - self.qE


def averaged_quantities(profile: PeriodicProfile) -> AveragedQuantities:
    """Eulerian averages of a Lagrangian profile."""
    L = profile.eulerian_length
    if L is None or not L > 0:
        # spectral quadrature of a periodic sample is exact to grid accuracy
        L = float(np.mean(profile.tau) * profile.X)
    k = 1.0 / L
    M = profile.X / L
    return AveragedQuantities(k=k, M=M, cE=profile.q, qE=profile.c, eulerian_length=L)


@dataclass
class WhithamData:
    J1: np.ndarray  # d(k, M) / d(cE, qE)
    J2: np.ndarray  # d(k cE, cE M - qE) / d(cE, qE)
    z1: complex
    z2: complex
    classification: str
    dM_dq: float
    nondegenerate: bool
    averages: AveragedQuantities
    h: float

    @property
    def z(self) -> np.ndarray:
        return np.array([self.z1, self.z2])

    def delta(self, lam, nu):
        """Eulerian dispersion polynomial ``det(lam J1 - nu J2)``."""
        return np.linalg.det(lam * self.J1 - nu * self.J2)

    def delta_lagrangian(self, lam, nu):
        """Dispersion polynomial in the co-moving Lagrangian frame, ``nu = log sigma``.

        Its roots ``lam = -nu k (z - cE)`` are the tangent directions of the
        Bloch curves at the origin with ``sigma = exp(i xi X)``.
        """
        a = self.averages
        return np.linalg.det(lam * self.J1 + a.k * nu * (self.J2 - a.cE * self.J1))

    def bloch_speeds(self) -> np.ndarray:
        """Characteristic speeds in Bloch convention: ``lambda_j ~ -i z_j xi``."""
        return self.averages.M * (self.z - self.averages.cE)


def characteristic_roots(J1: np.ndarray, J2: np.ndarray, disc_tol: float = 1e-8):
    """Roots of ``det(z J1 - J2) = 0`` and the hyperbolicity class."""
    # det(z J1 - J2) = a z^2 + b z + c
    a = np.linalg.det(J1)
    c = np.linalg.det(J2)
    b = -(J1[0, 0] * J2[1, 1] + J2[0, 0] * J1[1, 1] - J1[0, 1] * J2[1, 0] - J2[0, 1] * J1[1, 0])
    scale = max(np.linalg.norm(J1), np.linalg.norm(J2)) ** 2
    if abs(a) < 1e-12 * scale:
        raise np.linalg.LinAlgError("J1 nearly singular: averaged system not evolutionary")
    disc = b * b - 4 * a * c
    sq = np.sqrt(complex(disc))
    z = sorted([(-b + sq) / (2 * a), (-b - sq) / (2 * a)], key=lambda w: (w.real, w.imag))
    if abs(disc) <= disc_tol * scale:
        cls = "degenerate"
    elif disc > 0:
        cls = "hyperbolic"
    else:
        cls = "elliptic"
    return complex(z[0]), complex(z[1]), cls


def whitham_jacobians(profile: PeriodicProfile, h: float | None = None, tol_nd: float = 1e-6,
                      disc_tol: float = 1e-8, h_min: float = 1e-9, **solve_kw) -> WhithamData:
    """Central differences of the averages over neighbouring orbits.

    The speed is nearly flat in the period along the family, so the
    stencil moves the period ``X`` (relative step ``h``) and the Lagrangian
    integration constant (step ``h max(|c|, 1)``) and lets the speed float.
    The chain rule then gives derivatives in the Eulerian ``(cE, qE)``.
    Close to the homoclinic limit the orbit reacts violently to ``q``; the
    step is divided by 10 until the stencil solves converge (down to ``h_min``).
    """
    c, q, X = profile.c, profile.q, profile.X
    h = 1e-4 if h is None else h
    solve_kw.setdefault("n", 64)
    solve_kw.setdefault("maxiter", 20)

    def averages(XX, qq):
        prof = resolve_from(profile, "fix-X", XX, closure=QClosure.fixed(qq), **solve_kw)
        a = averaged_quantities(prof)
        return np.array([a.k, a.M, a.k * a.cE, a.cE * a.M - a.qE, a.cE, a.qE])

    while True:
        hq = h * max(abs(c), 1.0)
        hX = h * X
        try:
            dX = (averages(X + hX, q) - averages(X - hX, q)) / (2 * hX)
            dq = (averages(X, q + hq) - averages(X, q - hq)) / (2 * hq)
            break
        except (OrbitError, DomainError):
            h /= 10
            if h < h_min:
                raise
    G = np.column_stack([dX, dq])
    # d(.)/d(cE, qE) = d(.)/d(X, q) [d(cE, qE)/d(X, q)]^-1
    J = G[:4] @ np.linalg.inv(G[4:])
    J1, J2 = J[:2], J[2:]
    z1, z2, cls = characteristic_roots(J1, J2, disc_tol)
    dM_dq = float(J1[1, 1])
    return WhithamData(J1=J1, J2=J2, z1=z1, z2=z2, classification=cls, dM_dq=dM_dq,
                       nondegenerate=abs(dM_dq) > tol_nd, averages=averaged_quantities(profile), h=h)


@dataclass
class TangencyReport:
    whitham: np.ndarray
    bloch: np.ndarray
    mismatch: float
    passed: bool


def verify_tangency(wd: WhithamData, curves, tol: float = 1e-2) -> TangencyReport:
    """Compare Whitham speeds with fitted Bloch tangents as unordered pairs."""
    zw = np.asarray(wd.bloch_speeds(), complex)
    zb = np.asarray(curves.z, complex)
    scale = max(np.abs(zw).max(), np.abs(zb).max(), 1e-300)

    def err(a, b):
        return max(abs(a[0] - b[0]), abs(a[1] - b[1])) / scale

    mismatch = min(err(zw, zb), err(zw, zb[::-1]))
    return TangencyReport(whitham=zw, bloch=zb, mismatch=float(mismatch), passed=bool(mismatch < tol))

