"""Floquet-Bloch spectra of the linearized operator by Hill's method.

The operator linearized about a profile in the co-moving frame is

    L v = (B v')' - (A v)' + C v

with X-periodic 2x2 coefficients.  For each Floquet exponent ``xi`` the
Bloch operator ``L_xi = e^{-i xi x} L e^{i xi x}`` is truncated to the
Fourier modes ``e^{2 pi i j x / X}``, ``|j| <= N``, and its eigenvalues are
computed with a dense nonsymmetric (QR) solver.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .orbit import PeriodicProfile


@dataclass
class LinearizedCoefficients:
    X: float
    c: float
    A: np.ndarray  # (2, 2, n) samples
    B: np.ndarray
    C: np.ndarray
    A_hat: np.ndarray = field(repr=False, default=None)  # (2, 2, n) fft / n
    B_hat: np.ndarray = field(repr=False, default=None)
    C_hat: np.ndarray = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.A.shape[-1]

    def tail(self, mode: int) -> float:
        """Largest coefficient magnitude at Fourier index ``|j| >= mode``."""
        n = self.n
        j = np.abs(np.fft.fftfreq(n, d=1.0 / n))
        sel = j >= mode
        if not np.any(sel):
            return 0.0
        return float(max(np.abs(h[..., sel]).max() for h in (self.A_hat, self.B_hat, self.C_hat)))


def build_coefficients(profile: PeriodicProfile) -> LinearizedCoefficients:
    """Sample ``A, B, C`` on the profile grid and take their FFTs."""
    p = profile.params
    tau, u, du = profile.tau, profile.u, profile.du
    c = profile.c
    n = profile.n
    A = np.zeros((2, 2, n))
    A[0, 0] = -c
    A[0, 1] = -1.0
    A[1, 0] = -(tau**-3) * (1.0 / p.F - 2.0 * p.nu * du)
    A[1, 1] = -c
    B = np.zeros((2, 2, n))
    B[1, 1] = p.nu * tau**-2
    C = np.zeros((2, 2, n))
    C[1, 0] = -(p.s + 1.0) * tau**p.s * u**p.r
    C[1, 1] = -p.r * tau ** (p.s + 1.0) * u ** (p.r - 1.0)
    hat = lambda M: np.fft.fft(M, axis=-1) / n
    return LinearizedCoefficients(X=profile.X, c=c, A=A, B=B, C=C,
                                  A_hat=hat(A), B_hat=hat(B), C_hat=hat(C))


def _toeplitz(coef_hat: np.ndarray, N: int) -> np.ndarray:
    n = len(coef_hat)
    j = np.arange(-N, N + 1)
    diff = j[:, None] - j[None, :]
    if 2 * N >= (n + 1) // 2:
        # index beyond the sampled band: treat as zero (resolved profiles only)
        out = np.where(np.abs(diff) < (n + 1) // 2, coef_hat[diff % n], 0.0)
        return out.astype(complex)
    return coef_hat[diff % n].astype(complex)


def assemble_bloch_matrix(coeffs: LinearizedCoefficients, xi: float, N: int) -> np.ndarray:
    """Galerkin matrix of ``L_xi`` on ``|j| <= N``; unknowns ordered (tau modes, u modes)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    X = coeffs.X
    kappa = xi + 2.0 * np.pi * np.arange(-N, N + 1) / X
    D = 1j * kappa
    size = 2 * N + 1
    M = np.zeros((2 * size, 2 * size), dtype=complex)
    for a in range(2):
        for b in range(2):
            Bt = _toeplitz(coeffs.B_hat[a, b], N)
            At = _toeplitz(coeffs.A_hat[a, b], N)
            Ct = _toeplitz(coeffs.C_hat[a, b], N)
            blk = D[:, None] * Bt * D[None, :] - D[:, None] * At + Ct
            M[a * size:(a + 1) * size, b * size:(b + 1) * size] = blk
    return M


@dataclass(frozen=True)
class Window:
    re_min: float = -1.0
    re_max: float = 1.0
    im_max: float = 10.0

    def contains(self, lam: np.ndarray) -> np.ndarray:
        return (lam.real >= self.re_min) & (lam.real <= self.re_max) & (np.abs(lam.imag) <= self.im_max)


@dataclass
class BlochSample:
    xi: float
    eigenvalues: np.ndarray
    N: int
    converged: bool = True
    valid: bool = True
    drift: float = 0.0
    eigenvectors: np.ndarray | None = None


def _eigs(M, vectors=False):
    if vectors:
        w, v = scipy.linalg.eig(M, check_finite=False)
        return w, v
    return scipy.linalg.eig(M, right=False, check_finite=False), None


def bloch_sample(coeffs: LinearizedCoefficients, xi: float, N: int, window: Window = Window(),
                 check: bool = True, conv_tol: float = 1e-6, vectors: bool = False) -> BlochSample:
    """Eigenvalues of the truncated ``L_xi`` inside ``window``, sorted by Re descending.

    With ``check`` the truncation is doubled and every windowed eigenvalue
    must reappear within ``conv_tol``.
    """
    try:
        w, v = _eigs(assemble_bloch_matrix(coeffs, xi, N), vectors)
    except (np.linalg.LinAlgError, ValueError):
        return BlochSample(xi=xi, eigenvalues=np.array([], complex), N=N, converged=False, valid=False)
    keep = window.contains(w) & np.isfinite(w)
    lam = w[keep]
    order = np.lexsort((lam.imag, -lam.real))
    lam = lam[order]
    vecs = v[:, keep][:, order] if vectors else None
    converged, drift = True, 0.0
    if check:
        try:
            w2, _ = _eigs(assemble_bloch_matrix(coeffs, xi, 2 * N))
        except (np.linalg.LinAlgError, ValueError):
            return BlochSample(xi=xi, eigenvalues=lam, N=N, converged=False, valid=False)
        if len(lam):
            d = np.abs(lam[:, None] - w2[None, :]).min(axis=1)
            drift = float(d.max())
            converged = drift < conv_tol
    return BlochSample(xi=xi, eigenvalues=lam, N=N, converged=converged, drift=drift, eigenvectors=vecs)


TRUNCATIONS = (16, 24, 32, 48, 64, 96, 128, 192, 256)


def choose_truncation(coeffs: LinearizedCoefficients, tail_tol: float = 1e-7) -> int:
    """Smallest standard ``N`` whose coefficient tail beyond mode ``N`` is below ``tail_tol``."""
    for N in TRUNCATIONS:
        if 4 * N + 8 <= coeffs.n and coeffs.tail(N) < tail_tol:
            return N
    return TRUNCATIONS[-1]


def default_xi_grid(X: float, n: int = 201) -> np.ndarray:
    """``n`` uniform Floquet exponents on ``[-pi/X, pi/X)`` (includes 0 for odd n)."""
    return (np.arange(n) - n // 2) * (2.0 * np.pi / (n * X))


@dataclass
class CriticalCurves:
    z: np.ndarray  # (2,) complex, lambda_j = -i z_j xi - b_j xi^2 + ...
    b: np.ndarray  # (2,) complex
    xi: np.ndarray
    curves: np.ndarray  # (2, len(xi)) ordered eigenvalues
    residual: float
    trustworthy: bool


@dataclass
class SpectrumReport:
    X: float
    samples: list[BlochSample]
    max_real: float
    max_point: tuple[float, complex]
    theta: float
    zero_multiplicity: int
    kernel_dim: int
    verdicts: dict[str, bool]
    curves: CriticalCurves | None
    tolerances: dict[str, float]

    @property
    def stable(self) -> bool:
        return all(self.verdicts[k] for k in ("D1", "D2", "D3'", "H4"))

    @property
    def classification(self) -> str:
        """``stable``, ``unstable-origin`` or ``unstable-essential``."""
        if self.stable:
            return "stable"
        lam = self.max_point[1]
        if not self.verdicts["D1"] and abs(lam) >= self.tolerances["origin_radius"]:
            return "unstable-essential"
        return "unstable-origin"

    def points(self):
        """Rows ``(xi, re, im, converged)`` over all samples."""
        for s in self.samples:
            for lam in s.eigenvalues:
                yield s.xi, lam.real, lam.imag, s.converged


def _near_origin_pair(sample: BlochSample) -> np.ndarray:
    lam = sample.eigenvalues
    if len(lam) < 2:
        return np.array([np.nan, np.nan], complex)
    idx = np.argsort(np.abs(lam))[:2]
    return lam[idx]


def fit_critical_curves(xis: np.ndarray, pairs: np.ndarray, X: float, fit_range: float = 0.3,
                        resid_tol: float = 1e-3, noise: float = 1e-9) -> CriticalCurves:
    """Fit ``lambda_j(xi) = -i z_j xi - b_j xi^2`` to the two eigenvalues nearest 0.

    Works through the symmetric functions of the pair, which are analytic
    in ``xi`` and need no branch assignment: the sum is fitted by a cubic
    and the product by a quartic polynomial without constant term.
    Residuals are relative, with ``noise`` as the eigenvalue accuracy floor.
    """
    sel = (np.abs(xis) * X < fit_range) & (xis != 0) & np.all(np.isfinite(pairs), axis=1)
    xs = xis[sel]
    pr = pairs[sel]
    ssum = pr.sum(axis=1)
    prod = pr[:, 0] * pr[:, 1]
    V1 = np.column_stack([xs, xs**2, xs**3])
    cs, *_ = np.linalg.lstsq(V1.astype(complex), ssum, rcond=None)
    V2 = np.column_stack([xs**2, xs**3, xs**4])
    cp, *_ = np.linalg.lstsq(V2.astype(complex), prod, rcond=None)
    s1, s2 = cs[0], cs[1]
    p2, p3 = cp[0], cp[1]
    # sum = -i(z1+z2) xi - (b1+b2) xi^2; prod = -z1 z2 xi^2 + i(z1 b2 + z2 b1) xi^3
    zsum = 1j * s1
    zprod = -p2
    disc = np.sqrt(zsum * zsum - 4 * zprod)
    z = np.array([(zsum + disc) / 2, (zsum - disc) / 2])
    z = z[np.lexsort((z.imag, z.real))]
    if abs(z[0] - z[1]) > 1e-12 * max(1.0, abs(z).max()):
        Msys = np.array([[-1.0, -1.0], [1j * z[1], 1j * z[0]]])
        b = np.linalg.solve(Msys, np.array([s2, p3]))
    else:
        b = np.array([-s2 / 2, -s2 / 2])
    # ordered curves by matching to the fitted expansion
    curves = np.empty((2, len(xs)), complex)
    for i, x in enumerate(xs):
        pred = -1j * z * x - b * x * x
        a, bb = pr[i]
        if abs(a - pred[0]) + abs(bb - pred[1]) <= abs(a - pred[1]) + abs(bb - pred[0]):
            curves[:, i] = (a, bb)
        else:
            curves[:, i] = (bb, a)
    # fit residual of the symmetric functions, relative to their size
    s_scale = max(np.abs(ssum).max(), noise)
    rs = np.abs(V1 @ cs - ssum).max() / s_scale
    rp = np.abs(V2 @ cp - prod).max() / max(np.abs(prod).max(), noise * s_scale)
    resid = float(max(rs, rp)) if len(xs) else math.inf
    return CriticalCurves(z=z, b=b, xi=xs, curves=curves, residual=resid,
                          trustworthy=bool(len(xs) >= 4 and resid < resid_tol))


def critical_curves(report: SpectrumReport) -> CriticalCurves:
    if report.curves is None:
        raise ValueError("report has no critical-curve fit")
    return report.curves


def compute_spectrum(profile: PeriodicProfile, xi_grid=None, N: int | None = 64, window: Window = Window(),
                     tol_stab: float = 5e-4, origin_xi: float = 0.05, origin_radius: float = 0.1,
                     zero_radius: float = 1e-3, sv_tol: float = 1e-7, check: bool = True,
                     conv_tol: float = 1e-6, fit_range: float = 0.3, workers: int = 1) -> SpectrumReport:
    """Hill-method spectrum over ``xi_grid`` with stability verdicts.

    Verdicts use converged samples only.  D1: max Re outside the origin
    ball is below ``tol_stab``.  D2: the fitted critical curves are
    tangent to the imaginary axis (real ``z_j``) and bend left (``b_j > 0``).
    D3': exactly two eigenvalues of ``L_0`` within ``zero_radius``.  H4:
    exactly one singular value of the ``L_0`` matrix below ``sv_tol``.
    ``N=None`` picks the truncation from the coefficient tail.
    """
    X = profile.X
    if xi_grid is None:
        xi_grid = default_xi_grid(X)
    xi_grid = np.asarray(xi_grid, float)
    if N is None:
        N = choose_truncation(build_coefficients(profile.sample(max(profile.n, 2048))))
    need = 4 * N + 8
    if profile.n < need:
        n = 1 << int(math.ceil(math.log2(need)))
        profile = profile.sample(n)
    coeffs = build_coefficients(profile)

    # make sure the fit region is sampled densely enough
    fit_xi = np.linspace(-fit_range / X, fit_range / X, 13)
    fit_xi = fit_xi[fit_xi != 0] * 0.95
    all_xi = np.unique(np.concatenate([xi_grid, fit_xi, [0.0]]))

    def work(xi):
        return bloch_sample(coeffs, xi, N, window, check=check, conv_tol=conv_tol)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            samples = list(ex.map(work, all_xi))
    else:
        samples = [work(x) for x in all_xi]
    by_xi = {s.xi: s for s in samples}
    grid_samples = [by_xi[x] for x in np.unique(np.concatenate([xi_grid, [0.0]]))]

    good = [s for s in samples if s.valid and s.converged]
    max_real, max_point = -math.inf, (math.nan, complex(math.nan))
    for s in good:
        lam = s.eigenvalues
        if abs(s.xi) * X < origin_xi:
            lam = lam[np.abs(lam) >= origin_radius]
        if len(lam):
            i = int(np.argmax(lam.real))
            if lam[i].real > max_real:
                max_real, max_point = float(lam[i].real), (float(s.xi), complex(lam[i]))

    M0 = assemble_bloch_matrix(coeffs, 0.0, N)
    w0 = scipy.linalg.eig(M0, right=False, check_finite=False)
    zero_mult = int(np.sum(np.abs(w0) < zero_radius))
    sv = scipy.linalg.svd(M0, compute_uv=False, check_finite=False)
    kernel_dim = int(np.sum(sv < sv_tol))

    small = [s for s in samples if s.valid and 0 < abs(s.xi) * X < fit_range]
    curves = None
    theta = -math.inf
    if len(small) >= 4:
        xs = np.array([s.xi for s in small])
        pairs = np.array([_near_origin_pair(s) for s in small])
        curves = fit_critical_curves(xs, pairs, X, fit_range=fit_range)
        theta = float(np.min(curves.b.real))
    z_real = curves is not None and bool(np.all(np.abs(curves.z.imag) <= 1e-3 * np.abs(curves.z).max()))
    d2 = bool(curves is not None and curves.trustworthy and z_real and theta > 0)
    verdicts = {
        "D1": bool(max_real < tol_stab) and len(good) > 0,
        "D2": d2,
        "D3'": zero_mult == 2,
        "H4": kernel_dim == 1,
    }
    return SpectrumReport(X=X, samples=grid_samples, max_real=max_real, max_point=max_point, theta=theta,
                          zero_multiplicity=zero_mult, kernel_dim=kernel_dim, verdicts=verdicts,
                          curves=curves,
                          tolerances={"tol_stab": tol_stab, "origin_xi": origin_xi,
                                      "origin_radius": origin_radius, "zero_radius": zero_radius,
                                      "sv_tol": sv_tol, "conv_tol": conv_tol, "N": N})


def translation_mode_residual(coeffs: LinearizedCoefficients, profile: PeriodicProfile, N: int) -> float:
    """``|M_0 c| / |c|`` for the Fourier coefficients ``c`` of ``U'``."""
    v = translation_coefficients(profile, N)
    M = assemble_bloch_matrix(coeffs, 0.0, N)
    return float(np.linalg.norm(M @ v) / np.linalg.norm(v))


def translation_coefficients(profile: PeriodicProfile, N: int) -> np.ndarray:
    n = profile.n
    j = np.arange(-N, N + 1)
    th = (np.fft.fft(profile.dtau) / n)[j % n]
    uh = (np.fft.fft(profile.du) / n)[j % n]
    return np.concatenate([th, uh])
