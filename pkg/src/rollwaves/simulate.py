"""Time evolution of the Lagrangian system on a periodic domain.

Method of lines in conservation form

    tau_t = (u + c tau)_x
    u_t   = (-(2F)^-1 tau^-2 + nu tau^-2 u_x + c u)_x + 1 - tau^(s+1) u^r

in a frame moving with Lagrangian speed ``c`` (``c = 0`` is the lab
frame), advanced by the three-stage SSP Runge-Kutta scheme.  Spatial
derivatives are Fourier pseudo-spectral (default) or second-order
central differences.  Both keep ``mean(tau)`` fixed to round-off.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar

from .model import DomainError, ModelParams
from .orbit import PeriodicProfile, fourier_shift

SCHEMES = ("spectral", "central")


class CFLViolation(ValueError):
    """Requested time step exceeds the stability limits."""


@dataclass(frozen=True)
class SimConfig:
    params: ModelParams = field(default_factory=ModelParams)
    L: float = 2 * math.pi
    n: int = 256
    dt: float | None = None
    T: float = 1.0
    c: float = 0.0  # frame speed; 0 is the lab frame
    scheme: str = "spectral"
    cfl: float = 0.3
    diffusion_number: float = 0.2

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.n < 8 or self.L <= 0 or self.T < 0:
            raise ValueError("need n >= 8, L > 0, T >= 0")
        if not (0 < self.cfl <= 0.45 and 0 < self.diffusion_number <= 0.4):
            raise ValueError("cfl must lie in (0, 0.45] and diffusion_number in (0, 0.4]")

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.dx


@dataclass
class SimState:
    t: float
    tau: np.ndarray
    u: np.ndarray

    @property
    def mean_tau(self) -> float:
        return float(np.mean(self.tau))

    @property
    def min_tau(self) -> float:
        return float(np.min(self.tau))


def _limits(state: SimState, cfg: SimConfig) -> tuple[float, float]:
    """Advective and diffusive numbers ``dt * speed / dx`` and ``dt * nu tau^-2 / dx^2``."""
    p = cfg.params
    speed = abs(cfg.c) + float(np.max(p.sound_speed(state.tau)))
    diff = p.nu * float(np.max(state.tau**-2))
    return speed, diff


def stable_dt(state: SimState, cfg: SimConfig) -> float:
    speed, diff = _limits(state, cfg)
    dx = cfg.dx
    return min(cfg.cfl * dx / speed, cfg.diffusion_number * dx * dx / diff)


class _Derivative:
    def __init__(self, n, L, scheme):
        self.scheme = scheme
        self.dx = L / n
        if scheme == "spectral":
            k = 2 * np.pi * np.fft.rfftfreq(n, d=L / n)
            if n % 2 == 0:
                k[-1] = 0.0  # odd derivative drops the Nyquist mode
            self.ik = 1j * k
            self.n = n

    def __call__(self, f):
        if self.scheme == "spectral":
            return np.fft.irfft(self.ik * np.fft.rfft(f), n=self.n)
        return (np.roll(f, -1) - np.roll(f, 1)) / (2 * self.dx)


def _rhs(tau, u, cfg: SimConfig, D: _Derivative):
    p = cfg.params
    if np.any(tau <= 0):
        raise DomainError("vacuum: tau <= 0")
    if np.any(u <= 0):
        raise DomainError("flow reversal: u <= 0")
    c = cfg.c
    pressure = tau**-2 / (2.0 * p.F)
    source = p.friction(tau, u)
    if cfg.scheme == "spectral":
        ux = D(u)
        tau_t = D(u + c * tau)
        u_t = D(-pressure + p.nu * tau**-2 * ux + c * u) + source
    else:
        dx = cfg.dx
        tau_t = D(u + c * tau)
        # nu (tau^-2 u_x)_x with face-centred coefficient
        tf = 0.5 * (tau**-2 + np.roll(tau, -1) ** -2)
        flux = tf * (np.roll(u, -1) - u) / dx
        visc = p.nu * (flux - np.roll(flux, 1)) / dx
        u_t = D(-pressure + c * u) + visc + source
    return tau_t, u_t


def step(state: SimState, cfg: SimConfig, dt: float | None = None, _D=None) -> SimState:
    """One SSP-RK3 (Shu-Osher) step."""
    if np.any(state.tau <= 0):
        raise DomainError("vacuum: tau <= 0")
    dt = dt or cfg.dt or stable_dt(state, cfg)
    speed, diff = _limits(state, cfg)
    if dt * speed / cfg.dx > 0.45 or dt * diff / cfg.dx**2 > 0.4:
        raise CFLViolation(f"dt={dt:.3e} violates the advective/diffusive limits")
    D = _D or _Derivative(cfg.n, cfg.L, cfg.scheme)
    t0, u0 = state.tau, state.u
    a, b = _rhs(t0, u0, cfg, D)
    t1, u1 = t0 + dt * a, u0 + dt * b
    a, b = _rhs(t1, u1, cfg, D)
    t2, u2 = 0.75 * t0 + 0.25 * (t1 + dt * a), 0.75 * u0 + 0.25 * (u1 + dt * b)
    a, b = _rhs(t2, u2, cfg, D)
    t3 = t0 / 3.0 + 2.0 / 3.0 * (t2 + dt * a)
    u3 = u0 / 3.0 + 2.0 / 3.0 * (u2 + dt * b)
    return SimState(t=state.t + dt, tau=t3, u=u3)


class StopRun(Exception):
    """Raised by a callback to end a run early."""


def run(state: SimState, cfg: SimConfig, outputs=(), callback=None) -> SimState:
    """Advance to ``cfg.T`` with fixed steps, landing exactly on every output time.

    ``callback(state)`` is called at the start and at each output time;
    it may raise ``StopRun`` to finish early.
    The step is frozen at the value from the initial data with a small
    safety factor, so runs are bit-reproducible.
    """
    D = _Derivative(cfg.n, cfg.L, cfg.scheme)
    dt0 = cfg.dt or 0.9 * stable_dt(state, cfg)
    marks = sorted({float(t) for t in outputs if state.t < t <= cfg.T} | {cfg.T})
    if callback:
        callback(state)
    for mark in marks:
        span = mark - state.t
        if span <= 0:
            continue
        nsteps = max(1, int(math.ceil(span / dt0 - 1e-9)))
        h = span / nsteps
        for _ in range(nsteps):
            state = step(state, cfg, h, D)
        state = replace(state, t=mark)
        if callback and (mark in outputs or mark == cfg.T):
            try:
                callback(state)
            except StopRun:
                break
    return state


# ------------------------------------------------------------------ profiles on grids

def tile_profile(profile: PeriodicProfile, periods: int, n_per: int) -> tuple[np.ndarray, np.ndarray]:
    """``periods`` copies of the profile on ``periods * n_per`` points (spectral resampling)."""
    tau = _resample(profile.tau, n_per)
    tau = np.tile(tau, periods)
    return tau, profile.q - profile.c * tau


def _resample(f, n):
    m = len(f)
    if m == n:
        return f.copy()
    fh = np.fft.rfft(f)
    out = np.zeros(n // 2 + 1, dtype=complex)
    k = min(len(fh), len(out))
    out[:k] = fh[:k]
    if n < m and n % 2 == 0:
        out[-1] = out[-1].real
    if m % 2 == 0 and n > m:
        out[m // 2] *= 0.5
    return np.fft.irfft(out, n=n) * (n / m)


def shift_optimized_distance(tau, u, ref_tau, ref_u, L, max_shift=None) -> tuple[float, float]:
    """``min_delta max(|tau - tau_ref(. - delta)|, |u - u_ref(. - delta)|)`` and the minimizer."""
    n = len(tau)
    dx = L / n

    def dist(d):
        return max(np.abs(tau - fourier_shift(ref_tau, d, L)).max(), np.abs(u - fourier_shift(ref_u, d, L)).max())

    # coarse scan over grid shifts by cross-correlation, then a bounded refinement
    corr = np.fft.irfft(np.fft.rfft(tau - tau.mean()) * np.conj(np.fft.rfft(ref_tau - ref_tau.mean())), n=n)
    shifts = np.arange(n)
    if max_shift is not None:
        w = np.minimum(shifts, n - shifts) * dx <= max_shift
        corr = np.where(w, corr, -np.inf)
    j = int(np.argmax(corr))
    d0 = (j if j <= n // 2 else j - n) * dx
    res = minimize_scalar(dist, bounds=(d0 - 2 * dx, d0 + 2 * dx), method="bounded",
                          options={"xatol": 1e-10 * L})
    best = min((res.fun, res.x), (dist(d0), d0))
    return float(best[0]), float(best[1])


# ------------------------------------------------------------------ experiments

@dataclass
class Diagnostics:
    t: list = field(default_factory=list)
    linf_raw: list = field(default_factory=list)
    linf_shift_opt: list = field(default_factory=list)
    energy_gradient_region: list = field(default_factory=list)
    energy_constant_region: list = field(default_factory=list)
    mean_tau: list = field(default_factory=list)

    COLUMNS = ("t", "linf_raw", "linf_shift_opt", "energy_gradient_region",
               "energy_constant_region", "mean_tau")

    def rows(self):
        return list(zip(*(getattr(self, k) for k in self.COLUMNS)))

    def as_arrays(self) -> dict[str, np.ndarray]:
        return {k: np.asarray(getattr(self, k)) for k in self.COLUMNS}


@dataclass
class Snapshot:
    t: float
    x: np.ndarray
    tau: np.ndarray
    u: np.ndarray

    def rows(self):
        return list(zip(self.x, self.tau, self.u, 1.0 / self.tau))


def gradient_region(profile_dtau: np.ndarray, fraction: float = 0.1) -> np.ndarray:
    """Mask where ``|U'|`` exceeds ``fraction`` of its maximum."""
    a = np.abs(profile_dtau)
    return a > fraction * a.max()


def gradient_arc(profile_dtau: np.ndarray, L: float, fraction: float = 0.1) -> tuple[float, float]:
    """Sub-cell ends ``(a, b)`` of the gradient-active arc, ``a < b`` (b may exceed L).

    Assumes a single pulse per period, so the region is one arc.
    """
    n = len(profile_dtau)
    dx = L / n
    g = np.abs(profile_dtau) - fraction * np.abs(profile_dtau).max()
    mask = g > 0
    idx = np.flatnonzero(mask)
    gaps = np.diff(np.concatenate([idx, [idx[0] + n]]))
    first = idx[(int(np.argmax(gaps)) + 1) % len(idx)]
    last = first + (n - int(gaps.max()))
    # linear interpolation of the threshold crossing at both ends
    g0, g1 = g[(first - 1) % n], g[first % n]
    a = (first - g1 / (g1 - g0)) * dx
    h0, h1 = g[last % n], g[(last + 1) % n]
    b = (last + h0 / (h0 - h1)) * dx
    return a, b


def arc_weights(n: int, L: float, a: float, b: float) -> np.ndarray:
    """Overlap of each cell ``[x_i - dx/2, x_i + dx/2]`` with the periodic arc ``[a, b]``, over dx."""
    dx = L / n
    lo = np.arange(n) * dx - 0.5 * dx
    w = np.zeros(n)
    for k in (-1, 0, 1):
        aa, bb = a + k * L, b + k * L
        w += np.clip(np.minimum(lo + dx, bb) - np.maximum(lo, aa), 0.0, None)
    return np.clip(w / dx, 0.0, 1.0)


@dataclass
class MetastabilityResult:
    cfg: SimConfig
    diagnostics: Diagnostics
    snapshots: list
    cutoff: float
    mask: np.ndarray


def square_wave(x, center, width, amplitude, L):
    d = (x - center + 0.5 * L) % L - 0.5 * L
    return np.where(np.abs(d) <= 0.5 * width, amplitude, 0.0)


def run_metastability(profile: PeriodicProfile, n: int = 1024, amplitude: float = 0.05,
                      width: float | None = None, T: float | None = None, snapshot_times=(),
                      n_diag: int = 200, scheme: str = "spectral", fraction: float = 0.1) -> MetastabilityResult:
    """Square-wave perturbation of a near-homoclinic wave, followed in the co-moving frame.

    The perturbation is added to ``tau`` on the gradient-active region (or
    a centred window of ``width``).  The run stops before the fastest
    characteristic starting at the back of that region wraps around the
    periodic domain.
    """
    X, c, p = profile.X, profile.c, profile.params
    tau0, u0 = tile_profile(profile, 1, n)
    dtau0 = _resample(profile.dtau, n)
    cfg0 = SimConfig(params=p, L=X, n=n, c=c, scheme=scheme, T=1.0)
    x = cfg0.x
    mask = gradient_region(dtau0, fraction)
    arc = gradient_arc(dtau0, X, fraction)
    active = arc[1] - arc[0]
    center = 0.5 * (arc[0] + arc[1])
    width = active if width is None else width
    pert = square_wave(x, center, width, amplitude, X)
    # co-moving characteristic speeds at the constant state are -c -+ c_s
    tau_inf = float(np.median(tau0[~mask]))
    fastest = c + float(p.sound_speed(tau_inf))
    cutoff = (X - active) / fastest
    T = cutoff if T is None else min(T, cutoff)
    cfg = replace(cfg0, T=T)
    state = SimState(t=0.0, tau=tau0 + pert, u=u0.copy())
    diag = Diagnostics()
    snaps = []
    outputs = set(np.linspace(0, T, n_diag + 1)[1:]) | {t for t in snapshot_times if t <= T}

    def record(s: SimState):
        raw = max(np.abs(s.tau - tau0).max(), np.abs(s.u - u0).max())
        # energies are measured against the best translate of the wave
        d_opt, delta = shift_optimized_distance(s.tau, s.u, tau0, u0, X)
        rt, ru = fourier_shift(tau0, delta, X), fourier_shift(u0, delta, X)
        w = arc_weights(n, X, arc[0] + delta, arc[1] + delta)
        e = (s.tau - rt) ** 2 + (s.u - ru) ** 2
        diag.t.append(s.t)
        diag.linf_raw.append(float(raw))
        diag.linf_shift_opt.append(d_opt)
        diag.energy_gradient_region.append(float((w * e).sum() * cfg.dx))
        diag.energy_constant_region.append(float(((1.0 - w) * e).sum() * cfg.dx))
        diag.mean_tau.append(s.mean_tau)
        if any(abs(s.t - ts) < 1e-12 for ts in snapshot_times):
            snaps.append(Snapshot(t=s.t, x=x.copy(), tau=s.tau.copy(), u=s.u.copy()))

    run(state, cfg, outputs=sorted(outputs), callback=record)
    return MetastabilityResult(cfg=cfg, diagnostics=diag, snapshots=snaps, cutoff=cutoff, mask=mask)


@dataclass
class ProbeResult:
    verdict: str  # bounded | growing | inconclusive
    eps: float
    diagnostics: Diagnostics
    max_distance: float


def localized_bump(x, center, width, L):
    d = (x - center + 0.5 * L) % L - 0.5 * L
    return np.exp(-((d / width) ** 2))


def run_stability_probe(profile: PeriodicProfile, eps: float = 1e-3, T: float = 200.0, periods: int = 8,
                        n_per: int = 64, n_diag: int = 200, scheme: str = "spectral",
                        perturbation: tuple[np.ndarray, np.ndarray] | None = None,
                        stop_on_growth: bool = False) -> ProbeResult:
    """Evolve ``m`` copies of the wave plus ``eps`` times a smooth bump.

    The verdict is ``bounded`` if the shift-optimized distance stays below
    ``10 eps`` and ``growing`` once it exceeds ``100 eps`` (which ends the
    run early with ``stop_on_growth``).
    """
    if periods < 1:
        raise ValueError("periods must be >= 1")
    X, p = profile.X, profile.params
    n = periods * n_per
    L = periods * X
    cfg = SimConfig(params=p, L=L, n=n, c=profile.c, scheme=scheme, T=T)
    ref_tau, ref_u = tile_profile(profile, periods, n_per)
    x = cfg.x
    if perturbation is None:
        bump = localized_bump(x, 0.5 * L, 0.25 * X, L)
        ptau, pu = bump, bump
    else:
        ptau, pu = perturbation
    state = SimState(t=0.0, tau=ref_tau + eps * ptau, u=ref_u + eps * pu)
    diag = Diagnostics()
    verdict = ["bounded"]

    def record(s: SimState):
        d_raw = float(max(np.abs(s.tau - ref_tau).max(), np.abs(s.u - ref_u).max()))
        d_opt = shift_optimized_distance(s.tau, s.u, ref_tau, ref_u, L, max_shift=0.5 * X)[0]
        diag.t.append(s.t)
        diag.linf_raw.append(d_raw)
        diag.linf_shift_opt.append(d_opt)
        diag.energy_gradient_region.append(math.nan)
        diag.energy_constant_region.append(math.nan)
        diag.mean_tau.append(s.mean_tau)
        if eps > 0 and d_opt > 100 * eps:
            verdict[0] = "growing"
            if stop_on_growth:
                raise StopRun
        elif verdict[0] == "bounded" and d_opt >= 10 * max(eps, 1e-7):
            verdict[0] = "inconclusive"

    run(state, cfg, outputs=list(np.linspace(0, T, n_diag + 1)[1:]), callback=record)
    return ProbeResult(verdict=verdict[0], eps=eps, diagnostics=diag,
                       max_distance=float(max(diag.linf_shift_opt)))


def bloch_mode_perturbation(profile: PeriodicProfile, periods: int = 8, n_per: int = 64, N: int = 32):
    """Leading Hill eigenmode among the Floquet exponents that fit ``periods`` copies.

    Returns ``(ptau, pu, lam)`` on the probe grid, scaled to unit max norm.
    """
    from .bloch import Window, bloch_sample, build_coefficients

    X = profile.X
    co = build_coefficients(profile if profile.n >= 4 * N + 8 else profile.sample(4 * N + 8))
    best = None
    for k in range(-(periods // 2), periods // 2 + 1):
        xi = 2 * np.pi * k / (periods * X)
        s = bloch_sample(co, xi, N, Window(-1.0, 1.0, 3.0), check=False, vectors=True)
        if len(s.eigenvalues) and (best is None or s.eigenvalues[0].real > best[1].real):
            best = (xi, s.eigenvalues[0], s.eigenvectors[:, 0])
    xi, lam, v = best
    n = periods * n_per
    x = np.arange(n) * periods * X / n
    kappa = xi + 2 * np.pi * np.arange(-N, N + 1) / X
    E = np.exp(1j * np.outer(x, kappa))
    size = 2 * N + 1
    pt, pu = E @ v[:size], E @ v[size:]
    scale = np.abs(np.concatenate([pt, pu])).max()
    return np.real(pt) / scale, np.real(pu) / scale, complex(lam)


def growth_rate(diagnostics: Diagnostics, t0: float, t1: float, key: str = "linf_raw") -> float:
    """Least-squares slope of ``log`` of a diagnostic over ``[t0, t1]``."""
    d = diagnostics.as_arrays()
    sel = (d["t"] >= t0) & (d["t"] <= t1)
    return float(np.polyfit(d["t"][sel], np.log(d[key][sel]), 1)[0])
