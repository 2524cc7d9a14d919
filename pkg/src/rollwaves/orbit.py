"""Periodic traveling waves: shooting, Newton correction and continuation.

Profiles solve the scalar second-order equation obtained by eliminating
``u = q - c tau`` from the traveling-wave ODE, written as a first-order
system in ``(tau, tau')``.  Periodic orbits are zeros of the period map
``H(X, c, q, b) = phi_X(b) - b``; the phase is fixed by ``b2 = tau'(0) = 0``
with ``tau(0)`` at a maximum.

Long periods are handled by multiple shooting: the period is split into
``m`` segments whose start states are extra Newton unknowns.  For ``m = 1``
this is plain single shooting on ``H``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp

from .model import DomainError, ModelParams, find_equilibria, hopf_analysis

RTOL = 1e-11
ATOL = 1e-13


class OrbitError(RuntimeError):
    pass


class NonConvergence(OrbitError):
    pass


class RankDeficient(OrbitError):
    """The Newton system for ``H`` lost rank (full-rank hypothesis fails)."""


class StepUnderflow(OrbitError):
    pass


class ProfileBreakdown(DomainError):
    def __init__(self, msg, x):
        super().__init__(f"{msg} at x={x:.6g}")
        self.x = x


@dataclass(frozen=True)
class QClosure:
    """Affine slice ``q = q0 + q1 c`` through the family of orbits."""

    q0: float
    q1: float = 0.0

    @classmethod
    def endstate(cls, u_minus: float) -> "QClosure":
        # keeps tau = 1/u_minus^2 an equilibrium for every c
        return cls(q0=u_minus, q1=1.0 / u_minus**2)

    @classmethod
    def fixed(cls, q: float) -> "QClosure":
        return cls(q0=q, q1=0.0)

    def __call__(self, c: float) -> float:
        return self.q0 + self.q1 * c


@dataclass(frozen=True)
class OrbitSpec:
    X: float
    c: float
    q: float
    b: tuple[float, float]


def _profile_accel(tau, p, c, q, params: ModelParams):
    r, s, nu, F = params.r, params.s, params.nu, params.F
    u = q - c * tau
    S = 1.0 - tau ** (s + 1.0) * u**r - (c * c - tau**-3 / F) * p
    return tau * tau * S / (c * nu) + 2.0 * p * p / tau


def _rhs_plain(x, y, c, q, params):
    tau, p = y[0], y[1]
    return [p, _profile_accel(tau, p, c, q, params), tau]


def _rhs_variational(x, y, c, q, params):
    r, s, nu, F = params.r, params.s, params.nu, params.F
    tau, p = y[0], y[1]
    u = q - c * tau
    ur1 = u ** (r - 1.0)
    ts1 = tau ** (s + 1.0)
    S = 1.0 - ts1 * u * ur1 - (c * c - tau**-3 / F) * p
    S_tau = -(s + 1.0) * tau**s * u * ur1 + r * c * ts1 * ur1 - 3.0 * p / (F * tau**4)
    S_p = -(c * c - tau**-3 / F)
    S_c = r * ts1 * tau * ur1 - 2.0 * c * p
    S_q = -r * ts1 * ur1
    k = tau * tau / (c * nu)
    G = k * S + 2.0 * p * p / tau
    G_tau = 2.0 * tau * S / (c * nu) + k * S_tau - 2.0 * p * p / (tau * tau)
    G_p = k * S_p + 4.0 * p / tau
    G_c = -k * S / c + k * S_c
    G_q = k * S_q
    # Phi columns stored as (Phi00, Phi10, Phi01, Phi11)
    f00, f10, f01, f11 = y[2], y[3], y[4], y[5]
    sc0, sc1, sq0, sq1 = y[6], y[7], y[8], y[9]
    return [
        p, G,
        f10, G_tau * f00 + G_p * f10,
        f11, G_tau * f01 + G_p * f11,
        sc1, G_tau * sc0 + G_p * sc1 + G_c,
        sq1, G_tau * sq0 + G_p * sq1 + G_q,
        tau,
    ]


# the profile ODE is singular at tau = 0; treat tau below this as vacuum
VACUUM = 1e-3


def _events(c, q):
    def vacuum(x, y, *args):
        return y[0] - VACUUM

    def reversal(x, y, *args):
        return q - c * y[0] - 1e-8

    vacuum.terminal = True
    reversal.terminal = True
    return [vacuum, reversal]


@dataclass
class Segment:
    end: np.ndarray
    phi: np.ndarray | None = None
    d_c: np.ndarray | None = None
    d_q: np.ndarray | None = None
    quad: float = 0.0
    sol: object = None


def _segment(y0, length, c, q, params, jac=True, dense=False, x0=0.0) -> Segment:
    if jac:
        init = [y0[0], y0[1], 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        fun = _rhs_variational
    else:
        init = [y0[0], y0[1], 0.0]
        fun = _rhs_plain
    res = solve_ivp(fun, (x0, x0 + length), init, method="DOP853", rtol=RTOL, atol=ATOL,
                    args=(c, q, params), events=_events(c, q), dense_output=dense)
    if res.status == 1:
        which = "vacuum (tau <= 0)" if len(res.t_events[0]) else "flow reversal (u <= 0)"
        raise ProfileBreakdown(which, float(res.t[-1]))
    if res.status != 0:
        raise ProfileBreakdown(f"integration failed: {res.message}", float(res.t[-1]))
    yend = res.y[:, -1]
    if not np.all(np.isfinite(yend)):
        raise ProfileBreakdown("blow-up", float(res.t[-1]))
    seg = Segment(end=yend[:2].copy(), quad=float(yend[-1]), sol=res.sol)
    if jac:
        seg.phi = np.array([[yend[2], yend[4]], [yend[3], yend[5]]])
        seg.d_c = yend[6:8].copy()
        seg.d_q = yend[8:10].copy()
    return seg


@dataclass
class Trajectory:
    x: np.ndarray
    tau: np.ndarray
    dtau: np.ndarray
    sol: object


def integrate_profile(spec: OrbitSpec, params: ModelParams, length: float,
                      n_out: int = 201) -> Trajectory:
    """Integrate the profile ODE from ``spec.b`` over ``[0, length]``.

    Raises :class:`ProfileBreakdown` carrying the exit location when the
    trajectory leaves ``tau > 0, u > 0`` or blows up.
    """
    seg = _segment(np.asarray(spec.b, float), length, spec.c, spec.q, params, jac=False, dense=True)
    x = np.linspace(0.0, length, n_out)
    y = seg.sol(x)
    return Trajectory(x=x, tau=y[0], dtau=y[1], sol=seg.sol)


@dataclass
class PeriodicProfile:
    spec: OrbitSpec
    params: ModelParams
    x: np.ndarray
    tau: np.ndarray
    dtau: np.ndarray
    u: np.ndarray
    nodes: np.ndarray = field(repr=False)
    eulerian_length: float = 0.0

    @property
    def X(self) -> float:
        return self.spec.X

    @property
    def c(self) -> float:
        return self.spec.c

    @property
    def q(self) -> float:
        return self.spec.q

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def amplitude(self) -> float:
        return float(self.tau.max() - self.tau.min())

    @property
    def fourier(self) -> dict[str, np.ndarray]:
        """Trigonometric interpolation coefficients (``numpy.fft.fft / n``)."""
        return {"tau": np.fft.fft(self.tau) / self.n, "u": np.fft.fft(self.u) / self.n}

    @property
    def ddtau(self) -> np.ndarray:
        return _profile_accel(self.tau, self.dtau, self.c, self.q, self.params)

    @property
    def du(self) -> np.ndarray:
        return -self.c * self.dtau

    @property
    def ddu(self) -> np.ndarray:
        return -self.c * self.ddtau

    def sample(self, n: int) -> "PeriodicProfile":
        """Resample on ``n`` uniform points by re-integrating from the nodes."""
        x, tau, dtau = _sample_grid(self.spec, self.params, self.nodes, n)
        return replace(self, x=x, tau=tau, dtau=dtau, u=self.spec.q - self.spec.c * tau)

    def shifted(self, delta: float) -> "PeriodicProfile":
        """Profile translated by ``delta`` (Fourier interpolation)."""
        tau = fourier_shift(self.tau, delta, self.X)
        dtau = fourier_shift(self.dtau, delta, self.X)
        return replace(self, tau=tau, dtau=dtau, u=self.q - self.c * tau)

    def ode_residual(self) -> float:
        """Max-norm residual of the profile ODE on the grid (spectral derivatives)."""
        d_tau = spectral_derivative(self.tau, self.X)
        d_dtau = spectral_derivative(self.dtau, self.X)
        r1 = np.abs(d_tau - self.dtau).max()
        r2 = np.abs(d_dtau - self.ddtau).max() / max(1.0, np.abs(self.ddtau).max())
        return float(max(r1, r2))

    def periodicity_defect(self) -> float:
        seg = _chain(self.nodes, self.spec, self.params, jac=False)
        return float(np.abs(seg[-1].end - np.asarray(self.spec.b)).max())


def spectral_derivative(f: np.ndarray, period: float, order: int = 1) -> np.ndarray:
    n = len(f)
    k = 2j * np.pi * np.fft.fftfreq(n, d=period / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    return np.real(np.fft.ifft((k**order) * np.fft.fft(f)))


def fourier_shift(f: np.ndarray, delta: float, period: float) -> np.ndarray:
    """Samples of ``f(x - delta)`` for a periodic sampled ``f``."""
    n = len(f)
    k = 2 * np.pi * np.fft.fftfreq(n, d=period / n)
    fh = np.fft.fft(f) * np.exp(-1j * k * delta)
    if n % 2 == 0:
        fh[n // 2] = fh[n // 2].real * math.cos(k[n // 2] * delta)
    return np.real(np.fft.ifft(fh))


def _chain(nodes, spec: OrbitSpec, params, jac=True, dense=False):
    m = len(nodes)
    L = spec.X / m
    out = []
    for j in range(m):
        out.append(_segment(nodes[j], L, spec.c, spec.q, params, jac=jac, dense=dense, x0=j * L))
    return out


def _sample_grid(spec, params, nodes, n):
    segs = _chain(nodes, spec, params, jac=False, dense=True)
    m = len(nodes)
    L = spec.X / m
    x = np.arange(n) * (spec.X / n)
    tau = np.empty(n)
    dtau = np.empty(n)
    idx = np.minimum((x / L).astype(int), m - 1)
    for j in range(m):
        sel = idx == j
        if np.any(sel):
            y = segs[j].sol(x[sel])
            tau[sel] = y[0]
            dtau[sel] = y[1]
    return x, tau, dtau


# ---------------------------------------------------------------- Newton core

def default_segments(X: float, seg_len: float = 2.0) -> int:
    return max(1, int(math.ceil(X / seg_len)))


@dataclass
class _State:
    X: float
    c: float
    b1: float
    nodes: np.ndarray  # (m, 2); nodes[0] = (b1, 0)

    def vector(self):
        return np.concatenate([[self.X, self.c, self.b1], self.nodes[1:].ravel()])

    @classmethod
    def from_vector(cls, z, m):
        nodes = np.empty((m, 2))
        nodes[0] = (z[2], 0.0)
        nodes[1:] = z[3:].reshape(m - 1, 2)
        return cls(X=z[0], c=z[1], b1=z[2], nodes=nodes)


def _residual_and_jacobian(st: _State, closure: QClosure, params: ModelParams):
    m = len(st.nodes)
    q = closure(st.c)
    spec = OrbitSpec(st.X, st.c, q, (st.b1, 0.0))
    segs = _chain(st.nodes, spec, params, jac=True)
    n = 2 * m
    R = np.empty(n)
    J = np.zeros((n, n + 1))
    for j, seg in enumerate(segs):
        nxt = st.nodes[(j + 1) % m]
        R[2 * j:2 * j + 2] = seg.end - nxt
        rows = slice(2 * j, 2 * j + 2)
        f_end = np.array([seg.end[1], _profile_accel(seg.end[0], seg.end[1], st.c, q, params)])
        J[rows, 0] = f_end / m
        J[rows, 1] = seg.d_c + closure.q1 * seg.d_q
        if j == 0:
            J[rows, 2] += seg.phi[:, 0]
        else:
            J[rows, 3 + 2 * (j - 1):3 + 2 * j] += seg.phi
        # -s_{j+1}
        if j + 1 < m:
            J[rows, 3 + 2 * j:3 + 2 * (j + 1)] -= np.eye(2)
        else:
            J[rows, 2] -= np.array([1.0, 0.0])
    return R, J, segs


CONSTRAINTS = ("fix-X", "fix-c", "fix-b1")


def _constraint_row(kind, size):
    row = np.zeros(size)
    row[{"fix-X": 0, "fix-c": 1, "fix-b1": 2}[kind]] = 1.0
    return row


def _newton(st: _State, closure, params, extra_row, extra_rhs, tol=1e-10, maxiter=50,
            rank_tol=1e-12):
    m = len(st.nodes)
    z = st.vector()
    cur = _State.from_vector(z, m)
    R, J, _ = _residual_and_jacobian(cur, closure, params)
    for it in range(maxiter):
        g = extra_rhs(z)
        full_R = np.concatenate([R, [g]])
        full_J = np.vstack([J, extra_row(z)])
        sv = np.linalg.svd(full_J, compute_uv=False)
        if sv[-1] < rank_tol * sv[0]:
            raise RankDeficient(f"Newton Jacobian rank-deficient (sigma_min/sigma_max={sv[-1] / sv[0]:.2e})")
        if np.abs(full_R).max() < tol:
            return cur, it, full_J
        dz = np.linalg.solve(full_J, -full_R)
        # backtrack out of the nonphysical region and past trajectory breakdown
        lam = 1.0
        for _ in range(30):
            trial = z + lam * dz
            if (trial[0] > 0 and trial[1] > 0 and trial[2] > 0.5 * z[2]
                    and np.all(trial[3::2] > 0.5 * z[3::2])):
                try:
                    cur = _State.from_vector(trial, m)
                    R, J, _ = _residual_and_jacobian(cur, closure, params)
                    break
                except DomainError:
                    pass
            lam *= 0.5
        else:
            raise NonConvergence("Newton line search failed")
        z = trial
    raise NonConvergence(f"Newton did not converge in {maxiter} iterations (|H|={np.abs(full_R).max():.3e})")


def _initial_nodes(spec: OrbitSpec, params, m):
    nodes = np.empty((m, 2))
    nodes[0] = spec.b
    L = spec.X / m
    for j in range(1, m):
        nodes[j] = _segment(nodes[j - 1], L, spec.c, spec.q, params, jac=False).end
    return nodes


def _nodes_from_profile(profile: "PeriodicProfile", m: int) -> np.ndarray:
    frac = np.arange(m) / m
    xs = frac * profile.X
    tau = _fourier_eval(profile.tau, profile.X, xs)
    dtau = _fourier_eval(profile.dtau, profile.X, xs)
    return np.column_stack([tau, dtau])


def _fourier_eval(f, period, xs):
    n = len(f)
    fh = np.fft.fft(f) / n
    k = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        fh = fh.copy()
        fh[n // 2] *= 0.5
        fh = np.append(fh, fh[n // 2])
        k = np.append(k, -k[n // 2])
    phase = np.exp(2j * np.pi * np.outer(xs, k) / period)
    return np.real(phase @ fh)


def make_profile(spec: OrbitSpec, params: ModelParams, nodes: np.ndarray, n: int | None = 256,
                 n_max: int = 16384, target: float = 1e-8) -> PeriodicProfile:
    """Sample a converged orbit; ``n=None`` doubles from 256 until resolved."""
    adaptive = n is None
    n = 256 if adaptive else n
    prev = None
    while True:
        x, tau, dtau = _sample_grid(spec, params, nodes, n)
        prof = PeriodicProfile(spec=spec, params=params, x=x, tau=tau, dtau=dtau,
                               u=spec.q - spec.c * tau, nodes=nodes)
        if not adaptive or n >= n_max:
            break
        res = prof.ode_residual()
        if res < target or (prev is not None and res > 0.5 * prev):
            break
        prev = res
        n *= 2
    segs = _chain(nodes, spec, params, jac=False)
    prof.eulerian_length = float(sum(s.quad for s in segs))
    return prof


def solve_periodic(guess: OrbitSpec, params: ModelParams, constraint: str = "fix-X",
                   closure: QClosure | None = None, nodes: np.ndarray | None = None,
                   segments: int | None = None, n: int | None = 256, tol: float = 1e-10,
                   maxiter: int = 50) -> PeriodicProfile:
    """Newton solve of ``H = 0`` with phase ``b2 = 0`` and one constraint.

    ``constraint`` is ``fix-X``, ``fix-c`` or ``fix-b1`` (fixed maximum of
    ``tau``).  ``closure`` ties ``q`` to ``c``; without it ``q`` stays at
    ``guess.q``.
    """
    if constraint not in CONSTRAINTS:
        raise ValueError(f"unknown constraint {constraint!r}")
    closure = closure or QClosure.fixed(guess.q)
    m = segments or default_segments(guess.X)
    b = (guess.b[0], 0.0)
    spec0 = OrbitSpec(guess.X, guess.c, closure(guess.c), b)
    if nodes is None or len(nodes) != m:
        nodes = _initial_nodes(spec0, params, m)
    nodes = np.array(nodes, dtype=float)
    nodes[0] = b
    st = _State(X=guess.X, c=guess.c, b1=b[0], nodes=nodes)
    idx = {"fix-X": 0, "fix-c": 1, "fix-b1": 2}[constraint]
    target = st.vector()[idx]
    size = 2 * m + 1
    row = _constraint_row(constraint, size)
    sol, _, _ = _newton(st, closure, params, lambda z: row, lambda z: z[idx] - target,
                        tol=tol, maxiter=maxiter)
    spec = OrbitSpec(sol.X, sol.c, closure(sol.c), (sol.b1, 0.0))
    prof = make_profile(spec, params, sol.nodes, n=n)
    if prof.tau.min() <= 0:
        raise ProfileBreakdown("vacuum", float(prof.x[np.argmin(prof.tau)]))
    return prof


def resolve_from(profile: PeriodicProfile, constraint: str, value: float,
                 closure: QClosure | None = None, **kw) -> PeriodicProfile:
    """Re-solve near ``profile`` with one coordinate moved to ``value``."""
    closure = closure or QClosure.fixed(profile.q)
    X, c, b1 = profile.X, profile.c, profile.spec.b[0]
    if constraint == "fix-X":
        X = value
    elif constraint == "fix-c":
        c = value
    elif constraint == "fix-b1":
        b1 = value
    m = kw.pop("segments", None) or default_segments(X)
    nodes = _nodes_from_profile(profile, m)
    nodes[0] = (b1, 0.0)
    guess = OrbitSpec(X, c, closure(c), (b1, 0.0))
    return solve_periodic(guess, profile.params, constraint, closure=closure, nodes=nodes,
                          segments=m, **kw)


# ---------------------------------------------------------------- Hopf seeding

@dataclass(frozen=True)
class HopfOnSlice:
    c: float
    q: float
    tau0: float
    u0: float
    kH: float
    XH: float


def hopf_on_slice(params: ModelParams, closure: QClosure, tau_range=(1e-2, 1e2),
                  n_scan: int = 20000) -> list[HopfOnSlice]:
    """Admissible Hopf points on the slice ``q = closure(c)``.

    Solves ``c = c_s(tau0)`` together with the equilibrium identity.
    """
    from scipy.optimize import brentq

    r, s = params.r, params.s

    def g(t):
        c = float(params.sound_speed(t))
        u = closure(c) - c * t
        if u <= 0:
            return math.nan
        return (s + 1.0) * math.log(t) + r * math.log(u)

    ts = np.geomspace(*tau_range, n_scan)
    vals = np.array([g(t) for t in ts])
    out = []
    for i in range(len(ts) - 1):
        a, b = vals[i], vals[i + 1]
        if np.isfinite(a) and np.isfinite(b) and a * b < 0:
            t = brentq(g, ts[i], ts[i + 1], xtol=1e-15, rtol=1e-15)
            hp = hopf_analysis(params, t)
            if hp.admissible:
                c = hp.cs
                out.append(HopfOnSlice(c=c, q=closure(c), tau0=t, u0=closure(c) - c * t,
                                       kH=hp.kH, XH=hp.XH))
    return out


def hopf_family_seed(params: ModelParams, closure: QClosure, amplitude: float = 1e-3,
                     hopf: HopfOnSlice | None = None, n: int | None = 256) -> PeriodicProfile:
    """Small periodic orbit near the Hopf point, solved at fixed ``tau`` maximum."""
    if hopf is None:
        cands = hopf_on_slice(params, closure)
        if not cands:
            raise OrbitError("no admissible Hopf point on this slice")
        hopf = cands[0]
    b1 = hopf.tau0 + amplitude
    # ellipse of the linearized flow: tau = tau0 + a cos(kx)
    guess = OrbitSpec(hopf.XH, hopf.c, closure(hopf.c), (b1, 0.0))
    m = default_segments(hopf.XH, 1.0)
    x = np.arange(m) * hopf.XH / m
    nodes = np.column_stack([hopf.tau0 + amplitude * np.cos(hopf.kH * x),
                             -amplitude * hopf.kH * np.sin(hopf.kH * x)])
    return solve_periodic(guess, params, "fix-b1", closure=closure, nodes=nodes, segments=m, n=n)


# ---------------------------------------------------------------- continuation

@dataclass
class OrbitFamily:
    members: list[PeriodicProfile]
    arclength: list[float]
    closure: QClosure

    @property
    def periods(self) -> np.ndarray:
        return np.array([p.X for p in self.members])

    @property
    def speeds(self) -> np.ndarray:
        return np.array([p.c for p in self.members])

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([p.amplitude for p in self.members])

    def nearest(self, X: float) -> PeriodicProfile:
        return self.members[int(np.argmin(np.abs(self.periods - X)))]

    def at_period(self, X: float, n: int | None = 256) -> PeriodicProfile:
        return resolve_from(self.nearest(X), "fix-X", X, closure=self.closure, n=n)


def continue_family(start: PeriodicProfile, target_X: float, closure: QClosure,
                    ds: float = 0.05, ds_min: float = 1e-6, ds_max: float = 1.0,
                    max_steps: int = 2000, weights=(1.0, 10.0, 10.0),
                    seg_len: float = 2.0, n: int | None = 256, progress=None) -> OrbitFamily:
    """Pseudo-arclength continuation in ``(X, c, b1)`` up to period ``target_X``.

    Secant predictor, Newton corrector with the arclength condition.
    Segment count is fixed from ``target_X``; emitted members are sampled
    on ``n`` points.
    """
    params = start.params
    m = default_segments(target_X, seg_len)
    w = np.asarray(weights, float)

    def state_of(p: PeriodicProfile) -> _State:
        return _State(X=p.X, c=p.c, b1=p.spec.b[0], nodes=_nodes_from_profile(p, m))

    # tangent at the start from the kernel of the unconstrained Jacobian
    st0 = state_of(start)
    st0 = _newton(st0, closure, params, lambda z: _constraint_row("fix-X", 2 * m + 1),
                  lambda z, X=start.X: z[0] - X)[0]
    _, J, _ = _residual_and_jacobian(st0, closure, params)
    _, _, vt = np.linalg.svd(J)
    tangent = vt[-1]
    if tangent[0] < 0:
        tangent = -tangent
    members = [start]
    arcs = [0.0]
    z_prev = st0.vector()
    t_full = tangent / np.linalg.norm(tangent[:3] * w)
    s_total = 0.0
    steps = 0
    while z_prev[0] < target_X and steps < max_steps:
        steps += 1
        z_pred = z_prev + ds * t_full
        yw = t_full[:3] * w

        def extra_row(z, yw=yw):
            row = np.zeros(2 * m + 1)
            row[:3] = yw * w
            return row

        def extra_rhs(z, z_prev=z_prev, yw=yw, ds=ds):
            return float(np.dot(yw, (z[:3] - z_prev[:3]) * w) - ds)

        try:
            sol, iters, _ = _newton(_State.from_vector(z_pred, m), closure, params,
                                    extra_row, extra_rhs, maxiter=12)
        except (NonConvergence, RankDeficient, DomainError):
            ds *= 0.5
            if ds < ds_min:
                raise StepUnderflow(f"continuation lost the path at X={z_prev[0]:.4g}")
            continue
        z_new = sol.vector()
        if z_new[0] <= z_prev[0]:
            # reject backward motion in X (keeps the stored path monotone)
            ds *= 0.5
            if ds < ds_min:
                raise StepUnderflow(f"period stopped increasing at X={z_prev[0]:.4g}")
            continue
        secant = z_new - z_prev
        t_full = secant / np.linalg.norm(secant[:3] * w)
        s_total += ds
        spec = OrbitSpec(sol.X, sol.c, closure(sol.c), (sol.b1, 0.0))
        prof = make_profile(spec, params, sol.nodes, n=n)
        if prof.tau.min() <= 0:
            raise ProfileBreakdown("vacuum along the family", float(prof.x[np.argmin(prof.tau)]))
        members.append(prof)
        arcs.append(s_total)
        if progress:
            progress(prof)
        z_prev = z_new
        if iters <= 3:
            ds = min(ds * 1.5, ds_max)
        elif iters > 6:
            ds *= 0.7
    return OrbitFamily(members=members, arclength=arcs, closure=closure)


# ---------------------------------------------------------------- diagnostics

@dataclass(frozen=True)
class RankDiagnostic:
    singular_values: np.ndarray
    jacobian: np.ndarray
    full_rank: bool
    null_dim: int


def h_map(profile: PeriodicProfile, X, c, q, b, segments: int | None = None):
    """``H(X, c, q, b)`` evaluated by chaining segments seeded from the profile.

    Segment starts after the first are taken from the converged profile
    so the long-period map stays well conditioned; the mismatch of the
    seeded starts is propagated linearly.
    """
    params = profile.params
    m = segments or default_segments(profile.X)
    nodes = _nodes_from_profile(profile, m)
    L = X / m
    y = np.asarray(b, float)
    for j in range(m):
        base = nodes[j] if j else y
        seg = _segment(base, L, c, q, params, jac=True)
        end = seg.end + seg.phi @ (y - base)
        y = end
    return y - np.asarray(b, float)


def check_H2_rank(profile: PeriodicProfile, rel_step: float = 1e-6, threshold: float = 1e-6,
                  segments: int | None = None) -> RankDiagnostic:
    """Finite-difference Jacobian of ``H`` in ``(X, c, q, b1, b2)`` and its SVD."""
    base = np.array([profile.X, profile.c, profile.q, profile.spec.b[0], profile.spec.b[1]])
    m = segments or default_segments(profile.X)

    def H(v):
        return h_map(profile, v[0], v[1], v[2], v[3:5], segments=m)

    J = np.empty((2, 5))
    for i in range(5):
        h = rel_step * max(abs(base[i]), 1.0)
        vp = base.copy()
        vm = base.copy()
        vp[i] += h
        vm[i] -= h
        J[:, i] = (H(vp) - H(vm)) / (2 * h)
    sv = np.linalg.svd(J, compute_uv=False)
    full = bool(sv[1] > threshold)
    return RankDiagnostic(singular_values=sv, jacobian=J, full_rank=full, null_dim=5 - int(np.sum(sv > threshold)))


@dataclass(frozen=True)
class DerivativeCondition:
    holds: bool
    margin: float


def derivative_condition(profile: PeriodicProfile) -> DerivativeCondition:
    """Check ``nu * u_x < 1/F`` pointwise; margin is ``min(1/F - nu u_x)``."""
    p = profile.params
    margin = float(np.min(1.0 / p.F - p.nu * profile.du))
    return DerivativeCondition(holds=margin > 0, margin=margin)


def equilibrium_profile(params: ModelParams, tau0: float, c: float, X: float, n: int = 64) -> PeriodicProfile:
    """Constant state dressed as a periodic profile (for oracles)."""
    u0 = tau0 ** (-(params.s + 1.0) / params.r)
    q = u0 + c * tau0
    x = np.arange(n) * X / n
    tau = np.full(n, float(tau0))
    spec = OrbitSpec(X, c, q, (float(tau0), 0.0))
    return PeriodicProfile(spec=spec, params=params, x=x, tau=tau, dtau=np.zeros(n),
                           u=np.full(n, q - c * tau0), nodes=np.array([[tau0, 0.0]]),
                           eulerian_length=tau0 * X)
