"""Command-line interface.

Every command resolves a configuration (defaults, ``--config`` file,
``--set section.key=value`` overrides), writes its data files into
``<output.dir>/<command>-<run-id>/`` and records a ``manifest.json`` with
the command, the resolved configuration, input and output hashes, cache
hits and wall time.  The run id is a hash of command, arguments and
configuration, so identical invocations land in the same directory.

Exit codes: 0 success, 2 configuration or domain error, 3 solver
non-convergence, 4 other numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import io as rio
from .config import ConfigError, ProjectConfig
from .model import DomainError, find_equilibria, hopf_analysis, neutral_branch_derivatives
from .orbit import (OrbitError, continue_family, derivative_condition, hopf_family_seed,
                    hopf_on_slice)

EXIT_OK, EXIT_DOMAIN, EXIT_SOLVER, EXIT_NUMERIC = 0, 2, 3, 4


class LockError(RuntimeError):
    """Output directory owned by another process."""


def code_version() -> str:
    """Package version plus a hash of the package sources."""
    h = hashlib.sha256()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return f"{__version__}+{h.hexdigest()[:12]}"


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


class Run:
    """Output directory, lock and manifest of one command invocation."""

    def __init__(self, command: str, args: dict, cfg: ProjectConfig, inputs=()):
        self.command = command
        self.args = args
        self.cfg = cfg
        self.inputs = {str(p): rio.sha256(p) for p in inputs}
        key = _canonical({"command": command, "args": args, "config": cfg.as_dict(), "inputs": self.inputs})
        self.run_id = hashlib.sha256(key.encode()).hexdigest()[:12]
        self.root = Path(cfg["output"]["dir"])
        self.dir = self.root / f"{command}-{self.run_id}"
        self.outputs: list[Path] = []
        self.cache_hits: list[str] = []
        self._lock = None
        self._t0 = time.perf_counter()

    def __enter__(self):
        self.dir.mkdir(parents=True, exist_ok=True)
        lock = self.dir / ".lock"
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise LockError(f"output directory {self.dir} is locked by another process") from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        self._lock = lock
        return self

    def __exit__(self, exc_type, exc, tb):
        if self._lock is not None:
            self._lock.unlink(missing_ok=True)
        return False

    def path(self, name: str) -> Path:
        p = self.dir / name
        self.outputs.append(p)
        return p

    def write_manifest(self, status: int = 0) -> Path:
        manifest = {
            "command": self.command,
            "args": self.args,
            "config": self.cfg.as_dict(),
            "code_version": code_version(),
            "inputs": self.inputs,
            "outputs": {p.name: rio.sha256(p) for p in self.outputs},
            "cache_hits": self.cache_hits,
            "wall_time": time.perf_counter() - self._t0,
            "exit_code": status,
            "run_id": self.run_id,
        }
        return rio.write_json(self.dir / "manifest.json", manifest)


# ---------------------------------------------------------------- shared pipeline pieces

def family_cache_dir(cfg: ProjectConfig) -> Path:
    key = _canonical({k: cfg[k] for k in ("model", "family", "orbit")})
    return Path(cfg["output"]["dir"]) / "cache" / f"family-{hashlib.sha256(key.encode()).hexdigest()[:12]}"


def load_family(cfg: ProjectConfig, run: Run | None = None, log=print):
    """Family from the cache, computing and storing it on a miss."""
    d = family_cache_dir(cfg)
    if (d / "index.csv").exists():
        if run is not None:
            run.cache_hits.append(str(d))
        return rio.read_family(d)
    params, closure = cfg.params(), cfg.closure()
    fam_cfg, orb = cfg["family"], cfg["orbit"]
    seed = hopf_family_seed(params, closure, amplitude=fam_cfg["amplitude"], n=orb["n"])
    log(f"continuing family from X={seed.X:.4f} to X={fam_cfg['x_max']:g}")
    family = continue_family(seed, fam_cfg["x_max"], closure, ds=fam_cfg["ds"],
                             seg_len=fam_cfg["seg_len"], n=orb["n"])
    tmp = d.with_name(d.name + f".tmp{os.getpid()}")
    rio.write_family(tmp, family)
    try:
        tmp.rename(d)
    except OSError:
        pass  # a concurrent writer won; its copy is equivalent
    return family


def profile_for(cfg: ProjectConfig, run: Run, X: float | None, profile_file: str | None):
    if profile_file is not None:
        return rio.read_profile(profile_file)
    if X is None:
        raise DomainError("give --X or --profile")
    family = load_family(cfg, run)
    lo, hi = family.periods.min(), family.periods.max()
    if not lo <= X <= hi:
        raise DomainError(f"X={X:g} outside the computed family range [{lo:.4g}, {hi:.4g}]")
    return family.at_period(X, n=None)


def _spectrum_kwargs(cfg: ProjectConfig) -> dict:
    from .bloch import Window
    s = cfg["spectrum"]
    return dict(N=cfg.truncation(), window=Window(s["re_min"], s["re_max"], s["im_max"]),
                tol_stab=s["tol_stab"], origin_xi=s["origin_xi"], origin_radius=s["origin_radius"],
                zero_radius=s["zero_radius"], sv_tol=s["sv_tol"], check=s["check"],
                conv_tol=s["conv_tol"], fit_range=s["fit_range"])


def _whitham_report(cfg: ProjectConfig, profile, curves) -> dict:
    from .whitham import verify_tangency, whitham_jacobians
    wd = whitham_jacobians(profile, h=cfg["whitham"]["h"], tol_nd=cfg["whitham"]["tol_nd"])
    out = {
        "classification": wd.classification,
        "z_whitham": [wd.z1, wd.z2],
        "z_bloch_convention": list(wd.bloch_speeds()),
        "dM_dq": wd.dM_dq,
        "nondegenerate": wd.nondegenerate,
        "J1": wd.J1, "J2": wd.J2, "step": wd.h,
    }
    if curves is not None and curves.trustworthy:
        t = verify_tangency(wd, curves)
        out.update(z_bloch_fit=list(t.bloch), tangency_mismatch=t.mismatch, tangency_passed=t.passed)
    return out


# ---------------------------------------------------------------- commands

def cmd_equilibrium(cfg, ns, run):
    params = cfg.params()
    eqs = find_equilibria(params, ns.q, ns.c)
    if not eqs:
        raise DomainError(f"no equilibria for q={ns.q:g}, c={ns.c:g}")
    rows = []
    print(f"{'tau0':>14} {'u0':>14} {'cs':>10} {'Re lam2':>12} {'hopf':>6}")
    for e in eqs:
        hp = hopf_analysis(params, e.tau0)
        _, l2 = neutral_branch_derivatives(params, e)
        rows.append((e.tau0, e.u0, e.q, e.c, hp.cs, hp.XH if hp.admissible else float("nan"),
                     int(hp.admissible), l2.real))
        print(f"{e.tau0:14.10f} {e.u0:14.10f} {hp.cs:10.6f} {l2.real:12.4e} {str(hp.admissible):>6}")
    rio.write_csv(run.path("equilibria.csv"),
                  ("tau0", "u0", "q", "c", "cs", "XH", "hopf_admissible", "re_lambda2"), rows)


def cmd_hopf(cfg, ns, run):
    params = cfg.params()
    if ns.tau0 is not None:
        hp = hopf_analysis(params, ns.tau0)
        print(f"tau0={ns.tau0:g} cs={hp.cs:.6f} admissible={hp.admissible}"
              + (f" kH={hp.kH:.6f} XH={hp.XH:.6f}" if hp.admissible else ""))
        rio.write_json(run.path("hopf.json"), {"tau0": ns.tau0, "cs": hp.cs, "kH": hp.kH,
                                                "XH": hp.XH, "admissible": hp.admissible})
        return
    pts = hopf_on_slice(params, cfg.closure())
    if not pts:
        raise OrbitError("no admissible Hopf point on this slice")
    for h in pts:
        print(f"c={h.c:.6f} q={h.q:.6f} tau0={h.tau0:.6f} kH={h.kH:.6f} XH={h.XH:.6f}")
    rio.write_json(run.path("hopf.json"), {"points": [vars(h) for h in pts]})


def cmd_family(cfg, ns, run):
    family = load_family(cfg, run)
    rows = []
    for p in family.members:
        dc = derivative_condition(p)
        rows.append((p.X, p.c, p.q, p.amplitude, p.spec.b[0], dc.margin))
    rio.write_csv(run.path("period_speed.csv"),
                  ("X", "c", "q", "amplitude", "tau_max", "derivative_margin"), rows)
    X = family.periods
    print(f"{len(rows)} members, X in [{X.min():.4f}, {X.max():.4f}], "
          f"c in [{family.speeds.min():.6f}, {family.speeds.max():.6f}]")


def cmd_orbit(cfg, ns, run):
    from .orbit import check_H2_rank
    prof = profile_for(cfg, run, ns.X, None)
    rank = check_H2_rank(prof)
    dc = derivative_condition(prof)
    rio.write_profile(run.path("profile.txt"), prof)
    info = {"X": prof.X, "c": prof.c, "q": prof.q, "b": list(prof.spec.b), "n": prof.n,
            "amplitude": prof.amplitude, "ode_residual": prof.ode_residual(),
            "periodicity_defect": prof.periodicity_defect(), "H2_full_rank": rank.full_rank,
            "H2_singular_values": rank.singular_values, "derivative_margin": dc.margin}
    rio.write_json(run.path("orbit.json"), info)
    print(f"X={prof.X:.6f} c={prof.c:.8f} q={prof.q:.8f} amplitude={prof.amplitude:.6f} "
          f"residual={info['ode_residual']:.2e}")


def cmd_spectrum(cfg, ns, run):
    from .bloch import compute_spectrum, default_xi_grid
    prof = profile_for(cfg, run, ns.X, ns.profile)
    rep = compute_spectrum(prof, xi_grid=default_xi_grid(prof.X, cfg["spectrum"]["n_xi"]),
                           **_spectrum_kwargs(cfg))
    rio.write_csv(run.path("spectrum.csv"), ("xi", "re_lambda", "im_lambda", "converged"), rep.points())
    summary = {
        "X": prof.X, "c": prof.c, "classification": rep.classification, "stable": rep.stable,
        "verdicts": rep.verdicts, "max_real": rep.max_real,
        "max_point": {"xi": rep.max_point[0], "lambda": rep.max_point[1]},
        "theta": rep.theta, "zero_multiplicity": rep.zero_multiplicity, "kernel_dim": rep.kernel_dim,
        "N": rep.samples[0].N if rep.samples else None, "tolerances": rep.tolerances,
    }
    if rep.curves is not None:
        summary.update(z=rep.curves.z, b=rep.curves.b, fit_residual=rep.curves.residual,
                       fit_trustworthy=rep.curves.trustworthy)
    if cfg["spectrum"]["whitham"]:
        summary["whitham"] = _whitham_report(cfg, prof, rep.curves)
    rio.write_json(run.path("spectrum.json"), summary)
    print(f"X={prof.X:.4f} {rep.classification}: max Re={rep.max_real:.3e} verdicts=" +
          " ".join(f"{k}={'pass' if v else 'fail'}" for k, v in rep.verdicts.items()))


def cmd_whitham(cfg, ns, run):
    from .bloch import compute_spectrum, critical_curves
    prof = profile_for(cfg, run, ns.X, ns.profile)
    fr = cfg["spectrum"]["fit_range"]
    xis = np.linspace(-fr, fr, cfg["whitham"]["n_xi"]) / prof.X
    rep = compute_spectrum(prof, xi_grid=xis, **_spectrum_kwargs(cfg))
    report = _whitham_report(cfg, prof, critical_curves(rep))
    rio.write_json(run.path("whitham.json"), report)
    line = f"{report['classification']}: z = {np.round(report['z_bloch_convention'], 8)}"
    if "tangency_mismatch" in report:
        line += f", Bloch fit mismatch {report['tangency_mismatch']:.2e}"
    print(line)


def cmd_evans(cfg, ns, run):
    from .bloch import build_coefficients, bloch_sample, choose_truncation, Window
    from .evans import evans, evans_scale, evans_sweep, leading_order_ratio, monodromy
    prof = profile_for(cfg, run, ns.X, ns.profile)
    e = cfg["evans"]
    mono0 = monodromy(prof, 0.0)
    scale0 = evans_scale(mono0)
    d0 = abs(evans(prof, 0.0, 1.0, mono0))
    report = {"X": prof.X, "D_origin": d0, "scale_origin": scale0,
              "origin_relative": d0 / scale0, "abel_defect": mono0.abel_defect}
    # Hill eigenvalues re-found as Evans zeros
    coeffs = build_coefficients(prof)
    N = choose_truncation(coeffs)
    rows, found = [], []
    for xi in np.linspace(-0.5, 0.5, 5) * np.pi / prof.X:
        smp = bloch_sample(coeffs, xi, N, Window(-0.5, 0.5, 1.0), check=False)
        for lam in smp.eigenvalues:
            if len(found) >= e["n_cross"]:
                break
            m = monodromy(prof, lam)
            rel = abs(evans(prof, lam, np.exp(1j * xi * prof.X), m)) / evans_scale(m)
            found.append(rel)
            rows.append((xi, lam, rel))
    report["cross_validation"] = [{"xi": x, "lambda": l, "relative_D": r} for x, l, r in rows]
    report["cross_validation_max"] = max(found) if found else None
    try:
        from .whitham import whitham_jacobians
        wd = whitham_jacobians(prof, h=cfg["whitham"]["h"])
        ratio = leading_order_ratio(prof, wd)
        report["gamma"] = list(ratio.gamma)
        report["ray_spread"] = ratio.spread
        report["ratio_passed"] = ratio.passed
    except (OrbitError, np.linalg.LinAlgError) as exc:
        report["ratio_error"] = str(exc)
    lams = [complex(a, b) for a in np.linspace(e["re_min"], e["re_max"], e["n_re"])
            for b in np.linspace(-e["im_max"], e["im_max"], e["n_im"])]
    phases = np.linspace(-np.pi, np.pi, e["n_phase"], endpoint=False)
    rio.write_csv(run.path("evans.csv"), ("re_lambda", "im_lambda", "sigma_phase", "re_D", "im_D"),
                  evans_sweep(prof, lams, phases))
    rio.write_json(run.path("evans.json"), report)
    print(f"|D(0,1)|/||Psi||^3 = {d0 / scale0:.2e}; {len(found)} Hill eigenvalues checked, "
          f"max relative |D| = {max(found, default=float('nan')):.2e}")


def cmd_simulate(cfg, ns, run):
    from .simulate import run_metastability, run_stability_probe
    sim = cfg["simulate"]
    if sim["mode"] == "metastability" and ns.X is None and ns.profile is None:
        prof = load_family(cfg, run).members[-1].sample(sim["n"])
    else:
        prof = profile_for(cfg, run, ns.X, ns.profile)
    diag_name = "diagnostics.csv"
    if sim["mode"] == "metastability":
        times = [float(t) for t in sim["snapshots"].split(",") if t.strip()]
        res = run_metastability(prof, n=sim["n"], amplitude=sim["amplitude"],
                                width=sim["width"] or None, snapshot_times=times,
                                n_diag=sim["n_diag"], scheme=sim["scheme"])
        for snap in res.snapshots:
            rio.write_csv(run.path(f"snapshot_t{snap.t:08.3f}.csv"), ("x", "tau", "u", "h"), snap.rows())
        print(f"metastability run on X={prof.X:.3f} to t={res.cfg.T:.3f}, {len(res.snapshots)} snapshots")
        diags = res.diagnostics
    else:
        res = run_stability_probe(prof, eps=sim["eps"], T=sim["T"], periods=sim["periods"],
                                  n_per=sim["n_per"], n_diag=sim["n_diag"], scheme=sim["scheme"],
                                  stop_on_growth=sim["stop_on_growth"])
        rio.write_json(run.path("probe.json"), {"verdict": res.verdict, "eps": res.eps,
                                                 "max_distance": res.max_distance, "X": prof.X})
        print(f"probe X={prof.X:.3f}: {res.verdict}, max shift-optimized distance {res.max_distance:.3e}")
        diags = res.diagnostics
    rio.write_csv(run.path(diag_name), diags.COLUMNS, diags.rows())


COMMANDS = {
    "equilibrium": cmd_equilibrium, "hopf": cmd_hopf, "orbit": cmd_orbit, "family": cmd_family,
    "spectrum": cmd_spectrum, "whitham": cmd_whitham, "evans": cmd_evans, "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one configuration entry (repeatable)")
    ap = argparse.ArgumentParser(prog="rollwaves", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("equilibrium", parents=[common], help="equilibria on a (q, c) slice")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--c", type=float, required=True)
    p = sub.add_parser("hopf", parents=[common], help="Hopf point at tau0, or on the family slice")
    p.add_argument("--tau0", type=float)
    sub.add_parser("family", parents=[common], help="continue the family and write the period-speed table")
    p = sub.add_parser("orbit", parents=[common], help="periodic profile at a given period")
    p.add_argument("--X", type=float, required=True)
    for name, text in (("spectrum", "Hill-method Bloch spectrum and verdicts"),
                       ("whitham", "Whitham averaged system and tangency check"),
                       ("evans", "Evans function checks and sweep"),
                       ("simulate", "time evolution (probe or metastability)")):
        p = sub.add_parser(name, parents=[common], help=text)
        g = p.add_mutually_exclusive_group()
        g.add_argument("--X", type=float, help="period of the family member")
        g.add_argument("--profile", help="profile file written by 'orbit'")
    p = sub.add_parser("manifest", help="manifest operations")
    msub = p.add_subparsers(dest="action", required=True)
    r = msub.add_parser("replay", help="re-run a manifest and compare output hashes")
    r.add_argument("manifest")
    return ap


def _exit_code(exc: BaseException) -> int:
    from .evans import EvansError
    from .simulate import CFLViolation
    if isinstance(exc, (ConfigError, LockError, CFLViolation)):
        return EXIT_DOMAIN
    if isinstance(exc, OrbitError):
        return EXIT_SOLVER
    if isinstance(exc, (DomainError, ValueError)) and not isinstance(exc, EvansError):
        return EXIT_DOMAIN
    return EXIT_NUMERIC


def execute(command: str, args: dict, cfg: ProjectConfig, inputs=()) -> tuple[int, Run | None]:
    ns = argparse.Namespace(**args)
    run = Run(command, args, cfg, inputs)
    try:
        with run:
            try:
                COMMANDS[command](cfg, ns, run)
            except Exception as exc:
                code = _exit_code(exc)
                print(f"error: {exc}", file=sys.stderr)
                run.write_manifest(code)
                return code, run
            run.write_manifest(EXIT_OK)
    except LockError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN, None
    print(f"outputs in {run.dir}")
    return EXIT_OK, run


def replay(manifest_path: str) -> int:
    m = json.loads(Path(manifest_path).read_text())
    cfg = ProjectConfig.load(overrides=[f"{s}.{k}={v}" for s, kv in m["config"].items() for k, v in kv.items()])
    for path, digest in m["inputs"].items():
        if rio.sha256(path) != digest:
            print(f"error: input {path} changed since the manifest was written", file=sys.stderr)
            return EXIT_DOMAIN
    old = m["outputs"]
    code, run = execute(m["command"], m["args"], cfg, inputs=list(m["inputs"]))
    if code != EXIT_OK:
        return code
    new = json.loads((run.dir / "manifest.json").read_text())["outputs"]
    diff = sorted(k for k in set(old) | set(new) if old.get(k) != new.get(k))
    if diff:
        print("outputs differ: " + ", ".join(diff))
        return EXIT_NUMERIC
    print(f"replay reproduced {len(new)} outputs bit-identically")
    return EXIT_OK


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    if ns.command == "manifest":
        try:
            return replay(ns.manifest)
        except (OSError, KeyError, json.JSONDecodeError, ConfigError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DOMAIN
    try:
        cfg = ProjectConfig.load(ns.config, ns.set)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    args = {k: v for k, v in vars(ns).items() if k not in ("command", "config", "set")}
    inputs = [args["profile"]] if args.get("profile") else []
    return execute(ns.command, args, cfg, inputs)[0]


if __name__ == "__main__":
    sys.exit(main())
