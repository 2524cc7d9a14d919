import json

import pytest

from rollwaves import io as rio
from rollwaves.cli import main


@pytest.fixture(scope="module")
def outdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


def base(outdir, *extra):
    # short family keeps the CLI tests quick
    return ["--set", f"output.dir={outdir}", "--set", "family.x_max=7", *extra]


def run_dir(outdir, command):
    dirs = sorted(outdir.glob(f"{command}-*"), key=lambda p: p.stat().st_mtime)
    return dirs[-1]


def manifest(d):
    return json.loads((d / "manifest.json").read_text())


def test_equilibrium(outdir, capsys):
    assert main(["equilibrium", "--q", "1", "--c", "0", *base(outdir)]) == 0
    rows = rio.read_csv(run_dir(outdir, "equilibrium") / "equilibria.csv")
    assert len(rows["tau0"]) == 1 and rows["tau0"][0] == pytest.approx(1.0)


def test_hopf_query(outdir, capsys):
    assert main(["hopf", "--tau0", "1", *base(outdir)]) == 0
    out = capsys.readouterr().out
    assert "cs=0.408248" in out and "XH=2.96" in out


def test_malformed_config(outdir, tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[orbit]\ntolerance = 1e-9\n")
    assert main(["hopf", "--config", str(cfg)]) == 2
    assert "orbit.tolerance" in capsys.readouterr().err
    assert main(["hopf", "--set", "orbit.tol=-1", *base(outdir)]) == 2


def test_no_hopf_exit_3(outdir, capsys):
    assert main(["family", *base(outdir, "--set", "model.F=3")]) == 3
    assert "no admissible Hopf point" in capsys.readouterr().err


def test_family_and_cache(outdir):
    assert main(["family", *base(outdir)]) == 0
    first = run_dir(outdir, "family")
    table = rio.read_csv(first / "period_speed.csv")
    assert (table["X"][1:] > table["X"][:-1]).all()
    assert (table["derivative_margin"] > 0).all()
    assert main(["family", *base(outdir)]) == 0
    assert manifest(run_dir(outdir, "family"))["cache_hits"]


def test_out_of_range(outdir, capsys):
    assert main(["orbit", "--X", "50", *base(outdir)]) == 2


def test_spectrum_and_replay(outdir):
    args = ["spectrum", "--X", "6.2", *base(outdir, "--set", "spectrum.n_xi=21", "--set", "spectrum.N=32",
                                           "--set", "spectrum.check=false")]
    assert main(args) == 0
    d = run_dir(outdir, "spectrum")
    summary = json.loads((d / "spectrum.json").read_text())
    assert summary["classification"] == "stable"
    assert summary["whitham"]["classification"] == "hyperbolic"
    assert summary["whitham"]["tangency_passed"]
    m = manifest(d)
    assert set(m["outputs"]) == {"spectrum.csv", "spectrum.json"}
    csv_hash = m["outputs"]["spectrum.csv"]
    assert main(["manifest", "replay", str(d / "manifest.json")]) == 0
    assert manifest(d)["outputs"]["spectrum.csv"] == csv_hash


def test_orbit_profile_feeds_spectrum(outdir):
    assert main(["orbit", "--X", "6.2", *base(outdir)]) == 0
    prof = run_dir(outdir, "orbit") / "profile.txt"
    info = json.loads((prof.parent / "orbit.json").read_text())
    assert info["ode_residual"] < 1e-8 and info["H2_full_rank"]
    assert main(["whitham", "--profile", str(prof), *base(outdir, "--set", "whitham.n_xi=15",
                                                           "--set", "spectrum.N=32")]) == 0
    w = json.loads((run_dir(outdir, "whitham") / "whitham.json").read_text())
    assert w["classification"] == "hyperbolic"


def test_evans_origin(outdir):
    args = ["evans", "--X", "6.2", *base(outdir, "--set", "evans.n_im=3", "--set", "evans.n_re=1",
                                        "--set", "evans.n_phase=4", "--set", "evans.n_cross=4")]
    assert main(args) == 0
    d = run_dir(outdir, "evans")
    rep = json.loads((d / "evans.json").read_text())
    assert rep["origin_relative"] < 1e-7
    assert rep["cross_validation_max"] < 1e-5
    assert len(rio.read_csv(d / "evans.csv")["re_D"]) == 12


def test_simulate_probe(outdir):
    assert main(["simulate", "--X", "6.2", *base(outdir, "--set", "simulate.T=2", "--set", "simulate.n_diag=4")]) == 0
    d = run_dir(outdir, "simulate")
    assert json.loads((d / "probe.json").read_text())["verdict"] == "bounded"
    cols = rio.read_csv(d / "diagnostics.csv")
    assert len(cols["t"]) == 5


def test_simulate_metastability_snapshots(outdir):
    args = ["simulate", *base(outdir, "--set", "simulate.mode=metastability", "--set", "simulate.n=128",
                              "--set", "simulate.snapshots=0,0.5", "--set", "simulate.n_diag=4")]
    assert main(args) == 0
    d = run_dir(outdir, "simulate")
    snaps = sorted(d.glob("snapshot_*.csv"))
    assert len(snaps) == 2
    s = rio.read_csv(snaps[0])
    assert list(s) == ["x", "tau", "u", "h"]
    assert s["h"] == pytest.approx(1 / s["tau"])


def test_lock(outdir, capsys):
    args = ["hopf", "--tau0", "2", *base(outdir)]
    assert main(args) == 0
    d = run_dir(outdir, "hopf")
    (d / ".lock").write_text("1")
    try:
        assert main(args) == 2
        assert "locked" in capsys.readouterr().err
    finally:
        (d / ".lock").unlink()
