import numpy as np
import pytest

from rollwaves import io as rio
from rollwaves.config import ConfigError, ProjectConfig, write_default


def test_profile_roundtrip(tmp_path, wave62):
    path = rio.write_profile(tmp_path / "p.txt", wave62)
    back = rio.read_profile(path)
    for name in ("x", "tau", "dtau", "u"):
        assert np.array_equal(getattr(back, name), getattr(wave62, name))
    assert back.spec == wave62.spec
    assert back.params == wave62.params
    assert np.array_equal(back.nodes, wave62.nodes)
    assert back.eulerian_length == wave62.eulerian_length
    # the reloaded profile still solves the ODE
    assert back.periodicity_defect() < 1e-9


def test_malformed_profile(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("# X = 1\n1 2 3 4\n")
    with pytest.raises(ValueError):
        rio.read_profile(bad)


def test_family_roundtrip(tmp_path, family):
    rio.write_family(tmp_path / "fam", family)
    back = rio.read_family(tmp_path / "fam")
    assert np.array_equal(back.periods, family.periods)
    assert back.closure == family.closure


def test_csv_json(tmp_path):
    p = rio.write_csv(tmp_path / "a.csv", ("a", "b", "flag"), [(1.5, 2, True), (0.1, -3, False)])
    d = rio.read_csv(p)
    assert np.array_equal(d["a"], [1.5, 0.1]) and np.array_equal(d["flag"], [1, 0])
    j = rio.write_json(tmp_path / "a.json", {"z": 1 + 2j, "arr": np.arange(2), "nan": float("nan")})
    assert '"re": 1.0' in j.read_text()
    assert rio.sha256(p) == rio.sha256(p)


def test_config_defaults_and_overrides(tmp_path):
    cfg = ProjectConfig.load(overrides=["model.F=5", "spectrum.check=false", "spectrum.N=auto"])
    assert cfg.params().F == 5.0
    assert cfg["spectrum"]["check"] is False
    assert cfg.truncation() is None
    assert cfg.closure()(0.0) == pytest.approx(0.96)
    path = write_default(tmp_path / "d.ini")
    assert ProjectConfig.load(path).as_dict() == ProjectConfig.load().as_dict()


@pytest.mark.parametrize("item, word", [
    ("model.G=1", "model.G"), ("nosuch.F=1", "nosuch"), ("model.F=abc", "model.F"),
    ("orbit.tol=0", "orbit.tol"), ("orbit.tol=-1e-9", "orbit.tol"), ("simulate.scheme=weno", "simulate.scheme"),
    ("spectrum.N=0", "spectrum.N"), ("model.r=3", "model"), ("modelF", "section.key"),
])
def test_config_rejects(item, word):
    with pytest.raises(ConfigError, match=word.replace(".", r"\.")):
        ProjectConfig.load(overrides=[item])


def test_config_file_unknown_key(tmp_path):
    f = tmp_path / "c.ini"
    f.write_text("[family]\nu_minus = 0.9\nspeed = 2\n")
    with pytest.raises(ConfigError, match="family.speed"):
        ProjectConfig.load(f)
