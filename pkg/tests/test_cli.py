import hashlib
import json
import os
from pathlib import Path

import numpy as np
import pytest

from dgff.cli import main, resolve_workers, run
from dgff.config import ConfigError, ExperimentConfig
from dgff.domain import LatticeDomain, discretize, unit_square
from dgff.extremes import zeta_measure
from dgff.green import ALPHA
from dgff.io import FormatError, field_from_bytes, field_to_bytes, read_atoms_csv, read_field, write_atoms_csv, write_field
from dgff.sampler import Field, RestrictionOperator, RngStream, enclosing_rectangle, sample_field

MINIMAL = """
master_seed = 1

[domain]
shape = "square"

[sampler]
N = 64
route = "dense"
reps = 100

[analysis]
ops = ["covariance_test"]
"""

FIELDS = """
master_seed = 4

[domain]
shape = "square"

[sampler]
N = [24, 32]
route = "spectral"
reps = 30
chunk = 7

[analysis]
ops = ["rayleigh_gof", "norming_ratio", "max_tail", "gm_check", "green_asymptotics"]
u_min = 0.2
u_max = 1.2
u_points = 5
n_calib = 50

[output]
save_fields = 2
save_atoms = 1
"""


def _hashes(d: Path) -> dict:
    return {str(p.relative_to(d)): hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(d.rglob("*")) if p.is_file() and p.name != "timings.json"}


def test_field_roundtrip_bit_exact(tmp_path):
    L = discretize(unit_square(), 20)
    h = sample_field(L, RngStream(0, 0))
    write_field(tmp_path / "f.bin", h)
    g = read_field(tmp_path / "f.bin")
    assert g.domain == h.domain and g.N == 20
    assert g.values.tobytes() == h.values.tobytes()
    raw = (tmp_path / "f.bin").read_bytes()
    assert raw[:4] == b"DGFF" and field_to_bytes(g) == raw
    assert len(raw) == 4 + 4 + 8 + 8 + 16 * L.size
    with pytest.raises(FormatError):
        field_from_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        field_from_bytes(raw[:-1])


def test_field_roundtrip_negative_coordinates():
    L = LatticeDomain.from_vertices([(-3, 2), (0, -1), (5, 5)], N=7)
    h = Field(L, [1.5, -np.pi, 1e-300])
    g = field_from_bytes(field_to_bytes(h))
    assert np.array_equal(g.domain.vertices, L.vertices) and g.values.tobytes() == h.values.tobytes()


def test_atoms_csv_roundtrip(tmp_path):
    h = sample_field(discretize(unit_square(), 12), RngStream(0, 1))
    z = zeta_measure(h)
    write_atoms_csv(tmp_path / "a.csv", z)
    back = read_atoms_csv(tmp_path / "a.csv")
    assert np.array_equal(back.weights, z.weights) and np.array_equal(back.depths, z.depths)
    assert np.array_equal(back.positions, z.positions)


def test_config_roundtrip_and_hash():
    cfg = ExperimentConfig.loads(FIELDS)
    again = ExperimentConfig.loads(cfg.dumps())
    assert again == cfg
    assert again.content_hash() == cfg.content_hash()
    cfg2 = ExperimentConfig.loads(FIELDS.replace("master_seed = 4", "master_seed = 5"))
    assert cfg2.content_hash() != cfg.content_hash()
    cfg3 = ExperimentConfig.loads("workers = 8\n" + FIELDS)
    assert cfg3.content_hash() == cfg.content_hash()


@pytest.mark.parametrize(
    "patch,path",
    [
        (("[analysis]", "[analysis]\ndelta = 0.0"), "analysis.delta"),
        (("route = \"spectral\"", "route = \"fast\""), "sampler.route"),
        (("reps = 30", "reps = 0"), "sampler.reps"),
        (("[analysis]", "[analysis]\nbogus = 1"), "analysis.bogus"),
        (('"gm_check"', '"nope"'), "analysis.ops[3]"),
        (("N = [24, 32]", "N = [24, -2]"), "sampler.N[1]"),
        (('shape = "square"', 'shape = "hexagon"'), "domain.shape"),
    ],
)
def test_config_validation_paths(patch, path):
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.loads(FIELDS.replace(*patch, 1))
    assert err.value.path == path


def test_minimal_run_and_determinism(tmp_path):
    cfgp = tmp_path / "min.toml"
    cfgp.write_text(MINIMAL)
    assert main(["run", "--config", str(cfgp), "--out", str(tmp_path / "a")]) == 0
    s = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert s["all_passed"] is True
    assert s["reports"]["covariance_test/N=64"]["passed"] is True
    assert main(["run", "--config", str(cfgp), "--out", str(tmp_path / "b")]) == 0
    assert _hashes(tmp_path / "a") == _hashes(tmp_path / "b")


def test_field_run_worker_invariance(tmp_path):
    cfgp = tmp_path / "f.toml"
    cfgp.write_text(FIELDS)
    s1 = run(cfgp, tmp_path / "w1", workers=1)
    s8 = run(cfgp, tmp_path / "w8", workers=8)
    h1, h8 = _hashes(tmp_path / "w1"), _hashes(tmp_path / "w8")
    assert h1 == h8
    assert "fields/field_N24_000001.bin" in h1 and "atoms/zeta_N32_000000.csv" in h1
    assert s1.to_dict() == s8.to_dict()
    assert json.loads((tmp_path / "w8" / "timings.json").read_text())["workers"] == 8
    # with gm_check on, the stored field is the fine part of replicate 1's split
    f = read_field(tmp_path / "w1" / "fields" / "field_N24_000001.bin")
    L = discretize(unit_square(), 24)
    Vd = enclosing_rectangle(L, 4)
    sub, _ = RestrictionOperator(Vd, L).split(sample_field(Vd, RngStream(4, 1), "spectral").values)
    assert np.allclose(f.values, np.ravel(sub), rtol=0, atol=1e-10)


def test_seed_override_changes_output(tmp_path):
    cfgp = tmp_path / "min.toml"
    cfgp.write_text(MINIMAL)
    run(cfgp, tmp_path / "a")
    run(cfgp, tmp_path / "b", seed_override=2)
    a = json.loads((tmp_path / "a" / "summary.json").read_text())
    b = json.loads((tmp_path / "b" / "summary.json").read_text())
    assert a["config_hash"] != b["config_hash"]


def test_exit_codes_and_cleanup(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text(MINIMAL.replace("[analysis]", "[analysis]\ndelta = 0.0"))
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "analysis.delta" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()
    # an analysis that fails: tail grid far into the bulk with too few fields
    failing = tmp_path / "fail.toml"
    failing.write_text(MINIMAL.replace('"covariance_test"', '"max_tail"').replace('route = "dense"', 'route = "spectral"').replace("N = 64", "N = 16"))
    assert main(["run", "--config", str(failing), "--out", str(tmp_path / "y")]) == 1
    # execution failure mid-run leaves no partial directory
    huge = tmp_path / "huge.toml"
    huge.write_text(MINIMAL.replace("N = 64", "N = 200"))  # dense cap exceeded
    assert main(["run", "--config", str(huge), "--out", str(tmp_path / "z")]) == 2
    assert not (tmp_path / "z").exists()
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".z.")]
    # refuse to clobber a directory that is not a previous run
    keep = tmp_path / "keep"
    keep.mkdir()
    (keep / "notes.txt").write_text("mine")
    assert main(["run", "--config", str(tmp_path / "fail.toml"), "--out", str(keep)]) == 2
    assert (keep / "notes.txt").read_text() == "mine"


def test_workers_resolution(monkeypatch):
    cfg = ExperimentConfig.loads("workers = 3\n" + MINIMAL)
    monkeypatch.setenv("DGFF_WORKERS", "5")
    assert resolve_workers(2, cfg) == 2
    assert resolve_workers(None, cfg) == 3
    assert resolve_workers(None, ExperimentConfig.loads(MINIMAL)) == 5
    monkeypatch.delenv("DGFF_WORKERS")
    assert resolve_workers(None, None) == 1


def test_constants_subcommand(capsys):
    assert main(["constants"]) == 0
    out = dict(line.split("=") for line in capsys.readouterr().out.split())
    assert out["g"] == "0.6366197723675814"
    assert float(out["alpha"]) == ALPHA
    assert abs(float(out["c_phi_identity"]) - float(out["c_phi_one"])) < 1e-8


def test_green_subcommand(capsys, tmp_path):
    assert main(["green", "--domain", "square", "--N", "4"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["G"] == [[1.0]] and out["vertices"] == [[2, 2]]
    assert main(["green", "--domain", "square", "--N", "8", "--x", "4,4"]) == 0
    v = float(capsys.readouterr().out)
    assert v > 1
    assert main(["green", "--domain", "disc:0,0,1", "--N", "6", "--out", str(tmp_path / "g.csv")]) == 0
    assert (tmp_path / "g.csv").read_text().startswith("x1,y1,x2,y2,G\n")


def test_sample_zeta_extremal_subcommands(tmp_path, capsys):
    f = tmp_path / "f.bin"
    assert main(["sample", "--N", "32", "--seed", "3", "--out", str(f)]) == 0
    assert main(["zeta", "--field", str(f), "--out", str(tmp_path / "z.csv")]) == 0
    z = read_atoms_csv(tmp_path / "z.csv")
    lN = np.log(32)
    assert np.max(np.abs(z.weights / (np.exp(-ALPHA * z.depths * np.sqrt(lN)) / lN) - 1)) < 1e-12
    assert main(["extremal", "--field", str(f), "--r-N", "8", "--shapes", str(tmp_path / "s.json")]) == 0
    rows = capsys.readouterr().out.strip().splitlines()
    assert rows[0] == "x,y,height" and len(rows) > 1
    shapes = json.loads((tmp_path / "s.json").read_text())
    assert len(shapes) == len(rows) - 1
    assert main(["zeta", "--field", str(tmp_path / "missing.bin")]) == 2
    assert main(["sample", "--N", "8", "--domain", "hexagon", "--out", str(f)]) == 2
