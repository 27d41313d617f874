import json

import numpy as np
import pytest

from adlrom import io
from adlrom.cli import main
from adlrom.config import ConfigError, StudyConfig, parse_config
from adlrom.integrate import Scheme, run_trajectory
from adlrom.metrics import StudyResult
from adlrom.pipeline import Workspace
from adlrom.verify import toy_config

TOY = """\
n_side = 4
dt_snap = 0.1
t_snap_end = 0.9
dt_rom = 0.01
T = 0.2
r = 6
delta = 0.1
delta_list = 0.2, 0.1
r_list = 4, 6
ad_r_list = 6
"""


def test_empty_config_gives_defaults():
    assert parse_config("# nothing\n\n") == StudyConfig()


def test_config_values_and_comments():
    c = parse_config("r = 40  # trailing\ndelta_list = 0.5 0.25\nscheme = lrom\n")
    assert c.r == 40 and c.delta_list == (0.5, 0.25) and c.scheme == "lrom"


@pytest.mark.parametrize("text,frag", [
    ("delta = -0.1", "delta"),
    ("r = 0", "r"),
    ("\n\nbogus = 3", "line 3"),
    ("N = 2.5", "line 1"),
    ("r 5", "line 1"),
    ("scheme = sgs", "scheme"),
])
def test_config_rejections(text, frag):
    with pytest.raises(ConfigError, match=frag):
        parse_config(text)


def test_r_above_rank_rejected(tiny):
    with pytest.raises(ConfigError):
        tiny.check_r(tiny.basis.R + 1)
    with pytest.raises(ConfigError):
        Workspace(toy_config(4).replace(r=150)).operators(150)


def test_basis_roundtrip(tiny, tmp_path):
    io.save_basis(tiny.basis, tmp_path)
    b = io.load_basis(tiny.space, tmp_path)
    assert np.array_equal(b.modes_u, tiny.basis.modes_u)
    assert np.array_equal(b.eigenvalues, tiny.basis.eigenvalues)
    assert np.array_equal(b.S_full, tiny.basis.S_full)
    assert np.array_equal(b.spectrum, tiny.basis.spectrum)
    assert np.abs(b.gram(tiny.mass) - np.eye(b.R)).max() <= 1e-10


def test_snapshot_roundtrip(tiny, tmp_path):
    io.save_snapshots(tiny.snapshots, tmp_path)
    s = io.load_snapshots(tiny.space, tmp_path)
    assert np.array_equal(s.comp_u, tiny.snapshots.comp_u)
    assert np.array_equal(s.times, tiny.snapshots.times)


def test_truncated_basis_file(tiny, tmp_path):
    io.save_basis(tiny.basis, tmp_path)
    f = tmp_path / "modes_u.csv"
    lines = f.read_text().splitlines()
    f.write_text("\n".join(lines[:-3]) + "\n")
    with pytest.raises(io.FormatError):
        io.load_basis(tiny.space, tmp_path)


def test_version_mismatch(tiny, tmp_path):
    io.save_basis(tiny.basis, tmp_path)
    f = tmp_path / "eigenvalues.csv"
    f.write_text(f.read_text().replace(io.POD_FORMAT, "ADLROM-POD-0", 1))
    with pytest.raises(io.FormatError, match="version"):
        io.load_basis(tiny.space, tmp_path)


def test_mesh_mismatch(tiny, toy, tmp_path):
    io.save_basis(tiny.basis, tmp_path)
    with pytest.raises(io.FormatError):
        io.load_basis(toy.space, tmp_path)


def test_trajectory_roundtrip_exact(tmp_path, rng):
    from adlrom.integrate import SchemeKind, Trajectory

    steps = 1000
    times = np.arange(steps + 1) * 1e-3
    coeffs = rng.standard_normal((steps + 1, 7)) * np.logspace(-12, 3, 7)
    traj = Trajectory(times, coeffs, SchemeKind("adlrom"), 0.0625, 5, np.zeros(steps - 1, dtype=int), [])
    p = io.save_trajectory(traj, tmp_path / io.trajectory_filename("adlrom", 7, 0.0625))
    assert p.name == "traj_adlrom_7_0.0625.csv"
    t2, c2 = io.load_trajectory(p)
    assert np.array_equal(t2, times) and np.array_equal(c2, coeffs)


def test_tensor_roundtrip(tmp_path, rng):
    T = rng.standard_normal((3, 3, 3))
    io.save_tensor(T, tmp_path / "t.csv")
    assert np.array_equal(io.load_tensor(tmp_path / "t.csv"), T)


def test_save_study(tmp_path):
    res = StudyResult("delta", "delta")
    res.add(0.1, 1e-2)
    res.add(0.2, 4e-2)
    res.failures.append((0.3, "diverged"))
    csv, fit = io.save_study(res, tmp_path)
    data = np.loadtxt(csv, delimiter=",", skiprows=1)
    assert data.shape == (2, 2)
    text = fit.read_text()
    assert "slope 2" in text and "failed 0.3" in text


def test_manifest(tmp_path):
    out = tmp_path / "a.txt"
    out.write_text("x")
    io.write_manifest(tmp_path / "m.json", {"outputs": [str(out)]})
    assert json.loads((tmp_path / "m.json").read_text())["outputs"] == [str(out)]
    assert not list(tmp_path.glob("*.tmp"))
    with pytest.raises(FileNotFoundError):
        io.write_manifest(tmp_path / "m2.json", {"outputs": [str(tmp_path / "missing")]})
    assert not (tmp_path / "m2.json").exists()


@pytest.fixture
def toy_cfg(tmp_path):
    p = tmp_path / "toy.cfg"
    p.write_text(TOY)
    return p


def _run(*argv):
    return main([str(a) for a in argv])


def test_cli_verify(capsys):
    assert _run("verify", "--n-side", 4) == 0
    assert "invariants hold" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [["--bogus"], ["run", "--frobnicate"], ["run", "--scheme", "x"], []])
def test_cli_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1


def test_cli_missing_config(tmp_path):
    assert _run("pod", "--config", tmp_path / "none.cfg", "--out", tmp_path) == 1


def test_cli_r_above_rank(toy_cfg, tmp_path):
    assert _run("run", "--config", toy_cfg, "--out", tmp_path, "--r", 50) == 1


def test_cli_pod_and_snapshots(toy_cfg, tmp_path, capsys):
    assert _run("snapshots", "--config", toy_cfg, "--out", tmp_path) == 0
    assert _run("pod", "--config", toy_cfg, "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert "R = " in out and "Lambda_H1" in out
    m = json.loads((tmp_path / "manifest_pod.json").read_text())
    assert m["config"]["n_side"] == 4
    assert all((tmp_path / "pod" / f).exists() for f in ("eigenvalues.csv", "modes_u.csv", "modes_v.csv"))


def test_cli_degenerate_schemes_identical(toy_cfg, tmp_path):
    base = ["--config", toy_cfg, "--out", tmp_path, "--no-cache"]
    assert _run("run", *base, "--scheme", "adlrom", "--delta", 0, "--N", 3) == 0
    assert _run("run", *base, "--scheme", "grom", "--delta", 0) == 0
    a = (tmp_path / "traj_adlrom_6_0.csv").read_bytes()
    b = (tmp_path / "traj_grom_6_0.csv").read_bytes()
    assert a == b
    assert _run("run", *base, "--scheme", "lrom", "--delta", 0.1) == 0
    assert _run("run", *base, "--scheme", "adlrom", "--delta", 0.1, "--N", 0) == 0
    assert (tmp_path / "traj_lrom_6_0.1.csv").read_bytes() == (tmp_path / "traj_adlrom_6_0.1.csv").read_bytes()


def test_cli_deterministic_rerun(toy_cfg, tmp_path):
    for d in ("a", "b"):
        assert _run("study-delta", "--config", toy_cfg, "--out", tmp_path / d, "--no-cache") == 0
    for name in ("study_delta.csv", "study_delta_fit.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_threads_match_reference(toy_cfg, tmp_path):
    for d, n in (("one", 1), ("two", 3)):
        assert _run("run", "--config", toy_cfg, "--out", tmp_path / d, "--no-cache", "--threads", n) == 0
    a = np.loadtxt(tmp_path / "one" / "traj_adlrom_6_0.1.csv", delimiter=",", skiprows=1)
    b = np.loadtxt(tmp_path / "two" / "traj_adlrom_6_0.1.csv", delimiter=",", skiprows=1)
    assert np.abs(a - b).max() <= 1e-10 * np.abs(a).max()


def test_cli_study_r_and_ad(toy_cfg, tmp_path, capsys):
    assert _run("study-r", "--config", toy_cfg, "--out", tmp_path) == 0
    assert _run("study-ad", "--config", toy_cfg, "--out", tmp_path) == 0
    assert (tmp_path / "study_r.csv").exists() and (tmp_path / "study_ad_r6.csv").exists()
    assert "slope" in capsys.readouterr().out


def test_cli_newton_failure_exit(toy_cfg, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(TOY + "newton_max_iters = 1\nnewton_rel_tol = 1e-16\nnewton_abs_tol = 1e-300\n")
    assert _run("run", "--config", cfg, "--out", tmp_path / "o") == 2
    assert _run("study-delta", "--config", cfg, "--out", tmp_path / "s") == 2
    m = json.loads((tmp_path / "s" / "manifest_study-delta.json").read_text())
    assert "failed" in (tmp_path / "s" / "study_delta_fit.txt").read_text()
    assert m["outputs"]


def test_trajectory_matches_library(toy_cfg, tmp_path):
    assert _run("run", "--config", toy_cfg, "--out", tmp_path, "--no-cache") == 0
    ws = Workspace(parse_config(TOY))
    c = ws.config
    ops = ws.operators(c.r)
    traj = run_trajectory(ws.basis, ops, Scheme.make(c.scheme, ops.S, c.delta, c.N), ws.params,
                          c.dt_rom, c.T, ws.forcing, ws.mass, ws.newton)
    _, coeffs = io.load_trajectory(tmp_path / "traj_adlrom_6_0.1.csv")
    assert np.array_equal(coeffs, traj.coeffs)
