"""Text persistence of snapshots, POD bases, trajectories, tensors and study tables.

Numbers are written with 17 significant digits so doubles round-trip exactly.
Matrix files carry a one-line ``#`` header naming the format version and the
dimensions, which are checked on load.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .fe import ScalarSpaceP2
from .integrate import SchemeKind, Trajectory
from .pod import PodBasis, SnapshotSet

POD_FORMAT = "ADLROM-POD-1"
SNAP_FORMAT = "ADLROM-SNAP-1"
FMT = "%.17g"


class FormatError(ValueError):
    pass


def _header(version: str, **dims) -> str:
    return " ".join([version] + [f"{k}={v}" for k, v in dims.items()])


def _read_header(path: Path, version: str) -> dict:
    with open(path) as fh:
        line = fh.readline()
    if not line.startswith("#"):
        raise FormatError(f"{path}: missing header line")
    parts = line[1:].split()
    if not parts or parts[0] != version:
        found = parts[0] if parts else ""
        raise FormatError(f"{path}: format version {found!r}, expected {version!r}")
    dims = {}
    for p in parts[1:]:
        k, _, v = p.partition("=")
        dims[k] = int(v)
    return dims


def _load_matrix(path: Path, rows: int, cols: int) -> np.ndarray:
    try:
        A = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if A.shape != (rows, cols):
        raise FormatError(f"{path}: expected {rows}x{cols} values, found {A.shape[0]}x{A.shape[1]}")
    return A


def _save(path: Path, A: np.ndarray, header: str):
    np.savetxt(path, np.atleast_2d(A), delimiter=",", fmt=FMT, header=header, comments="# ")


def save_snapshots(snaps: SnapshotSet, directory) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    n = snaps.space.mesh.n_side
    hdr = _header(SNAP_FORMAT, n_side=n, n_snapshots=len(snaps), n_dofs=snaps.space.n_dofs)
    paths = [d / "snapshot_times.csv", d / "snapshots_u.csv", d / "snapshots_v.csv"]
    _save(paths[0], snaps.times[:, None], hdr)
    _save(paths[1], snaps.comp_u.T, hdr)
    _save(paths[2], snaps.comp_v.T, hdr)
    return paths


def load_snapshots(space: ScalarSpaceP2, directory) -> SnapshotSet:
    d = Path(directory)
    dims = _read_header(d / "snapshots_u.csv", SNAP_FORMAT)
    if dims.get("n_side") != space.mesh.n_side or dims.get("n_dofs") != space.n_dofs:
        raise FormatError(f"{d}: snapshots were written for n_side={dims.get('n_side')}")
    K1 = dims["n_snapshots"]
    times = _load_matrix(d / "snapshot_times.csv", K1, 1)[:, 0]
    U = _load_matrix(d / "snapshots_u.csv", space.n_dofs, K1)
    V = _load_matrix(d / "snapshots_v.csv", space.n_dofs, K1)
    return SnapshotSet(space, times, np.ascontiguousarray(U.T), np.ascontiguousarray(V.T))


def save_basis(basis: PodBasis, directory) -> list[Path]:
    """eigenvalues.csv, modes_u.csv, modes_v.csv, plus the full spectrum and S."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    R, n = basis.R, basis.space.n_dofs
    hdr = _header(POD_FORMAT, n_side=basis.space.mesh.n_side, R=R, n_dofs=n,
                  n_snapshots=basis.n_snapshots)
    paths = {
        "eig": d / "eigenvalues.csv",
        "u": d / "modes_u.csv",
        "v": d / "modes_v.csv",
        "spec": d / "spectrum.csv",
        "S": d / "stiffness_rom.csv",
    }
    _save(paths["eig"], np.column_stack([np.arange(1, R + 1), basis.eigenvalues]), hdr)
    _save(paths["u"], basis.modes_u.T, hdr)
    _save(paths["v"], basis.modes_v.T, hdr)
    spec = basis.spectrum
    _save(paths["spec"], np.column_stack([np.arange(1, len(spec) + 1), spec]), hdr)
    _save(paths["S"], basis.S_full, hdr)
    return list(paths.values())


def load_basis(space: ScalarSpaceP2, directory) -> PodBasis:
    d = Path(directory)
    dims = _read_header(d / "eigenvalues.csv", POD_FORMAT)
    R = dims["R"]
    if dims.get("n_side") != space.mesh.n_side or dims.get("n_dofs") != space.n_dofs:
        raise FormatError(f"{d}: basis was written for n_side={dims.get('n_side')}")
    for name in ("modes_u.csv", "modes_v.csv", "stiffness_rom.csv"):
        other = _read_header(d / name, POD_FORMAT)
        if other.get("R") != R:
            raise FormatError(f"{d / name}: rank {other.get('R')} does not match eigenvalues ({R})")
    lam = _load_matrix(d / "eigenvalues.csv", R, 2)[:, 1]
    U = _load_matrix(d / "modes_u.csv", space.n_dofs, R)
    V = _load_matrix(d / "modes_v.csv", space.n_dofs, R)
    S = _load_matrix(d / "stiffness_rom.csv", R, R)
    spec = None
    if (d / "spectrum.csv").exists():
        spec = np.loadtxt(d / "spectrum.csv", delimiter=",", comments="#", ndmin=2)[:, 1]
    return PodBasis(space, np.ascontiguousarray(U.T), np.ascontiguousarray(V.T), lam, S,
                    dims.get("n_snapshots", 0), spec)


def trajectory_filename(scheme: str | SchemeKind, r: int, delta: float) -> str:
    return f"traj_{SchemeKind(scheme).value}_{r}_{delta:g}.csv"


def save_trajectory(traj: Trajectory, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    K1, r = traj.coeffs.shape
    cols = ["step", "t"] + [f"a_{j}" for j in range(1, r + 1)]
    data = np.column_stack([np.arange(K1), traj.times, traj.coeffs])
    np.savetxt(path, data, delimiter=",", fmt=FMT, header=",".join(cols), comments="")
    return path


def load_trajectory(path) -> tuple[np.ndarray, np.ndarray]:
    """Returns (times, coeffs) from a trajectory CSV."""
    path = Path(path)
    with open(path) as fh:
        cols = fh.readline().strip().split(",")
    if cols[:2] != ["step", "t"]:
        raise FormatError(f"{path}: not a trajectory file")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(cols):
        raise FormatError(f"{path}: {data.shape[1]} columns, header names {len(cols)}")
    if not np.array_equal(data[:, 0], np.arange(len(data))):
        raise FormatError(f"{path}: step column is not 0..K")
    return data[:, 1].copy(), np.ascontiguousarray(data[:, 2:])


def save_tensor(T: np.ndarray, path) -> Path:
    """Dump as rows (i, j, k, value), zero-based indices."""
    path = Path(path)
    r = T.shape[0]
    i, j, k = np.meshgrid(np.arange(r), np.arange(r), np.arange(r), indexing="ij")
    data = np.column_stack([i.ravel(), j.ravel(), k.ravel(), T.ravel()])
    np.savetxt(path, data, delimiter=",", fmt=["%d", "%d", "%d", FMT], header="i,j,k,value",
               comments="")
    return path


def load_tensor(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    r = int(round(len(data) ** (1 / 3)))
    if r**3 != len(data):
        raise FormatError(f"{path}: {len(data)} rows is not a cube")
    T = np.empty((r, r, r))
    idx = data[:, :3].astype(int)
    T[idx[:, 0], idx[:, 1], idx[:, 2]] = data[:, 3]
    return T


def save_study(result, directory) -> list[Path]:
    """study_<name>.csv (param, error, aux...) and study_<name>_fit.txt."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    csv = d / f"study_{result.name}.csv"
    names = [result.param_name, "error"] + list(result.aux)
    data = np.column_stack([result.params, result.errors] + [result.aux[k] for k in result.aux]) \
        if result.params else np.empty((0, len(names)))
    np.savetxt(csv, data, delimiter=",", fmt=FMT, header=",".join(names), comments="")
    fit_path = d / f"study_{result.name}_fit.txt"
    fit = result.fit
    lines = []
    if fit is not None:
        lines += [f"slope {fit.slope:.17g}", f"intercept {fit.intercept:.17g}", f"r2 {fit.r2:.17g}"]
    else:
        lines.append("fit unavailable: fewer than two completed points")
    for p, msg in result.failures:
        lines.append(f"failed {p:g}: {msg}")
    fit_path.write_text("\n".join(lines) + "\n")
    return [csv, fit_path]


def write_atomic(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(path, manifest: dict):
    missing = [f for f in manifest.get("outputs", []) if not Path(f).exists()]
    if missing:
        raise FileNotFoundError(f"manifest lists missing outputs: {missing}")
    write_atomic(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
