"""Lazy construction of every stage of the study, with an on-disk cache.

Snapshots and the POD basis are cached as CSV under ``basis_<key>/``; the
convection tensor and forcing history, which are large and cheap to verify,
go into ``.npz`` files next to them. Keys hash the configuration fields each
stage depends on, so a changed setting never picks up stale data.
"""
from __future__ import annotations

import logging
import time
from functools import cached_property
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, StudyConfig
from .fe import assemble_mass, assemble_stiffness, build_mesh, eval_at_quadpoints, p2_space
from .forcing import ForcingHistory, forcing_history
from .integrate import NewtonConfig
from .manufactured import BenchmarkParams
from .pod import PodBasis, build_basis, collect_snapshots, correlation_matrix, sym_eig
from .rom import RomOperators, assemble_trilinear

log = logging.getLogger(__name__)


def compute_basis(snaps, M, K, rank_cutoff: float = 1e-10) -> PodBasis:
    C = correlation_matrix(snaps, M)
    return build_basis(snaps, sym_eig(C), M, K, rank_cutoff)


class Workspace:
    """All artifacts for one configuration, built on first use."""

    def __init__(self, config: StudyConfig, cache_dir=None, threads: int = 1):
        self.config = config
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self.threads = max(1, int(threads))
        self.timings: dict[str, float] = {}

    def _timed(self, name, fn):
        t0 = time.perf_counter()
        out = fn()
        self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0
        return out

    @property
    def params(self) -> BenchmarkParams:
        c = self.config
        return BenchmarkParams(nu=c.nu, steepness=c.steepness, T_final=max(c.t_snap_end, c.T))

    @property
    def newton(self) -> NewtonConfig:
        c = self.config
        return NewtonConfig(c.newton_rel_tol, c.newton_abs_tol, c.newton_max_iters)

    @cached_property
    def space(self):
        return p2_space(build_mesh(self.config.n_side))

    @cached_property
    def tables(self):
        return eval_at_quadpoints(self.space)

    @cached_property
    def mass(self):
        return assemble_mass(self.space, tables=self.tables)

    @cached_property
    def stiffness(self):
        return assemble_stiffness(self.space, tables=self.tables)

    def _stage_dir(self, kind: str, key: str) -> Path | None:
        if self.cache_dir is None:
            return None
        return self.cache_dir / f"{kind}_{key}"

    @cached_property
    def snapshots(self):
        c = self.config
        d = self._stage_dir("basis", c.basis_key())
        if d is not None and (d / "snapshots_u.csv").exists():
            log.info("loading snapshots from %s", d)
            return io.load_snapshots(self.space, d)
        snaps = self._timed("snapshots", lambda: collect_snapshots(
            self.params, self.space, c.n_snapshots - 1, c.dt_snap))
        if d is not None:
            io.save_snapshots(snaps, d)
        return snaps

    @cached_property
    def basis(self) -> PodBasis:
        c = self.config
        d = self._stage_dir("basis", c.basis_key())
        if d is not None and (d / "eigenvalues.csv").exists():
            log.info("loading POD basis from %s", d)
            return io.load_basis(self.space, d)
        basis = self._timed("pod", lambda: compute_basis(self.snapshots, self.mass, self.stiffness,
                                                          c.rank_cutoff))
        log.info("POD rank R=%d", basis.R)
        if d is not None:
            io.save_basis(basis, d)
        return basis

    def check_r(self, r: int):
        if not 1 <= r <= self.basis.R:
            raise ConfigError(f"r={r} exceeds the POD rank R={self.basis.R}")

    def operators(self, r: int | None = None) -> RomOperators:
        """Operators on the leading r modes; the tensor is built once for the largest r asked."""
        r = self.basis.R if r is None else r
        self.check_r(r)
        full = getattr(self, "_ops", None)
        if full is None or full.r < r:
            full = self._load_or_build_tensor(r)
            self._ops = full
        return full if full.r == r else full.truncate(r)

    def _load_or_build_tensor(self, r: int) -> RomOperators:
        basis = self.basis
        d = self._stage_dir("basis", self.config.basis_key())
        path = d / f"tensor_r{r}.npz" if d is not None else None
        if path is not None and path.exists():
            T = np.load(path)["T"]
        else:
            T = self._timed("tensor", lambda: assemble_trilinear(basis, r, self.tables,
                                                                  threads=self.threads))
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                np.savez(path, T=T)
        return RomOperators(r, basis.S_full[:r, :r].copy(), T, basis)

    @cached_property
    def forcing(self) -> ForcingHistory:
        c = self.config
        K = int(round(c.T / c.dt_rom))
        times = np.arange(K + 1) * c.dt_rom
        d = self._stage_dir("forcing", c.forcing_key())
        path = d / "forcing.npz" if d is not None else None
        if path is not None and path.exists():
            z = np.load(path)
            if z["F"].shape == (K + 1, self.basis.R):
                return ForcingHistory(z["times"], z["F"], z["norm_sq"])
        fh = self._timed("forcing", lambda: forcing_history(
            self.basis, times, c.nu, c.steepness, threads=self.threads))
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            np.savez(path, times=fh.times, F=fh.F, norm_sq=fh.norm_sq)
        return fh

    @property
    def u_final(self):
        """Comparison field: the last snapshot."""
        return self.snapshots.field(len(self.snapshots) - 1)
