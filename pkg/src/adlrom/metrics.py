"""Error metrics, log-log regression and the three convergence studies."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fe import VectorField, l2_inner
from .integrate import NewtonConfig, NewtonDiverged, Scheme, Trajectory, run_trajectory
from .pod import PodBasis, pod_project, truncation_diag
from .rom import DeconvMap, FilterMap

log = logging.getLogger(__name__)


def _check_r(basis: PodBasis, r: int):
    if not 1 <= r <= basis.R:
        raise ValueError(f"r={r} out of range 1..{basis.R}")


def _expanded_distance(u: VectorField, p: np.ndarray, d: np.ndarray, M: sp.spmatrix) -> float:
    """||u - sum d_j phi_j|| from ||u||^2 - ||p||^2 + ||p - d||^2, with p = (u, phi_j).

    Loses relative accuracy once the distance nears sqrt(eps) * ||u||.
    """
    sq = l2_inner(u, u, M) - p @ p + (p - d) @ (p - d)
    return float(np.sqrt(max(sq, 0.0)))


def _direct_distance(u: VectorField, basis: PodBasis, d: np.ndarray, M: sp.spmatrix) -> float:
    diff = u - basis.reconstruct(d)
    return float(np.sqrt(max(l2_inner(diff, diff, M), 0.0)))


def error_ad(basis: PodBasis, r: int, delta: float, N: int, u_final: VectorField,
             M: sp.spmatrix, direct: bool = True) -> float:
    """||u - D_N(F_delta P^r u)||, the approximate-deconvolution error of one field.

    By default the norm is taken of the FE difference vector; ``direct=False``
    uses the coefficient expansion instead, which is cheaper but cancels
    badly for very small errors.
    """
    _check_r(basis, r)
    p = pod_project(u_final, basis, r, M)
    d = DeconvMap(FilterMap(basis.S_full[:r, :r], delta), N).matrix @ p
    if direct:
        return _direct_distance(u_final, basis, d, M)
    return _expanded_distance(u_final, p, d, M)


def error_rom(basis: PodBasis, r: int, trajectory: Trajectory | np.ndarray, u_final: VectorField,
              M: sp.spmatrix, direct: bool = True) -> float:
    """L2 distance between ``u_final`` and the final ROM state."""
    a = trajectory.final if isinstance(trajectory, Trajectory) else np.asarray(trajectory)
    if a.ndim == 2:
        a = a[-1]
    _check_r(basis, len(a))
    if direct:
        return _direct_distance(u_final, basis, a, M)
    return _expanded_distance(u_final, pod_project(u_final, basis, len(a), M), a, M)


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    r2: float


def fit_loglog(x, y) -> LogLogFit:
    """Least-squares line through (ln x, ln y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    if len(x) < 2:
        raise ValueError("a fit needs at least two points")
    if np.any(x <= 0) or np.any(y <= 0) or not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("log-log fit needs finite positive values")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise ValueError("abscissae are all equal")
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 if ss_tot == 0 else 1.0 - np.sum(resid**2) / ss_tot
    return LogLogFit(float(slope), float(intercept), float(r2))


@dataclass
class StudyResult:
    """Rows of (parameter, error) plus optional auxiliary columns and the fit."""

    name: str
    param_name: str
    params: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    aux: dict = field(default_factory=dict)  # column name -> list aligned with params
    failures: list = field(default_factory=list)  # (param, message)

    def add(self, param: float, error: float, **aux):
        self.params.append(float(param))
        self.errors.append(float(error))
        for k, v in aux.items():
            self.aux.setdefault(k, []).append(float(v))

    @property
    def fit(self) -> LogLogFit | None:
        x = self.aux.get("lambda_tail_H1", self.params) if self.param_name == "r" else self.params
        if len(self.params) < 2:
            return None
        return fit_loglog(x, self.errors)


def ad_deltas(lo: float, hi: float, count: int, spacing: str = "log") -> np.ndarray:
    if spacing == "log":
        return np.geomspace(lo, hi, count)
    if spacing == "linear":
        return np.linspace(lo, hi, count)
    raise ValueError(f"unknown spacing {spacing!r}")


def study_ad(basis: PodBasis, u_final: VectorField, M: sp.spmatrix, r_list=(99, 100), N: int = 5,
             deltas=None) -> dict:
    """AD error against delta for each r; returns {r: StudyResult}."""
    deltas = ad_deltas(1e-2, 1e-1, 6) if deltas is None else np.asarray(deltas, dtype=float)
    out = {}
    for r in r_list:
        res = StudyResult(f"ad_r{r}", "delta")
        for d in deltas:
            res.add(d, error_ad(basis, r, d, N, u_final, M))
        out[r] = res
    return out


def study_delta(basis: PodBasis, ops, forcing, params, u_final: VectorField, M: sp.spmatrix,
                deltas, r: int = 99, N: int = 5, dt: float = 1e-3, T: float = 1.0,
                newton_cfg: NewtonConfig = NewtonConfig(), keep: dict | None = None) -> StudyResult:
    """ADL-ROM final-time error for each delta at fixed r.

    A run whose Newton solve fails is recorded in ``failures`` and skipped.
    ``keep``, if given, collects the trajectories by delta.
    """
    ops_r = ops.truncate(r) if ops.r != r else ops
    res = StudyResult("delta", "delta")
    for d in deltas:
        try:
            traj = run_trajectory(basis, ops_r, Scheme.adlrom(ops_r.S, d, N), params, dt, T,
                                  forcing, M, newton_cfg)
        except NewtonDiverged as exc:
            log.warning("delta=%g: %s", d, exc)
            res.failures.append((float(d), str(exc)))
            continue
        if keep is not None:
            keep[float(d)] = traj
        res.add(d, error_rom(basis, r, traj, u_final, M))
    return res


def study_r(basis: PodBasis, ops, forcing, params, u_final: VectorField, M: sp.spmatrix,
            r_list, delta: float = 6.25e-2, N: int = 5, dt: float = 1e-3, T: float = 1.0,
            newton_cfg: NewtonConfig = NewtonConfig(), keep: dict | None = None) -> StudyResult:
    """ADL-ROM final-time error for each r, regressed against the H1 tail."""
    res = StudyResult("r", "r")
    for r in r_list:
        _check_r(basis, r)
        ops_r = ops.truncate(r)
        diag = truncation_diag(basis, r)
        try:
            traj = run_trajectory(basis, ops_r, Scheme.adlrom(ops_r.S, delta, N), params, dt, T,
                                  forcing, M, newton_cfg)
        except NewtonDiverged as exc:
            log.warning("r=%d: %s", r, exc)
            res.failures.append((float(r), str(exc)))
            continue
        if keep is not None:
            keep[int(r)] = traj
        res.add(r, error_rom(basis, r, traj, u_final, M),
                lambda_tail_H1=diag.grad_lambda_tail_sum, S_norm=diag.S_r_norm)
    return res
