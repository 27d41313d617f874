"""Projection of the manufactured forcing onto POD modes.

The forcing carries a layer of width ~1/steepness along x = t and y = t, far
below the mesh size, so triangles are integrated with composite rules whose
refinement is graded by their distance to those two lines.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .fe import ScalarSpaceP2, QuadratureRule, collapsed_gauss_rule, composite_rule, degree5_rule, p2_shape
from .manufactured import exact_forcing
from .pod import PodBasis


@dataclass(frozen=True)
class GradedRule:
    """(distance threshold in mesh sizes, rule) pairs, finest first."""

    levels: tuple

    @classmethod
    def default(cls) -> GradedRule:
        cg = collapsed_gauss_rule
        return cls((
            (0.0, composite_rule(cg(6), 6)),
            (1.0, composite_rule(cg(5), 3)),
            (4.0, composite_rule(degree5_rule(), 2)),
            (np.inf, degree5_rule()),
        ))

    @classmethod
    def uniform(cls, rule: QuadratureRule) -> GradedRule:
        return cls(((np.inf, rule),))


def _layer_distance(space: ScalarSpaceP2, t: float) -> np.ndarray:
    p = space.mesh.vertices[space.mesh.triangles]
    lo, hi = p.min(axis=1), p.max(axis=1)
    d = np.maximum(0.0, np.maximum(lo - t, t - hi))  # (E, 2) distance per axis
    return d.min(axis=1)


def forcing_load(space: ScalarSpaceP2, t: float, nu: float = 1e-3, steepness: float = 500.0,
                 graded: GradedRule | None = None, fn: Callable | None = None):
    """FE load vectors (f1, N_i), (f2, N_i) and ||f||^2 at time ``t``.

    ``fn(x, y) -> (f1, f2)`` overrides the manufactured forcing.
    """
    graded = graded or GradedRule.default()
    if fn is None:
        fn = lambda x, y: exact_forcing(x, y, t, nu, steepness)  # noqa: E731
    d = _layer_distance(space, t) / space.mesh.h
    verts = space.mesh.vertices[space.mesh.triangles]
    bu = np.zeros(space.n_dofs)
    bv = np.zeros(space.n_dofs)
    norm_sq = 0.0
    taken = np.zeros(len(d), dtype=bool)
    for thr, rule in graded.levels:
        sel = ~taken & (d <= thr)
        taken |= sel
        idx = np.flatnonzero(sel)
        if idx.size == 0:
            continue
        N = p2_shape(rule.points)
        pts = np.einsum("qa,eax->eqx", rule.points, verts[idx])
        w = space.areas[idx, None] * rule.weights[None, :]
        f1, f2 = fn(pts[..., 0], pts[..., 1])
        f1 = np.broadcast_to(f1, w.shape)
        f2 = np.broadcast_to(f2, w.shape)
        dofs = space.elem_dofs[idx].ravel()
        bu += np.bincount(dofs, ((w * f1) @ N).ravel(), minlength=space.n_dofs)
        bv += np.bincount(dofs, ((w * f2) @ N).ravel(), minlength=space.n_dofs)
        norm_sq += float(np.sum(w * (f1 * f1 + f2 * f2)))
    return bu, bv, norm_sq


def rom_forcing(basis: PodBasis, r: int, t: float, nu: float = 1e-3, steepness: float = 500.0,
                graded: GradedRule | None = None, fn: Callable | None = None) -> np.ndarray:
    """F_i(t) = (f(., t), phi_i) for i < r."""
    if not 1 <= r <= basis.R:
        raise ValueError(f"r={r} out of range 1..{basis.R}")
    bu, bv, _ = forcing_load(basis.space, t, nu, steepness, graded, fn)
    return basis.modes_u[:r] @ bu + basis.modes_v[:r] @ bv


@dataclass(frozen=True)
class ForcingHistory:
    """Projected forcing on all R modes and ||f|| at a list of times."""

    times: np.ndarray
    F: np.ndarray  # (n_times, R)
    norm_sq: np.ndarray  # (n_times,)

    def at(self, k: int, r: int) -> np.ndarray:
        return self.F[k, :r]


def forcing_history(basis: PodBasis, times: Sequence[float], nu: float = 1e-3,
                    steepness: float = 500.0, graded: GradedRule | None = None,
                    threads: int = 1) -> ForcingHistory:
    """Projected forcing at every time; rows are independent, so threads do not change results."""
    times = np.asarray(times, dtype=float)
    graded = graded or GradedRule.default()
    F = np.empty((len(times), basis.R))
    nsq = np.empty(len(times))

    def work(k):
        bu, bv, nsq[k] = forcing_load(basis.space, times[k], nu, steepness, graded)
        F[k] = basis.modes_u @ bu + basis.modes_v @ bv

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            list(ex.map(work, range(len(times))))
    else:
        for k in range(len(times)):
            work(k)
    return ForcingHistory(times, F, nsq)
