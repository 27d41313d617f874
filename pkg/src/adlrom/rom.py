"""Reduced operators: stiffness, skew-symmetric convection tensor, filter, van Cittert map."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .fe import BasisTables
from .pod import PodBasis


def assemble_rom_stiffness(basis: PodBasis, r: int) -> np.ndarray:
    if not 1 <= r <= basis.R:
        raise ValueError(f"r={r} out of range 1..{basis.R}")
    return basis.S_full[:r, :r].copy()


def stiffness_from_fe(basis: PodBasis, r: int, K: sp.spmatrix) -> np.ndarray:
    """Same matrix via the FE stiffness: X^T K X + Y^T K Y."""
    Pu, Pv = basis.modes_u[:r], basis.modes_v[:r]
    return Pu @ (K @ Pu.T) + Pv @ (K @ Pv.T)


@dataclass(frozen=True)
class ModeTables:
    """Mode values and gradients at all quadrature points, each (Q, R)."""

    weights: np.ndarray  # (Q,)
    u: np.ndarray
    v: np.ndarray
    u_x: np.ndarray
    u_y: np.ndarray
    v_x: np.ndarray
    v_y: np.ndarray

    @classmethod
    def build(cls, basis: PodBasis, tables: BasisTables, r: int | None = None) -> ModeTables:
        r = basis.R if r is None else r
        u, ux, uy = tables.evaluate(basis.modes_u[:r].T)
        v, vx, vy = tables.evaluate(basis.modes_v[:r].T)
        return cls(tables.weights.ravel(), u, v, ux, uy, vx, vy)


def convection_slice(mt: ModeTables, i: int) -> np.ndarray:
    """N[j, k] = ((phi_i . grad) phi_j, phi_k) for one transporting mode i."""
    a = mt.weights * mt.u[:, i]
    b = mt.weights * mt.v[:, i]
    Xu = a[:, None] * mt.u_x + b[:, None] * mt.u_y
    Xv = a[:, None] * mt.v_x + b[:, None] * mt.v_y
    return Xu.T @ mt.u + Xv.T @ mt.v


def assemble_trilinear(basis: PodBasis, r: int, tables: BasisTables,
                       threads: int = 1, mode_tables: ModeTables | None = None) -> np.ndarray:
    """T[i, j, k] = b*(phi_i, phi_j, phi_k), antisymmetric in (j, k) by construction.

    Slices over the transporting index are independent, so ``threads > 1``
    gives bit-identical results.
    """
    if not 1 <= r <= basis.R:
        raise ValueError(f"r={r} out of range 1..{basis.R}")
    mt = mode_tables or ModeTables.build(basis, tables, r)
    if mt.u.shape[1] < r:
        raise ValueError("mode tables hold fewer than r modes")
    if mt.u.shape[1] > r:
        mt = ModeTables(mt.weights, *(arr[:, :r] for arr in
                                      (mt.u, mt.v, mt.u_x, mt.u_y, mt.v_x, mt.v_y)))
    T = np.empty((r, r, r))

    def work(i):
        N = convection_slice(mt, i)
        T[i] = 0.5 * (N - N.T)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            list(ex.map(work, range(r)))
    else:
        for i in range(r):
            work(i)
    return T


@dataclass(frozen=True)
class RomOperators:
    r: int
    S: np.ndarray
    T: np.ndarray
    basis: PodBasis

    def __post_init__(self):
        r = self.r
        if self.S.shape != (r, r) or self.T.shape != (r, r, r):
            raise ValueError("operator shapes do not match r")

    def truncate(self, r: int) -> RomOperators:
        """Leading r-mode operators; POD modes are nested so this is a slice."""
        if not 1 <= r <= self.r:
            raise ValueError(f"r={r} out of range 1..{self.r}")
        return RomOperators(r, self.S[:r, :r].copy(), np.ascontiguousarray(self.T[:r, :r, :r]),
                            self.basis)


def build_operators(basis: PodBasis, tables: BasisTables, r: int | None = None,
                    threads: int = 1) -> RomOperators:
    r = basis.R if r is None else r
    return RomOperators(r, assemble_rom_stiffness(basis, r),
                        assemble_trilinear(basis, r, tables, threads=threads), basis)


class FilterMap:
    """ROM differential filter: a -> (I + delta^2 S)^{-1} a."""

    def __init__(self, S: np.ndarray, delta: float):
        if delta < 0 or not np.isfinite(delta):
            raise ValueError(f"filter radius must be finite and >= 0, got {delta}")
        self.delta = float(delta)
        self.S = np.asarray(S)
        r = len(self.S)
        try:
            self._chol = sla.cho_factor(np.eye(r) + self.delta**2 * self.S)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - SPD by construction
            raise RuntimeError("filter matrix is not positive definite") from exc

    @property
    def r(self) -> int:
        return len(self.S)

    def apply(self, a: np.ndarray) -> np.ndarray:
        return sla.cho_solve(self._chol, np.asarray(a, dtype=float))

    @cached_property
    def matrix(self) -> np.ndarray:
        F = self.apply(np.eye(self.r))
        return 0.5 * (F + F.T)


def filter_apply(fm: FilterMap, a: np.ndarray) -> np.ndarray:
    return fm.apply(a)


class DeconvMap:
    """van Cittert deconvolution composed with the filter: a -> D_N(F a)."""

    def __init__(self, filt: FilterMap, N: int):
        if int(N) != N or N < 0:
            raise ValueError(f"van Cittert order must be a nonnegative integer, got {N}")
        self.filter = filt
        self.N = int(N)

    @cached_property
    def matrix(self) -> np.ndarray:
        """A_N = sum_{n=0}^{N} (I - F)^n F."""
        F = self.filter.matrix
        G = np.eye(len(F)) - F
        term = F.copy()
        A = F.copy()
        for _ in range(self.N):
            term = G @ term
            A += term
        return A

    def apply(self, a: np.ndarray) -> np.ndarray:
        """Recurrence b0 = F a, b_{n+1} = F a + (I - F) b_n."""
        fa = self.filter.apply(a)
        b = fa
        for _ in range(self.N):
            b = fa + b - self.filter.apply(b)
        return b


def deconv_apply(dm: DeconvMap, a: np.ndarray) -> np.ndarray:
    return dm.apply(a)


@dataclass(frozen=True)
class FilterStabilityReport:
    max_l2_ratio: float
    max_h1_ratio: float
    n_samples: int

    @property
    def ok(self) -> bool:
        return self.max_l2_ratio <= 1 + 1e-12 and self.max_h1_ratio <= 1 + 1e-12


def filter_stability_check(fm: FilterMap, samples: np.ndarray) -> FilterStabilityReport:
    """Largest ||F a|| / ||a|| and |F a|_S / |a|_S over the sample rows."""
    S = fm.S
    l2, h1 = 0.0, 0.0
    samples = np.atleast_2d(samples)
    for a in samples:
        fa = fm.apply(a)
        na = np.linalg.norm(a)
        if na > 0:
            l2 = max(l2, np.linalg.norm(fa) / na)
        sa = a @ S @ a
        if sa > 0:
            h1 = max(h1, np.sqrt(max(fa @ S @ fa, 0.0) / sa))
    return FilterStabilityReport(l2, h1, len(samples))
