"""Snapshots, method-of-snapshots POD, and truncation diagnostics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fe import ScalarSpaceP2, VectorField, interpolate
from .manufactured import BenchmarkParams, velocity_at


class EigenNotConverged(RuntimeError):
    def __init__(self, sweeps: int, off_norm: float):
        super().__init__(f"Jacobi eigensolver did not converge in {sweeps} sweeps "
                         f"(off-diagonal norm {off_norm:.3e})")
        self.sweeps = sweeps
        self.off_norm = off_norm


@dataclass(frozen=True)
class SnapshotSet:
    space: ScalarSpaceP2
    times: np.ndarray  # (K+1,)
    comp_u: np.ndarray  # (K+1, n_dofs)
    comp_v: np.ndarray  # (K+1, n_dofs)

    def __post_init__(self):
        if self.comp_u.shape != self.comp_v.shape or len(self.comp_u) != len(self.times):
            raise ValueError("snapshot arrays have inconsistent shapes")
        if self.comp_u.shape[1] != self.space.n_dofs:
            raise ValueError("snapshot length does not match the space")

    def __len__(self) -> int:
        return len(self.times)

    def field(self, k: int) -> VectorField:
        return VectorField(self.space, self.comp_u[k], self.comp_v[k])


def collect_snapshots(params: BenchmarkParams, space: ScalarSpaceP2, K: int,
                      dt_snap: float) -> SnapshotSet:
    if K < 0:
        raise ValueError("K must be nonnegative")
    if K * dt_snap > params.T_final * (1 + 1e-12):
        raise ValueError(f"snapshot horizon {K * dt_snap} exceeds T_final={params.T_final}")
    times = np.arange(K + 1) * dt_snap
    fields = [interpolate(velocity_at(t, params.steepness), space) for t in times]
    return SnapshotSet(space, times,
                       np.array([f.comp_u for f in fields]),
                       np.array([f.comp_v for f in fields]))


def correlation_matrix(snaps: SnapshotSet, M: sp.spmatrix) -> np.ndarray:
    """C[k, l] = (u_k, u_l) / (K+1)."""
    U, V = snaps.comp_u, snaps.comp_v
    C = (U @ (M @ U.T) + V @ (M @ V.T)) / len(snaps)
    return 0.5 * (C + C.T)


def sym_eig(A: np.ndarray, tol: float = 1e-15, max_sweeps: int = 50):
    """Cyclic Jacobi eigensolver for a dense symmetric matrix.

    Returns eigenvalues in descending order and the matching orthonormal
    eigenvectors as columns. Raises :class:`EigenNotConverged` if the
    off-diagonal Frobenius norm does not fall below ``tol * ||A||_F``.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    scale = np.linalg.norm(A)
    if np.abs(A - A.T).max(initial=0.0) > 1e-12 * max(scale, 1e-300):
        raise ValueError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    if n == 1 or scale == 0.0:
        return _sorted(np.diag(A).copy(), V)

    def off_norm():
        return np.linalg.norm(A - np.diag(np.diag(A)))

    for sweep in range(max_sweeps):
        off = off_norm()
        if off <= tol * scale:
            return _sorted(np.diag(A).copy(), V)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                app, aqq = A[p, p], A[q, q]
                # skip rotations that cannot change the diagonal in floating point
                if sweep > 3 and abs(apq) < 1e-18 * (abs(app) + abs(aqq)):
                    A[p, q] = A[q, p] = 0.0
                    continue
                diff = aqq - app
                if abs(diff) > 1e150 * abs(apq):
                    # theta would overflow; t ~ 1/(2 theta)
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = A[:, p].copy()
                aq = A[:, q]
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                A[p, :] = A[:, p]
                A[q, :] = A[:, q]
                A[p, p] = app - t * apq
                A[q, q] = aqq + t * apq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q]
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    off = off_norm()
    if off <= tol * scale:
        return _sorted(np.diag(A).copy(), V)
    raise EigenNotConverged(max_sweeps, off)


def _sorted(w, V):
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


@dataclass(frozen=True)
class PodBasis:
    space: ScalarSpaceP2
    modes_u: np.ndarray  # (R, n_dofs)
    modes_v: np.ndarray  # (R, n_dofs)
    eigenvalues: np.ndarray  # (R,), descending
    S_full: np.ndarray  # (R, R) gradient Gram matrix
    n_snapshots: int
    spectrum: np.ndarray | None = None  # all correlation eigenvalues, including those cut off

    def __post_init__(self):
        R = len(self.eigenvalues)
        if self.modes_u.shape != (R, self.space.n_dofs) or self.modes_v.shape != self.modes_u.shape:
            raise ValueError("mode arrays do not match the rank and the space")
        if self.S_full.shape != (R, R):
            raise ValueError("gradient Gram matrix does not match the rank")
        if self.spectrum is None:
            object.__setattr__(self, "spectrum", np.asarray(self.eigenvalues, dtype=float).copy())

    @property
    def R(self) -> int:
        return len(self.eigenvalues)

    @property
    def grad_sq(self) -> np.ndarray:
        return np.diag(self.S_full).copy()

    def mode(self, j: int) -> VectorField:
        """Mode ``j`` (zero-based)."""
        return VectorField(self.space, self.modes_u[j].copy(), self.modes_v[j].copy())

    def reconstruct(self, a: np.ndarray) -> VectorField:
        r = len(a)
        return VectorField(self.space, a @ self.modes_u[:r], a @ self.modes_v[:r])

    def gram(self, M: sp.spmatrix) -> np.ndarray:
        Pu, Pv = self.modes_u, self.modes_v
        return Pu @ (M @ Pu.T) + Pv @ (M @ Pv.T)


def _m_orthonormalize(Pu, Pv, M, passes=2):
    """Modified Gram-Schmidt in the mass inner product, rows in place."""
    MPu = np.empty_like(Pu)
    MPv = np.empty_like(Pv)
    for j in range(len(Pu)):
        for _ in range(passes):
            for i in range(j):
                c = Pu[j] @ MPu[i] + Pv[j] @ MPv[i]
                Pu[j] -= c * Pu[i]
                Pv[j] -= c * Pv[i]
        MPu[j] = M @ Pu[j]
        MPv[j] = M @ Pv[j]
        nrm = np.sqrt(Pu[j] @ MPu[j] + Pv[j] @ MPv[j])
        Pu[j] /= nrm
        Pv[j] /= nrm
        MPu[j] /= nrm
        MPv[j] /= nrm


def build_basis(snaps: SnapshotSet, eig, M: sp.spmatrix, K: sp.spmatrix,
                rank_cutoff: float = 1e-10) -> PodBasis:
    """Form POD modes from correlation eigenpairs and re-orthonormalize them.

    ``eig`` is ``(eigenvalues, eigenvectors)`` of the correlation matrix. The
    rank R counts eigenvalues above ``rank_cutoff * lambda_1``.
    """
    lam, vec = eig
    lam = np.asarray(lam, dtype=float)
    if lam.size == 0 or lam[0] <= 0:
        raise ValueError("correlation matrix has no positive eigenvalue")
    R = int(np.count_nonzero(lam > rank_cutoff * lam[0]))
    if R == 0:
        raise ValueError("POD rank is zero")
    spectrum = lam.copy()
    lam, vec = lam[:R], np.asarray(vec)[:, :R]
    scale = 1.0 / np.sqrt(len(snaps) * lam)
    Pu = (vec.T @ snaps.comp_u) * scale[:, None]
    Pv = (vec.T @ snaps.comp_v) * scale[:, None]
    Pu = np.ascontiguousarray(Pu)
    Pv = np.ascontiguousarray(Pv)
    _m_orthonormalize(Pu, Pv, M)
    S = Pu @ (K @ Pu.T) + Pv @ (K @ Pv.T)
    S = 0.5 * (S + S.T)
    return PodBasis(snaps.space, Pu, Pv, lam, S, len(snaps), spectrum)


def pod_project(u: VectorField, basis: PodBasis, r: int, M: sp.spmatrix) -> np.ndarray:
    """Coefficients a_j = (u, phi_j), j < r."""
    if not 1 <= r <= basis.R:
        raise ValueError(f"r={r} out of range 1..{basis.R}")
    return basis.modes_u[:r] @ (M @ u.comp_u) + basis.modes_v[:r] @ (M @ u.comp_v)


def project_snapshots(snaps: SnapshotSet, basis: PodBasis, r: int, M: sp.spmatrix) -> np.ndarray:
    """Projection coefficients of every snapshot, shape (K+1, r)."""
    return (snaps.comp_u @ (M @ basis.modes_u[:r].T)
            + snaps.comp_v @ (M @ basis.modes_v[:r].T))


@dataclass(frozen=True)
class TruncationDiag:
    """Tails of the POD spectrum beyond mode r.

    ``lambda_tail`` and ``grad_lambda_tail`` use the averaged correlation
    matrix. ``lambda_tail`` sums the whole discarded spectrum, including
    eigenvalues below the rank cutoff, so it equals the mean squared
    projection error of the snapshots; the gradient tail only runs over
    modes that were actually formed. The ``*_sum`` variants multiply by the snapshot count, i.e. they
    are the tails one gets from the un-averaged snapshot Gram matrix.
    """

    r: int
    lambda_tail: float
    grad_lambda_tail: float
    S_r_norm: float
    n_snapshots: int

    @property
    def lambda_tail_sum(self) -> float:
        return self.n_snapshots * self.lambda_tail

    @property
    def grad_lambda_tail_sum(self) -> float:
        return self.n_snapshots * self.grad_lambda_tail


def truncation_diag(basis: PodBasis, r: int) -> TruncationDiag:
    if not 1 <= r <= basis.R:
        raise ValueError(f"r={r} out of range 1..{basis.R}")
    lam = basis.eigenvalues
    g = basis.grad_sq
    S_norm = sym_eig(basis.S_full[:r, :r])[0][0]
    return TruncationDiag(r, float(np.clip(basis.spectrum[r:], 0.0, None).sum()),
                          float((g[r:] * lam[r:]).sum()),
                          float(S_norm), basis.n_snapshots)
