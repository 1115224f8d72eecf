"""Cable-tension distribution over the null space of the wrench map.

Stacked load-frame tensions ``mu`` (3n) produce the load-frame wrench
``W = P mu``.  Any ``mu = pinv(P) W + N lam`` delivers the same wrench; the
3n-6 null-space coordinates ``lam`` are free for secondary objectives.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, TensionFloorError
from .geom import hat

DEFAULT_MU_MIN = 0.1
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class AllocationModel:
    n: int
    rho: np.ndarray        # (n, 3) attachment points, load frame
    cable_len: np.ndarray  # (n,)
    P: np.ndarray          # (6, 3n)
    P_pinv: np.ndarray     # (3n, 6)
    N: np.ndarray          # (3n, 3n-6), orthonormal columns
    mu_min: float = DEFAULT_MU_MIN

    @property
    def null_dim(self) -> int:
        return self.N.shape[1]

    @property
    def input_dim(self) -> int:
        return 6 + self.null_dim


def distribution_matrix(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.float64)
    n = rho.shape[0]
    P = np.zeros((6, 3 * n))
    for k in range(n):
        P[:3, 3 * k:3 * k + 3] = np.eye(3)
        P[3:, 3 * k:3 * k + 3] = hat(rho[k])
    return P


def build_allocation(rho, cable_len, mu_min: float = DEFAULT_MU_MIN) -> AllocationModel:
    rho = np.atleast_2d(np.asarray(rho, dtype=np.float64))
    cable_len = np.asarray(cable_len, dtype=np.float64).reshape(-1)
    n = rho.shape[0]
    if n < 3:
        raise GeometryError(f"need at least 3 robots, got {n}")
    if rho.shape != (n, 3):
        raise GeometryError(f"attachment points must be (n, 3), got {rho.shape}")
    if cable_len.shape != (n,):
        raise GeometryError(f"expected {n} cable lengths, got {cable_len.shape[0]}")
    if np.any(cable_len <= 0.0):
        raise GeometryError("cable lengths must be positive")
    if not mu_min > 0.0:
        raise GeometryError("tension floor must be positive")

    P = distribution_matrix(rho)
    U, s, Vt = np.linalg.svd(P)
    rank = int(np.sum(s > RANK_RTOL * s[0]))
    if rank < 6:
        raise GeometryError(
            f"distribution matrix has rank {rank} < 6: attachment points are "
            "collinear (no moment authority about their common line)"
        )
    P_pinv = Vt[:6].T @ np.diag(1.0 / s) @ U.T
    N = Vt[6:].T.copy()
    for a in (P, P_pinv, N, rho, cable_len):
        a.setflags(write=False)
    return AllocationModel(n, rho, cable_len, P, P_pinv, N, float(mu_min))


def distribute(wrench_load, lam, model: AllocationModel) -> np.ndarray:
    """Per-cable load-frame tensions, shape (n, 3)."""
    w = np.asarray(wrench_load, dtype=np.float64).reshape(6)
    lam = np.asarray(lam, dtype=np.float64).reshape(-1)
    if lam.shape[0] != model.null_dim:
        raise ValueError(f"null-space vector must have {model.null_dim} entries")
    return (model.P_pinv @ w + model.N @ lam).reshape(model.n, 3)


def load_frame_wrench(F_inertial, M_body, R_load) -> np.ndarray:
    """``W^L = [R^T F; M]``."""
    return np.concatenate((np.asarray(R_load).T @ F_inertial, M_body))


def robot_pos_load_frame(mu_k, rho_k, l_k: float, mu_min: float = DEFAULT_MU_MIN) -> np.ndarray:
    """Robot position in the load frame implied by a cable tension."""
    mu_k = np.asarray(mu_k, dtype=np.float64)
    nrm = np.linalg.norm(mu_k)
    if nrm < mu_min:
        raise TensionFloorError(
            f"tension {nrm:.3g} N below floor {mu_min:.3g} N; cable direction undefined"
        )
    return np.asarray(rho_k, dtype=np.float64) + l_k * mu_k / nrm


def min_norm_check(wrench_load, model: AllocationModel) -> float:
    """Norm of the minimum-norm tension set delivering ``wrench_load``."""
    return float(np.linalg.norm(model.P_pinv @ np.asarray(wrench_load, dtype=np.float64)))


def regular_polygon(n: int, radius: float, z: float = 0.0, phase: float = 0.0) -> np.ndarray:
    """Attachment points evenly spaced on a circle in the load frame."""
    ang = phase + 2.0 * np.pi * np.arange(n) / n
    return np.column_stack((radius * np.cos(ang), radius * np.sin(ang), np.full(n, z)))
