"""Input conditioning for the hashed attention kernels.

The hashing math assumes unit-length queries and keys. Two routes produce
them: plain row-wise l2 normalization (the practical default), and an exact
norm-bounding lift that preserves all pairwise dot products up to a known
scale by appending two auxiliary coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NormBoundError


def l2_rows(x: np.ndarray) -> np.ndarray:
    """Scale each nonzero row to unit l2 norm; zero rows stay zero."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    return x / safe


def norm_bounded_lift(
    q: np.ndarray, k: np.ndarray, tau_bound: float
) -> tuple[np.ndarray, np.ndarray]:
    """Lift queries and keys to unit-norm rows in d+2 dimensions.

    q'_i = [Q_i/sqrt(b), sqrt(1 - |Q_i|^2/b), 0]
    k'_j = [K_j/sqrt(b), 0, sqrt(1 - |K_j|^2/b)]

    with b = tau_bound, so q'_i . k'_j = (Q_i . K_j) / b exactly and every
    output row has unit norm. The bound must dominate every squared row norm.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    sq_q = np.sum(q * q, axis=1)
    sq_k = np.sum(k * k, axis=1)
    largest = max(sq_q.max(initial=0.0), sq_k.max(initial=0.0))
    if largest > tau_bound:
        raise NormBoundError(
            f"tau_bound={tau_bound} is below the largest squared row norm {largest}"
        )
    root = np.sqrt(tau_bound)

    def lift(x, sq, aux_col):
        n = x.shape[0]
        out = np.zeros((n, x.shape[1] + 2))
        out[:, : x.shape[1]] = x / root
        # clip guards roundoff when a squared norm sits exactly on the bound
        out[:, x.shape[1] + aux_col] = np.sqrt(np.clip(1.0 - sq / tau_bound, 0.0, None))
        return out

    return lift(q, sq_q, 0), lift(k, sq_k, 1)


@dataclass(frozen=True)
class NormReport:
    """What the conditioning step did, for experiment logs."""

    max_row_norm_before: float
    mode: str  # 'l2-rows' or 'norm-bounded'
    tau_bound: float | None = None


def condition_qk(
    q: np.ndarray, k: np.ndarray, mode: str = "l2-rows", tau_bound: float | None = None
) -> tuple[np.ndarray, np.ndarray, NormReport]:
    """Produce unit-norm queries/keys by the requested route.

    'l2-rows' rescales rows independently (changes pairwise similarities of
    non-unit inputs); 'norm-bounded' preserves every dot product up to the
    1/tau_bound factor. When tau_bound is omitted it defaults to the largest
    squared row norm, the tightest admissible bound.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    before = 0.0
    if q.size or k.size:
        before = max(
            float(np.linalg.norm(q, axis=1).max(initial=0.0)),
            float(np.linalg.norm(k, axis=1).max(initial=0.0)),
        )
    if mode == "l2-rows":
        return l2_rows(q), l2_rows(k), NormReport(before, mode)
    if mode == "norm-bounded":
        bound = float(tau_bound) if tau_bound is not None else max(before * before, 1.0)
        q2, k2 = norm_bounded_lift(q, k, bound)
        return q2, k2, NormReport(before, mode, bound)
    raise ValueError(f"unknown conditioning mode {mode!r}")
