"""Input triples and sampling configuration shared by the attention kernels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, NonFiniteError, UnitNormError

NORM_MODES = ("l2", "one-vector", "none")
GRAD_MODES = ("lower-bound", "exact-oracle")
PROJECTION_MODES = ("dense", "structured")

# Row-norm tolerance applied when an AttnInput is flagged unit-normalized.
UNIT_FLAG_TOL = 1e-9
# Looser tolerance the attention kernels apply to their own unit-norm precondition.
UNIT_OP_TOL = 1e-6


def _as_matrix(a: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-D, got ndim={a.ndim}")
    if not np.isfinite(a).all():
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return a


def check_unit_rows(x: np.ndarray, tol: float, name: str) -> None:
    if x.shape[0] == 0:
        return
    norms = np.linalg.norm(x, axis=1)
    worst = float(np.abs(norms - 1.0).max())
    if worst > tol:
        raise UnitNormError(f"{name} rows must be unit length; worst deviation {worst:.3e}")


@dataclass(frozen=True)
class AttnInput:
    """One attention head's (queries, keys, values) triple.

    All three matrices share shape n x d. When ``unit_normalized`` is set the
    constructor enforces unit-length query/key rows to within 1e-9.
    Arrays are treated as immutable after construction.
    """

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    unit_normalized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "q", _as_matrix(self.q, "q"))
        object.__setattr__(self, "k", _as_matrix(self.k, "k"))
        object.__setattr__(self, "v", _as_matrix(self.v, "v"))
        if not (self.q.shape == self.k.shape == self.v.shape):
            raise DimensionMismatchError(
                f"q, k, v must share shape; got {self.q.shape}, {self.k.shape}, {self.v.shape}"
            )
        if self.unit_normalized:
            check_unit_rows(self.q, UNIT_FLAG_TOL, "q")
            check_unit_rows(self.k, UNIT_FLAG_TOL, "k")

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def d(self) -> int:
        return self.q.shape[1]


@dataclass(frozen=True)
class AttnConfig:
    """Sampling knobs for the hashed attention operations.

    tau: bits per hash code (bucket count 2^tau).
    m: number of independent hash functions averaged per estimate.
    norm: output normalization ('l2', 'one-vector', or 'none').
    grad: backward estimator family ('lower-bound' sampled, or 'exact-oracle'
        which routes to the quadratic-cost closed form).
    projection: 'dense' Gaussian hyperplanes or 'structured' fast rotations.
    seed: root seed; all hash functions derive child streams from it.
    """

    tau: int
    m: int
    norm: str = "l2"
    grad: str = "lower-bound"
    projection: str = "dense"
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.tau <= 30:
            raise ValueError(f"tau must be in [1, 30], got {self.tau}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.norm not in NORM_MODES:
            raise ValueError(f"norm must be one of {NORM_MODES}, got {self.norm!r}")
        if self.grad not in GRAD_MODES:
            raise ValueError(f"grad must be one of {GRAD_MODES}, got {self.grad!r}")
        if self.projection not in PROJECTION_MODES:
            raise ValueError(
                f"projection must be one of {PROJECTION_MODES}, got {self.projection!r}"
            )
