"""Hyperplane locality-sensitive hashing and its collision-probability math.

A hash function maps a row vector to a tau-bit code: bit b is the sign of the
projection onto a random direction. Two unit vectors at angle theta receive
the same code with probability (1 - theta/pi)^tau, which is the quantity the
attention estimators are built on.

Two projection modes are provided:

* ``dense``      -- tau i.i.d. Gaussian hyperplanes per hash function.
* ``structured`` -- a fast pseudo-random rotation (three rounds of random
  sign-diagonal followed by a scaled Walsh-Hadamard transform), reading the
  code bits off the leading coordinates. Cost per vector is O(tau + D log D)
  instead of O(tau d), at the price of slightly correlated bits; statistical
  agreement with dense hashing is validated in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, SingularityError
from .rng import RngState

TAU_MAX = 30  # codes must index a 2^tau bucket table


@dataclass(frozen=True)
class HashFamily:
    """Seeded description of ``m`` independent tau-bit hash functions.

    Hyperplanes are never stored; hash function ``h`` regenerates its
    parameters from the child stream ``rng.child(h)``, so codes are
    reproducible per function and the family costs O(1) memory.
    """

    tau: int
    m: int
    d: int
    mode: str = "dense"
    rng: RngState = RngState(0)

    def __post_init__(self):
        if not 1 <= self.tau <= TAU_MAX:
            raise ValueError(f"tau must be in [1, {TAU_MAX}], got {self.tau}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.mode not in ("dense", "structured"):
            raise ValueError(f"mode must be 'dense' or 'structured', got {self.mode!r}")

    @property
    def transform_len(self) -> int:
        """Padded length used by the structured rotation: smallest power of two >= d."""
        return 1 << (self.d - 1).bit_length() if self.d > 1 else 1


def _code_weights(tau: int) -> np.ndarray:
    # bit b of a code is the least-significant-first weight 2^b
    return np.left_shift(np.int64(1), np.arange(tau, dtype=np.int64))


def hash_dense(x: np.ndarray, fam: HashFamily) -> np.ndarray:
    """Codes from sign-of-projection onto i.i.d. Gaussian hyperplanes.

    Returns an (n, m) int64 array with entries in [0, 2^tau). Bit b of the
    code from hash function h is 1 iff the projection of the row onto
    hyperplane (h, b) is >= 0.
    """
    if fam.mode != "dense":
        raise ValueError(f"family mode is {fam.mode!r}, expected 'dense'")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != fam.d:
        raise DimensionMismatchError(f"expected (n, {fam.d}) input, got {x.shape}")
    n = x.shape[0]
    codes = np.empty((n, fam.m), dtype=np.int64)
    weights = _code_weights(fam.tau)
    for h in range(fam.m):
        planes = fam.rng.child(h).generator().standard_normal((fam.tau, fam.d))
        bits = (x @ planes.T) >= 0.0
        codes[:, h] = bits.astype(np.int64) @ weights
    return codes


def fwht(x: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform of each row; length must be a power of two."""
    x = np.asarray(x, dtype=np.float64)
    n, size = x.shape
    if size & (size - 1):
        raise ValueError(f"row length must be a power of two, got {size}")
    if n == 0 or size == 1:
        return x.copy()
    y = x
    h = 1
    while h < size:
        y = y.reshape(n, -1, 2, h)
        y = np.stack(
            (y[:, :, 0, :] + y[:, :, 1, :], y[:, :, 0, :] - y[:, :, 1, :]), axis=2
        ).reshape(n, size)
        h *= 2
    return y


def hash_structured(x: np.ndarray, fam: HashFamily) -> np.ndarray:
    """Codes from a fast pseudo-random rotation instead of dense projections.

    Rows are zero-padded to the power-of-two length D, then put through three
    rounds of (random +-1 diagonal, Walsh-Hadamard transform scaled by
    1/sqrt(D)); the signs of the leading coordinates become the code bits.
    When tau > D, additional independent rotations are drawn from the same
    per-function stream until tau bits are available.
    """
    if fam.mode != "structured":
        raise ValueError(f"family mode is {fam.mode!r}, expected 'structured'")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != fam.d:
        raise DimensionMismatchError(f"expected (n, {fam.d}) input, got {x.shape}")
    n = x.shape[0]
    size = fam.transform_len
    padded = np.zeros((n, size))
    padded[:, : fam.d] = x
    scale = 1.0 / math.sqrt(size)
    codes = np.empty((n, fam.m), dtype=np.int64)
    weights = _code_weights(fam.tau)
    for h in range(fam.m):
        gen = fam.rng.child(h).generator()
        bits = np.empty((n, fam.tau), dtype=bool)
        taken = 0
        while taken < fam.tau:
            y = padded
            for _ in range(3):
                signs = gen.integers(0, 2, size=size) * 2 - 1
                y = fwht(y * signs) * scale
            take = min(fam.tau - taken, size)
            bits[:, taken : taken + take] = y[:, :take] >= 0.0
            taken += take
        codes[:, h] = bits.astype(np.int64) @ weights
    return codes


def hash_codes(x: np.ndarray, fam: HashFamily) -> np.ndarray:
    """Dispatch to the family's projection mode."""
    return hash_dense(x, fam) if fam.mode == "dense" else hash_structured(x, fam)


def collision_prob(s, tau: int):
    """Probability that two unit vectors with cosine similarity ``s`` share a tau-bit code.

    ``s`` is clamped to [-1, 1] first: dot products of unit vectors can
    exceed 1 by roundoff and arccos must not see that.
    """
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")
    arr = np.clip(np.asarray(s, dtype=np.float64), -1.0, 1.0)
    out = (1.0 - np.arccos(arr) / np.pi) ** tau
    return out if out.ndim else float(out)


def collision_prob_derivative(s, tau: int):
    """Derivative of the collision probability w.r.t. similarity; requires |s| < 1.

    Diverges at s = +-1, hence the strict-domain precondition; callers that
    cannot guarantee a guard should use :func:`collision_prob_derivative_lb`.
    """
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")
    arr = np.asarray(s, dtype=np.float64)
    if np.any(np.abs(arr) >= 1.0):
        raise SingularityError("derivative undefined at |s| >= 1")
    out = tau * (1.0 - np.arccos(arr) / np.pi) ** (tau - 1) / (np.pi * np.sqrt(1.0 - arr * arr))
    return out if out.ndim else float(out)


def collision_prob_derivative_lb(s, tau: int):
    """Finite-everywhere lower bound (tau/2) * collision_prob(s, tau) of the derivative."""
    out = 0.5 * tau * np.asarray(collision_prob(s, tau))
    return out if out.ndim else float(out)
