"""Exact quadratic-cost reference attention computations.

Everything here materializes (blocks of) the full n x n weight matrix and is
meant for verification and desk-scale experiments: softmax attention, the
expected collision-weighted attention the sampled kernels estimate, and the
closed-form gradients the sampled backward estimators are tested against.
"""

from __future__ import annotations

import numpy as np

from .errors import SingularityError
from .lsh import collision_prob, collision_prob_derivative
from .normalize import l2_rows
from .types import UNIT_OP_TOL, AttnInput, check_unit_rows

_ROW_CHUNK = 1024  # bounds transient memory to row_chunk * n scalars


def softmax_weights(q: np.ndarray, k: np.ndarray, scale: float) -> np.ndarray:
    """Row-stochastic attention weight matrix softmax(q k^T * scale)."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    out = np.empty((q.shape[0], k.shape[0]))
    for s in range(0, q.shape[0], _ROW_CHUNK):
        logits = q[s : s + _ROW_CHUNK] @ k.T
        logits *= scale
        logits -= logits.max(axis=1, keepdims=True)
        np.exp(logits, out=logits)
        logits /= logits.sum(axis=1, keepdims=True)
        out[s : s + _ROW_CHUNK] = logits
    return out


def softmax_attention(inp: AttnInput, scale: float) -> np.ndarray:
    """Standard softmax attention output, computed row-stably in chunks."""
    out = np.empty_like(inp.v)
    for s in range(0, inp.n, _ROW_CHUNK):
        logits = inp.q[s : s + _ROW_CHUNK] @ inp.k.T
        logits *= scale
        logits -= logits.max(axis=1, keepdims=True)
        np.exp(logits, out=logits)
        logits /= logits.sum(axis=1, keepdims=True)
        out[s : s + _ROW_CHUNK] = logits @ inp.v
    return out


def collision_matrix(q: np.ndarray, k: np.ndarray, tau: int) -> np.ndarray:
    """Expected hash-collision matrix: entry (i, j) = collision_prob(q_i . k_j, tau)."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    out = np.empty((q.shape[0], k.shape[0]))
    for s in range(0, q.shape[0], _ROW_CHUNK):
        out[s : s + _ROW_CHUNK] = collision_prob(q[s : s + _ROW_CHUNK] @ k.T, tau)
    return out


def yoso_e(inp: AttnInput, tau: int) -> np.ndarray:
    """Expectation of hash-sampled attention: collision matrix applied to V.

    This is the infinite-hash limit of the sampled forward pass. Queries and
    keys must be unit rows (the collision probability is an angular quantity).
    """
    check_unit_rows(inp.q, UNIT_OP_TOL, "q")
    check_unit_rows(inp.k, UNIT_OP_TOL, "k")
    out = np.empty_like(inp.v)
    for s in range(0, inp.n, _ROW_CHUNK):
        out[s : s + _ROW_CHUNK] = (
            collision_prob(inp.q[s : s + _ROW_CHUNK] @ inp.k.T, tau) @ inp.v
        )
    return out


def n_yoso_e(inp: AttnInput, tau: int) -> np.ndarray:
    """l2-normalized expected attention; all-zero output rows are returned as zero."""
    return l2_rows(yoso_e(inp, tau))


def yoso_e_grad(
    inp: AttnInput, grad_y: np.ndarray, tau: int, mode: str = "exact"
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed-form gradients of L = <grad_y, yoso_e(Q, K, V)> w.r.t. Q, K, V.

    mode='exact' uses the true collision-probability derivative and requires
    every pairwise similarity to stay 1e-6 away from +-1 (the derivative
    diverges there). mode='lower-bound' substitutes the finite-everywhere
    (tau/2) * collision_prob factor used by the sampled backward pass.

    Rows are treated as free vectors: this is the gradient of the
    unconstrained map, with no unit-sphere projection applied.
    """
    grad_y = np.asarray(grad_y, dtype=np.float64)
    if grad_y.shape != inp.v.shape:
        raise ValueError(f"grad_y shape {grad_y.shape} != value shape {inp.v.shape}")
    sims = inp.q @ inp.k.T
    probs = collision_prob(sims, tau)
    grad_v = probs.T @ grad_y
    if mode == "exact":
        worst = float(np.abs(sims).max(initial=0.0))
        if worst >= 1.0 - 1e-6:
            raise SingularityError(
                f"exact gradient needs |q_i . k_j| < 1 - 1e-6; got {worst}"
            )
        factor = collision_prob_derivative(sims, tau)
    elif mode == "lower-bound":
        factor = 0.5 * tau * probs
    else:
        raise ValueError(f"mode must be 'exact' or 'lower-bound', got {mode!r}")
    weighted = (grad_y @ inp.v.T) * factor
    grad_q = weighted @ inp.k
    grad_k = weighted.T @ inp.q
    return grad_q, grad_k, grad_v
