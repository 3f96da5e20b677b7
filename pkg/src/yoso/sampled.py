"""Hash-sampled attention: linear-cost forward pass and backward estimators.

Instead of materializing the n x n weight matrix, one hash function realizes
every query/key collision indicator at once: key rows are scatter-added into
a 2^tau-bucket table of value sums, and each query reads back the bucket its
own code selects. Averaging over m independent hash functions lowers the
estimator variance. Auxiliary memory is a function of (m, tau, payload
width) only, never of how keys distribute across buckets.

Accumulation-order contract: scatter-adds run in ascending key order, hash
functions accumulate in ascending order, and per-dimension backward passes
accumulate in ascending column order. This makes every operation bit-exactly
reproducible and comparable against a naive indicator-sum loop fed the same
hash codes, which is how the tests separate sampling error from
implementation error.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError, HashCodeRangeError
from .lsh import HashFamily, hash_codes
from .normalize import l2_rows
from .rng import RngState
from .types import UNIT_OP_TOL, AttnConfig, AttnInput, check_unit_rows

# Per-operation stream labels so forward and backward draw fresh, independent
# hash functions by default; pass codes explicitly to share them instead.
STREAM_FORWARD = 1
STREAM_GRAD_Q = 2
STREAM_GRAD_K = 3

# Denominator floor for 'one-vector' normalization: a query whose buckets
# collected no keys produces a zero row rather than NaN.
ONE_VECTOR_EPS = 1e-12


def bucket_count(tau: int) -> int:
    return 1 << tau


def aux_table_scalars(m: int, tau: int, width: int, reuse: bool = True) -> int:
    """Analytic accounting of peak table memory in scalars.

    With buffer reuse a single 2^tau x width table serves all m hash
    functions; without it all m tables are live at once. Neither depends on
    the sequence length or on bucket occupancy.
    """
    per_table = bucket_count(tau) * width
    return per_table if reuse else m * per_table


def _check_codes(codes: np.ndarray, n: int, tau: int, name: str) -> np.ndarray:
    codes = np.asarray(codes)
    if codes.ndim != 2 or codes.shape[0] != n:
        raise DimensionMismatchError(f"{name} must be (n={n}, m), got {codes.shape}")
    if codes.size and (codes.min() < 0 or codes.max() >= bucket_count(tau)):
        raise HashCodeRangeError(f"{name} entries must lie in [0, 2^{tau})")
    return codes


def build_table(
    codes_h: np.ndarray, payload: np.ndarray, tau: int, out: np.ndarray | None = None
) -> np.ndarray:
    """Scatter-add payload rows into a 2^tau x w bucket table.

    ``codes_h`` holds one hash function's codes, aligned row-for-row with
    ``payload``. Accumulation runs in ascending row order. ``out`` lets
    callers reuse one buffer across hash functions; it is zeroed first.
    """
    codes_h = np.asarray(codes_h)
    payload = np.asarray(payload, dtype=np.float64)
    if codes_h.ndim != 1 or payload.ndim != 2 or codes_h.shape[0] != payload.shape[0]:
        raise DimensionMismatchError(
            f"codes {codes_h.shape} and payload {payload.shape} rows must align"
        )
    buckets = bucket_count(tau)
    if codes_h.size and (codes_h.min() < 0 or codes_h.max() >= buckets):
        raise HashCodeRangeError(f"hash codes must lie in [0, 2^{tau})")
    if out is None:
        out = np.zeros((buckets, payload.shape[1]))
    else:
        if out.shape != (buckets, payload.shape[1]):
            raise DimensionMismatchError(
                f"table buffer {out.shape} != ({buckets}, {payload.shape[1]})"
            )
        out[:] = 0.0
    np.add.at(out, codes_h, payload)
    return out


def sample_codes(
    inp: AttnInput, cfg: AttnConfig, stream: int = STREAM_FORWARD
) -> tuple[np.ndarray, np.ndarray]:
    """Hash queries and keys with the same m functions; returns (codes_q, codes_k)."""
    fam = HashFamily(
        tau=cfg.tau,
        m=cfg.m,
        d=inp.d,
        mode=cfg.projection,
        rng=RngState(cfg.seed).child(stream),
    )
    stacked = hash_codes(np.vstack([inp.q, inp.k]), fam)
    return stacked[: inp.n], stacked[inp.n :]


def yoso_sample_forward(
    inp: AttnInput,
    cfg: AttnConfig,
    codes: tuple[np.ndarray, np.ndarray] | None = None,
    reuse_tables: bool = True,
) -> np.ndarray:
    """Hash-sampled attention output, averaged over cfg.m hash functions.

    Queries and keys must be unit rows. Fresh hash functions are drawn from
    cfg.seed unless ``codes`` provides precomputed (codes_q, codes_k).
    Normalization follows cfg.norm: 'l2' rescales output rows to unit norm,
    'one-vector' divides by the same-hash estimate of the total collision
    weight (a ones column rides along in the payload), 'none' returns the
    raw average.
    """
    check_unit_rows(inp.q, UNIT_OP_TOL, "q")
    check_unit_rows(inp.k, UNIT_OP_TOL, "k")
    if codes is None:
        codes_q, codes_k = sample_codes(inp, cfg, STREAM_FORWARD)
    else:
        codes_q, codes_k = codes
    codes_q = _check_codes(codes_q, inp.n, cfg.tau, "codes_q")
    codes_k = _check_codes(codes_k, inp.n, cfg.tau, "codes_k")
    if codes_q.shape[1] != cfg.m or codes_k.shape[1] != cfg.m:
        raise DimensionMismatchError("codes must provide one column per hash function")

    payload = inp.v
    if cfg.norm == "one-vector":
        payload = np.hstack([inp.v, np.ones((inp.n, 1))])
    width = payload.shape[1]

    acc = np.zeros((inp.n, width))
    if reuse_tables:
        table = np.zeros((bucket_count(cfg.tau), width))
        for h in range(cfg.m):
            build_table(codes_k[:, h], payload, cfg.tau, out=table)
            acc += table[codes_q[:, h]]
    else:
        tables = [build_table(codes_k[:, h], payload, cfg.tau) for h in range(cfg.m)]
        for h in range(cfg.m):
            acc += tables[h][codes_q[:, h]]
    acc /= cfg.m

    if cfg.norm == "none":
        return acc
    if cfg.norm == "l2":
        return l2_rows(acc)
    sums = acc[:, inp.d]
    out = np.zeros((inp.n, inp.d))
    alive = sums >= ONE_VECTOR_EPS
    out[alive] = acc[alive, : inp.d] / sums[alive, None]
    return out


def yoso_sample_grad_v(
    codes_q: np.ndarray, codes_k: np.ndarray, grad_y: np.ndarray, cfg: AttnConfig
) -> np.ndarray:
    """Sampled gradient w.r.t. V: the forward kernel with query/key roles swapped.

    Scatter grad_y rows by query codes, gather by key codes, average over m.
    Codes are taken as given so a caller may reuse the forward pass's hash
    functions or draw fresh ones.
    """
    grad_y = np.asarray(grad_y, dtype=np.float64)
    n = grad_y.shape[0]
    codes_q = _check_codes(codes_q, n, cfg.tau, "codes_q")
    codes_k = _check_codes(codes_k, n, cfg.tau, "codes_k")
    acc = np.zeros_like(grad_y)
    table = np.zeros((bucket_count(cfg.tau), grad_y.shape[1]))
    for h in range(cfg.m):
        build_table(codes_q[:, h], grad_y, cfg.tau, out=table)
        acc += table[codes_k[:, h]]
    acc /= cfg.m
    return acc


def _grad_wrt_queries(
    codes_q: np.ndarray,
    codes_k: np.ndarray,
    coeffs: np.ndarray,
    pass_scalars: np.ndarray,
    key_rows: np.ndarray,
    cfg: AttnConfig,
    pass_chunk: int,
) -> np.ndarray:
    """Shared core of the sampled Q/K gradients.

    For each output dimension l (one bucket-table pass), the payload row for
    key j is (tau/2) * pass_scalars[j, l] * key_rows[j]; the gathered sums
    are combined with coeffs[:, l]. Passes may be chunked ``pass_chunk`` at a
    time, trading table width for fewer scatter rounds; the default of one
    pass at a time keeps table memory at 2^tau * d scalars.
    """
    n, d = coeffs.shape
    scale = 0.5 * cfg.tau
    acc = np.zeros((n, d))
    table = np.zeros((bucket_count(cfg.tau), pass_chunk * d))
    for h in range(cfg.m):
        ck = codes_k[:, h]
        cq = codes_q[:, h]
        for start in range(0, d, pass_chunk):
            stop = min(start + pass_chunk, d)
            c = stop - start
            block = (scale * pass_scalars[:, start:stop, None] * key_rows[:, None, :])
            buf = table[:, : c * d]
            build_table(ck, block.reshape(n, c * d), cfg.tau, out=buf)
            gathered = buf[cq].reshape(n, c, d)
            for i in range(c):
                acc += coeffs[:, start + i : start + i + 1] * gathered[:, i, :]
    acc /= cfg.m
    return acc


def yoso_sample_grad_q(
    inp: AttnInput,
    grad_y: np.ndarray,
    cfg: AttnConfig,
    codes: tuple[np.ndarray, np.ndarray] | None = None,
    pass_chunk: int = 1,
) -> np.ndarray:
    """Sampled lower-bound gradient w.r.t. Q via d bucket-table passes.

    Only cfg.grad='lower-bound' has a linear-cost sampler; the exact
    derivative is available at quadratic cost through the oracle module.
    """
    if cfg.grad != "lower-bound":
        raise NotImplementedError(
            "sampled backward is only available for grad='lower-bound'; "
            "use oracle.yoso_e_grad(mode='exact') for the exact derivative"
        )
    grad_y = np.asarray(grad_y, dtype=np.float64)
    if grad_y.shape != inp.v.shape:
        raise DimensionMismatchError(f"grad_y shape {grad_y.shape} != {inp.v.shape}")
    if codes is None:
        codes_q, codes_k = sample_codes(inp, cfg, STREAM_GRAD_Q)
    else:
        codes_q, codes_k = codes
    codes_q = _check_codes(codes_q, inp.n, cfg.tau, "codes_q")
    codes_k = _check_codes(codes_k, inp.n, cfg.tau, "codes_k")
    return _grad_wrt_queries(codes_q, codes_k, grad_y, inp.v, inp.k, cfg, pass_chunk)


def yoso_sample_grad_k(
    inp: AttnInput,
    grad_y: np.ndarray,
    cfg: AttnConfig,
    codes: tuple[np.ndarray, np.ndarray] | None = None,
    pass_chunk: int = 1,
) -> np.ndarray:
    """Sampled lower-bound gradient w.r.t. K: the Q routine with roles swapped.

    Keys take the query position, values and grad_y trade places, and query
    rows are the scattered payload.
    """
    if cfg.grad != "lower-bound":
        raise NotImplementedError(
            "sampled backward is only available for grad='lower-bound'; "
            "use oracle.yoso_e_grad(mode='exact') for the exact derivative"
        )
    grad_y = np.asarray(grad_y, dtype=np.float64)
    if grad_y.shape != inp.v.shape:
        raise DimensionMismatchError(f"grad_y shape {grad_y.shape} != {inp.v.shape}")
    if codes is None:
        codes_q, codes_k = sample_codes(inp, cfg, STREAM_GRAD_K)
    else:
        codes_q, codes_k = codes
    codes_q = _check_codes(codes_q, inp.n, cfg.tau, "codes_q")
    codes_k = _check_codes(codes_k, inp.n, cfg.tau, "codes_k")
    return _grad_wrt_queries(codes_k, codes_q, inp.v, grad_y, inp.q, cfg, pass_chunk)
