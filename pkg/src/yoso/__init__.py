"""Linear-cost self-attention estimated by hash-collision sampling.

The package pairs every linear-cost estimator with an exact quadratic-cost
oracle so the approximation can be verified end to end:

* :mod:`yoso.lsh`       -- hyperplane hashing and collision-probability math.
* :mod:`yoso.sampled`   -- bucket-table forward pass and backward estimators.
* :mod:`yoso.oracle`    -- exact softmax / expected-collision attention and gradients.
* :mod:`yoso.normalize` -- unit-norm input conditioning.
* :mod:`yoso.matio`     -- binary matrix files and CSV export.
* :mod:`yoso.harness`   -- experiments behind the ``yoso`` command line tool.
"""

from .errors import (
    DimensionMismatchError,
    HashCodeRangeError,
    MalformedHeaderError,
    MatrixIOError,
    NonFiniteError,
    NormBoundError,
    PayloadSizeError,
    SingularityError,
    UnitNormError,
)
from .harness import multi_head
from .lsh import (
    HashFamily,
    collision_prob,
    collision_prob_derivative,
    collision_prob_derivative_lb,
    fwht,
    hash_codes,
    hash_dense,
    hash_structured,
)
from .matio import mat_read, mat_write, write_csv
from .normalize import NormReport, condition_qk, l2_rows, norm_bounded_lift
from .oracle import (
    collision_matrix,
    n_yoso_e,
    softmax_attention,
    softmax_weights,
    yoso_e,
    yoso_e_grad,
)
from .rng import RngState, gaussian_matrix
from .sampled import (
    aux_table_scalars,
    build_table,
    sample_codes,
    yoso_sample_forward,
    yoso_sample_grad_k,
    yoso_sample_grad_q,
    yoso_sample_grad_v,
)
from .types import AttnConfig, AttnInput

__version__ = "0.1.0"

__all__ = [
    "AttnConfig",
    "AttnInput",
    "DimensionMismatchError",
    "HashCodeRangeError",
    "HashFamily",
    "MalformedHeaderError",
    "MatrixIOError",
    "NonFiniteError",
    "NormBoundError",
    "NormReport",
    "PayloadSizeError",
    "RngState",
    "SingularityError",
    "UnitNormError",
    "aux_table_scalars",
    "build_table",
    "collision_matrix",
    "collision_prob",
    "collision_prob_derivative",
    "collision_prob_derivative_lb",
    "condition_qk",
    "fwht",
    "gaussian_matrix",
    "hash_codes",
    "hash_dense",
    "hash_structured",
    "l2_rows",
    "mat_read",
    "mat_write",
    "multi_head",
    "n_yoso_e",
    "norm_bounded_lift",
    "sample_codes",
    "softmax_attention",
    "softmax_weights",
    "write_csv",
    "yoso_e",
    "yoso_e_grad",
    "yoso_sample_forward",
    "yoso_sample_grad_k",
    "yoso_sample_grad_q",
    "yoso_sample_grad_v",
]
