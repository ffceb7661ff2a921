"""Single SSM neurons: recurrences, materialization, stability projection.

The neuron recurrence is

    x[t] = A[t] x[t-1] + B[t] u[t-1]        for t = 1 .. T-1
    y[t] = C[t] x[t]   + c_bias             for t = 0 .. T-1

with x[0] equal to a supplied initial state (zero by default). Each
matrix entry is a linear combination of basis functions with learnable
coefficients; with a single-function constant dictionary the recurrence
reduces exactly to the time-invariant case.

These per-neuron routines favor clarity over speed and serve as the
reference against which the vectorized network forward/backward passes
are checked. :func:`ti_forward` is an independent plain-loop
implementation so the equivalence tests do not share code paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisDictionary, evaluate_grid

__all__ = [
    "TimeVaryingMatrixParam",
    "SSMNeuron",
    "constant_param",
    "materialize",
    "materialize_diagonal",
    "project_rows_inplace",
    "stability_project",
    "tv_forward",
    "ti_forward",
]


@dataclass
class TimeVaryingMatrixParam:
    """Learnable coefficient tensor for one time-indexed matrix.

    ``coeffs`` has shape (rows, cols, K) for a dense matrix or (n, K)
    for a diagonal one (off-diagonal entries are not stored). K must
    match the dictionary size.
    """

    coeffs: np.ndarray
    dictionary: BasisDictionary
    diagonal: bool = False

    def __post_init__(self):
        self.coeffs = np.ascontiguousarray(self.coeffs, dtype=np.float64)
        want_ndim = 2 if self.diagonal else 3
        if self.coeffs.ndim != want_ndim:
            raise ValueError(
                f"coeffs must be {want_ndim}-d for diagonal={self.diagonal}, "
                f"got shape {self.coeffs.shape}"
            )
        if self.coeffs.shape[-1] != self.dictionary.size:
            raise ValueError(
                f"coefficient count {self.coeffs.shape[-1]} does not match "
                f"dictionary size {self.dictionary.size}"
            )

    @property
    def k(self) -> int:
        return self.coeffs.shape[-1]

    @property
    def rows(self) -> int:
        return self.coeffs.shape[0]

    @property
    def cols(self) -> int:
        return self.coeffs.shape[0] if self.diagonal else self.coeffs.shape[1]


def constant_param(matrix, diagonal: bool = False, horizon_t: int = 1) -> TimeVaryingMatrixParam:
    """Wrap a static matrix (or diagonal vector) as a K=1 constant expansion."""
    from .basis import BasisFunction, BasisKind

    matrix = np.asarray(matrix, dtype=np.float64)
    dictionary = BasisDictionary((BasisFunction(BasisKind.CONSTANT),), horizon_t=horizon_t)
    return TimeVaryingMatrixParam(matrix[..., None], dictionary, diagonal=diagonal)


def materialize(param: TimeVaryingMatrixParam, t: int) -> np.ndarray:
    """Expand coefficients into the explicit (rows, cols, t) trajectory.

    Entry (i, j, s) is the coefficient vector of element (i, j) dotted
    with the basis values at time s. Diagonal parameters come back
    embedded in a full matrix with zero off-diagonal entries.
    """
    phi = evaluate_grid(param.dictionary, t)
    if param.diagonal:
        diag = param.coeffs @ phi  # (n, t)
        n = param.rows
        out = np.zeros((n, n, t))
        idx = np.arange(n)
        out[idx, idx, :] = diag
        return out
    return np.einsum("rck,kt->rct", param.coeffs, phi)


def materialize_diagonal(param: TimeVaryingMatrixParam, t: int) -> np.ndarray:
    """Diagonal trajectory (n, t) of a diagonal parameter, without embedding."""
    if not param.diagonal:
        raise ValueError("materialize_diagonal requires a diagonal parameter")
    phi = evaluate_grid(param.dictionary, t)
    return param.coeffs @ phi


def project_rows_inplace(rows: np.ndarray, eps: float = 1e-4) -> bool:
    """Rescale, in place, any row whose absolute coefficient sum exceeds 1.

    ``rows`` is (m, K); each violating row is multiplied by 1/(sum + eps),
    which brings its absolute sum strictly below 1 while preserving the
    shape of the expansion. Rows already inside the budget are untouched.
    Returns True when at least one row was rescaled.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    sums = np.abs(rows).sum(axis=-1)
    mask = sums > 1.0
    if not mask.any():
        return False
    rows[mask] /= (sums[mask] + eps)[..., None]
    return True


def stability_project(param: TimeVaryingMatrixParam, eps: float = 1e-4) -> bool:
    """Enforce the per-row stability budget on a diagonal transition matrix.

    After the call every diagonal index i satisfies sum_k |a_i^(k)| < 1
    (rows that already satisfied the budget are bit-identical), which
    bounds the materialized |a_i(t)| below 1 for every t because all
    basis values have magnitude at most 1. Coefficients are overwritten
    in place; the returned flag says whether anything changed.
    """
    if not param.diagonal:
        raise ValueError("stability projection is defined for diagonal transition matrices only")
    return project_rows_inplace(param.coeffs, eps)


@dataclass
class SSMNeuron:
    """One state-space neuron with (optionally) time-varying dynamics."""

    a: TimeVaryingMatrixParam  # (n, K_A) diagonal, or (n, n, K_A) dense
    b: TimeVaryingMatrixParam  # (n, n_in, K_B)
    c: TimeVaryingMatrixParam  # (n_out, n, K_C)
    c_bias: np.ndarray  # (n_out,)

    def __post_init__(self):
        self.c_bias = np.asarray(self.c_bias, dtype=np.float64)
        n = self.a.rows
        if self.a.cols != n:
            raise ValueError("transition matrix must be square")
        if self.b.rows != n:
            raise ValueError(f"input matrix has {self.b.rows} rows, expected {n}")
        if self.c.cols != n:
            raise ValueError(f"output matrix has {self.c.cols} cols, expected {n}")
        if self.c_bias.shape != (self.c.rows,):
            raise ValueError(
                f"output bias shape {self.c_bias.shape} does not match n_out={self.c.rows}"
            )

    @property
    def n(self) -> int:
        return self.a.rows

    @property
    def n_in(self) -> int:
        return self.b.cols

    @property
    def n_out(self) -> int:
        return self.c.rows


def tv_forward(neuron: SSMNeuron, u, x0=None) -> tuple[np.ndarray, np.ndarray]:
    """Run the time-varying recurrence over one input sequence.

    ``u`` is (n_in, T). Returns (y, x) with shapes (n_out, T) and (n, T).
    The trailing input sample u[T-1] never enters the state because the
    recurrence reads u[t-1].
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2 or u.shape[0] != neuron.n_in:
        raise ValueError(f"input must be ({neuron.n_in}, T), got shape {u.shape}")
    t_len = u.shape[1]
    x0 = np.zeros(neuron.n) if x0 is None else np.asarray(x0, dtype=np.float64)
    if x0.shape != (neuron.n,):
        raise ValueError(f"x0 must have shape ({neuron.n},), got {x0.shape}")

    diag = neuron.a.diagonal
    amat = materialize_diagonal(neuron.a, t_len) if diag else materialize(neuron.a, t_len)
    # time-major contiguous slices keep per-step matmuls on the same BLAS
    # path as a static-matrix run, so the K=1 reduction is bit-exact
    a_t = amat.T.copy() if diag else np.ascontiguousarray(amat.transpose(2, 0, 1))
    b_t = np.ascontiguousarray(materialize(neuron.b, t_len).transpose(2, 0, 1))
    c_t = np.ascontiguousarray(materialize(neuron.c, t_len).transpose(2, 0, 1))

    x = np.zeros((neuron.n, t_len))
    x[:, 0] = x0
    for t in range(1, t_len):
        if diag:
            x[:, t] = a_t[t] * x[:, t - 1] + b_t[t] @ u[:, t - 1]
        else:
            x[:, t] = a_t[t] @ x[:, t - 1] + b_t[t] @ u[:, t - 1]
    y = np.empty((neuron.n_out, t_len))
    for t in range(t_len):
        y[:, t] = c_t[t] @ x[:, t] + neuron.c_bias
    return y, x


def ti_forward(a, b, c, c_bias, u, x0=None) -> tuple[np.ndarray, np.ndarray]:
    """Run the time-invariant recurrence with static matrices.

    Scalar or 1-d arguments are promoted to the matching 2-d shapes, so
    ``ti_forward(0.5, 1.0, 1.0, 0.0, u)`` runs a scalar system. Same
    indexing conventions and return shapes as :func:`tv_forward`.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"transition matrix must be square, got {a.shape}")
    b = np.asarray(b, dtype=np.float64).reshape(n, -1)
    c = np.asarray(c, dtype=np.float64).reshape(-1, n)
    n_out = c.shape[0]
    c_bias = np.broadcast_to(np.asarray(c_bias, dtype=np.float64), (n_out,))
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2 or u.shape[0] != b.shape[1]:
        raise ValueError(f"input must be ({b.shape[1]}, T), got shape {u.shape}")
    t_len = u.shape[1]
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=np.float64)

    x = np.zeros((n, t_len))
    x[:, 0] = x0
    for t in range(1, t_len):
        x[:, t] = a @ x[:, t - 1] + b @ u[:, t - 1]
    y = np.empty((n_out, t_len))
    for t in range(t_len):
        y[:, t] = c @ x[:, t] + c_bias
    return y, x
