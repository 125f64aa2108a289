"""Structured linear operators with adjoints derived by expression rewriting.

An operator is an immutable expression tree (dense/sparse leaf, 1-d
convolution, identity, zero, scaling, sum, composition, vertical stack,
or a lazy adjoint marker).  Application is always matrix-free: a
convolution is evaluated by direct or FFT convolution, never through a
materialized Toeplitz matrix, and stacks/compositions recurse into their
children.  The adjoint of an expression is another expression obtained
by structural rules, so adjoint-of-adjoint returns the original tree and
forward/adjoint share one evaluation core.

``materialize_dense`` exists as a test oracle only and is guarded by an
entry cap.
"""

from __future__ import annotations

import numpy as np
import scipy.fft
import scipy.sparse


class LinOpError(ValueError):
    """Base class for operator construction/application errors."""


class DimensionMismatch(LinOpError):
    """Vector length does not match the operator's shape."""


class MaterializeCapExceeded(LinOpError):
    """Refusing to materialize an operator above the entry cap."""


# direct convolution below this length, FFT above
FFT_CROSSOVER = 512

DEFAULT_MATERIALIZE_CAP = 4_000_000


def conv_full(kernel: np.ndarray, x: np.ndarray, method: str = "auto") -> np.ndarray:
    """Full 1-d convolution of ``x`` with ``kernel`` (length k+n-1)."""
    if method == "auto":
        method = "fft" if max(len(kernel), len(x)) > FFT_CROSSOVER else "direct"
    if method == "direct":
        return np.convolve(kernel, x)
    out_len = len(kernel) + len(x) - 1
    nfft = scipy.fft.next_fast_len(out_len)
    y = np.fft.irfft(np.fft.rfft(kernel, nfft) * np.fft.rfft(x, nfft), nfft)
    return y[:out_len]


def corr_valid(kernel: np.ndarray, y: np.ndarray, method: str = "auto") -> np.ndarray:
    """Valid-mode correlation: out[j] = sum_i kernel[i] * y[j+i].

    This is the adjoint of full convolution with ``kernel``.
    """
    if method == "auto":
        method = "fft" if max(len(kernel), len(y)) > FFT_CROSSOVER else "direct"
    if method == "direct":
        return np.correlate(y, kernel, mode="valid")
    k = len(kernel)
    full = conv_full(kernel[::-1], y, method="fft")
    return full[k - 1:len(y)]


# -- expression tree -------------------------------------------------------


class LinOpExpr:
    """Base class; subclasses are immutable by convention."""

    rows: int
    cols: int

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)


class DenseMatrix(LinOpExpr):
    def __init__(self, values) -> None:
        a = np.asarray(values, dtype=np.float64)
        if a.ndim != 2:
            raise LinOpError(f"dense matrix must be 2-d, got shape {a.shape}")
        self.values = a
        self.rows, self.cols = a.shape


class SparseMatrix(LinOpExpr):
    """Compressed-column storage, backed by scipy.sparse.csc_matrix."""

    def __init__(self, matrix=None, *, col_pointers=None, row_indices=None,
                 values=None, m=None, n=None) -> None:
        if matrix is not None:
            csc = scipy.sparse.csc_matrix(matrix, dtype=np.float64)
        else:
            csc = scipy.sparse.csc_matrix(
                (np.asarray(values, dtype=np.float64),
                 np.asarray(row_indices), np.asarray(col_pointers)),
                shape=(m, n))
        try:
            csc.check_format(full_check=True)
        except Exception as exc:  # noqa: BLE001 - scipy raises bare ValueError
            raise LinOpError(f"invalid compressed-column data: {exc}") from exc
        self.matrix = csc
        self.rows, self.cols = csc.shape


class Conv1D(LinOpExpr):
    """Full convolution with a fixed kernel; maps R^n to R^(k+n-1)."""

    def __init__(self, kernel, n: int) -> None:
        k = np.asarray(kernel, dtype=np.float64)
        if k.ndim != 1 or len(k) == 0:
            raise LinOpError("convolution kernel must be a nonempty vector")
        if n < 1:
            raise LinOpError("convolution input length must be positive")
        self.kernel = k
        self.n = int(n)
        self.rows = len(k) + self.n - 1
        self.cols = self.n


class Identity(LinOpExpr):
    def __init__(self, n: int) -> None:
        if n < 0:
            raise LinOpError("identity dimension must be nonnegative")
        self.rows = self.cols = int(n)


class ZeroOp(LinOpExpr):
    def __init__(self, m: int, n: int) -> None:
        if m < 0 or n < 0:
            raise LinOpError("zero operator dimensions must be nonnegative")
        self.rows, self.cols = int(m), int(n)


class Scale(LinOpExpr):
    def __init__(self, alpha: float, child: LinOpExpr) -> None:
        self.alpha = float(alpha)
        self.child = child
        self.rows, self.cols = child.rows, child.cols


class Sum(LinOpExpr):
    def __init__(self, left: LinOpExpr, right: LinOpExpr) -> None:
        if left.shape != right.shape:
            raise DimensionMismatch(
                f"sum of operators with shapes {left.shape} and {right.shape}")
        self.left, self.right = left, right
        self.rows, self.cols = left.rows, left.cols


class Compose(LinOpExpr):
    def __init__(self, left: LinOpExpr, right: LinOpExpr) -> None:
        if left.cols != right.rows:
            raise DimensionMismatch(
                f"compose {left.shape} with {right.shape}: inner dimensions differ")
        self.left, self.right = left, right
        self.rows, self.cols = left.rows, right.cols


class VStack(LinOpExpr):
    def __init__(self, children) -> None:
        children = tuple(children)
        if not children:
            raise LinOpError("vstack of zero operators")
        cols = children[0].cols
        for c in children:
            if c.cols != cols:
                raise DimensionMismatch(
                    f"vstack children must share column count, got {cols} and {c.cols}")
        self.children = children
        self.rows = sum(c.rows for c in children)
        self.cols = cols


class AdjointOf(LinOpExpr):
    """Lazy adjoint of a child expression (used where no rewritten form exists)."""

    def __init__(self, child: LinOpExpr) -> None:
        self.child = child
        self.rows, self.cols = child.cols, child.rows


def derive_adjoint(expr: LinOpExpr) -> LinOpExpr:
    """Adjoint expression by structural transformation."""
    if isinstance(expr, AdjointOf):
        return expr.child
    if isinstance(expr, DenseMatrix):
        return DenseMatrix(expr.values.T)
    if isinstance(expr, SparseMatrix):
        return SparseMatrix(expr.matrix.T.tocsc())
    if isinstance(expr, Identity):
        return expr
    if isinstance(expr, ZeroOp):
        return ZeroOp(expr.cols, expr.rows)
    if isinstance(expr, Scale):
        return Scale(expr.alpha, derive_adjoint(expr.child))
    if isinstance(expr, Sum):
        return Sum(derive_adjoint(expr.left), derive_adjoint(expr.right))
    if isinstance(expr, Compose):
        return Compose(derive_adjoint(expr.right), derive_adjoint(expr.left))
    if isinstance(expr, (Conv1D, VStack)):
        return AdjointOf(expr)
    raise LinOpError(f"unknown expression type {type(expr).__name__}")


def _forward(expr: LinOpExpr, x: np.ndarray) -> np.ndarray:
    if isinstance(expr, DenseMatrix):
        return expr.values @ x
    if isinstance(expr, Conv1D):
        return conv_full(expr.kernel, x)
    if isinstance(expr, Identity):
        return x
    if isinstance(expr, Scale):
        return expr.alpha * _forward(expr.child, x)
    if isinstance(expr, Sum):
        return _forward(expr.left, x) + _forward(expr.right, x)
    if isinstance(expr, Compose):
        return _forward(expr.left, _forward(expr.right, x))
    if isinstance(expr, VStack):
        return np.concatenate([_forward(c, x) for c in expr.children])
    if isinstance(expr, AdjointOf):
        return _adjoint(expr.child, x)
    if isinstance(expr, SparseMatrix):
        return expr.matrix @ x
    if isinstance(expr, ZeroOp):
        return np.zeros(expr.rows)
    raise LinOpError(f"unknown expression type {type(expr).__name__}")


def _adjoint(expr: LinOpExpr, y: np.ndarray) -> np.ndarray:
    if isinstance(expr, DenseMatrix):
        return expr.values.T @ y
    if isinstance(expr, Conv1D):
        return corr_valid(expr.kernel, y)
    if isinstance(expr, Identity):
        return y
    if isinstance(expr, Scale):
        return expr.alpha * _adjoint(expr.child, y)
    if isinstance(expr, Sum):
        return _adjoint(expr.left, y) + _adjoint(expr.right, y)
    if isinstance(expr, Compose):
        return _adjoint(expr.right, _adjoint(expr.left, y))
    if isinstance(expr, VStack):
        out = np.zeros(expr.cols)
        offset = 0
        for c in expr.children:
            out += _adjoint(c, y[offset:offset + c.rows])
            offset += c.rows
        return out
    if isinstance(expr, AdjointOf):
        return _forward(expr.child, y)
    if isinstance(expr, SparseMatrix):
        return expr.matrix.T @ y
    if isinstance(expr, ZeroOp):
        return np.zeros(expr.cols)
    raise LinOpError(f"unknown expression type {type(expr).__name__}")


# -- operator handle -------------------------------------------------------


class Operator:
    """Handle pairing an expression with its lazily derived adjoint.

    Supports ``A + B``, ``alpha * A``, ``A @ B`` (composition),
    ``A @ x`` (application to a vector), and ``A.T``.
    """

    __slots__ = ("expr", "_adjoint")

    def __init__(self, expr: LinOpExpr) -> None:
        self.expr = expr
        self._adjoint: "Operator | None" = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.expr.shape

    @property
    def rows(self) -> int:
        return self.expr.rows

    @property
    def cols(self) -> int:
        return self.expr.cols

    @property
    def T(self) -> "Operator":
        if self._adjoint is None:
            adj = Operator(derive_adjoint(self.expr))
            adj._adjoint = self
            self._adjoint = adj
        return self._adjoint

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.cols,):
            raise DimensionMismatch(
                f"operator is {self.rows}x{self.cols}, input has shape {x.shape}")
        return _forward(self.expr, x)

    def adjoint_apply(self, y: np.ndarray) -> np.ndarray:
        return self.T.forward(y)

    def __add__(self, other: "Operator") -> "Operator":
        return Operator(Sum(self.expr, other.expr))

    def __rmul__(self, alpha: float) -> "Operator":
        return Operator(Scale(alpha, self.expr))

    def __matmul__(self, other):
        if isinstance(other, Operator):
            return Operator(Compose(self.expr, other.expr))
        return self.forward(other)

    def __repr__(self) -> str:
        return f"Operator({type(self.expr).__name__}, {self.rows}x{self.cols})"


def _expr_of(op) -> LinOpExpr:
    return op.expr if isinstance(op, Operator) else op


def forward(op, x: np.ndarray) -> np.ndarray:
    op = op if isinstance(op, Operator) else Operator(op)
    return op.forward(x)

def adjoint_apply(op, y: np.ndarray) -> np.ndarray:
    op = op if isinstance(op, Operator) else Operator(op)
    return op.adjoint_apply(y)


# constructors

def dense(values) -> Operator:
    return Operator(DenseMatrix(values))

def sparse_csc(matrix=None, **kwargs) -> Operator:
    return Operator(SparseMatrix(matrix, **kwargs))

def conv1d(kernel, n: int) -> Operator:
    return Operator(Conv1D(kernel, n))

def identity(n: int) -> Operator:
    return Operator(Identity(n))

def zero(m: int, n: int) -> Operator:
    return Operator(ZeroOp(m, n))

def scale(alpha: float, op) -> Operator:
    return Operator(Scale(alpha, _expr_of(op)))

def vstack(ops) -> Operator:
    return Operator(VStack([_expr_of(o) for o in ops]))

def hstack(ops) -> Operator:
    """Horizontal stack, expressed as adjoint(vstack(adjoints))."""
    return Operator(AdjointOf(VStack([derive_adjoint(_expr_of(o)) for o in ops])))


# -- oracles and size accounting -------------------------------------------


def materialize_dense(op, cap: int = DEFAULT_MATERIALIZE_CAP) -> np.ndarray:
    """Dense matrix whose column j is the operator applied to e_j.

    Test oracle only; refuses to materialize above ``cap`` entries.
    """
    op = op if isinstance(op, Operator) else Operator(op)
    m, n = op.shape
    if m * n > cap:
        raise MaterializeCapExceeded(
            f"{m}x{n} = {m * n} entries exceeds cap {cap}")
    out = np.zeros((m, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        out[:, j] = op.forward(e)
        e[j] = 0.0
    return out


def nnz_estimate(op) -> int:
    """Nonzeros the equivalent materialized matrix would have.

    Counting rules: dense blocks count rows*cols regardless of values;
    sparse blocks count stored entries; a convolution counts
    (nonzero kernel entries) * n, the Toeplitz column count; Sum and
    Compose use overlap-free upper bounds capped at rows*cols (Compose
    assumes random-sparsity fill nnz(L)*nnz(R)/inner).
    """
    e = _expr_of(op)
    if isinstance(e, DenseMatrix):
        return e.rows * e.cols
    if isinstance(e, SparseMatrix):
        return int(e.matrix.nnz)
    if isinstance(e, Conv1D):
        return int(np.count_nonzero(e.kernel)) * e.n
    if isinstance(e, Identity):
        return e.rows
    if isinstance(e, ZeroOp):
        return 0
    if isinstance(e, Scale):
        return 0 if e.alpha == 0.0 else nnz_estimate(e.child)
    if isinstance(e, Sum):
        return min(e.rows * e.cols, nnz_estimate(e.left) + nnz_estimate(e.right))
    if isinstance(e, Compose):
        inner = e.left.cols
        if inner == 0:
            return 0
        fill = (nnz_estimate(e.left) * nnz_estimate(e.right) + inner - 1) // inner
        return min(e.rows * e.cols, fill)
    if isinstance(e, VStack):
        return sum(nnz_estimate(c) for c in e.children)
    if isinstance(e, AdjointOf):
        return nnz_estimate(e.child)
    raise LinOpError(f"unknown expression type {type(e).__name__}")


def storage_nbytes(op) -> int:
    """Bytes of array data held by the expression tree (working-memory bound)."""
    e = _expr_of(op)
    if isinstance(e, DenseMatrix):
        return e.values.nbytes
    if isinstance(e, SparseMatrix):
        m = e.matrix
        return m.data.nbytes + m.indices.nbytes + m.indptr.nbytes
    if isinstance(e, Conv1D):
        return e.kernel.nbytes
    if isinstance(e, (Identity, ZeroOp)):
        return 0
    if isinstance(e, (Scale, AdjointOf)):
        return storage_nbytes(e.child)
    if isinstance(e, (Sum, Compose)):
        return storage_nbytes(e.left) + storage_nbytes(e.right)
    if isinstance(e, VStack):
        return sum(storage_nbytes(c) for c in e.children)
    raise LinOpError(f"unknown expression type {type(e).__name__}")
