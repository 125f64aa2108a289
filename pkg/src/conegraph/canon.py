"""Problem builders and data generators for the three benchmark families.

Builders perform "matrix stuffing" with abstract operators: the stuffed
constraint matrix is assembled from identity/zero/scale/stack nodes
around the original operator, so nothing is materialized.

Stuffed forms
  regularized least squares  (1/2)||Ax-b||^2 + lam*||x||^2
      -> the linear system (lam*I + A^T A) x = A^T b, handed to CG.
  lasso  (1/2)||Ax-b||^2 + lam*||x||_1
      -> variables z = (x, w, q), objective (0, lam*1, 1), constraints
         (w - x, w + x) in NonNeg(2n) and the quadratic epigraph
         (1/2)||Ax-b||^2 <= q encoded as
         (1 + 2q, 2(Ax-b), 1 - 2q) in SOC(m+2);
         stuffed dims (2n+1, 2n+m+2).
  nonnegative deconvolution  min ||conv(c,x) - b||  s.t. x >= 0
      -> variables (x, t), objective (0, 1), constraints x in NonNeg(n)
         and (t, conv(c,x) - b) in SOC(2n); stuffed dims (n+1, 3n).

Data generation follows the benchmark recipes: dense/sparse matrices are
standard normal with m = 2n (1% density in the sparse case), the
convolution kernel is a centered Gaussian with standard deviation n/10
normalized to unit sum, and b = A x_hat + noise with noise sigma 0.01.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .cg import CgSpec, make_normal_operator
from .cones import ConeProduct, NonNegCone, SecondOrderCone
from .linop import (Operator, conv_full, conv1d, dense, hstack, identity,
                    scale, sparse_csc, vstack, zero)
from .scs import ConeProblem

NOISE_SIGMA = 0.01


@dataclass
class RegLsProblem:
    A: Operator
    b: np.ndarray
    lam: float

    def __post_init__(self) -> None:
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.b.shape != (self.A.rows,):
            raise ValueError(f"b has shape {self.b.shape}, expected ({self.A.rows},)")
        if self.lam <= 0:
            raise ValueError("lam must be positive")


@dataclass
class LassoProblem:
    A: Operator
    b: np.ndarray
    lam: float

    def __post_init__(self) -> None:
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.b.shape != (self.A.rows,):
            raise ValueError(f"b has shape {self.b.shape}, expected ({self.A.rows},)")
        if self.lam <= 0:
            raise ValueError("lam must be positive")


@dataclass
class DeconvProblem:
    c: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        self.c = np.asarray(self.c, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        n = len(self.c)
        if self.b.shape != (2 * n - 1,):
            raise ValueError(
                f"b has shape {self.b.shape}, expected ({2 * n - 1},) for kernel length {n}")


def build_regls(p: RegLsProblem) -> CgSpec:
    """Normal-equation CG spec for regularized least squares."""
    rhs = p.A.adjoint_apply(p.b)
    return CgSpec(make_normal_operator(p.A, p.lam), rhs, np.zeros(p.A.cols),
                  tol=1e-8)


def lasso_dims(n: int, m: int) -> tuple[int, int]:
    return (2 * n + 1, 2 * n + m + 2)


def deconv_dims(n: int) -> tuple[int, int]:
    return (n + 1, 3 * n)


def build_lasso(p: LassoProblem) -> ConeProblem:
    """Stuffed cone program for the lasso; all blocks stay matrix-free."""
    A, b, lam = p.A, p.b, p.lam
    m, n = A.shape
    eye_n = identity(n)
    stuffed = vstack([
        hstack([scale(-1.0, eye_n), eye_n, zero(n, 1)]),
        hstack([eye_n, eye_n, zero(n, 1)]),
        hstack([zero(1, n), zero(1, n), scale(2.0, identity(1))]),
        hstack([scale(2.0, A), zero(m, n), zero(m, 1)]),
        hstack([zero(1, n), zero(1, n), scale(-2.0, identity(1))]),
    ])
    b_cone = np.concatenate([np.zeros(2 * n), [1.0], -2.0 * b, [1.0]])
    c_obj = np.concatenate([np.zeros(n), lam * np.ones(n), [1.0]])
    K = ConeProduct([NonNegCone(2 * n), SecondOrderCone(m + 2)])
    return ConeProblem(scale(-1.0, stuffed), b_cone, c_obj, K)


def build_deconv(p: DeconvProblem) -> ConeProblem:
    """Stuffed cone program for nonnegative deconvolution."""
    n = len(p.c)
    C = conv1d(p.c, n)
    stuffed = vstack([
        hstack([identity(n), zero(n, 1)]),
        hstack([zero(1, n), identity(1)]),
        hstack([C, zero(2 * n - 1, 1)]),
    ])
    b_cone = np.concatenate([np.zeros(n), [0.0], -p.b])
    c_obj = np.concatenate([np.zeros(n), [1.0]])
    K = ConeProduct([NonNegCone(n), SecondOrderCone(2 * n)])
    return ConeProblem(scale(-1.0, stuffed), b_cone, c_obj, K)


# -- data generation ---------------------------------------------------------


def gaussian_kernel(n: int) -> np.ndarray:
    """Centered Gaussian kernel of length n, std n/10, unit sum."""
    i = np.arange(n, dtype=np.float64)
    k = np.exp(-((i - n / 2.0) ** 2) / (2.0 * (n / 10.0) ** 2))
    return k / k.sum()


def gen_data(family: str, n: int, seed: int) -> tuple[Operator, np.ndarray, np.ndarray]:
    """Generate (A, b, x_hat) for the dense/sparse/conv matrix families.

    Dense and sparse use m = 2n rows; conv maps to m = 2n-1.  In all
    cases b = A x_hat + v with x_hat standard normal and v of sigma 0.01.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = np.random.default_rng(seed)
    if family == "dense":
        A = dense(rng.standard_normal((2 * n, n)))
    elif family == "sparse":
        mat = scipy.sparse.random(2 * n, n, density=0.01, format="csc",
                                  random_state=rng, data_rvs=rng.standard_normal)
        A = sparse_csc(mat)
    elif family == "conv":
        A = conv1d(gaussian_kernel(n), n)
    else:
        raise ValueError(f"unknown family {family!r}")
    x_hat = rng.standard_normal(n)
    b = A.forward(x_hat) + NOISE_SIGMA * rng.standard_normal(A.rows)
    return A, b, x_hat


def gen_spike_data(n: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deconvolution data: Gaussian kernel convolved with a 5-spike signal.

    Spike amplitudes are uniform on [0, n/10]; b = conv(c, x_hat) + noise.
    """
    if n < 5:
        raise ValueError("n must be at least 5 for the 5-spike signal")
    rng = np.random.default_rng(seed)
    c = gaussian_kernel(n)
    x_hat = np.zeros(n)
    positions = rng.choice(n, size=5, replace=False)
    x_hat[positions] = rng.uniform(0.0, n / 10.0, size=5)
    b = conv_full(c, x_hat) + NOISE_SIGMA * rng.standard_normal(2 * n - 1)
    return c, b, x_hat


def lasso_lambda_max(A: Operator, b: np.ndarray) -> float:
    """Smallest lam at which the lasso solution is identically zero."""
    return float(np.max(np.abs(A.adjoint_apply(b))))


# -- objective recomputation (used by the CLI and oracles) --------------------


def regls_objective(A: Operator, b: np.ndarray, lam: float, x: np.ndarray) -> float:
    r = A.forward(x) - b
    return 0.5 * float(r @ r) + lam * float(x @ x)


def lasso_objective(A: Operator, b: np.ndarray, lam: float, x: np.ndarray) -> float:
    r = A.forward(x) - b
    return 0.5 * float(r @ r) + lam * float(np.sum(np.abs(x)))


def deconv_objective(c: np.ndarray, b: np.ndarray, x: np.ndarray) -> float:
    return float(np.linalg.norm(conv_full(c, x) - b))


# -- instance serialization ---------------------------------------------------


def save_instance(path, family: str, n: int, seed: int, A: Operator | None,
                  b: np.ndarray, x_hat: np.ndarray, kernel=None) -> None:
    """Write a replayable problem instance as a self-describing npz file."""
    payload = {"family": np.array(family), "n": np.array(n), "seed": np.array(seed),
               "b": b, "x_hat": x_hat}
    if family == "dense":
        payload["matrix"] = A.expr.values
    elif family == "sparse":
        mat = A.expr.matrix
        payload.update(sp_data=mat.data, sp_indices=mat.indices,
                       sp_indptr=mat.indptr, sp_shape=np.array(mat.shape))
    elif family == "conv":
        payload["kernel"] = A.expr.kernel if kernel is None else kernel
    else:
        raise ValueError(f"unknown family {family!r}")
    np.savez(path, **payload)


def load_instance(path) -> tuple[str, int, int, Operator, np.ndarray, np.ndarray]:
    with np.load(path, allow_pickle=False) as data:
        family = str(data["family"])
        n, seed = int(data["n"]), int(data["seed"])
        b, x_hat = data["b"], data["x_hat"]
        if family == "dense":
            A = dense(data["matrix"])
        elif family == "sparse":
            mat = scipy.sparse.csc_matrix(
                (data["sp_data"], data["sp_indices"], data["sp_indptr"]),
                shape=tuple(data["sp_shape"]))
            A = sparse_csc(mat)
        elif family == "conv":
            A = conv1d(data["kernel"], n)
        else:
            raise ValueError(f"unknown family {family!r}")
    return family, n, seed, A, b, x_hat
