"""Conjugate gradient generated as a computation graph.

The method is expressed once as a graph over an abstract operator: the
caller supplies a recipe that, given a graph and a node, extends the
graph with the operator applied to that node.  The loop body performs
the classical updates

    alpha = r_norm_sq / <p, Ap>
    x <- x + alpha p,   r <- r - alpha Ap
    beta = r_norm_sq_new / r_norm_sq,   p <- r + beta p

and the loop continues while sqrt(r_norm_sq) > tol * ||b|| (with a
machine-epsilon floor on r_norm_sq so a zero right-hand side or a fully
converged iterate exits immediately), up to the iteration cap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .graph import Graph, NodeId, evaluate
from .linop import Operator

ApplyRecipe = Callable[[Graph, NodeId], NodeId]

DEFAULT_TOL = 1e-8


@dataclass
class CgSpec:
    """A linear system solve over an abstract self-adjoint PSD operator.

    ``apply_op`` must be linear and self-adjoint positive semidefinite;
    this is not checked, and violations surface as non-convergence.
    """

    apply_op: ApplyRecipe
    b: np.ndarray
    x_init: np.ndarray
    tol: float = DEFAULT_TOL
    max_iter: int | None = None

    def __post_init__(self) -> None:
        self.b = np.asarray(self.b, dtype=np.float64)
        self.x_init = np.asarray(self.x_init, dtype=np.float64)
        if self.b.shape != self.x_init.shape:
            raise ValueError(
                f"b has shape {self.b.shape} but x_init has shape {self.x_init.shape}")
        if self.max_iter is None:
            self.max_iter = 10 * len(self.b)


@dataclass
class CgResult:
    x: np.ndarray
    iterations: int
    final_residual_norm: float
    converged: bool


def operator_recipe(A: Operator) -> ApplyRecipe:
    """Recipe applying an operator handle directly."""
    def emit(g: Graph, x: NodeId) -> NodeId:
        return g.apply(A, x)
    return emit


def make_normal_operator(A: Operator, lam: float) -> ApplyRecipe:
    """Recipe for the regularized normal operator x -> lam*x + A^T(A x).

    Self-adjoint PSD by construction (positive definite for lam > 0).
    """
    if lam < 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    At = A.T
    def emit(g: Graph, x: NodeId) -> NodeId:
        gram = g.apply(At, g.apply(A, x))
        if lam == 0.0:
            return gram
        return g.add(g.scale(lam, x), gram)
    return emit


def emit_cg_loop(g: Graph, apply_op: ApplyRecipe, b: NodeId, x_init: NodeId,
                 delta: NodeId, max_iter: int) -> tuple[NodeId, NodeId, NodeId]:
    """Append a CG while-loop to ``g``; returns (x, k, r_norm_sq) node ids.

    ``delta`` is the absolute residual-norm threshold node (shape 1),
    typically tol * ||b||; it may be computed by enclosing graph logic,
    which is how the splitting solver varies the tolerance per iteration.

    Besides the threshold test, the loop exits once r_norm_sq falls to
    machine-noise level relative to ||b||^2 (scaled by the dimension), so
    a zero or denormal right-hand side cannot spin the loop.
    """
    n = g.nodes[b].shape
    eps_floor = np.finfo(np.float64).eps ** 2 * max(n, 1)

    body = Graph()
    x = body.input(n)
    k = body.input(1)
    rns = body.input(1)
    r = body.input(n)
    p = body.input(n)
    d = body.input(1)
    fl = body.input(1)
    Ap = apply_op(body, p)
    alpha = body.div(rns, body.dot(p, Ap))
    x2 = body.add(x, body.smul(alpha, p))
    r2 = body.sub(r, body.smul(alpha, Ap))
    rns2 = body.dot(r2, r2)
    beta = body.div(rns2, rns)
    p2 = body.add(r2, body.smul(beta, p))
    k2 = body.add(k, body.constant([1.0]))
    body.set_outputs([x2, k2, rns2, r2, p2, d, fl])

    cond = Graph()
    c_ins = [cond.input(n), cond.input(1), cond.input(1),
             cond.input(n), cond.input(n), cond.input(1), cond.input(1)]
    _, ck, crns, _, _, cd, cfl = c_ins
    above_delta = cond.greater(cond.sqrt(crns), cd)
    above_floor = cond.greater(crns, cfl)
    below_cap = cond.greater(cond.constant([float(max_iter)]), ck)
    cond.set_outputs([cond.mul(cond.mul(above_delta, above_floor), below_cap)])

    r0 = g.sub(b, apply_op(g, x_init))
    rns0 = g.dot(r0, r0)
    k0 = g.constant([0.0])
    floor = g.scale(eps_floor, g.dot(b, b))
    w = g.add_while([x_init, k0, rns0, r0, r0, delta, floor], cond, body)
    x_out = g.slice(w, 0, n)
    k_out = g.slice(w, n, n + 1)
    rns_out = g.slice(w, n + 1, n + 2)
    return x_out, k_out, rns_out


def build_cg_graph(spec: CgSpec) -> Graph:
    """Graph with input nodes (b, x_init) and outputs (x, k, r_norm_sq)."""
    g = Graph()
    n = len(spec.b)
    b = g.input(n)
    x0 = g.input(n)
    delta = g.scale(spec.tol, g.norm(b))
    x, k, rns = emit_cg_loop(g, spec.apply_op, b, x0, delta, spec.max_iter)
    g.set_outputs([x, k, rns])
    return g


def solve_built(graph: Graph, spec: CgSpec) -> CgResult:
    """Evaluate a graph produced by :func:`build_cg_graph`."""
    b_id, x0_id = graph.input_ids
    res = evaluate(graph, {b_id: spec.b, x0_id: spec.x_init})
    x_id, k_id, rns_id = graph.outputs
    x = res[x_id]
    iterations = int(res[k_id][0])
    frn = float(np.sqrt(res[rns_id][0]))
    converged = frn <= spec.tol * float(np.linalg.norm(spec.b))
    return CgResult(x, iterations, frn, converged)


def cg_solve(spec: CgSpec) -> CgResult:
    return solve_built(build_cg_graph(spec), spec)
