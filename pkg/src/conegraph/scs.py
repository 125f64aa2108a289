"""Operator-splitting cone solver expressed as a computation graph.

Solves  minimize c^T x  subject to  A x + s = b,  s in K  (a product of
zero, nonnegative, and second-order cones) together with its dual, via
the homogeneous self-dual embedding.  With u = (x, y, tau) and
v = (0, s, kappa), each iteration performs

    u~ <- (I + Q)^{-1} (u + v)          (subspace step)
    u  <- Pi_C(u~ - v)                  (cone step, C = R^n x K* x R+)
    v  <- v - u~ + u

where Q is the skew-symmetric embedding matrix assembled from (A, b, c).
The subspace step never factors Q: eliminating tau against a cached
solve g = (I + Q_z)^{-1} h (h = (c, b)) and eliminating the y block
reduces it to a single conjugate-gradient solve on I + A^T A, so the
solver touches A only through matrix-vector products.

The whole iteration, including the inner CG loop, termination residuals,
and infeasibility/unboundedness certificates, is emitted as one graph
whose while-loop runs until the residual check (performed every
``check_interval`` iterations) passes or the iteration cap is reached.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .cg import CgSpec, cg_solve, emit_cg_loop, make_normal_operator
from .cones import ConeProduct, NonNegCone, SecondOrderCone, ZeroCone
from .graph import Graph, NodeId, evaluate, evaluate_args
from .linop import Operator

SOLVED = "solved"
INACCURATE = "inaccurate"
MAX_ITERS = "max-iters"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_STATUS_RUNNING = 0.0
_STATUS_SOLVED = 1.0
_STATUS_INFEASIBLE = 2.0
_STATUS_UNBOUNDED = 3.0

# below this tau the scaled solution is meaningless; report certificate
# residuals instead
SMALL_TAU = 1e-12

# loop-variable order inside the solver graph
_IU, _IV, _IK, _ISINCE, _ISTATUS, _ICGW, _ICGT, _IRESID = range(8)


@dataclass
class ConeProblem:
    """Cone program data in the equality convention A x + s = b, s in K."""

    A: Operator
    b: np.ndarray
    c: np.ndarray
    K: ConeProduct

    def __post_init__(self) -> None:
        self.b = np.asarray(self.b, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.float64)
        m, n = self.A.shape
        if self.b.shape != (m,):
            raise ValueError(f"b has shape {self.b.shape}, expected ({m},)")
        if self.c.shape != (n,):
            raise ValueError(f"c has shape {self.c.shape}, expected ({n},)")
        if self.K.total_dim != m:
            raise ValueError(
                f"cone product has dim {self.K.total_dim}, expected {m}")

    @property
    def dims(self) -> tuple[int, int]:
        return (self.A.cols, self.A.rows)


@dataclass
class ScsSettings:
    """Solver knobs.

    The inner-CG relative tolerance at splitting iteration k decreases as
    ``1/(k+1)**cg_tol_power`` from ``cg_tol_cap`` down to a saturation
    level ``max(cg_base_tol, cg_eps_factor * eps)``.  The decrease keeps
    the average CG iteration count per splitting iteration small; the
    saturation keeps the subspace-solve error comfortably below the
    termination tolerance without over-solving (the attainable residual
    tracks the subspace-solve accuracy, so an ever-tightening schedule
    would tie the iteration count to the accuracy target).
    """

    eps: float = 1e-3
    max_iters: int = 5000
    check_interval: int = 20
    cg_base_tol: float = 1e-9
    cg_tol_cap: float = 0.1
    cg_tol_power: float = 1.25
    cg_eps_factor: float = 0.1
    cg_max_iter: int | None = None
    setup_cg_tol: float = 1e-12
    cert_tau_ratio: float = 1e-6

    def __post_init__(self) -> None:
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.cg_tol_power not in (0.5, 1.0, 1.25, 1.5, 2.0):
            raise ValueError("cg_tol_power must be one of 0.5, 1.0, 1.25, 1.5, 2.0")

    def cg_tolerance(self, k: int) -> float:
        raw = max(1.0 / (k + 1) ** self.cg_tol_power, self.cg_eps_factor * self.eps)
        return max(self.cg_base_tol, min(self.cg_tol_cap, raw))


@dataclass
class ScsIterate:
    """Embedding iterates u = (x, y, tau), v = (0, s, kappa)."""

    u: np.ndarray
    v: np.ndarray


@dataclass
class ScsSolution:
    status: str
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    pobj: float
    dobj: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    avg_cg_iterations: float


@dataclass
class TraceRecord:
    iteration: int
    primal: float
    dual: float
    gap: float
    cg_iters: int
    u: np.ndarray
    v: np.ndarray


# -- subspace projection (host-language route) ------------------------------


@dataclass
class PrecomputedSolve:
    """Cached pieces of the (I+Q) solve: h = (c, b), g = (I+Q_z)^{-1} h."""

    A: Operator
    h: np.ndarray
    g: np.ndarray
    denom: float
    cg_tol: float
    cg_max_iter: int | None


def _solve_inner_block(A: Operator, d1: np.ndarray, d2: np.ndarray, tol: float,
                       max_iter: int | None, x0: np.ndarray | None = None,
                       ) -> tuple[np.ndarray, int]:
    """Solve [[I, A^T], [-A, I]] z = (d1, d2) via CG on I + A^T A."""
    rhs = d1 - A.adjoint_apply(d2)
    if x0 is None:
        x0 = np.zeros(A.cols)
    res = cg_solve(CgSpec(make_normal_operator(A, 1.0), rhs, x0,
                          tol=tol, max_iter=max_iter))
    if not res.converged:
        warnings.warn(
            f"inner CG stopped at residual {res.final_residual_norm:.3e} "
            f"after {res.iterations} iterations without reaching tolerance "
            f"{tol:g}; the subspace step is inaccurate", RuntimeWarning,
            stacklevel=3)
    z1 = res.x
    z2 = d2 + A.forward(z1)
    return np.concatenate([z1, z2]), res.iterations


def prepare_subspace(problem: ConeProblem, cg_tol: float = 1e-12,
                     cg_max_iter: int | None = None) -> PrecomputedSolve:
    """One-time high-accuracy solve used by every later subspace step."""
    h = np.concatenate([problem.c, problem.b])
    g, _ = _solve_inner_block(problem.A, problem.c, problem.b, cg_tol, cg_max_iter)
    denom = 1.0 + float(h @ g)
    return PrecomputedSolve(problem.A, h, g, denom, cg_tol, cg_max_iter)


def subspace_project(w: np.ndarray, cached: PrecomputedSolve) -> np.ndarray:
    """Solve (I + Q) out = w using the cached rank-one reduction.

    CG non-convergence at the configured tolerance is reported as a
    RuntimeWarning rather than an exception; the returned point is then
    only as accurate as the attained residual.
    """
    A = cached.A
    n, m = A.cols, A.rows
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (n + m + 1,):
        raise ValueError(f"w has shape {w.shape}, expected ({n + m + 1},)")
    p, _ = _solve_inner_block(A, w[:n], w[n:n + m], cached.cg_tol, cached.cg_max_iter)
    tau = (w[-1] + float(cached.h @ p)) / cached.denom
    z = p - tau * cached.g
    return np.concatenate([z, [tau]])


def residuals(iterate: ScsIterate, problem: ConeProblem,
              ) -> tuple[float, float, float]:
    """Relative primal/dual residuals and duality gap, matrix-free.

    For tau above :data:`SMALL_TAU` the measures are evaluated at the
    scaled point (x, y, s) = (u_x, u_y, v_s)/tau.  Otherwise certificate
    mode applies: the first component is the unboundedness certificate
    residual ||A u_x + v_s|| / (-c^T u_x), the second the infeasibility
    certificate residual ||A^T u_y|| / (-b^T u_y) (inf when the relevant
    direction is not improving), and the gap is inf.
    """
    A, b, c = problem.A, problem.b, problem.c
    n, m = A.cols, A.rows
    u, v = iterate.u, iterate.v
    ux, uy, tau = u[:n], u[n:n + m], u[-1]
    vs = v[n:n + m]
    if tau > SMALL_TAU:
        x, y, s = ux / tau, uy / tau, vs / tau
        pr = np.linalg.norm(A.forward(x) + s - b) / (1.0 + np.linalg.norm(b))
        dr = np.linalg.norm(A.adjoint_apply(y) + c) / (1.0 + np.linalg.norm(c))
        ct, bt = float(c @ x), float(b @ y)
        gap = abs(ct + bt) / (1.0 + abs(ct) + abs(bt))
        return float(pr), float(dr), float(gap)
    den_u = -float(c @ ux)
    den_i = -float(b @ uy)
    pr = np.linalg.norm(A.forward(ux) + vs) / den_u if den_u > 0 else np.inf
    dr = np.linalg.norm(A.adjoint_apply(uy)) / den_i if den_i > 0 else np.inf
    return float(pr), float(dr), np.inf


# -- graph emission ---------------------------------------------------------


def _emit_soc_projection(g: Graph, z: NodeId, dim: int, one: NodeId,
                         zero1: NodeId) -> NodeId:
    """Branch-free second-order cone projection on a block node."""
    t = g.slice(z, 0, 1)
    u = g.slice(z, 1, dim)
    nu = g.norm(u)
    inside = g.sub(one, g.greater(nu, t))                     # ||u|| <= t
    in_polar = g.sub(one, g.greater(nu, g.scale(-1.0, t)))    # ||u|| <= -t
    p_else = g.mul(g.sub(one, inside), g.sub(one, in_polar))
    coef = g.scale(0.5, g.add(t, nu))
    pos_nu = g.greater(nu, zero1)
    safe = g.add(nu, g.sub(one, pos_nu))
    direction = g.div(u, safe)
    cand = g.concat(coef, g.smul(coef, direction))
    return g.add(g.smul(inside, z), g.smul(p_else, cand))


def _emit_dual_projection(g: Graph, y: NodeId, K: ConeProduct, one: NodeId,
                          zero1: NodeId) -> NodeId:
    """Projection onto K* (zero-cone blocks are free, others self-dual)."""
    parts = []
    offset = 0
    for f in K.factors:
        blk = g.slice(y, offset, offset + f.dim)
        if isinstance(f, ZeroCone):
            parts.append(blk)
        elif isinstance(f, NonNegCone):
            parts.append(g.max0(blk))
        elif isinstance(f, SecondOrderCone):
            parts.append(_emit_soc_projection(g, blk, f.dim, one, zero1))
        else:
            raise ValueError(f"unknown cone type {type(f).__name__}")
        offset += f.dim
    return parts[0] if len(parts) == 1 else g.concat(*parts)


def _emit_abs(g: Graph, x: NodeId) -> NodeId:
    return g.sqrt(g.mul(x, x))


def _emit_power(g: Graph, t: NodeId, power: float) -> NodeId:
    if power == 0.5:
        return g.sqrt(t)
    if power == 1.0:
        return t
    if power == 1.25:
        return g.mul(t, g.sqrt(g.sqrt(t)))
    if power == 1.5:
        return g.mul(t, g.sqrt(t))
    return g.mul(t, t)  # power == 2.0


def _emit_cg_tolerance(g: Graph, k: NodeId, settings: ScsSettings) -> NodeId:
    """Graph form of :meth:`ScsSettings.cg_tolerance` on the iteration node."""
    one = g.constant([1.0])
    tol_raw = g.div(one, _emit_power(g, g.add(k, one), settings.cg_tol_power))
    sat_c = g.constant([settings.cg_eps_factor * settings.eps])
    cap_c = g.constant([settings.cg_tol_cap])
    base_c = g.constant([settings.cg_base_tol])
    tol_sat = g.add(sat_c, g.max0(g.sub(tol_raw, sat_c)))
    tol_capped = g.sub(cap_c, g.max0(g.sub(cap_c, tol_sat)))
    return g.add(base_c, g.max0(g.sub(tol_capped, base_c)))


def _emit_body(problem: ConeProblem, settings: ScsSettings,
               cached: PrecomputedSolve) -> Graph:
    A = problem.A
    At = A.T
    n, m = A.cols, A.rows
    N = n + m + 1
    cg_max = settings.cg_max_iter if settings.cg_max_iter is not None else 10 * n

    g = Graph()
    u = g.input(N)
    v = g.input(N)
    k = g.input(1)
    since = g.input(1)
    status = g.input(1)
    cgw = g.input(n)
    cgt = g.input(1)
    g.input(3)  # previous residual triple, superseded each iteration

    one = g.constant([1.0])
    zero1 = g.constant([0.0])
    b_c = g.constant(problem.b)
    c_c = g.constant(problem.c)
    h_c = g.constant(cached.h)
    g_c = g.constant(cached.g)
    denom_c = g.constant([cached.denom])
    eps_c = g.constant([settings.eps])

    def not_(x: NodeId) -> NodeId:
        return g.sub(one, x)

    # subspace step: solve (I+Q) u~ = u + v
    w = g.add(u, v)
    wz1 = g.slice(w, 0, n)
    wz2 = g.slice(w, n, n + m)
    wtau = g.slice(w, n + m, N)
    rhs = g.sub(wz1, g.apply(At, wz2))

    tol_k = _emit_cg_tolerance(g, k, settings)
    delta = g.mul(tol_k, g.norm(rhs))

    p1, cg_k, _ = emit_cg_loop(g, make_normal_operator(A, 1.0), rhs, cgw, delta, cg_max)
    p2 = g.add(wz2, g.apply(A, p1))
    p = g.concat(p1, p2)
    tau_t = g.div(g.add(wtau, g.dot(h_c, p)), denom_c)
    u_t = g.concat(g.sub(p, g.smul(tau_t, g_c)), tau_t)

    # cone step onto C = R^n x K* x R+
    w2 = g.sub(u_t, v)
    ux = g.slice(w2, 0, n)
    uy = _emit_dual_projection(g, g.slice(w2, n, n + m), problem.K, one, zero1)
    utau = g.max0(g.slice(w2, n + m, N))
    u2 = g.concat(ux, uy, utau)
    v2 = g.add(g.sub(v, u_t), u2)
    k2 = g.add(k, one)

    # termination measures at the scaled point (guarded against tau = 0)
    s2 = g.slice(v2, n, n + m)
    kappa = g.slice(v2, n + m, N)
    raw_p = g.sub(g.add(g.apply(A, ux), s2), g.smul(utau, b_c))   # A u_x + s - tau b
    raw_d = g.add(g.apply(At, uy), g.smul(utau, c_c))             # A'u_y + tau c
    ctx = g.dot(c_c, ux)
    bty = g.dot(b_c, uy)
    pos = g.greater(utau, zero1)
    tinv = g.div(pos, g.add(utau, not_(pos)))
    pr = g.scale(1.0 / (1.0 + np.linalg.norm(problem.b)), g.mul(g.norm(raw_p), tinv))
    dr = g.scale(1.0 / (1.0 + np.linalg.norm(problem.c)), g.mul(g.norm(raw_d), tinv))
    sc = g.mul(ctx, tinv)
    sb = g.mul(bty, tinv)
    gap = g.div(_emit_abs(g, g.add(sc, sb)),
                g.add(one, g.add(_emit_abs(g, sc), _emit_abs(g, sb))))
    solved = g.mul(g.mul(g.greater(eps_c, pr), g.greater(eps_c, dr)),
                   g.mul(g.greater(eps_c, gap), pos))

    # certificates, gated on tau < cert_tau_ratio * max(kappa, 1)
    max_k1 = g.add(g.max0(g.sub(kappa, one)), one)
    tau_small = g.greater(g.scale(settings.cert_tau_ratio, max_k1), utau)
    den_u = g.max0(g.scale(-1.0, ctx))
    pos_u = g.greater(den_u, zero1)
    unb_num = g.norm(g.add(raw_p, g.smul(utau, b_c)))             # ||A u_x + v_s||
    res_u = g.div(unb_num, g.add(den_u, not_(pos_u)))
    unb_ok = g.mul(pos_u, g.greater(eps_c, res_u))
    den_i = g.max0(g.scale(-1.0, bty))
    pos_i = g.greater(den_i, zero1)
    inf_num = g.norm(g.sub(raw_d, g.smul(utau, c_c)))             # ||A' u_y||
    res_i = g.div(inf_num, g.add(den_i, not_(pos_i)))
    inf_ok = g.mul(pos_i, g.greater(eps_c, res_i))
    cert = g.mul(tau_small, g.add(g.scale(_STATUS_INFEASIBLE, inf_ok),
                                  g.mul(not_(inf_ok), g.scale(_STATUS_UNBOUNDED, unb_ok))))
    cand = g.add(solved, g.mul(not_(solved), cert))

    # latch the status only on check iterations
    since2 = g.add(since, one)
    is_check = g.greater(since2, g.constant([settings.check_interval - 0.5]))
    not_set = not_(g.greater(status, g.constant([0.5])))
    status2 = g.add(status, g.mul(g.mul(not_set, is_check), cand))
    since3 = g.mul(since2, not_(is_check))
    cgt2 = g.add(cgt, cg_k)

    g.set_outputs([u2, v2, k2, since3, status2, p1, cgt2, g.concat(pr, dr, gap)])
    return g


def _emit_cond(n: int, m: int, settings: ScsSettings) -> Graph:
    N = n + m + 1
    g = Graph()
    g.input(N)
    g.input(N)
    k = g.input(1)
    g.input(1)
    status = g.input(1)
    g.input(n)
    g.input(1)
    g.input(3)
    below_cap = g.greater(g.constant([float(settings.max_iters)]), k)
    not_done = g.sub(g.constant([1.0]), g.greater(status, g.constant([0.5])))
    g.set_outputs([g.mul(below_cap, not_done)])
    return g


def build_scs_graph(problem: ConeProblem, settings: ScsSettings | None = None) -> Graph:
    """Emit the full solver graph (setup solve included as baked constants).

    Outputs, in order: final u, final v, iteration count, status code
    (0 running, 1 solved, 2 infeasible, 3 unbounded), total inner-CG
    iterations, and the last (primal, dual, gap) triple.
    """
    settings = settings or ScsSettings()
    cached = prepare_subspace(problem, settings.setup_cg_tol, settings.cg_max_iter)
    n, m = problem.A.cols, problem.A.rows
    N = n + m + 1

    body = _emit_body(problem, settings, cached)
    cond = _emit_cond(n, m, settings)

    g = Graph()
    start = np.zeros(N)
    start[-1] = 1.0
    u0 = g.constant(start)
    v0 = g.constant(start)
    k0 = g.constant([0.0])
    since0 = g.constant([0.0])
    status0 = g.constant([0.0])
    cgw0 = g.constant(np.zeros(n))
    cgt0 = g.constant([0.0])
    resid0 = g.constant([np.inf, np.inf, np.inf])
    w = g.add_while([u0, v0, k0, since0, status0, cgw0, cgt0, resid0], cond, body)

    off = [0, N, 2 * N, 2 * N + 1, 2 * N + 2, 2 * N + 3, 2 * N + 3 + n, 2 * N + 4 + n]
    u_f = g.slice(w, off[_IU], off[_IV])
    v_f = g.slice(w, off[_IV], off[_IK])
    k_f = g.slice(w, off[_IK], off[_IK] + 1)
    status_f = g.slice(w, off[_ISTATUS], off[_ISTATUS] + 1)
    cgt_f = g.slice(w, off[_ICGT], off[_ICGT] + 1)
    resid_f = g.slice(w, off[_IRESID], off[_IRESID] + 3)
    g.set_outputs([u_f, v_f, k_f, status_f, cgt_f, resid_f])
    return g


# -- driving the graph -------------------------------------------------------


def _loop_parts(graph: Graph):
    wnode = next(node for node in graph.nodes if node.kind == "while")
    spec = wnode.payload
    init = [np.array(graph.nodes[j].payload) for j in wnode.inputs]
    return spec, init


def iterate_states(graph: Graph, max_iters: int) -> Iterator[tuple[int, list]]:
    """Step the solver body one splitting iteration at a time.

    Yields (iteration, loop-variable list) after each body application,
    mirroring the in-graph loop exactly; used for tracing and invariant
    tests.
    """
    spec, state = _loop_parts(graph)
    k = 0
    while k < max_iters and state[_ISTATUS][0] == _STATUS_RUNNING:
        state = evaluate_args(spec.body, state)
        k += 1
        yield k, state


def _classify(problem: ConeProblem, settings: ScsSettings, u: np.ndarray,
              v: np.ndarray, iterations: int, cg_total: float) -> ScsSolution:
    A, b, c = problem.A, problem.b, problem.c
    n, m = A.cols, A.rows
    tau, kappa = float(u[-1]), float(v[-1])
    ux, uy, vs = u[:n], u[n:n + m], v[n:n + m]
    avg_cg = cg_total / iterations if iterations > 0 else 0.0
    nan_n, nan_m = np.full(n, np.nan), np.full(m, np.nan)
    eps = settings.eps

    if tau > SMALL_TAU:
        x, y, s = ux / tau, uy / tau, vs / tau
        pr, dr, gap = residuals(ScsIterate(u, v), problem)
        pobj, dobj = float(c @ x), -float(b @ y)
        if max(pr, dr, gap) <= eps:
            return ScsSolution(SOLVED, x, y, s, pobj, dobj, pr, dr, gap,
                               iterations, avg_cg)
    else:
        pr = dr = gap = np.inf
        x = y = s = None

    den_i = -float(b @ uy)
    if den_i > 0:
        res_i = float(np.linalg.norm(A.adjoint_apply(uy))) / den_i
        if tau < settings.cert_tau_ratio * max(kappa, 1.0) and res_i <= eps:
            return ScsSolution(INFEASIBLE, nan_n, uy / den_i, nan_m,
                               np.nan, np.nan, np.inf, res_i, np.inf,
                               iterations, avg_cg)
    den_u = -float(c @ ux)
    if den_u > 0:
        res_u = float(np.linalg.norm(A.forward(ux) + vs)) / den_u
        if tau < settings.cert_tau_ratio * max(kappa, 1.0) and res_u <= eps:
            return ScsSolution(UNBOUNDED, ux / den_u, nan_m, vs / den_u,
                               np.nan, np.nan, res_u, np.inf, np.inf,
                               iterations, avg_cg)

    if x is None:
        return ScsSolution(MAX_ITERS, nan_n, nan_m, nan_m, np.nan, np.nan,
                           pr, dr, gap, iterations, avg_cg)
    status = INACCURATE if max(pr, dr, gap) <= 10.0 * eps else MAX_ITERS
    return ScsSolution(status, x, y, s, float(c @ x), -float(b @ y),
                       pr, dr, gap, iterations, avg_cg)


def solve_built(problem: ConeProblem, settings: ScsSettings, graph: Graph,
                trace_path=None) -> ScsSolution:
    """Run a solver graph produced by :func:`build_scs_graph`."""
    if trace_path is None:
        res = evaluate(graph)
        u_id, v_id, k_id, st_id, cgt_id, _ = graph.outputs
        u, v = res[u_id], res[v_id]
        iterations = int(res[k_id][0])
        cg_total = float(res[cgt_id][0])
        return _classify(problem, settings, u, v, iterations, cg_total)

    _, state = _loop_parts(graph)
    prev_cg = 0.0
    with open(trace_path, "w") as fh:
        for k, state in iterate_states(graph, settings.max_iters):
            cg_now = float(state[_ICGT][0])
            pr, dr, gp = state[_IRESID]
            fh.write(json.dumps({
                "iteration": k,
                "primal": float(pr),
                "dual": float(dr),
                "gap": float(gp),
                "cg_iters": int(cg_now - prev_cg),
            }) + "\n")
            prev_cg = cg_now
    u, v = state[_IU], state[_IV]
    return _classify(problem, settings, u, v, int(state[_IK][0]),
                     float(state[_ICGT][0]))


def solve(problem: ConeProblem, settings: ScsSettings | None = None,
          trace_path=None) -> ScsSolution:
    """Build the solver graph for ``problem`` and run it to termination."""
    settings = settings or ScsSettings()
    graph = build_scs_graph(problem, settings)
    return solve_built(problem, settings, graph, trace_path)
