"""Vector computation graphs with while-loop control flow.

The engine is deliberately small.  A graph is an append-only list of
vector-valued nodes; a node may only reference nodes created before it,
so graphs are acyclic by construction.  Declaring outputs finalizes the
graph, after which it is immutable and can be evaluated repeatedly (and
concurrently) with different input bindings.  Evaluation walks a
precompiled schedule in topological (= insertion) order, computing each
reachable node exactly once per call.

Iteration is provided by a dedicated ``while`` node whose condition and
body are themselves finalized graphs; loop variables are passed
positionally to the subgraphs' input nodes.  Scalars are length-1
vectors throughout; all arithmetic is float64.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Sequence

import numpy as np

NodeId = int

DEFAULT_LOOP_CAP = 10**6

KINDS = frozenset({
    "input", "constant", "add", "subtract", "scalar-multiply",
    "elementwise-multiply", "divide", "dot-product", "euclidean-norm",
    "square-root", "maximum-with-zero", "linop-apply", "slice", "concat",
    "compare-greater", "while",
})


class GraphError(ValueError):
    """Base class for graph construction and evaluation errors."""


class ShapeMismatch(GraphError):
    """Node inputs have shapes inconsistent with the node kind."""


class UnknownNode(GraphError):
    """A referenced node id does not exist in this graph."""


class MissingBinding(GraphError):
    """An input node required by the outputs was not bound."""


class NonFiniteValue(GraphError):
    """A node produced NaN or infinity under strict-finiteness checking."""


@dataclass(frozen=True)
class Node:
    """One vector-valued operation in a graph."""

    id: NodeId
    kind: str
    inputs: tuple[NodeId, ...]
    shape: int
    payload: Any = None


@dataclass
class LoopSpec:
    """Condition-guarded iteration over a tuple of loop variables.

    ``loop_vars`` are nodes of ``graph`` providing initial values.
    ``cond`` maps the loop variables to a length-1 truth value (nonzero
    means continue); ``body`` maps them to updated values of identical
    shapes.  Both subgraphs bind their input nodes positionally, in
    insertion order.  The loop is pre-test: ``cond`` is evaluated before
    every body application, so zero iterations are possible.
    """

    graph: "Graph | None"
    loop_vars: list[NodeId]
    cond: "Graph"
    body: "Graph"
    max_iter: int = DEFAULT_LOOP_CAP


@dataclass
class LoopResult:
    values: list[np.ndarray]
    iterations: int
    cap_exceeded: bool


@dataclass
class EvalResult:
    """Values of the requested output nodes of one evaluation."""

    values: dict[NodeId, np.ndarray]
    loop_cap_exceeded: bool = False

    def __getitem__(self, node: NodeId) -> np.ndarray:
        return self.values[node]


@dataclass
class _Ctx:
    check_finite: bool = False
    cap_hit: bool = False


def _as_vector(value, what: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise GraphError(f"{what} must be a 1-d vector, got shape {arr.shape}")
    return arr


class Graph:
    """Append-only DAG of vector operations.

    Nodes are added through :meth:`add_node` or the typed convenience
    methods (:meth:`add`, :meth:`dot`, :meth:`apply`, ...), each of which
    returns the new node's id.  Call :meth:`set_outputs` to finalize.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.outputs: list[NodeId] = []
        self._input_ids: list[NodeId] = []
        self._finalized = False
        self._steps: list[tuple[NodeId, Callable]] | None = None
        self._fns: list[Callable] | None = None

    # -- construction -----------------------------------------------------

    def add_node(self, kind: str, inputs: Sequence[NodeId] = (), payload: Any = None) -> NodeId:
        if self._finalized:
            raise GraphError("graph is finalized; outputs are already declared")
        if kind not in KINDS:
            raise GraphError(f"unknown node kind {kind!r}")
        ids = tuple(int(i) for i in inputs)
        for i in ids:
            if not 0 <= i < len(self.nodes):
                raise UnknownNode(f"node {len(self.nodes)} ({kind}): input id {i} does not exist")
        if kind == "constant":
            payload = _as_vector(payload, "constant payload")
            payload.flags.writeable = False
        shape = self._infer_shape(kind, ids, payload)
        node = Node(len(self.nodes), kind, ids, shape, payload)
        self.nodes.append(node)
        if kind == "input":
            self._input_ids.append(node.id)
        return node.id

    def _shape_of(self, nid: NodeId) -> int:
        return self.nodes[nid].shape

    def _infer_shape(self, kind: str, ids: tuple[NodeId, ...], payload: Any) -> int:
        new = len(self.nodes)

        def fail(msg: str) -> None:
            raise ShapeMismatch(f"node {new} ({kind}): {msg}")

        def arity(k: int) -> None:
            if len(ids) != k:
                fail(f"expects {k} input(s), got {len(ids)}")

        shp = [self._shape_of(i) for i in ids]
        if kind == "input":
            if not isinstance(payload, int) or payload < 0:
                fail("payload must be a nonnegative integer length")
            arity(0)
            return payload
        if kind == "constant":
            arity(0)
            return len(payload)
        if kind in ("add", "subtract", "elementwise-multiply", "compare-greater"):
            arity(2)
            if shp[0] != shp[1]:
                fail(f"operand shapes differ: {shp[0]} vs {shp[1]}")
            return shp[0]
        if kind == "divide":
            arity(2)
            if shp[0] != shp[1] and shp[1] != 1:
                fail(f"denominator shape {shp[1]} is neither {shp[0]} nor 1")
            return shp[0]
        if kind == "scalar-multiply":
            if payload is not None:
                arity(1)
                return shp[0]
            arity(2)
            if shp[0] != 1:
                fail("first input (the scalar) must have shape 1")
            return shp[1]
        if kind == "dot-product":
            arity(2)
            if shp[0] != shp[1]:
                fail(f"operand shapes differ: {shp[0]} vs {shp[1]}")
            return 1
        if kind == "euclidean-norm":
            arity(1)
            return 1
        if kind in ("square-root", "maximum-with-zero"):
            arity(1)
            return shp[0]
        if kind == "linop-apply":
            arity(1)
            rows, cols = int(payload.rows), int(payload.cols)
            if shp[0] != cols:
                fail(f"operator has {cols} columns but input has shape {shp[0]}")
            return rows
        if kind == "slice":
            arity(1)
            start, stop = payload
            if not 0 <= start <= stop <= shp[0]:
                fail(f"slice {start}:{stop} out of range for shape {shp[0]}")
            return stop - start
        if kind == "concat":
            if not ids:
                fail("expects at least one input")
            return sum(shp)
        if kind == "while":
            spec = payload
            if not isinstance(spec, LoopSpec):
                fail("payload must be a LoopSpec")
            _validate_loop(spec, shp)
            return sum(shp)
        raise GraphError(f"unknown node kind {kind!r}")

    # typed helpers -------------------------------------------------------

    def input(self, shape: int) -> NodeId:
        return self.add_node("input", (), shape)

    def constant(self, values) -> NodeId:
        return self.add_node("constant", (), values)

    def add(self, a: NodeId, b: NodeId) -> NodeId:
        return self.add_node("add", (a, b))

    def sub(self, a: NodeId, b: NodeId) -> NodeId:
        return self.add_node("subtract", (a, b))

    def scale(self, alpha: float, x: NodeId) -> NodeId:
        """Multiply by a compile-time scalar constant."""
        return self.add_node("scalar-multiply", (x,), float(alpha))

    def smul(self, s: NodeId, x: NodeId) -> NodeId:
        """Multiply vector ``x`` by the runtime scalar node ``s``."""
        return self.add_node("scalar-multiply", (s, x))

    def mul(self, a: NodeId, b: NodeId) -> NodeId:
        return self.add_node("elementwise-multiply", (a, b))

    def div(self, a: NodeId, b: NodeId) -> NodeId:
        return self.add_node("divide", (a, b))

    def dot(self, a: NodeId, b: NodeId) -> NodeId:
        return self.add_node("dot-product", (a, b))

    def norm(self, x: NodeId) -> NodeId:
        return self.add_node("euclidean-norm", (x,))

    def sqrt(self, x: NodeId) -> NodeId:
        return self.add_node("square-root", (x,))

    def max0(self, x: NodeId) -> NodeId:
        return self.add_node("maximum-with-zero", (x,))

    def greater(self, a: NodeId, b: NodeId) -> NodeId:
        return self.add_node("compare-greater", (a, b))

    def apply(self, op, x: NodeId) -> NodeId:
        return self.add_node("linop-apply", (x,), op)

    def slice(self, x: NodeId, start: int, stop: int) -> NodeId:
        return self.add_node("slice", (x,), (int(start), int(stop)))

    def concat(self, *xs: NodeId) -> NodeId:
        return self.add_node("concat", tuple(xs))

    def add_while(self, loop_vars: Sequence[NodeId], cond: "Graph", body: "Graph",
                  max_iter: int = DEFAULT_LOOP_CAP) -> NodeId:
        """Embed a while loop; the node's value is the concatenation of the
        final loop variables."""
        spec = LoopSpec(self, list(loop_vars), cond, body, max_iter)
        return self.add_node("while", tuple(loop_vars), spec)

    # -- finalization -----------------------------------------------------

    @property
    def input_ids(self) -> list[NodeId]:
        return list(self._input_ids)

    def set_outputs(self, ids: Sequence[NodeId]) -> "Graph":
        if self._finalized:
            raise GraphError("outputs already declared")
        for i in ids:
            if not 0 <= int(i) < len(self.nodes):
                raise UnknownNode(f"output id {i} does not exist")
        self.outputs = [int(i) for i in ids]
        self._finalized = True
        self._compile()
        return self

    @property
    def finalized(self) -> bool:
        return self._finalized

    def _needed(self, roots: Iterable[NodeId]) -> list[NodeId]:
        seen: set[NodeId] = set()
        stack = list(roots)
        while stack:
            i = stack.pop()
            if i in seen:
                continue
            seen.add(i)
            stack.extend(self.nodes[i].inputs)
        return sorted(seen)

    def _compile(self) -> None:
        steps = [(i, _compile_node(self.nodes[i])) for i in self._needed(self.outputs)]
        self._steps = steps
        self._fns = [fn for _, fn in steps]


def _validate_loop(spec: LoopSpec, var_shapes: list[int]) -> None:
    cond, body = spec.cond, spec.body
    for g, name in ((cond, "cond"), (body, "body")):
        if not g.finalized:
            raise GraphError(f"loop {name} subgraph must be finalized")
        in_shapes = [g.nodes[i].shape for i in g.input_ids]
        if in_shapes != var_shapes:
            raise ShapeMismatch(
                f"loop {name} inputs {in_shapes} do not match loop vars {var_shapes}")
    if len(cond.outputs) != 1 or cond.nodes[cond.outputs[0]].shape != 1:
        raise ShapeMismatch("loop cond must produce a single length-1 output")
    out_shapes = [body.nodes[i].shape for i in body.outputs]
    if out_shapes != var_shapes:
        raise ShapeMismatch(
            f"loop body outputs {out_shapes} do not match loop vars {var_shapes}")
    if spec.max_iter < 0:
        raise GraphError("loop max_iter must be nonnegative")


# -- step compilation -----------------------------------------------------

def _compile_node(node: Node) -> Callable[[list, _Ctx], None]:
    i, ins, payload = node.id, node.inputs, node.payload
    kind = node.kind

    if kind == "input":
        def step(v, ctx):
            if v[i] is None:
                raise MissingBinding(f"no binding for input node {i}")
        return step
    if kind == "constant":
        def step(v, ctx):
            v[i] = payload
        return step
    if kind == "add":
        a, b = ins
        def step(v, ctx):
            v[i] = v[a] + v[b]
        return step
    if kind == "subtract":
        a, b = ins
        def step(v, ctx):
            v[i] = v[a] - v[b]
        return step
    if kind == "scalar-multiply":
        if payload is not None:
            (a,) = ins
            alpha = float(payload)
            def step(v, ctx):
                v[i] = alpha * v[a]
            return step
        s, a = ins
        def step(v, ctx):
            v[i] = v[s][0] * v[a]
        return step
    if kind == "elementwise-multiply":
        a, b = ins
        def step(v, ctx):
            v[i] = v[a] * v[b]
        return step
    if kind == "divide":
        a, b = ins
        def step(v, ctx):
            den = v[b]
            v[i] = v[a] / (den[0] if den.shape[0] == 1 else den)
        return step
    if kind == "dot-product":
        a, b = ins
        def step(v, ctx):
            v[i] = np.array([np.dot(v[a], v[b])])
        return step
    if kind == "euclidean-norm":
        (a,) = ins
        def step(v, ctx):
            v[i] = np.array([np.linalg.norm(v[a])])
        return step
    if kind == "square-root":
        (a,) = ins
        def step(v, ctx):
            v[i] = np.sqrt(v[a])
        return step
    if kind == "maximum-with-zero":
        (a,) = ins
        def step(v, ctx):
            v[i] = np.maximum(v[a], 0.0)
        return step
    if kind == "compare-greater":
        a, b = ins
        def step(v, ctx):
            v[i] = (v[a] > v[b]).astype(np.float64)
        return step
    if kind == "linop-apply":
        (a,) = ins
        op = payload
        def step(v, ctx):
            v[i] = op.forward(v[a])
        return step
    if kind == "slice":
        (a,) = ins
        start, stop = payload
        def step(v, ctx):
            v[i] = v[a][start:stop]
        return step
    if kind == "concat":
        def step(v, ctx):
            v[i] = np.concatenate([v[j] for j in ins])
        return step
    if kind == "while":
        spec = payload
        def step(v, ctx):
            state = [v[j] for j in ins]
            state, _, hit = _run_loop(spec.cond, spec.body, state, spec.max_iter, ctx)
            if hit:
                ctx.cap_hit = True
            v[i] = np.concatenate(state)
        return step
    raise GraphError(f"unknown node kind {kind!r}")


# -- execution ------------------------------------------------------------

def _exec(graph: Graph, vals: list, ctx: _Ctx) -> None:
    if graph._steps is None:
        raise GraphError("graph has no declared outputs")
    if ctx.check_finite:
        for nid, fn in graph._steps:
            fn(vals, ctx)
            if not np.all(np.isfinite(vals[nid])):
                raise NonFiniteValue(
                    f"non-finite value at node {nid} ({graph.nodes[nid].kind})")
    else:
        for fn in graph._fns:
            fn(vals, ctx)


def _eval_args(graph: Graph, args: Sequence[np.ndarray], ctx: _Ctx) -> list[np.ndarray]:
    if len(args) != len(graph._input_ids):
        raise GraphError(
            f"graph has {len(graph._input_ids)} inputs, got {len(args)} arguments")
    vals: list = [None] * len(graph.nodes)
    for nid, arg in zip(graph._input_ids, args):
        vals[nid] = arg
    _exec(graph, vals, ctx)
    return [vals[o] for o in graph.outputs]


def _run_loop(cond: Graph, body: Graph, state: list[np.ndarray], max_iter: int,
              ctx: _Ctx) -> tuple[list[np.ndarray], int, bool]:
    iters = 0
    running = _eval_args(cond, state, ctx)[0][0] != 0.0
    while running and iters < max_iter:
        state = _eval_args(body, state, ctx)
        iters += 1
        running = _eval_args(cond, state, ctx)[0][0] != 0.0
    return state, iters, bool(running)


def evaluate(graph: Graph, bindings: dict[NodeId, np.ndarray] | None = None,
             check_finite: bool = False) -> EvalResult:
    """Evaluate the declared outputs of a finalized graph.

    ``bindings`` maps input-node ids to vectors of the declared shapes.
    With ``check_finite`` set, any NaN/inf intermediate raises
    :class:`NonFiniteValue` naming the offending node.
    """
    if not graph.finalized:
        raise GraphError("graph has no declared outputs")
    vals: list = [None] * len(graph.nodes)
    for nid, value in (bindings or {}).items():
        node = graph.nodes[nid] if 0 <= int(nid) < len(graph.nodes) else None
        if node is None or node.kind != "input":
            raise GraphError(f"binding target {nid} is not an input node")
        arr = _as_vector(value, f"binding for node {nid}")
        if len(arr) != node.shape:
            raise ShapeMismatch(
                f"binding for node {nid} has length {len(arr)}, expected {node.shape}")
        vals[nid] = arr
    ctx = _Ctx(check_finite=check_finite)
    _exec(graph, vals, ctx)
    return EvalResult({o: vals[o] for o in graph.outputs}, ctx.cap_hit)


def evaluate_args(graph: Graph, args: Sequence[np.ndarray],
                  check_finite: bool = False) -> list[np.ndarray]:
    """Evaluate a finalized graph binding its input nodes positionally."""
    ctx = _Ctx(check_finite=check_finite)
    args = [_as_vector(a, "argument") for a in args]
    return _eval_args(graph, args, ctx)


def while_loop(spec: LoopSpec, bindings: dict[NodeId, np.ndarray] | None = None,
               check_finite: bool = False) -> LoopResult:
    """Run a condition-guarded loop to completion.

    Initial values come from evaluating ``spec.loop_vars`` in the host
    graph under ``bindings``.  Returns the loop variables after the first
    iteration at which the condition is false, the iteration count, and
    whether the iteration cap was hit (in which case the last iterate is
    returned rather than raising).
    """
    if spec.graph is None:
        raise GraphError("LoopSpec has no host graph")
    var_shapes = [spec.graph.nodes[i].shape for i in spec.loop_vars]
    _validate_loop(spec, var_shapes)
    ctx = _Ctx(check_finite=check_finite)
    init = _evaluate_nodes(spec.graph, spec.loop_vars, bindings or {}, ctx)
    state, iters, hit = _run_loop(spec.cond, spec.body, init, spec.max_iter, ctx)
    return LoopResult(state, iters, hit)


def _evaluate_nodes(graph: Graph, ids: Sequence[NodeId],
                    bindings: dict[NodeId, np.ndarray], ctx: _Ctx) -> list[np.ndarray]:
    # ad-hoc evaluation of arbitrary nodes; used for loop-var initial values
    vals: list = [None] * len(graph.nodes)
    for nid, value in bindings.items():
        vals[nid] = _as_vector(value, f"binding for node {nid}")
    for i in graph._needed(ids):
        _compile_node(graph.nodes[i])(vals, ctx)
    return [vals[i] for i in ids]


def topological_order(graph: Graph) -> list[NodeId]:
    """Kahn's algorithm with ties broken by insertion order.

    For graphs built through :meth:`Graph.add_node` this returns the ids
    in insertion order, but the function recomputes the order from the
    edge relation so tests can use it as an independent acyclicity check.
    """
    n = len(graph.nodes)
    consumers: list[list[NodeId]] = [[] for _ in range(n)]
    indeg = [0] * n
    for node in graph.nodes:
        indeg[node.id] = len(node.inputs)
        for j in node.inputs:
            consumers[j].append(node.id)
    ready = [i for i in range(n) if indeg[i] == 0]
    heapq.heapify(ready)
    order: list[NodeId] = []
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for j in consumers[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(ready, j)
    if len(order) != n:
        raise GraphError("cycle detected")
    return order


# -- debug dump -----------------------------------------------------------

def _payload_str(node: Node) -> str:
    p = node.payload
    if node.kind == "constant":
        if len(p) <= 8:
            return "[" + ", ".join(f"{x:.17g}" for x in p) + "]"
        return f"len={len(p)} sum={np.sum(p):.17g}"
    if node.kind == "input":
        return str(p)
    if node.kind == "scalar-multiply" and p is not None:
        return f"{p:.17g}"
    if node.kind == "linop-apply":
        return f"op[{p.rows}x{p.cols}]"
    if node.kind == "slice":
        return f"{p[0]}:{p[1]}"
    if node.kind == "while":
        return f"max_iter={p.max_iter}"
    return ""


def debug_dump(graph: Graph, indent: str = "") -> str:
    """Text adjacency listing, one node per line, for golden-file tests."""
    lines = []
    for node in graph.nodes:
        extra = _payload_str(node)
        extra = f"  {extra}" if extra else ""
        lines.append(
            f"{indent}{node.id}\t{node.kind}\t{list(node.inputs)}\t{node.shape}{extra}")
        if node.kind == "while":
            lines.append(f"{indent}  cond:")
            lines.append(debug_dump(node.payload.cond, indent + "    "))
            lines.append(f"{indent}  body:")
            lines.append(debug_dump(node.payload.body, indent + "    "))
    if indent == "":
        lines.append("outputs: " + str(graph.outputs))
    return "\n".join(lines)
