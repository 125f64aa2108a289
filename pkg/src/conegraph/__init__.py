"""Matrix-free cone programming with solvers expressed as computation graphs."""

from .graph import (Graph, LoopSpec, Node, NodeId, debug_dump, evaluate,
                    evaluate_args, topological_order, while_loop)
from .linop import (Operator, adjoint_apply, conv1d, dense, forward, hstack,
                    identity, materialize_dense, nnz_estimate, scale,
                    sparse_csc, vstack, zero)
from .cones import (Cone, ConeProduct, NonNegCone, SecondOrderCone, ZeroCone,
                    contains, project, project_product)
from .cg import CgResult, CgSpec, build_cg_graph, cg_solve, make_normal_operator
from .scs import (ConeProblem, ScsSettings, ScsSolution, build_scs_graph,
                  residuals, solve, subspace_project)
from .canon import (DeconvProblem, LassoProblem, RegLsProblem, build_deconv,
                    build_lasso, build_regls, gen_data, gen_spike_data)

__version__ = "0.1.0"
