"""Case-study problem families: NNLS, diet LP, NN verification, OPF surrogate, Laplacian models."""
from .diet import DietInstance, diet_as_saddle, diet_vertex_oracle, lp_primal_dual
from .lrmp import (LrmpInstance, LrNnlsInstance, laplacian_from_edges, lr_nnls_dual_solve,
                   lrmp_closed_form, lrmp_dual_solve)
from .nnls import (NnlsInstance, nnls_active_set_oracle, nnls_as_saddle, nnls_as_split,
                   solve_nnls_pdhg)
from .nnv import (Layer, NnvInstance, backprop_duals, nnv_dual_bound, nnv_exact_max,
                  nnv_grid_max, nnv_primal_dual)
from .opf import Line, OpfInstance, opf_grid_oracle, opf_primal_dual

__all__ = [
    "DietInstance", "diet_as_saddle", "diet_vertex_oracle", "lp_primal_dual",
    "LrmpInstance", "LrNnlsInstance", "laplacian_from_edges", "lr_nnls_dual_solve",
    "lrmp_closed_form", "lrmp_dual_solve",
    "NnlsInstance", "nnls_active_set_oracle", "nnls_as_saddle", "nnls_as_split", "solve_nnls_pdhg",
    "Layer", "NnvInstance", "backprop_duals", "nnv_dual_bound", "nnv_exact_max", "nnv_grid_max",
    "nnv_primal_dual",
    "Line", "OpfInstance", "opf_grid_oracle", "opf_primal_dual",
]
