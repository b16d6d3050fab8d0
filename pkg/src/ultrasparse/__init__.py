"""Ultra-sparse spectral graph sparsification toolkit.

Spanning-tree backbones plus Joule-heat-ranked off-tree edge recovery give
subgraphs that approximate a Laplacian's spectrum to a requested similarity
level; those subgraphs drive a PCG solver and a spectral partitioner.
"""
from .graph import (GraphError, MatrixMarketReport, WeightedGraph,
                    generate_grid, generate_random_geometric,
                    ingest_matrix_market, laplacian_apply, laplacian_dense,
                    quadratic_form, random_connected_graph, read_matrix_market,
                    write_matrix_market)
from .tree import (FactorizationError, SpanningTree, edge_stretch,
                   extract_spanning_tree, hair_comb_tree, kruskal_max_weight,
                   path_bottlenecks, stretch_of_edges, total_stretch,
                   tree_path_edges, tree_solve)
from .embedding import (HeatReport, aggregate_heat, edge_joule_heat,
                        generalized_power_iterate, rank_edges)
from .similarity import (SimilarityEstimate, estimate_lambda_max,
                         estimate_lambda_min, estimate_similarity,
                         heat_threshold, unique_edge_budget)
from .sparsifier import (DensifyConfig, LaplacianFactorization, RoundRecord,
                         Sparsifier, densify, deduplicate_similar,
                         direct_laplacian_solver, factor_preconditioner,
                         filter_edges, predicted_eigenvalue_after_add,
                         rank_one_gamma, weight_for_target, write_sparsifier)
from .pcg import PCGBreakdownError, SolveResult, pcg_solve
from .partition import (PartitionResult, fiedler_approx, fiedler_direct,
                        partition_disagreement, sign_cut)
from .oracle import (DenseSpectrum, dense_generalized_eigs, dense_trace_ratio,
                     jacobi_eigh)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
