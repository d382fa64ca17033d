"""Hidden-set recovery on dense and sparse graphs: message passing, state evolution, belief propagation."""
from .noise import NoiseSpec, UnsupportedTransform, default_rho_bar
from .instances import (DenseInstance, SparseInstance, GraphError, sample_hidden_set, gen_dense_instance,
                        planted_instance, normalize, likelihood_transform, gen_regular_graph, gen_sparse_instance)
from .state_evolution import (PolynomialSchedule, IdealTrajectory, SETrace, SparseSETrace, ScheduleDiverged,
                              gaussian_poly_mean, gaussian_poly_second_moment, ideal_recursion, build_schedule,
                              default_t_star, general_se, sparse_gaussian_se)
from .dense import (MessageState, RecoveryResult, mp_init, mp_iterate, run_mp, threshold_candidates, power_method,
                    top_k, scores, run_algorithm1, spectral_solve)
from .sparse import (BPState, TreePopulation, LocalRuleState, UnsupportedModel, bp_init, bp_iterate, run_bp,
                     bp_estimate, tree_population_init, tree_population_step, tree_vertex_distribution,
                     misclassification_estimate, f2_threshold_rule, local_majority_refine)

__version__ = "0.1.0"
