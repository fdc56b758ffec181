"""Temporal latent spaces for link prediction in dynamic graphs."""

__version__ = "0.1.0"

from .evaluation import (EvalReport, TestPairSet, adamic_adar, auc_pr, auc_roc, evaluate,
                         prediction_error, previous_graph_baseline, sample_test_pairs, score_pair,
                         score_pairs)
from .generators import make_rng, planted_partition_generate, to_temporal_edges
from .global_bcgd import fit_global, update_row_global
from .graph import (DeltaGraph, DynamicGraph, EdgeListError, GraphSnapshot, TemporalEdgeList,
                    aggregate, apply_delta, diff_snapshots, load_temporal_edges, read_node_map,
                    read_snapshot, slice_snapshots, write_node_map, write_snapshot,
                    write_temporal_edges)
from .incremental_bcgd import AffectedSet, fit_incremental, init_updated_rows, refresh_affected_set
from .latent import (NumericalError, SolverConfig, StepSchedule, Trajectory, dense_objective_oracle,
                     gradient_node, gram, gram_row_swap, lipschitz_constant, load_latent,
                     local_objective, nesterov_a, objective, row_normalize, save_latent,
                     step_coefficient)
from .local_bcgd import fit_local, update_row_local

__all__ = [name for name in dir() if not name.startswith("_")]
