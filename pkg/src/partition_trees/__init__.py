"""Randomized partition trees (RP, spill, virtual spill) for exact nearest-neighbor
search, with the potential function that controls how often they fail."""

from .bounds import (BoundReport, PoissonBinomial, brute_force_knn, compute_v,
                     doubling_failure_bound, doubling_phi_bound,
                     hamming_distance_distribution, poisson_binomial_pmf, rp_failure_bound,
                     spill_failure_bound, summation_lemma_bound, topic_phi_bound)
from .dataset import Dataset
from .experiment import ExperimentConfig, FailureReport, emit_report, run_experiment
from .generators import (AdversarialParams, DoublingParams, TopicModelParams,
                         expected_lengths, random_topic_model, sample_adversarial,
                         sample_doubling, sample_topic_model)
from .io import load_dataset, save_dataset
from .linalg import (euclidean_distance, fractile_value, project, random_unit_direction,
                     rng_for)
from .potential import (NeighborOrdering, PotentialProfile, collinearity, phi, phi_k,
                        potential_profile, separated_fraction_expectation_bound,
                        separation_probability_bound, three_point_probability)
from .trees import (PartitionTree, QueryResult, TreeKind, build_rp_tree, build_spill_tree,
                    build_tree, build_virtual_spill_tree, query, tree_stats)

__version__ = "0.1.0"
