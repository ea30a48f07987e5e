"""Extremal statistics of competing growth processes.

Families are born at the times of an exponentially growing population, each
with an i.i.d. fitness in (0, 1) scaling its own growth rate.  The package
computes the deterministic scaling quantities (window centre ``sigma_t``,
curvature ``kappa``, Malthusian parameter, Frechet constants), simulates the
reinforced branching process and the networks it embeds, and tests the
simulated extremes against their limit laws.
"""
from .fitness import CATALOG_IDS, FitnessClass, FitnessModel, catalog, check_a5, kappa, make_model, sample_fitness
from .scaling import ScalingBundle, scaling_bundle, solve_sigma
from .malthusian import (
    NoMalthusianRoot,
    OffspringLaw,
    malthusian_bb,
    malthusian_crp,
    malthusian_rbp,
    malthusian_selection_mutation,
    thinned_law,
)
from .engines import (
    PopulationSnapshot,
    estimate_T,
    rbp_extremes,
    simulate_ct_gw,
    simulate_rbp,
    simulate_selection_mutation,
    simulate_yule,
)
from .zoo import simulate_bb_tree, simulate_crp, simulate_dereich
from .extremal import (
    ReplicateSummary,
    extract_extremes,
    ks_distance,
    rescale_gumbel,
    rescale_weibull,
    toy_model_oracle,
    validate_limits,
)
from .harness import ConfigError, ExperimentConfig, load_config, run_experiment

__version__ = "0.1.0"
