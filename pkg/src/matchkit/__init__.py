"""Learning strategy-proof two-sided matching mechanisms from example matchings."""
from .core import (
    Instance,
    LinearOrder,
    PreferenceProfile,
    blocking_pairs,
    check_strategy_proofness,
    is_individually_rational,
    is_pareto_efficient,
    is_stable,
    run_sd,
    validate_matching,
)
from .neuralsd import forward_infer, forward_train
from .ranking import RankingParams, init_params
from .tsd import build_preference_tensor, build_ranking_matrix, tsd

__version__ = "0.1.0"
