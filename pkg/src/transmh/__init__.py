"""Trans-dimensional Metropolis-Hastings sampling over mixture spaces."""

from .kernel import (
    AcceptanceDecision,
    ChainConfig,
    ChainReport,
    FiberViolationError,
    InvalidProposalError,
    accept_prob_adhoc,
    accept_prob_mixture,
    accept_prob_mwg,
    accept_prob_posthoc,
    accept_prob_posthoc_discrete,
    accept_prob_primal,
    run_chain,
    step,
)
from .rng import RNG_ALGORITHM, make_rng, spawn_rngs
from .states import (
    MixtureSpace,
    MixtureState,
    MoveSet,
    MoveSpec,
    ProposalOutcome,
    TargetDensity,
    register_mixture,
    reverse_move,
    validate_state,
)

__version__ = "0.1.0"

__all__ = [
    "AcceptanceDecision",
    "ChainConfig",
    "ChainReport",
    "FiberViolationError",
    "InvalidProposalError",
    "MixtureSpace",
    "MixtureState",
    "MoveSet",
    "MoveSpec",
    "ProposalOutcome",
    "RNG_ALGORITHM",
    "TargetDensity",
    "accept_prob_adhoc",
    "accept_prob_mixture",
    "accept_prob_mwg",
    "accept_prob_posthoc",
    "accept_prob_posthoc_discrete",
    "accept_prob_primal",
    "make_rng",
    "register_mixture",
    "reverse_move",
    "run_chain",
    "spawn_rngs",
    "step",
    "validate_state",
]
