"""Accept/reject step for every acceptance-probability construction.

Each construction has a log-ratio evaluator and a thin ``accept_prob_*``
wrapper returning min{1, exp(log ratio)}.  Log-ratio arithmetic
saturates: a ``-inf`` term anywhere (including the would-be 0/0 case)
yields ``-inf``, i.e. the acceptance probability is zero wherever the
ratio is not defined.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Hashable, Optional, Sequence

import numpy as np

from .rng import RNG_ALGORITHM, make_rng
from .states import (
    NEG_INF,
    Aux,
    Coords,
    MixtureState,
    MoveSet,
    TargetDensity,
    validate_state,
)

MOVE_PROB_TOL = 1e-12

#: trace sink contract: one call per retained record
TraceSink = Callable[[int, int, Coords], None]


class FiberViolationError(RuntimeError):
    """An MwG proposal left its conditioning fiber; the move is broken."""


class InvalidProposalError(RuntimeError):
    """A move proposed a state that fails schema validation."""


def _finite(*values: float) -> bool:
    return all(v > NEG_INF and not math.isnan(v) for v in values)


def _ratio(log_num_terms: Sequence[float], log_den_terms: Sequence[float]) -> float:
    """Saturating log ratio: -inf unless every term is finite."""
    if not _finite(*log_num_terms, *log_den_terms):
        return NEG_INF
    return float(sum(log_num_terms) - sum(log_den_terms))


def acceptance_from_log_ratio(log_ratio: float) -> float:
    if log_ratio >= 0.0:
        return 1.0
    if log_ratio == NEG_INF or math.isnan(log_ratio):
        return 0.0
    return math.exp(log_ratio)


def _logsumexp(values: Sequence[float]) -> float:
    finite = [v for v in values if v > NEG_INF]
    if not finite:
        return NEG_INF
    m = max(finite)
    return m + math.log(sum(math.exp(v - m) for v in finite))


# ---------------------------------------------------------------------------
# Ratio evaluators, one per construction
# ---------------------------------------------------------------------------

def log_ratio_primal(
    p: TargetDensity,
    log_q: Callable[[MixtureState, MixtureState], float],
    s_prime: MixtureState,
    s: MixtureState,
) -> float:
    """Primal ratio p(s)q(s,s') / (p(s')q(s',s)); q evaluable both ways."""
    return _ratio((p(s), log_q(s, s_prime)), (p(s_prime), log_q(s_prime, s)))


def accept_prob_primal(p, log_q, s_prime, s) -> float:
    return acceptance_from_log_ratio(log_ratio_primal(p, log_q, s_prime, s))


def log_ratio_mixture(
    p: TargetDensity, moves: MoveSet, label: int, s_prime: MixtureState, s: MixtureState
) -> float:
    """Move-pair ratio: reverse move's kernel and probability on top."""
    mv = moves[label]
    rv = moves.reverse_of(label)
    beta_rev = rv.move_prob(s)
    beta_fwd = mv.move_prob(s_prime)
    return _ratio(
        (p(s), rv.log_kernel(s, s_prime),
         math.log(beta_rev) if beta_rev > 0 else NEG_INF),
        (p(s_prime), mv.log_kernel(s_prime, s),
         math.log(beta_fwd) if beta_fwd > 0 else NEG_INF),
    )


def accept_prob_mixture(p, moves, label, s_prime, s) -> float:
    return acceptance_from_log_ratio(log_ratio_mixture(p, moves, label, s_prime, s))


def log_ratio_adhoc(
    p: TargetDensity, moves: MoveSet, label: int, s_prime: MixtureState, s: MixtureState
) -> float:
    """Ad-hoc ratio: kernels conditioned on the translated arguments."""
    mv = moves[label]
    rv = moves.reverse_of(label)
    t_fwd = mv.translate(s_prime) if mv.translate is not None else s_prime
    t_rev = rv.translate(s) if rv.translate is not None else s
    beta_rev = rv.move_prob(s)
    beta_fwd = mv.move_prob(s_prime)
    return _ratio(
        (p(s), rv.log_kernel(t_rev, s_prime),
         math.log(beta_rev) if beta_rev > 0 else NEG_INF),
        (p(s_prime), mv.log_kernel(t_fwd, s),
         math.log(beta_fwd) if beta_fwd > 0 else NEG_INF),
    )


def accept_prob_adhoc(p, moves, label, s_prime, s) -> float:
    return acceptance_from_log_ratio(log_ratio_adhoc(p, moves, label, s_prime, s))


def log_ratio_posthoc(
    p: TargetDensity, moves: MoveSet, label: int, s_prime: MixtureState, aux: Aux
) -> float:
    """Post-hoc ratio evaluated in the auxiliary space.

    The move's transform supplies the image state, the paired reverse
    auxiliary point and the log correction factor.
    """
    mv = moves[label]
    rv = moves.reverse_of(label)
    s, u, log_f = mv.transform(s_prime, aux)
    beta_rev = rv.move_prob(s)
    beta_fwd = mv.move_prob(s_prime)
    return _ratio(
        (p(s), rv.log_aux_kernel(s, u),
         math.log(beta_rev) if beta_rev > 0 else NEG_INF, log_f),
        (p(s_prime), mv.log_aux_kernel(s_prime, aux),
         math.log(beta_fwd) if beta_fwd > 0 else NEG_INF),
    )


def accept_prob_posthoc(p, moves, label, s_prime, aux) -> float:
    return acceptance_from_log_ratio(log_ratio_posthoc(p, moves, label, s_prime, aux))


def log_ratio_posthoc_discrete(
    p: TargetDensity, moves: MoveSet, label: int, s_prime: MixtureState, s: MixtureState
) -> float:
    """Discrete post-hoc ratio with indicator-summed forward/backward mass."""
    mv = moves[label]
    rv = moves.reverse_of(label)
    if mv.aux_values is None or rv.aux_values is None:
        raise ValueError("discrete post-hoc moves need an enumerable aux support")

    def log_mass(move, origin, targetstate):
        terms = []
        for u in move.aux_values(origin):
            image, _, _ = move.transform(origin, u)
            if image == targetstate:
                terms.append(move.log_aux_kernel(origin, u))
        return _logsumexp(terms)

    beta_rev = rv.move_prob(s)
    beta_fwd = mv.move_prob(s_prime)
    return _ratio(
        (p(s), log_mass(rv, s, s_prime),
         math.log(beta_rev) if beta_rev > 0 else NEG_INF),
        (p(s_prime), log_mass(mv, s_prime, s),
         math.log(beta_fwd) if beta_fwd > 0 else NEG_INF),
    )


def accept_prob_posthoc_discrete(p, moves, label, s_prime, s) -> float:
    return acceptance_from_log_ratio(
        log_ratio_posthoc_discrete(p, moves, label, s_prime, s)
    )


def log_ratio_mwg(
    log_conditional: Callable[[Hashable, MixtureState], float],
    log_q: Callable[[MixtureState, MixtureState], float],
    move_prob: Callable[[MixtureState], float],
    s_prime: MixtureState,
    s: MixtureState,
    fiber: Optional[Callable[[MixtureState], Hashable]] = None,
) -> float:
    """Metropolis-within-Gibbs ratio on one fiber.

    Both move-probability factors use the same move: within a fiber the
    move is its own reverse.  A proposal off the fiber is a hard error.
    """
    g = None
    if fiber is not None:
        g = fiber(s_prime)
        if fiber(s) != g:
            raise FiberViolationError(
                f"proposal left fiber: g(s')={g!r} but g(s)={fiber(s)!r}"
            )
    beta_s = move_prob(s)
    beta_sp = move_prob(s_prime)
    return _ratio(
        (log_conditional(g, s), log_q(s, s_prime),
         math.log(beta_s) if beta_s > 0 else NEG_INF),
        (log_conditional(g, s_prime), log_q(s_prime, s),
         math.log(beta_sp) if beta_sp > 0 else NEG_INF),
    )


def accept_prob_mwg(log_conditional, log_q, move_prob, s_prime, s, fiber=None) -> float:
    return acceptance_from_log_ratio(
        log_ratio_mwg(log_conditional, log_q, move_prob, s_prime, s, fiber)
    )


# ---------------------------------------------------------------------------
# Chain driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AcceptanceDecision:
    move: int
    proposed: MixtureState
    log_ratio: float
    accept_prob: float
    accepted: bool
    uniform_draw: float


@dataclass(frozen=True)
class ChainConfig:
    iterations: int
    burnin: int = 0
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        if self.burnin < 0 or self.burnin >= self.iterations:
            raise ValueError("need 0 <= burnin < iterations")
        if self.thin <= 0:
            raise ValueError("thin must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class ChainReport:
    per_move_proposed: np.ndarray
    per_move_accepted: np.ndarray
    wall_time_seconds: float
    final_state: MixtureState
    iterations: int
    seed: int
    rng_algorithm: str = RNG_ALGORITHM

    def acceptance_rates(self) -> np.ndarray:
        """Per-move accepted/proposed; 0 where a move was never proposed."""
        prop = self.per_move_proposed
        with np.errstate(invalid="ignore", divide="ignore"):
            rates = np.where(prop > 0, self.per_move_accepted / np.maximum(prop, 1), 0.0)
        return rates


def step(
    target: TargetDensity,
    moves: MoveSet,
    state: MixtureState,
    rng: np.random.Generator,
) -> tuple[MixtureState, AcceptanceDecision]:
    """One accept/reject step: pick a move, propose, dispatch, decide."""
    betas = np.array([mv.move_prob(state) for mv in moves.moves])
    total = betas.sum()
    if abs(total - 1.0) > MOVE_PROB_TOL:
        raise ValueError(f"move probabilities sum to {total!r} at {state!r}")
    u_move = rng.random()
    label = int(np.searchsorted(np.cumsum(betas), u_move, side="right"))
    label = min(label, len(moves) - 1)
    mv = moves[label]

    outcome = mv.propose(state, rng)
    if (outcome.aux is not None) != (mv.kind == "posthoc"):
        raise InvalidProposalError(
            f"move {label}: aux must be present iff the move is post-hoc"
        )
    if moves.space is not None and not validate_state(moves.space, outcome.proposed):
        raise InvalidProposalError(
            f"move {label} proposed an invalid state {outcome.proposed!r}"
        )
    if mv.kind == "mwg" and mv.fiber is not None:
        if mv.fiber(outcome.proposed) != mv.fiber(state):
            raise FiberViolationError(f"move {label} proposal left its fiber")

    log_ratio = mv.log_ratio(state, outcome)
    accept_prob = acceptance_from_log_ratio(log_ratio)
    u = rng.random()
    accepted = u < accept_prob
    decision = AcceptanceDecision(
        move=label,
        proposed=outcome.proposed,
        log_ratio=log_ratio,
        accept_prob=accept_prob,
        accepted=accepted,
        uniform_draw=u,
    )
    return (outcome.proposed if accepted else state), decision


def run_chain(
    target: TargetDensity,
    moves: MoveSet,
    init: MixtureState,
    cfg: ChainConfig,
    sink: Optional[TraceSink] = None,
    rng: Optional[np.random.Generator] = None,
) -> ChainReport:
    """Drive a chain, streaming thinned post-burnin states to ``sink``.

    Records are emitted after iterations ``it`` with ``it > burnin`` and
    ``(it - burnin) % thin == 0``.
    """
    if target(init) == NEG_INF:
        raise ValueError("initial state is outside the target support")
    rng = make_rng(cfg.seed) if rng is None else rng
    proposed = np.zeros(len(moves), dtype=np.int64)
    accepted = np.zeros(len(moves), dtype=np.int64)
    state = init
    t0 = time.perf_counter()
    for it in range(1, cfg.iterations + 1):
        state, decision = step(target, moves, state, rng)
        proposed[decision.move] += 1
        if decision.accepted:
            accepted[decision.move] += 1
        if sink is not None and it > cfg.burnin and (it - cfg.burnin) % cfg.thin == 0:
            sink(it, state.space, state.coords)
    wall = time.perf_counter() - t0
    return ChainReport(
        per_move_proposed=proposed,
        per_move_accepted=accepted,
        wall_time_seconds=wall,
        final_state=state,
        iterations=cfg.iterations,
        seed=cfg.seed,
    )
