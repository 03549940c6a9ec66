"""The four changepoint move families with closed-form log ratios.

Birth/death come in three flavours (plain, adhoc, posthoc); shift and
adjust are shared.  All ratios are derived from the generic move-pair
construction (target ratio x proposal ratio x move-probability ratio),
so the death ratio carries the configuration-prior odds (1-q)/q and the
choice-count ratio k/(n-k); the small-instance enumeration oracle
certifies this form and rejects the alternative without those factors
(kept below as ``plain_death_ratio_unadjusted``, a negative control).

Position conventions: a state with k interior changepoints at positions
2 <= t_1 < ... < t_k <= n has k+1 segments; death picks one of the k
changepoints uniformly, birth picks one of the (n-1)-k free positions
uniformly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..states import (
    MixtureSpace,
    MixtureState,
    MoveSet,
    MoveSpec,
    ProposalOutcome,
    TargetDensity,
    register_mixture,
)
from .model import (
    ChangepointState,
    Dataset,
    ModelParams,
    SegmentStats,
    log_L,
    log_likelihood,
    log_normal_pdf,
    log_prior,
    segment_loglik,
    segment_mean,
    validate_positions,
)

MOVE_NAMES = ("death", "birth", "shift", "adjust")
DEATH, BIRTH, SHIFT, ADJUST = range(4)
VARIANTS = ("plain", "adhoc", "posthoc")


# ---------------------------------------------------------------------------
# Move schedule
# ---------------------------------------------------------------------------

def schedule_probs(k: int, n: int) -> Tuple[float, float, float, float]:
    """Move probabilities (death, birth, shift, adjust) for a k-changepoint state.

    Interior states use 1/4 each.  With no changepoint, death and shift
    are impossible (birth 0.75, adjust 0.25); when every position holds a
    changepoint, birth is impossible (death 0.5, shift 0.25, adjust 0.25).
    """
    if k == 0:
        return (0.0, 0.75, 0.0, 0.25)
    if k == n - 1:
        return (0.5, 0.0, 0.25, 0.25)
    return (0.25, 0.25, 0.25, 0.25)


@dataclass(frozen=True)
class MoveSchedule:
    """State-dependent move probabilities for a length-n model."""

    n: int

    def probs(self, state: ChangepointState) -> Tuple[float, float, float, float]:
        return schedule_probs(state.count, self.n)

    def p_death(self, state: ChangepointState) -> float:
        return self.probs(state)[DEATH]

    def p_birth(self, state: ChangepointState) -> float:
        return self.probs(state)[BIRTH]

    def p_shift(self, state: ChangepointState) -> float:
        return self.probs(state)[SHIFT]

    def p_adjust(self, state: ChangepointState) -> float:
        return self.probs(state)[ADJUST]


def move_schedule(state: ChangepointState, n: int) -> Tuple[float, float, float, float]:
    """Schedule probabilities of ``state`` in (death, birth, shift, adjust) order."""
    return schedule_probs(state.count, n)


# ---------------------------------------------------------------------------
# Height transform of the post-hoc pair (pure arithmetic, Fraction-safe)
# ---------------------------------------------------------------------------

def merge_heights(h1, h2, n1: int, n2: int):
    """Deterministic death direction: pooled height plus auxiliary point."""
    h = (n1 * h1 + n2 * h2) / (n1 + n2)
    return h, h2


def split_heights(h, u, n1: int, n2: int):
    """Birth direction: invert ``merge_heights`` given the auxiliary draw."""
    h1 = ((n1 + n2) * h - n2 * u) / n1
    return h1, u


def split_map_jacobian_log(n1: int, n2: int) -> float:
    """log |det| of (h1, h2) -> (h, u); the death-direction correction factor."""
    return math.log(n1) - math.log(n1 + n2)


# ---------------------------------------------------------------------------
# Log acceptance ratios
# ---------------------------------------------------------------------------

def _neighbors(state: ChangepointState, ci: int, n: int) -> Tuple[int, int]:
    a = state.cps[ci - 1] if ci > 0 else 1
    b = state.cps[ci + 1] if ci < state.count - 1 else n + 1
    return a, b


def adjust_ratio(
    state: ChangepointState,
    segment: int,
    h_old: float,
    h_new: float,
    stats: SegmentStats,
    params: ModelParams,
) -> float:
    """Height prior ratio times the segment likelihood ratio.

    The symmetric N(h_old, adjust_var) proposal and the segment choice
    cancel, as do all untouched segments.
    """
    n = stats.n
    a = state.cps[segment - 1] if segment > 0 else 1
    b = state.cps[segment] if segment < state.count else n + 1
    return (
        log_normal_pdf(h_new, 0.0, params.height_prior_var)
        - log_normal_pdf(h_old, 0.0, params.height_prior_var)
        + segment_loglik(stats, a, b, h_new, params.obs_var)
        - segment_loglik(stats, a, b, h_old, params.obs_var)
    )


def shift_ratio(
    state: ChangepointState,
    cp_index: int,
    i: int,
    j: int,
    stats: SegmentStats,
    params: ModelParams,
) -> float:
    """Likelihood ratio of relocating one changepoint within its neighbors."""
    a, b = _neighbors(state, cp_index, stats.n)
    if not a < j < b:
        raise ValueError(f"shift target {j} outside ({a}, {b})")
    h1 = state.heights[cp_index]
    h2 = state.heights[cp_index + 1]
    return (
        segment_loglik(stats, a, j, h1, params.obs_var)
        + segment_loglik(stats, j, b, h2, params.obs_var)
        - segment_loglik(stats, a, i, h1, params.obs_var)
        - segment_loglik(stats, i, b, h2, params.obs_var)
    )


def _death_ratio(
    variant: str,
    state: ChangepointState,
    i: int,
    h: float,
    stats: SegmentStats,
    params: ModelParams,
    schedule: MoveSchedule,
) -> float:
    """Death log ratio shared by the three variants.

    ``state`` is the pre-death state; ``h`` the proposed (plain/adhoc) or
    determined (posthoc) merged height.
    """
    n = schedule.n
    k = state.count
    if k < 1:
        raise ValueError("no removable changepoint")
    ci = state.cps.index(i)
    a, b = _neighbors(state, ci, n)
    h1 = state.heights[ci]
    h2 = state.heights[ci + 1]

    # prior odds, choice counts, move probabilities, likelihood
    lr = math.log1p(-params.q) - math.log(params.q)
    lr += math.log(k) - math.log(n - k)
    lr += math.log(schedule_probs(k - 1, n)[BIRTH]) - math.log(
        schedule_probs(k, n)[DEATH]
    )
    lr += log_L(stats, params, a, i, b, h, h1, h2)
    if variant == "plain":
        # N(0, height_prior_var) proposals cancel against the height prior
        return lr

    v = params.height_prior_var
    tau2 = params.adhoc_var
    lr += (
        log_normal_pdf(h, 0.0, v)
        - log_normal_pdf(h1, 0.0, v)
        - log_normal_pdf(h2, 0.0, v)
    )
    if variant == "adhoc":
        lr += (
            log_normal_pdf(h1, segment_mean(stats, a, i), tau2)
            + log_normal_pdf(h2, segment_mean(stats, i, b), tau2)
            - log_normal_pdf(h, segment_mean(stats, a, b), tau2)
        )
        return lr
    if variant == "posthoc":
        lr += log_normal_pdf(h2, segment_mean(stats, i, b), tau2)
        lr += split_map_jacobian_log(i - a, b - i)
        return lr
    raise ValueError(f"unknown variant {variant!r}")


def plain_death_ratio(state, i, h, stats, params, schedule) -> float:
    return _death_ratio("plain", state, i, h, stats, params, schedule)


def adhoc_death_ratio(state, i, h, stats, params, schedule) -> float:
    return _death_ratio("adhoc", state, i, h, stats, params, schedule)


def posthoc_death_ratio(state, i, stats, params, schedule) -> float:
    """Deterministic death: the merged height is the length-weighted mean."""
    ci = state.cps.index(i)
    a, b = _neighbors(state, ci, schedule.n)
    h, _u = merge_heights(state.heights[ci], state.heights[ci + 1], i - a, b - i)
    return _death_ratio("posthoc", state, i, h, stats, params, schedule)


def _insert_changepoint(
    state: ChangepointState, i: int, h1: float, h2: float
) -> ChangepointState:
    ci = int(np.searchsorted(np.asarray(state.cps), i))
    cps = state.cps[:ci] + (i,) + state.cps[ci:]
    heights = state.heights[:ci] + (h1, h2) + state.heights[ci + 1 :]
    return ChangepointState(cps, heights)


def _remove_changepoint(state: ChangepointState, i: int, h: float) -> ChangepointState:
    ci = state.cps.index(i)
    cps = state.cps[:ci] + state.cps[ci + 1 :]
    heights = state.heights[:ci] + (h,) + state.heights[ci + 2 :]
    return ChangepointState(cps, heights)


def birth_ratio(
    variant: str,
    state: ChangepointState,
    i: int,
    h1: float,
    h2: float,
    stats: SegmentStats,
    params: ModelParams,
    schedule: MoveSchedule,
) -> float:
    """Birth log ratio: the exact negation of the paired death ratio.

    ``state`` is the pre-birth state; the paired death removes ``i`` again
    and restores the height the split segment currently carries (for the
    posthoc variant the death is deterministic, and mathematically lands
    on that same height).
    """
    after = _insert_changepoint(state, i, h1, h2)
    if variant == "posthoc":
        return -posthoc_death_ratio(after, i, stats, params, schedule)
    ci = int(np.searchsorted(np.asarray(state.cps), i))
    h_old = state.heights[ci]
    return -_death_ratio(variant, after, i, h_old, stats, params, schedule)


def plain_death_ratio_unadjusted(state, i, h, stats, params, schedule) -> float:
    """Death ratio without prior odds and with the inverted choice-count ratio.

    Negative control only: the balance oracle shows this form violates
    detailed balance (see tests and the validation suite).
    """
    n = schedule.n
    k = state.count
    ci = state.cps.index(i)
    a, b = _neighbors(state, ci, n)
    lr = math.log(n - (k - 1)) - math.log(k)
    lr += math.log(schedule_probs(k - 1, n)[BIRTH]) - math.log(
        schedule_probs(k, n)[DEATH]
    )
    lr += log_L(stats, params, a, i, b, h, state.heights[ci], state.heights[ci + 1])
    return lr


# ---------------------------------------------------------------------------
# Generic-kernel wiring: mixture space, target, MoveSpec set
# ---------------------------------------------------------------------------

def changepoint_space(n: int) -> MixtureSpace:
    """One component space per changepoint count c = 0..n-1."""
    return register_mixture(tuple("i" * c + "r" * (c + 1) for c in range(n)))


def to_mixture(state: ChangepointState) -> MixtureState:
    return MixtureState(state.count, state.cps + state.heights)


def from_mixture(ms: MixtureState) -> ChangepointState:
    k = ms.space
    return ChangepointState(
        tuple(int(p) for p in ms.coords[:k]), tuple(ms.coords[k:])
    )


def make_target(data: Dataset, params: ModelParams) -> TargetDensity:
    stats = SegmentStats(data)
    n = data.n

    def logp(ms: MixtureState) -> float:
        try:
            state = from_mixture(ms)
        except ValueError:
            return float("-inf")
        if not validate_positions(state, n):
            return float("-inf")
        return log_prior(state, params, n) + log_likelihood(state, stats, params)

    return TargetDensity(logp)


def _free_positions(state: ChangepointState, n: int) -> Tuple[int, ...]:
    taken = set(state.cps)
    return tuple(p for p in range(2, n + 1) if p not in taken)


def build_moves(data: Dataset, params: ModelParams, variant: str) -> MoveSet:
    """MoveSpec set (death, birth, shift, adjust) for the generic kernel."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    stats = SegmentStats(data)
    n = data.n
    schedule = MoveSchedule(n)
    sd_prior = math.sqrt(params.height_prior_var)
    sd_adjust = math.sqrt(params.adjust_var)
    tau = math.sqrt(params.adhoc_var)
    bd_kind = "posthoc" if variant == "posthoc" else "adhoc"

    def prob_of(label):
        return lambda ms: schedule_probs(ms.space, n)[label]

    # -- death ---------------------------------------------------------
    def propose_death(ms, rng):
        state = from_mixture(ms)
        ci = int(rng.integers(state.count))
        i = state.cps[ci]
        a, b = _neighbors(state, ci, n)
        if variant == "plain":
            h = sd_prior * rng.standard_normal()
        elif variant == "adhoc":
            h = segment_mean(stats, a, b) + tau * rng.standard_normal()
        else:
            h, _ = merge_heights(state.heights[ci], state.heights[ci + 1], i - a, b - i)
        proposed = to_mixture(_remove_changepoint(state, i, h))
        if variant == "posthoc":
            return ProposalOutcome(
                proposed, aux=(), log_correction=split_map_jacobian_log(i - a, b - i)
            )
        return ProposalOutcome(proposed)

    def ratio_death(ms, outcome):
        state = from_mixture(ms)
        new = from_mixture(outcome.proposed)
        i = next(p for p in state.cps if p not in new.cps)
        if variant == "posthoc":
            return posthoc_death_ratio(state, i, stats, params, schedule)
        ci = state.cps.index(i)
        return _death_ratio(variant, state, i, new.heights[ci], stats, params, schedule)

    # -- birth ---------------------------------------------------------
    def propose_birth(ms, rng):
        state = from_mixture(ms)
        free = _free_positions(state, n)
        i = free[int(rng.integers(len(free)))]
        ci = int(np.searchsorted(np.asarray(state.cps), i))
        a = state.cps[ci - 1] if ci > 0 else 1
        b = state.cps[ci] if ci < state.count else n + 1
        if variant == "plain":
            h1 = sd_prior * rng.standard_normal()
            h2 = sd_prior * rng.standard_normal()
        elif variant == "adhoc":
            h1 = segment_mean(stats, a, i) + tau * rng.standard_normal()
            h2 = segment_mean(stats, i, b) + tau * rng.standard_normal()
        else:
            u = segment_mean(stats, i, b) + tau * rng.standard_normal()
            h1, h2 = split_heights(state.heights[ci], u, i - a, b - i)
        proposed = to_mixture(_insert_changepoint(state, i, h1, h2))
        if variant == "posthoc":
            return ProposalOutcome(
                proposed, aux=(h2,), log_correction=-split_map_jacobian_log(i - a, b - i)
            )
        return ProposalOutcome(proposed)

    def ratio_birth(ms, outcome):
        state = from_mixture(ms)
        new = from_mixture(outcome.proposed)
        i = next(p for p in new.cps if p not in state.cps)
        ci = new.cps.index(i)
        return birth_ratio(
            variant, state, i, new.heights[ci], new.heights[ci + 1],
            stats, params, schedule,
        )

    # -- shift ----------------------------------------------------------
    def propose_shift(ms, rng):
        state = from_mixture(ms)
        ci = int(rng.integers(state.count))
        a, b = _neighbors(state, ci, n)
        j = a + 1 + int(rng.integers(b - a - 1))
        cps = state.cps[:ci] + (j,) + state.cps[ci + 1 :]
        return ProposalOutcome(to_mixture(ChangepointState(cps, state.heights)))

    def ratio_shift(ms, outcome):
        state = from_mixture(ms)
        new = from_mixture(outcome.proposed)
        ci = next(
            (idx for idx, (p, pn) in enumerate(zip(state.cps, new.cps)) if p != pn),
            None,
        )
        if ci is None:  # proposal landed back on the current position
            return 0.0
        return shift_ratio(state, ci, state.cps[ci], new.cps[ci], stats, params)

    # -- adjust ---------------------------------------------------------
    def propose_adjust(ms, rng):
        state = from_mixture(ms)
        si = int(rng.integers(state.count + 1))
        h_new = state.heights[si] + sd_adjust * rng.standard_normal()
        heights = state.heights[:si] + (h_new,) + state.heights[si + 1 :]
        return ProposalOutcome(to_mixture(ChangepointState(state.cps, heights)))

    def ratio_adjust(ms, outcome):
        state = from_mixture(ms)
        new = from_mixture(outcome.proposed)
        si = next(
            idx for idx, (h, hn) in enumerate(zip(state.heights, new.heights)) if h != hn
        )
        return adjust_ratio(state, si, state.heights[si], new.heights[si], stats, params)

    moves = (
        MoveSpec(DEATH, BIRTH, bd_kind, prob_of(DEATH), propose_death, ratio_death),
        MoveSpec(BIRTH, DEATH, bd_kind, prob_of(BIRTH), propose_birth, ratio_birth),
        MoveSpec(SHIFT, SHIFT, "mwg", prob_of(SHIFT), propose_shift, ratio_shift),
        MoveSpec(ADJUST, ADJUST, "mwg", prob_of(ADJUST), propose_adjust, ratio_adjust),
    )
    return MoveSet(moves, space=changepoint_space(n))
