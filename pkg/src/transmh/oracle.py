"""Brute-force certification on small instances.

Builds explicit finite fixtures, assembles the full Metropolis-Hastings
transition matrix for a given acceptance construction, and measures the
detailed-balance residual exactly.  Also enumerates the changepoint
posterior by Gaussian conjugacy, estimates Jacobian determinants by
central differences, and compares pairwise move acceptances against the
maximal (whole-mixture) acceptance.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .changepoint.model import (
    ChangepointState,
    Dataset,
    ModelParams,
    SegmentStats,
    log_likelihood,
    log_normal_pdf,
    segment_mean,
)
from .changepoint.moves import (
    ADJUST,
    BIRTH,
    DEATH,
    SHIFT,
    MoveSchedule,
    _death_ratio,
    adjust_ratio,
    plain_death_ratio_unadjusted,
    schedule_probs,
    shift_ratio,
)
from .kernel import (
    acceptance_from_log_ratio,
    log_ratio_adhoc,
    log_ratio_mwg,
    log_ratio_posthoc,
    log_ratio_posthoc_discrete,
    log_ratio_primal,
)
from .states import (
    MixtureState,
    MoveSet,
    MoveSpec,
    TargetDensity,
    register_mixture,
)

NEG_INF = float("-inf")

#: acceptance evaluated on state indices: (move label, from, to) -> alpha
AlphaFn = Callable[[int, int, int], float]


@dataclass(frozen=True)
class FixtureMove:
    """Tabular move: per-state selection probability and proposal rows."""

    label: int
    reverse: int
    kind: str
    beta: np.ndarray
    table: np.ndarray


@dataclass(frozen=True)
class FiniteFixture:
    name: str
    states: Tuple[MixtureState, ...]
    target: np.ndarray
    moves: Tuple[FixtureMove, ...]

    def __post_init__(self):
        s = len(self.states)
        if abs(float(self.target.sum()) - 1.0) > 1e-12:
            raise ValueError("target does not sum to 1")
        beta_sum = np.zeros(s)
        for mv in self.moves:
            rows = mv.table.sum(axis=1)
            if np.max(np.abs(rows - 1.0)) > 1e-12:
                raise ValueError(f"move {mv.label}: proposal rows must sum to 1")
            beta_sum += mv.beta
        if np.max(np.abs(beta_sum - 1.0)) > 1e-12:
            raise ValueError("move probabilities must sum to 1 at every state")
        for mv in self.moves:
            if self.moves[mv.reverse].reverse != mv.label:
                raise ValueError("reverse map is not an involution")

    @property
    def n_states(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class FixtureBundle:
    """A fixture plus the acceptance evaluator(s) of its construction."""

    fixture: FiniteFixture
    alpha: AlphaFn
    alt_alphas: Dict[str, AlphaFn] = field(default_factory=dict)


@dataclass(frozen=True)
class BalanceReport:
    max_residual: float
    worst_pair: Tuple[MixtureState, MixtureState]
    stationary_check: float


def assemble_kernel(fixture: FiniteFixture, alpha: AlphaFn) -> np.ndarray:
    """Full transition matrix including the rejection self-mass."""
    s = fixture.n_states
    mat = np.zeros((s, s))
    for mv in fixture.moves:
        for i in range(s):
            if mv.beta[i] == 0.0:
                continue
            row = mv.table[i]
            for j in range(s):
                if row[j] == 0.0 or j == i:
                    continue
                mat[i, j] += mv.beta[i] * row[j] * alpha(mv.label, i, j)
    off = mat.sum(axis=1)
    if np.any(off > 1.0 + 1e-12):
        raise ValueError("off-diagonal mass exceeds 1; proposal tables broken")
    for i in range(s):
        mat[i, i] = 1.0 - off[i] + mat[i, i]
    rows = mat.sum(axis=1)
    if np.max(np.abs(rows - 1.0)) > 1e-12:
        raise ValueError("assembled kernel is not row-stochastic")
    return mat


def check_detailed_balance(fixture: FiniteFixture, mat: np.ndarray) -> BalanceReport:
    """Max over ordered pairs of |p(s) mu(s,s') - p(s') mu(s',s)|."""
    p = fixture.target
    flow = p[:, None] * mat
    resid = np.abs(flow - flow.T)
    np.fill_diagonal(resid, 0.0)
    worst = np.unravel_index(int(np.argmax(resid)), resid.shape)
    stationary = float(np.max(np.abs(p @ mat - p)))
    return BalanceReport(
        max_residual=float(resid[worst]),
        worst_pair=(fixture.states[worst[0]], fixture.states[worst[1]]),
        stationary_check=stationary,
    )


def mixture_alpha(fixture: FiniteFixture) -> AlphaFn:
    """Default move-pair acceptance computed from the fixture tables alone."""
    p = fixture.target

    def alpha(label: int, i: int, j: int) -> float:
        mv = fixture.moves[label]
        rv = fixture.moves[mv.reverse]
        num = p[j] * rv.beta[j] * rv.table[j, i]
        den = p[i] * mv.beta[i] * mv.table[i, j]
        if num <= 0.0 or den <= 0.0:
            return 0.0
        return min(1.0, num / den)

    return alpha


def compare_pairwise_vs_maximal(
    fixture: FiniteFixture, alpha: Optional[AlphaFn] = None
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-transition pairwise vs maximal acceptance.

    Pairwise: acceptance probability of a realized transition under the
    move-resolved kernel, i.e. the beta*q-weighted mean of the per-move
    acceptances.  Maximal: min{1, p(s)Q(s,s')/(p(s')Q(s',s))} with Q the
    whole mixture proposal.  Returns (pairwise, maximal, mask) where the
    mask marks off-diagonal transitions with positive proposal mass.
    """
    if alpha is None:
        alpha = mixture_alpha(fixture)
    s = fixture.n_states
    p = fixture.target
    q_mix = np.zeros((s, s))
    flow = np.zeros((s, s))
    for mv in fixture.moves:
        w = mv.beta[:, None] * mv.table
        q_mix += w
        for i in range(s):
            for j in range(s):
                if w[i, j] > 0.0 and i != j:
                    flow[i, j] += w[i, j] * alpha(mv.label, i, j)
    mask = (q_mix > 0.0) & ~np.eye(s, dtype=bool)
    pairwise = np.zeros((s, s))
    maximal = np.zeros((s, s))
    for i in range(s):
        for j in range(s):
            if not mask[i, j]:
                continue
            pairwise[i, j] = flow[i, j] / q_mix[i, j]
            num = p[j] * q_mix[j, i]
            den = p[i] * q_mix[i, j]
            maximal[i, j] = min(1.0, num / den) if num > 0.0 and den > 0.0 else 0.0
    return pairwise, maximal, mask


# ---------------------------------------------------------------------------
# Fixture definition files
# ---------------------------------------------------------------------------

def dump_fixture(fixture: FiniteFixture) -> str:
    """Serialize to the line-oriented text format (see README)."""
    out = [f"fixture {fixture.name}", f"states {fixture.n_states}"]
    for st in fixture.states:
        coords = " ".join(repr(c) for c in st.coords)
        out.append(f"state {st.space} {coords}".rstrip())
    out.append("target " + " ".join(repr(float(w)) for w in fixture.target))
    for mv in fixture.moves:
        out.append(f"move {mv.label} reverse={mv.reverse} kind={mv.kind}")
        out.append("beta " + " ".join(repr(float(b)) for b in mv.beta))
        for row in mv.table:
            out.append("row " + " ".join(repr(float(v)) for v in row))
    out.append("end")
    return "\n".join(out) + "\n"


def _parse_coord(tok: str):
    v = float(tok)
    return int(v) if v.is_integer() else v


def parse_fixture(text: str) -> FiniteFixture:
    lines = [
        ln.strip()
        for ln in text.splitlines()
        if ln.strip() and not ln.strip().startswith("#")
    ]
    it = iter(lines)
    head = next(it).split()
    if head[0] != "fixture":
        raise ValueError("fixture file must start with a 'fixture <name>' line")
    name = head[1] if len(head) > 1 else "unnamed"
    n_states = int(next(it).split()[1])
    states = []
    for _ in range(n_states):
        toks = next(it).split()
        if toks[0] != "state":
            raise ValueError("expected a 'state' line")
        states.append(
            MixtureState(int(toks[1]), tuple(_parse_coord(t) for t in toks[2:]))
        )
    toks = next(it).split()
    if toks[0] != "target":
        raise ValueError("expected a 'target' line")
    target = np.array([float(t) for t in toks[1:]])
    moves: List[FixtureMove] = []
    for ln in it:
        if ln == "end":
            break
        toks = ln.split()
        if toks[0] != "move":
            raise ValueError(f"expected a 'move' line, got {ln!r}")
        label = int(toks[1])
        fields = dict(t.split("=", 1) for t in toks[2:])
        beta = np.array([float(t) for t in next(it).split()[1:]])
        table = np.array(
            [[float(t) for t in next(it).split()[1:]] for _ in range(n_states)]
        )
        moves.append(
            FixtureMove(label, int(fields["reverse"]), fields.get("kind", "adhoc"),
                        beta, table)
        )
    return FiniteFixture(name, tuple(states), target, tuple(moves))


def load_fixture(path: str) -> FiniteFixture:
    with open(path) as fh:
        return parse_fixture(fh.read())


# ---------------------------------------------------------------------------
# Built-in fixtures, one per acceptance construction
# ---------------------------------------------------------------------------

def fixture_primal() -> FixtureBundle:
    """Three-state target with a uniform (symmetric) proposal; primal ratio."""
    states = tuple(MixtureState(0, (float(i),)) for i in range(3))
    target = np.array([0.5, 0.3, 0.2])
    table = np.full((3, 3), 1.0 / 3.0)
    fix = FiniteFixture(
        "primal-three-state",
        states,
        target,
        (FixtureMove(0, 0, "primal", np.ones(3), table),),
    )
    p = TargetDensity(lambda s: math.log(target[int(s.coords[0])]))
    log_q = lambda s_from, s_to: math.log(1.0 / 3.0)

    def alpha(label, i, j):
        return acceptance_from_log_ratio(
            log_ratio_primal(p, log_q, states[i], states[j])
        )

    return FixtureBundle(fix, alpha)


def fixture_two_space_jump() -> FixtureBundle:
    """Two singleton spaces with deterministic jump moves; move-pair ratio."""
    states = (MixtureState(0, ()), MixtureState(1, ()))
    target = np.array([0.7, 0.3])
    jump = np.array([[0.0, 1.0], [1.0, 0.0]])
    hold = np.eye(2)
    moves = (
        FixtureMove(0, 1, "adhoc", np.array([1.0, 0.0]),
                    np.array([jump[0], hold[1]])),
        FixtureMove(1, 0, "adhoc", np.array([0.0, 1.0]),
                    np.array([hold[0], jump[1]])),
    )
    fix = FiniteFixture("two-space-jump", states, target, moves)
    return FixtureBundle(fix, mixture_alpha(fix))


def fixture_four_state_overlap() -> FixtureBundle:
    """One space, four states, overlapping moves (neighbour walk + cycles).

    The cycle pair has asymmetric move probabilities, so per-move ratios on
    shared transitions differ and saturation makes the pairwise acceptance
    strictly smaller than the maximal one somewhere.
    """
    s = 4
    states = tuple(MixtureState(0, (float(i),)) for i in range(s))
    target = np.array([0.1, 0.2, 0.3, 0.4])
    walk = np.zeros((s, s))
    fwd = np.zeros((s, s))
    back = np.zeros((s, s))
    for i in range(s):
        walk[i, (i - 1) % s] = 0.5
        walk[i, (i + 1) % s] = 0.5
        fwd[i, (i + 1) % s] = 1.0
        back[i, (i - 1) % s] = 1.0
    moves = (
        FixtureMove(0, 0, "adhoc", np.full(s, 0.5), walk),
        FixtureMove(1, 2, "adhoc", np.full(s, 0.4), fwd),
        FixtureMove(2, 1, "adhoc", np.full(s, 0.1), back),
    )
    fix = FiniteFixture("four-state-overlap", states, target, moves)
    return FixtureBundle(fix, mixture_alpha(fix))


def fixture_disjoint_supports() -> FixtureBundle:
    """Two moves whose transition sets never overlap."""
    states = tuple(MixtureState(0, (float(i),)) for i in range(3))
    target = np.array([0.25, 0.35, 0.4])
    t01 = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    t12 = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    moves = (
        FixtureMove(0, 0, "adhoc", np.array([1.0, 0.5, 0.0]), t01),
        FixtureMove(1, 1, "adhoc", np.array([0.0, 0.5, 1.0]), t12),
    )
    fix = FiniteFixture("disjoint-supports", states, target, moves)
    return FixtureBundle(fix, mixture_alpha(fix))


def fixture_adhoc_translation() -> FixtureBundle:
    """Two three-point spaces bridged by non-trivial translation functions."""
    space = register_mixture(("i", "i"))
    states = tuple(MixtureState(0, (i,)) for i in range(3)) + tuple(
        MixtureState(1, (i,)) for i in range(3)
    )
    target = np.array([0.10, 0.15, 0.05, 0.25, 0.30, 0.15])

    def kernel_rows(peaked_at):
        row = np.full(3, 0.2)
        row[peaked_at] = 0.6
        return row

    t_fwd = lambda s: MixtureState(1, ((int(s.coords[0]) + 1) % 3,))
    t_rev = lambda s: MixtureState(0, ((2 * int(s.coords[0])) % 3,))

    q_fwd = np.zeros((6, 6))
    q_rev = np.zeros((6, 6))
    for i in range(3):
        q_fwd[i, 3:] = kernel_rows((i + 1) % 3)
        q_fwd[3 + i, 3 + i] = 1.0  # unused rows stay stochastic
        q_rev[3 + i, :3] = kernel_rows((2 * i) % 3)
        q_rev[i, i] = 1.0
    beta_fwd = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
    moves = (
        FixtureMove(0, 1, "adhoc", beta_fwd, q_fwd),
        FixtureMove(1, 0, "adhoc", 1.0 - beta_fwd, q_rev),
    )
    fix = FiniteFixture("adhoc-translation", states, target, moves)

    def _aidx(s: MixtureState) -> int:
        return int(s.coords[0]) + (3 if s.space == 1 else 0)

    p = TargetDensity(lambda s: math.log(target[_aidx(s)]))

    def log_kernel(t_state, s_to):
        return math.log(kernel_rows(int(t_state.coords[0]))[int(s_to.coords[0])])

    dummy_propose = lambda s, rng: None
    dummy_ratio = lambda s, o: 0.0
    spec_moves = MoveSet(
        (
            MoveSpec(0, 1, "adhoc", lambda s: float(beta_fwd[_aidx(s)]),
                     dummy_propose, dummy_ratio,
                     log_kernel=log_kernel, translate=t_fwd),
            MoveSpec(1, 0, "adhoc", lambda s: 1.0 - float(beta_fwd[_aidx(s)]),
                     dummy_propose, dummy_ratio,
                     log_kernel=log_kernel, translate=t_rev),
        ),
        space=space,
    )

    def alpha(label, i, j):
        return acceptance_from_log_ratio(
            log_ratio_adhoc(p, spec_moves, label, states[i], states[j])
        )

    return FixtureBundle(fix, alpha)


def _posthoc_bundle(
    name: str,
    states: Tuple[MixtureState, ...],
    target: np.ndarray,
    beta_fwd: np.ndarray,
    aux_fwd: Dict[int, Sequence[Tuple[float, int, float]]],
    aux_rev: Dict[int, Sequence[Tuple[float, int, float]]],
) -> FixtureBundle:
    """Build a discrete post-hoc fixture from per-state aux atom lists.

    Each atom is (probability, image state index, paired reverse atom id);
    atom ids are positions in the list.  Counting reference measures make
    the correction factor 1.
    """
    s = len(states)
    idx = {st: i for i, st in enumerate(states)}

    def make_table(aux):
        table = np.zeros((s, s))
        for i in range(s):
            if i in aux:
                for prob, image, _ in aux[i]:
                    table[i, image] += prob
            else:
                table[i, i] = 1.0
        return table

    table_fwd = make_table(aux_fwd)
    table_rev = make_table(aux_rev)
    fix = FiniteFixture(
        name,
        states,
        target,
        (
            FixtureMove(0, 1, "posthoc", beta_fwd, table_fwd),
            FixtureMove(1, 0, "posthoc", 1.0 - beta_fwd, table_rev),
        ),
    )

    p = TargetDensity(lambda st: math.log(target[idx[st]]))

    def build_spec(aux, beta, label, reverse):
        def log_aux_kernel(st, u):
            prob = aux[idx[st]][int(u[0])][0]
            return math.log(prob) if prob > 0 else NEG_INF

        def transform(st, u):
            _, image, pair = aux[idx[st]][int(u[0])]
            return states[image], (float(pair),), 0.0

        def aux_values(st):
            return [(float(a),) for a in range(len(aux[idx[st]]))]

        def move_prob(st):
            return float(beta[idx[st]])

        return MoveSpec(
            label, reverse, "posthoc", move_prob, lambda s_, r: None,
            lambda s_, o: 0.0, log_aux_kernel=log_aux_kernel,
            transform=transform, aux_values=aux_values,
        )

    spec_moves = MoveSet(
        (
            build_spec(aux_fwd, beta_fwd, 0, 1),
            build_spec(aux_rev, 1.0 - beta_fwd, 1, 0),
        )
    )

    def alpha_expect(label, i, j):
        """Expectation (state-space) form: the summed-indicator ratio."""
        return acceptance_from_log_ratio(
            log_ratio_posthoc_discrete(p, spec_moves, label, states[i], states[j])
        )

    def alpha_aux(label, i, j):
        """Auxiliary-space form: q-weighted mean acceptance over the fiber."""
        aux = aux_fwd if label == 0 else aux_rev
        if i not in aux:
            return 0.0
        num = 0.0
        den = 0.0
        for atom, (prob, image, _) in enumerate(aux[i]):
            if image != j or prob == 0.0:
                continue
            lr = log_ratio_posthoc(p, spec_moves, label, states[i], (float(atom),))
            num += prob * acceptance_from_log_ratio(lr)
            den += prob
        return num / den if den > 0 else 0.0

    return FixtureBundle(fix, alpha_expect, {"aux": alpha_aux})


def fixture_posthoc_discrete() -> FixtureBundle:
    """Four states in two spaces, two-valued aux, bijective pairing."""
    states = (
        MixtureState(0, (0,)),
        MixtureState(0, (1,)),
        MixtureState(1, (0,)),
        MixtureState(1, (1,)),
    )
    target = np.array([0.1, 0.2, 0.3, 0.4])
    beta_fwd = np.array([1.0, 1.0, 0.0, 0.0])
    # atoms: (prob, image index, paired reverse atom)
    aux_fwd = {0: [(0.25, 2, 0), (0.75, 3, 0)], 1: [(0.5, 3, 1), (0.5, 2, 1)]}
    aux_rev = {2: [(0.6, 0, 0), (0.4, 1, 1)], 3: [(0.3, 0, 1), (0.7, 1, 0)]}
    return _posthoc_bundle(
        "posthoc-discrete", states, target, beta_fwd, aux_fwd, aux_rev
    )


def fixture_sdt_injective() -> FixtureBundle:
    """Deterministic forward collapse, injective stochastic reverse."""
    states = (MixtureState(0, (0,)), MixtureState(0, (1,)), MixtureState(1, (0,)))
    target = np.array([0.2, 0.3, 0.5])
    beta_fwd = np.array([1.0, 1.0, 0.0])
    aux_fwd = {0: [(1.0, 2, 0)], 1: [(1.0, 2, 1)]}
    aux_rev = {2: [(0.35, 0, 0), (0.65, 1, 0)]}
    return _posthoc_bundle("sdt-injective", states, target, beta_fwd, aux_fwd, aux_rev)


def fixture_sdt_noninjective() -> FixtureBundle:
    """Two-to-one aux map in both directions; acceptance varies on the fiber."""
    states = (MixtureState(0, ()), MixtureState(1, ()))
    target = np.array([0.5, 0.5])
    beta_fwd = np.array([1.0, 0.0])
    aux_fwd = {0: [(0.3, 1, 0), (0.7, 1, 1)]}
    aux_rev = {1: [(0.6, 0, 0), (0.4, 0, 1)]}
    return _posthoc_bundle(
        "sdt-noninjective", states, target, beta_fwd, aux_fwd, aux_rev
    )


def fixture_mwg_coordinate() -> FixtureBundle:
    """Binary coordinate pair; each move flips one coordinate in its fiber."""
    states = tuple(
        MixtureState(0, (a, b)) for a, b in itertools.product((0, 1), repeat=2)
    )
    weights = np.array([1.0, 2.0, 3.0, 4.0])
    target = weights / weights.sum()
    idx = {st: i for i, st in enumerate(states)}

    def flip(st, coord):
        c = list(st.coords)
        c[coord] = 1 - c[coord]
        return MixtureState(0, tuple(c))

    tables = []
    for coord in (0, 1):
        t = np.zeros((4, 4))
        for st in states:
            t[idx[st], idx[flip(st, coord)]] = 1.0
        tables.append(t)
    moves = (
        FixtureMove(0, 0, "mwg", np.full(4, 0.5), tables[0]),
        FixtureMove(1, 1, "mwg", np.full(4, 0.5), tables[1]),
    )
    fix = FiniteFixture("mwg-coordinate", states, target, moves)

    def alpha(label, i, j):
        lr = log_ratio_mwg(
            lambda g, s: math.log(target[idx[s]]),
            lambda s_from, s_to: 0.0,
            lambda s: 0.5,
            states[i],
            states[j],
            fiber=lambda s: s.coords[1 - label],
        )
        return acceptance_from_log_ratio(lr)

    return FixtureBundle(fix, alpha)


def fixture_negative_control() -> FixtureBundle:
    """Asymmetric move schedule whose beta factor is dropped from the ratio."""
    states = (MixtureState(0, (0,)), MixtureState(0, (1,)))
    target = np.array([0.5, 0.5])
    toggle = np.array([[0.0, 1.0], [1.0, 0.0]])
    stay = np.eye(2)
    moves = (
        FixtureMove(0, 0, "adhoc", np.array([0.8, 0.2]), toggle),
        FixtureMove(1, 1, "adhoc", np.array([0.2, 0.8]), stay),
    )
    fix = FiniteFixture("negative-control", states, target, moves)

    def corrupted_alpha(label, i, j):
        mv = fix.moves[label]
        rv = fix.moves[mv.reverse]
        num = target[j] * rv.table[j, i]
        den = target[i] * mv.table[i, j]
        if num <= 0.0 or den <= 0.0:
            return 0.0
        return min(1.0, num / den)

    return FixtureBundle(fix, corrupted_alpha, {"correct": mixture_alpha(fix)})


def builtin_fixtures() -> Dict[str, FixtureBundle]:
    return {
        "primal": fixture_primal(),
        "two-space": fixture_two_space_jump(),
        "four-state-overlap": fixture_four_state_overlap(),
        "disjoint-supports": fixture_disjoint_supports(),
        "adhoc-translation": fixture_adhoc_translation(),
        "posthoc-discrete": fixture_posthoc_discrete(),
        "sdt-injective": fixture_sdt_injective(),
        "sdt-noninjective": fixture_sdt_noninjective(),
        "mwg-coordinate": fixture_mwg_coordinate(),
        "negative-control": fixture_negative_control(),
    }


# ---------------------------------------------------------------------------
# Changepoint grid fixture: the arbiter for the birth/death ratio form
# ---------------------------------------------------------------------------

def build_changepoint_grid(
    data: Dataset,
    params: ModelParams,
    grid: Sequence[float],
    variant: str = "plain",
    ratio_form: str = "derived",
) -> FixtureBundle:
    """Exact finite-state version of the changepoint sampler.

    Heights live on ``grid``; height proposals and the height prior are
    renormalized over the grid, so the only approximation-free question
    left is whether the structural ratio (combinatorial, prior-odds and
    move-probability factors) preserves detailed balance.  ``ratio_form``
    'derived' uses the library ratios; 'unadjusted' substitutes the form
    without prior odds (negative control).
    """
    if variant not in ("plain", "adhoc"):
        raise ValueError("grid check supports plain and adhoc variants")
    n = data.n
    grid = tuple(float(g) for g in grid)
    g = len(grid)
    g_idx = {v: i for i, v in enumerate(grid)}
    stats = SegmentStats(data)
    schedule = MoveSchedule(n)
    v = params.height_prior_var
    tau2 = params.adhoc_var
    av = params.adjust_var

    def renorm_weights(center, var):
        w = np.array([math.exp(log_normal_pdf(x, center, var)) for x in grid])
        return w / w.sum(), math.log(w.sum())

    prior_w, log_z0 = renorm_weights(0.0, v)

    states: List[ChangepointState] = []
    for k in range(n):
        for cps in itertools.combinations(range(2, n + 1), k):
            for hs in itertools.product(grid, repeat=k + 1):
                states.append(ChangepointState(cps, hs))
    idx = {st: i for i, st in enumerate(states)}
    s = len(states)

    log_w = np.empty(s)
    for i, st in enumerate(states):
        k = st.count
        lp = k * math.log(params.q) + (n - 1 - k) * math.log1p(-params.q)
        for h in st.heights:
            lp += math.log(prior_w[g_idx[h]])
        log_w[i] = lp + log_likelihood(st, stats, params)
    m = log_w.max()
    target = np.exp(log_w - m)
    target /= target.sum()

    tables = [np.zeros((s, s)) for _ in range(4)]
    alphas = [np.zeros((s, s)) for _ in range(4)]
    betas = np.zeros((4, s))

    def death_core(st, i, h):
        if ratio_form == "unadjusted":
            return plain_death_ratio_unadjusted(st, i, h, stats, params, schedule)
        return _death_ratio(variant, st, i, h, stats, params, schedule)

    for i_st, st in enumerate(states):
        k = st.count
        pd, pb, ps, pa = schedule_probs(k, n)
        betas[:, i_st] = (pd, pb, ps, pa)
        bounds = (1,) + st.cps + (n + 1,)

        if k >= 1:
            # death rows
            for ci, pos in enumerate(st.cps):
                a, b = bounds[ci], bounds[ci + 2]
                if variant == "plain":
                    w_h, log_zd = prior_w, log_z0
                else:
                    w_h, log_zd = renorm_weights(segment_mean(stats, a, b), tau2)
                for h in grid:
                    new = ChangepointState(
                        st.cps[:ci] + st.cps[ci + 1 :],
                        st.heights[:ci] + (h,) + st.heights[ci + 2 :],
                    )
                    j_st = idx[new]
                    q = (1.0 / k) * w_h[g_idx[h]]
                    lr = death_core(st, pos, h)
                    if variant == "adhoc" and ratio_form == "derived":
                        _, log_z1 = renorm_weights(segment_mean(stats, a, pos), tau2)
                        _, log_z2 = renorm_weights(segment_mean(stats, pos, b), tau2)
                        lr += log_z0 + log_zd - log_z1 - log_z2
                    _acc_into(tables[DEATH], alphas[DEATH], i_st, j_st, q,
                              acceptance_from_log_ratio(lr))
            # shift rows
            for ci, pos in enumerate(st.cps):
                a, b = bounds[ci], bounds[ci + 2]
                width = b - a - 1
                for j_pos in range(a + 1, b):
                    new = ChangepointState(
                        st.cps[:ci] + (j_pos,) + st.cps[ci + 1 :], st.heights
                    )
                    q = 1.0 / k / width
                    lr = (
                        0.0
                        if j_pos == pos
                        else shift_ratio(st, ci, pos, j_pos, stats, params)
                    )
                    _acc_into(tables[SHIFT], alphas[SHIFT], i_st, idx[new], q,
                              acceptance_from_log_ratio(lr))
        if k < n - 1:
            # birth rows
            taken = set(st.cps)
            free = [p_ for p_ in range(2, n + 1) if p_ not in taken]
            for pos in free:
                ci = int(np.searchsorted(np.asarray(st.cps), pos))
                a = st.cps[ci - 1] if ci > 0 else 1
                b = st.cps[ci] if ci < k else n + 1
                if variant == "plain":
                    w1, log_z1 = prior_w, log_z0
                    w2, log_z2 = prior_w, log_z0
                else:
                    w1, log_z1 = renorm_weights(segment_mean(stats, a, pos), tau2)
                    w2, log_z2 = renorm_weights(segment_mean(stats, pos, b), tau2)
                for h1 in grid:
                    for h2 in grid:
                        new = ChangepointState(
                            st.cps[:ci] + (pos,) + st.cps[ci:],
                            st.heights[:ci] + (h1, h2) + st.heights[ci + 1 :],
                        )
                        q = w1[g_idx[h1]] * w2[g_idx[h2]] / len(free)
                        lr = -death_core(new, pos, st.heights[ci])
                        if variant == "adhoc" and ratio_form == "derived":
                            _, log_zd = renorm_weights(
                                segment_mean(stats, a, b), tau2
                            )
                            lr -= log_z0 + log_zd - log_z1 - log_z2
                        _acc_into(tables[BIRTH], alphas[BIRTH], i_st, idx[new], q,
                                  acceptance_from_log_ratio(lr))
        # adjust rows
        for si in range(k + 1):
            a, b = bounds[si], bounds[si + 1]
            h_old = st.heights[si]
            w_h, log_z_old = renorm_weights(h_old, av)
            for h_new in grid:
                new = ChangepointState(
                    st.cps, st.heights[:si] + (h_new,) + st.heights[si + 1 :]
                )
                q = w_h[g_idx[h_new]] / (k + 1)
                _, log_z_new = renorm_weights(h_new, av)
                lr = (
                    adjust_ratio(st, si, h_old, h_new, stats, params)
                    + log_z_old
                    - log_z_new
                )
                _acc_into(tables[ADJUST], alphas[ADJUST], i_st, idx[new], q,
                          acceptance_from_log_ratio(lr))

    for lab in range(4):
        rows = tables[lab].sum(axis=1)
        for i_st in range(s):
            missing = 1.0 - rows[i_st]
            tables[lab][i_st, i_st] += missing  # moves undefined at this state

    mix_states = tuple(
        MixtureState(st.count, st.cps + st.heights) for st in states
    )
    fix = FiniteFixture(
        f"changepoint-grid-{variant}-{ratio_form}",
        mix_states,
        target,
        tuple(
            FixtureMove(lab, (BIRTH, DEATH, SHIFT, ADJUST)[lab], "adhoc",
                        betas[lab], tables[lab])
            for lab in range(4)
        ),
    )

    def alpha(label, i, j):
        return float(alphas[label][i, j])

    return FixtureBundle(fix, alpha)


def _acc_into(table, alpha_tab, i, j, q, a):
    """Accumulate proposal mass q with acceptance a into (i, j)."""
    if q == 0.0:
        return
    prev = table[i, j]
    alpha_tab[i, j] = (alpha_tab[i, j] * prev + a * q) / (prev + q)
    table[i, j] = prev + q


# ---------------------------------------------------------------------------
# Exact changepoint posterior by enumeration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChangepointPosterior:
    configs: Tuple[Tuple[int, ...], ...]
    log_position_prior: np.ndarray
    log_evidence: np.ndarray
    probs: np.ndarray
    count_probs: np.ndarray


def _segment_log_evidence(stats, a, b, obs_var, prior_var):
    """Closed-form marginal likelihood of one segment, N(0, prior_var) mean."""
    m = b - a
    s1 = stats.seg_sum(a, b)
    s2 = stats.seg_sumsq(a, b)
    return (
        -0.5 * m * math.log(2.0 * math.pi)
        - 0.5 * (m - 1) * math.log(obs_var)
        - 0.5 * math.log(obs_var + m * prior_var)
        - s2 / (2.0 * obs_var)
        + prior_var * s1 * s1 / (2.0 * obs_var * (obs_var + m * prior_var))
    )


def enumerate_changepoint_posterior(
    data: Dataset, params: ModelParams
) -> ChangepointPosterior:
    """Exact posterior over the 2^(n-1) changepoint configurations."""
    n = data.n
    if n > 12:
        raise ValueError("enumeration supports n <= 12")
    stats = SegmentStats(data)
    configs = []
    log_prior_pos = []
    log_ev = []
    for k in range(n):
        for cps in itertools.combinations(range(2, n + 1), k):
            configs.append(cps)
            lp = k * math.log(params.q) + (n - 1 - k) * math.log1p(-params.q)
            log_prior_pos.append(lp)
            bounds = (1,) + cps + (n + 1,)
            ev = lp
            for a, b in zip(bounds[:-1], bounds[1:]):
                ev += _segment_log_evidence(
                    stats, a, b, params.obs_var, params.height_prior_var
                )
            log_ev.append(ev)
    log_ev = np.array(log_ev)
    m = log_ev.max()
    probs = np.exp(log_ev - m)
    probs /= probs.sum()
    count_probs = np.zeros(n)
    for cfg, p in zip(configs, probs):
        count_probs[len(cfg)] += p
    return ChangepointPosterior(
        configs=tuple(configs),
        log_position_prior=np.array(log_prior_pos),
        log_evidence=log_ev,
        probs=probs,
        count_probs=count_probs,
    )


# ---------------------------------------------------------------------------
# Numeric Jacobians
# ---------------------------------------------------------------------------

def numeric_jacobian(
    transform: Callable[[np.ndarray], np.ndarray],
    point: Sequence[float],
    eps: float = 1e-5,
) -> float:
    """Central-difference determinant estimate of a smooth R^k -> R^k map."""
    x = np.asarray(point, dtype=np.float64)
    k = x.size
    jac = np.empty((k, k))
    for q in range(k):
        h = eps * max(1.0, abs(x[q]))
        xp = x.copy()
        xm = x.copy()
        xp[q] += h
        xm[q] -= h
        jac[:, q] = (np.asarray(transform(xp)) - np.asarray(transform(xm))) / (2.0 * h)
    if not np.all(np.isfinite(jac)):
        raise ValueError("transform returned non-finite values near the point")
    if np.linalg.cond(jac) > 1e12:
        raise ValueError("Jacobian estimate is singular or ill-conditioned")
    return float(np.linalg.det(jac))
