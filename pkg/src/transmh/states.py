"""Mixture state spaces, target densities and the move abstraction.

A mixture space is a disjoint union of component spaces, each with its own
coordinate schema.  States carry a space tag plus a flat coordinate tuple.
Reference measures are implicit in the schema: real coordinates are
Lebesgue, integer coordinates are counting measure.  All densities are
handled in log space; ``-inf`` uniformly encodes "outside support".
"""

from __future__ import annotations

from dataclasses import dataclass
from numbers import Integral, Real
from typing import Callable, Hashable, Optional, Sequence, Tuple

import numpy as np

Coords = Tuple[float, ...]
Aux = Tuple[float, ...]

NEG_INF = float("-inf")

#: recognised move kinds; drives which optional MoveSpec fields must be set
MOVE_KINDS = ("primal", "adhoc", "posthoc", "mwg")


@dataclass(frozen=True)
class MixtureState:
    """A point in one component space: space index plus coordinates.

    States are immutable values; proposals construct new states.  States
    from different spaces never compare equal (the space tag differs).
    """

    space: int
    coords: Coords = ()

    def __post_init__(self):
        if not isinstance(self.coords, tuple):
            object.__setattr__(self, "coords", tuple(self.coords))


@dataclass(frozen=True)
class MixtureSpace:
    """Registry of per-space coordinate schemas.

    A schema is a string over {'i', 'r'}: one character per coordinate,
    'i' for integer (counting reference), 'r' for real (Lebesgue
    reference).  Space ids are the contiguous range 0..D-1.
    """

    schemas: Tuple[str, ...]

    @property
    def n_spaces(self) -> int:
        return len(self.schemas)

    def schema(self, space: int) -> str:
        return self.schemas[space]


def register_mixture(schemas: Sequence[str]) -> MixtureSpace:
    """Register a mixture of component spaces from coordinate schemas."""
    schemas = tuple(schemas)
    if not schemas:
        raise ValueError("a mixture needs at least one component space")
    for s in schemas:
        if any(ch not in "ir" for ch in s):
            raise ValueError(f"schema {s!r}: coordinates must be 'i' or 'r'")
    return MixtureSpace(schemas)


def validate_state(space: MixtureSpace, s: MixtureState) -> bool:
    """True iff ``s`` conforms to the schema of its tagged space."""
    if not 0 <= s.space < space.n_spaces:
        return False
    schema = space.schemas[s.space]
    if len(s.coords) != len(schema):
        return False
    for kind, c in zip(schema, s.coords):
        if isinstance(c, bool):
            return False
        if kind == "i":
            if not isinstance(c, Integral) and not (
                isinstance(c, (float, np.floating)) and float(c).is_integer()
            ):
                return False
        else:
            if not isinstance(c, Real) or not np.isfinite(float(c)):
                return False
    return True


@dataclass(frozen=True)
class TargetDensity:
    """Log-density of the target distribution, unnormalized permitted.

    ``log_density`` must be deterministic and return ``-inf`` exactly on
    states outside the support.
    """

    log_density: Callable[[MixtureState], float]

    def __call__(self, s: MixtureState) -> float:
        return float(self.log_density(s))


@dataclass(frozen=True)
class ProposalOutcome:
    """Result of one proposal draw.

    ``aux`` is the auxiliary point u' of a post-hoc move (present iff the
    generating move is post-hoc kind; the deterministic direction uses an
    empty tuple).  ``log_correction`` is the log density-correction factor
    of the transform (log Jacobian in the smooth case), zero by default.
    """

    proposed: MixtureState
    aux: Optional[Aux] = None
    log_correction: float = 0.0


@dataclass(frozen=True)
class MoveSpec:
    """One mixture component: sampler, ratio evaluator and metadata.

    ``log_ratio`` returns the full log acceptance ratio of a realized
    transition (target, proposal, move-probability and correction terms
    included); the kernel applies min{1, exp(.)}.

    The optional fields expose the densities/structure the generic ratio
    evaluators need for the respective kind:

    * ``log_kernel(s_from, s_to)`` -- log proposal kernel density on the
      target space (primal / mixture / ad-hoc / MwG moves).
    * ``translate(s)`` -- ad-hoc translation applied before conditioning
      the kernel (identity when omitted).
    * ``log_aux_kernel(s, u)`` -- log density of the auxiliary draw of a
      post-hoc move.
    * ``transform(s, u)`` -- post-hoc pairing: returns the image state,
      the paired reverse auxiliary point, and the log correction factor.
    * ``aux_values(s)`` -- enumerable auxiliary support (discrete
      post-hoc only).
    * ``fiber(s)`` -- the conditioning statistic of an MwG move; proposals
      must stay inside its level set.
    """

    label: int
    reverse: int
    kind: str
    move_prob: Callable[[MixtureState], float]
    propose: Callable[[MixtureState, np.random.Generator], ProposalOutcome]
    log_ratio: Callable[[MixtureState, ProposalOutcome], float]
    log_kernel: Optional[Callable[[MixtureState, MixtureState], float]] = None
    translate: Optional[Callable[[MixtureState], MixtureState]] = None
    log_aux_kernel: Optional[Callable[[MixtureState, Aux], float]] = None
    transform: Optional[
        Callable[[MixtureState, Aux], Tuple[MixtureState, Aux, float]]
    ] = None
    aux_values: Optional[Callable[[MixtureState], Sequence[Aux]]] = None
    fiber: Optional[Callable[[MixtureState], Hashable]] = None

    def __post_init__(self):
        if self.kind not in MOVE_KINDS:
            raise ValueError(f"unknown move kind {self.kind!r}")


@dataclass(frozen=True)
class MoveSet:
    """Registered move set with its reverse-move bijection.

    Labels must be the contiguous range 0..|M|-1 in registration order and
    the reverse map must be an involution.  ``space`` is optional; when
    present the chain driver validates every proposed state against it.
    """

    moves: Tuple[MoveSpec, ...]
    space: Optional[MixtureSpace] = None

    def __post_init__(self):
        for idx, mv in enumerate(self.moves):
            if mv.label != idx:
                raise ValueError(f"move at index {idx} has label {mv.label}")
            if not 0 <= mv.reverse < len(self.moves):
                raise ValueError(f"move {idx}: reverse label {mv.reverse} out of range")
        for mv in self.moves:
            if self.moves[mv.reverse].reverse != mv.label:
                raise ValueError(
                    f"reverse map is not an involution at label {mv.label}"
                )

    def __len__(self) -> int:
        return len(self.moves)

    def __getitem__(self, label: int) -> MoveSpec:
        return self.moves[label]

    def reverse_of(self, label: int) -> MoveSpec:
        return self.moves[self.moves[label].reverse]


def reverse_move(moves: MoveSet, label: int) -> int:
    """Return the reverse move label r_label of a registered move."""
    if not 0 <= label < len(moves):
        raise ValueError(f"unregistered move label {label}")
    return moves[label].reverse
