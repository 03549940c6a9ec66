"""Gaussian changepoint model: piecewise-constant mean, known variance.

Observations y_1..y_n are independent N(h_seg, obs_var) with the mean
constant between changepoints.  Interior changepoints live at positions
{2..n}; positions 1 and n+1 are the immutable boundaries.  The position
prior is an independent Bernoulli(q) indicator per interior position
(the product form of geometric gap lengths), and every segment height is
N(0, height_prior_var) a priori.

Segment boundaries are 1-based throughout: the segment [a, b) covers
observations y_a .. y_{b-1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from ..rng import make_rng

LOG_2PI = math.log(2.0 * math.pi)


def log_normal_pdf(x: float, mean: float, var: float) -> float:
    """Log density of N(mean, var) at x."""
    d = x - mean
    return -0.5 * (LOG_2PI + math.log(var) + d * d / var)


@dataclass(frozen=True)
class Dataset:
    """Observation sequence; values must be finite, length >= 1."""

    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        if y.ndim != 1 or y.size < 1:
            raise ValueError("dataset must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(y)):
            raise ValueError("dataset contains non-finite values")
        y = y.copy()
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return int(self.y.size)


@dataclass(frozen=True)
class ChangepointState:
    """Sorted interior changepoint positions plus one height per segment."""

    cps: Tuple[int, ...]
    heights: Tuple[float, ...]

    def __post_init__(self):
        if len(self.heights) != len(self.cps) + 1:
            raise ValueError("need exactly one height per segment")
        if any(b <= a for a, b in zip(self.cps, self.cps[1:])):
            raise ValueError("changepoint positions must be strictly increasing")

    @property
    def count(self) -> int:
        return len(self.cps)


def validate_positions(state: ChangepointState, n: int) -> bool:
    """True iff all interior positions fall in {2..n}."""
    return all(2 <= p <= n for p in state.cps)


@dataclass(frozen=True)
class ModelParams:
    """Model and proposal parameters of the benchmark."""

    q: float = 3.0 / 550.0
    height_prior_var: float = 25.0
    obs_var: float = 1.0
    adjust_var: float = 0.5
    adhoc_var: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError("q must lie in (0, 1)")
        for name in ("height_prior_var", "obs_var", "adjust_var", "adhoc_var"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


class SegmentStats:
    """Prefix sums of y and y^2 for O(1) segment statistics."""

    def __init__(self, data: Dataset):
        y = data.y
        self.n = data.n
        self.prefix_sum = np.concatenate(([0.0], np.cumsum(y)))
        self.prefix_sumsq = np.concatenate(([0.0], np.cumsum(y * y)))

    def seg_sum(self, a: int, b: int) -> float:
        """Sum of y_a..y_{b-1} (1-based, half-open)."""
        return float(self.prefix_sum[b - 1] - self.prefix_sum[a - 1])

    def seg_sumsq(self, a: int, b: int) -> float:
        return float(self.prefix_sumsq[b - 1] - self.prefix_sumsq[a - 1])


def segment_mean(stats: SegmentStats, a: int, b: int) -> float:
    """Arithmetic mean of y_a..y_{b-1}."""
    if a >= b:
        raise ValueError(f"empty segment [{a}, {b})")
    return stats.seg_sum(a, b) / (b - a)


def segment_loglik(stats: SegmentStats, a: int, b: int, h: float, obs_var: float) -> float:
    """Log likelihood of segment [a, b) under constant mean h."""
    m = b - a
    s1 = stats.seg_sum(a, b)
    s2 = stats.seg_sumsq(a, b)
    return -0.5 * m * (LOG_2PI + math.log(obs_var)) - (
        s2 - 2.0 * h * s1 + m * h * h
    ) / (2.0 * obs_var)


def log_likelihood(state: ChangepointState, stats: SegmentStats, params: ModelParams) -> float:
    """Full data log likelihood via prefix sums."""
    bounds = (1,) + state.cps + (stats.n + 1,)
    total = 0.0
    for a, b, h in zip(bounds[:-1], bounds[1:], state.heights):
        total += segment_loglik(stats, a, b, h, params.obs_var)
    return total


def log_prior(state: ChangepointState, params: ModelParams, n: int) -> float:
    """Bernoulli(q) position indicators plus iid Gaussian heights."""
    c = state.count
    lp = c * math.log(params.q) + (n - 1 - c) * math.log1p(-params.q)
    for h in state.heights:
        lp += log_normal_pdf(h, 0.0, params.height_prior_var)
    return lp


def log_L(
    stats: SegmentStats,
    params: ModelParams,
    a: int,
    i: int,
    b: int,
    h: float,
    h1: float,
    h2: float,
) -> float:
    """Log likelihood ratio of merging [a,i) + [i,b) into [a,b).

    Numerator: segment [a,b) at height h; denominator: [a,i) at h1 and
    [i,b) at h2.
    """
    if not a < i < b:
        raise ValueError(f"degenerate split a={a}, i={i}, b={b}")
    return (
        segment_loglik(stats, a, b, h, params.obs_var)
        - segment_loglik(stats, a, i, h1, params.obs_var)
        - segment_loglik(stats, i, b, h2, params.obs_var)
    )


# ---------------------------------------------------------------------------
# Dataset generation and file IO
# ---------------------------------------------------------------------------

def generate_dataset(
    n: int,
    true_cps: Sequence[int],
    true_means: Sequence[float],
    obs_var: float,
    seed: int,
) -> Dataset:
    """Piecewise-constant-mean Gaussian data with the given changepoints."""
    true_cps = tuple(int(p) for p in true_cps)
    true_means = tuple(float(m) for m in true_means)
    if len(true_means) != len(true_cps) + 1:
        raise ValueError("need exactly one mean per segment")
    if any(not 2 <= p <= n for p in true_cps) or any(
        b <= a for a, b in zip(true_cps, true_cps[1:])
    ):
        raise ValueError("changepoints must be strictly increasing within {2..n}")
    rng = make_rng(seed)
    y = np.empty(n)
    bounds = (1,) + true_cps + (n + 1,)
    for a, b, m in zip(bounds[:-1], bounds[1:], true_means):
        y[a - 1 : b - 1] = m + math.sqrt(obs_var) * rng.standard_normal(b - a)
    return Dataset(y)


# Canonical benchmark instance: 9 evenly spread changepoints, means inside
# the +-3 band with ~1 sigma jumps (tuned so the long-run acceptance-rate
# bands hold; see tests/test_acceptance.py).
BENCHMARK_N = 550
BENCHMARK_CPS = (56, 111, 166, 221, 276, 331, 386, 441, 496)
BENCHMARK_MEANS = (0.0, 1.0, 0.1, 1.2, 0.2, -0.9, 0.1, -1.1, -0.2, 0.8)
BENCHMARK_SEED = 20240550


def benchmark_dataset() -> Dataset:
    """The shipped seeded benchmark instance (also at data/benchmark_n550.txt)."""
    return generate_dataset(
        BENCHMARK_N, BENCHMARK_CPS, BENCHMARK_MEANS, obs_var=1.0, seed=BENCHMARK_SEED
    )


def save_dataset(path: str, data: Dataset, header: str | None = None) -> None:
    """One observation per line in decimal notation; '#' lines are comments."""
    with open(path, "w") as fh:
        if header:
            fh.write(f"# {header}\n")
        for v in data.y:
            fh.write(f"{float(v)!r}\n")


def load_dataset(path: str) -> Dataset:
    values = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            values.append(float(line))
    return Dataset(np.array(values))
