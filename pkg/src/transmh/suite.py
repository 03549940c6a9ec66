"""The validation suite behind ``transmh --validate``.

Every check prints one PASS/FAIL line; a fresh checkout passes all of
them.  Negative controls are phrased so that PASS means the corruption
was detected (the corrupted kernel does violate balance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Tuple

import numpy as np

from .changepoint.fast import run_fast_chain
from .changepoint.model import (
    ChangepointState,
    ModelParams,
    SegmentStats,
    generate_dataset,
)
from .changepoint.moves import (
    MoveSchedule,
    VARIANTS,
    _remove_changepoint,
    adhoc_death_ratio,
    birth_ratio,
    build_moves,
    merge_heights,
    plain_death_ratio,
    posthoc_death_ratio,
    schedule_probs,
    split_heights,
)
from .kernel import ChainConfig
from .oracle import (
    assemble_kernel,
    build_changepoint_grid,
    builtin_fixtures,
    check_detailed_balance,
    compare_pairwise_vs_maximal,
    enumerate_changepoint_posterior,
    numeric_jacobian,
)
from .rng import make_rng

BALANCE_TOL = 1e-12
NEGATIVE_CONTROL_TOL = 1e-6


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def batch_means_stderr(x: np.ndarray, n_batches: int = 100) -> float:
    """Monte-Carlo standard error of the mean by batch means.

    Robust to autocorrelation; returns 0.0 for degenerate (constant)
    series, so callers should apply a resolution floor.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n < 2 * n_batches:
        n_batches = max(2, n // 2)
    m = n // n_batches
    means = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


# ---------------------------------------------------------------------------
# Individual checks
# ---------------------------------------------------------------------------

def _balance_checks() -> List[CheckResult]:
    out = []
    for name, bundle in builtin_fixtures().items():
        if name == "negative-control":
            corrupted = check_detailed_balance(
                bundle.fixture, assemble_kernel(bundle.fixture, bundle.alpha)
            ).max_residual
            correct = check_detailed_balance(
                bundle.fixture,
                assemble_kernel(bundle.fixture, bundle.alt_alphas["correct"]),
            ).max_residual
            out.append(
                CheckResult(
                    "negative-control-beta-dropped",
                    corrupted > NEGATIVE_CONTROL_TOL and correct <= BALANCE_TOL,
                    f"corrupted residual {corrupted:.3e} (expected > 1e-6), "
                    f"correct {correct:.3e}",
                )
            )
            continue
        residual = check_detailed_balance(
            bundle.fixture, assemble_kernel(bundle.fixture, bundle.alpha)
        ).max_residual
        worst = residual
        for alt in bundle.alt_alphas.values():
            worst = max(
                worst,
                check_detailed_balance(
                    bundle.fixture, assemble_kernel(bundle.fixture, alt)
                ).max_residual,
            )
        out.append(
            CheckResult(
                f"balance-{name}", worst <= BALANCE_TOL, f"max residual {worst:.3e}"
            )
        )
    return out


def _grid_checks() -> List[CheckResult]:
    data = generate_dataset(4, (3,), (-1.0, 1.0), 1.0, seed=5)
    params = ModelParams(q=0.3)
    grid = (-2.0, -1.0, 0.0, 1.0, 2.0)
    out = []
    for variant in ("plain", "adhoc"):
        b = build_changepoint_grid(data, params, grid, variant, "derived")
        r = check_detailed_balance(b.fixture, assemble_kernel(b.fixture, b.alpha))
        out.append(
            CheckResult(
                f"balance-changepoint-grid-{variant}",
                r.max_residual <= BALANCE_TOL,
                f"max residual {r.max_residual:.3e}",
            )
        )
    b = build_changepoint_grid(data, params, grid, "plain", "unadjusted")
    r = check_detailed_balance(b.fixture, assemble_kernel(b.fixture, b.alpha))
    out.append(
        CheckResult(
            "negative-control-prior-odds",
            r.max_residual > NEGATIVE_CONTROL_TOL,
            f"residual without prior odds {r.max_residual:.3e} (expected > 1e-6)",
        )
    )
    return out


def _maximality_checks() -> List[CheckResult]:
    out = []
    fixtures = builtin_fixtures()
    worst_gap = 0.0
    for name in ("four-state-overlap", "disjoint-supports", "posthoc-discrete"):
        b = fixtures[name]
        alpha = b.alt_alphas.get("aux", b.alpha)
        pw, mx, mask = compare_pairwise_vs_maximal(b.fixture, alpha)
        worst_gap = min(worst_gap, float((mx - pw)[mask].min()))
    out.append(
        CheckResult(
            "maximal-dominance",
            worst_gap >= -BALANCE_TOL,
            f"min(maximal - pairwise) = {worst_gap:.3e}",
        )
    )

    b = fixtures["four-state-overlap"]
    pw, mx, mask = compare_pairwise_vs_maximal(b.fixture, b.alpha)
    gap = float((mx - pw)[mask].max())
    out.append(
        CheckResult(
            "maximal-strict-gap-overlap",
            gap > 1e-3,
            f"largest overlap gap {gap:.3e}",
        )
    )

    b = fixtures["disjoint-supports"]
    pw, mx, mask = compare_pairwise_vs_maximal(b.fixture, b.alpha)
    dev = float(np.abs((mx - pw)[mask]).max())
    out.append(
        CheckResult(
            "maximal-equality-disjoint", dev <= BALANCE_TOL, f"max |gap| {dev:.3e}"
        )
    )

    b = fixtures["sdt-injective"]
    pw, mx, mask = compare_pairwise_vs_maximal(b.fixture, b.alt_alphas["aux"])
    dev = float(np.abs((mx - pw)[mask]).max())
    out.append(
        CheckResult(
            "maximal-collapse-sdt-injective",
            dev <= BALANCE_TOL,
            f"aux acceptance vs maximal: max |gap| {dev:.3e}",
        )
    )

    b = fixtures["sdt-noninjective"]
    pw, mx, mask = compare_pairwise_vs_maximal(b.fixture, b.alt_alphas["aux"])
    gap = float((mx - pw)[mask].max())
    out.append(
        CheckResult(
            "maximal-gap-sdt-noninjective",
            gap > 1e-3,
            f"aux acceptance below maximal by up to {gap:.3e}",
        )
    )
    return out


def _jacobian_checks() -> List[CheckResult]:
    rng = make_rng(77)
    worst = 0.0
    for _ in range(100):
        n1 = int(rng.integers(1, 50))
        n2 = int(rng.integers(1, 50))
        point = rng.normal(0.0, 3.0, size=2)

        def split_map(x, n1=n1, n2=n2):
            h, u = merge_heights(x[0], x[1], n1, n2)
            return np.array([h, u])

        det = numeric_jacobian(split_map, point)
        worst = max(worst, abs(det - n1 / (n1 + n2)))
    c1 = CheckResult(
        "jacobian-split-map", worst <= 1e-6, f"max |det error| {worst:.3e}"
    )

    def conv_map(x):
        s, u1, u2 = x
        return np.array([u1 + u2, s - u2, u2])

    worst = 0.0
    for _ in range(100):
        det = numeric_jacobian(conv_map, rng.normal(0.0, 2.0, size=3))
        worst = max(worst, abs(abs(det) - 1.0))
    c2 = CheckResult(
        "jacobian-convolution-map", worst <= 1e-6, f"max ||det|-1| {worst:.3e}"
    )
    return [c1, c2]


def _posterior_checks(mcmc_samples: int = 200_000) -> List[CheckResult]:
    out = []
    # prior over configurations is a proper distribution
    data5 = generate_dataset(5, (3,), (0.0, 1.0), 1.0, seed=9)
    params = ModelParams(q=3.0 / 550.0)
    post = enumerate_changepoint_posterior(data5, params)
    total = float(np.exp(post.log_position_prior).sum())
    out.append(
        CheckResult(
            "posterior-prior-normalizes",
            abs(total - 1.0) <= 1e-10 and abs(float(post.probs.sum()) - 1.0) <= 1e-10,
            f"sum of config priors {total!r}",
        )
    )

    # MCMC count posterior vs enumeration, all variants
    data6 = generate_dataset(6, (4,), (-1.0, 1.5), 1.0, seed=11)
    params6 = ModelParams(q=0.25)
    exact = enumerate_changepoint_posterior(data6, params6).count_probs
    thin = 5
    cfg = ChainConfig(
        iterations=20_000 + thin * mcmc_samples, burnin=20_000, thin=thin, seed=123
    )
    worst = 0.0
    ok = True
    for variant in VARIANTS:
        _, hist, series = run_fast_chain(
            data6, params6, variant, cfg, return_counts=True
        )
        n_samples = series.size
        freqs = hist / hist.sum()
        for c in range(6):
            se = max(batch_means_stderr(series == c), 1.0 / n_samples)
            dev = abs(freqs[c] - exact[c]) / se
            worst = max(worst, dev)
            ok = ok and dev <= 3.0
    out.append(
        CheckResult(
            "posterior-mcmc-agreement",
            ok,
            f"worst |freq - exact| = {worst:.2f} standard errors (limit 3)",
        )
    )
    return out


def _structure_checks(cases: int = 10_000) -> List[CheckResult]:
    out = []
    rng = make_rng(4242)

    # involution over the changepoint move sets and random pairings
    data = generate_dataset(6, (4,), (0.0, 1.0), 1.0, seed=2)
    params = ModelParams(q=0.25)
    ok = True
    for variant in VARIANTS:
        moves = build_moves(data, params, variant)
        ok = ok and all(
            moves[moves[lbl].reverse].reverse == lbl for lbl in range(len(moves))
        )
    for _ in range(cases):
        m = int(rng.integers(1, 9))
        perm = rng.permutation(m)
        pairing = np.empty(m, dtype=int)
        pairing[perm[: m // 2]] = perm[m - m // 2 :]
        pairing[perm[m - m // 2 :]] = perm[: m // 2]
        if m % 2:
            pairing[perm[m // 2]] = perm[m // 2]
        ok = ok and np.array_equal(pairing[pairing], np.arange(m))
    out.append(CheckResult("move-involution", ok, f"{cases} randomized pairings"))

    # schedule normalization
    worst = 0.0
    for _ in range(cases):
        n = int(rng.integers(2, 300))
        k = int(rng.integers(0, n))
        worst = max(worst, abs(sum(schedule_probs(k, n)) - 1.0))
    out.append(
        CheckResult(
            "schedule-normalization", worst <= 1e-12, f"max |sum - 1| {worst:.1e}"
        )
    )

    # birth/death ratio negation on random states
    data = generate_dataset(30, (10, 20), (0.0, 1.5, -1.0), 1.0, seed=3)
    stats = SegmentStats(data)
    params = ModelParams(q=0.1)
    schedule = MoveSchedule(30)
    worst = 0.0
    for _ in range(cases):
        state = _random_state(rng, 30)
        if state.count == 0:
            continue
        ci = int(rng.integers(state.count))
        i = state.cps[ci]
        h1, h2 = state.heights[ci], state.heights[ci + 1]
        for variant in VARIANTS:
            if variant == "posthoc":
                d = posthoc_death_ratio(state, i, stats, params, schedule)
                h, _ = merge_heights(
                    h1, h2, i - _left(state, ci), _right(state, ci, 30) - i
                )
            else:
                h = float(rng.normal(0.0, 2.0))
                fn = plain_death_ratio if variant == "plain" else adhoc_death_ratio
                d = fn(state, i, h, stats, params, schedule)
            after = _remove_changepoint(state, i, h)
            b = birth_ratio(variant, after, i, h1, h2, stats, params, schedule)
            worst = max(worst, abs(d + b))
    out.append(
        CheckResult(
            "birth-death-negation", worst <= 1e-9, f"max |death + birth| {worst:.1e}"
        )
    )

    # post-hoc transform round trip (exact in rational arithmetic)
    worst_f = 0.0
    exact_ok = True
    for case in range(cases):
        n1 = int(rng.integers(1, 60))
        n2 = int(rng.integers(1, 60))
        h = float(rng.normal(0.0, 3.0))
        u = float(rng.normal(0.0, 3.0))
        h1, h2 = split_heights(h, u, n1, n2)
        h_back, u_back = merge_heights(h1, h2, n1, n2)
        worst_f = max(worst_f, abs(h_back - h), abs(u_back - u))
        if case % 100 == 0:
            hf, uf = Fraction(h), Fraction(u)
            h1f, h2f = split_heights(hf, uf, n1, n2)
            back = merge_heights(h1f, h2f, n1, n2)
            exact_ok = exact_ok and back == (hf, uf)
    out.append(
        CheckResult(
            "transform-round-trip",
            worst_f <= 1e-12 and exact_ok,
            f"float drift {worst_f:.1e}; exact rational round trips hold",
        )
    )
    return out


def _left(state: ChangepointState, ci: int) -> int:
    return state.cps[ci - 1] if ci > 0 else 1


def _right(state: ChangepointState, ci: int, n: int) -> int:
    return state.cps[ci + 1] if ci < state.count - 1 else n + 1


def _random_state(rng: np.random.Generator, n: int) -> ChangepointState:
    k = int(rng.integers(0, 6))
    cps = tuple(sorted(rng.choice(np.arange(2, n + 1), size=k, replace=False).tolist()))
    heights = tuple(float(h) for h in rng.normal(0.0, 3.0, size=k + 1))
    return ChangepointState(cps, heights)


def run_validation_suite(
    mcmc_samples: int = 200_000, fuzz_cases: int = 10_000
) -> Tuple[List[CheckResult], bool]:
    """Run every oracle check; returns (results, all_passed)."""
    results: List[CheckResult] = []
    results += _balance_checks()
    results += _grid_checks()
    results += _maximality_checks()
    results += _jacobian_checks()
    results += _posterior_checks(mcmc_samples)
    results += _structure_checks(fuzz_cases)
    return results, all(r.passed for r in results)
