"""Acceptance criteria.

One test per criterion; each prints a single PASS/FAIL line (run with
``pytest tests/test_acceptance.py -v -s``) before asserting, so the
verdict is visible either way.  Criteria 1-2 share one set of 1e7
benchmark runs per variant on the shipped dataset.
"""

import pathlib
import time

import numpy as np
import pytest

from transmh.changepoint.fast import run_fast_chain
from transmh.changepoint.model import ModelParams, generate_dataset, load_dataset
from transmh.changepoint.moves import VARIANTS
from transmh.kernel import ChainConfig
from transmh.oracle import (
    assemble_kernel,
    build_changepoint_grid,
    builtin_fixtures,
    check_detailed_balance,
    compare_pairwise_vs_maximal,
    enumerate_changepoint_posterior,
    numeric_jacobian,
)
from transmh.suite import _structure_checks, batch_means_stderr

REPO = pathlib.Path(__file__).resolve().parents[1]
BENCH_ITERATIONS = 10_000_000
DEATH, BIRTH, SHIFT, ADJUST = range(4)


def report_line(criterion, ok, detail):
    print(f"ACCEPTANCE CRITERION {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")


@pytest.fixture(scope="module")
def benchmark_runs():
    """1e7 iterations per variant on the shipped n=550 dataset."""
    data = load_dataset(str(REPO / "data" / "benchmark_n550.txt"))
    params = ModelParams()
    # warm the JIT so wall times measure sampling, not one-time compilation
    run_fast_chain(data, params, "plain", ChainConfig(iterations=1000, seed=1))
    out = {}
    for i, variant in enumerate(VARIANTS):
        rep, hist = run_fast_chain(
            data, params, variant,
            ChainConfig(iterations=BENCH_ITERATIONS, seed=101 + i, thin=100),
        )
        out[variant] = (rep.acceptance_rates(), rep.wall_time_seconds, hist)
    return out


class TestCriterion1TablePattern:
    def test_rate_bands(self, benchmark_runs):
        r = {v: benchmark_runs[v][0] for v in VARIANTS}
        checks = []
        for mv in (DEATH, BIRTH):
            checks.append(5e-4 < r["plain"][mv] < 0.01)
            checks.append(0.03 < r["adhoc"][mv] < 0.10)
            checks.append(0.03 < r["posthoc"][mv] < 0.10)
            checks.append(r["plain"][mv] * 5 < r["adhoc"][mv])
            checks.append(r["plain"][mv] * 5 < r["posthoc"][mv])
        shifts = [r[v][SHIFT] for v in VARIANTS]
        adjusts = [r[v][ADJUST] for v in VARIANTS]
        checks.append(all(0.03 < s < 0.12 for s in shifts))
        checks.append(max(shifts) - min(shifts) < 0.01)
        checks.append(all(0.2 < a < 0.4 for a in adjusts))
        checks.append(max(adjusts) - min(adjusts) < 0.01)
        ok = all(checks)
        detail = "; ".join(
            f"{v}: " + "/".join(f"{r[v][m]:.4f}" for m in range(4)) for v in VARIANTS
        )
        report_line(1, ok, f"rates (death/birth/shift/adjust) {detail}")
        assert ok

    def test_pattern_invariants(self, benchmark_runs):
        # acceptance-rate ordering and the uniform-location birth ceiling
        r = {v: benchmark_runs[v][0] for v in VARIANTS}
        ok = True
        for mv in (DEATH, BIRTH):
            ok = ok and r["plain"][mv] < r["adhoc"][mv]
            ok = ok and r["adhoc"][mv] <= r["posthoc"][mv] + 0.01
        shifts = [r[v][SHIFT] for v in VARIANTS]
        adjusts = [r[v][ADJUST] for v in VARIANTS]
        ok = ok and max(shifts) - min(shifts) < 0.005
        ok = ok and max(adjusts) - min(adjusts) < 0.005
        ok = ok and all(r[v][BIRTH] < 0.10 for v in VARIANTS)
        print(
            "  pattern invariants: "
            f"shift spread {max(shifts) - min(shifts):.4f}, "
            f"adjust spread {max(adjusts) - min(adjusts):.4f}"
        )
        assert ok


class TestCriterion2Runtime:
    def test_wall_time(self, benchmark_runs):
        times = {v: benchmark_runs[v][1] for v in VARIANTS}
        ok = all(t <= 60.0 for t in times.values())
        detail = ", ".join(f"{v}={t:.1f}s" for v, t in times.items())
        report_line(2, ok, f"1e7 iterations per variant: {detail} (limit 60s)")
        assert ok


class TestCriterion3DetailedBalance:
    def test_all_fixtures(self):
        tol = 1e-12
        residuals = {}
        for name, b in builtin_fixtures().items():
            if name == "negative-control":
                continue
            residuals[name] = check_detailed_balance(
                b.fixture, assemble_kernel(b.fixture, b.alpha)
            ).max_residual
            for alt_name, alt in b.alt_alphas.items():
                residuals[f"{name}/{alt_name}"] = check_detailed_balance(
                    b.fixture, assemble_kernel(b.fixture, alt)
                ).max_residual
        data = generate_dataset(4, (3,), (-1.0, 1.0), 1.0, seed=5)
        params = ModelParams(q=0.3)
        grid = (-2.0, -1.0, 0.0, 1.0, 2.0)
        for variant in ("plain", "adhoc"):
            b = build_changepoint_grid(data, params, grid, variant)
            residuals[f"grid-{variant}"] = check_detailed_balance(
                b.fixture, assemble_kernel(b.fixture, b.alpha)
            ).max_residual

        neg = builtin_fixtures()["negative-control"]
        neg_residual = check_detailed_balance(
            neg.fixture, assemble_kernel(neg.fixture, neg.alpha)
        ).max_residual
        unadj = build_changepoint_grid(data, params, grid, "plain", "unadjusted")
        unadj_residual = check_detailed_balance(
            unadj.fixture, assemble_kernel(unadj.fixture, unadj.alpha)
        ).max_residual

        worst = max(residuals.values())
        ok = (
            len(residuals) >= 6
            and worst <= tol
            and neg_residual > 1e-6
            and unadj_residual > 1e-6
        )
        report_line(
            3,
            ok,
            f"{len(residuals)} balanced fixtures, worst residual {worst:.2e} "
            f"(tol 1e-12); negative controls {neg_residual:.2e} / "
            f"{unadj_residual:.2e} (> 1e-6)",
        )
        assert ok


class TestCriterion4PosteriorAgreement:
    def test_mcmc_matches_enumeration(self):
        data = generate_dataset(6, (4,), (-1.0, 1.5), 1.0, seed=11)
        params = ModelParams(q=0.25)
        post = enumerate_changepoint_posterior(data, params)
        assert len(post.configs) == 2**5
        exact = post.count_probs
        thin = 10
        samples = 1_000_000
        cfg = ChainConfig(
            iterations=20_000 + thin * samples, burnin=20_000, thin=thin, seed=321
        )
        t0 = time.perf_counter()
        worst = 0.0
        ok = True
        for variant in VARIANTS:
            _, hist, series = run_fast_chain(
                data, params, variant, cfg, return_counts=True
            )
            assert series.size == samples
            freqs = hist / hist.sum()
            for c in range(6):
                se = max(batch_means_stderr(series == c), 1.0 / samples)
                dev = abs(freqs[c] - exact[c]) / se
                worst = max(worst, dev)
                ok = ok and dev <= 3.0
        elapsed = time.perf_counter() - t0
        ok = ok and elapsed <= 30.0
        report_line(
            4,
            ok,
            f"worst deviation {worst:.2f} MC standard errors over all counts "
            f"and variants (limit 3); {elapsed:.1f}s (limit 30s)",
        )
        assert ok


class TestCriterion5Jacobians:
    def test_determinants(self):
        from transmh.changepoint.moves import merge_heights

        rng = np.random.default_rng(55)
        worst_split = 0.0
        for _ in range(100):
            n1 = int(rng.integers(1, 80))
            n2 = int(rng.integers(1, 80))
            x = rng.normal(0, 3, size=2)
            det = numeric_jacobian(
                lambda v: np.array(merge_heights(v[0], v[1], n1, n2)), x
            )
            worst_split = max(worst_split, abs(det - n1 / (n1 + n2)))
        conv = lambda v: np.array([v[1] + v[2], v[0] - v[2], v[2]])
        worst_conv = 0.0
        for _ in range(100):
            det = numeric_jacobian(conv, rng.normal(0, 2, size=3))
            worst_conv = max(worst_conv, abs(abs(det) - 1.0))
        ok = worst_split <= 1e-6 and worst_conv <= 1e-6
        report_line(
            5,
            ok,
            f"split-map error {worst_split:.2e}, convolution-map error "
            f"{worst_conv:.2e} (tol 1e-6)",
        )
        assert ok


class TestCriterion6Maximality:
    def test_dominance_and_collapse(self):
        tol = 1e-12
        fixtures = builtin_fixtures()
        ok = True
        details = []

        worst = 0.0
        for name in ("four-state-overlap", "disjoint-supports", "posthoc-discrete",
                     "sdt-injective", "sdt-noninjective"):
            b = fixtures[name]
            alpha = b.alt_alphas.get("aux", b.alpha)
            pw, mx, mask = compare_pairwise_vs_maximal(b.fixture, alpha)
            worst = min(worst, float((mx - pw)[mask].min()))
        ok = ok and worst >= -tol
        details.append(f"dominance slack {worst:.1e}")

        b = fixtures["disjoint-supports"]
        pw, mx, mask = compare_pairwise_vs_maximal(b.fixture, b.alpha)
        eq = float(np.abs((mx - pw)[mask]).max())
        ok = ok and eq <= tol
        details.append(f"disjoint equality {eq:.1e}")

        b = fixtures["sdt-injective"]
        pw, mx, mask = compare_pairwise_vs_maximal(b.fixture, b.alt_alphas["aux"])
        collapse = float(np.abs((mx - pw)[mask]).max())
        ok = ok and collapse <= tol
        details.append(f"injective collapse {collapse:.1e}")

        b = fixtures["sdt-noninjective"]
        pw, mx, mask = compare_pairwise_vs_maximal(b.fixture, b.alt_alphas["aux"])
        gap = float((mx - pw)[mask].max())
        ok = ok and gap > 1e-3
        for alpha in (b.alpha, b.alt_alphas["aux"]):
            ok = ok and (
                check_detailed_balance(
                    b.fixture, assemble_kernel(b.fixture, alpha)
                ).max_residual
                <= tol
            )
        details.append(f"non-injective gap {gap:.3f} with both kernels balanced")

        report_line(6, ok, "; ".join(details))
        assert ok


class TestCriterion7StructuralProperties:
    def test_property_fuzz(self):
        results = _structure_checks(cases=10_000)
        by_name = {r.name: r for r in results}
        wanted = (
            "move-involution",
            "schedule-normalization",
            "birth-death-negation",
            "transform-round-trip",
        )
        ok = all(by_name[w].passed for w in wanted)
        report_line(
            7,
            ok,
            "; ".join(f"{w}: {by_name[w].detail}" for w in wanted)
            + " (10000 cases each)",
        )
        assert ok
