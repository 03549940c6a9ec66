"""Brute-force balance certification, maximality, Jacobians, enumeration."""

import math
import pathlib

import numpy as np
import pytest

from transmh.changepoint.model import (
    Dataset,
    ModelParams,
    generate_dataset,
)
from transmh.oracle import (
    BalanceReport,
    FiniteFixture,
    FixtureMove,
    MixtureState,
    assemble_kernel,
    build_changepoint_grid,
    builtin_fixtures,
    check_detailed_balance,
    compare_pairwise_vs_maximal,
    dump_fixture,
    enumerate_changepoint_posterior,
    load_fixture,
    mixture_alpha,
    numeric_jacobian,
    parse_fixture,
)

BALANCE_TOL = 1e-12
REPO = pathlib.Path(__file__).resolve().parents[1]


class TestAssembleKernel:
    def test_single_state(self):
        fix = FiniteFixture(
            "one",
            (MixtureState(0, ()),),
            np.array([1.0]),
            (FixtureMove(0, 0, "adhoc", np.array([1.0]), np.array([[1.0]])),),
        )
        mat = assemble_kernel(fix, mixture_alpha(fix))
        assert mat.shape == (1, 1) and mat[0, 0] == 1.0

    def test_uniform_target_symmetric_proposal_is_proposal(self):
        table = np.array([[0.4, 0.6], [0.6, 0.4]])
        fix = FiniteFixture(
            "sym",
            (MixtureState(0, (0,)), MixtureState(0, (1,))),
            np.array([0.5, 0.5]),
            (FixtureMove(0, 0, "adhoc", np.ones(2), table),),
        )
        mat = assemble_kernel(fix, mixture_alpha(fix))
        assert np.allclose(mat, table, atol=1e-15)
        rep = check_detailed_balance(fix, mat)
        assert rep.max_residual == 0.0

    def test_four_state_stationarity(self):
        b = builtin_fixtures()["four-state-overlap"]
        mat = assemble_kernel(b.fixture, b.alpha)
        rep = check_detailed_balance(b.fixture, mat)
        assert rep.stationary_check <= BALANCE_TOL

    def test_non_stochastic_tables_rejected(self):
        with pytest.raises(ValueError):
            FiniteFixture(
                "bad",
                (MixtureState(0, (0,)), MixtureState(0, (1,))),
                np.array([0.5, 0.5]),
                (
                    FixtureMove(
                        0, 0, "adhoc", np.ones(2),
                        np.array([[0.4, 0.4], [0.6, 0.4]]),
                    ),
                ),
            )


class TestDetailedBalance:
    def test_all_builtin_fixtures_balance(self):
        for name, b in builtin_fixtures().items():
            if name == "negative-control":
                continue
            rep = check_detailed_balance(
                b.fixture, assemble_kernel(b.fixture, b.alpha)
            )
            assert rep.max_residual <= BALANCE_TOL, name
            assert rep.stationary_check <= BALANCE_TOL, name
            for alt_name, alt in b.alt_alphas.items():
                rep = check_detailed_balance(
                    b.fixture, assemble_kernel(b.fixture, alt)
                )
                assert rep.max_residual <= BALANCE_TOL, (name, alt_name)

    def test_negative_control_fails_loudly(self):
        b = builtin_fixtures()["negative-control"]
        corrupted = check_detailed_balance(
            b.fixture, assemble_kernel(b.fixture, b.alpha)
        )
        assert corrupted.max_residual > 1e-6
        fixed = check_detailed_balance(
            b.fixture, assemble_kernel(b.fixture, b.alt_alphas["correct"])
        )
        assert fixed.max_residual <= BALANCE_TOL

    def test_report_type(self):
        b = builtin_fixtures()["primal"]
        rep = check_detailed_balance(b.fixture, assemble_kernel(b.fixture, b.alpha))
        assert isinstance(rep, BalanceReport)
        assert rep.max_residual >= 0.0
        assert all(isinstance(s, MixtureState) for s in rep.worst_pair)


class TestChangepointGridArbitration:
    """The n=4 enumeration decides the birth/death ratio form."""

    def setup_method(self):
        self.data = generate_dataset(4, (3,), (-1.0, 1.0), 1.0, seed=5)
        self.params = ModelParams(q=0.3)
        self.grid = (-2.0, -1.0, 0.0, 1.0, 2.0)

    def test_derived_form_balances_plain(self):
        b = build_changepoint_grid(self.data, self.params, self.grid, "plain")
        rep = check_detailed_balance(b.fixture, assemble_kernel(b.fixture, b.alpha))
        assert rep.max_residual <= BALANCE_TOL
        assert rep.stationary_check <= BALANCE_TOL

    def test_derived_form_balances_adhoc(self):
        b = build_changepoint_grid(self.data, self.params, self.grid, "adhoc")
        rep = check_detailed_balance(b.fixture, assemble_kernel(b.fixture, b.alpha))
        assert rep.max_residual <= BALANCE_TOL

    def test_form_without_prior_odds_violates_balance(self):
        b = build_changepoint_grid(
            self.data, self.params, self.grid, "plain", "unadjusted"
        )
        rep = check_detailed_balance(b.fixture, assemble_kernel(b.fixture, b.alpha))
        assert rep.max_residual > 1e-6

    def test_grid_covers_boundary_schedules(self):
        # states with k=0 and k=n-1 are present, so the 0.75/0.5 schedule
        # branches are exercised by the balance check
        b = build_changepoint_grid(self.data, self.params, self.grid, "plain")
        counts = {st.space for st in b.fixture.states}
        assert counts == {0, 1, 2, 3}


class TestMaximality:
    def test_dominance_everywhere(self):
        for name, b in builtin_fixtures().items():
            if name == "negative-control":
                continue
            alpha = b.alt_alphas.get("aux", b.alpha)
            pw, mx, mask = compare_pairwise_vs_maximal(b.fixture, alpha)
            assert float((mx - pw)[mask].min()) >= -BALANCE_TOL, name

    def test_overlapping_moves_strictly_below_maximal(self):
        b = builtin_fixtures()["four-state-overlap"]
        pw, mx, mask = compare_pairwise_vs_maximal(b.fixture, b.alpha)
        assert float((mx - pw)[mask].max()) > 1e-3

    def test_disjoint_supports_attain_maximal(self):
        b = builtin_fixtures()["disjoint-supports"]
        pw, mx, mask = compare_pairwise_vs_maximal(b.fixture, b.alpha)
        assert float(np.abs((mx - pw)[mask]).max()) <= BALANCE_TOL

    def test_injective_sdt_collapse(self):
        # injective auxiliary map: aux-space acceptance equals the maximal one
        b = builtin_fixtures()["sdt-injective"]
        pw, mx, mask = compare_pairwise_vs_maximal(b.fixture, b.alt_alphas["aux"])
        assert float(np.abs((mx - pw)[mask]).max()) <= BALANCE_TOL

    def test_noninjective_sdt_differs_but_balances(self):
        b = builtin_fixtures()["sdt-noninjective"]
        pw, mx, mask = compare_pairwise_vs_maximal(b.fixture, b.alt_alphas["aux"])
        assert float((mx - pw)[mask].max()) > 1e-3
        for alpha in (b.alpha, b.alt_alphas["aux"]):
            rep = check_detailed_balance(b.fixture, assemble_kernel(b.fixture, alpha))
            assert rep.max_residual <= BALANCE_TOL


class TestNumericJacobian:
    def test_identity(self):
        det = numeric_jacobian(lambda x: x, np.array([0.3, -0.7]))
        assert det == pytest.approx(1.0, abs=1e-9)

    def test_split_map(self):
        from transmh.changepoint.moves import merge_heights

        rng = np.random.default_rng(3)
        for _ in range(100):
            n1 = int(rng.integers(1, 60))
            n2 = int(rng.integers(1, 60))
            x = rng.normal(0, 3, size=2)
            det = numeric_jacobian(
                lambda v: np.array(merge_heights(v[0], v[1], n1, n2)), x
            )
            assert det == pytest.approx(n1 / (n1 + n2), abs=1e-6)

    def test_convolution_map(self):
        rng = np.random.default_rng(4)
        f = lambda v: np.array([v[1] + v[2], v[0] - v[2], v[2]])
        for _ in range(100):
            det = numeric_jacobian(f, rng.normal(0, 2, size=3))
            assert abs(det) == pytest.approx(1.0, abs=1e-6)

    def test_singular_map_flagged(self):
        with pytest.raises(ValueError):
            numeric_jacobian(lambda v: np.array([v[0], v[0]]), np.array([1.0, 2.0]))


class TestEnumeration:
    def test_single_point_dataset(self):
        post = enumerate_changepoint_posterior(
            Dataset(np.array([0.4])), ModelParams()
        )
        assert post.configs == ((),)
        assert post.probs[0] == pytest.approx(1.0)

    def test_two_points_prefer_no_changepoint(self):
        # q = 3/550 << 1/2 and the data are exchangeable
        post = enumerate_changepoint_posterior(
            Dataset(np.array([0.0, 0.0])), ModelParams()
        )
        p_none = post.probs[post.configs.index(())]
        p_one = post.probs[post.configs.index((2,))]
        assert p_none > p_one

    def test_prior_is_proper(self):
        data = generate_dataset(5, (3,), (0.0, 1.0), 1.0, seed=9)
        post = enumerate_changepoint_posterior(data, ModelParams())
        assert float(np.exp(post.log_position_prior).sum()) == pytest.approx(
            1.0, abs=1e-10
        )
        assert float(post.probs.sum()) == pytest.approx(1.0, abs=1e-10)
        assert float(post.count_probs.sum()) == pytest.approx(1.0, abs=1e-10)

    def test_evidence_matches_quadrature(self):
        # conjugate closed form vs numerical integration over one height
        from transmh.changepoint.model import SegmentStats, log_normal_pdf
        from transmh.oracle import _segment_log_evidence

        data = Dataset(np.array([0.2, -0.5, 1.1]))
        stats = SegmentStats(data)
        closed = _segment_log_evidence(stats, 1, 4, 1.0, 25.0)
        hs = np.linspace(-40, 40, 200_001)
        integrand = [
            math.exp(
                log_normal_pdf(h, 0.0, 25.0)
                + sum(log_normal_pdf(y, h, 1.0) for y in data.y)
            )
            for h in hs
        ]
        quad = math.log(np.trapezoid(integrand, hs))
        assert closed == pytest.approx(quad, abs=1e-8)

    def test_too_large_rejected(self):
        with pytest.raises(ValueError):
            enumerate_changepoint_posterior(
                Dataset(np.zeros(13)), ModelParams()
            )

    def test_mcmc_matches_enumeration_per_configuration(self):
        # stronger than the count marginal: the sampled frequency of every
        # changepoint configuration matches its exact posterior probability
        from transmh.changepoint.fast import run_fast_chain
        from transmh.kernel import ChainConfig

        data = generate_dataset(6, (3,), (0.3, -1.1), 1.0, seed=29)
        params = ModelParams(q=0.3)
        post = enumerate_changepoint_posterior(data, params)
        exact = dict(zip(post.configs, post.probs))

        freqs = {}

        def sink(it, k, coords):
            cfg = tuple(int(p) for p in coords[:k])
            freqs[cfg] = freqs.get(cfg, 0) + 1

        thin = 25
        samples = 120_000
        run_fast_chain(
            data, params, "posthoc",
            ChainConfig(
                iterations=10_000 + thin * samples, burnin=10_000, thin=thin,
                seed=7,
            ),
            sink=sink,
        )
        total = sum(freqs.values())
        assert total == samples
        for cfg, p in exact.items():
            got = freqs.get(cfg, 0) / total
            sigma = max((p * (1 - p) / total) ** 0.5, 1.0 / total)
            # thinned far past the mixing time; 4 sigma absorbs the
            # residual autocorrelation across the 32 simultaneous checks
            assert abs(got - p) <= 4 * sigma, (cfg, got, p)

    def test_saturated_boundary_schedule_statistics(self):
        # n=2 has a single interior position, so the chain lives on the
        # two boundary schedules (k=0: birth .75, k=1=n-1: death .5)
        from transmh.changepoint.fast import run_fast_chain
        from transmh.kernel import ChainConfig

        data = Dataset(np.array([0.4, -0.3]))
        params = ModelParams(q=0.5)
        exact = enumerate_changepoint_posterior(data, params).count_probs
        _, hist = run_fast_chain(
            data, params, "plain",
            ChainConfig(iterations=2_000_000, burnin=10_000, thin=20, seed=13),
        )
        freqs = hist / hist.sum()
        n = hist.sum()
        for c in range(2):
            sigma = max((exact[c] * (1 - exact[c]) / n) ** 0.5, 1.0 / n)
            assert abs(freqs[c] - exact[c]) <= 4 * sigma


class TestFixtureFiles:
    def test_round_trip(self):
        for name, b in builtin_fixtures().items():
            text = dump_fixture(b.fixture)
            back = parse_fixture(text)
            assert back.n_states == b.fixture.n_states
            assert np.allclose(back.target, b.fixture.target, atol=0)
            for mv, mv2 in zip(b.fixture.moves, back.moves):
                assert (mv.label, mv.reverse, mv.kind) == (
                    mv2.label, mv2.reverse, mv2.kind,
                )
                assert np.array_equal(mv.beta, mv2.beta)
                assert np.array_equal(mv.table, mv2.table)
            assert tuple(back.states) == tuple(b.fixture.states)

    def test_shipped_fixture_loads_and_balances(self):
        fix = load_fixture(str(REPO / "data" / "four_state_overlap.fixture"))
        rep = check_detailed_balance(fix, assemble_kernel(fix, mixture_alpha(fix)))
        assert rep.max_residual <= BALANCE_TOL

    def test_bad_header_rejected(self):
        with pytest.raises(ValueError):
            parse_fixture("states 2\n")
