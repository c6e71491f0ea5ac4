import math

import numpy as np
import pytest

from _oracles import (
    grid_huber_hellinger,
    grid_offset_value,
    hellinger_rows,
    huber_rows,
    small_ldp_instance,
)
from pridec.dec import (
    RandomizedQueryModel,
    constrained_pac_dec_ldp,
    constrained_value_at,
    fractional_covering,
    gaussian_halfspace_dictionary,
    local_dec,
    min_correlation,
    offset_dec_hellinger,
    offset_pac_dec_ldp,
    offset_regret_dec_ldp,
    quantile_loss,
    quantile_pac_dec,
    reevaluate_offset,
    robust_offset_dec,
    solve_fixed_point_U,
    sq_dec,
    tv_modulus,
)
from pridec.errors import NotFound, RangeError
from pridec.models import (
    LossSpec,
    QueryModelClass,
    canonical_mab,
    linear_model_class,
    mab_class,
    parity_class,
)
from pridec.prob import FiniteDist, FiniteSpace, l_divergence


class TestOffsetLdp:
    def test_singleton_class_zero(self):
        cls = mab_class([[0.3, -0.2]])
        cert = offset_pac_dec_ldp(cls, cls.models[0], 5.0)
        assert cert.value == pytest.approx(0.0, abs=1e-12)
        assert cert.p.mass[cls.optimal_decision(0)] == pytest.approx(1.0)

    def test_gamma_zero_matrix_game(self):
        # 2x2 game: losses [[0,1],[1,0]] has value 1/2 by pure enumeration
        cls = canonical_mab(2)
        cert = offset_pac_dec_ldp(cls, cls.mixture([0.5, 0.5]), 0.0)
        assert cert.value == pytest.approx(0.5)

    def test_matches_grid_oracle(self):
        for seed in range(4):
            cls = small_ldp_instance(seed)
            ref = cls.models[seed % len(cls)]
            div = cls.divergence_cube(ref).reshape(len(cls), -1)
            for gamma in (0.5, 2.0, 100.0):
                cert = offset_pac_dec_ldp(cls, ref, gamma)
                oracle = grid_offset_value(cls.loss_table, div, gamma)
                assert cert.value <= oracle + 1e-9
                assert abs(cert.value - oracle) < 0.02

    def test_non_increasing_in_gamma(self):
        cls = small_ldp_instance(7)
        ref = cls.mixture(np.full(len(cls), 1 / len(cls)))
        values = [offset_pac_dec_ldp(cls, ref, g).value for g in (0.0, 0.5, 1, 4, 16, 64)]
        assert all(a >= b - 1e-10 for a, b in zip(values, values[1:]))

    def test_certificate_reevaluates(self):
        cls = small_ldp_instance(3)
        ref = cls.models[0]
        cert = offset_pac_dec_ldp(cls, ref, 3.0)
        assert reevaluate_offset(cert, cls, ref) == pytest.approx(cert.value, abs=1e-9)


class TestOffsetRegretAndHellinger:
    def test_singleton_zero(self):
        cls = mab_class([[0.9, 0.1]])
        assert offset_regret_dec_ldp(cls, cls.models[0], 2.0).value == pytest.approx(0.0, abs=1e-12)

    def test_hellinger_gamma_zero_equals_l_variant(self):
        cls = small_ldp_instance(2)
        ref = cls.models[1]
        a = offset_dec_hellinger(cls, ref, 0.0).value
        b = offset_pac_dec_ldp(cls, ref, 0.0).value
        assert a == pytest.approx(b, abs=1e-9)

    def test_regret_certificate_reevaluates(self):
        cls = small_ldp_instance(5)
        ref = cls.mixture(np.full(len(cls), 1 / len(cls)))
        cert = offset_regret_dec_ldp(cls, ref, 4.0)
        assert reevaluate_offset(cert, cls, ref) == pytest.approx(cert.value, abs=1e-9)

    def test_hellinger_matches_grid(self):
        for seed in range(4):
            cls = small_ldp_instance(seed, n_models=3, n_arms=3)
            ref = cls.models[0]
            rows = hellinger_rows(cls, ref)
            for gamma in (1.0, 8.0):
                cert = offset_dec_hellinger(cls, ref, gamma)
                oracle = grid_offset_value(cls.loss_table, rows, gamma)
                assert abs(cert.value - oracle) < 0.02

    def test_reg_variant_matches_coupled_grid(self):
        cls = small_ldp_instance(9, n_models=3, n_arms=3)
        ref = cls.models[2]
        rows = hellinger_rows(cls, ref)
        cert = offset_dec_hellinger(cls, ref, 2.0, objective="reg")
        oracle = grid_offset_value(cls.loss_table, rows, 2.0, coupled=True)
        assert abs(cert.value - oracle) < 0.02


class TestRobustOffset:
    def test_beta_zero_reduces_to_hellinger(self):
        cls = small_ldp_instance(4, n_arms=3)
        ref = cls.models[0]
        a = robust_offset_dec(cls, ref, 3.0, 0.0).value
        b = offset_dec_hellinger(cls, ref, 3.0).value
        assert a == pytest.approx(b, abs=1e-9)

    def test_beta_one_gives_game_value(self):
        cls = canonical_mab(3)
        ref = cls.models[0]
        cert = robust_offset_dec(cls, ref, 50.0, 1.0)
        game = offset_pac_dec_ldp(cls, ref, 0.0).value
        assert cert.value == pytest.approx(game, abs=1e-9)

    def test_matches_grid(self):
        cls = small_ldp_instance(6, n_models=2, n_arms=2)
        ref = cls.models[1]
        rows = huber_rows(cls, ref, 0.2)
        cert = robust_offset_dec(cls, ref, 4.0, 0.2)
        oracle = grid_offset_value(cls.loss_table, rows, 4.0)
        assert abs(cert.value - oracle) < 0.02


class TestConstrained:
    def test_vacuous_radius_gives_game_value(self):
        cls = small_ldp_instance(1)
        ref = cls.models[0]
        cert = constrained_pac_dec_ldp(cls, ref, 10.0)
        game = offset_pac_dec_ldp(cls, ref, 0.0).value
        assert cert.value == pytest.approx(game, abs=1e-6)

    def test_zero_radius_realizable(self):
        cls = canonical_mab(3)
        cert = constrained_pac_dec_ldp(cls, cls.models[1], 0.0)
        assert cert.value == pytest.approx(0.0, abs=1e-12)
        assert cert.p.mass[1] == pytest.approx(1.0)

    def test_sandwich_against_offsets(self):
        for seed in range(3):
            cls = small_ldp_instance(seed)
            ref = cls.models[seed % len(cls)]
            for eps in (0.1, 0.3):
                cert = constrained_pac_dec_ldp(cls, ref, eps)
                assert cert.mode == "exact_enum"
                lo = offset_pac_dec_ldp(cls, ref, eps**-2).value
                hi = min(
                    offset_pac_dec_ldp(cls, ref, g).value + g * eps * eps
                    for g in (1, 4, 16, 64)
                )
                assert lo - 1e-6 <= cert.value <= hi + 1e-6

    def test_certificate_reevaluates(self):
        cls = small_ldp_instance(8)
        ref = cls.models[0]
        cert = constrained_pac_dec_ldp(cls, ref, 0.25)
        value, _ = constrained_value_at(cls, ref, 0.25, cert.q.mass)
        assert value == pytest.approx(cert.value, abs=1e-9)


class TestQuantile:
    def test_point_mass(self):
        cls = canonical_mab(3)
        p = FiniteDist(cls.decisions, [0, 1, 0])
        for delta in (0.1, 0.5, 1.0):
            assert quantile_loss(p, cls.loss_table[0], delta) == pytest.approx(1.0)

    def test_uniform_on_zero_one(self):
        cls = canonical_mab(3)
        p = FiniteDist(cls.decisions, [0.5, 0.5, 0.0])  # losses under M0: 0 and 1
        assert quantile_loss(p, cls.loss_table[0], 0.5) == pytest.approx(1.0)

    def test_delta_one_gives_min_support_loss(self):
        cls = canonical_mab(3)
        p = FiniteDist(cls.decisions, [0.5, 0.5, 0.0])
        assert quantile_loss(p, cls.loss_table[0], 1.0) == pytest.approx(0.0)

    def test_dec_upper_bounds_hold(self):
        cls = small_ldp_instance(11, n_models=3, n_arms=2)
        ref = cls.models[0]
        cert = quantile_pac_dec(cls, ref, 0.3, 0.5)
        # re-evaluate: worst feasible quantile loss at (p, q) equals the value
        div = cls.divergence_cube(ref).reshape(len(cls), -1)
        feasible = div @ cert.q.mass <= 0.09 + 1e-12
        worst = max(
            quantile_loss(cert.p, cls.loss_table[m], 0.5)
            for m in np.flatnonzero(feasible)
        )
        assert worst == pytest.approx(cert.value, abs=1e-9)

    def test_bad_delta(self):
        cls = canonical_mab(2)
        with pytest.raises(RangeError):
            quantile_pac_dec(cls, cls.models[0], 0.1, 0.0)


class TestLocalAndModulus:
    def test_singleton_class(self):
        cls = mab_class([[0.4, -0.4]])
        assert local_dec(cls, 0, 1.0) == 0.0

    def test_eps_zero_separated(self):
        cls = canonical_mab(3)
        assert local_dec(cls, 0, 0.0) == 0.0

    def test_two_point_gap(self):
        # models with TV radius 0.3 and loss gap g: local value at eps >= 0.3 is g
        cls = linear_model_class([[1.0]], [[1.0], [1.0]], [[0.0], [0.6]], [[0.0], [0.3], [0.6]])
        assert local_dec(cls, 0, 0.29) == pytest.approx(0.0)
        assert local_dec(cls, 0, 0.31) == pytest.approx(0.6)

    def test_modulus_matches_decision_gap(self):
        cls = linear_model_class([[1.0]], [[1.0], [1.0]], [[0.0], [0.6]], [[0.0], [0.3], [0.6]])
        assert tv_modulus(cls, 0, 0.31) == pytest.approx(0.6)
        assert tv_modulus(cls, 0, 0.1) == pytest.approx(0.0)

    def test_missing_model(self):
        cls = canonical_mab(2)
        with pytest.raises(NotFound):
            local_dec(cls, 5, 0.1)


class TestFractionalCovering:
    def test_single_model(self):
        cls = mab_class([[0.2, -0.5]])
        n, p = fractional_covering(cls, 0.0)
        assert n == pytest.approx(1.0)

    def test_canonical_counts(self):
        for k in range(2, 7):
            n, p = fractional_covering(canonical_mab(k), 0.5)
            assert n == pytest.approx(k, abs=1e-9)
            assert np.allclose(p.mass, 1.0 / k)

    def test_shared_good_decision(self):
        cls = mab_class([[0.9, 0.0], [0.8, 0.0]])
        n, _ = fractional_covering(cls, 0.5)
        assert n == pytest.approx(1.0)

    def test_infinite_case(self):
        cls = canonical_mab(2)
        # delta below zero is invalid; delta = 0 still has good decisions
        n, _ = fractional_covering(cls, 0.0)
        assert math.isfinite(n)
        lossy = mab_class([[1.0, 1.0]])  # losses all zero: still fine
        n2, _ = fractional_covering(lossy, 0.0)
        assert n2 == pytest.approx(1.0)


class TestMinCorrelation:
    def test_self_correlation_zero(self):
        cls, ref = parity_class(2, 0.5)
        from pridec.dec import pairwise_correlation

        d = cls.models[0].dist_at(0)
        rho = pairwise_correlation([d], d)
        assert rho[0, 0] == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("d", [2, 3])
    def test_parity_tables(self, d):
        lam = 0.5
        cls, ref = parity_class(d, lam)
        report = min_correlation(cls, lam / 8, [ref], subset_cap=300)
        n = 2**d
        off = report.pairwise[~np.eye(len(cls), dtype=bool)]
        assert np.allclose(off, -lam / (n - 1), atol=1e-12)
        assert np.allclose(np.diag(report.pairwise), lam, atol=1e-12)
        assert report.decision_coverage_ok


class TestFixedPoint:
    def test_scalar_closed_form(self):
        r = solve_fixed_point_U([[1.0]], [1.0], 0.5)
        assert r.converged
        assert r.U[0, 0] == pytest.approx(1.0 / 1.5, abs=1e-6)

    def test_symmetric_two_dim(self):
        r = solve_fixed_point_U([[1, 0], [-1, 0], [0, 1], [0, -1]], [0.25] * 4, 0.3)
        assert r.converged
        assert np.allclose(np.diag(r.U), 2.0 / 1.6, atol=1e-6)
        assert abs(r.U[0, 1]) < 1e-8

    def test_trace_bound_random(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            d = int(rng.integers(1, 5))
            n = int(rng.integers(2, 6))
            pts = rng.normal(size=(n, d))
            pts /= np.maximum(1.0, np.linalg.norm(pts, axis=1))[:, None]
            w = rng.dirichlet(np.ones(n))
            r = solve_fixed_point_U(pts, w, float(rng.uniform(0.1, 1.0)))
            assert r.residual <= 1e-8
            assert r.trace_expect <= d + 1e-9

    def test_zero_point_rejected(self):
        with pytest.raises(RangeError):
            solve_fixed_point_U([[0.0]], [1.0], 0.5)


class TestHalfspaceDictionary:
    def test_zero_embedding(self):
        space = FiniteSpace(("u", "v"))
        d = gaussian_halfspace_dictionary(space, [[0.0], [0.0]], 16, seed=0)
        for fn in d:
            assert np.allclose(fn.values, 0.0)

    def test_sign_symmetry_in_one_dim(self):
        space = FiniteSpace(("z",))
        d = gaussian_halfspace_dictionary(space, [[1.0]], 100_000, seed=1)
        ones = sum(1 for fn in d if fn.values[0] == 1.0)
        assert abs(ones / len(d) - 0.5) < 0.01

    def test_norm_guard(self):
        space = FiniteSpace(("u",))
        with pytest.raises(RangeError):
            gaussian_halfspace_dictionary(space, [[2.0]], 4, seed=0)

    def test_corrected_monte_carlo_bound(self):
        # E D^2 >= |P[f]-Q[f]|^2 / (2*pi): the sharp constant for half-space
        # functionals under standard Gaussian directions
        rng = np.random.default_rng(7)
        n = 100_000
        for trial in range(5):
            nz, dim = int(rng.integers(2, 6)), int(rng.integers(1, 4))
            space = FiniteSpace(tuple(range(nz)))
            emb = rng.normal(size=(nz, dim))
            emb /= np.maximum(1.0, np.linalg.norm(emb, axis=1))[:, None]
            p = FiniteDist(space, rng.dirichlet(np.ones(nz)))
            q = FiniteDist(space, rng.dirichlet(np.ones(nz)))
            d = gaussian_halfspace_dictionary(space, emb, n, seed=trial)
            vals = np.array([l_divergence(p, q, fn) ** 2 for fn in d])
            target = float(np.linalg.norm((p.mass - q.mass) @ emb) ** 2)
            stderr = vals.std(ddof=1) / math.sqrt(n)
            assert vals.mean() >= target / (2 * math.pi) - 3 * stderr


class TestSqDec:
    @staticmethod
    def four_corner_instance():
        resp = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
        qspace = FiniteSpace(("q0", "q1"))
        dspace = FiniteSpace((0, 1, 2, 3))
        loss = LossSpec.indicator([[0], [1], [2], [3]], 4)
        return QueryModelClass(dspace, qspace, resp, "linf", loss)

    def test_vacuous_tolerance_gives_game_value(self):
        qc = self.four_corner_instance()
        ref = RandomizedQueryModel.from_class(qc, [0])
        cert = sq_dec(qc, ref, eps=0.5, tau=2.0)  # every response within tau
        assert cert.value == pytest.approx(0.75)

    def test_singleton_class(self):
        resp = np.array([[0.5, 0.5]])
        qc = QueryModelClass(
            FiniteSpace((0,)), FiniteSpace(("q0", "q1")), resp, "linf",
            LossSpec.indicator([[0]], 1),
        )
        ref = RandomizedQueryModel.from_class(qc, [0])
        assert sq_dec(qc, ref, 0.1, 0.1).value == pytest.approx(0.0)

    def test_two_distribution_search_matches_grid(self):
        resp = np.array([[0.0], [1.0]])
        qc = QueryModelClass(
            FiniteSpace((0, 1)), FiniteSpace(("q",)), resp, "linf",
            LossSpec.indicator([[0], [1]], 2),
        )
        ref = RandomizedQueryModel.from_class(qc, [0, 1])
        cert = sq_dec(qc, ref, eps=0.75, tau=0.25)
        # single query: err = 1/2 for both models; 0.5625 >= 1/2 keeps both
        assert cert.value == pytest.approx(0.5)
        tight = sq_dec(qc, ref, eps=0.4, tau=0.25)
        # eps^2 = 0.16 < 1/2 excludes both: empty feasible set floors at 0
        assert tight.value == pytest.approx(0.0)


class TestLinearRateInvariant:
    def test_gamma_scaled_offset_bounded(self):
        # fixed 2-d linear instance with an in-class reference: the offset
        # decays in gamma, and gamma times the offset never exceeds the
        # level set by the gamma = 10 evaluation (a square-root-dimension
        # rate in the information radius)
        pts = np.array([[1.0, 0.0], [0.0, 1.0]])
        thetas = np.array([[0.8, 0.0], [-0.8, 0.0], [0.0, 0.8], [0.0, -0.8]])
        grid = np.vstack([thetas, [[0.0, 0.0]]])
        nus = np.tile([0.5, 0.5], (4, 1))
        cls = linear_model_class(pts, nus, thetas, grid)
        ref = cls.models[0]
        values = {g: offset_pac_dec_ldp(cls, ref, g).value for g in (10.0, 20.0, 40.0)}
        assert values[10.0] >= values[20.0] - 1e-10 >= values[40.0] - 2e-10
        level = 10.0 * values[10.0]
        assert 20.0 * values[20.0] <= level + 1e-9
        assert 40.0 * values[40.0] <= level + 1e-9
