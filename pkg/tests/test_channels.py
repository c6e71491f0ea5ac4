import math

import numpy as np
import pytest

from pridec.channels import (
    Channel,
    apply_channel,
    binary_channel,
    channel_from_json,
    channel_to_json,
    dp_level,
    random_dp_channel,
    sdpi_check,
    sdpi_decompose,
)
from pridec.errors import NotDP, RangeError, SpaceMismatch
from pridec.prob import SIGN_SPACE, FiniteDist, FiniteSpace, ScalarFn, rad

Z3 = FiniteSpace(("u", "v", "w"))
Z6 = FiniteSpace(tuple(range(6)))


class TestDpLevel:
    def test_uniform_channel_is_zero(self):
        ch = Channel(Z3, SIGN_SPACE, np.full((3, 2), 0.5))
        assert dp_level(ch) == 0.0

    def test_deterministic_distinct_rows_infinite(self):
        ch = Channel(Z3, SIGN_SPACE, [[1, 0], [0, 1], [1, 0]])
        assert dp_level(ch) == math.inf

    def test_binary_channel_attains_alpha(self):
        # equality requires the functional to hit both 0 and 1
        rng = np.random.default_rng(0)
        for alpha in (0.1, 0.5, 1.0, 2.0):
            values = rng.uniform(size=6)
            values[0], values[1] = 0.0, 1.0
            ch = binary_channel(ScalarFn(Z6, values), alpha)
            assert dp_level(ch) == pytest.approx(alpha, abs=1e-9)

    def test_binary_channel_below_alpha_without_extremes(self):
        ch = binary_channel(ScalarFn(Z3, [0.2, 0.5, 0.8]), 1.0)
        assert dp_level(ch) < 1.0


class TestBinaryChannel:
    def test_constant_zero_gives_fair_coin(self):
        ch = binary_channel(ScalarFn(Z3, [0, 0, 0]), 1.0)
        assert np.allclose(ch.kernel, 0.5)

    def test_ln2_substitution(self):
        ch = binary_channel(ScalarFn(Z3, [1.0, 0.0, 0.0]), math.log(2))
        assert ch.row("u")[+1] == pytest.approx(0.75)

    def test_alpha_must_be_positive(self):
        with pytest.raises(RangeError):
            binary_channel(ScalarFn(Z3, [0, 1, 0]), 0.0)

    def test_audit_on_random_functionals(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            ch = binary_channel(ScalarFn(Z6, rng.uniform(size=6)), 1.0)
            assert dp_level(ch) <= 1.0 + 1e-12


class TestApply:
    def test_identical_rows_ignore_input(self):
        r = np.array([0.3, 0.7])
        ch = Channel(Z3, SIGN_SPACE, np.tile(r, (3, 1)))
        out = apply_channel(ch, FiniteDist(Z3, [0.2, 0.5, 0.3]))
        assert np.allclose(out.mass, r)

    def test_binary_marginal_is_rad(self):
        fn = ScalarFn(Z3, [0.9, 0.2, 0.4])
        alpha = 0.7
        p = FiniteDist(Z3, [0.5, 0.25, 0.25])
        out = apply_channel(binary_channel(fn, alpha), p)
        c = 1 - math.exp(-alpha)
        expected = rad(c * p.expect(fn.values))
        assert np.allclose(out.mass, expected.mass)

    def test_space_mismatch(self):
        ch = binary_channel(ScalarFn(Z3, [0, 1, 0]), 1.0)
        with pytest.raises(SpaceMismatch):
            apply_channel(ch, rad(0))


class TestSdpiDecompose:
    def test_binary_channel_structure(self):
        # with min ell = 0: floor(+1) = 1/2 and fn_plus = exp(-alpha) * ell
        alpha = 0.8
        values = np.array([0.0, 1.0, 0.4])
        deco = sdpi_decompose(binary_channel(ScalarFn(Z3, values), alpha), alpha)
        plus_idx = deco.base.space.index(+1)
        assert deco.floor[plus_idx] == pytest.approx(0.5)
        assert np.allclose(deco.fns[plus_idx].values, math.exp(-alpha) * values)

    def test_identical_rows_give_zero_fns(self):
        ch = Channel(Z3, SIGN_SPACE, np.tile([0.4, 0.6], (3, 1)))
        deco = sdpi_decompose(ch, 1.0)
        for fn in deco.fns:
            assert np.allclose(fn.values, 0.0)

    def test_reconstruction_identity_exact(self):
        rng = np.random.default_rng(2)
        alpha = 1.0
        scale = math.exp(alpha) - 1
        for _ in range(30):
            ch = random_dp_channel(Z6, alpha, rng)
            deco = sdpi_decompose(ch, alpha)
            cols = [ch.output.labels.index(lab) for lab in deco.base.space.labels]
            rebuilt = np.stack(
                [deco.floor[i] * (1 + scale * fn.values) for i, fn in enumerate(deco.fns)],
                axis=1,
            )
            assert np.max(np.abs(rebuilt - ch.kernel[:, cols])) < 1e-14

    def test_not_dp_rejected(self):
        ch = Channel(Z3, SIGN_SPACE, [[1, 0], [0, 1], [1, 0]])
        with pytest.raises(NotDP):
            sdpi_decompose(ch, 1.0)


class TestSdpiCheck:
    @staticmethod
    def assert_sandwich(report):
        e = report.expected_lsq
        assert report.lower_const * e <= report.hellinger + 1e-9
        assert report.hellinger <= report.ratio_sq / 8 * e + 1e-9
        assert report.kl <= report.chi_sq + 1e-9
        assert report.chi_sq <= report.ratio_sq * e + 1e-9

    def test_equal_distributions_all_zero(self):
        ch = binary_channel(ScalarFn(Z3, [0.1, 0.9, 0.5]), 1.0)
        p = FiniteDist(Z3, [0.2, 0.3, 0.5])
        report = sdpi_check(ch, p, p, 1.0)
        assert report.expected_lsq == pytest.approx(0.0, abs=1e-15)
        assert report.hellinger == pytest.approx(0.0, abs=1e-15)
        assert report.kl == pytest.approx(0.0, abs=1e-15)
        assert report.chi_sq == pytest.approx(0.0, abs=1e-15)

    def test_binary_channel_pair(self):
        ch = binary_channel(ScalarFn(FiniteSpace((0, 1)), [1.0, 0.0]), 1.0)
        p1 = FiniteDist(FiniteSpace((0, 1)), [0.8, 0.2])
        p2 = FiniteDist(FiniteSpace((0, 1)), [0.3, 0.7])
        self.assert_sandwich(sdpi_check(ch, p1, p2, 1.0))

    def test_monte_carlo_audit(self):
        rng = np.random.default_rng(3)
        alpha = 1.0
        for _ in range(50):
            ch = random_dp_channel(Z6, alpha, rng)
            p1 = FiniteDist(Z6, rng.dirichlet(np.ones(6)))
            p2 = FiniteDist(Z6, rng.dirichlet(np.ones(6)))
            self.assert_sandwich(sdpi_check(ch, p1, p2, alpha))

    def test_proof_constant_recorded(self):
        ch = binary_channel(ScalarFn(Z3, [0, 1, 0.5]), 1.0)
        report = sdpi_check(ch, FiniteDist(Z3, [1, 0, 0]), FiniteDist(Z3, [0, 1, 0]), 1.0)
        assert report.proof_lower_const > report.lower_const


class TestSerialization:
    def test_round_trip(self):
        rng = np.random.default_rng(4)
        ch = random_dp_channel(Z3, 0.5, rng)
        again = channel_from_json(channel_to_json(ch))
        assert again.input == ch.input and again.output == ch.output
        assert np.max(np.abs(again.kernel - ch.kernel)) < 1e-15
