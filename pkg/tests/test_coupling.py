import math

import numpy as np
import pytest

from conftest import const_vol_ou_spec, scott_spec

from svschemes.coupling import (
    bridge_min,
    coupled_db_tilde,
    coupled_lookback_levels,
    coupled_plain_paths,
    coupled_terminal,
    coupled_traj_paths,
    lookback_db_mid,
    lookback_single_level,
    plain_coarse_db,
    terminal_coupling_from_draws,
)
from svschemes.errors import InvalidParameterError
from svschemes.rng import RngStream
from svschemes.schemes import SchemeKind, draw_factor_paths, simulate_paths


class TestCoarseIncrements:
    def test_plain_sum(self):
        db = np.arange(8.0).reshape(4, 2)
        got = plain_coarse_db(db)
        assert np.allclose(got, [[2.0, 4.0], [10.0, 12.0]])

    def test_plain_needs_pairs(self):
        with pytest.raises(InvalidParameterError):
            plain_coarse_db(np.zeros((3, 2)))

    def test_tilde_equal_multipliers_is_plain_sum(self):
        db1 = np.array([0.3, -0.1])
        db2 = np.array([0.2, 0.5])
        got = coupled_db_tilde(db1, db2, 0.7, 0.7)
        assert np.allclose(got, db1 + db2)

    def test_tilde_degenerate_fallback(self):
        got = coupled_db_tilde(np.array([0.3]), np.array([0.2]), 0.0, 0.0)
        assert np.allclose(got, [0.5])

    def test_tilde_variance_matches_coarse_step(self):
        # given the multipliers, db_tilde ~ N(0, 2*delta) exactly
        delta = 0.125
        rng = RngStream(3)
        db1 = math.sqrt(delta) * rng.normal(200_000)
        db2 = math.sqrt(delta) * rng.normal(200_000)
        v1 = np.abs(rng.normal(200_000)) + 0.1
        v2 = np.abs(rng.normal(200_000)) + 0.1
        tilde = coupled_db_tilde(db1, db2, v1, v2)
        assert abs(tilde.var() - 2 * delta) < 4 * 2 * delta * math.sqrt(2.0 / tilde.size)

    def test_mid_equal_multipliers_is_first_increment(self):
        db1 = np.array([0.3, -0.1])
        db2 = np.array([0.2, 0.5])
        assert np.allclose(lookback_db_mid(db1, db2, 0.4, 0.4), db1)
        assert np.allclose(lookback_db_mid(db1, db2, 0.0, 0.0), db1)

    def test_mid_law_consistent_with_tilde(self):
        # the mid increment has variance delta and covariance delta with
        # the full coarse increment, like a true midpoint value
        delta = 0.25
        rng = RngStream(4)
        n = 400_000
        db1 = math.sqrt(delta) * rng.normal(n)
        db2 = math.sqrt(delta) * rng.normal(n)
        v1 = np.abs(rng.normal(n)) + 0.05
        v2 = np.abs(rng.normal(n)) + 0.05
        tilde = coupled_db_tilde(db1, db2, v1, v2)
        mid = lookback_db_mid(db1, db2, v1, v2)
        assert abs(mid.var() - delta) < 4 * delta * math.sqrt(2.0 / n)
        cov = np.cov(mid, tilde)[0, 1]
        assert abs(cov - delta) < 5 * delta * math.sqrt(3.0 / n)


class TestTrajCoupling:
    def test_shapes_and_grids(self):
        spec = scott_spec()
        pair = coupled_traj_paths(spec, SchemeKind.WEAKTRAJ1, 4, RngStream(1), 10)
        assert pair.x_fine.shape == (9, 10)
        assert pair.x_coarse.shape == (5, 10)
        assert np.allclose(pair.times_fine[::2], pair.times_coarse)
        assert np.array_equal(pair.y_fine[::2], pair.y_coarse)

    def test_constant_multiplier_equals_plain(self):
        # constant f and rho=0 make every multiplier equal, so the
        # reweighted increment collapses to the plain sum
        spec = const_vol_ou_spec(rho=0.0)
        a = coupled_traj_paths(spec, SchemeKind.EULER, 4, RngStream(2), 8)
        b = coupled_plain_paths(spec, SchemeKind.EULER, 4, RngStream(2), 8)
        assert np.allclose(a.x_coarse, b.x_coarse)
        assert np.array_equal(a.x_fine, b.x_fine)

    def test_marginal_law_preserved(self):
        # the coupled coarse path has the same law as a fresh coarse path
        spec = scott_spec()
        n = 50_000
        coupled = coupled_traj_paths(spec, SchemeKind.WEAKTRAJ1, 4, RngStream(10), n)
        direct = simulate_paths(SchemeKind.WEAKTRAJ1, spec, 4, RngStream(11), n)
        a, b = coupled.x_coarse[-1], direct.x[-1]
        se_mean = math.sqrt(a.var() / n + b.var() / n)
        assert abs(a.mean() - b.mean()) < 4 * se_mean
        se_var = math.sqrt(2.0 / n) * max(a.var(), b.var())
        assert abs(a.var() - b.var()) < 4 * se_var

    def test_coupling_tightens_with_n(self):
        spec = scott_spec()
        errs = []
        for n_coarse in (4, 16):
            pair = coupled_traj_paths(spec, SchemeKind.WEAKTRAJ1, n_coarse, RngStream(12), 20_000)
            errs.append(np.mean((pair.x_fine[-1] - pair.x_coarse[-1]) ** 2))
        assert errs[1] < errs[0]

    def test_cmt_routes_to_pathwise_coupling(self):
        spec = scott_spec()
        pair = coupled_traj_paths(spec, SchemeKind.CMT, 2, RngStream(5), 6)
        assert pair.x_fine.shape == (5, 6)
        assert pair.x_coarse.shape == (3, 6)

    def test_needs_positive_steps(self):
        with pytest.raises(InvalidParameterError):
            coupled_traj_paths(scott_spec(), SchemeKind.EULER, 0, RngStream(0), 1)


class TestTerminalCoupling:
    def test_constant_vol_levels_identical(self):
        # constant f, rho=0: both levels share drift (r-f^2/2)T and
        # variance f^2 T, so the coupled difference vanishes exactly
        spec = const_vol_ou_spec(rho=0.0)
        for kind in (SchemeKind.EULER, SchemeKind.WEAK2):
            t = coupled_terminal(spec, kind, 4, RngStream(6), 50)
            assert np.allclose(t.x_fine, t.x_coarse, atol=1e-12), kind

    def test_shared_g(self):
        spec = scott_spec()
        t = coupled_terminal(spec, SchemeKind.WEAK2, 4, RngStream(7), 1000)
        # both levels move together with the closing normal
        corr = np.corrcoef(t.x_fine, t.x_coarse)[0, 1]
        assert corr > 0.99

    def test_second_moment_decreases_with_n(self):
        spec = scott_spec()
        errs = []
        for n_coarse in (2, 8, 32):
            t = coupled_terminal(spec, SchemeKind.WEAK2, n_coarse, RngStream(8), 20_000)
            errs.append(np.mean((t.x_fine - t.x_coarse) ** 2))
        assert errs[0] > errs[1] > errs[2]

    def test_cmt_rejected(self):
        spec = scott_spec()
        fine = draw_factor_paths(spec, SchemeKind.EULER, 4, RngStream(0), 2)
        with pytest.raises(InvalidParameterError):
            terminal_coupling_from_draws(spec, SchemeKind.CMT, fine, np.zeros(2))

    def test_marginal_law_matches_path_simulation(self):
        spec = scott_spec()
        n = 50_000
        t = coupled_terminal(spec, SchemeKind.WEAKTRAJ1, 4, RngStream(9), n)
        direct = simulate_paths(SchemeKind.WEAKTRAJ1, spec, 8, RngStream(13), n)
        a, b = t.x_fine, direct.x[-1]
        se = math.sqrt(a.var() / n + b.var() / n)
        assert abs(a.mean() - b.mean()) < 4 * se


class TestBridgeMin:
    def test_u_one_returns_endpoint_min(self):
        assert bridge_min(100.0, 101.0, 0.0625, 0.125, 1.0) == pytest.approx(100.0)
        assert bridge_min(101.0, 100.0, 0.0625, 0.125, 1.0) == pytest.approx(100.0)

    def test_zero_vol_returns_endpoint_min(self):
        assert bridge_min(100.0, 98.0, 0.0, 0.125, 0.3) == pytest.approx(98.0)

    def test_golden_arithmetic(self):
        got = bridge_min(100.0, 101.0, 0.0625, 0.125, 0.5)
        rad = 1.0 + 2.0 * 100.0**2 * 0.0625 * 0.125 * math.log(2.0)
        assert got == pytest.approx(0.5 * (201.0 - math.sqrt(rad)), rel=1e-14)
        assert got <= 100.0

    def test_never_exceeds_endpoint_min(self):
        rng = RngStream(14)
        n = 1_000_000
        left = 80.0 + 40.0 * rng.uniform(n)
        right = 80.0 + 40.0 * rng.uniform(n)
        vol2 = 0.25 * rng.uniform(n)
        u = rng.uniform_open(n)
        got = bridge_min(left, right, vol2, 0.01, u)
        assert np.all(got <= np.minimum(left, right) + 1e-12)

    def test_input_validation(self):
        with pytest.raises(InvalidParameterError):
            bridge_min(1.0, 1.0, 0.1, 0.0, 0.5)
        with pytest.raises(InvalidParameterError):
            bridge_min(1.0, 1.0, 0.1, 0.1, 0.0)
        with pytest.raises(InvalidParameterError):
            bridge_min(1.0, 1.0, 0.1, 0.1, 1.5)

    def test_anchor_override(self):
        a = bridge_min(100.0, 99.0, 0.04, 0.1, 0.5, anchor=100.0)
        b = bridge_min(100.0, 99.0, 0.04, 0.1, 0.5)
        assert a == pytest.approx(b)
        deeper = bridge_min(100.0, 99.0, 0.04, 0.1, 0.5, anchor=200.0)
        assert deeper < a


class TestLookback:
    def test_single_level_plausible_price(self):
        spec = scott_spec()
        pay = lookback_single_level(spec, SchemeKind.WEAKTRAJ1, 16, RngStream(15), 20_000)
        mean = pay.mean()
        # lookback (S_T - min S) is worth roughly a fifth of spot here
        assert 15.0 < mean < 30.0

    def test_coupled_levels_consistent(self):
        spec = scott_spec()
        sample = coupled_lookback_levels(spec, SchemeKind.WEAKTRAJ1, 8, RngStream(16), 20_000)
        diff = sample.fine - sample.coarse
        # the level correction is small compared to either level's spread
        assert abs(diff.mean()) < 1.0
        assert diff.var() < 0.25 * sample.fine.var()

    def test_level_variance_decays(self):
        spec = scott_spec()
        variances = []
        for n_coarse in (2, 8, 32):
            s = coupled_lookback_levels(spec, SchemeKind.WEAKTRAJ1, n_coarse, RngStream(17), 20_000)
            variances.append((s.fine - s.coarse).var())
        assert variances[0] > variances[1] > variances[2]

    def test_coarse_marginal_matches_single_level(self):
        spec = scott_spec()
        n = 40_000
        s = coupled_lookback_levels(spec, SchemeKind.WEAKTRAJ1, 8, RngStream(18), n)
        solo = lookback_single_level(spec, SchemeKind.WEAKTRAJ1, 16, RngStream(19), n)
        a, b = s.fine, solo
        se = math.sqrt(a.var() / n + b.var() / n)
        assert abs(a.mean() - b.mean()) < 4 * se

    def test_cmt_rejected(self):
        with pytest.raises(InvalidParameterError):
            coupled_lookback_levels(scott_spec(), SchemeKind.CMT, 2, RngStream(0), 4)
        with pytest.raises(InvalidParameterError):
            lookback_single_level(scott_spec(), SchemeKind.CMT, 2, RngStream(0), 4)

    def test_reproducible(self):
        spec = scott_spec()
        a = coupled_lookback_levels(spec, SchemeKind.WEAK2, 4, RngStream(20), 8)
        b = coupled_lookback_levels(spec, SchemeKind.WEAK2, 4, RngStream(20), 8)
        assert np.array_equal(a.fine, b.fine)
        assert np.array_equal(a.coarse, b.coarse)
