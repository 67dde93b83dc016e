import math

import numpy as np
import pytest

from lobliq.convergence import (
    coefficient_asymptotics,
    control_convergence,
    discrete_value_and_spread_at,
    value_convergence,
)
from lobliq.discrete import solve_discrete
from lobliq.fluid import exp_fluid_infinite
from lobliq.intensity import ExpDecayIntensity, MarketParams, PowerLawIntensity

POWER = PowerLawIntensity(lam=1.0, alpha=2.0)
MARKET = MarketParams(r=0.1)


class TestValueConvergence:
    def test_power_ladder_monotone_below_fluid(self):
        report = value_convergence(POWER, MARKET, x_probe=5.0, delta0=1.0, k_max=6)
        assert report.monotone_ok
        assert np.all(np.diff(report.values) > 0.0)
        assert np.all(report.ratios <= 1.0 + 1e-9)
        assert report.ratios[-1] > report.ratios[0]
        assert abs(report.fluid_value - 5.0) < 1e-12

    def test_figure_scale_deltas(self):
        # the 0.05 and 0.01 unit sizes used in the illustration
        v05, _ = discrete_value_and_spread_at(POWER, MARKET, 5.0, 0.05)
        v01, _ = discrete_value_and_spread_at(POWER, MARKET, 5.0, 0.01)
        assert v05 < v01 < 5.0
        assert (5.0 - v01) < (5.0 - v05)
        assert v01 / 5.0 > 0.99

    def test_single_unit_consistency(self):
        # delta equal to the probe: one block, matches the direct solve
        report = value_convergence(POWER, MARKET, x_probe=2.0, delta0=2.0, k_max=0)
        sol = solve_discrete(POWER, MARKET, 2.0, 1)
        assert abs(report.values[0] - sol.values[1]) < 1e-14

    def test_exponential_ladder(self):
        model = ExpDecayIntensity(lam=1.0, kappa=1.0)
        report = value_convergence(model, MARKET, x_probe=2.0, delta0=1.0, k_max=6)
        v_fluid, _ = exp_fluid_infinite(2.0, 1.0, 1.0, 0.1)
        assert abs(report.fluid_value - v_fluid) < 1e-12
        assert report.monotone_ok
        assert np.all(np.diff(report.values) > 0.0)
        assert np.all(report.values <= v_fluid + 1e-12)

    def test_grid_alignment_error(self):
        with pytest.raises(ValueError):
            value_convergence(POWER, MARKET, x_probe=5.0, delta0=0.3, k_max=2)

    def test_rate_estimate_finite(self):
        report = value_convergence(POWER, MARKET, x_probe=4.0, delta0=1.0, k_max=6)
        assert math.isfinite(report.rate_estimate)
        assert report.rate_estimate > 0.0


class TestControlConvergence:
    def test_power_spreads_decrease_to_fluid(self):
        deltas = 1.0 * 0.5 ** np.arange(7)
        table = control_convergence(POWER, MARKET, 5.0, deltas)
        assert abs(table.fluid_spread - 1.0) < 1e-12  # sqrt(5)/sqrt(5)
        assert np.all(np.diff(table.pointwise_err) < 0.0)
        # observed (not proven) ordering: discrete spread sits above the fluid one
        assert np.all(table.spreads >= table.fluid_spread)

    def test_cell_average_beats_pointwise(self):
        deltas = 1.0 * 0.5 ** np.arange(7)
        table = control_convergence(POWER, MARKET, 5.0, deltas)
        assert np.all(table.averaged_err <= table.pointwise_err)

    def test_coarse_consistency(self):
        table = control_convergence(POWER, MARKET, 2.0, [2.0])
        sol = solve_discrete(POWER, MARKET, 2.0, 1)
        assert abs(table.spreads[0] - sol.spreads[1]) < 1e-14


class TestCoefficientAsymptotics:
    def test_small_n_finite(self):
        report = coefficient_asymptotics(1.0, 2.0, 0.1, 50)
        assert math.isfinite(report.coefficient_ratio[0])

    def test_ratios_approach_one(self):
        report = coefficient_asymptotics(1.0, 2.0, 0.1, 10_000)
        assert report.final_coefficient_deviation < 0.01
        assert report.final_spread_deviation < 0.01
        # deviations shrink with n
        assert abs(report.coefficient_ratio[100] - 1.0) \
            > abs(report.coefficient_ratio[-1] - 1.0)

    def test_spread_ratio_same_rate(self):
        report = coefficient_asymptotics(1.0, 2.5, 0.05, 3000)
        assert abs(report.spread_ratio[-1] - 1.0) < 0.02
