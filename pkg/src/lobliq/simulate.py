"""Monte Carlo simulation of the controlled inventory process.

Fill times are sampled exactly by inverting the integrated hazard: in closed
form for the power-law optimal policy (whose fill rate diverges at maturity,
guaranteeing full liquidation), as plain exponential clocks for stationary
policies, and by quadrature plus root solving (or thinning with a piecewise
bound) for generic time-dependent policies.

Each path draws from its own substream spawned from the root seed, and the
ensemble reducers aggregate in path order, so the statistics are identical
for any worker-thread count.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq
from scipy.special import gammaln

from .discrete import (
    horizon_factor,
    power_spread_scale,
    solve_exp_finite,
    solve_exp_infinite,
    solve_generic_stationary,
    solve_power_coefficients,
    solve_power_zero_rate,
)
from .fluid import fluid_solution
from .intensity import (
    ExpDecayIntensity,
    IntensityModel,
    MarketParams,
    PowerLawIntensity,
)

__all__ = [
    "SimPath",
    "EnsembleStats",
    "ExecutionCurve",
    "ConstantSpreadPolicy",
    "StationarySpreadPolicy",
    "TimeDependentPolicy",
    "OptimalPowerPolicy",
    "optimal_policy",
    "fluid_spread_policy",
    "simulate_policy",
    "constant_policy_value",
    "evaluate_fluid_policy_exact",
    "execution_curve_ode",
]


# --------------------------------------------------------------------------
# policies


class SpreadPolicy:
    """A feedback rule: spread to post given (inventory units, time to go)."""

    time_homogeneous: bool = False

    def spread(self, n_units: int, t_to_go: float) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantSpreadPolicy(SpreadPolicy):
    value: float
    time_homogeneous = True

    def spread(self, n_units, t_to_go):
        return self.value


@dataclass(frozen=True)
class StationarySpreadPolicy(SpreadPolicy):
    """Inventory-only policy; ``spreads[n]`` is the spread posted at level n."""

    spreads: np.ndarray
    time_homogeneous = True

    def spread(self, n_units, t_to_go):
        return float(self.spreads[n_units])


@dataclass(frozen=True)
class TimeDependentPolicy(SpreadPolicy):
    """Wraps an arbitrary (n_units, t_to_go) -> spread closure."""

    fn: Callable[[int, float], float]

    def spread(self, n_units, t_to_go):
        return self.fn(n_units, t_to_go)


@dataclass(frozen=True)
class OptimalPowerPolicy(SpreadPolicy):
    """Markov-optimal spreads for a discounted power-law book.

    The fill rate along this policy factorizes as k_n / (1 - e^(-a*(T-t)))
    with a = alpha*r, so the integrated hazard inverts in closed form; the
    simulator exploits that for exact, vectorizable fill times.
    """

    lam: float
    alpha: float
    r: float
    delta: float
    horizon: float
    spread_scales: np.ndarray  # sigma_n, stationary spread per level

    @property
    def time_homogeneous(self) -> bool:  # type: ignore[override]
        return math.isinf(self.horizon)

    def spread(self, n_units, t_to_go):
        t = min(t_to_go, self.horizon)
        return float(self.spread_scales[n_units]) * horizon_factor(t, self.alpha, self.r)

    def hazard_scale(self, n_units: int) -> float:
        """k_n: fill intensity of the Delta-problem net of the time factor."""
        return (self.lam / self.delta) * float(self.spread_scales[n_units]) ** (-self.alpha)


def optimal_policy(model: IntensityModel, market: MarketParams, delta: float,
                   n_max: int) -> SpreadPolicy:
    """The optimal feedback policy for any closed-form model/market pair."""
    if isinstance(model, PowerLawIntensity):
        if market.r > 0.0:
            c = solve_power_coefficients(model.lam, model.alpha, market.r, n_max, delta)
            scales = np.full(n_max + 1, math.nan)
            for n in range(1, n_max + 1):
                scales[n] = power_spread_scale(n, c, model.lam, model.alpha,
                                               market.r, delta)
            return OptimalPowerPolicy(lam=model.lam, alpha=model.alpha, r=market.r,
                                      delta=delta, horizon=market.horizon,
                                      spread_scales=scales)
        d = solve_power_zero_rate(model.lam, model.alpha, n_max, delta)
        coef = (model.alpha / (model.alpha - 1.0)) * np.diff(d) / delta

        def zr_spread(n, t_to_go, _c=coef, _a=model.alpha):
            return float(_c[n - 1]) * t_to_go ** (1.0 / _a)

        return TimeDependentPolicy(zr_spread)

    if isinstance(model, ExpDecayIntensity):
        if market.infinite_horizon:
            _, spreads = solve_exp_infinite(n_max * delta, delta, model.lam,
                                            model.kappa, market.r)
            return StationarySpreadPolicy(spreads=spreads)
        if market.r == 0.0:
            def exp_spread(n, t_to_go, _m=model, _d=delta):
                _, spreads = solve_exp_finite(n, _d, [t_to_go], _m.lam, _m.kappa)
                return float(spreads[n, 0])

            return TimeDependentPolicy(exp_spread)
        raise ValueError("no closed-form optimal policy: exponential book with "
                         "r > 0 and finite horizon")

    if market.infinite_horizon:
        sol = solve_generic_stationary(model, delta, market.r, n_max)
        return StationarySpreadPolicy(spreads=sol.spreads)
    raise ValueError("generic optimal policies are available on the infinite horizon only")


def fluid_spread_policy(model: IntensityModel, market: MarketParams, delta: float,
                        n_max: int) -> StationarySpreadPolicy:
    """Stationary policy that posts the fluid-limit spread at x = n*delta."""
    if not market.infinite_horizon:
        raise ValueError("the fluid spread policy is stationary; use an infinite horizon")
    fl = fluid_solution(model, market)
    spreads = np.full(n_max + 1, math.nan)
    for n in range(1, n_max + 1):
        spreads[n] = fl.spread(n * delta)
    return StationarySpreadPolicy(spreads=spreads)


# --------------------------------------------------------------------------
# fill-time samplers: (level, t0, rng) -> fill time or None (no fill by T)


def _analytic_power_sampler(policy: OptimalPowerPolicy, horizon: float):
    a = policy.alpha * policy.r

    def sample(level, t0, rng):
        e = rng.exponential()
        k = policy.hazard_scale(level)
        z = math.expm1(a * (horizon - t0)) * math.exp(-a * e / k)
        t_next = horizon - math.log1p(z) / a
        # exact inversion keeps t_next < horizon in exact arithmetic; clamp
        # roundoff so times stay strictly increasing and never exceed T
        return min(max(t_next, np.nextafter(t0, math.inf)), horizon)

    return sample


def _stationary_sampler(model, policy, delta, horizon):
    def sample(level, t0, rng):
        rate = model.rate(policy.spread(level, math.inf)) / delta
        t_next = t0 + rng.exponential() / rate
        if t_next > horizon:
            return None
        return t_next

    return sample


def _inversion_sampler(model, policy, delta, horizon):
    """Exact inversion of a numerically integrated hazard."""
    def sample(level, t0, rng):
        e = rng.exponential()

        def hazard(u):
            return model.rate(policy.spread(level, horizon - u)) / delta

        def cumulative(t):
            if t <= t0:
                return 0.0
            # the hazard may be near-singular at maturity; quad complains but
            # still resolves the root to sampling accuracy
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", IntegrationWarning)
                val, _ = quad(hazard, t0, t, epsabs=1e-12, epsrel=1e-10, limit=200)
            return val

        t_hi = horizon - max(1e-12 * horizon, 1e-15)
        if t_hi <= t0:
            return None
        if cumulative(t_hi) < e:
            return None
        t_next = brentq(lambda t: cumulative(t) - e, t0, t_hi,
                        xtol=1e-14 * horizon, rtol=8.882e-16, maxiter=200)
        return max(t_next, np.nextafter(t0, math.inf))

    return sample


def _thinning_sampler(model, policy, delta, horizon, cells: int = 64):
    """Rejection sampling under a piecewise-constant hazard bound.

    Usable only when the hazard stays bounded on [0, T); a divergence probe
    near maturity rejects policies (like the power-law optimum) whose fill
    rate blows up there, since no finite envelope covers the last cell.
    Envelope proposals restart at each cell boundary, which is exact by
    memorylessness.
    """
    def sample(level, t0, rng):
        def hazard(u):
            return model.rate(policy.spread(level, horizon - u)) / delta

        span = horizon - t0
        if span <= 0.0:
            return None
        near, nearer = hazard(horizon - 1e-2 * span), hazard(horizon - 1e-8 * span)
        if not math.isfinite(nearer) or nearer > 100.0 * max(near, 1e-300):
            raise ArithmeticError("hazard is unbounded near maturity; "
                                  "use inversion sampling instead")

        edges = np.linspace(t0, horizon, cells + 1)
        for i in range(cells):
            lo, hi = edges[i], edges[i + 1]
            probes = (hazard(lo), hazard(0.5 * (lo + hi)),
                      hazard(max(hi - 1e-12 * (hi - lo), lo)))
            bound = 1.5 * max(probes)
            t = lo
            while True:
                t += rng.exponential() / bound
                if t >= hi:
                    break  # redraw from the boundary with the next cell's bound
                ratio = hazard(t) / bound
                if ratio > 1.0 + 1e-9:
                    raise ArithmeticError(f"hazard bound violated at t = {t}")
                if rng.uniform() <= ratio:
                    return t
        return None

    return sample


def _pick_sampler(model, policy, delta, market, method):
    if method == "auto":
        if isinstance(policy, OptimalPowerPolicy) and not market.infinite_horizon:
            return _analytic_power_sampler(policy, market.horizon)
        if policy.time_homogeneous:
            return _stationary_sampler(model, policy, delta, market.horizon)
        return _inversion_sampler(model, policy, delta, market.horizon)
    if method == "inversion":
        return _inversion_sampler(model, policy, delta, market.horizon)
    if method == "thinning":
        return _thinning_sampler(model, policy, delta, market.horizon)
    raise ValueError(f"unknown sampling method {method!r}")


# --------------------------------------------------------------------------
# ensemble simulation


@dataclass(frozen=True)
class SimPath:
    path_id: int
    fill_times: np.ndarray
    fill_spreads: np.ndarray
    discounted_revenue: float
    fully_liquidated: bool
    terminal_inventory: float


@dataclass(frozen=True)
class EnsembleStats:
    n_paths: int
    mean_revenue: float
    std_error: float
    liquidation_fraction: float
    curve_times: Optional[np.ndarray] = None
    mean_inventory_curve: Optional[np.ndarray] = None
    curve_std_error: Optional[np.ndarray] = None


def _path_rng(seed: int, path_id: int) -> np.random.Generator:
    # spawn-key derivation: path streams are independent of execution order
    return np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                        spawn_key=(path_id,)))


def simulate_policy(model: IntensityModel, market: MarketParams, n_units: int,
                    delta: float, policy: SpreadPolicy, n_paths: int, seed: int,
                    *, threads: int = 1, curve_times=None, keep_paths: bool = False,
                    method: str = "auto"):
    """Simulate the controlled death process under ``policy``.

    Returns :class:`EnsembleStats` (and the per-path records when
    ``keep_paths``).  The sample mean of discounted revenue is an unbiased
    estimate of the policy's value; one unit ``delta`` is sold per fill at
    the spread posted at that instant.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if n_units < 0:
        raise ValueError("n_units must be >= 0")
    horizon = market.horizon
    r = market.r
    sampler = _pick_sampler(model, policy, delta, market, method)

    revenues = np.zeros(n_paths)
    emptied = np.zeros(n_paths, dtype=bool)
    ct = None
    inventory_at = None
    if curve_times is not None:
        ct = np.asarray(curve_times, dtype=float)
        inventory_at = np.empty((n_paths, len(ct)), dtype=np.int32)
    paths: list[Optional[SimPath]] = [None] * n_paths if keep_paths else []

    def run_range(lo, hi):
        for pid in range(lo, hi):
            rng = _path_rng(seed, pid)
            t = 0.0
            revenue = 0.0
            fill_times: list[float] = []
            fill_spreads: list[float] = []
            for level in range(n_units, 0, -1):
                spread_now = policy.spread(level, horizon - t)
                if not math.isfinite(spread_now):
                    raise ArithmeticError(f"non-finite spread at level {level}")
                t_next = sampler(level, t, rng)
                if t_next is None:
                    break
                t = t_next
                s = policy.spread(level, horizon - t)
                revenue += math.exp(-r * t) * s * delta
                fill_times.append(t)
                fill_spreads.append(s)
            revenues[pid] = revenue
            emptied[pid] = len(fill_times) == n_units
            if inventory_at is not None:
                counts = np.searchsorted(np.asarray(fill_times), ct, side="right")
                inventory_at[pid] = n_units - counts
            if keep_paths:
                paths[pid] = SimPath(
                    path_id=pid,
                    fill_times=np.asarray(fill_times),
                    fill_spreads=np.asarray(fill_spreads),
                    discounted_revenue=revenue,
                    fully_liquidated=len(fill_times) == n_units,
                    terminal_inventory=delta * (n_units - len(fill_times)),
                )

    threads = max(1, int(threads))
    if threads == 1 or n_paths < 2 * threads:
        run_range(0, n_paths)
    else:
        bounds = np.linspace(0, n_paths, threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run_range, bounds[i], bounds[i + 1])
                       for i in range(threads)]
            for f in futures:
                f.result()

    mean = float(np.mean(revenues))
    if n_paths > 1:
        se = float(np.std(revenues, ddof=1) / math.sqrt(n_paths))
    else:
        se = math.nan
    stats_kwargs = dict(n_paths=n_paths, mean_revenue=mean, std_error=se,
                        liquidation_fraction=float(np.mean(emptied)))
    if inventory_at is not None:
        phys = inventory_at.astype(float) * delta
        curve_se = (np.std(phys, axis=0, ddof=1) / math.sqrt(n_paths)
                    if n_paths > 1 else np.full(len(ct), math.nan))
        stats_kwargs.update(curve_times=ct,
                            mean_inventory_curve=np.mean(phys, axis=0),
                            curve_std_error=curve_se)
    stats = EnsembleStats(**stats_kwargs)
    if keep_paths:
        return stats, paths
    return stats


def constant_policy_value(model: IntensityModel, market: MarketParams,
                          n_units: int, delta: float, spread: float) -> float:
    """Closed-form value of posting one fixed spread forever (r > 0):
    the geometric sum s*delta*(q + ... + q^n) with q = rate/(rate + r*delta)."""
    if not market.infinite_horizon:
        raise ValueError("closed form holds on the infinite horizon")
    rate = model.rate(spread)
    q = rate / (rate + market.r * delta)
    return spread * delta * q * (1.0 - q ** n_units) / (1.0 - q)


def evaluate_fluid_policy_exact(model: IntensityModel, market: MarketParams,
                                n_units: int, delta: float) -> np.ndarray:
    """Value of running the fluid-limit spread inside the discrete problem.

    No Monte Carlo: between fills the spread is constant, so the value
    satisfies Vtilde(x) = q*(s*delta + Vtilde(x - delta)) exactly, with
    s the fluid spread at x and q = rate/(rate + r*delta).  Always a lower
    bound on the optimal discrete value (the policy is suboptimal).
    """
    if not market.infinite_horizon:
        raise ValueError("stationary evaluation requires an infinite horizon")
    fl = fluid_solution(model, market)
    values = np.zeros(n_units + 1)
    for n in range(1, n_units + 1):
        s = fl.spread(n * delta)
        rate = model.rate(s)
        q = rate / (rate + market.r * delta)
        values[n] = q * (s * delta + values[n - 1])
    return values


# --------------------------------------------------------------------------
# average execution curves (unit trading size)


@dataclass(frozen=True)
class ExecutionCurve:
    times: np.ndarray
    inventory: np.ndarray      # shape (n_units+1, len(times)); row x is E(x, t)
    trading_rate: np.ndarray   # -dE(x0, t)/dt along the top row
    initial_units: int


def _level_rate_fn(model: IntensityModel, market: MarketParams, n_units: int):
    """Per-level fill rates t -> array of rate(s*(k, T-t)) for k = 1..n."""
    ks = np.arange(1, n_units + 1)
    if isinstance(model, PowerLawIntensity):
        if market.r > 0.0:
            c = solve_power_coefficients(model.lam, model.alpha, market.r, n_units)
            scales = np.array([power_spread_scale(k, c, model.lam, model.alpha, market.r)
                               for k in ks])
            base = model.lam * scales ** (-model.alpha)
            if market.infinite_horizon:
                return lambda t: base
            a = model.alpha * market.r
            T = market.horizon
            return lambda t: base / (-math.expm1(-a * (T - t)))
        d = solve_power_zero_rate(model.lam, model.alpha, n_units)
        coef = (model.alpha / (model.alpha - 1.0)) * np.diff(d)
        base = model.lam * coef ** (-model.alpha)
        T = market.horizon
        return lambda t: base / (T - t)

    if isinstance(model, ExpDecayIntensity):
        if market.infinite_horizon:
            _, spreads = solve_exp_infinite(float(n_units), 1.0, model.lam,
                                            model.kappa, market.r)
            base = model.lam * np.exp(-model.kappa * spreads[1:])
            return lambda t: base
        if market.r == 0.0:
            T = market.horizon
            lam = model.lam
            j = np.arange(n_units + 1, dtype=float)
            lgam = gammaln(j + 1.0)

            def rates(t, _T=T, _lam=lam, _j=j, _lgam=lgam):
                t_go = _T - t
                with np.errstate(divide="ignore"):
                    log_y = math.log(_lam * t_go / math.e) if t_go > 0 else -math.inf
                terms = _j * log_y - _lgam
                terms[0] = 0.0
                log_sums = np.logaddexp.accumulate(terms)
                # rate(s*(k)) = (lam/e) * S_{k-1}/S_k, independent of kappa
                return (_lam / math.e) * np.exp(log_sums[:-1] - log_sums[1:])

            return rates
        raise ValueError("no optimal-rate profile: exponential book with r > 0 "
                         "and finite horizon")

    if market.infinite_horizon:
        sol = solve_generic_stationary(model, 1.0, market.r, n_units)
        base = np.array([model.rate(s) for s in sol.spreads[1:]])
        return lambda t: base
    raise ValueError("generic execution curves are stationary-only")


def execution_curve_ode(model: IntensityModel, market: MarketParams, n_units: int,
                        time_grid, step_count: int = 20000,
                        eps_cut: Optional[float] = None) -> ExecutionCurve:
    """Average inventory E(x, t) under the optimal policy, unit trading size.

    Solves the triangular linear system dE(x,t)/dt = rate_x(t) * (E(x-1,t)
    - E(x,t)), E(x,0) = x, as one vector Runge-Kutta integration.  For a
    power-law book the top-level rate diverges at maturity, so integration
    refuses to cross T - eps_cut (default 1e-9*T); request grid points
    comfortably inside the horizon or raise ``step_count`` to match.
    """
    times = np.asarray(time_grid, dtype=float)
    if times.ndim != 1 or len(times) == 0 or np.any(np.diff(times) <= 0.0):
        raise ValueError("time_grid must be a strictly increasing 1-d array")
    if times[0] < 0.0:
        raise ValueError("time_grid must be nonnegative")
    if not market.infinite_horizon:
        if eps_cut is None:
            eps_cut = 1e-9 * market.horizon
        if times[-1] > market.horizon - eps_cut:
            raise ValueError(f"time grid must stay below T - {eps_cut:g}: the "
                             "fill rate blows up at maturity")
    if n_units < 1:
        raise ValueError("n_units must be >= 1")

    rates = _level_rate_fn(model, market, n_units)

    def rhs(t, e):
        h = rates(t)
        prev = np.concatenate(([0.0], e[:-1]))
        return h * (prev - e)

    t_end = float(times[-1])
    table = np.zeros((n_units + 1, len(times)))
    if t_end == 0.0:
        table[:, 0] = np.arange(n_units + 1)
    else:
        h = t_end / step_count
        y = np.arange(1, n_units + 1, dtype=float)
        store = np.empty((step_count + 1, n_units))
        store[0] = y
        for i in range(step_count):
            t = i * h
            k1 = rhs(t, y)
            k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
            k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
            k4 = rhs(t + h, y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(y)):
                raise ArithmeticError(f"execution-curve state lost finiteness at "
                                      f"t = {(i + 1) * h}; reduce the grid end or "
                                      "raise step_count")
            store[i + 1] = y
        node_t = np.linspace(0.0, t_end, step_count + 1)
        for k in range(1, n_units + 1):
            table[k] = np.interp(times, node_t, store[:, k - 1])

    rate_rows = np.array([rates(t) for t in times])  # (n_times, n_units)
    gap = table[n_units] - table[n_units - 1]
    trading_rate = rate_rows[:, n_units - 1] * gap
    return ExecutionCurve(times=times, inventory=table,
                          trading_rate=trading_rate, initial_units=n_units)
