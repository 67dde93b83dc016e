"""Closed-form continuous-selling (fluid) limits.

As the trading unit shrinks and the fill rate scales up, the controlled
inventory becomes a deterministic curve and the value solves a first-order
PDE with explicit solutions for power-law and exponential books.  These are
the analytic anchors the discrete solvers converge to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .discrete import horizon_factor
from .intensity import (
    ExpDecayIntensity,
    IntensityModel,
    MarketParams,
    PowerLawIntensity,
)
from .numerics import Bracket, integrate_ode, log_integral, solve_monotone_root, OdeProblem

__all__ = [
    "FluidSolution",
    "power_fluid",
    "power_trade_curve",
    "exp_fluid_finite",
    "exp_fluid_infinite",
    "fluid_passage_time",
    "passage_time_quadrature",
    "fluid_solution",
]


def power_fluid(x: float, t_remaining: float, lam: float, alpha: float,
                r: float) -> tuple[float, float]:
    """Fluid value and spread for a power-law book with discounting.

    v(x,T) = (lam/(r*alpha))**(1/alpha) * x**((alpha-1)/alpha) * factor(T)
    s0(x,T) = (lam/(alpha*r))**(1/alpha) * x**(-1/alpha) * factor(T)

    At x = 0 the value vanishes and the spread is reported as +inf (the
    marginal spread diverges as inventory empties).
    """
    if x < 0.0:
        raise ValueError("inventory must be nonnegative")
    if alpha <= 1.0 or lam <= 0.0 or r <= 0.0:
        raise ValueError("requires alpha > 1, lam > 0, r > 0")
    factor = horizon_factor(t_remaining, alpha, r)
    scale = (lam / (r * alpha)) ** (1.0 / alpha)
    if x == 0.0:
        return 0.0, math.inf
    return (scale * x ** ((alpha - 1.0) / alpha) * factor,
            scale * x ** (-1.0 / alpha) * factor)


def power_trade_curve(t: float, x: float, t_horizon: float, alpha: float,
                      r: float) -> float:
    """Optimally-controlled fluid inventory at time t, starting from x.

    The exponential of the accumulated optimal trading rate integrates in
    closed form to
        X(t) = x * (exp(a*(T-t)) - 1) / (exp(a*T) - 1),   a = alpha*r,
    evaluated via expm1 in the decaying form for stability; it decreases
    strictly and reaches zero smoothly at t = T.
    """
    if not 0.0 <= t < t_horizon:
        raise ValueError(f"requires 0 <= t < horizon, got t = {t}, horizon = {t_horizon}")
    a = alpha * r
    return x * math.exp(-a * t) * (-math.expm1(-a * (t_horizon - t))) / (-math.expm1(-a * t_horizon))


def exp_fluid_finite(x: float, t_horizon: float, lam: float,
                     kappa: float) -> tuple[float, float, Callable[[float], float]]:
    """Zero-rate fluid solution for an exponential book: (value, spread, curve).

    Two regimes split at lam*T/x = e.  When inventory is small enough to
    finish (lam*T/x >= e) the spread is (1/kappa)*log(lam*T/x), the value
    x*spread, and the inventory declines linearly to zero.  Otherwise the
    book's capped fill rate lam/e binds: spread 1/kappa, value lam*T/(kappa*e)
    independent of x, and the curve x - lam*t/e stays positive at T.
    """
    if x < 0.0 or t_horizon <= 0.0 or lam <= 0.0 or kappa <= 0.0:
        raise ValueError("requires x >= 0, T > 0, lam > 0, kappa > 0")
    if x == 0.0:
        return 0.0, math.inf, lambda t: 0.0
    ratio = lam * t_horizon / x
    if ratio >= math.e:
        s0 = math.log(ratio) / kappa
        return x * s0, s0, lambda t: x * (1.0 - t / t_horizon)
    s0 = 1.0 / kappa
    return lam * t_horizon / (kappa * math.e), s0, lambda t: x - lam * t / math.e


def exp_fluid_infinite(x: float, lam: float, kappa: float,
                       r: float) -> tuple[float, float]:
    """Stationary fluid solution for an exponential book with r > 0.

    The value solves li(e*kappa*r*v/lam) = -e*r*x/lam on (0, lam/(kappa*r*e))
    (li maps that interval monotonically onto (-inf, 0), so the root is
    unique); the spread is (1/kappa)*log(lam/(kappa*r*v)).
    """
    if x < 0.0:
        raise ValueError("inventory must be nonnegative")
    if min(lam, kappa, r) <= 0.0:
        raise ValueError("requires lam, kappa, r > 0")
    if x == 0.0:
        return 0.0, math.inf
    v_cap = lam / (kappa * r * math.e)
    target = -math.e * r * x / lam
    scale = math.e * kappa * r / lam  # v -> li argument

    hi = v_cap * (1.0 - 1e-15)
    if log_integral(scale * hi) >= target:
        # v is within double resolution of the asymptote
        v = hi
    else:
        g = lambda v: log_integral(scale * v) - target
        lo = v_cap * 1e-12
        while g(lo) < 0.0:
            lo *= 1e-3
            if lo < 5e-300:
                raise ArithmeticError("failed to bracket the li-equation root")
        v = solve_monotone_root(g, Bracket(lo, hi, tolerance=1e-15 * v_cap))
    return v, math.log(lam / (kappa * r * v)) / kappa


def fluid_passage_time(x1: float, x2: float, lam: float, alpha: float,
                       r: float) -> float:
    """Expected time for the optimally-controlled fluid inventory to fall
    from x2 to x1 (power-law book, infinite horizon): log(x2/x1)/(alpha*r).

    The remainder below any level is executed arbitrarily slowly, so x1 must
    stay positive.
    """
    if x1 <= 0.0:
        raise ValueError("x1 must be positive: passage to 0 takes forever")
    if x2 < x1:
        raise ValueError("requires x1 <= x2")
    del lam  # the optimal trading rate alpha*r*u does not depend on lam
    return math.log(x2 / x1) / (alpha * r)


def passage_time_quadrature(x1: float, x2: float,
                            trading_rate: Callable[[float], float]) -> float:
    """General passage-time form: integral of 1/rate(u) du over [x1, x2],
    where rate(u) is the fill intensity at the inventory-u optimal spread."""
    if x1 <= 0.0 or x2 < x1:
        raise ValueError("requires 0 < x1 <= x2")
    if x1 == x2:
        return 0.0
    val, _ = quad(lambda u: 1.0 / trading_rate(u), x1, x2,
                  epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


@dataclass(frozen=True)
class FluidSolution:
    """Evaluable fluid value, spread, and trade curve for one model/market."""

    model: IntensityModel
    market: MarketParams
    value: Callable[[float], float]
    spread: Callable[[float], float]
    trade_curve: Callable[[float, float], float]  # (t, x0) -> inventory


def fluid_solution(model: IntensityModel, market: MarketParams) -> FluidSolution:
    """Bundle the closed-form fluid solution for a supported model/market."""
    if isinstance(model, PowerLawIntensity):
        if market.r <= 0.0:
            if market.infinite_horizon:
                raise ValueError("infinite horizon with r = 0 has no finite value")
            # r -> 0 limit: factor -> (lam*T)**(1/alpha) scale
            a = model.alpha
            scale = model.lam ** (1.0 / a)

            def value(x, _s=scale, _a=a, _t=market.horizon):
                return _s * x ** ((_a - 1.0) / _a) * _t ** (1.0 / _a)

            def spread(x, _s=scale, _a=a, _t=market.horizon):
                return math.inf if x == 0.0 else _s * x ** (-1.0 / _a) * _t ** (1.0 / _a)

            # r -> 0 limit of the discounted curve: the relative trading rate
            # becomes 1/(T-t), so X(t) = x*(T-t)/T.
            def curve(t, x0, _t=market.horizon):
                if not 0.0 <= t < _t:
                    raise ValueError("requires 0 <= t < horizon")
                return x0 * (_t - t) / _t

            return FluidSolution(model, market, value, spread, curve)

        def value(x, _m=model, _mk=market):
            return power_fluid(x, _mk.horizon, _m.lam, _m.alpha, _mk.r)[0]

        def spread(x, _m=model, _mk=market):
            return power_fluid(x, _mk.horizon, _m.lam, _m.alpha, _mk.r)[1]

        if market.infinite_horizon:
            def curve(t, x0, _a=model.alpha, _r=market.r):
                return x0 * math.exp(-_a * _r * t)
        else:
            def curve(t, x0, _m=model, _mk=market):
                return power_trade_curve(t, x0, _mk.horizon, _m.alpha, _mk.r)

        return FluidSolution(model, market, value, spread, curve)

    if isinstance(model, ExpDecayIntensity):
        if market.r == 0.0 and not market.infinite_horizon:
            def value(x, _m=model, _mk=market):
                return exp_fluid_finite(x, _mk.horizon, _m.lam, _m.kappa)[0]

            def spread(x, _m=model, _mk=market):
                return exp_fluid_finite(x, _mk.horizon, _m.lam, _m.kappa)[1]

            def curve(t, x0, _m=model, _mk=market):
                return exp_fluid_finite(x0, _mk.horizon, _m.lam, _m.kappa)[2](t)

            return FluidSolution(model, market, value, spread, curve)
        if market.infinite_horizon:
            def value(x, _m=model, _mk=market):
                return exp_fluid_infinite(x, _m.lam, _m.kappa, _mk.r)[0]

            def spread(x, _m=model, _mk=market):
                return exp_fluid_infinite(x, _m.lam, _m.kappa, _mk.r)[1]

            def curve(t, x0, _m=model, _mk=market):
                # dX/dt = -rate(s0(X)) = -kappa*r*v(X); integrate numerically
                if t == 0.0:
                    return x0
                k = _m.kappa * _mk.r

                def rhs(_t, y):
                    xv = max(float(y[0]), 0.0)
                    if xv == 0.0:
                        return np.array([0.0])
                    return np.array([-k * exp_fluid_infinite(xv, _m.lam, _m.kappa, _mk.r)[0]])

                _, ys = integrate_ode(OdeProblem(1, rhs, (0.0, t), [x0],
                                                 step_count=max(200, int(50 * t))))
                return float(ys[-1, 0])

            return FluidSolution(model, market, value, spread, curve)
        raise ValueError("exponential fluid solution needs r = 0 with finite "
                         "horizon or r > 0 with infinite horizon")

    raise ValueError("no closed-form fluid solution for generic depth models")
