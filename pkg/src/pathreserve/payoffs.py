"""Registry of payment functionals used in policy configurations.

Every payoff is a :class:`~pathreserve.paths.PathFunctional` with a
vectorised :meth:`running` and a :meth:`to_dict` description.  Where the
conditional value ``U_s(t, w_t) = v(s)/v(t) E^Q[phi(s, S_s) | F_t]`` has a
closed form under the given market, :meth:`analytic_U` returns it together
with its horizontal, vertical and second vertical derivatives.
"""

from __future__ import annotations

import math
from typing import Any, Callable

import numpy as np
from scipy.stats import norm

from .asian import AsianOracleParams, annuity_factor
from .paths import PathFunctional, StoppedPath


class NoClosedForm(NotImplementedError):
    pass


class Payoff(PathFunctional):
    kind = "payoff"
    deterministic = False  # True when the value never depends on the path

    def params(self) -> dict[str, Any]:
        return {}

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"name": self.kind}
        p = self.params()
        if p:
            out["params"] = p
        return out

    def supports_analytic(self, market) -> bool:
        return False

    def analytic_U(self, sp: StoppedPath, s: float, market) -> tuple[float, float, float, float]:
        raise NoClosedForm(f"{self.kind} has no closed-form conditional value")

    def __repr__(self) -> str:
        return f"{self.kind}({self.params()})"


class Zero(Payoff):
    kind = "zero"
    deterministic = True
    name = "zero"

    def evaluate(self, batch):
        return np.zeros(batch.n_paths)

    def running(self, batch, start=0):
        return np.zeros((batch.n_paths, batch.stop_index + 1 - start))

    def supports_analytic(self, market):
        return True

    def analytic_U(self, sp, s, market):
        return 0.0, 0.0, 0.0, 0.0


class Constant(Payoff):
    kind = "constant"
    deterministic = True

    def __init__(self, value: float):
        self.value = float(value)
        self.name = f"constant({self.value:g})"

    def params(self):
        return {"value": self.value}

    def evaluate(self, batch):
        return np.full(batch.n_paths, self.value)

    def running(self, batch, start=0):
        return np.full((batch.n_paths, batch.stop_index + 1 - start), self.value)

    def supports_analytic(self, market):
        return True

    def analytic_U(self, sp, s, market):
        u = self.value * market.curve.ratio(sp.t, s)
        return u, market.curve.rate(sp.t) * u, 0.0, 0.0


class Table(Payoff):
    """Deterministic amount interpolated linearly in time from a user table."""

    kind = "table"
    deterministic = True

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.times.shape != self.values.shape or self.times.size == 0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("table needs matching, strictly increasing times and values")
        self.name = "table"

    def params(self):
        return {"times": self.times.tolist(), "values": self.values.tolist()}

    def at(self, t):
        return np.interp(t, self.times, self.values)

    def evaluate(self, batch):
        return np.full(batch.n_paths, float(self.at(batch.t)))

    def running(self, batch, start=0):
        row = self.at(batch.grid.nodes[start: batch.stop_index + 1])
        return np.broadcast_to(row, (batch.n_paths, row.size)).copy()

    def supports_analytic(self, market):
        return True

    def analytic_U(self, sp, s, market):
        u = float(self.at(s)) * market.curve.ratio(sp.t, s)
        return u, market.curve.rate(sp.t) * u, 0.0, 0.0


class Endpoint(Payoff):
    """``scale * w(t)`` (unit-linked payment)."""

    kind = "endpoint"

    def __init__(self, scale: float = 1.0):
        self.scale = float(scale)
        self.name = f"endpoint({self.scale:g})"

    def params(self):
        return {"scale": self.scale}

    def evaluate(self, batch):
        return self.scale * batch.values[:, -1]

    def running(self, batch, start=0):
        return self.scale * batch.values[:, start:]

    def supports_analytic(self, market):
        return True

    def analytic_U(self, sp, s, market):
        # the discounted asset is a Q-martingale whatever the volatility
        return self.scale * sp.terminal, 0.0, self.scale, 0.0


class RunningAverage(Payoff):
    """``scale * (1/t) int_0^t w`` with value ``scale * w(0)`` at ``t = 0``."""

    kind = "running-average"

    def __init__(self, scale: float = 1.0):
        self.scale = float(scale)
        self.name = f"running-average({self.scale:g})"

    def params(self):
        return {"scale": self.scale}

    def evaluate(self, batch):
        return self.running(batch, batch.stop_index)[:, 0]

    def running(self, batch, start=0):
        ints = batch.integrals()[:, start:]
        t = batch.grid.nodes[start: batch.stop_index + 1]
        safe_t = np.where(t > 0, t, 1.0)
        avg = np.where(t > 0, ints / safe_t, batch.values[:, start:])
        return self.scale * avg

    def supports_analytic(self, market):
        return market.curve.constant_rate is not None

    def analytic_U(self, sp, s, market):
        r = market.curve.constant_rate
        if r is None:
            raise NoClosedForm("running-average closed form needs a constant rate")
        if s <= 0:
            raise NoClosedForm("running average undefined at s = 0")
        AsianOracleParams(r, s)
        tau = max(s - sp.t, 0.0)
        disc = math.exp(-r * tau)
        integral = sp.path_integral()
        a = float(annuity_factor(r, s, tau))
        u = disc / s * integral + sp.terminal * a
        return self.scale * u, self.scale * r * disc / s * integral, self.scale * a, 0.0


class RunningMax(Payoff):
    kind = "running-max"

    def __init__(self, scale: float = 1.0):
        self.scale = float(scale)
        self.name = f"running-max({self.scale:g})"

    def params(self):
        return {"scale": self.scale}

    def evaluate(self, batch):
        return self.scale * np.max(batch.values, axis=1)

    def running(self, batch, start=0):
        return self.scale * np.maximum.accumulate(batch.values, axis=1)[:, start:]


class Guaranteed(Payoff):
    """``max(strike, scale * w(t))``: unit-linked payment with a guaranteed floor (GMMB/GMDB style)."""

    kind = "guaranteed"

    def __init__(self, strike: float, scale: float = 1.0):
        if scale <= 0:
            raise ValueError("guaranteed payoff needs a positive scale")
        self.strike = float(strike)
        self.scale = float(scale)
        self.name = f"guaranteed({self.strike:g}, {self.scale:g})"

    def params(self):
        return {"strike": self.strike, "scale": self.scale}

    def evaluate(self, batch):
        return np.maximum(self.strike, self.scale * batch.values[:, -1])

    def running(self, batch, start=0):
        return np.maximum(self.strike, self.scale * batch.values[:, start:])

    def supports_analytic(self, market):
        return market.constant_volatility is not None

    def analytic_U(self, sp, s, market):
        sigma = market.constant_volatility
        if sigma is None:
            raise NoClosedForm("guaranteed payoff closed form needs constant volatility")
        a, k = self.scale, self.strike
        x = sp.terminal
        tau = s - sp.t
        disc = market.curve.ratio(sp.t, s)
        r_t = market.curve.rate(sp.t)
        if tau <= 1e-14 or sigma == 0.0:
            floor = k * disc
            if a * x > floor:
                return a * x, 0.0, a, 0.0
            return floor, r_t * floor, 0.0, 0.0
        # max(K, aS) = K + a (S - K/a)^+  ->  K D N(-d2) + a x N(d1)
        kk = k / a
        vol = sigma * math.sqrt(tau)
        if kk <= 0:
            return a * x, 0.0, a, 0.0
        d1 = (math.log(x / kk) - math.log(disc) + 0.5 * vol * vol) / vol
        d2 = d1 - vol
        u = k * disc * norm.cdf(-d2) + a * x * norm.cdf(d1)
        grad = a * norm.cdf(d1)
        grad2 = a * norm.pdf(d1) / (x * vol)
        theta_call = -x * sigma * norm.pdf(d1) / (2 * math.sqrt(tau)) - r_t * kk * disc * norm.cdf(d2)
        horizontal = a * theta_call + r_t * k * disc
        return u, horizontal, grad, grad2


class OnDates(Payoff):
    """``inner`` at the listed dates, zero elsewhere (restricts a jump payment to some ``t_k``)."""

    kind = "on-dates"

    def __init__(self, inner: Payoff, dates):
        self.inner = inner
        self.dates = np.asarray(sorted(float(d) for d in dates))
        self.deterministic = inner.deterministic
        self.name = f"{inner.name}@{self.dates.tolist()}"

    def _mask(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.any(np.abs(t[:, None] - self.dates[None, :]) <= 1e-12 * max(1.0, float(np.max(np.abs(t)))), axis=1)

    def params(self):
        return {"inner": self.inner.to_dict(), "dates": self.dates.tolist()}

    def evaluate(self, batch):
        if not self._mask(batch.t)[0]:
            return np.zeros(batch.n_paths)
        return self.inner.evaluate(batch)

    def running(self, batch, start=0):
        return self.inner.running(batch, start) * self._mask(batch.grid.nodes[start: batch.stop_index + 1])

    def supports_analytic(self, market):
        return self.inner.supports_analytic(market)

    def analytic_U(self, sp, s, market):
        if not self._mask(s)[0]:
            return 0.0, 0.0, 0.0, 0.0
        return self.inner.analytic_U(sp, s, market)


class Scaled(Payoff):
    kind = "scaled"

    def __init__(self, inner: Payoff, factor: float):
        self.inner = inner
        self.factor = float(factor)
        self.deterministic = inner.deterministic
        self.name = f"{self.factor:g}*{inner.name}"

    def params(self):
        return {"inner": self.inner.to_dict(), "factor": self.factor}

    def evaluate(self, batch):
        return self.factor * self.inner.evaluate(batch)

    def running(self, batch, start=0):
        return self.factor * self.inner.running(batch, start)

    def supports_analytic(self, market):
        return self.inner.supports_analytic(market)

    def analytic_U(self, sp, s, market):
        return tuple(self.factor * v for v in self.inner.analytic_U(sp, s, market))


class Sum(Payoff):
    kind = "sum"

    def __init__(self, parts):
        self.parts = list(parts)
        self.deterministic = all(p.deterministic for p in self.parts)
        self.name = " + ".join(p.name for p in self.parts) or "zero"

    def params(self):
        return {"parts": [p.to_dict() for p in self.parts]}

    def evaluate(self, batch):
        out = np.zeros(batch.n_paths)
        for p in self.parts:
            out = out + p.evaluate(batch)
        return out

    def running(self, batch, start=0):
        out = np.zeros((batch.n_paths, batch.stop_index + 1 - start))
        for p in self.parts:
            out = out + p.running(batch, start)
        return out

    def supports_analytic(self, market):
        return all(p.supports_analytic(market) for p in self.parts)

    def analytic_U(self, sp, s, market):
        tot = np.zeros(4)
        for p in self.parts:
            tot += np.asarray(p.analytic_U(sp, s, market))
        return tuple(float(v) for v in tot)


REGISTRY: dict[str, Callable[..., Payoff]] = {
    "zero": Zero,
    "constant": Constant,
    "table": Table,
    "endpoint": Endpoint,
    "running-average": RunningAverage,
    "running-max": RunningMax,
    "guaranteed": Guaranteed,
}


def build_payoff(spec: dict[str, Any]) -> Payoff:
    """Instantiate ``{"name": ..., "params": {...}}`` from the registry."""
    name = spec.get("name")
    params = dict(spec.get("params") or {})
    if name == "on-dates":
        return OnDates(build_payoff(params["inner"]), params["dates"])
    if name == "scaled":
        return Scaled(build_payoff(params["inner"]), params["factor"])
    if name == "sum":
        return Sum(build_payoff(p) for p in params["parts"])
    if name not in REGISTRY:
        raise KeyError(f"unknown payoff {name!r}; known: {sorted(REGISTRY)}")
    return REGISTRY[name](**params)


def is_zero(p: PathFunctional | None) -> bool:
    return p is None or isinstance(p, Zero) or (isinstance(p, Sum) and all(is_zero(q) for q in p.parts))
