"""Closed-form conditional value of the running-average payoff under Black-Scholes.

For ``phi(s, w) = (1/s) int_0^s w(v) dv`` and a constant short rate ``r``,
the discounted conditional expectation is

    U(t, w_t) = exp(-r(s-t)) / s * int_0^t w  +  w(t) * (1 - exp(-r(s-t))) / (r s)

with horizontal derivative ``r exp(-r(s-t)) / s * int_0^t w``, vertical
derivative ``(1 - exp(-r(s-t))) / (r s)`` and zero second vertical derivative.
Everything numeric in the engine is checked against these formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .paths import PathBatch, PathDomainError, PathFunctional, StoppedPath

_SMALL_RATE = 1e-8


@dataclass(frozen=True)
class AsianOracleParams:
    r: float
    s: float

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("rate must be non-negative")
        if self.s <= 0:
            raise ValueError("payoff maturity must be positive")


def annuity_factor(r: float, s: float, tau):
    """``(1 - exp(-r tau)) / (r s)``, with the ``r -> 0`` limit ``tau / s``."""
    tau = np.asarray(tau, dtype=float)
    if r < _SMALL_RATE:
        return tau / s
    return -np.expm1(-r * tau) / (r * s)


def _check(params: AsianOracleParams, t: float) -> float:
    tau = params.s - t
    if tau < -1e-12:
        raise PathDomainError(f"evaluation time {t} after payoff maturity {params.s}")
    return max(tau, 0.0)


def asian_U(params: AsianOracleParams, sp: StoppedPath) -> float:
    tau = _check(params, sp.t)
    disc = math.exp(-params.r * tau)
    return disc / params.s * sp.path_integral() + sp.terminal * float(annuity_factor(params.r, params.s, tau))


def asian_derivatives(params: AsianOracleParams, sp: StoppedPath) -> tuple[float, float, float]:
    """``(D U, grad U, grad^2 U)`` at ``(t, w_t)``."""
    tau = _check(params, sp.t)
    disc = math.exp(-params.r * tau)
    horizontal = params.r * disc / params.s * sp.path_integral()
    vertical = float(annuity_factor(params.r, params.s, tau))
    return horizontal, vertical, 0.0


def verify_pde_identity(params: AsianOracleParams, sp: StoppedPath, sigma: float = 0.2) -> float:
    """Floating-point residual of ``DU + w r grad U + sigma^2 w^2 grad^2 U / 2 - r U``."""
    if sp.t >= params.s:
        raise PathDomainError("the identity is checked strictly before maturity")
    d, g, g2 = asian_derivatives(params, sp)
    x = sp.terminal
    return d + x * params.r * g + 0.5 * sigma**2 * x**2 * g2 - params.r * asian_U(params, sp)


class BoundCheck(NamedTuple):
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12) + 1e-300


def _value_on_flat_extension(params: AsianOracleParams, sp: StoppedPath, u: float) -> float:
    # U(u, w_t): the path is frozen at w(t) on [t, u]
    integral = sp.path_integral() + sp.terminal * (u - sp.t)
    return math.exp(-params.r * (params.s - u)) / params.s * integral + sp.terminal * float(
        annuity_factor(params.r, params.s, params.s - u)
    )


def assumption_bound(params: AsianOracleParams, sp: StoppedPath, u: float | None = None) -> BoundCheck:
    """Dominating bound ``|U(u, w_t)| <= sup|w| (1 + (1 - e^{-rs}) / (rs))`` for ``t <= u <= s``."""
    u = sp.t if u is None else u
    if not sp.t - 1e-12 <= u <= params.s + 1e-12:
        raise PathDomainError(f"need t <= u <= s, got t={sp.t}, u={u}, s={params.s}")
    lhs = abs(_value_on_flat_extension(params, sp, u))
    sup = float(np.max(np.abs(sp.values)))
    rhs = sup * (1.0 + float(annuity_factor(params.r, params.s, params.s)))
    return BoundCheck(lhs, rhs)


def derivative_bounds(params: AsianOracleParams, sp: StoppedPath, u: float | None = None) -> dict[str, BoundCheck]:
    """Analogous dominating bounds for the derivatives (our own construction).

    ``|D U(u, w_t)| <= r sup|w|`` and ``|grad U| <= (1 - e^{-rs}) / (rs)``;
    the second vertical derivative vanishes identically.
    """
    u = sp.t if u is None else u
    sup = float(np.max(np.abs(sp.values)))
    integral = sp.path_integral() + sp.terminal * (u - sp.t)
    d = abs(params.r * math.exp(-params.r * (params.s - u)) / params.s * integral)
    g = float(annuity_factor(params.r, params.s, params.s - u))
    return {
        "horizontal": BoundCheck(d, params.r * sup),
        "vertical": BoundCheck(abs(g), float(annuity_factor(params.r, params.s, params.s))),
        "second_vertical": BoundCheck(0.0, 0.0),
    }


class AsianOracle(PathFunctional):
    """``U_s`` of the running-average payoff as a path functional with exact derivatives."""

    analytic_derivatives = True

    def __init__(self, params: AsianOracleParams):
        self.params = params
        self.name = f"asian-oracle(r={params.r:g}, s={params.s:g})"

    def evaluate(self, batch: PathBatch) -> np.ndarray:
        tau = _check(self.params, batch.t)
        disc = math.exp(-self.params.r * tau)
        integral = batch.integrals()[:, -1]
        return disc / self.params.s * integral + batch.values[:, -1] * float(annuity_factor(self.params.r, self.params.s, tau))

    def derivatives(self, sp: StoppedPath) -> tuple[float, float, float]:
        return asian_derivatives(self.params, sp)
