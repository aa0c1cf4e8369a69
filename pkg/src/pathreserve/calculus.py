"""Finite-difference horizontal and vertical derivatives of path functionals,
the discrete functional Ito residual and the path-dependent PDE residual."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

from .paths import PathDomainError, PathFunctional, StoppedPath

Scheme = Literal["forward", "central", "second_central"]


@dataclass(frozen=True)
class DerivativeEstimate:
    value: float
    bump_size: float
    scheme: Scheme

    def __post_init__(self):
        if not self.bump_size > 0:
            raise ValueError("bump size must be positive")

    def __float__(self) -> float:
        return self.value


def default_vertical_bump(sp: StoppedPath, rel: float = 1e-4) -> float:
    return rel * max(1.0, abs(sp.terminal))


def _next_step(sp: StoppedPath) -> float:
    if sp.stop_index >= sp.grid.n_steps:
        raise PathDomainError("no grid step left for a horizontal extension")
    return float(sp.grid.nodes[sp.stop_index + 1] - sp.t)


def horizontal_derivative(F: PathFunctional, sp: StoppedPath, h: float | None = None) -> DerivativeEstimate:
    """Forward difference ``(F(t+h, w_t) - F(t, w_t)) / h`` along the flat extension.

    ``h`` defaults to the next grid step and is snapped down to the grid.
    """
    h = _next_step(sp) if h is None else h
    if h <= 0:
        raise ValueError("horizontal step must be positive")
    ext = sp.horizontal_extend(h)
    actual = ext.t - sp.t
    if actual <= 0:
        raise PathDomainError(f"step {h} shorter than the next grid step")
    return DerivativeEstimate((F(ext) - F(sp)) / actual, actual, "forward")


def vertical_derivative(F: PathFunctional, sp: StoppedPath, h: float | None = None) -> DerivativeEstimate:
    h = default_vertical_bump(sp) if h is None else h
    value = (F(sp.vertical_bump(h)) - F(sp.vertical_bump(-h))) / (2 * h)
    return DerivativeEstimate(value, h, "central")


def second_vertical_derivative(F: PathFunctional, sp: StoppedPath, h: float | None = None) -> DerivativeEstimate:
    h = default_vertical_bump(sp) if h is None else h
    value = (F(sp.vertical_bump(h)) - 2 * F(sp) + F(sp.vertical_bump(-h))) / (h * h)
    return DerivativeEstimate(value, h, "second_central")


def derivative_triple(F: PathFunctional, sp: StoppedPath, h_v: float | None = None,
                      h_t: float | None = None, analytic: bool = True) -> tuple[float, float, float]:
    """``(DF, grad F, grad^2 F)``; functionals with exact derivatives bypass the stencils."""
    if analytic and getattr(F, "analytic_derivatives", False):
        return tuple(float(v) for v in F.derivatives(sp))
    return (
        horizontal_derivative(F, sp, h_t).value,
        vertical_derivative(F, sp, h_v).value,
        second_vertical_derivative(F, sp, h_v).value,
    )


def ito_residual(
    F: PathFunctional,
    full_path: StoppedPath,
    h_v: float | None = None,
    qv_rate: Callable[[StoppedPath], float] | None = None,
    analytic: bool = False,
) -> float:
    """``|F(T, X_T) - F(0, X_0) - sum_j [DF du + grad F dX + grad^2 F d[X] / 2]|``.

    Derivatives are taken at the left node of every step.  ``d[X]`` is the
    realised squared increment unless ``qv_rate`` gives ``d[X]/dt`` at the
    left node, in which case ``qv_rate * du`` is used.
    """
    if full_path.stop_index != full_path.grid.n_steps:
        raise PathDomainError("the Ito residual needs a path stopped at the horizon")
    grid = full_path.grid
    total = 0.0
    for j in range(grid.n_steps):
        stub = full_path.stop_at(grid.nodes[j])
        du = grid.nodes[j + 1] - grid.nodes[j]
        dx = full_path.values[j + 1] - full_path.values[j]
        d, g, g2 = derivative_triple(F, stub, h_v, du, analytic)
        dqv = dx * dx if qv_rate is None else qv_rate(stub) * du
        total += d * du + g * dx + 0.5 * g2 * dqv
    start = full_path.stop_at(0.0)
    return abs(F(full_path) - F(start) - total)


def pde_residual(
    F: PathFunctional,
    sp: StoppedPath,
    b: PathFunctional,
    sigma: PathFunctional,
    r: Callable[[float], float] | float = 0.0,
    h_v: float | None = None,
    h_t: float | None = None,
    analytic: bool = True,
) -> float:
    """``DF + b grad F + sigma^2 grad^2 F / 2 - r F`` at ``(t, w_t)``."""
    d, g, g2 = derivative_triple(F, sp, h_v, h_t, analytic)
    rate = r(sp.t) if callable(r) else float(r)
    bv = b(sp)
    sv = sigma(sp)
    return d + bv * g + 0.5 * sv * sv * g2 - rate * F(sp)


def residual_rows(points, residuals, bumps) -> list[tuple[float, float, float]]:
    """Rows ``(t, residual, h)`` for CSV diagnostics."""
    return [(float(p.t), float(res), float(h)) for p, res, h in zip(points, residuals, bumps)]


__all__ = [
    "DerivativeEstimate",
    "default_vertical_bump",
    "derivative_triple",
    "horizontal_derivative",
    "ito_residual",
    "pde_residual",
    "residual_rows",
    "second_vertical_derivative",
    "vertical_derivative",
]
