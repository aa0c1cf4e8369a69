"""Financial model: path-dependent geometric SDE for the asset, discounting, diagnostics."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy.optimize import brentq

from . import rng
from .paths import PathBatch, PathDomainError, PathFunctional, StoppedPath, TimeGrid, d_infinity


class SimulationError(RuntimeError):
    def __init__(self, message: str, path: int | None = None, node: int | None = None):
        super().__init__(message)
        self.path = path
        self.node = node


class SingularityError(ValueError):
    """Volatility is not strictly positive where the market price of risk is needed."""


class DiscountCurve:
    """Piecewise-constant, right-continuous short rate ``r(t) >= 0`` and ``v(t) = exp(-int_0^t r)``."""

    def __init__(self, breaks: Sequence[float] = (0.0,), rates: Sequence[float] = (0.0,)):
        breaks = np.asarray(breaks, dtype=float)
        rates = np.asarray(rates, dtype=float)
        if breaks.shape != rates.shape or breaks.size == 0:
            raise ValueError("breaks and rates must have the same non-zero length")
        if breaks[0] != 0.0 or np.any(np.diff(breaks) <= 0):
            raise ValueError("breaks must start at 0 and increase strictly")
        if np.any(~np.isfinite(rates)) or np.any(rates < 0):
            raise ValueError("rates must be finite and non-negative")
        self.breaks = breaks
        self.rates = rates
        self._cum = np.concatenate([[0.0], np.cumsum(rates[:-1] * np.diff(breaks))])

    @classmethod
    def constant(cls, r: float) -> "DiscountCurve":
        return cls((0.0,), (r,))

    @property
    def constant_rate(self) -> float | None:
        return float(self.rates[0]) if self.rates.size == 1 else None

    def _idx(self, t):
        return np.clip(np.searchsorted(self.breaks, t, side="right") - 1, 0, self.breaks.size - 1)

    def rate(self, t):
        out = self.rates[self._idx(t)]
        return float(out) if np.ndim(out) == 0 else out

    def integral(self, t):
        """``int_0^t r(u) du``."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0):
            raise PathDomainError("negative time in discount curve")
        k = self._idx(t_arr)
        out = self._cum[k] + self.rates[k] * (t_arr - self.breaks[k])
        return float(out) if out.ndim == 0 else out

    def discount(self, t):
        out = np.exp(-np.asarray(self.integral(t)))
        return float(out) if out.ndim == 0 else out

    def ratio(self, t: float, s):
        """``v(s) / v(t)`` for ``s >= t``."""
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr < t - 1e-12):
            raise PathDomainError(f"discount ratio needs s >= t (t={t})")
        out = np.exp(-(np.asarray(self.integral(s_arr)) - self.integral(t)))
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"breaks": self.breaks.tolist(), "rates": self.rates.tolist()}


def discount(curve: DiscountCurve, t: float) -> float:
    return curve.discount(t)


def discount_ratio(curve: DiscountCurve, t: float, s: float) -> float:
    if t > s + 1e-12:
        raise PathDomainError(f"discount_ratio needs t <= s, got t={t}, s={s}")
    return curve.ratio(t, s)


def _running_average(t, x, integral):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        avg = np.where(t > 0, integral / np.where(t > 0, t, 1.0), x)
    return avg


class ConstantCoefficient(PathFunctional):
    has_summary = True

    def __init__(self, value: float):
        self.value = float(value)
        self.name = f"constant({value:g})"

    def evaluate(self, batch: PathBatch) -> np.ndarray:
        return np.full(batch.n_paths, self.value)

    def from_summary(self, t, x, integral, running_max):
        return self.value


class RunningAverageDrift(PathFunctional):
    """``kappa * (1/t) int_0^t w`` (``w(0)`` at ``t = 0``)."""

    has_summary = True

    def __init__(self, kappa: float):
        self.kappa = float(kappa)
        self.name = f"running-average-drift({kappa:g})"

    def evaluate(self, batch: PathBatch) -> np.ndarray:
        return self.kappa * _running_average(batch.t, batch.values[:, -1], batch.integrals()[:, -1])

    def from_summary(self, t, x, integral, running_max):
        return self.kappa * _running_average(t, x, integral)


class RunningAverageVolatility(PathFunctional):
    """``sigma0 * (1 + eps * running average)``."""

    has_summary = True

    def __init__(self, sigma0: float, eps: float):
        if sigma0 <= 0 or eps < 0:
            raise ValueError("need sigma0 > 0 and eps >= 0")
        self.sigma0 = float(sigma0)
        self.eps = float(eps)
        self.name = f"running-average-vol({sigma0:g}, {eps:g})"

    def evaluate(self, batch: PathBatch) -> np.ndarray:
        avg = _running_average(batch.t, batch.values[:, -1], batch.integrals()[:, -1])
        return self.sigma0 * (1.0 + self.eps * avg)

    def from_summary(self, t, x, integral, running_max):
        return self.sigma0 * (1.0 + self.eps * _running_average(t, x, integral))


class _Scaled(PathFunctional):
    """``w(t) * inner(t, w_t)`` (absolute SDE coefficient from a relative one)."""

    def __init__(self, inner: PathFunctional, name: str):
        self.inner = inner
        self.name = name

    def evaluate(self, batch: PathBatch) -> np.ndarray:
        return batch.values[:, -1] * self.inner.evaluate(batch)


class _RateTimesEndpoint(PathFunctional):
    def __init__(self, curve: DiscountCurve):
        self.curve = curve
        self.name = "r(t) w(t)"

    def evaluate(self, batch: PathBatch) -> np.ndarray:
        return self.curve.rate(batch.t) * batch.values[:, -1]


@dataclass
class MarketModel:
    """``dS/S = b_tilde dt + sigma_tilde dW`` under P; drift ``r(t)`` under Q."""

    b_tilde: PathFunctional
    sigma_tilde: PathFunctional
    s0: float
    curve: DiscountCurve = field(default_factory=lambda: DiscountCurve.constant(0.0))

    def __post_init__(self):
        if not self.s0 > 0:
            raise ValueError("initial asset value must be positive")

    @classmethod
    def black_scholes(cls, mu: float, sigma: float, s0: float = 1.0, r: float | DiscountCurve = 0.0) -> "MarketModel":
        curve = r if isinstance(r, DiscountCurve) else DiscountCurve.constant(r)
        return cls(ConstantCoefficient(mu), ConstantCoefficient(sigma), s0, curve)

    @property
    def constant_volatility(self) -> float | None:
        if isinstance(self.sigma_tilde, ConstantCoefficient):
            return self.sigma_tilde.value
        return None

    def drift(self, measure: str = "P") -> PathFunctional:
        """Absolute drift ``b(t, w) = w(t) b_tilde`` (``r(t) w(t)`` under Q)."""
        if measure == "Q":
            return _RateTimesEndpoint(self.curve)
        return _Scaled(self.b_tilde, "w(t) b_tilde")

    def volatility(self) -> PathFunctional:
        return _Scaled(self.sigma_tilde, "w(t) sigma_tilde")

    def initial_path(self, grid: TimeGrid) -> StoppedPath:
        return StoppedPath(grid, 0, [self.s0])


def _coefficient(fn: PathFunctional, grid, values, jumps, k, x, integral, running_max):
    if isinstance(fn, ConstantCoefficient):
        return fn.value
    if fn.has_summary:
        return fn.from_summary(grid.nodes[k], x, integral, running_max)
    return fn.evaluate(PathBatch(grid, values[:, : k + 1], jumps))


@dataclass(eq=False)
class ScenarioBatch:
    """Simulated asset paths; rows agree on ``[0, t0]`` with the conditioning stub."""

    grid: TimeGrid
    values: np.ndarray
    seed: int
    measure: str
    jumps: tuple = ()
    start_index: int = 0
    antithetic: bool = False

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def paths(self) -> list[StoppedPath]:
        return [self.path(k) for k in range(self.n_paths)]

    def path(self, k: int) -> StoppedPath:
        return StoppedPath(self.grid, self.values.shape[1] - 1, self.values[k], self.jumps)

    def as_batch(self) -> PathBatch:
        return PathBatch(self.grid, self.values, self.jumps)

    @property
    def terminal(self) -> np.ndarray:
        return self.values[:, -1]

    _HEAD = struct.Struct("<4sHcqIIIII?")

    def to_bytes(self) -> bytes:
        head = self._HEAD.pack(
            b"SCNB", 1, self.measure.encode("ascii"), int(self.seed), self.grid.nodes.size,
            self.n_paths, self.values.shape[1], len(self.jumps), self.start_index, self.antithetic,
        )
        jumps = b"".join(struct.pack("<Id", i, h) for i, h in self.jumps)
        return head + self.grid.nodes.astype("<f8").tobytes() + jumps + np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ScenarioBatch":
        magic, version, measure, seed, n_nodes, n, m, nj, start, anti = cls._HEAD.unpack_from(data, 0)
        if magic != b"SCNB" or version != 1:
            raise ValueError("not a scenario batch cache (or unsupported version)")
        off = cls._HEAD.size
        nodes = np.frombuffer(data, "<f8", n_nodes, off)
        off += 8 * n_nodes
        jumps = []
        for _ in range(nj):
            jumps.append(struct.unpack_from("<Id", data, off))
            off += struct.calcsize("<Id")
        values = np.frombuffer(data, "<f8", n * m, off).reshape(n, m).astype(float)
        return cls(TimeGrid(nodes), values, seed, measure.decode("ascii"), tuple(jumps), start, anti)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioBatch":
        return cls.from_bytes(Path(path).read_bytes())


def iter_continuations(
    model: MarketModel,
    xi: StoppedPath,
    n: int,
    measure: str = "Q",
    seed: int = 0,
    tag: str = "asset",
    antithetic: bool = False,
    stop_index: int | None = None,
    chunk: int = 8 * rng.BLOCK,
) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(first_path_index, values)`` chunks of continuations of ``xi``.

    ``values`` has shape ``(chunk_size, stop_index + 1)``; columns up to the
    stop index of ``xi`` repeat ``xi``.  Coefficients are evaluated at the
    left end of every step on the concatenated history (log-Euler scheme).
    """
    if measure not in ("P", "Q"):
        raise ValueError("measure must be 'P' or 'Q'")
    grid = xi.grid
    j0 = xi.stop_index
    stop = grid.n_steps if stop_index is None else stop_index
    if stop < j0:
        raise PathDomainError(f"cannot simulate back from index {j0} to {stop}")
    if np.any(xi.values <= 0):
        raise SimulationError("conditioning path must be positive")
    tag_id = rng.stream_tag(tag)
    nodes = grid.nodes
    dts = np.diff(nodes)
    r_int = np.diff(model.curve.integral(nodes))
    xi_integral = xi.path_integral()
    xi_max = float(np.max(xi.values))
    for start in range(0, n, chunk):
        size = min(chunk, n - start)
        values = np.empty((size, stop + 1))
        values[:, : j0 + 1] = xi.values
        x = np.full(size, xi.terminal)
        integral = np.full(size, xi_integral)
        rmax = np.full(size, xi_max)
        for k in range(j0, stop):
            dt = dts[k]
            sig = _coefficient(model.sigma_tilde, grid, values, xi.jumps, k, x, integral, rmax)
            if measure == "Q":
                drift = r_int[k]
            else:
                drift = _coefficient(model.b_tilde, grid, values, xi.jumps, k, x, integral, rmax) * dt
            z = rng.normals(seed, tag_id, k, start, size, antithetic)
            with np.errstate(over="ignore", invalid="ignore"):
                x_new = x * np.exp(drift - 0.5 * sig * sig * dt + sig * math.sqrt(dt) * z)
            bad = ~np.isfinite(x_new) | (x_new <= 0)
            if np.any(bad):
                p = int(np.argmax(bad))
                raise SimulationError(f"non-finite or non-positive asset value on path {start + p} at node {k + 1}", start + p, k + 1)
            integral = integral + 0.5 * (x + x_new) * dt
            rmax = np.maximum(rmax, x_new)
            values[:, k + 1] = x_new
            x = x_new
        yield start, values


def resimulate_from(
    model: MarketModel,
    xi: StoppedPath,
    n: int,
    measure: str = "Q",
    seed: int = 0,
    antithetic: bool = False,
    tag: str = "asset",
    stop_index: int | None = None,
) -> ScenarioBatch:
    if n < 1:
        raise ValueError("need at least one path")
    if xi.stop_index >= xi.grid.n_steps:
        raise PathDomainError("conditioning stub already reaches the horizon")
    chunks = [v for _, v in iter_continuations(model, xi, n, measure, seed, tag, antithetic, stop_index)]
    return ScenarioBatch(xi.grid, np.concatenate(chunks), seed, measure, xi.jumps, xi.stop_index, antithetic)


def simulate(model: MarketModel, grid: TimeGrid, n: int, measure: str = "Q", seed: int = 0,
             antithetic: bool = False, tag: str = "asset") -> ScenarioBatch:
    return resimulate_from(model, model.initial_path(grid), n, measure, seed, antithetic, tag)


def market_price_of_risk(model: MarketModel, sp: StoppedPath) -> float:
    sigma = model.sigma_tilde(sp)
    if not (np.isfinite(sigma) and sigma > 1e-14):
        raise SingularityError(f"volatility {sigma} is not strictly positive at t={sp.t}")
    return (model.b_tilde(sp) - model.curve.rate(sp.t)) / sigma


@dataclass
class MomentReport:
    times: np.ndarray
    second_moments: np.ndarray
    c_hat: float
    early_growth: float
    late_growth: float
    super_exponential: bool

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.second_moments) >= -1e-12 * np.abs(self.second_moments[1:])))


def _slope(t, y):
    if t.size < 2 or np.ptp(t) == 0:
        return 0.0
    return float(np.polyfit(t, y, 1)[0])


def moment_diagnostic(batch: ScenarioBatch, xi: StoppedPath) -> MomentReport:
    """Running ``E[sup_{s<=t} S(s)^2]`` and the smallest ``C`` with
    ``m(t) <= C (1 + sup xi^2) exp(C (t - t0))`` on the grid.

    ``super_exponential`` compares the log-growth rate of ``m`` over the last
    quarter of the window with the first quarter.
    """
    j0 = xi.stop_index
    vals = batch.values
    finite = bool(np.all(np.isfinite(vals)))
    sup2 = np.maximum.accumulate(vals**2, axis=1)[:, j0:]
    m = sup2.mean(axis=0)
    times = batch.grid.nodes[j0: vals.shape[1]]
    base = 1.0 + float(np.max(xi.values**2))
    tau = times - times[0]
    c_hat = 0.0
    for mk, tk in zip(m, tau):
        if not np.isfinite(mk):
            c_hat = math.inf
            break
        if mk <= 0:
            continue
        g = lambda c: c * base * math.exp(min(c * tk, 700.0)) - mk  # noqa: E731
        hi = 1.0
        while g(hi) < 0:
            hi *= 2.0
        c_hat = max(c_hat, brentq(g, 0.0, hi, xtol=1e-14))
    logm = np.log(np.maximum(m, 1e-300))
    q = max(2, times.size // 4)
    early = _slope(times[:q], logm[:q])
    late = _slope(times[-q:], logm[-q:])
    superexp = (not finite) or late > 2.0 * max(early, 0.0) + 0.5
    return MomentReport(times, m, c_hat, early, late, superexp)


def path_lipschitz_estimate(coef: PathFunctional, paths: Sequence[StoppedPath]) -> float:
    """Largest ``|F(a) - F(b)| / d_inf(a, b)`` over pairs of paths with a common stop time."""
    best = 0.0
    vals = [coef(p) for p in paths]
    for i in range(len(paths)):
        for k in range(i + 1, len(paths)):
            d = d_infinity(paths[i], paths[k])
            if d > 0:
                best = max(best, abs(vals[i] - vals[k]) / d)
    return best


def simulate_brownian(grid: TimeGrid, n: int, seed: int = 0, x0: float = 0.0, tag: str = "brownian") -> PathBatch:
    """Standard Brownian paths on ``grid`` from the keyed normal streams."""
    tag_id = rng.stream_tag(tag)
    dts = np.diff(grid.nodes)
    incr = np.empty((n, grid.n_steps))
    for k in range(grid.n_steps):
        incr[:, k] = math.sqrt(dts[k]) * rng.normals(seed, tag_id, k, 0, n)
    values = np.concatenate([np.full((n, 1), x0), x0 + np.cumsum(incr, axis=1)], axis=1)
    return PathBatch(grid, values)
