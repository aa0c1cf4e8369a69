"""Payment streams of equity-linked policies and their present, retrospective
and prospective values along a joint (asset, policy state) scenario."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from .chain import ChainTrajectory
from .market import DiscountCurve
from .paths import PathBatch, PathDomainError, StoppedPath, TimeGrid
from .payoffs import Payoff, Scaled, is_zero


class CashflowError(RuntimeError):
    def __init__(self, message: str, time: float | None = None, kind: str | None = None):
        super().__init__(message)
        self.time = time
        self.kind = kind


@dataclass
class CashflowSpec:
    """Jump payments ``f[i]`` at ``jump_dates``, sojourn rates ``g[i]`` and
    transition payments ``h[(i, j)]``.  Premiums negative, benefits positive."""

    n_states: int
    jump_dates: tuple[float, ...]
    f: dict[int, Payoff] = field(default_factory=dict)
    g: dict[int, Payoff] = field(default_factory=dict)
    h: dict[tuple[int, int], Payoff] = field(default_factory=dict)

    def __post_init__(self):
        dates = tuple(float(d) for d in self.jump_dates)
        if len(dates) < 2 or dates[0] != 0.0 or any(b <= a for a, b in zip(dates, dates[1:])):
            raise ValueError("jump dates must increase strictly from t_0 = 0 to t_n = T")
        self.jump_dates = dates
        for i in list(self.f) + list(self.g):
            if not 0 <= i < self.n_states:
                raise ValueError(f"state {i} out of range")
        for (i, j) in self.h:
            if i == j or not (0 <= i < self.n_states and 0 <= j < self.n_states):
                raise ValueError(f"invalid transition payment {(i, j)}")
        self.f = {i: p for i, p in self.f.items() if not is_zero(p)}
        self.g = {i: p for i, p in self.g.items() if not is_zero(p)}
        self.h = {k: p for k, p in self.h.items() if not is_zero(p)}

    @property
    def horizon(self) -> float:
        return self.jump_dates[-1]

    @property
    def is_zero(self) -> bool:
        return not (self.f or self.g or self.h)

    def grid(self, steps: int) -> TimeGrid:
        """Uniform grid over ``[0, T]`` with every jump date inserted as a node."""
        return TimeGrid.uniform(self.horizon, steps, self.jump_dates)

    def check_grid(self, grid: TimeGrid) -> list[int]:
        if abs(grid.horizon - self.horizon) > 1e-12 * max(1.0, self.horizon):
            raise PathDomainError(f"grid horizon {grid.horizon} differs from contract horizon {self.horizon}")
        idx = []
        for d in self.jump_dates:
            k = grid.find(d)
            if k is None:
                raise PathDomainError(f"jump date {d} is not a grid node")
            idx.append(k)
        return idx

    def scaled(self, factor: float) -> "CashflowSpec":
        return CashflowSpec(
            self.n_states,
            self.jump_dates,
            {i: Scaled(p, factor) for i, p in self.f.items()},
            {i: Scaled(p, factor) for i, p in self.g.items()},
            {k: Scaled(p, factor) for k, p in self.h.items()},
        )

    def permuted(self, perm) -> "CashflowSpec":
        return CashflowSpec(
            self.n_states,
            self.jump_dates,
            {perm[i]: p for i, p in self.f.items()},
            {perm[i]: p for i, p in self.g.items()},
            {(perm[i], perm[j]): p for (i, j), p in self.h.items()},
        )

    def functionals(self) -> Iterator[tuple[str, object, Payoff]]:
        for i, p in self.f.items():
            yield "jump", i, p
        for i, p in self.g.items():
            yield "sojourn", i, p
        for k, p in self.h.items():
            yield "transition", k, p


@dataclass
class PaymentTable:
    """All payment functionals evaluated at every grid node along asset paths.

    Arrays have shape ``(n_paths, M + 1)``; column ``m`` holds the functional
    at ``(u_m, S_{u_m})``.
    """

    grid: TimeGrid
    f: dict[int, np.ndarray]
    g: dict[int, np.ndarray]
    h: dict[tuple[int, int], np.ndarray]

    @classmethod
    def build(cls, spec: CashflowSpec, batch: PathBatch, start: int = 0) -> "PaymentTable":
        """Evaluate on nodes ``start..M``; earlier columns are left as zeros."""
        if batch.stop_index != batch.grid.n_steps:
            raise PathDomainError("payment tables need paths stopped at the horizon")
        out: dict[str, dict] = {"jump": {}, "sojourn": {}, "transition": {}}
        for kind, key, p in spec.functionals():
            try:
                vals = p.running(batch, start)
            except Exception as exc:  # noqa: BLE001
                raise CashflowError(f"{kind} payment {key} failed: {exc}", batch.grid.nodes[start], kind) from exc
            bad = ~np.isfinite(vals)
            if np.any(bad):
                col = int(np.argmax(bad.any(axis=0)))
                t = float(batch.grid.nodes[start + col])
                raise CashflowError(f"{kind} payment {key} is not finite at t={t}", t, kind)
            full = np.zeros((batch.n_paths, batch.grid.n_steps + 1))
            full[:, start:] = vals
            out[kind][key] = full
        return cls(batch.grid, out["jump"], out["sojourn"], out["transition"])

    @classmethod
    def for_path(cls, spec: CashflowSpec, path: StoppedPath) -> "PaymentTable":
        return cls.build(spec, path.as_batch())


class CashEvent(NamedTuple):
    time: float
    amount: float
    kind: str  # "jump" | "sojourn" | "transition"
    state: object
    times: np.ndarray | None = None  # sojourn quadrature points
    rates: np.ndarray | None = None


@dataclass
class JointScenario:
    asset: StoppedPath
    chain: ChainTrajectory

    def __post_init__(self):
        if self.asset.stop_index != self.asset.grid.n_steps:
            raise PathDomainError("asset path must be stopped at the horizon")
        if abs(self.asset.grid.horizon - self.chain.horizon) > 1e-12:
            raise PathDomainError("asset and chain horizons differ")


def _sojourn_points(grid: TimeGrid, a: float, b: float, split: float | None) -> np.ndarray:
    inner = grid.nodes[(grid.nodes > a) & (grid.nodes < b)]
    pts = np.concatenate([[a], inner, [b]])
    if split is not None and a < split < b and grid.find(split) is None:
        pts = np.sort(np.concatenate([pts, [split]]))
    return pts


def _events(spec: CashflowSpec, table: PaymentTable, row: int, chain: ChainTrajectory,
            split: float | None = None) -> list[CashEvent]:
    grid = table.grid
    ev: list[CashEvent] = []
    for d in spec.jump_dates:
        if d < chain.start_time:
            continue
        z = chain.state_at(d)
        if z in table.f:
            amt = float(table.f[z][row, grid.find(d)])
            if amt != 0.0:
                ev.append(CashEvent(d, amt, "jump", z))
    for (a, b, z) in chain.intervals():
        if z not in table.g:
            continue
        pts = _sojourn_points(grid, a, b, split)
        rates = table.g[z][row, grid.floor_index(pts)]
        amt = float(np.sum(0.5 * (rates[:-1] + rates[1:]) * np.diff(pts)))
        if np.any(rates != 0.0):
            ev.append(CashEvent(b, amt, "sojourn", z, pts, rates))
    for (tau, a, b) in chain.events:
        if (a, b) in table.h:
            amt = float(table.h[(a, b)][row, grid.floor_index(tau)])
            if amt != 0.0:
                ev.append(CashEvent(tau, amt, "transition", (a, b)))
    ev.sort(key=lambda e: (e.time, e.kind))
    return ev


def cash_increments(spec: CashflowSpec, scen: JointScenario) -> list[CashEvent]:
    """Ordered payment events of one joint scenario."""
    spec.check_grid(scen.asset.grid)
    table = PaymentTable.for_path(spec, scen.asset)
    return _events(spec, table, 0, scen.chain)


def _contributions(events: list[CashEvent], curve: DiscountCurve) -> tuple[np.ndarray, np.ndarray]:
    """Discounted atoms ``v(tau) dC`` keyed by time; sojourn segments split into trapezoid panels."""
    keys, vals = [], []
    for e in events:
        if e.kind == "sojourn":
            vg = curve.discount(e.times) * e.rates
            keys.append(e.times[1:])
            vals.append(0.5 * (vg[:-1] + vg[1:]) * np.diff(e.times))
        else:
            keys.append(np.array([e.time]))
            vals.append(np.array([curve.discount(e.time) * e.amount]))
    if not keys:
        return np.empty(0), np.empty(0)
    k = np.concatenate(keys)
    v = np.concatenate(vals)
    order = np.argsort(k, kind="stable")
    return k[order], v[order]


def _split_values(events: list[CashEvent], curve: DiscountCurve, t: float) -> tuple[float, float]:
    keys, vals = _contributions(events, curve)
    vt = curve.discount(t)
    retro = vals[keys <= t]
    pro = vals[keys > t]
    retro_sum = 0.0
    for x in retro:
        retro_sum += x
    pro_sum = 0.0
    for x in pro:
        pro_sum += x
    return retro_sum / vt, pro_sum / vt


def _scenario_events(spec, scen, t):
    if not 0.0 <= t <= scen.asset.grid.horizon:
        raise PathDomainError(f"valuation time {t} outside [0, {scen.asset.grid.horizon}]")
    spec.check_grid(scen.asset.grid)
    table = PaymentTable.for_path(spec, scen.asset)
    return _events(spec, table, 0, scen.chain, split=t)


def retrospective_value(spec: CashflowSpec, scen: JointScenario, curve: DiscountCurve, t: float) -> float:
    """Value at ``t`` of payments at times ``<= t``."""
    return _split_values(_scenario_events(spec, scen, t), curve, t)[0]


def prospective_value(spec: CashflowSpec, scen: JointScenario, curve: DiscountCurve, t: float) -> float:
    """Value at ``t`` of payments at times ``> t``."""
    return _split_values(_scenario_events(spec, scen, t), curve, t)[1]


def present_value(spec: CashflowSpec, scen: JointScenario, curve: DiscountCurve, t: float = 0.0) -> float:
    """``(1/v(t)) int v dC``, accumulated as retrospective part plus prospective part."""
    retro, pro = _split_values(_scenario_events(spec, scen, t), curve, t)
    return retro + pro


def value_split(spec: CashflowSpec, scen: JointScenario, curve: DiscountCurve, t: float) -> tuple[float, float, float]:
    """``(V, retrospective, prospective)`` from a single pass."""
    retro, pro = _split_values(_scenario_events(spec, scen, t), curve, t)
    return retro + pro, retro, pro


def prospective_values_batch(spec: CashflowSpec, table: PaymentTable, chains, curve: DiscountCurve, t: float) -> np.ndarray:
    """Prospective value at ``t`` for row ``k`` of ``table`` paired with ``chains[k]``."""
    out = np.empty(len(chains))
    for k, traj in enumerate(chains):
        out[k] = _split_values(_events(spec, table, k, traj, split=t), curve, t)[1]
    return out


def independence_check(asset_terminal: np.ndarray, event_counts: np.ndarray) -> tuple[float, float]:
    """Sample correlation of asset terminal values and chain event counts, with its
    standard error ``1/sqrt(n)`` under independence."""
    x = np.asarray(asset_terminal, dtype=float)
    y = np.asarray(event_counts, dtype=float)
    if np.std(y) == 0 or np.std(x) == 0:
        return 0.0, 1.0 / np.sqrt(x.size)
    return float(np.corrcoef(x, y)[0, 1]), 1.0 / np.sqrt(x.size)
