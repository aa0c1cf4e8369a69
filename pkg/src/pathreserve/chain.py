"""Policyholder state process: a finite continuous-time Markov chain with
time-dependent transition intensities.

Transition matrices come from RK4 integration of Kolmogorov's backward
equation ``d/dt P(t, s) = -Lambda(t) P(t, s)`` with ``P(s, s) = I``; one-step
propagators are computed once per grid and chained.  Trajectories are
simulated exactly by thinning against a scanned upper bound of the exit rates.
"""

from __future__ import annotations

import csv
import io
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng
from .paths import PathDomainError, TimeGrid


class ChainConfigError(ValueError):
    pass


class RateFunction:
    """Piecewise polynomial ``mu(t) = sum_p c_{k,p} t^p`` on ``[b_k, b_{k+1})``."""

    def __init__(self, breaks: Sequence[float] = (0.0,), coeffs: Sequence[Sequence[float]] = ((0.0,),)):
        self.breaks = np.asarray(breaks, dtype=float)
        self.coeffs = [np.asarray(c, dtype=float) for c in coeffs]
        if self.breaks.size != len(self.coeffs) or self.breaks.size == 0:
            raise ChainConfigError("one coefficient list per break is required")
        if self.breaks[0] != 0.0 or np.any(np.diff(self.breaks) <= 0):
            raise ChainConfigError("rate breaks must start at 0 and increase")

    @classmethod
    def constant(cls, value: float) -> "RateFunction":
        return cls((0.0,), ((value,),))

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(self.breaks, t_arr, side="right") - 1, 0, self.breaks.size - 1)
        out = np.zeros_like(t_arr)
        for idx, c in enumerate(self.coeffs):
            mask = k == idx
            if np.any(mask):
                out = np.where(mask, np.polynomial.polynomial.polyval(t_arr, c), out)
        return float(out) if out.ndim == 0 else out

    @property
    def is_zero(self) -> bool:
        return all(np.all(c == 0) for c in self.coeffs)

    def to_dict(self) -> dict:
        return {"breaks": self.breaks.tolist(), "coeffs": [c.tolist() for c in self.coeffs]}


@dataclass
class MarkovModel:
    """States ``0..N-1``, intensities ``rates[(i, j)]`` for ``i != j``, start state ``z0``."""

    n_states: int
    rates: dict[tuple[int, int], RateFunction]
    z0: int = 0
    names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.n_states < 1:
            raise ChainConfigError("need at least one state")
        for (i, j) in self.rates:
            if i == j or not (0 <= i < self.n_states and 0 <= j < self.n_states):
                raise ChainConfigError(f"invalid transition {(i, j)}")
        if not 0 <= self.z0 < self.n_states:
            raise ChainConfigError("initial state out of range")
        if not self.names:
            self.names = tuple(str(i) for i in range(self.n_states))

    def mu(self, i: int, j: int, t):
        f = self.rates.get((i, j))
        if f is None:
            return np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0
        return f(t)

    def exit_rate(self, i: int, t):
        """``mu_i(t) = sum_{j != i} mu_ij(t)``."""
        tot = np.zeros_like(np.asarray(t, dtype=float))
        for (a, _), f in self.rates.items():
            if a == i:
                tot = tot + f(t)
        return float(tot) if np.ndim(tot) == 0 else tot

    def generator(self, t: float) -> np.ndarray:
        lam = np.zeros((self.n_states, self.n_states))
        for (i, j), f in self.rates.items():
            lam[i, j] = f(t)
        lam[np.diag_indices(self.n_states)] = -lam.sum(axis=1)
        return lam

    def check_rates(self, horizon: float, n_scan: int = 2001) -> float:
        """Validate non-negativity/finiteness on a scan; return ``max_i sup mu_i``."""
        ts = np.linspace(0.0, horizon, n_scan)
        bound = 0.0
        for (i, j), f in self.rates.items():
            vals = np.asarray(f(ts))
            if not np.all(np.isfinite(vals)):
                raise ChainConfigError(f"rate {(i, j)} is not finite on [0, {horizon}]")
            if np.any(vals < -1e-14):
                raise ChainConfigError(f"rate {(i, j)} is negative on [0, {horizon}]")
        for i in range(self.n_states):
            bound = max(bound, float(np.max(np.asarray(self.exit_rate(i, ts)) * np.ones_like(ts))))
        return bound

    def permuted(self, perm: Sequence[int]) -> "MarkovModel":
        """Relabel state ``i`` as ``perm[i]``."""
        rates = {(perm[i], perm[j]): f for (i, j), f in self.rates.items()}
        names = [""] * self.n_states
        for i, p in enumerate(perm):
            names[p] = self.names[i]
        return MarkovModel(self.n_states, rates, perm[self.z0], tuple(names))


def two_state(mu: float, z0: int = 0) -> MarkovModel:
    """Alive -> dead with constant intensity ``mu``."""
    return MarkovModel(2, {(0, 1): RateFunction.constant(mu)}, z0, ("alive", "dead"))


def disability_model() -> MarkovModel:
    """Active / disabled / dead with time-varying intensities (years since issue)."""
    rates = {
        (0, 1): RateFunction((0.0,), ((0.02, 0.002),)),
        (0, 2): RateFunction((0.0,), ((0.005, 0.0005, 0.0001),)),
        (1, 0): RateFunction((0.0, 5.0), ((0.3, -0.02), (0.2, 0.0))),
        (1, 2): RateFunction((0.0,), ((0.04, 0.002),)),
    }
    return MarkovModel(3, rates, 0, ("active", "disabled", "dead"))


def _generators(model: MarkovModel, ts: np.ndarray) -> np.ndarray:
    """Stack of intensity matrices ``Lambda(t)`` (rows sum to zero), shape ``(len(ts), N, N)``."""
    n = model.n_states
    lam = np.zeros((ts.size, n, n))
    for (i, j), f in model.rates.items():
        lam[:, i, j] = f(ts)
    idx = np.arange(n)
    lam[:, idx, idx] = -lam.sum(axis=2)
    return lam


def _rk4_propagator(model: MarkovModel, a: float, b: float, n_sub: int) -> np.ndarray:
    """``P(a, b)`` by integrating the backward equation from ``t = b`` down to ``a``."""
    h = (b - a) / n_sub
    # -dP/dt = Lambda(t) P, integrated in the direction of decreasing t
    lam = _generators(model, b - h * np.arange(2 * n_sub + 1) / 2)
    p = np.eye(model.n_states)
    for m in range(n_sub):
        l0, lh, l1 = lam[2 * m], lam[2 * m + 1], lam[2 * m + 2]
        k1 = l0 @ p
        k2 = lh @ (p + h / 2 * k1)
        k3 = lh @ (p + h / 2 * k2)
        k4 = l1 @ (p + h * k3)
        p = p + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return p


@dataclass
class TransitionMatrixPath:
    """``p(u_k, s)`` for every grid node ``u_k <= s``; ``matrices[k]`` is ``N x N``."""

    s: float
    times: np.ndarray
    matrices: np.ndarray

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-12 * max(1.0, self.s):
            raise PathDomainError(f"{t} is not a grid node <= {self.s}")
        return self.matrices[k]


class TransitionSolver:
    """Cached transition matrices on a grid.

    Step propagators ``P(u_k, u_{k+1})`` are RK4 solutions with the number of
    substeps doubled until successive refinements agree within ``tol`` and the
    row sums stay within ``1e-8`` of one.
    """

    def __init__(self, model: MarkovModel, grid: TimeGrid, tol: float = 1e-12, max_doublings: int = 12):
        self.model = model
        self.grid = grid
        model.check_rates(grid.horizon)
        n = model.n_states
        steps = np.empty((grid.n_steps, n, n))
        for k in range(grid.n_steps):
            a, b = grid.nodes[k], grid.nodes[k + 1]
            n_sub = 1
            cur = _rk4_propagator(model, a, b, n_sub)
            for _ in range(max_doublings):
                finer = _rk4_propagator(model, a, b, 2 * n_sub)
                n_sub *= 2
                done = np.max(np.abs(finer - cur)) < tol and np.max(np.abs(finer.sum(axis=1) - 1)) < 1e-8
                cur = finer
                if done:
                    break
            steps[k] = cur
        self.steps = steps
        self._backward: dict[int, np.ndarray] = {}
        self._forward: dict[int, np.ndarray] = {}
        self._lock = threading.Lock()

    @staticmethod
    def _clamp(p: np.ndarray) -> np.ndarray:
        return np.clip(p, 0.0, 1.0)

    def backward(self, s_index: int) -> np.ndarray:
        """``p(u_k, u_s)`` for ``k = 0..s_index``; shape ``(s_index + 1, N, N)``."""
        with self._lock:
            hit = self._backward.get(s_index)
            if hit is not None:
                return hit
        n = self.model.n_states
        out = np.empty((s_index + 1, n, n))
        out[s_index] = np.eye(n)
        for k in range(s_index - 1, -1, -1):
            out[k] = self.steps[k] @ out[k + 1]
        out = self._clamp(out)
        with self._lock:
            self._backward[s_index] = out
        return out

    def forward(self, t_index: int) -> np.ndarray:
        """``p(u_t, u_m)`` for ``m = t_index..M``; shape ``(M - t_index + 1, N, N)``."""
        with self._lock:
            hit = self._forward.get(t_index)
            if hit is not None:
                return hit
        n = self.model.n_states
        m_count = self.grid.n_steps - t_index + 1
        out = np.empty((m_count, n, n))
        out[0] = np.eye(n)
        for m in range(1, m_count):
            out[m] = out[m - 1] @ self.steps[t_index + m - 1]
        out = self._clamp(out)
        with self._lock:
            self._forward[t_index] = out
        return out

    def matrix(self, t_index: int, s_index: int) -> np.ndarray:
        if s_index < t_index:
            raise PathDomainError("need t <= s")
        return self.forward(t_index)[s_index - t_index]


def kolmogorov_backward(model: MarkovModel, s: float, grid: TimeGrid, solver: TransitionSolver | None = None) -> TransitionMatrixPath:
    solver = solver or TransitionSolver(model, grid)
    s_idx = grid.index_of(s)
    return TransitionMatrixPath(grid.nodes[s_idx], grid.nodes[: s_idx + 1].copy(), solver.backward(s_idx))


def occupation_probabilities(model: MarkovModel, t: float, grid: TimeGrid, solver: TransitionSolver | None = None) -> np.ndarray:
    solver = solver or TransitionSolver(model, grid)
    return solver.matrix(0, grid.index_of(t))[model.z0].copy()


@dataclass(frozen=True)
class ChainTrajectory:
    initial_state: int
    events: tuple[tuple[float, int, int], ...]
    horizon: float
    start_time: float = 0.0

    def __post_init__(self):
        prev_t, state = self.start_time, self.initial_state
        for (t, a, b) in self.events:
            if not prev_t < t <= self.horizon:
                raise ValueError("event times must increase strictly within (start, T]")
            if a != state or a == b:
                raise ValueError("event from-state does not match the current state")
            prev_t, state = t, b

    def state_at(self, t: float) -> int:
        state = self.initial_state
        for (u, _, b) in self.events:
            if u <= t:
                state = b
            else:
                break
        return state

    def intervals(self) -> list[tuple[float, float, int]]:
        """Constant-state intervals ``(a, b, state)`` covering ``[start, T]``."""
        out = []
        a, state = self.start_time, self.initial_state
        for (u, _, b) in self.events:
            out.append((a, u, state))
            a, state = u, b
        out.append((a, self.horizon, state))
        return [x for x in out if x[1] > x[0]]


def indicators(traj: ChainTrajectory, t: float, n_states: int) -> tuple[np.ndarray, np.ndarray]:
    """``I_i(t)`` and ``N_ij(t)`` (jumps at ``t`` included)."""
    if t < traj.start_time or t > traj.horizon:
        raise PathDomainError(f"time {t} outside [{traj.start_time}, {traj.horizon}]")
    ind = np.zeros(n_states)
    counts = np.zeros((n_states, n_states), dtype=int)
    for (u, a, b) in traj.events:
        if u <= t:
            counts[a, b] += 1
    ind[traj.state_at(t)] = 1.0
    return ind, counts


@dataclass
class ChainBatch:
    """Padded arrays of simulated trajectories (``inf`` marks unused event slots)."""

    initial_state: int
    start_time: float
    horizon: float
    event_times: np.ndarray
    event_from: np.ndarray
    event_to: np.ndarray
    seed: int = 0
    _trajectories: list | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.event_times.shape[0]

    def __len__(self) -> int:
        return self.n

    def trajectory(self, k: int) -> ChainTrajectory:
        mask = np.isfinite(self.event_times[k])
        ev = tuple(
            (float(t), int(a), int(b))
            for t, a, b in zip(self.event_times[k][mask], self.event_from[k][mask], self.event_to[k][mask])
        )
        return ChainTrajectory(self.initial_state, ev, self.horizon, self.start_time)

    def __getitem__(self, k: int) -> ChainTrajectory:
        return self.trajectory(k)

    def __iter__(self):
        return (self.trajectory(k) for k in range(self.n))

    def states_at(self, t: float) -> np.ndarray:
        state = np.full(self.n, self.initial_state)
        for col in range(self.event_times.shape[1]):
            hit = self.event_times[:, col] <= t
            state = np.where(hit, self.event_to[:, col], state)
        return state

    def counts(self, t: float | None = None, n_states: int | None = None) -> np.ndarray:
        """``N_ij(t)`` per trajectory, shape ``(n, N, N)``."""
        t = self.horizon if t is None else t
        n_states = n_states or int(max(self.event_to.max(initial=0), self.event_from.max(initial=0), self.initial_state) + 1)
        out = np.zeros((self.n, n_states, n_states), dtype=int)
        hit = self.event_times <= t
        rows, cols = np.nonzero(hit)
        np.add.at(out, (rows, self.event_from[rows, cols], self.event_to[rows, cols]), 1)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trajectory", "time", "from", "to"])
        for k in range(self.n):
            for t, a, b in zip(self.event_times[k], self.event_from[k], self.event_to[k]):
                if np.isfinite(t):
                    w.writerow([k, repr(float(t)), int(a), int(b)])
        return buf.getvalue()


def simulate_chain(
    model: MarkovModel,
    grid: TimeGrid,
    n: int,
    seed: int = 0,
    start_state: int | None = None,
    start_time: float = 0.0,
    tag: str = "chain",
    safety: float = 1.05,
) -> ChainBatch:
    """Thinning with a constant bound on the exit rates; trajectory ``k`` only
    consumes stream position ``k`` in every round, so results do not depend on
    ``n`` or evaluation order."""
    horizon = grid.horizon
    bound = model.check_rates(horizon, n_scan=max(2001, 4 * grid.n_steps + 1))
    z = model.z0 if start_state is None else start_state
    if not np.isfinite(bound):
        raise ChainConfigError("unbounded transition intensities")
    lam = bound * safety
    tag_id = rng.stream_tag(tag)
    if lam == 0.0 or start_time >= horizon:
        empty = np.empty((n, 0))
        return ChainBatch(z, start_time, horizon, empty, empty.astype(int), empty.astype(int), seed)
    t = np.full(n, float(start_time))
    state = np.full(n, z)
    active = np.ones(n, dtype=bool)
    times, froms, tos = [], [], []
    rnd = 0
    n_states = model.n_states
    absorbing = np.array([all(f.is_zero for (a, _), f in model.rates.items() if a == i) for i in range(n_states)])
    active &= ~absorbing[state]
    while np.any(active):
        u1 = rng.uniforms(seed, tag_id, 3 * rnd, 0, n)
        u2 = rng.uniforms(seed, tag_id, 3 * rnd + 1, 0, n)
        u3 = rng.uniforms(seed, tag_id, 3 * rnd + 2, 0, n)
        rnd += 1
        cand = t - np.log1p(-u1) / lam
        active &= cand <= horizon
        t = np.where(active, cand, t)
        if not np.any(active):
            break
        rates = np.zeros((n, n_states))
        for (i, j), f in model.rates.items():
            sel = active & (state == i)
            if np.any(sel):
                rates[sel, j] = f(t[sel])
        total = rates.sum(axis=1)
        if np.any(total > lam * (1 + 1e-9)):
            raise ChainConfigError("scanned intensity bound exceeded; increase the scan resolution or safety factor")
        accept = active & (u2 * lam < total)
        cum = np.cumsum(rates, axis=1)
        target = np.argmax(cum > (u3 * total)[:, None], axis=1)
        ev_t = np.where(accept, t, np.inf)
        times.append(ev_t)
        froms.append(np.where(accept, state, -1))
        tos.append(np.where(accept, target, -1))
        state = np.where(accept, target, state)
        active &= ~absorbing[state]
    if times:
        et = np.stack(times, axis=1)
        ef = np.stack(froms, axis=1)
        eto = np.stack(tos, axis=1)
        order = np.argsort(et, axis=1, kind="stable")
        et = np.take_along_axis(et, order, 1)
        ef = np.take_along_axis(ef, order, 1)
        eto = np.take_along_axis(eto, order, 1)
        used = np.isfinite(et).any(axis=0)
        et, ef, eto = et[:, used], ef[:, used], eto[:, used]
    else:
        et = np.empty((n, 0))
        ef = eto = np.empty((n, 0), dtype=int)
    return ChainBatch(z, start_time, horizon, et, ef.astype(int), eto.astype(int), seed)
