"""Stopped paths on a time grid and the path surgeries used by functional derivatives.

A :class:`StoppedPath` stores node values ``w(u_0), ..., w(u_j)`` of a path
frozen at ``t = u_j``.  Between nodes the path is linear; after ``t`` it is
flat.  Vertical bumps add a discontinuity at the stop node, recorded in
``jumps`` as ``(node_index, size)`` so that the left limit at that node is
still available (the bump direction ``1_[t,T]`` never touches ``[0, t)``).
"""

from __future__ import annotations

import csv
import hashlib
import io
import struct
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

_TIME_TOL = 1e-12


class PathDomainError(ValueError):
    """A time argument falls outside the domain of a stopped path or grid."""


class OffGridWarning(UserWarning):
    """A requested time was not a grid node and was snapped down."""


class TimeGrid:
    """Strictly increasing time nodes ``0 = u_0 < ... < u_M = T``."""

    def __init__(self, nodes: Iterable[float]):
        nodes = np.asarray(list(nodes), dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a time grid needs at least two nodes")
        if nodes[0] != 0.0:
            raise ValueError("first grid node must be 0")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("grid nodes must be strictly increasing")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("grid nodes must be finite")
        nodes.setflags(write=False)
        self.nodes = nodes
        self.grid_id = hashlib.sha1(nodes.tobytes()).hexdigest()[:16]

    @classmethod
    def uniform(cls, horizon: float, steps: int = 512, extra: Iterable[float] = ()) -> "TimeGrid":
        """Uniform grid with ``steps`` steps plus ``extra`` nodes (e.g. contract dates)."""
        if horizon <= 0 or steps < 1:
            raise ValueError("horizon must be positive and steps >= 1")
        base = np.linspace(0.0, horizon, steps + 1)
        pts = list(base)
        for x in extra:
            x = float(x)
            if x < 0 or x > horizon + _TIME_TOL:
                raise ValueError(f"extra node {x} outside [0, {horizon}]")
            if np.min(np.abs(base - x)) > _TIME_TOL * max(1.0, horizon):
                pts.append(x)
        return cls(np.unique(np.array(pts)))

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])

    @property
    def n_steps(self) -> int:
        return self.nodes.size - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    def __len__(self) -> int:
        return self.nodes.size

    def __eq__(self, other) -> bool:
        return isinstance(other, TimeGrid) and self.grid_id == other.grid_id

    def __hash__(self) -> int:
        return hash(self.grid_id)

    def __repr__(self) -> str:
        return f"TimeGrid(T={self.horizon:g}, steps={self.n_steps}, id={self.grid_id})"

    def find(self, t: float) -> int | None:
        """Index of the node equal to ``t`` (within tolerance), else ``None``."""
        k = int(np.searchsorted(self.nodes, t))
        tol = _TIME_TOL * max(1.0, self.horizon)
        for cand in (k - 1, k):
            if 0 <= cand < self.nodes.size and abs(self.nodes[cand] - t) <= tol:
                return cand
        return None

    def index_of(self, t: float, warn: bool = True) -> int:
        """Node index for ``t``; off-grid times snap down to the previous node."""
        tol = _TIME_TOL * max(1.0, self.horizon)
        if t < -tol or t > self.horizon + tol:
            raise PathDomainError(f"time {t} outside [0, {self.horizon}]")
        k = self.find(t)
        if k is not None:
            return k
        k = int(np.searchsorted(self.nodes, t, side="right")) - 1
        if warn:
            warnings.warn(f"time {t} is not a grid node; snapped down to {self.nodes[k]}", OffGridWarning, stacklevel=3)
        return k

    def floor_index(self, t) -> np.ndarray:
        """Vectorised snap-down without warnings (used for off-grid chain events)."""
        tol = _TIME_TOL * max(1.0, self.horizon)
        k = np.searchsorted(self.nodes, np.asarray(t) + tol, side="right") - 1
        return np.clip(k, 0, self.n_steps)

    def trapezoid_weights(self, start: int, stop: int | None = None) -> np.ndarray:
        """Trapezoid weights for nodes ``start..stop`` (inclusive)."""
        stop = self.n_steps if stop is None else stop
        w = np.zeros(stop - start + 1)
        if stop > start:
            dt = np.diff(self.nodes[start:stop + 1])
            w[:-1] += 0.5 * dt
            w[1:] += 0.5 * dt
        return w


def _jump_array(jumps: Sequence[tuple[int, float]], length: int) -> np.ndarray:
    out = np.zeros(length)
    for idx, size in jumps:
        if idx < length:
            out[idx] += size
    return out


def cumulative_integral(grid: TimeGrid, values: np.ndarray, jumps: Sequence[tuple[int, float]] = ()) -> np.ndarray:
    """Running trapezoid integral ``int_0^{u_k} w`` for every node ``k``.

    ``values`` has shape ``(..., k+1)``.  Segments ending at a jump node use
    the left limit, so a bump at the stop node does not enter the integral.
    """
    values = np.asarray(values, dtype=float)
    m = values.shape[-1]
    dt = np.diff(grid.nodes[:m])
    right = values[..., 1:]
    if jumps:
        right = right - _jump_array(jumps, m)[1:]
    seg = 0.5 * (values[..., :-1] + right) * dt
    out = np.zeros(values.shape)
    np.cumsum(seg, axis=-1, out=out[..., 1:])
    return out


@dataclass(frozen=True, eq=False)
class StoppedPath:
    """A path stopped at ``t = grid.nodes[stop_index]``; immutable."""

    grid: TimeGrid
    stop_index: int
    values: np.ndarray
    jumps: tuple[tuple[int, float], ...] = field(default=())

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1 or vals.size != self.stop_index + 1:
            raise ValueError(f"expected {self.stop_index + 1} values, got shape {vals.shape}")
        if not 0 <= self.stop_index <= self.grid.n_steps:
            raise PathDomainError(f"stop index {self.stop_index} outside grid")
        if not np.all(np.isfinite(vals)):
            raise ValueError("path values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "jumps", tuple((int(i), float(h)) for i, h in self.jumps if i <= self.stop_index and h != 0.0))

    @classmethod
    def from_function(cls, grid: TimeGrid, fn: Callable[[np.ndarray], np.ndarray], t: float | None = None) -> "StoppedPath":
        j = grid.n_steps if t is None else grid.index_of(t)
        u = grid.nodes[: j + 1]
        return cls(grid, j, np.broadcast_to(np.asarray(fn(u), dtype=float), u.shape))

    @classmethod
    def constant(cls, grid: TimeGrid, c: float, t: float = 0.0) -> "StoppedPath":
        j = grid.index_of(t)
        return cls(grid, j, np.full(j + 1, float(c)))

    @property
    def t(self) -> float:
        return float(self.grid.nodes[self.stop_index])

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes[: self.stop_index + 1]

    @property
    def terminal(self) -> float:
        return float(self.values[-1])

    def left_limits(self) -> np.ndarray:
        if not self.jumps:
            return self.values
        return self.values - _jump_array(self.jumps, self.values.size)

    def value_at(self, s: float) -> float:
        """``w(min(s, t))`` with linear interpolation between nodes."""
        if s < 0:
            raise PathDomainError(f"negative time {s}")
        if s >= self.t:
            return self.terminal
        k = int(np.searchsorted(self.times, s, side="right")) - 1
        u0, u1 = self.grid.nodes[k], self.grid.nodes[k + 1]
        right = self.left_limits()[k + 1]
        lam = (s - u0) / (u1 - u0)
        return float((1 - lam) * self.values[k] + lam * right)

    def stop_at(self, t: float) -> "StoppedPath":
        tol = _TIME_TOL * max(1.0, self.grid.horizon)
        if t < -tol or t > self.t + tol:
            raise PathDomainError(f"cannot stop a path stopped at {self.t} at time {t}")
        j = self.grid.index_of(min(max(t, 0.0), self.t))
        if j == self.stop_index:
            return self
        return StoppedPath(self.grid, j, self.values[: j + 1], self.jumps)

    def vertical_bump(self, h: float) -> "StoppedPath":
        """Perturb by ``h * 1_[t, T]``: only the stop node (and later flat part) moves."""
        if h == 0.0:
            return self
        vals = self.values.copy()
        vals[-1] += h
        return StoppedPath(self.grid, self.stop_index, vals, self.jumps + ((self.stop_index, h),))

    def horizontal_extend(self, dt: float) -> "StoppedPath":
        """Advance the stop time by ``dt`` keeping the path flat at ``w(t)``."""
        if dt < 0:
            raise PathDomainError("horizontal extension must be non-negative")
        if dt == 0:
            return self
        target = self.t + dt
        if target > self.grid.horizon * (1 + _TIME_TOL) + _TIME_TOL:
            raise PathDomainError(f"extension to {target} beyond horizon {self.grid.horizon}")
        j = self.grid.index_of(min(target, self.grid.horizon))
        return self.extend_to_index(j)

    def extend_to_index(self, j: int) -> "StoppedPath":
        if j < self.stop_index or j > self.grid.n_steps:
            raise PathDomainError(f"cannot extend stop index {self.stop_index} to {j}")
        if j == self.stop_index:
            return self
        vals = np.concatenate([self.values, np.full(j - self.stop_index, self.terminal)])
        return StoppedPath(self.grid, j, vals, self.jumps)

    def path_integral(self) -> float:
        """Trapezoid ``int_0^t w(v) dv`` over the stored nodes."""
        if self.stop_index == 0:
            return 0.0
        return float(cumulative_integral(self.grid, self.values, self.jumps)[-1])

    def quadratic_variation(self) -> float:
        return float(np.sum(np.diff(self.values) ** 2))

    def running_max(self) -> float:
        return float(np.max(self.values))

    def as_batch(self) -> "PathBatch":
        return PathBatch(self.grid, self.values[None, :], self.jumps)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "value"])
        for u, x in zip(self.times, self.values):
            w.writerow([repr(float(u)), repr(float(x))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, grid: TimeGrid) -> "StoppedPath":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["time", "value"]:
            raise ValueError("expected header 'time,value'")
        times = np.array([float(r[0]) for r in rows[1:]])
        vals = np.array([float(r[1]) for r in rows[1:]])
        j = times.size - 1
        if not np.allclose(times, grid.nodes[: j + 1], rtol=0, atol=1e-12):
            raise ValueError("CSV times do not match the grid")
        return cls(grid, j, vals)

    _HEADER = struct.Struct("<4s16sII")

    def to_bytes(self) -> bytes:
        """Compact record: magic, grid id, stop index, jump count, jumps, values."""
        head = self._HEADER.pack(b"SPTH", self.grid.grid_id.encode("ascii"), self.stop_index, len(self.jumps))
        jumps = b"".join(struct.pack("<Id", i, h) for i, h in self.jumps)
        return head + jumps + self.values.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, grid: TimeGrid) -> "StoppedPath":
        magic, gid, j, nj = cls._HEADER.unpack_from(data, 0)
        if magic != b"SPTH":
            raise ValueError("not a stopped-path record")
        if gid.decode("ascii") != grid.grid_id:
            raise ValueError("record was written on a different grid")
        off = cls._HEADER.size
        jumps = []
        for _ in range(nj):
            i, h = struct.unpack_from("<Id", data, off)
            jumps.append((i, h))
            off += struct.calcsize("<Id")
        vals = np.frombuffer(data, dtype="<f8", count=j + 1, offset=off)
        return cls(grid, j, vals.astype(float), tuple(jumps))

    def __eq__(self, other) -> bool:
        if not isinstance(other, StoppedPath):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.stop_index == other.stop_index
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.left_limits(), other.left_limits())
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PathBatch:
    """Several paths sharing a grid, a stop index and (common) jump record."""

    grid: TimeGrid
    values: np.ndarray  # shape (n, stop_index + 1)
    jumps: tuple[tuple[int, float], ...] = ()

    @property
    def stop_index(self) -> int:
        return self.values.shape[1] - 1

    @property
    def t(self) -> float:
        return float(self.grid.nodes[self.stop_index])

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def truncate(self, j: int) -> "PathBatch":
        return PathBatch(self.grid, self.values[:, : j + 1], tuple(x for x in self.jumps if x[0] <= j))

    def path(self, k: int) -> StoppedPath:
        return StoppedPath(self.grid, self.stop_index, self.values[k], self.jumps)

    def integrals(self) -> np.ndarray:
        """Running integrals, shape ``(n, stop_index + 1)``."""
        return cumulative_integral(self.grid, self.values, self.jumps)


def d_infinity(a: StoppedPath, b: StoppedPath) -> float:
    """``sup_s |a(t_a ^ s) - b(t_b ^ s)| + |t_a - t_b|`` over the common nodes."""
    if abs(a.grid.horizon - b.grid.horizon) > _TIME_TOL:
        raise PathDomainError("paths live on different horizons")
    if a.grid == b.grid:
        full_a = np.concatenate([a.values, np.full(a.grid.n_steps - a.stop_index, a.terminal)])
        full_b = np.concatenate([b.values, np.full(b.grid.n_steps - b.stop_index, b.terminal)])
        sup = np.max(np.abs(full_a - full_b))
    else:
        nodes = np.union1d(a.grid.nodes, b.grid.nodes)
        sup = max(abs(a.value_at(s) - b.value_at(s)) for s in nodes)
    return float(sup + abs(a.t - b.t))


class PathFunctional:
    """Non-anticipative functional ``F(t, w_t)``.

    Subclasses implement :meth:`evaluate` on a :class:`PathBatch`; they only
    ever see values up to the stop time.  :meth:`running` evaluates at every
    stop index from ``start`` on and may be overridden with a cumulative
    implementation.  Coefficient functionals used in simulation can also
    implement :meth:`from_summary` on ``(t, x, integral, running_max)``.
    """

    name = "functional"
    has_summary = False

    def evaluate(self, batch: PathBatch) -> np.ndarray:
        raise NotImplementedError

    def running(self, batch: PathBatch, start: int = 0) -> np.ndarray:
        cols = [self.evaluate(batch.truncate(j)) for j in range(start, batch.stop_index + 1)]
        return np.stack(cols, axis=-1)

    def from_summary(self, t, x, integral, running_max):
        raise NotImplementedError

    def __call__(self, sp: StoppedPath) -> float:
        return float(self.evaluate(sp.as_batch())[0])

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"


class CallableFunctional(PathFunctional):
    """Wrap ``fn(sp: StoppedPath) -> float``; evaluated path by path."""

    def __init__(self, fn: Callable[[StoppedPath], float], name: str = "callable"):
        self.fn = fn
        self.name = name

    def evaluate(self, batch: PathBatch) -> np.ndarray:
        return np.array([self.fn(batch.path(k)) for k in range(batch.n_paths)], dtype=float)
