"""Run configuration: a versioned YAML document validated by pydantic models.

Validation errors are reported with the offending field path and, when the
document came from text, its line number.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .cashflow import CashflowSpec
from .chain import MarkovModel, RateFunction, disability_model, two_state
from .market import (ConstantCoefficient, DiscountCurve, MarketModel, RunningAverageDrift,
                     RunningAverageVolatility)
from .paths import TimeGrid
from .payoffs import Scaled, build_payoff

SCHEMA = "pathreserve/v1"


class ConfigError(ValueError):
    """Invalid configuration; ``diagnostics`` lists ``(field path, line, message)``."""

    def __init__(self, message: str, diagnostics: list[tuple[str, int | None, str]] | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RateCurveConfig(_Strict):
    breaks: list[float] = [0.0]
    rates: list[float] = [0.0]


class MarketConfig(_Strict):
    model: Literal["black-scholes", "running-average"] = "black-scholes"
    params: dict[str, float] = Field(default_factory=lambda: {"mu": 0.05, "sigma": 0.2})
    s0: float = 1.0
    rate: RateCurveConfig = Field(default_factory=RateCurveConfig)

    @model_validator(mode="after")
    def _params(self):
        need = {"black-scholes": {"mu", "sigma"}, "running-average": {"kappa", "sigma0", "eps"}}[self.model]
        if set(self.params) != need:
            raise ValueError(f"{self.model} market needs exactly the parameters {sorted(need)}")
        if self.s0 <= 0:
            raise ValueError("s0 must be positive")
        return self


class TransitionConfig(_Strict):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)
    from_state: int = Field(alias="from")
    to_state: int = Field(alias="to")
    breaks: list[float] = [0.0]
    coeffs: list[list[float]]


class ChainConfig(_Strict):
    model: Literal["custom", "two-state", "disability"] = "custom"
    n_states: int | None = None
    names: list[str] | None = None
    z0: int = 0
    mu: float | None = None
    rates: list[TransitionConfig] = []

    @model_validator(mode="after")
    def _shape(self):
        if self.model == "custom" and self.n_states is None:
            raise ValueError("custom chains need n_states")
        if self.model == "two-state" and self.mu is None:
            raise ValueError("two-state chains need mu")
        return self


class PayoffConfig(_Strict):
    name: str
    params: dict[str, Any] | None = None


class StatePayment(_Strict):
    state: int
    payoff: PayoffConfig
    premium: bool = False


class TransitionPayment(_Strict):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)
    from_state: int = Field(alias="from")
    to_state: int = Field(alias="to")
    payoff: PayoffConfig
    premium: bool = False


class CashflowConfig(_Strict):
    jump_dates: list[float]
    premium_scale: float = 1.0  # multiplies every entry flagged as a premium
    f: list[StatePayment] = []
    g: list[StatePayment] = []
    h: list[TransitionPayment] = []

    @field_validator("jump_dates")
    @classmethod
    def _dates(cls, v):
        if len(v) < 2 or v[0] != 0.0 or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("jump dates must increase strictly from 0 to the horizon")
        return v


class NumericsConfig(_Strict):
    steps: int = Field(512, ge=1)
    n_inner: int = Field(4096, ge=2)
    n_outer: int = Field(4096, ge=2)
    antithetic: bool = True
    seed: int = Field(0, ge=0)
    h_vertical: float | None = None
    eval_times: list[float] | None = None
    eval_every: int = Field(64, ge=1)
    n_stub_paths: int = Field(1, ge=1)
    states: list[int] | None = None
    method: Literal["res2-nested", "res1-direct", "oracle"] = "res2-nested"
    se_multiple: float = Field(4.0, gt=0)
    thiele_tol: float = Field(1e-6, gt=0)
    ito_steps: list[int] = [128, 256, 512, 1024]
    ito_paths: int = Field(50, ge=1)


class OutputConfig(_Strict):
    formats: list[Literal["csv", "json"]] = ["csv", "json"]


class RunConfig(_Strict):
    schema_id: Literal["pathreserve/v1"] = Field(SCHEMA, alias="schema")
    market: MarketConfig = Field(default_factory=MarketConfig)
    chain: ChainConfig = Field(default_factory=lambda: ChainConfig(n_states=1))
    cashflow: CashflowConfig
    numerics: NumericsConfig = Field(default_factory=NumericsConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    @model_validator(mode="after")
    def _consistency(self):
        chain = self.build_chain()
        n = chain.n_states
        cf = self.cashflow
        for p in cf.f + cf.g:
            if not 0 <= p.state < n:
                raise ValueError(f"payment state {p.state} outside 0..{n - 1}")
        for p in cf.h:
            if p.from_state == p.to_state or not (0 <= p.from_state < n and 0 <= p.to_state < n):
                raise ValueError(f"invalid transition payment {p.from_state}->{p.to_state}")
        for p in cf.f + cf.g + cf.h:
            try:
                build_payoff(p.payoff.model_dump(exclude_none=True))
            except (KeyError, TypeError) as exc:
                raise ValueError(f"payoff {p.payoff.name!r}: {exc}") from exc
        if self.numerics.states is not None and any(not 0 <= s < n for s in self.numerics.states):
            raise ValueError("numerics.states references an unknown state")
        return self

    # --- builders -------------------------------------------------------

    @property
    def horizon(self) -> float:
        return self.cashflow.jump_dates[-1]

    def build_curve(self) -> DiscountCurve:
        return DiscountCurve(self.market.rate.breaks, self.market.rate.rates)

    def build_market(self) -> MarketModel:
        m, p = self.market, self.market.params
        curve = self.build_curve()
        if m.model == "black-scholes":
            return MarketModel(ConstantCoefficient(p["mu"]), ConstantCoefficient(p["sigma"]), m.s0, curve)
        return MarketModel(RunningAverageDrift(p["kappa"]), RunningAverageVolatility(p["sigma0"], p["eps"]), m.s0, curve)

    def build_chain(self) -> MarkovModel:
        c = self.chain
        if c.model == "two-state":
            return two_state(c.mu, c.z0)
        if c.model == "disability":
            return disability_model()
        rates = {(t.from_state, t.to_state): RateFunction(t.breaks, t.coeffs) for t in c.rates}
        return MarkovModel(c.n_states, rates, c.z0, tuple(c.names or ()))

    def build_spec(self, premium_scale: float | None = None, include: str = "all") -> CashflowSpec:
        """Cash-flow spec with premium entries multiplied by ``premium_scale``
        (default: the configured scale); ``include`` selects ``all``, ``benefits``
        or ``premiums``."""
        if premium_scale is None:
            premium_scale = self.cashflow.premium_scale

        def keep(p):
            return include == "all" or (include == "premiums") == p.premium

        def build(p):
            pay = build_payoff(p.payoff.model_dump(exclude_none=True))
            return Scaled(pay, premium_scale) if p.premium and premium_scale != 1.0 else pay

        cf = self.cashflow
        n = self.build_chain().n_states
        f: dict = {}
        g: dict = {}
        h: dict = {}
        for p in cf.f:
            if keep(p):
                f[p.state] = _add(f.get(p.state), build(p))
        for p in cf.g:
            if keep(p):
                g[p.state] = _add(g.get(p.state), build(p))
        for p in cf.h:
            if keep(p):
                key = (p.from_state, p.to_state)
                h[key] = _add(h.get(key), build(p))
        return CashflowSpec(n, tuple(cf.jump_dates), f, g, h)

    def build_grid(self, steps: int | None = None) -> TimeGrid:
        return TimeGrid.uniform(self.horizon, steps or self.numerics.steps, self.cashflow.jump_dates)

    def eval_indices(self, grid: TimeGrid) -> list[int]:
        n = self.numerics
        if n.eval_times is not None:
            return sorted({grid.index_of(t) for t in n.eval_times})
        return list(range(0, grid.n_steps + 1, n.eval_every)) + ([grid.n_steps] if grid.n_steps % n.eval_every else [])


def _add(a, b):
    from .payoffs import Sum
    return b if a is None else Sum([a, b])


# ---------------------------------------------------------------------------
# parsing and serialisation


def _line_of(node, loc) -> int | None:
    """Line (1-based) of the YAML node at ``loc``, or of the deepest ancestor found."""
    line = node.start_mark.line + 1 if node is not None else None
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == str(key):
                    nxt = v
                    line = k.start_mark.line + 1
                    break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            break
        if node is None:
            break
    return line


def parse_config(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else None
        raise ConfigError(f"YAML syntax error (line {line}): {exc}", [("", line, str(exc))]) from exc
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping", [("", 1, "not a mapping")])
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        diags = []
        for err in exc.errors():
            loc = tuple(err["loc"])
            diags.append((".".join(str(x) for x in loc), _line_of(root, loc), err["msg"]))
        lines = [f"  {path or '<root>'} (line {line}): {msg}" for path, line, msg in diags]
        raise ConfigError("invalid configuration:\n" + "\n".join(lines), diags) from exc


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    data = cfg.model_dump(mode="json", by_alias=True, exclude_none=True)
    return yaml.safe_dump(data, sort_keys=False)


EXAMPLE = """\
schema: pathreserve/v1
market:
  model: black-scholes
  params: {mu: 0.05, sigma: 0.2}
  s0: 1.0
  rate: {breaks: [0.0], rates: [0.03]}
chain:
  model: two-state
  mu: 0.02
cashflow:
  jump_dates: [0.0, 10.0]
  h:
    - {from: 0, to: 1, payoff: {name: constant, params: {value: 1.0}}}
  g:
    - {state: 0, payoff: {name: constant, params: {value: -1.0}}, premium: true}
  premium_scale: 0.015
numerics:
  steps: 512
  n_inner: 4096
  n_outer: 4096
  seed: 0
  eval_every: 64
"""
