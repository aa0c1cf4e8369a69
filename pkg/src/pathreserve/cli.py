"""Batch command line front end.

Every verb writes deterministic CSV/JSON artifacts into ``--out-dir``; the
run timestamp and invocation details go to a separate ``metadata.json``.
Exit codes: 0 ok, 1 check failure, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .calculus import ito_residual
from .chain import simulate_chain
from .config import EXAMPLE, ConfigError, RunConfig, dump_config, load_config, parse_config
from .market import simulate, simulate_brownian
from .paths import PathBatch, PathFunctional, TimeGrid
from .reserve import (ReserveConfig, ReserveEngine, ReserveRow, reserve_res1_direct,
                      thiele_residual)

log = logging.getLogger("pathreserve")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class CheckFailed(Exception):
    pass


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


class Artifacts:
    def __init__(self, out_dir: Path, formats=("csv", "json")):
        self.dir = out_dir
        self.formats = set(formats)
        self.written: list[str] = []
        out_dir.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str) -> None:
        (self.dir / name).write_text(text)
        self.written.append(name)

    def table(self, stem: str, header, rows) -> None:
        rows = list(rows)
        if "csv" in self.formats:
            self.write(f"{stem}.csv", _csv(header, rows))
        if "json" in self.formats:
            recs = [dict(zip(header, (x.item() if isinstance(x, np.generic) else x for x in r))) for r in rows]
            self.write(f"{stem}.json", json.dumps(recs, indent=2, sort_keys=True) + "\n")

    def report(self, name: str, obj) -> None:
        self.write(name, json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n")

    def metadata(self, verb: str, argv, cfg_text: str | None) -> None:
        meta = {
            "verb": verb,
            "version": __version__,
            "argv": list(argv),
            "config_sha256": hashlib.sha256(cfg_text.encode()).hexdigest() if cfg_text else None,
            "artifacts": sorted(self.written),
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        (self.dir / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# helpers


def _engine(cfg: RunConfig, premium_scale=None, include="all", steps=None) -> ReserveEngine:
    n = cfg.numerics
    rc = ReserveConfig(n.n_inner, n.n_outer, n.antithetic, n.seed, n.method, n.h_vertical)
    return ReserveEngine(cfg.build_spec(premium_scale, include), cfg.build_chain(), cfg.build_market(),
                         cfg.build_grid(steps), rc)


def _stub_paths(cfg: RunConfig, grid: TimeGrid):
    """Real-world paths along which reserves are evaluated (path 0 is the
    deterministic flat path at ``s0`` when only one is requested)."""
    market = cfg.build_market()
    n = cfg.numerics.n_stub_paths
    if n == 1:
        return [market.initial_path(grid).extend_to_index(grid.n_steps)]
    return simulate(market, grid, n, "P", cfg.numerics.seed, tag="stub").paths


def _states(cfg: RunConfig, engine: ReserveEngine):
    return cfg.numerics.states if cfg.numerics.states is not None else list(range(engine.n_states))


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# verbs


def cmd_simulate(args, cfg: RunConfig, art: Artifacts) -> int:
    steps = args.steps or cfg.numerics.steps
    grid = cfg.build_grid(steps)
    seed = cfg.numerics.seed
    n = args.paths
    if args.model in ("asset", "joint"):
        batch = simulate(cfg.build_market(), grid, n, args.measure, seed)
        rows = ((k, grid.nodes[m], batch.values[k, m]) for k in range(n) for m in range(grid.n_steps + 1))
        art.write("asset_paths.csv", _csv(("path", "t", "value"), rows))
        if args.out:
            batch.save(art.dir / args.out)
            art.written.append(args.out)
    if args.model in ("chain", "joint"):
        chains = simulate_chain(cfg.build_chain(), grid, n, seed)
        art.write("chain_events.csv", chains.to_csv())
    return EXIT_OK


def _reserve_rows(cfg: RunConfig, engine: ReserveEngine, threads: int) -> list[tuple]:
    grid = engine.grid
    states = _states(cfg, engine)
    method = cfg.numerics.method
    items = [(p, path, j) for p, path in enumerate(_stub_paths(cfg, grid)) for j in cfg.eval_indices(grid)]

    def work(item):
        p, path, j = item
        sp = path.stop_at(grid.nodes[j])
        if method == "res2-nested":
            v, se = engine.value(sp)
            return [(p, ReserveRow(i, sp.t, float(v[i]), float(se[i]), 1, engine.n_inner_used(), method)) for i in states]
        return [(p, engine.row(i, sp, method)) for i in states]

    out = []
    for chunk in _map(work, items, threads):
        out.extend(chunk)
    return [(r.state, p, r.t, r.value, r.std_error, r.n_outer, r.n_inner, r.method) for p, r in out]


RESERVE_HEADER = ("state", "path", "t", "value", "std_error", "n_outer", "n_inner", "method")


def cmd_reserve(args, cfg: RunConfig, art: Artifacts) -> int:
    engine = _engine(cfg)
    rows = _reserve_rows(cfg, engine, args.threads)
    art.table("reserve", RESERVE_HEADER, rows)
    return EXIT_OK


def cmd_check_thiele(args, cfg: RunConfig, art: Artifacts) -> int:
    engine = _engine(cfg)
    grid = engine.grid
    n = cfg.numerics
    method = "analytic" if engine.supports_oracle else "mc"
    states = _states(cfg, engine)
    items = []
    for p, path in enumerate(_stub_paths(cfg, grid)):
        for j in cfg.eval_indices(grid):
            if j >= grid.n_steps or (engine.jump_mask[j + 1] and engine.spec.f):
                continue
            items.append((p, path.stop_at(grid.nodes[j])))

    def work(item):
        p, sp = item
        return [(p, thiele_residual(engine, i, sp, method)) for i in states]

    rows, failures = [], []
    for chunk in _map(work, items, args.threads):
        for p, res in chunk:
            tol = n.thiele_tol if res.std_error == 0 else n.se_multiple * res.std_error
            ok = abs(res.residual) <= tol
            rows.append((res.state, p, res.t, res.residual, res.std_error, tol, method, ok))
            if not ok:
                failures.append({"state": res.state, "path": p, "t": res.t, "residual": res.residual, "tolerance": tol})
    art.table("thiele", ("state", "path", "t", "residual", "std_error", "tolerance", "method", "pass"), rows)
    art.report("thiele_failures.json", {"failures": failures, "n_checked": len(rows)})
    return EXIT_CHECK if failures else EXIT_OK


class _Square(PathFunctional):
    name = "w(t)^2"

    def evaluate(self, batch):
        return batch.values[:, -1] ** 2


class _Identity(PathFunctional):
    """``w(t)``: derivatives are exactly ``(0, 1, 0)``, so the residual only measures the bookkeeping."""

    name = "w(t)"
    analytic_derivatives = True

    def evaluate(self, batch):
        return batch.values[:, -1].copy()

    def derivatives(self, sp):
        return 0.0, 1.0, 0.0


def ito_convergence(horizon: float, steps_list, n_paths: int, seed: int):
    """Median Ito residual of ``w(t)^2`` (with ``d[X] = dt``) per grid size on
    nested refinements of the same Brownian paths, plus the worst residual of
    the telescoping functional ``w(t)``."""
    steps_list = sorted(steps_list)
    finest = steps_list[-1]
    if any(finest % m for m in steps_list):
        raise ValueError("every grid size must divide the finest one")
    fine = simulate_brownian(TimeGrid.uniform(horizon, finest), n_paths, seed)
    out = []
    for m in steps_list:
        grid = TimeGrid.uniform(horizon, m)
        batch = PathBatch(grid, fine.values[:, :: finest // m])
        sq = [ito_residual(_Square(), batch.path(k), qv_rate=lambda sp: 1.0) for k in range(n_paths)]
        lin = [ito_residual(_Identity(), batch.path(k), analytic=True) for k in range(n_paths)]
        out.append((m, float(np.median(sq)), float(np.max(lin))))
    return out


def cmd_check_ito(args, cfg: RunConfig, art: Artifacts) -> int:
    n = cfg.numerics
    rows = ito_convergence(cfg.horizon, n.ito_steps, n.ito_paths, n.seed)
    medians = [r[1] for r in rows]
    monotone = all(b < a for a, b in zip(medians, medians[1:]))
    telescoping = max(r[2] for r in rows) < 1e-12
    art.table("ito", ("steps", "median_residual_square", "max_residual_identity"), rows)
    art.report("ito_summary.json", {"monotone": monotone, "telescoping_ok": telescoping})
    return EXIT_OK if monotone and telescoping else EXIT_CHECK


def cmd_check_crossvalidate(args, cfg: RunConfig, art: Artifacts) -> int:
    engine = _engine(cfg)
    grid = engine.grid
    n = cfg.numerics
    states = _states(cfg, engine)
    items = [(p, path.stop_at(grid.nodes[j])) for p, path in enumerate(_stub_paths(cfg, grid))
             for j in cfg.eval_indices(grid) if j < grid.n_steps]

    def work(item):
        p, sp = item
        v2, se2 = engine.value(sp)
        return [(p, i, sp.t, float(v2[i]), float(se2[i]),
                 reserve_res1_direct(engine.spec, engine.chain, engine.market, i, sp, n.n_outer, n.seed)) for i in states]

    rows, failures = [], []
    worst = 0.0
    for chunk in _map(work, items, args.threads):
        for p, i, t, v2, se2, r1 in chunk:
            comb = float(np.hypot(se2, r1.std_error))
            diff = abs(r1.value - v2)
            z = diff / comb if comb > 0 else (0.0 if diff < 1e-10 else float("inf"))
            worst = max(worst, z)
            ok = z < n.se_multiple
            rows.append((i, p, t, v2, se2, r1.value, r1.std_error, z, ok))
            if not ok:
                failures.append({"state": i, "path": p, "t": t, "z": z})
    art.table("crossvalidate", ("state", "path", "t", "res2", "res2_se", "res1", "res1_se", "z", "pass"), rows)
    art.report("crossvalidate_summary.json", {"max_z": worst, "threshold": n.se_multiple, "failures": failures})
    return EXIT_CHECK if failures else EXIT_OK


def solve_premium(cfg: RunConfig, state: int | None = None) -> dict:
    """Premium scale making the reserve at entry vanish.

    The reserve is linear in the premium scale and both parts are evaluated
    with the same random streams, so the root of ``B + pi P`` is exact.
    """
    state = cfg.build_chain().z0 if state is None else state
    ben = _engine(cfg, include="benefits")
    prem = _engine(cfg, premium_scale=1.0, include="premiums")
    sp = cfg.build_market().initial_path(ben.grid)
    b, b_se = ben.value(sp)
    p, p_se = prem.value(sp)
    if abs(p[state]) < 1e-300:
        raise CheckFailed("premium entries have zero value; nothing to solve for")
    pi = -float(b[state]) / float(p[state])
    return {"state": state, "premium_scale": pi, "benefits_value": float(b[state]), "benefits_se": float(b_se[state]),
            "unit_premium_value": float(p[state]), "unit_premium_se": float(p_se[state])}


def cmd_solve_premium(args, cfg: RunConfig, art: Artifacts) -> int:
    art.report("premium.json", solve_premium(cfg, args.state))
    return EXIT_OK


VERBS = {
    "simulate": cmd_simulate,
    "reserve": cmd_reserve,
    "check-thiele": cmd_check_thiele,
    "check-ito": cmd_check_ito,
    "check-crossvalidate": cmd_check_crossvalidate,
    "solve-premium": cmd_solve_premium,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pathreserve", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        p = sub.add_parser(verb)
        p.add_argument("--config", help="YAML run configuration (built-in example when omitted)")
        p.add_argument("--out-dir", default="out", help="artifact directory")
        p.add_argument("--seed", type=int, help="override numerics.seed")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("-v", "--verbose", action="store_true")
        if verb == "simulate":
            p.add_argument("--model", choices=("asset", "chain", "joint"), default="asset")
            p.add_argument("--measure", choices=("P", "Q"), default="P")
            p.add_argument("--paths", type=int, default=100)
            p.add_argument("--steps", type=int)
            p.add_argument("--out", help="also write a binary scenario cache with this file name")
        if verb == "solve-premium":
            p.add_argument("--state", type=int)
    sub.add_parser("print-config", help="print the built-in example configuration").add_argument("--config")
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            cfg_text = Path(args.config).read_text() if Path(args.config).exists() else None
            cfg = load_config(args.config)
        else:
            cfg_text = EXAMPLE
            cfg = parse_config(EXAMPLE)
        if args.verb == "print-config":
            sys.stdout.write(dump_config(cfg))
            return EXIT_OK
        if args.seed is not None:
            cfg = cfg.model_copy(update={"numerics": cfg.numerics.model_copy(update={"seed": args.seed})})
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    art = Artifacts(Path(args.out_dir), cfg.output.formats)
    try:
        code = VERBS[args.verb](args, cfg, art)
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        code = EXIT_CHECK
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    art.metadata(args.verb, argv, cfg_text)
    if code == EXIT_CHECK:
        print(f"{args.verb}: check failed (see {art.dir})", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
