"""Command-line front end.

    expbandit solve exact --config run.json --out results/
    expbandit simulate --seed 3 --reps 100000
    expbandit compare --eps0 0.05
    expbandit moments-check

A JSON config supplies the defaults of a run and command-line flags override
it.  Every run writes ``report.txt`` (one ``key=value`` per line, including
all numerical settings) and, depending on the subcommand, ``values.csv``,
``simulate.csv`` or ``compare.csv``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import exact_dp, limit_solver, simulate, unnorm_dp
from .model import DiscretePrior, Theta

logger = logging.getLogger("expbandit")

SOLVERS = ("exact", "unnorm", "limit-exp", "limit-gauss", "pde")
POLICIES = ("dp", "greedy", "eps-greedy", "forced", "always1", "always2")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "solve"
    solver: str = "exact"
    prior: dict = field(default_factory=lambda: {"symmetric": {"m": 1.0, "d": 0.3}})
    N: int = 10
    eps: float = 0.01
    eps_ladder: list = field(default_factory=lambda: [1 / 50, 1 / 100, 1 / 200])
    nodes_per_axis: int = 64
    k_trunc: float = 12.0
    quadrature: str = "exact"
    interpolation: str = "envelope"
    x_span: float = limit_solver.X_SPAN
    h: float = 1.0
    drift: str = "hybrid"
    n0: int = 0
    eps0: float = limit_solver.T_MIN
    seed: int = 0
    replications: int = 10000
    policy: str = "dp"
    explore: float = 0.1
    theta: list | None = None
    export_values: bool = False
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    out: str = "."

    def validate(self):
        if self.command == "solve" and self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {', '.join(SOLVERS)}, got {self.solver!r}")
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {', '.join(POLICIES)}, got {self.policy!r}")
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError(f"N must be a positive integer, got {self.N!r}")
        for name in ("eps", "eps0", "x_span", "h", "explore"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 0:
                if not (name == "explore" and v == 0):
                    raise ConfigError(f"{name} must be a positive number, got {v!r}")
        for e in [self.eps, *self.eps_ladder]:
            if abs(1 / e - round(1 / e)) > 1e-9:
                raise ConfigError(f"1/eps must be an integer, got eps={e!r}")
        if self.nodes_per_axis < 4:
            raise ConfigError("nodes_per_axis must be at least 4")
        if self.replications < 1:
            raise ConfigError("replications must be positive")
        if self.n0 < 0 or (self.n0 and 2 * self.n0 >= self.N):
            raise ConfigError("n0 must satisfy 0 <= n0 and 2*n0 < N")
        if self.threads < 1:
            raise ConfigError("threads must be positive")
        build_prior(self)


def _fraction_or_float(v):
    if isinstance(v, str) and "/" in v:
        return float(Fraction(v))
    return v


def build_prior(cfg: RunConfig):
    """``(DiscretePrior | None, ScaledPrior | None)`` from the ``prior`` section."""
    desc = cfg.prior
    if not isinstance(desc, dict) or len(desc) != 1:
        raise ConfigError("prior must be an object with exactly one of: nodes, symmetric, scaled, "
                          "scaled_symmetric")
    (kind, body), = desc.items()
    try:
        if kind == "nodes":
            rows = np.asarray(body, dtype=float)
            return DiscretePrior(rows[:, 0], rows[:, 1], rows[:, 2]), None
        if kind == "symmetric":
            return DiscretePrior.symmetric_two_point(float(body["m"]), float(body["d"])), None
        N_scaled = int(body.get("N", round(1 / cfg.eps))) if isinstance(body, dict) else int(round(1 / cfg.eps))
        if kind == "scaled":
            rows = np.asarray(body["nodes"], dtype=float)
            sp = limit_solver.ScaledPrior(rows[:, 0], rows[:, 1], rows[:, 2], m=float(body.get("m", 1.0)),
                                          N=N_scaled)
        elif kind == "scaled_symmetric":
            sp = limit_solver.ScaledPrior.symmetric_two_point(float(body["d"]), float(body.get("m", 1.0)),
                                                              N_scaled)
        else:
            raise ConfigError(f"unknown prior kind {kind!r}")
        return sp.to_discrete(), sp
    except (KeyError, IndexError, TypeError) as exc:
        raise ConfigError(f"malformed prior section: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_config(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    data = {k: _fraction_or_float(v) for k, v in data.items()}
    if "eps_ladder" in data:
        data["eps_ladder"] = [_fraction_or_float(v) for v in data["eps_ladder"]]
    cfg = RunConfig(**data)
    cfg.command = args.command
    overrides = {
        "solver": getattr(args, "solver", None), "out": args.out, "threads": args.threads,
        "seed": args.seed, "nodes_per_axis": args.grid, "eps": args.eps, "eps0": args.eps0,
        "n0": args.n0, "replications": args.reps, "N": args.N, "policy": getattr(args, "policy", None),
    }
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    if args.values:
        cfg.export_values = True
    cfg.validate()
    return cfg


@dataclass
class SolveReport:
    entries: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def lines(self) -> list[str]:
        out = [f"{k}={_fmt(v)}" for k, v in self.entries.items()]
        out += [f"time_{k}={v:.3f}" for k, v in self.timings.items()]
        out.append(f"warnings={len(self.warnings)}")
        out += [f"warning_{i}={w}" for i, w in enumerate(self.warnings)]
        return out


def _fmt(v) -> str:
    # shortest repr that round-trips; CSV cells use 17 significant digits instead
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def _settings(cfg: RunConfig) -> dict:
    d = {f.name: getattr(cfg, f.name) for f in fields(RunConfig) if f.name not in ("out",)}
    d["prior"] = json.dumps(cfg.prior, sort_keys=True)
    d["quad_panels"] = exact_dp.QUAD_PANELS
    d["quad_order"] = exact_dp.QUAD_ORDER
    d["tie_tol"] = exact_dp.DEFAULT_TIE_TOL
    d["store_dt"] = limit_solver.STORE_DT
    return d


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{float(v):.17g}" if isinstance(v, (float, np.floating)) else v for v in row])


def _table_rows(table, kind: str):
    for n1, n2 in table.slices():
        x1, x2 = table.axes(n1, n2)
        if kind == "exact":
            b1, b2 = table.R1[n1, n2], table.R2[n1, n2]
        else:
            b1, b2 = table.branches(n1, n2)
        best = np.minimum(b1, b2)
        dec = exact_dp.decide(b1, b2)
        for i in range(x1.size):
            for j in range(x2.size):
                yield (n1, n2, x1[i], x2[j], b1[i, j], b2[i, j], best[i, j], int(dec[i, j]))


def _field_rows(fld):
    for k1, k2 in fld.slices():
        tr1, tr2 = fld.branches[k1, k2]
        best = np.minimum(tr1, tr2)
        dec = exact_dp.decide(tr1, tr2)
        t1, t2 = k1 * fld.eps, k2 * fld.eps
        for i in range(fld.x.size):
            for j in range(fld.x.size):
                yield (t1, t2, fld.x[i], fld.x[j], tr1[i, j], tr2[i, j], best[i, j], int(dec[i, j]))


def read_values_csv(path) -> dict:
    """Load ``values.csv`` back into ``{column: np.ndarray}``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(header)}


def _solve_discrete(cfg: RunConfig, prior: DiscretePrior, rep: SolveReport, out: Path):
    grid = exact_dp.GridSpec.for_prior(prior, cfg.nodes_per_axis, cfg.k_trunc)
    half = grid.halved()
    if cfg.solver == "exact":
        def solve(g):
            return exact_dp.solve_exact(prior, cfg.N, g, quadrature=cfg.quadrature)
    else:
        def solve(g):
            return unnorm_dp.solve_unnorm(prior, cfg.N, g, quadrature=cfg.quadrature,
                                          interpolation=cfg.interpolation)
    t = time.perf_counter()
    table, risk = solve(grid)
    rep.timings["solve"] = time.perf_counter() - t
    t = time.perf_counter()
    _, risk_half = solve(half)
    rep.timings["solve_half"] = time.perf_counter() - t
    rep.entries.update(risk=risk, risk_half=risk_half, nodes_half=half.nodes_per_axis)
    rep.warnings += table.warnings
    if cfg.n0:
        t = time.perf_counter()
        if cfg.solver == "exact":
            forced = exact_dp.risk_with_forced_start(prior, cfg.N, cfg.n0, grid, quadrature=cfg.quadrature)
        else:
            forced = unnorm_dp.risk_unnorm_forced_start(prior, cfg.N, cfg.n0, grid, quadrature=cfg.quadrature,
                                                        interpolation=cfg.interpolation)
        rep.timings["forced_start"] = time.perf_counter() - t
        rep.entries["risk_forced_start"] = forced
    if cfg.export_values:
        if cfg.solver == "exact":
            header = ["n1", "n2", "x1", "x2", "R1", "R2", "R", "decision"]
        else:
            header = ["n1", "n2", "x1", "x2", "tR1", "tR2", "tR", "decision"]
        _write_csv(out / "values.csv", header, _table_rows(table, cfg.solver))


def _solve_limit(cfg: RunConfig, sp, rep: SolveReport, out: Path):
    def solve(h_factor):
        if cfg.solver == "pde":
            dx = h_factor * cfg.h * math.sqrt(cfg.eps)
            return limit_solver.solve_pde(sp, cfg.eps, cfg.x_span, cfg.eps0, dx=dx, drift=cfg.drift)
        fn = (limit_solver.solve_integro_difference_exponential if cfg.solver == "limit-exp"
              else limit_solver.solve_integro_difference_gaussian)
        return fn(sp, cfg.eps, cfg.x_span, h=h_factor * cfg.h, t_min=cfg.eps0)

    t = time.perf_counter()
    fld = solve(1)
    rep.timings["solve"] = time.perf_counter() - t
    t = time.perf_counter()
    coarse = solve(2)
    rep.timings["solve_half"] = time.perf_counter() - t
    rep.warnings += fld.warnings
    rep.entries.update({f"info_{k}": v for k, v in fld.info.items()})
    try:
        rep.entries["risk"] = limit_solver.scaled_risk(fld, sp, cfg.eps0)
        rep.entries["risk_half"] = limit_solver.scaled_risk(coarse, sp, cfg.eps0)
    except ValueError as exc:
        rep.warnings.append(f"scaled risk unavailable: {exc}")
    if cfg.export_values:
        _write_csv(out / "values.csv", ["t1", "t2", "x1", "x2", "tr1", "tr2", "tr", "decision"],
                   _field_rows(fld))


def _policy(cfg: RunConfig, prior: DiscretePrior, rep: SolveReport) -> simulate.Policy:
    if cfg.policy in ("dp", "forced"):
        grid = exact_dp.GridSpec.for_prior(prior, cfg.nodes_per_axis, cfg.k_trunc)
        t = time.perf_counter()
        if cfg.policy == "forced":
            if not cfg.n0:
                raise ConfigError("policy 'forced' needs n0 >= 1")
            table = exact_dp.backward_solve(prior, cfg.N, grid, lo1=cfg.n0, lo2=cfg.n0,
                                            quadrature=cfg.quadrature)
            rep.entries["risk_forced_start"] = exact_dp.risk_with_forced_start(prior, cfg.N, cfg.n0, table=table)
            pol: simulate.Policy = simulate.ForcedStartThenDP(table, cfg.n0)
        else:
            table, risk = exact_dp.solve_exact(prior, cfg.N, grid, quadrature=cfg.quadrature)
            rep.entries["risk_dp"] = risk
            pol = simulate.DPPolicy(table)
        rep.timings["solve"] = time.perf_counter() - t
        return pol
    if cfg.policy == "greedy":
        return simulate.Greedy(prior)
    if cfg.policy == "eps-greedy":
        return simulate.EpsilonGreedy(prior, cfg.explore)
    return simulate.AlwaysArm(1 if cfg.policy == "always1" else 2)


def _simulate(cfg: RunConfig, prior: DiscretePrior, rep: SolveReport, out: Path):
    pol = _policy(cfg, prior, rep)
    t = time.perf_counter()
    if cfg.theta is not None:
        theta = Theta(*map(float, cfg.theta))
        est = simulate.simulate_strategy(pol, theta, cfg.N, cfg.seed, cfg.replications, threads=cfg.threads)
    else:
        est = simulate.bayes_regret_mc(pol, prior, cfg.N, cfg.seed, cfg.replications, threads=cfg.threads)
    rep.timings["simulate"] = time.perf_counter() - t
    rep.entries.update(regret_mean=est.mean, regret_std_error=est.std_error, replications_done=est.replications)
    _write_csv(out / "simulate.csv", ["policy", "N", "replications", "seed", "mean", "std_error"],
               [(pol.name, cfg.N, est.replications, cfg.seed, est.mean, est.std_error)])


def _compare(cfg: RunConfig, sp, rep: SolveReport, out: Path):
    rows = []
    for e in cfg.eps_ladder:
        spe = sp.with_horizon(int(round(1 / e)))
        t = time.perf_counter()
        fe = limit_solver.solve_integro_difference_exponential(spe, e, cfg.x_span, h=cfg.h, t_min=cfg.eps0)
        fg = limit_solver.solve_integro_difference_gaussian(spe, e, cfg.x_span, h=cfg.h, t_min=cfg.eps0)
        rep.timings[f"compare_{e:.6g}"] = time.perf_counter() - t
        rep.warnings += fe.warnings + fg.warnings
        dist = limit_solver.field_distance(fe, fg, t_sum_min=0.2)
        try:
            r_exp = limit_solver.scaled_risk(fe, spe, cfg.eps0)
            r_gau = limit_solver.scaled_risk(fg, spe, cfg.eps0)
        except ValueError:
            r_exp = r_gau = float("nan")
        rows.append((float(e), dist, r_exp, r_gau))
        logger.info("eps=%g distance=%.4g", e, dist)
    _write_csv(out / "compare.csv", ["eps", "sup_distance", "scaled_risk_exp", "scaled_risk_gauss"], rows)
    d = [r[1] for r in rows]
    rep.entries["distance_strictly_decreasing"] = all(a > b for a, b in zip(d, d[1:]))
    rep.entries["distances"] = d


def _moments(cfg: RunConfig, rep: SolveReport, eps_values) -> list[str]:
    printed = []
    for e in eps_values:
        for chk in limit_solver.moment_check(e):
            ok = chk.passed
            line = (f"eps={e:g} t={chk.t:g} x_hat={chk.x_hat:g} "
                    f"mass_excess={chk.mass_excess:.3e}:{'pass' if ok[0] else 'FAIL'} "
                    f"mean_error={chk.mean_error:.3e}:{'pass' if ok[1] else 'FAIL'} "
                    f"second_error={chk.second_error:.3e}:{'pass' if ok[2] else 'FAIL'}")
            printed.append(line)
            rep.entries[f"moments_{e:g}_{chk.t:g}_{chk.x_hat:g}"] = "/".join("pass" if o else "fail" for o in ok)
    return printed


def run(cfg: RunConfig, eps_explicit: bool = False) -> SolveReport:
    """Execute one configured run and write its files into ``cfg.out``."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rep = SolveReport()
    rep.entries["command"] = cfg.command
    rep.entries.update(_settings(cfg))
    prior, sp = build_prior(cfg)
    if cfg.command == "solve":
        if cfg.solver in ("exact", "unnorm"):
            _solve_discrete(cfg, prior, rep, out)
        else:
            if sp is None:
                raise ConfigError("limit solvers need a scaled prior (scaled or scaled_symmetric)")
            _solve_limit(cfg, sp.with_horizon(int(round(1 / cfg.eps))), rep, out)
    elif cfg.command == "simulate":
        _simulate(cfg, prior, rep, out)
    elif cfg.command == "compare":
        if sp is None:
            raise ConfigError("compare needs a scaled prior (scaled or scaled_symmetric)")
        _compare(cfg, sp, rep, out)
    elif cfg.command == "moments-check":
        for line in _moments(cfg, rep, [cfg.eps] if eps_explicit else [1e-3, 1e-4]):
            print(line)
    else:
        raise ConfigError(f"unknown command {cfg.command!r}")
    (out / "report.txt").write_text("\n".join(rep.lines()) + "\n", encoding="utf-8")
    return rep


class _Parser(argparse.ArgumentParser):
    # one-line diagnostics, like configuration errors
    def error(self, message):
        self.exit(2, f"expbandit: error: {message}\n")


def make_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (default: current)")
    common.add_argument("--threads", type=int, metavar="K", help="worker threads for simulation")
    common.add_argument("--seed", type=int, metavar="S")
    common.add_argument("--grid", type=int, metavar="K", help="income nodes per axis")
    common.add_argument("--eps", type=_positive_fraction, metavar="E", help="scaled time step, e.g. 1/100")
    common.add_argument("--eps0", type=float, metavar="E0", help="forced-start fraction of the horizon")
    common.add_argument("--n0", type=int, metavar="K", help="forced-start pulls per arm")
    common.add_argument("--reps", type=int, metavar="R", help="Monte Carlo replications")
    common.add_argument("--N", type=int, metavar="N", help="horizon")
    common.add_argument("--values", action="store_true", help="also write values.csv")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="expbandit", description="Bayesian risk of the exponential two-armed bandit")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common], help="run one solver")
    s.add_argument("solver", choices=SOLVERS)
    m = sub.add_parser("simulate", parents=[common], help="Monte Carlo regret of a policy")
    m.add_argument("--policy", choices=POLICIES)
    sub.add_parser("compare", parents=[common], help="exponential vs Gaussian limit over the eps ladder")
    sub.add_parser("moments-check", parents=[common], help="transition-kernel moment identities")
    return p


def _positive_fraction(text: str) -> float:
    try:
        v = float(Fraction(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        run(cfg, eps_explicit=args.eps is not None)
    except ConfigError as exc:
        print(f"expbandit: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"expbandit: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
