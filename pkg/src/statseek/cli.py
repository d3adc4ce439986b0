"""Command-line front end.

Subcommands: run (one experiment -> trace.csv + verdict.json), sweep
(hyperparameter grid -> grid.csv), stats (seeded replications ->
stats.json), verify (a-posteriori consistency check of a stored trace
against live agent oracles). Configs are JSON; bundled ones ship with the
package and are addressed by bare name. All outputs are written atomically.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import os
import sys
import tempfile
from importlib import resources
from pathlib import Path

import numpy as np

from .agents import make_game
from .engine import RunConfig, RunTrace, SolverAbort, run, stats, sweep
from .oracle import stationarity_residual
from .profiles import CollectiveProfile, contains
from .query import build_query_problem, lambda_min
from .surrogate import AffineSurrogate

log = logging.getLogger("statseek")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_VERIFY = 4


class ConfigError(ValueError):
    """Configuration file is malformed or violates the schema."""


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _num_list(v) -> bool:
    return isinstance(v, list) and len(v) > 0 and all(_is_num(x) for x in v)


# key -> (required, checker, description)
_TOP_SCHEMA = {
    "name": (False, lambda v: isinstance(v, str), "string"),
    "game": (True, lambda v: isinstance(v, dict), "object"),
    "K": (True, lambda v: isinstance(v, int) and not isinstance(v, bool), "integer"),
    "K_in": (True, lambda v: isinstance(v, int) and not isinstance(v, bool), "integer"),
    "alpha": (True, _is_num, "number"),
    "beta": (True, _is_num, "number"),
    "seed": (True, lambda v: _num_list(v) and all(isinstance(x, int) for x in v), "list of integers"),
    "m_lower": (True, _num_list, "nonempty list of numbers"),
    "m_upper": (True, _num_list, "nonempty list of numbers"),
    "tol_conv": (False, _is_num, "number"),
    "tol_theta": (False, _is_num, "number"),
    "window": (False, lambda v: isinstance(v, int) and not isinstance(v, bool), "integer"),
    "early_stop": (False, lambda v: isinstance(v, bool), "boolean"),
    "reps": (False, lambda v: isinstance(v, int) and not isinstance(v, bool), "integer"),
    "sweep": (False, lambda v: isinstance(v, dict), "object"),
    "out": (False, lambda v: isinstance(v, str), "string"),
}

_GAME_KEYS = {
    "quadratic10": set(),
    "internet": {"n_agents"},
    "infinite_eq": set(),
    "no_eq": set(),
    "qp_gnep": {"sizes", "omega", "agents"},
    "lqr_random": {"instance_seed", "n_agents", "init_perturbation"},
}


def bundled_config_names() -> list:
    base = resources.files("statseek").joinpath("configs")
    return sorted(p.name[: -len(".json")] for p in base.iterdir() if p.name.endswith(".json"))


def load_config(ref: str) -> dict:
    """Load a config from a path, or from the bundled set by bare name."""
    path = Path(ref)
    if path.suffix == ".json" or os.sep in ref or path.exists():
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {ref!r}: {exc}") from exc
    else:
        res = resources.files("statseek").joinpath("configs", f"{ref}.json")
        if not res.is_file():
            raise ConfigError(
                f"unknown bundled config {ref!r}; available: {', '.join(bundled_config_names())}"
            )
        text = res.read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {ref!r}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("top-level config must be a JSON object")
    return validate_config(cfg)


def validate_config(cfg: dict) -> dict:
    unknown = sorted(set(cfg) - set(_TOP_SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for key, (required, check, desc) in _TOP_SCHEMA.items():
        if key not in cfg:
            if required:
                raise ConfigError(f"missing required config key {key!r}")
            continue
        if not check(cfg[key]):
            raise ConfigError(f"config key {key!r} must be a {desc}")
    game = cfg["game"]
    kind = game.get("game")
    if kind not in _GAME_KEYS:
        raise ConfigError(
            f"unknown game {kind!r}; known: {', '.join(sorted(_GAME_KEYS))}"
        )
    extra = sorted(set(game) - _GAME_KEYS[kind] - {"game"})
    if extra:
        raise ConfigError(f"unknown keys for game {kind!r}: {', '.join(extra)}")
    if "sweep" in cfg:
        sw = cfg["sweep"]
        if set(sw) != {"beta", "K_in"}:
            raise ConfigError('sweep grid must have exactly the keys "beta" and "K_in"')
        if not _num_list(sw["beta"]) or not _num_list(sw["K_in"]):
            raise ConfigError("sweep grid axes must be nonempty lists of numbers")
        if any(not isinstance(v, int) or isinstance(v, bool) for v in sw["K_in"]):
            raise ConfigError("sweep K_in values must be integers")
    if "reps" in cfg and cfg["reps"] < 1:
        raise ConfigError("reps must be at least 1")
    return cfg


def make_run_config(cfg: dict, seed_override=None) -> RunConfig:
    seed = (seed_override,) if seed_override is not None else tuple(cfg["seed"])
    kwargs = {}
    for key in ("tol_conv", "tol_theta", "window", "early_stop"):
        if key in cfg:
            kwargs[key] = cfg[key]
    try:
        return RunConfig(
            game=cfg["game"],
            K=cfg["K"],
            K_in=cfg["K_in"],
            alpha=float(cfg["alpha"]),
            beta=float(cfg["beta"]),
            seed=seed,
            m_lower=tuple(cfg["m_lower"]),
            m_upper=tuple(cfg["m_upper"]),
            **kwargs,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _write_json(path: Path, obj) -> None:
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_trace(path: Path, trace: RunTrace) -> None:
    buf = io.StringIO()
    trace.write_csv(buf)
    _atomic_write(path, buf.getvalue())


def _out_dir(args, cfg: dict) -> Path:
    if args.out:
        return Path(args.out)
    if "out" in cfg:
        return Path(cfg["out"])
    return Path("out") / cfg.get("name", "experiment")


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    rc = make_run_config(cfg, args.seed)
    out = _out_dir(args, cfg)
    try:
        trace, verdict = run(rc)
    except SolverAbort as exc:
        log.error("solver abort: %s", exc)
        if exc.trace is not None:
            _write_trace(out / "trace.csv", exc.trace)
            log.info("partial trace written to %s", out / "trace.csv")
        return EXIT_SOLVER
    _write_trace(out / "trace.csv", trace)
    _write_json(out / "verdict.json", verdict.to_dict())
    log.info(
        "run %s: converged=%s iterations=%d final_residual=%.3e -> %s",
        cfg.get("name", args.config),
        verdict.converged,
        verdict.iterations_used,
        verdict.final_residual,
        out,
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if "sweep" not in cfg:
        raise ConfigError("config has no sweep grid")
    rc = make_run_config(cfg, args.seed)
    grid = [(float(b), int(ki)) for b in cfg["sweep"]["beta"] for ki in cfg["sweep"]["K_in"]]
    reps = args.reps if args.reps is not None else int(cfg.get("reps", 1))
    if reps < 1:
        raise ConfigError("reps must be at least 1")
    out = _out_dir(args, cfg)
    try:
        result = sweep(rc, grid, reps, parallel=args.parallel)
    except SolverAbort as exc:
        log.error("solver abort: %s", exc)
        return EXIT_SOLVER
    buf = io.StringIO()
    result.write_csv(buf)
    _atomic_write(out / "grid.csv", buf.getvalue())
    _write_json(
        out / "sweep.json",
        {
            "grid": [[b, ki] for b, ki in result.grid],
            "reps": result.reps,
            "failures": [result.failures[ci] for ci in range(len(result.grid))],
        },
    )
    n_fail = sum(result.failures.values())
    log.info(
        "sweep %s: %d cells x %d reps, %d failed runs -> %s",
        cfg.get("name", args.config),
        len(grid),
        reps,
        n_fail,
        out,
    )
    return EXIT_OK


def cmd_stats(args) -> int:
    cfg = load_config(args.config)
    rc = make_run_config(cfg, args.seed)
    reps = args.reps if args.reps is not None else int(cfg.get("reps", 1))
    if reps < 1:
        raise ConfigError("reps must be at least 1")
    out = _out_dir(args, cfg)
    try:
        result = stats(rc, reps, parallel=args.parallel)
    except (SolverAbort, RuntimeError) as exc:
        log.error("solver abort: %s", exc)
        return EXIT_SOLVER
    _write_json(out / "stats.json", result.to_dict())
    log.info(
        "stats %s: %.1f%% converged over %d reps, %d failures -> %s",
        cfg.get("name", args.config),
        result.percent_converged,
        reps,
        result.failures,
        out,
    )
    return EXIT_OK


def _surrogates_at(trace: RunTrace, row_idx: int, sizes) -> list:
    """Models the query at row_idx was built from.

    A row's snapshot is post-refit, so the query of row t used the snapshot
    of row t-1 (all-zero parameters when t = 0).
    """
    n = sum(sizes)
    surrogates = []
    row = trace.rows[row_idx - 1] if row_idx >= 1 else None
    for i, n_out in enumerate(sizes):
        n_in = n - n_out
        width = n_out * (n_in + 1)
        if row is None:
            vals = np.zeros((n_out, n_in + 1))
        else:
            vals = np.array(
                [
                    float(row[trace.columns.index(f"theta_{i + 1}_{t + 1}")])
                    for t in range(width)
                ]
            ).reshape(n_out, n_in + 1)
        surrogates.append(AffineSurrogate(nu=vals[:, :-1], c=vals[:, -1]))
    return surrogates


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    game = make_game(cfg["game"])
    sizes = game.partition.sizes
    n = game.partition.total
    trace_path = Path(args.trace)
    if not trace_path.exists():
        raise ConfigError(f"trace file not found: {trace_path}")
    with open(trace_path) as fh:
        trace = RunTrace.read_csv(fh, partition_sizes=sizes)
    verdict_path = trace_path.parent / "verdict.json"
    verdict = None
    if verdict_path.exists():
        verdict = json.loads(verdict_path.read_text())
    if len(trace) == 0:
        raise ConfigError("trace is empty")

    checks = {}
    x_hat = np.column_stack([trace.column(f"x_hat_{j + 1}") for j in range(n)])
    x = np.column_stack([trace.column(f"x_{j + 1}") for j in range(n)])
    residual = trace.column("residual")

    recomputed = np.array(
        [float(np.linalg.norm(x_hat[t] - x[t])) for t in range(len(trace))]
    )
    checks["residual_identity"] = bool(np.array_equal(recomputed, residual))

    feasible = all(contains(game.omega, x_hat[t]) for t in range(len(trace)))
    checks["queries_feasible"] = bool(feasible)

    final_q = x_hat[-1]
    react = np.empty(n)
    for i, oracle in enumerate(game.oracles):
        others = final_q[game.partition.others_index(i)]
        react[game.partition.block_slice(i)] = np.asarray(
            oracle.react(others), dtype=float
        ).ravel()
    checks["final_reaction_matches"] = bool(np.array_equal(react, x[-1]))

    profile = CollectiveProfile(partition=game.partition, values=final_q)
    stat = float(stationarity_residual(profile, game.oracles))
    checks["final_stationarity_residual"] = stat

    phases = trace.text_column("phase")
    lam_rebuilt = math.nan
    if "active" in phases:
        last_active = max(t for t, p in enumerate(phases) if p == "active")
        surrogates = _surrogates_at(trace, last_active, sizes)
        problem = build_query_problem(surrogates, game.omega)
        lam_rebuilt = float(lambda_min(problem.H))
        lam_stored = float(trace.column("lambda_min_H")[last_active])
        checks["lambda_min_matches"] = bool(
            abs(lam_rebuilt - lam_stored) <= 1e-12 * (1.0 + abs(lam_stored))
        )
        checks["lambda_min_H"] = lam_rebuilt
    else:
        checks["lambda_min_matches"] = True

    tol_conv = float(cfg.get("tol_conv", 1e-6))
    if verdict is not None:
        checks["verdict_residual_matches"] = bool(
            float(verdict["final_residual"]) == float(residual[-1])
        )
        checks["verdict_stationarity_matches"] = bool(
            abs(float(verdict["final_stationarity_residual"]) - stat)
            <= 1e-12 * (1.0 + stat)
        )
        if verdict["converged"]:
            checks["certificate"] = bool(
                stat <= 10.0 * tol_conv and lam_rebuilt > 0.0
            )
        else:
            checks["certificate"] = "no certificate: run did not converge"
    else:
        checks["certificate"] = "no verdict.json next to the trace"

    ok = all(v is True for k, v in checks.items() if isinstance(v, bool))
    report = {"consistent": ok, "trace": str(trace_path), "checks": checks}
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="statseek",
        description="Query private agents, learn their reaction laws, seek stationary profiles.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, reps=False, trace=False):
        sp.add_argument("--config", required=True, help="config path or bundled name")
        sp.add_argument("--seed", type=int, default=None, help="master seed override")
        sp.add_argument("--out", default=None, help="output directory")
        if reps:
            sp.add_argument("--reps", type=int, default=None, help="replication count")
            sp.add_argument(
                "--parallel", type=int, default=1, help="max worker processes"
            )
        if trace:
            sp.add_argument("--trace", required=True, help="path to trace.csv")

    common(sub.add_parser("run", help="execute one experiment"))
    common(sub.add_parser("sweep", help="hyperparameter grid study"), reps=True)
    common(sub.add_parser("stats", help="replicated convergence statistics"), reps=True)
    common(sub.add_parser("verify", help="a-posteriori trace check"), trace=True)
    return p


_COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "stats": cmd_stats,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("STATSEEK_LOG", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
