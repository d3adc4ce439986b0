"""The active learning loop and its replication harnesses.

A run starts with a passive phase (random feasible draws shown to every
agent) and then alternates: refit each agent's affine model on the newest
pair, synthesize the next query as the best fixed-point candidate of the
fitted models, collect reactions. Convergence is declared after a window of
iterations with both a small query-reaction gap and stagnating parameters.
sweep() and stats() run seeded replications over hyperparameter grids.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .agents import GameBundle, make_game
from .oracle import stationarity_residual
from .profiles import CollectiveProfile, contains, project
from .query import QpError, build_query_problem, min_norm_query
from .surrogate import KalmanBank, SampleLog, kf_step

DEFAULT_TOL_CONV = 1e-6
DEFAULT_TOL_THETA = 1e-6
DEFAULT_WINDOW = 5


class SolverAbort(RuntimeError):
    """A solver failed mid-run; carries the partial trace."""

    def __init__(self, message: str, trace: "RunTrace | None"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class RunConfig:
    """Everything one run depends on; a pure function of this is the trace."""

    game: dict
    K: int
    K_in: int
    alpha: float
    beta: float
    seed: tuple
    m_lower: tuple
    m_upper: tuple
    tol_conv: float = DEFAULT_TOL_CONV
    tol_theta: float = DEFAULT_TOL_THETA
    window: int = DEFAULT_WINDOW
    early_stop: bool = True

    def __post_init__(self):
        if not (0 <= self.K_in < self.K):
            raise ValueError("need 0 <= K_in < K")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.tol_conv <= 0 or self.tol_theta <= 0 or self.window < 1:
            raise ValueError("tolerances must be positive, window at least 1")
        seed = tuple(int(s) for s in (self.seed if hasattr(self.seed, "__len__") else (self.seed,)))
        object.__setattr__(self, "seed", seed)
        m_lo = tuple(float(v) for v in np.atleast_1d(self.m_lower))
        m_hi = tuple(float(v) for v in np.atleast_1d(self.m_upper))
        if len(m_lo) != len(m_hi):
            raise ValueError("range estimate bounds have different lengths")
        if any(lo > hi for lo, hi in zip(m_lo, m_hi)):
            raise ValueError("range estimate must satisfy m_lower <= m_upper")
        object.__setattr__(self, "m_lower", m_lo)
        object.__setattr__(self, "m_upper", m_hi)


@dataclass(frozen=True)
class Verdict:
    """Outcome summary of one run."""

    converged: bool
    iterations_used: int
    final_residual: float
    final_stationarity_residual: float
    lambda_min_at_termination: float
    unique_certificate: bool

    def to_dict(self) -> dict:
        return {
            "converged": bool(self.converged),
            "iterations_used": int(self.iterations_used),
            "final_residual": float(self.final_residual),
            "final_stationarity_residual": float(self.final_stationarity_residual),
            "lambda_min_at_termination": float(self.lambda_min_at_termination),
            "unique_certificate": bool(self.unique_certificate),
        }


def trace_columns(partition) -> list[str]:
    """Column layout of the per-iteration trace."""
    n = partition.total
    N = partition.n_agents
    cols = ["k", "phase"]
    cols += [f"x_hat_{j + 1}" for j in range(n)]
    cols += [f"x_{j + 1}" for j in range(n)]
    cols += ["residual"]
    cols += [f"theta_norm_{i + 1}" for i in range(N)]
    cols += [f"d_theta_{i + 1}" for i in range(N)]
    cols += ["lambda_min_H", "flags", "kkt_residual"]
    for i in range(N):
        p_i = partition.sizes[i] * (n - partition.sizes[i] + 1)
        cols += [f"theta_{i + 1}_{t + 1}" for t in range(p_i)]
    return cols


@dataclass
class RunTrace:
    """Per-iteration record of queries, reactions, residuals, certificates."""

    columns: list
    rows: list
    partition_sizes: tuple

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        """Numeric column as a float array."""
        j = self.columns.index(name)
        return np.array([float(row[j]) for row in self.rows])

    def text_column(self, name: str) -> list:
        j = self.columns.index(name)
        return [str(row[j]) for row in self.rows]

    def write_csv(self, fh) -> None:
        """Stable text encoding: floats via repr, so parsing round-trips."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([repr(v) if isinstance(v, float) else str(v) for v in row])

    @classmethod
    def read_csv(cls, fh, partition_sizes=()) -> "RunTrace":
        r = csv.reader(fh)
        columns = next(r)
        rows = []
        for raw in r:
            row = []
            for name, v in zip(columns, raw):
                if name == "k":
                    row.append(int(v))
                elif name in ("phase", "flags"):
                    row.append(v)
                else:
                    row.append(float(v))
            rows.append(row)
        return cls(columns=columns, rows=rows, partition_sizes=tuple(partition_sizes))


@dataclass
class EngineState:
    """Mutable loop state threaded through init_phase and step."""

    cfg: RunConfig
    game: GameBundle
    rng: np.random.Generator
    banks: list
    logs: list
    rows: list = field(default_factory=list)
    k: int = 0
    streak: int = 0
    converged_at: int | None = None
    last_query: np.ndarray | None = None
    last_reaction: np.ndarray | None = None
    last_lambda: float = math.nan
    last_kkt: float = math.nan
    last_unique: bool = False


def _resolve_range(cfg: RunConfig, n: int) -> tuple[np.ndarray, np.ndarray]:
    lo = np.asarray(cfg.m_lower, dtype=float)
    hi = np.asarray(cfg.m_upper, dtype=float)
    if lo.size == 1:
        lo = np.full(n, float(lo[0]))
        hi = np.full(n, float(hi[0]))
    if lo.size != n:
        raise ValueError(f"range estimate has {lo.size} entries, profile needs {n}")
    return lo, hi


def _react_all(state: EngineState, xq: np.ndarray) -> tuple[np.ndarray, list]:
    game = state.game
    x = np.empty(game.partition.total)
    flags = []
    for i, oracle in enumerate(game.oracles):
        others = xq[game.partition.others_index(i)]
        xi, fl = oracle.react_flags(others)
        x[game.partition.block_slice(i)] = np.asarray(xi, dtype=float).ravel()
        flags.extend(f"agent{i + 1}:{f}" for f in fl)
    return x, flags


def _refit_all(state: EngineState, xq: np.ndarray, x: np.ndarray) -> list:
    game = state.game
    d_theta = []
    for i in range(game.partition.n_agents):
        others = xq[game.partition.others_index(i)]
        xi = x[game.partition.block_slice(i)]
        before = state.banks[i].theta_vector()
        kf_step(state.banks[i], others, xi)
        state.logs[i].append(others, xi, state.k)
        d_theta.append(float(np.linalg.norm(state.banks[i].theta_vector() - before)))
    return d_theta


def _record(state: EngineState, phase: str, xq, x, d_theta, lam, kkt, flags) -> None:
    residual = float(np.linalg.norm(xq - x))
    row = [int(state.k), phase]
    row += [float(v) for v in xq]
    row += [float(v) for v in x]
    row.append(residual)
    row += [float(np.linalg.norm(b.theta_vector())) for b in state.banks]
    row += [float(v) for v in d_theta]
    row += [float(lam), ";".join(flags), float(kkt)]
    for b in state.banks:
        row += [float(v) for v in b.theta_vector()]
    state.rows.append(row)
    state.last_query = np.asarray(xq, dtype=float).copy()
    state.last_reaction = np.asarray(x, dtype=float).copy()
    if phase == "active":
        hit = residual <= state.cfg.tol_conv and max(d_theta) <= state.cfg.tol_theta
        state.streak = state.streak + 1 if hit else 0
        if state.streak >= state.cfg.window and state.converged_at is None:
            state.converged_at = state.k
    state.k += 1


def init_phase(cfg: RunConfig, game: GameBundle, rng: np.random.Generator) -> EngineState:
    """Passive phase: feasible random draws shown to every agent.

    Draws come from the configured range estimate (or the game's own
    sampler), are projected into the feasible set, and update the filters
    exactly like active samples. K_in = 0 leaves the banks untouched.
    """
    n = game.partition.total
    banks = [
        KalmanBank(game.partition.sizes[i], n - game.partition.sizes[i], cfg.alpha, cfg.beta)
        for i in range(game.partition.n_agents)
    ]
    logs = [
        SampleLog(n - game.partition.sizes[i], game.partition.sizes[i])
        for i in range(game.partition.n_agents)
    ]
    state = EngineState(cfg=cfg, game=game, rng=rng, banks=banks, logs=logs)
    m_lo, m_hi = _resolve_range(cfg, n)
    for _ in range(cfg.K_in):
        if game.init_sampler is not None:
            draw = np.asarray(game.init_sampler(rng, m_lo, m_hi), dtype=float)
        else:
            draw = rng.uniform(m_lo, m_hi)
        xq = project(game.omega, draw)
        if not contains(game.omega, xq):
            raise RuntimeError("projected draw left the feasible set")
        x, flags = _react_all(state, xq)
        d_theta = _refit_all(state, xq, x)
        _record(state, "init", xq, x, d_theta, math.nan, math.nan, flags)
    return state


def step(state: EngineState) -> EngineState:
    """One active iteration: refit happened on arrival, so query then react.

    The query is the minimum-norm fixed-point candidate of the current
    models; its feasibility is a hard assertion. The fresh (query, reaction)
    pair updates every filter before the next query is formed.
    """
    game = state.game
    surrogates = [b.surrogate() for b in state.banks]
    problem = build_query_problem(surrogates, game.omega)
    result = min_norm_query(problem)
    xq = result.x_hat.values
    if not contains(game.omega, xq):
        raise RuntimeError("query left the feasible set")
    x, flags = _react_all(state, xq)
    d_theta = _refit_all(state, xq, x)
    if not result.unique_certificate:
        flags = flags + ["degenerate_hessian"]
    state.last_lambda = result.lambda_min_H
    state.last_kkt = result.kkt_residual
    state.last_unique = result.unique_certificate
    _record(state, "active", xq, x, d_theta, result.lambda_min_H, result.kkt_residual, flags)
    return state


def _finish(state: EngineState) -> tuple[RunTrace, Verdict]:
    trace = RunTrace(
        columns=trace_columns(state.game.partition),
        rows=state.rows,
        partition_sizes=state.game.partition.sizes,
    )
    converged = state.converged_at is not None
    final_residual = float(np.linalg.norm(state.last_query - state.last_reaction))
    profile = CollectiveProfile(partition=state.game.partition, values=state.last_query)
    stat = stationarity_residual(profile, state.game.oracles)
    if converged and stat > 10.0 * state.cfg.tol_conv:
        raise SolverAbort(
            "converged verdict contradicts the stationarity check", trace
        )
    verdict = Verdict(
        converged=converged,
        iterations_used=state.k,
        final_residual=final_residual,
        final_stationarity_residual=float(stat),
        lambda_min_at_termination=float(state.last_lambda),
        unique_certificate=bool(state.last_unique),
    )
    return trace, verdict


def run(cfg: RunConfig, game: GameBundle | None = None) -> tuple[RunTrace, Verdict]:
    """Execute one full run; returns the trace and the verdict.

    Solver failures raise SolverAbort with the partial trace attached.
    """
    if game is None:
        game = make_game(cfg.game)
    rng = np.random.default_rng(np.random.SeedSequence(list(cfg.seed)))
    state = None
    try:
        state = init_phase(cfg, game, rng)
        while state.k < cfg.K:
            step(state)
            if cfg.early_stop and state.converged_at is not None:
                break
        return _finish(state)
    except SolverAbort:
        raise
    except (QpError, np.linalg.LinAlgError, RuntimeError) as exc:
        partial = None
        if state is not None:
            partial = RunTrace(
                columns=trace_columns(game.partition),
                rows=state.rows,
                partition_sizes=game.partition.sizes,
            )
        raise SolverAbort(str(exc), partial) from exc


def _replicate_seed(master: int, cell: int, rep: int) -> tuple:
    return (int(master), int(cell), int(rep))


def _sweep_job(cfg: RunConfig) -> tuple[list, bool]:
    """One replication for sweep(); returns (residual curve, failed)."""
    try:
        trace, _ = run(cfg)
        return [float(v) for v in trace.column("residual")], False
    except SolverAbort:
        return [], True


@dataclass
class SweepResult:
    """Mean residual curves over a (beta, K_in) grid."""

    grid: list  # [(beta, K_in), ...]
    K: int
    reps: int
    mean_residuals: dict  # cell index -> np.ndarray of length K
    failures: dict  # cell index -> failed replication count

    def rows(self):
        for ci, (beta, k_in) in enumerate(self.grid):
            curve = self.mean_residuals[ci]
            for k in range(self.K):
                yield beta, k_in, k, float(curve[k])

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["beta", "K_in", "k", "mean_residual"])
        for beta, k_in, k, mr in self.rows():
            w.writerow([repr(float(beta)), str(int(k_in)), str(int(k)), repr(mr)])


def sweep(cfg: RunConfig, grid, reps: int, parallel: int = 1) -> SweepResult:
    """Replicated runs over a (beta, K_in) grid with derived seeds.

    Early stopping is disabled so every replication yields a full-length
    residual curve; failed replications are counted and excluded from the
    cell mean.
    """
    grid = [(float(b), int(ki)) for b, ki in grid]
    if not grid:
        raise ValueError("empty grid")
    if reps < 1:
        raise ValueError("reps must be at least 1")
    master = cfg.seed[0]
    jobs = []
    for ci, (beta, k_in) in enumerate(grid):
        for rep in range(reps):
            jobs.append(
                (
                    ci,
                    rep,
                    replace(
                        cfg,
                        beta=beta,
                        K_in=k_in,
                        seed=_replicate_seed(master, ci, rep),
                        early_stop=False,
                    ),
                )
            )
    results = _run_jobs([j[2] for j in jobs], _sweep_job, parallel)
    by_cell: dict = {ci: [] for ci in range(len(grid))}
    failures = {ci: 0 for ci in range(len(grid))}
    for (ci, rep, _), (curve, failed) in sorted(
        zip(jobs, results), key=lambda t: (t[0][0], t[0][1])
    ):
        if failed:
            failures[ci] += 1
        else:
            by_cell[ci].append(curve)
    means = {}
    for ci in range(len(grid)):
        if by_cell[ci]:
            means[ci] = np.mean(np.array(by_cell[ci]), axis=0)
        else:
            means[ci] = np.full(cfg.K, math.nan)
    return SweepResult(
        grid=grid, K=cfg.K, reps=reps, mean_residuals=means, failures=failures
    )


def _run_jobs(cfgs, fn, parallel: int):
    if parallel <= 1:
        return [fn(c) for c in cfgs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=parallel) as ex:
        return list(ex.map(fn, cfgs))


@dataclass
class StatsResult:
    """Aggregate over seeded replications of one configuration."""

    reps: int
    percent_converged: float
    failures: int
    lambda_min_min: float
    profile_spread: float
    same_profile: bool
    verdicts: list

    def to_dict(self) -> dict:
        return {
            "reps": int(self.reps),
            "percent_converged": float(self.percent_converged),
            "failures": int(self.failures),
            "lambda_min_min": float(self.lambda_min_min),
            "profile_spread": float(self.profile_spread),
            "same_profile": bool(self.same_profile),
            "verdicts": [v.to_dict() for v in self.verdicts],
        }


def _stats_one(cfg: RunConfig):
    try:
        trace, verdict = run(cfg)
    except SolverAbort:
        return None
    n = sum(trace.partition_sizes)
    final = [trace.rows[-1][trace.columns.index(f"x_hat_{j + 1}")] for j in range(n)]
    return verdict, [float(v) for v in final]


def stats(cfg: RunConfig, reps: int, parallel: int = 1) -> StatsResult:
    """Replicated runs with derived seeds, aggregated.

    Every convergent run must carry a strictly positive smallest-eigenvalue
    certificate (hard assertion); the spread across convergent final
    profiles is reported along with whether they all agree within 1e-4.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    master = cfg.seed[0]
    cfgs = [
        replace(cfg, seed=_replicate_seed(master, 0, rep)) for rep in range(reps)
    ]
    outcomes = _run_jobs(cfgs, _stats_one, parallel)
    verdicts = []
    profiles = []
    failures = 0
    for out in outcomes:
        if out is None:
            failures += 1
            continue
        verdict, final = out
        verdicts.append(verdict)
        if verdict.converged:
            if verdict.lambda_min_at_termination <= 0.0:
                raise RuntimeError(
                    "convergent run without a positive eigenvalue certificate"
                )
            profiles.append(np.array(final))
    n_conv = sum(1 for v in verdicts if v.converged)
    percent = 100.0 * n_conv / reps
    if profiles:
        stack = np.vstack(profiles)
        spread = float(np.max(stack.max(axis=0) - stack.min(axis=0)))
        lam_min = min(
            v.lambda_min_at_termination for v in verdicts if v.converged
        )
    else:
        spread = math.nan
        lam_min = math.nan
    return StatsResult(
        reps=reps,
        percent_converged=percent,
        failures=failures,
        lambda_min_min=float(lam_min),
        profile_spread=spread,
        same_profile=bool(profiles) and spread <= 1e-4,
        verdicts=verdicts,
    )
