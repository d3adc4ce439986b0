"""Reaction oracles: the private side of every bundled experiment.

Each agent exposes a single-valued, deterministic map from the opponents'
stacked profile to its own best action. Concrete oracles: a ten-player
quadratic market game, a bandwidth-sharing game with one coupling row, two
tiny two-player games (one with a segment of stationary profiles, one with
none), a generic QP-based agent, and a feedback-gain synthesis agent backed
by a discrete Riccati solver.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .profiles import Partition, Polytope, box
from .query import QpInfeasible, qp_solve

GAIN_BOUND = 20.0


class AgentOracle(ABC):
    """Deterministic reaction map of one agent."""

    n_out: int

    @abstractmethod
    def react(self, x_others: np.ndarray) -> np.ndarray:
        """Best action given the opponents' stacked profile."""

    def react_flags(self, x_others: np.ndarray) -> tuple[np.ndarray, tuple[str, ...]]:
        """react plus distress flags; default oracles never raise flags."""
        return self.react(x_others), ()


# ---------------------------------------------------------------------------
# ten-player quadratic market game

def quadratic_game_react(idx: int, x_others) -> float:
    """Best response in the ten-player quadratic game (0-based agent index).

    Cost a_i x_i - x_i (600 - sum x) with a_i = 10 (1 + idx/2) on [7, 100];
    the unconstrained optimum of the strictly convex scalar cost is clipped
    into the box.
    """
    s = float(np.sum(np.asarray(x_others, dtype=float)))
    a = 10.0 * (1.0 + idx / 2.0)
    return float(np.clip((600.0 - a - s) / 2.0, 7.0, 100.0))


class QuadraticGameAgent(AgentOracle):
    n_out = 1

    def __init__(self, idx: int):
        self.idx = int(idx)

    def react(self, x_others):
        return np.array([quadratic_game_react(self.idx, x_others)])


class QuadraticPseudoGradient:
    """Stacked own-cost gradients of the quadratic game."""

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a = 10.0 * (1.0 + np.arange(x.size) / 2.0)
        return a - 600.0 + np.sum(x) + x


# ---------------------------------------------------------------------------
# bandwidth-sharing game: J_i = -x_i (1 - S) / S with S the profile total

def _share_cost(x: float, s: float) -> float:
    return -x * (1.0 - x - s) / (x + s)


def _share_grad(x: float, s: float) -> float:
    t = x + s
    return (t * t - s) / (t * t)


def internet_gnep_react(idx: int, x_others, lower=None, upper=None) -> float:
    """Best response of the bandwidth-sharing game (0-based agent index).

    Own bounds default to [0.3, 0.5] for agent 0 and [0.01, 100] otherwise;
    the shared budget caps the action at 1 - s. The scalar cost is minimized
    by golden-section search plus a Newton polish on its derivative.
    """
    x_others = np.asarray(x_others, dtype=float)
    if not np.all(np.isfinite(x_others)):
        raise ValueError("non-finite opponents' profile")
    s = float(np.sum(x_others))
    if lower is None:
        lower = 0.3 if idx == 0 else 0.01
    if upper is None:
        upper = 0.5 if idx == 0 else 100.0
    lo = float(lower)
    hi = min(float(upper), 1.0 - s)
    if hi < lo:
        return lo  # budget leaves no room; callers flag this case
    if hi == lo:
        return lo
    # golden-section on the strictly convex scalar cost
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = _share_cost(c, s)
    fd = _share_cost(d, s)
    while b - a > 1e-12:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = _share_cost(c, s)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = _share_cost(d, s)
    x = 0.5 * (a + b)
    if s > 0.0:
        for _ in range(50):  # Newton polish on the derivative
            g = _share_grad(x, s)
            if abs(g) <= 1e-10:
                break
            h = 2.0 * s / (x + s) ** 3
            x = min(max(x - g / h, lo), hi)
            if x == lo and _share_grad(lo, s) >= 0.0:
                break
            if x == hi and _share_grad(hi, s) <= 0.0:
                break
    return float(x)


class InternetAgent(AgentOracle):
    n_out = 1

    def __init__(self, idx: int):
        self.idx = int(idx)
        self.lower = 0.3 if self.idx == 0 else 0.01
        self.upper = 0.5 if self.idx == 0 else 100.0

    def react(self, x_others):
        return np.array(
            [internet_gnep_react(self.idx, x_others, self.lower, self.upper)]
        )

    def react_flags(self, x_others):
        s = float(np.sum(np.asarray(x_others, dtype=float)))
        flags = ()
        if 1.0 - s < self.lower:
            flags = ("empty_reaction_interval",)
        return self.react(x_others), flags


class InternetPseudoGradient:
    """Stacked own-cost gradients of the bandwidth-sharing game."""

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        S = float(np.sum(x))
        return 1.0 - (S - x) / S**2


# ---------------------------------------------------------------------------
# two-player corner games

def two_by_two_react(game: str, idx: int, x_others) -> float:
    """Best responses of the two bundled two-player games on [0,1].

    'no_equilibrium': agent 0 picks the better endpoint of a concave cost
    (tie at 0.5 broken to 0); agent 1 follows the sign of a linear cost.
    Joint best responses cycle, so no stationary profile exists.
    'infinite_eq': each agent tracks a private target under the shared
    budget x_0 + x_1 <= 1; the fixed points fill a whole segment.
    """
    other = float(np.asarray(x_others, dtype=float).ravel()[0])
    if game == "no_equilibrium":
        if idx == 0:
            # endpoint costs: 0 at x=0, 2*other - 1 at x=1
            return 1.0 if 2.0 * other - 1.0 < 0.0 else 0.0
        # linear coefficient 1 - 2*other
        if other > 0.5:
            return 1.0
        return 0.0
    if game == "infinite_eq":
        target = 1.0 if idx == 0 else 0.5
        return float(min(target, max(0.0, 1.0 - other)))
    raise ValueError(f"unknown two-player game {game!r}")


class TwoByTwoAgent(AgentOracle):
    n_out = 1

    def __init__(self, game: str, idx: int):
        if game not in ("no_equilibrium", "infinite_eq"):
            raise ValueError(f"unknown two-player game {game!r}")
        self.game = game
        self.idx = int(idx)

    def react(self, x_others):
        return np.array([two_by_two_react(self.game, self.idx, x_others)])


class InfiniteEqPseudoGradient:
    """Own-cost gradients of the target-tracking two-player game."""

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return 2.0 * (x - np.array([1.0, 0.5]))


# ---------------------------------------------------------------------------
# generic QP-based agent

class EmptyReactionSet(RuntimeError):
    """The agent's feasible slice at the given opponents' profile is empty."""


@dataclass(frozen=True)
class QpAgentSpec:
    """Quadratic cost 1/2 x_i' Q x_i + (q + R x_others)' x_i."""

    Q: np.ndarray
    q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        q = np.asarray(self.q, dtype=float).ravel()
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if Q.shape[0] != Q.shape[1] or Q.shape[0] != q.size or R.shape[0] != q.size:
            raise ValueError("inconsistent agent cost dimensions")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "R", R)


def qp_gnep_react(
    spec: QpAgentSpec,
    partition: Partition,
    omega: Polytope,
    idx: int,
    x_others,
) -> np.ndarray:
    """Unique minimizer of the agent's quadratic cost over its feasible slice.

    The slice fixes the opponents' blocks inside omega: box bounds restrict
    to the agent's block and each coupling row keeps its own-block columns
    with the opponents' contribution moved to the right-hand side.
    """
    x_others = np.asarray(x_others, dtype=float).ravel()
    sl = partition.block_slice(idx)
    others = partition.others_index(idx)
    if x_others.size != others.size:
        raise ValueError("opponents' profile does not match the partition")
    A_local, b_local = None, None
    if omega.A is not None:
        A_local = omega.A[:, sl.start : sl.stop]
        b_local = omega.b - omega.A[:, others] @ x_others
    slice_set = Polytope(
        lower=omega.lower[sl], upper=omega.upper[sl], A=A_local, b=b_local
    )
    g = spec.q + spec.R @ x_others
    try:
        return qp_solve(spec.Q, g, slice_set)
    except QpInfeasible as exc:
        raise EmptyReactionSet("empty reaction set") from exc


class QpGnepAgent(AgentOracle):
    def __init__(self, spec: QpAgentSpec, partition: Partition, omega: Polytope, idx: int):
        self.spec = spec
        self.partition = partition
        self.omega = omega
        self.idx = int(idx)
        self.n_out = partition.sizes[idx]

    def react(self, x_others):
        return qp_gnep_react(self.spec, self.partition, self.omega, self.idx, x_others)


class QpGnepPseudoGradient:
    """Stacked own-cost gradients  Q x_i + q + R x_others  of a QP game."""

    def __init__(self, specs: list[QpAgentSpec], partition: Partition):
        self.specs = list(specs)
        self.partition = partition

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for i, spec in enumerate(self.specs):
            sl = self.partition.block_slice(i)
            others = self.partition.others_index(i)
            out[sl] = spec.Q @ x[sl] + spec.q + spec.R @ x[others]
        return out


# ---------------------------------------------------------------------------
# discrete algebraic Riccati equation

class DareFailure(RuntimeError):
    """No stabilizing solution found; carries the last iterate."""

    def __init__(self, message: str, last_P: np.ndarray):
        super().__init__(message)
        self.last_P = last_P


def _riccati_residual(A, B, Qbar, R, P) -> float:
    BtP = B.T @ P
    gain = np.linalg.solve(R + BtP @ B, BtP @ A)
    return float(np.linalg.norm(A.T @ P @ A - A.T @ P @ B @ gain + Qbar - P))


def dare_solve(A, B, Qbar, R, max_iter: int = 10000, tol: float = 1e-9) -> np.ndarray:
    """Stabilizing solution of  A'PA - A'PB(R + B'PB)^-1 B'PA + Qbar = P.

    Structure-preserving doubling first (quadratic convergence), plain
    fixed-point iteration as fallback. Raises DareFailure("no stabilizing
    solution") with the last iterate attached when neither meets the
    residual tolerance tol * (1 + ||P||_F).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Qbar = np.atleast_2d(np.asarray(Qbar, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = A.shape[0]
    eye = np.eye(n)
    last_P = Qbar.copy()

    def _accept(P):
        P = 0.5 * (P + P.T)
        res = _riccati_residual(A, B, Qbar, R, P)
        if res <= tol * (1.0 + float(np.linalg.norm(P))):
            if float(np.linalg.eigvalsh(P)[0]) >= -1e-8 * (1.0 + float(np.linalg.norm(P))):
                return P
        return None

    # doubling: Ak -> Ak (I + Gk Hk)^-1 Ak, Hk accumulates the solution
    try:
        Ak = A.copy()
        G = B @ np.linalg.solve(R, B.T)
        Hm = Qbar.copy()
        for _ in range(100):
            W1 = eye + G @ Hm
            W2 = eye + Hm @ G
            A_next = Ak @ np.linalg.solve(W1, Ak)
            G_next = G + Ak @ G @ np.linalg.solve(W2, Ak.T)
            H_next = Hm + Ak.T @ np.linalg.solve(W2, Hm) @ Ak
            G_next = 0.5 * (G_next + G_next.T)
            H_next = 0.5 * (H_next + H_next.T)
            if not np.all(np.isfinite(H_next)) or float(np.linalg.norm(H_next)) > 1e14:
                break
            gap = float(np.linalg.norm(H_next - Hm))
            Ak, G, Hm = A_next, G_next, H_next
            last_P = Hm
            if gap <= 1e-14 * (1.0 + float(np.linalg.norm(Hm))):
                break
        accepted = _accept(Hm)
        if accepted is not None:
            return accepted
    except np.linalg.LinAlgError:
        pass

    # fixed-point fallback from P = Qbar
    P = Qbar.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        try:
            gain = np.linalg.solve(R + BtP @ B, BtP @ A)
        except np.linalg.LinAlgError:
            raise DareFailure("no stabilizing solution", last_P) from None
        P_next = A.T @ P @ A - A.T @ P @ B @ gain + Qbar
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)) or float(np.linalg.norm(P_next)) > 1e14:
            raise DareFailure("no stabilizing solution", P)
        last_P = P_next
        if float(np.linalg.norm(P_next - P)) <= 1e-13 * (1.0 + float(np.linalg.norm(P_next))):
            P = P_next
            break
        P = P_next
    accepted = _accept(P)
    if accepted is not None:
        return accepted
    raise DareFailure("no stabilizing solution", last_P)


# ---------------------------------------------------------------------------
# feedback-gain synthesis game

@dataclass(frozen=True)
class LqrInstance:
    """Shared linear dynamics plus per-agent output costs.

    Each agent steers the common state z+ = A z + sum_j B_j u_j with its own
    scalar input u_i = kappa_i z; its decision is the gain row kappa_i. The
    agent penalizes its own output slice C_i z under weight Q_i and input
    weight r_i. Gains live in the box [-GAIN_BOUND, GAIN_BOUND] per entry.
    """

    A: np.ndarray
    B: tuple  # per-agent (n_z, 1) input columns
    C: np.ndarray  # global output matrix, rows shared by the agents
    C_parts: tuple  # per-agent row subsets of C
    Q: tuple  # per-agent output weights, PSD
    r: tuple  # per-agent input weights, positive scalars
    validate: bool = field(default=True, compare=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n_z = A.shape[0]
        B = tuple(np.asarray(b, dtype=float).reshape(n_z, 1) for b in self.B)
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        C_parts = tuple(np.atleast_2d(np.asarray(c, dtype=float)) for c in self.C_parts)
        Q = tuple(np.atleast_2d(np.asarray(q, dtype=float)) for q in self.Q)
        r = tuple(float(v) for v in self.r)
        if not (len(B) == len(C_parts) == len(Q) == len(r)):
            raise ValueError("per-agent field lengths disagree")
        if any(v <= 0 for v in r):
            raise ValueError("input weights must be positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "C_parts", C_parts)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "r", r)
        if self.validate:
            for i in range(len(B)):
                if not _controllable(A, B[i]):
                    raise ValueError(f"pair (A, B_{i}) is not controllable")
                if not _observable(A, C_parts[i]):
                    raise ValueError(f"pair (A, C_{i}) is not observable")

    @property
    def n_z(self) -> int:
        return self.A.shape[0]

    @property
    def n_agents(self) -> int:
        return len(self.B)

    def qbar(self, i: int) -> np.ndarray:
        Ci = self.C_parts[i]
        return Ci.T @ self.Q[i] @ Ci

    def gain_box(self) -> Polytope:
        n = self.n_agents * self.n_z
        return box(np.full(n, -GAIN_BOUND), np.full(n, GAIN_BOUND))

    def partition(self) -> Partition:
        return Partition(tuple([self.n_z] * self.n_agents))


def _controllable(A, B) -> bool:
    n = A.shape[0]
    blocks = [np.linalg.matrix_power(A, k) @ B for k in range(n)]
    return int(np.linalg.matrix_rank(np.hstack(blocks))) == n


def _observable(A, C) -> bool:
    n = A.shape[0]
    blocks = [C @ np.linalg.matrix_power(A, k) for k in range(n)]
    return int(np.linalg.matrix_rank(np.vstack(blocks))) == n


def lqr_react(inst: LqrInstance, idx: int, kappa_others) -> tuple[np.ndarray, tuple[str, ...]]:
    """Gain row minimizing agent idx's cost against the opponents' gains.

    The opponents' feedback is folded into the drift, the Riccati equation
    is solved for the resulting single-input problem, and the gain is
    clipped into the shared box. Sign convention: inputs enter the dynamics
    as +B_i kappa_i z, so the returned row is the negated textbook gain.
    Returns (gain, flags); a Riccati failure falls back to the last iterate
    and is flagged rather than raised.
    """
    kappa_others = np.asarray(kappa_others, dtype=float).ravel()
    n_z = inst.n_z
    if kappa_others.size != (inst.n_agents - 1) * n_z:
        raise ValueError("opponents' gain stack has the wrong length")
    if not np.all(np.isfinite(kappa_others)):
        raise ValueError("non-finite opponents' gains")
    A_i = inst.A.copy()
    j_others = [j for j in range(inst.n_agents) if j != idx]
    for pos, j in enumerate(j_others):
        row = kappa_others[pos * n_z : (pos + 1) * n_z]
        A_i = A_i + inst.B[j] @ row.reshape(1, -1)
    Bi = inst.B[idx]
    Ri = np.array([[inst.r[idx]]])
    flags: tuple[str, ...] = ()
    try:
        P = dare_solve(A_i, Bi, inst.qbar(idx), Ri)
    except DareFailure as exc:
        P = 0.5 * (exc.last_P + exc.last_P.T)
        flags = ("dare_failure",)
    BtP = Bi.T @ P
    gain = np.linalg.solve(Ri + BtP @ Bi, BtP @ A_i).ravel()
    kappa = -gain
    clipped = np.clip(kappa, -GAIN_BOUND, GAIN_BOUND)
    if np.any(clipped != kappa):
        flags = flags + ("gain_clipped",)
    return clipped, flags


class LqrAgent(AgentOracle):
    def __init__(self, inst: LqrInstance, idx: int):
        self.inst = inst
        self.idx = int(idx)
        self.n_out = inst.n_z

    def react(self, x_others):
        kappa, _ = lqr_react(self.inst, self.idx, x_others)
        return kappa

    def react_flags(self, x_others):
        return lqr_react(self.inst, self.idx, x_others)


def random_lqr_instance(rng: np.random.Generator, n_agents: int = 3) -> LqrInstance:
    """Rejection-sample a shared-dynamics instance.

    Dimensions and weights are drawn uniformly (state size in
    [n_agents, 3 n_agents], output rows in [n_agents, 2 n_agents], per-agent
    output slices of at least two rows); A and the input columns are
    standard normal, the output matrix uniform on [0,1). Accepted instances
    have at least one unstable drift eigenvalue and satisfy the
    controllability/observability rank tests.
    """
    N = int(n_agents)
    for _ in range(1000):
        n_z = int(rng.integers(N, 3 * N + 1))
        n_y = int(rng.integers(N, 2 * N + 1))
        A = rng.normal(size=(n_z, n_z))
        B = [rng.normal(size=(n_z, 1)) for _ in range(N)]
        C = rng.uniform(size=(n_y, n_z))
        n_yi = [int(rng.integers(2, n_y + 1)) for _ in range(N)]
        rows = [np.sort(rng.choice(n_y, size=m, replace=False)) for m in n_yi]
        C_parts = [C[r] for r in rows]
        W = [rng.uniform(size=(m, m)) for m in n_yi]
        Q = [w @ w.T for w in W]
        r = [float(rng.uniform(1, 10)) for _ in range(N)]
        if float(np.max(np.abs(np.linalg.eigvals(A)))) <= 1.0:
            continue
        if not all(_controllable(A, B[i]) for i in range(N)):
            continue
        if not all(_observable(A, C_parts[i]) for i in range(N)):
            continue
        return LqrInstance(
            A=A, B=tuple(B), C=C, C_parts=tuple(C_parts), Q=tuple(Q), r=tuple(r)
        )
    raise RuntimeError("generation failed")


class CentralizedGainSampler:
    """Initialization draws for the gain game.

    Each draw perturbs the drift entrywise and presents the agents with the
    rows of the single-designer gain (unit output and input weights on the
    global output matrix). Falls back to a uniform draw over the engine's
    range estimate when the perturbed Riccati solve fails.
    """

    def __init__(self, inst: LqrInstance, perturbation: float = 0.05):
        self.inst = inst
        self.perturbation = float(perturbation)

    def __call__(self, rng: np.random.Generator, m_lower, m_upper) -> np.ndarray:
        inst = self.inst
        dA = rng.uniform(-self.perturbation, self.perturbation, size=inst.A.shape)
        A = inst.A + dA
        B_all = np.hstack(inst.B)
        N = inst.n_agents
        try:
            P = dare_solve(A, B_all, inst.C.T @ inst.C, np.eye(N))
        except DareFailure:
            return rng.uniform(m_lower, m_upper)
        K = np.linalg.solve(np.eye(N) + B_all.T @ P @ B_all, B_all.T @ P @ A)
        return np.clip(-K.ravel(), -GAIN_BOUND, GAIN_BOUND)


# ---------------------------------------------------------------------------
# game factory

@dataclass(frozen=True)
class GameBundle:
    """Everything a run needs to know about one game."""

    name: str
    partition: Partition
    omega: Polytope
    oracles: tuple
    pseudo_gradient: object = None  # callable profile -> stacked gradients
    lipschitz: float | None = None
    init_sampler: object = None  # callable (rng, m_lower, m_upper) -> profile


def _quadratic10_bundle() -> GameBundle:
    n = 10
    return GameBundle(
        name="quadratic10",
        partition=Partition((1,) * n),
        omega=box(np.full(n, 7.0), np.full(n, 100.0)),
        oracles=tuple(QuadraticGameAgent(i) for i in range(n)),
        pseudo_gradient=QuadraticPseudoGradient(),
        lipschitz=float(n + 1),  # largest eigenvalue of I + ones
    )


def _internet_bundle(n_agents: int) -> GameBundle:
    n = int(n_agents)
    if n < 2:
        raise ValueError("the bandwidth-sharing game needs at least two agents")
    lower = np.full(n, 0.01)
    upper = np.full(n, 100.0)
    lower[0], upper[0] = 0.3, 0.5
    omega = Polytope(lower=lower, upper=upper, A=np.ones((1, n)), b=np.array([1.0]))
    return GameBundle(
        name="internet",
        partition=Partition((1,) * n),
        omega=omega,
        oracles=tuple(InternetAgent(i) for i in range(n)),
        pseudo_gradient=InternetPseudoGradient(),
    )


def _infinite_eq_bundle() -> GameBundle:
    omega = Polytope(
        lower=np.zeros(2), upper=np.ones(2), A=np.ones((1, 2)), b=np.array([1.0])
    )
    return GameBundle(
        name="infinite_eq",
        partition=Partition((1, 1)),
        omega=omega,
        oracles=tuple(TwoByTwoAgent("infinite_eq", i) for i in range(2)),
        pseudo_gradient=InfiniteEqPseudoGradient(),
        lipschitz=2.0,
    )


def _no_eq_bundle() -> GameBundle:
    return GameBundle(
        name="no_eq",
        partition=Partition((1, 1)),
        omega=box(np.zeros(2), np.ones(2)),
        oracles=tuple(TwoByTwoAgent("no_equilibrium", i) for i in range(2)),
    )


def _qp_gnep_bundle(spec: dict) -> GameBundle:
    sizes = tuple(int(s) for s in spec["sizes"])
    partition = Partition(sizes)
    omega = Polytope.from_dict(spec["omega"])
    if omega.dim != partition.total:
        raise ValueError("omega dimension does not match the partition")
    specs = []
    for i, a in enumerate(spec["agents"]):
        n_i = sizes[i]
        n_oth = partition.total - n_i
        s = QpAgentSpec(Q=a["Q"], q=a["q"], R=a["R"])
        if s.Q.shape[0] != n_i or s.R.shape[1] != n_oth:
            raise ValueError(f"agent {i} cost dimensions do not match the partition")
        specs.append(s)
    if len(specs) != partition.n_agents:
        raise ValueError("agent list length does not match the partition")
    oracles = tuple(
        QpGnepAgent(specs[i], partition, omega, i) for i in range(len(specs))
    )
    return GameBundle(
        name="qp_gnep",
        partition=partition,
        omega=omega,
        oracles=oracles,
        pseudo_gradient=QpGnepPseudoGradient(specs, partition),
    )


def _lqr_bundle(spec: dict) -> GameBundle:
    n_agents = int(spec.get("n_agents", 3))
    seed = int(spec["instance_seed"])
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    inst = random_lqr_instance(rng, n_agents)
    pert = float(spec.get("init_perturbation", 0.05))
    return GameBundle(
        name="lqr_random",
        partition=inst.partition(),
        omega=inst.gain_box(),
        oracles=tuple(LqrAgent(inst, i) for i in range(n_agents)),
        init_sampler=CentralizedGainSampler(inst, pert),
    )


def make_game(spec: dict) -> GameBundle:
    """Build the GameBundle a JSON game spec describes."""
    name = spec.get("game")
    if name == "quadratic10":
        return _quadratic10_bundle()
    if name == "internet":
        return _internet_bundle(spec.get("n_agents", 10))
    if name == "infinite_eq":
        return _infinite_eq_bundle()
    if name == "no_eq":
        return _no_eq_bundle()
    if name == "qp_gnep":
        return _qp_gnep_bundle(spec)
    if name == "lqr_random":
        return _lqr_bundle(spec)
    raise ValueError(f"unknown game {name!r}")
