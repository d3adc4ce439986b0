"""Query synthesis for the external observer.

Stacks the fitted affine response models into one least-squares program: find
a profile y that every model maps to itself. The program is a convex QP over
the feasible polytope; when its Hessian is singular the minimum-norm candidate
is selected through a small Tikhonov term. A dependency-free QP solver (primal
active set on boxes, operator splitting plus polish on general rows) and the
smallest-eigenvalue certificate live here too.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .profiles import (
    TOL_FEAS,
    TOL_KKT,
    CollectiveProfile,
    Partition,
    Polytope,
    contains,
)

EIG_TOL = 1e-9
TIKHONOV_EPS = 1e-8


class QpError(RuntimeError):
    """Base class for QP solver failures."""


class QpInfeasible(QpError):
    """The feasible set is empty (certified)."""


class QpMaxIterations(QpError):
    """Iteration budget exhausted; carries the best iterate found."""

    def __init__(self, message: str, best: np.ndarray):
        super().__init__(message)
        self.best = best


def lambda_min(H: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    H = np.asarray(H, dtype=float)
    Hs = 0.5 * (H + H.T)  # guard against asymmetric roundoff
    return float(np.linalg.eigvalsh(Hs)[0])


@dataclass(frozen=True)
class QueryProblem:
    """Quadratic program  min 1/2 y'Hy + g'y + const_term  over omega.

    H is the exact Hessian of the stacked sum-of-squares objective
    sum_i ||y_i - nu_i y_-i - c_i||^2 (factor 2 included), so eigenvalue
    certificates are comparable across runs without rescaling.
    """

    H: np.ndarray
    g: np.ndarray
    const_term: float
    omega: Polytope
    partition: Partition

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        g = np.asarray(self.g, dtype=float).ravel()
        if H.shape[0] != H.shape[1]:
            raise ValueError("Hessian must be square")
        if g.size != H.shape[0]:
            raise ValueError("linear term length does not match the Hessian")
        if self.omega.dim != H.shape[0]:
            raise ValueError("feasible set dimension does not match the Hessian")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "const_term", float(self.const_term))

    def objective(self, y: np.ndarray) -> float:
        y = np.asarray(y, dtype=float).ravel()
        return float(0.5 * y @ self.H @ y + self.g @ y + self.const_term)


@dataclass(frozen=True)
class QueryResult:
    """Synthesized query point plus its optimality certificates."""

    x_hat: CollectiveProfile
    objective_value: float
    lambda_min_H: float
    unique_certificate: bool
    kkt_residual: float


def _assemble_linear_system(surrogates) -> tuple[np.ndarray, np.ndarray, Partition]:
    """Stack the per-agent affine models into G y = c.

    Row block i reads  y_i - nu_i y_-i = c_i; a profile solving the system is
    reproduced exactly by every model.
    """
    partition = Partition(tuple(int(s.nu.shape[0]) for s in surrogates))
    n = partition.total
    G = np.zeros((n, n))
    c = np.zeros(n)
    for i, s in enumerate(surrogates):
        sl = partition.block_slice(i)
        others = partition.others_index(i)
        if s.nu.shape[1] != n - partition.sizes[i]:
            raise ValueError(
                f"surrogate {i} expects {s.nu.shape[1]} opponent components, "
                f"partition provides {n - partition.sizes[i]}"
            )
        G[sl, sl] = np.eye(partition.sizes[i])
        G[np.ix_(range(sl.start, sl.stop), others)] = -s.nu
        c[sl] = s.c
    return G, c, partition


def build_query_problem(surrogates, omega: Polytope) -> QueryProblem:
    """Quadratic form of  sum_i ||y_i - predict_i(y_-i)||^2  over omega."""
    G, c, partition = _assemble_linear_system(surrogates)
    if omega.dim != partition.total:
        raise ValueError(
            f"polytope dimension {omega.dim} does not match partition total "
            f"{partition.total}"
        )
    H = 2.0 * (G.T @ G)
    H = 0.5 * (H + H.T)
    g = -2.0 * (G.T @ c)
    return QueryProblem(
        H=H, g=g, const_term=float(c @ c), omega=omega, partition=partition
    )


def solve_linear_fixed_point(surrogates):
    """Minimum-norm solution of the stacked linear system G y = c.

    Returns None when the system is inconsistent (least-squares residual
    above 1e-8), i.e. no profile satisfies all models simultaneously.
    """
    G, c, _ = _assemble_linear_system(surrogates)
    y, *_ = np.linalg.lstsq(G, c, rcond=None)
    if np.linalg.norm(G @ y - c) > 1e-8:
        return None
    return y


def _box_kkt_residual(H, g, lower, upper, y) -> float:
    """Natural residual ||y - clip(y - grad)||_inf for a box-only QP."""
    grad = H @ y + g
    return float(np.max(np.abs(y - np.clip(y - grad, lower, upper))))


def _solve_box_active_set(H, g, lower, upper, max_iter):
    """Primal active-set method for  min 1/2 y'Hy + g'y  on a box.

    Starts from the clipped unconstrained minimizer; iterates exchange bound
    constraints in and out of the working set with lowest-index tie-breaking,
    so the path (and the solution on degenerate problems) is deterministic.
    """
    n = g.size
    try:
        y = np.linalg.solve(H, -g)
    except np.linalg.LinAlgError:
        y = np.linalg.lstsq(H, -g, rcond=None)[0]
    y = np.clip(y, lower, upper)
    pinned = lower == upper  # zero-width bounds never leave the working set
    active = np.zeros(n, dtype=int)  # 0 free, -1 at lower, +1 at upper
    active[y == lower] = -1
    active[y == upper] = 1

    best = y.copy()
    for _ in range(max_iter):
        free = active == 0
        target = np.where(active == -1, lower, np.where(active == 1, upper, y))
        if free.any():
            rhs = -(g[free] + H[np.ix_(free, ~free)] @ target[~free])
            Hff = H[np.ix_(free, free)]
            try:
                target[free] = np.linalg.solve(Hff, rhs)
            except np.linalg.LinAlgError:
                target[free] = np.linalg.lstsq(Hff, rhs, rcond=None)[0]
        d = target - y
        step = 1.0
        blocker = -1
        side = 0
        for j in np.nonzero(free)[0]:
            if d[j] > 0.0 and np.isfinite(upper[j]):
                s = (upper[j] - y[j]) / d[j]
                bound_side = 1
            elif d[j] < 0.0 and np.isfinite(lower[j]):
                s = (lower[j] - y[j]) / d[j]
                bound_side = -1
            else:
                continue
            if s < step:  # strict: first minimal index wins
                step, blocker, side = s, j, bound_side
        y = y + step * d
        best = y
        if blocker >= 0:
            active[blocker] = side
            y[blocker] = upper[blocker] if side == 1 else lower[blocker]
            continue
        # full step reached the subproblem optimum; check bound multipliers
        grad = H @ y + g
        viol = np.zeros(n)
        at_lo = active == -1
        at_hi = active == 1
        viol[at_lo] = -grad[at_lo]  # lower bound wants grad >= 0
        viol[at_hi] = grad[at_hi]  # upper bound wants grad <= 0
        viol[pinned] = 0.0
        worst = int(np.argmax(viol))
        if viol[worst] <= 1e-11 * (1.0 + float(np.max(np.abs(grad)))):
            return y
        active[worst] = 0
    raise QpMaxIterations("max iterations", best)


def _polytope_rows(H, g, omega: Polytope):
    """Constraint matrix C = [I; A] with row intervals [L, U] for omega."""
    n = omega.dim
    C = np.eye(n)
    L = omega.lower.copy()
    U = omega.upper.copy()
    if omega.A is not None:
        C = np.vstack([C, omega.A])
        L = np.concatenate([L, np.full(omega.A.shape[0], -np.inf)])
        U = np.concatenate([U, omega.b])
    return C, L, U


def _general_kkt_residual(H, g, C, L, U, y, lam) -> float:
    """max of stationarity, primal violation, and complementarity errors."""
    stat = float(np.max(np.abs(H @ y + g + C.T @ lam)))
    rows = C @ y
    pviol = 0.0
    with np.errstate(invalid="ignore"):
        over = rows - U
        under = L - rows
    pviol = max(
        float(np.max(over[np.isfinite(over)], initial=0.0)),
        float(np.max(under[np.isfinite(under)], initial=0.0)),
    )
    comp = 0.0
    for i in range(rows.size):
        if lam[i] > 0.0:  # pushes against the upper bound
            gap = rows[i] - U[i] if np.isfinite(U[i]) else 1.0
            comp = max(comp, lam[i] * abs(gap))
        elif lam[i] < 0.0:  # pushes against the lower bound
            gap = rows[i] - L[i] if np.isfinite(L[i]) else 1.0
            comp = max(comp, -lam[i] * abs(gap))
    return max(stat, pviol, comp)


def _try_polish(H, g, C, L, U, lam, fallback, fallback_kkt, tol_feas):
    """Equality-KKT re-solve on the rows the duals mark active."""
    act_tol = 1e-10 * (1.0 + float(np.max(np.abs(lam), initial=0.0)))
    act_lo = lam < -act_tol
    act_hi = lam > act_tol
    act = act_lo | act_hi
    if not act.any():
        try:
            y = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            return fallback, lam, fallback_kkt
        lam_full = np.zeros(C.shape[0])
        kkt = _general_kkt_residual(H, g, C, L, U, y, lam_full)
        rows = C @ y
        feas = np.all(rows <= U + tol_feas) and np.all(rows >= L - tol_feas)
        if feas and kkt <= fallback_kkt:
            return y, lam_full, kkt
        return fallback, lam, fallback_kkt
    Ca = C[act]
    bnd = np.where(act_hi[act], U[act], L[act])
    n = g.size
    m = Ca.shape[0]
    kkt_mat = np.block([[H, Ca.T], [Ca, np.zeros((m, m))]])
    rhs = np.concatenate([-g, bnd])
    sol, *_ = np.linalg.lstsq(kkt_mat, rhs, rcond=None)
    y = sol[:n]
    lam_full = np.zeros(C.shape[0])
    lam_full[act] = sol[n:]
    kkt = _general_kkt_residual(H, g, C, L, U, y, lam_full)
    rows = C @ y
    feas = np.all(rows <= U + tol_feas) and np.all(rows >= L - tol_feas)
    if feas and kkt <= fallback_kkt:
        return y, lam_full, kkt
    return fallback, lam, fallback_kkt


def _solve_general_admm(H, g, omega, tol_kkt, tol_feas, max_iter):
    """Operator-splitting solve of the QP with general inequality rows.

    Splitting variable z tracks C y inside [L, U]; a single Cholesky
    factorization of H + rho C'C serves every iteration. Detected active
    rows are polished through an equality-KKT solve. A diverging dual
    difference certifies primal infeasibility.
    """
    rho = 1.0
    relax = 1.6
    C, L, U = _polytope_rows(H, g, omega)
    n = g.size
    M = H + rho * (C.T @ C)  # C contains I, so M is positive definite
    np.linalg.cholesky(0.5 * (M + M.T))  # fail fast on a broken Hessian
    Minv = np.linalg.inv(0.5 * (M + M.T))

    y = np.zeros(n)
    z = np.clip(C @ y, L, U)
    u = np.zeros(C.shape[0])
    u_prev = u.copy()
    for it in range(1, max_iter + 1):
        y = Minv @ (-g + rho * (C.T @ (z - u)))
        rows = C @ y
        rows_relaxed = relax * rows + (1.0 - relax) * z
        z_prev = z
        z = np.clip(rows_relaxed + u, L, U)
        u_prev = u
        u = u + rows_relaxed - z
        if it % 25 == 0 or it == max_iter:
            r_prim = float(np.max(np.abs(rows - z)))
            r_dual = rho * float(np.max(np.abs(C.T @ (z - z_prev))))
            scale = 1.0 + float(np.max(np.abs(rows))) + float(np.max(np.abs(z)))
            if r_prim <= 1e-10 * scale and r_dual <= 1e-10 * scale:
                break
            # primal infeasibility certificate from the dual difference
            dv = u - u_prev
            dv_norm = float(np.max(np.abs(dv)))
            if dv_norm > 1e-12:
                e = dv / dv_norm
                support = 0.0
                ok = float(np.max(np.abs(C.T @ e))) <= 1e-8
                for i in range(e.size):
                    if e[i] > 1e-10:
                        if not np.isfinite(U[i]):
                            ok = False
                            break
                        support += U[i] * e[i]
                    elif e[i] < -1e-10:
                        if not np.isfinite(L[i]):
                            ok = False
                            break
                        support += L[i] * e[i]
                if ok and support < -1e-8:
                    raise QpInfeasible("infeasible")
    lam = rho * u
    kkt = _general_kkt_residual(H, g, C, L, U, y, lam)
    y, lam, kkt = _try_polish(H, g, C, L, U, lam, y, kkt, tol_feas)
    if kkt > tol_kkt:
        raise QpMaxIterations("max iterations", y)
    return y, kkt


def _qp_solve_info(
    H,
    g,
    omega: Polytope,
    ridge: float = 0.0,
    tol_kkt: float = TOL_KKT,
    tol_feas: float = TOL_FEAS,
    max_iter: int = 20000,
):
    """qp_solve returning (solution, kkt_residual)."""
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float).ravel()
    if H.shape != (g.size, g.size) or omega.dim != g.size:
        raise ValueError("H, g, and omega dimensions do not agree")
    Hr = 0.5 * (H + H.T)
    if ridge > 0.0:
        Hr = Hr + ridge * np.eye(g.size)
    if omega.box_empty():
        raise QpInfeasible("infeasible")
    if omega.is_box:
        y = _solve_box_active_set(Hr, g, omega.lower, omega.upper, max_iter=50 + 10 * g.size)
        return y, _box_kkt_residual(Hr, g, omega.lower, omega.upper, y)
    return _solve_general_admm(Hr, g, omega, tol_kkt, tol_feas, max_iter)


def qp_solve(H, g, omega: Polytope, ridge: float = 0.0, **kwargs) -> np.ndarray:
    """Minimize 1/2 y'(H + ridge I)y + g'y over the polytope.

    Deterministic for fixed inputs. Raises QpInfeasible on a certified empty
    set and QpMaxIterations (best iterate attached) when the budget runs out.
    """
    y, _ = _qp_solve_info(H, g, omega, ridge=ridge, **kwargs)
    return y


def min_norm_query(
    q: QueryProblem,
    eig_tol: float = EIG_TOL,
    tikhonov_eps: float = TIKHONOV_EPS,
) -> QueryResult:
    """Next query: the best fixed-point candidate of the fitted models.

    With a positive-definite Hessian the program has a unique minimizer and
    is solved directly. Otherwise the minimizer set is a face; the small
    Tikhonov term tilts the program toward its minimum-norm member and the
    uniqueness certificate is withheld.
    """
    lam = lambda_min(q.H)
    unique = lam >= eig_tol
    ridge = 0.0 if unique else tikhonov_eps
    y, kkt = _qp_solve_info(q.H, q.g, q.omega, ridge=ridge)
    if not contains(q.omega, y):
        raise QpError("query solution left the feasible set")
    return QueryResult(
        x_hat=CollectiveProfile(partition=q.partition, values=y),
        objective_value=max(0.0, q.objective(y)),
        lambda_min_H=lam,
        unique_certificate=bool(unique),
        kkt_residual=float(kkt),
    )
