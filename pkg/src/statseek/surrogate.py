"""Affine response models and their recursive least-squares learning state.

Each agent's observed reactions are fitted by an affine map of the opponents'
profile. Learning runs as a bank of per-output-component Kalman filters over
the regressor [x_others; 1]; a batch ridge refit provides the equivalent
one-shot solution and serves as the reference oracle for the recursion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AffineSurrogate:
    """Affine model  x_i ~ nu @ x_others + c."""

    nu: np.ndarray  # (n_out, n_in)
    c: np.ndarray  # (n_out,)

    def __post_init__(self):
        nu = np.atleast_2d(np.asarray(self.nu, dtype=float))
        c = np.asarray(self.c, dtype=float).ravel()
        if nu.shape[0] != c.size:
            raise ValueError("nu rows and c length disagree")
        if not (np.all(np.isfinite(nu)) and np.all(np.isfinite(c))):
            raise ValueError("model parameters must be finite")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "c", c)

    @property
    def n_out(self) -> int:
        return self.nu.shape[0]

    @property
    def n_in(self) -> int:
        return self.nu.shape[1]

    @property
    def theta(self) -> np.ndarray:
        """Row-wise vectorization of [nu | c], one block per output."""
        return np.hstack([self.nu, self.c[:, None]]).ravel()


def predict(s: AffineSurrogate, x_others: np.ndarray) -> np.ndarray:
    """Evaluate the affine model at an opponents' profile."""
    x_others = np.asarray(x_others, dtype=float).ravel()
    if x_others.size != s.n_in:
        raise ValueError(f"expected {s.n_in} components, got {x_others.size}")
    return s.nu @ x_others + s.c


class SampleLog:
    """Append-only record of (opponents' profile, observed reaction) pairs."""

    def __init__(self, n_in: int, n_out: int):
        self.n_in = int(n_in)
        self.n_out = int(n_out)
        self._x: list[np.ndarray] = []
        self._r: list[np.ndarray] = []
        self._k: list[int] = []

    def append(self, x_others, reaction, k: int = -1):
        x = np.asarray(x_others, dtype=float).ravel()
        r = np.asarray(reaction, dtype=float).ravel()
        if x.size != self.n_in or r.size != self.n_out:
            raise ValueError("sample dimensions do not match the log")
        self._x.append(x.copy())
        self._r.append(r.copy())
        self._k.append(int(k))

    def __len__(self) -> int:
        return len(self._x)

    def pairs(self):
        return list(zip(self._x, self._r))

    @property
    def iterations(self) -> list[int]:
        return list(self._k)

    def regressors(self) -> tuple[np.ndarray, np.ndarray]:
        """Matrices (Phi, R): rows [x_others; 1] and matching reactions."""
        if not self._x:
            raise ValueError("empty sample log")
        X = np.vstack(self._x)
        Phi = np.hstack([X, np.ones((X.shape[0], 1))])
        return Phi, np.vstack(self._r)


class KalmanBank:
    """Per-output-component recursive least-squares state for one agent.

    theta rows are the per-component parameter vectors (length n_in + 1,
    offset last); P stacks one covariance per component, all started at
    alpha * I. beta is added to every covariance after each update and acts
    as the learning-rate / process-noise knob.
    """

    def __init__(self, n_out: int, n_in: int, alpha: float, beta: float):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        if beta < 0:
            raise ValueError("beta must be nonnegative")
        self.n_out = int(n_out)
        self.n_in = int(n_in)
        self.alpha = float(alpha)
        self.beta = float(beta)
        d = self.n_in + 1
        self.theta = np.zeros((self.n_out, d))
        self.P = np.stack([alpha * np.eye(d) for _ in range(self.n_out)])

    @classmethod
    def fresh(cls, n_out: int, n_in: int, alpha: float, beta: float) -> "KalmanBank":
        return cls(n_out, n_in, alpha, beta)

    def surrogate(self) -> AffineSurrogate:
        return AffineSurrogate(nu=self.theta[:, :-1].copy(), c=self.theta[:, -1].copy())

    def theta_vector(self) -> np.ndarray:
        return self.theta.ravel().copy()


def kf_step(bank: KalmanBank, x_others, reaction) -> KalmanBank:
    """One recursive update of every component filter on a fresh sample.

    Per component: a = P phi; P_half = P - a a' / (1 + phi'a);
    theta += P_half phi (r - phi'theta); P = P_half + beta I, symmetrized.
    Zero innovation leaves theta exactly unchanged.
    """
    x = np.asarray(x_others, dtype=float).ravel()
    r = np.asarray(reaction, dtype=float).ravel()
    if x.size != bank.n_in or r.size != bank.n_out:
        raise ValueError("sample dimensions do not match the bank")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(r))):
        raise RuntimeError("numerical breakdown")
    phi = np.append(x, 1.0)
    beta_eye = bank.beta * np.eye(phi.size)
    for j in range(bank.n_out):
        P = bank.P[j]
        a = P @ phi
        P_half = P - np.outer(a, a) / (1.0 + float(phi @ a))
        theta = bank.theta[j] + P_half @ phi * (r[j] - float(phi @ bank.theta[j]))
        P_new = P_half + beta_eye
        P_new = 0.5 * (P_new + P_new.T)  # suppress symmetry drift
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(P_new))):
            raise RuntimeError("numerical breakdown")
        try:
            np.linalg.cholesky(P_new)  # positive definiteness invariant
        except np.linalg.LinAlgError:
            raise RuntimeError("numerical breakdown") from None
        bank.theta[j] = theta
        bank.P[j] = P_new
    return bank


def batch_refit(log: SampleLog, alpha: float) -> AffineSurrogate:
    """Ridge least squares over the whole log.

    Per output component, minimizes sum of squared residuals plus
    (1/alpha)||theta||^2; the regularizer makes the minimizer unique and,
    for large alpha, selects the minimum-norm interpolant.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if len(log) == 0:
        raise ValueError("empty sample log")
    Phi, R = log.regressors()
    d = Phi.shape[1]
    # augmented rows realize the ridge term inside one least-squares solve
    aug = np.vstack([Phi, np.eye(d) / np.sqrt(alpha)])
    rhs = np.vstack([R, np.zeros((d, R.shape[1]))])
    theta, *_ = np.linalg.lstsq(aug, rhs, rcond=None)
    normal = Phi.T @ Phi + np.eye(d) / alpha
    target = Phi.T @ R
    gap = normal @ theta - target
    for j in range(theta.shape[1]):
        tol = 1e-10 * (1.0 + float(np.linalg.norm(target[:, j])))
        if float(np.linalg.norm(gap[:, j])) > tol:
            # one refinement step through the normal equations
            delta, *_ = np.linalg.lstsq(normal, gap[:, j], rcond=None)
            theta[:, j] -= delta
    return AffineSurrogate(nu=theta[:-1, :].T, c=theta[-1, :])


def residual_mse(s: AffineSurrogate, log: SampleLog) -> float:
    """Mean squared prediction error of the model over the log."""
    if len(log) == 0:
        raise ValueError("empty sample log")
    Phi, R = log.regressors()
    pred = Phi[:, :-1] @ s.nu.T + s.c
    return float(np.mean(np.sum((R - pred) ** 2, axis=1)))
