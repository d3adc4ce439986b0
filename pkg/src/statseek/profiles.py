"""Decision profiles, block partitions, and polyhedral feasible sets.

A collective decision vector stacks one block per agent. The feasible set is
a polytope given by box bounds plus optional linear inequality rows, and is
shared by the query synthesizer, the projection helper, and the agents.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TOL_FEAS = 1e-8
TOL_KKT = 1e-8


class EmptyFeasibleSet(ValueError):
    """Raised when a polytope has no feasible point."""


@dataclass(frozen=True)
class Partition:
    """Sizes of the per-agent blocks of a stacked decision vector."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        if len(self.sizes) == 0 or any(int(s) < 1 for s in self.sizes):
            raise ValueError("partition needs at least one block of positive size")
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))

    @property
    def n_agents(self) -> int:
        return len(self.sizes)

    @property
    def total(self) -> int:
        return sum(self.sizes)

    def offset(self, i: int) -> int:
        return sum(self.sizes[:i])

    def block_slice(self, i: int) -> slice:
        """Index slice of agent i's block inside the stacked vector."""
        off = self.offset(i)
        return slice(off, off + self.sizes[i])

    def others_index(self, i: int) -> np.ndarray:
        """Indices of all components outside agent i's block, ascending."""
        sl = self.block_slice(i)
        return np.concatenate(
            [np.arange(0, sl.start), np.arange(sl.stop, self.total)]
        ).astype(int)

    def compose(self, i: int, block: np.ndarray, others: np.ndarray) -> np.ndarray:
        """Rebuild the stacked vector from agent i's block and the rest."""
        block = np.asarray(block, dtype=float).ravel()
        others = np.asarray(others, dtype=float).ravel()
        if block.size != self.sizes[i] or others.size != self.total - self.sizes[i]:
            raise ValueError("block sizes do not match the partition")
        out = np.empty(self.total)
        sl = self.block_slice(i)
        out[sl] = block
        out[self.others_index(i)] = others
        return out


@dataclass(frozen=True)
class CollectiveProfile:
    """A stacked decision vector together with its block partition."""

    partition: Partition
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).ravel()
        if vals.size != self.partition.total:
            raise ValueError(
                f"profile has {vals.size} components, partition expects "
                f"{self.partition.total}"
            )
        object.__setattr__(self, "values", vals)

    def block(self, i: int) -> np.ndarray:
        return self.values[self.partition.block_slice(i)].copy()

    def others(self, i: int) -> np.ndarray:
        return self.values[self.partition.others_index(i)].copy()


def _as_bound(vec, n, default):
    if vec is None:
        return np.full(n, default, dtype=float)
    out = np.asarray(vec, dtype=float).ravel()
    if out.size != n:
        raise ValueError("bound length does not match dimension")
    return out


@dataclass(frozen=True)
class Polytope:
    """Feasible set {x : lower <= x <= upper, A x <= b}.

    A and b are optional; without them the set is a plain box. Unbounded
    box entries are +-inf.
    """

    lower: np.ndarray
    upper: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).ravel()
        upper = np.asarray(self.upper, dtype=float).ravel()
        if lower.size != upper.size:
            raise ValueError("lower and upper must have equal length")
        A = self.A
        b = self.b
        if (A is None) != (b is None):
            raise ValueError("A and b must be given together")
        if A is not None:
            A = np.atleast_2d(np.asarray(A, dtype=float))
            b = np.asarray(b, dtype=float).ravel()
            if A.shape[1] != lower.size or A.shape[0] != b.size:
                raise ValueError("inequality rows do not match dimension")
            if A.shape[0] == 0:
                A, b = None, None
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def is_box(self) -> bool:
        return self.A is None

    def box_empty(self) -> bool:
        return bool(np.any(self.lower > self.upper))

    def to_dict(self) -> dict:
        # JSON has no inf literal; unbounded entries serialize as null
        def enc(v):
            return [None if not np.isfinite(x) else float(x) for x in v]

        out = {"lower": enc(self.lower), "upper": enc(self.upper)}
        if self.A is not None:
            out["A"] = [[float(v) for v in row] for row in self.A]
            out["b"] = [float(v) for v in self.b]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Polytope":
        lower = [(-np.inf if v is None else float(v)) for v in d["lower"]]
        upper = [(np.inf if v is None else float(v)) for v in d["upper"]]
        return cls(
            lower=np.array(lower),
            upper=np.array(upper),
            A=d.get("A"),
            b=d.get("b"),
        )


def box(lower, upper) -> Polytope:
    """Convenience constructor for a pure box set."""
    return Polytope(lower=np.asarray(lower, float), upper=np.asarray(upper, float))


def contains(poly: Polytope, x: np.ndarray, tol: float = TOL_FEAS) -> bool:
    """Membership test with additive tolerance tol on every constraint."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != poly.dim:
        raise ValueError(f"point has dimension {x.size}, polytope {poly.dim}")
    if np.any(x < poly.lower - tol) or np.any(x > poly.upper + tol):
        return False
    if poly.A is not None and np.any(poly.A @ x > poly.b + tol):
        return False
    return True


def project(poly: Polytope, x: np.ndarray, tol_kkt: float = TOL_KKT) -> np.ndarray:
    """Euclidean projection of x onto the polytope.

    Boxes reduce to clipping; general sets solve the projection QP with the
    query module's solver. Raises EmptyFeasibleSet on an empty target.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size != poly.dim:
        raise ValueError(f"point has dimension {x.size}, polytope {poly.dim}")
    if poly.box_empty():
        raise EmptyFeasibleSet("empty feasible set")
    if poly.is_box:
        return np.clip(x, poly.lower, poly.upper)
    # local import: query depends on this module for the Polytope type
    from .query import QpInfeasible, qp_solve

    try:
        return qp_solve(2.0 * np.eye(poly.dim), -2.0 * x, poly, tol_kkt=tol_kkt)
    except QpInfeasible as exc:
        raise EmptyFeasibleSet("empty feasible set") from exc
