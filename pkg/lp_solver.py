"""
Cubature Builder - LP Solver
Phase-I simplex for { A z = b, z >= 0 } with a trivial objective. Returns a basic
feasible solution (a vertex, at most d nonzero weights) or evidence of
infeasibility, plus a cheaper membership-only check that stops as soon as the
artificial objective reaches zero.
"""

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Set

import numpy as np

from errors import BadInputError, DimensionMismatchError

logger = logging.getLogger(__name__)


class LpStatus(str, Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    NUMERICALLY_UNSTABLE = "numerically_unstable"


@dataclass
class SolverOptions:
    """Tolerances and pivoting policy; defaults mirror config.Settings"""
    tol: float = 1e-9
    pivot_floor: float = 1e-11
    prune_threshold: float = 1e-12
    degenerate_switch_factor: int = 10
    iteration_factor: int = 50
    time_limit: Optional[float] = None
    bland_only: bool = False
    polish: bool = True

    @classmethod
    def from_settings(cls, settings, **overrides) -> "SolverOptions":
        values = dict(
            tol=settings.lp_tolerance,
            pivot_floor=settings.pivot_floor,
            prune_threshold=settings.prune_threshold,
            degenerate_switch_factor=settings.degenerate_switch_factor,
            iteration_factor=settings.iteration_factor,
            time_limit=settings.lp_time_limit,
        )
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True, eq=False)
class LpInstance:
    """Column j of A is the lift phi(x_j); b is the target"""
    A: np.ndarray
    b: np.ndarray
    tol: float = 1e-9

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if A.ndim != 2 or b.ndim != 1:
            raise DimensionMismatchError(f"A must be 2-d and b 1-d, got {A.shape} and {b.shape}")
        if A.shape[0] != b.shape[0]:
            raise DimensionMismatchError(f"A has {A.shape[0]} rows but b has length {b.shape[0]}")
        if A.shape[0] < 1 or A.shape[1] < 1:
            raise DimensionMismatchError(f"empty LP instance {A.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise BadInputError("LP instance contains NaN or Inf")
        if not self.tol > 0:
            raise BadInputError("tolerance must be positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def scale(self) -> float:
        return max(1.0, float(np.abs(self.b).max()))


@dataclass
class BfsResult:
    status: LpStatus
    support: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    residual: float = float("inf")
    iterations: int = 0
    degenerate_pivots: int = 0
    used_bland: bool = False
    redundant_rows: List[int] = field(default_factory=list)
    phase_one_objective: float = float("nan")
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.status == LpStatus.FEASIBLE

    def dense_weights(self, n: int) -> np.ndarray:
        z = np.zeros(n)
        z[self.support] = self.weights
        return z


class PhaseOneSimplex:
    """
    Dense-tableau Phase-I simplex. One artificial variable per row (rows with
    negative b are negated first), the artificial sum is minimized. Dantzig
    pricing with an automatic switch to Bland's rule after a run of degenerate
    pivots. Each instance owns its tableau; use one solver per solve.
    """

    def __init__(self, instance: LpInstance, options: Optional[SolverOptions] = None):
        self.instance = instance
        self.options = options or SolverOptions(tol=instance.tol)
        self.d = instance.d
        self.n = instance.n
        # relative to b only while |b|_inf >= 1; absolute below that
        self.feasibility_tol = self.options.tol * instance.scale
        self.iterations = 0
        self.degenerate_pivots = 0
        self.used_bland = self.options.bland_only
        self._build_tableau()

    def _build_tableau(self):
        d, n = self.d, self.n
        A = self.instance.A.copy()
        b = self.instance.b.copy()
        flip = b < 0
        A[flip] *= -1.0
        b[flip] *= -1.0

        T = np.zeros((d + 1, n + d + 1))
        T[:d, :n] = A
        T[:d, n:n + d] = np.eye(d)
        T[:d, -1] = b
        T[d, :n] = -A.sum(axis=0)
        T[d, -1] = -b.sum()
        self.T = T
        self.basis = np.arange(n, n + d)

    @property
    def objective(self) -> float:
        """Current artificial sum"""
        return max(-self.T[self.d, -1], 0.0)

    def _entering_column(self, blocked: Set[int]) -> Optional[int]:
        costs = self.T[self.d, :self.n]
        threshold = -self.options.pivot_floor * self.instance.scale
        candidates = np.flatnonzero(costs < threshold)
        if blocked:
            candidates = candidates[~np.isin(candidates, list(blocked))]
        if candidates.size == 0:
            return None
        if self.used_bland:
            return int(candidates[0])
        return int(candidates[np.argmin(costs[candidates])])

    def _leaving_row(self, col: int) -> Optional[int]:
        column = self.T[:self.d, col]
        rows = np.flatnonzero(column > self.options.pivot_floor)
        if rows.size == 0:
            return None
        rhs = np.maximum(self.T[rows, -1], 0.0)
        ratios = rhs / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * (1.0 + best)]
        if ties.size == 1:
            return int(ties[0])
        if self.used_bland:
            return int(ties[np.argmin(self.basis[ties])])
        return int(ties[np.argmax(column[ties])])

    def _pivot(self, row: int, col: int):
        T = self.T
        pivot_row = T[row] / T[row, col]
        T -= np.outer(T[:, col], pivot_row)
        T[row] = pivot_row
        self.basis[row] = col

    def _run(self, stop_at_zero: bool) -> Optional[str]:
        """Pivot until optimal; returns a failure message or None"""
        cap = self.options.iteration_factor * (self.n + self.d)
        switch_after = self.options.degenerate_switch_factor * self.d
        deadline = None
        if self.options.time_limit is not None:
            deadline = time.monotonic() + self.options.time_limit
        consecutive_degenerate = 0
        blocked: Set[int] = set()

        while True:
            if stop_at_zero and self.objective <= self.feasibility_tol:
                return None
            if self.iterations >= cap:
                return f"iteration cap {cap} reached"
            if deadline is not None and time.monotonic() > deadline:
                return f"time limit of {self.options.time_limit}s exceeded"

            col = self._entering_column(blocked)
            if col is None:
                if blocked and self.objective > self.feasibility_tol:
                    return "no pivot above the degeneracy floor for an improving column"
                return None
            row = self._leaving_row(col)
            if row is None:
                blocked.add(col)
                continue

            step = max(self.T[row, -1], 0.0) / self.T[row, col]
            if step <= self.options.pivot_floor:
                self.degenerate_pivots += 1
                consecutive_degenerate += 1
            else:
                consecutive_degenerate = 0
            if not self.used_bland and consecutive_degenerate >= switch_after:
                logger.debug("switching to Bland's rule after %d degenerate pivots",
                             consecutive_degenerate)
                self.used_bland = True

            self._pivot(row, col)
            self.iterations += 1
            blocked.clear()

    def _drive_out_artificials(self) -> List[int]:
        """Pivot zero-level artificials out of the basis; rows that cannot be are redundant"""
        redundant = []
        for row in range(self.d):
            if self.basis[row] < self.n:
                continue
            entries = np.abs(self.T[row, :self.n])
            col = int(np.argmax(entries))
            if entries[col] > self.options.pivot_floor:
                self.T[row, -1] = 0.0
                self._pivot(row, col)
            else:
                redundant.append(row)
        return redundant

    def _result(self, status: LpStatus, message: str = "", **kwargs) -> BfsResult:
        return BfsResult(
            status=status,
            iterations=self.iterations,
            degenerate_pivots=self.degenerate_pivots,
            used_bland=self.used_bland,
            phase_one_objective=self.objective,
            message=message,
            **kwargs,
        )

    def check(self) -> BfsResult:
        """Feasibility only; stops once the artificial sum reaches zero"""
        failure = self._run(stop_at_zero=True)
        if failure is not None:
            return self._result(LpStatus.NUMERICALLY_UNSTABLE, failure)
        if self.objective > self.feasibility_tol:
            return self._result(LpStatus.INFEASIBLE, "phase-one optimum above tolerance")
        return self._result(LpStatus.FEASIBLE)

    def solve(self) -> BfsResult:
        """Full Phase-I followed by vertex extraction"""
        failure = self._run(stop_at_zero=False)
        if failure is not None:
            logger.warning("simplex stopped: %s", failure)
            return self._result(LpStatus.NUMERICALLY_UNSTABLE, failure)
        if self.objective > self.feasibility_tol:
            return self._result(LpStatus.INFEASIBLE, "phase-one optimum above tolerance")

        redundant = self._drive_out_artificials()
        rows = np.flatnonzero(self.basis < self.n)
        columns = self.basis[rows]
        values = self.T[rows, -1]
        keep = values > self.options.prune_threshold
        order = np.argsort(columns[keep], kind="stable")
        support = columns[keep][order].astype(np.int64)
        weights = values[keep][order]
        weights, residual = self._finish(support, weights)

        logger.debug("bfs: %d iterations, %d degenerate, bland=%s, %d redundant rows, |support|=%d",
                     self.iterations, self.degenerate_pivots, self.used_bland,
                     len(redundant), support.size)
        if residual > self.feasibility_tol:
            return self._result(LpStatus.NUMERICALLY_UNSTABLE,
                                f"residual {residual:.3e} above tolerance after extraction",
                                support=support, weights=weights, residual=residual,
                                redundant_rows=redundant)
        return self._result(LpStatus.FEASIBLE, support=support, weights=weights,
                            residual=residual, redundant_rows=redundant)

    def _finish(self, support: np.ndarray, weights: np.ndarray):
        A, b = self.instance.A, self.instance.b
        residual = _residual(A, b, support, weights)
        if not self.options.polish or support.size == 0:
            return weights, residual
        # one least-squares solve on the support recovers the digits lost to pivoting
        polished, *_ = np.linalg.lstsq(A[:, support], b, rcond=None)
        if np.all(polished > self.options.prune_threshold):
            polished_residual = _residual(A, b, support, polished)
            if polished_residual <= residual:
                return polished, polished_residual
        return weights, residual


def _residual(A: np.ndarray, b: np.ndarray, support: np.ndarray, weights: np.ndarray) -> float:
    if support.size == 0:
        return float(np.abs(b).max())
    return float(np.abs(A[:, support] @ weights - b).max())


def find_bfs(instance: LpInstance, options: Optional[SolverOptions] = None) -> BfsResult:
    """Basic feasible solution of A z = b, z >= 0"""
    return PhaseOneSimplex(instance, options).solve()


def check_membership(instance: LpInstance, options: Optional[SolverOptions] = None) -> BfsResult:
    """Membership status without vertex extraction (support and weights left empty)"""
    return PhaseOneSimplex(instance, options).check()


def membership_test(instance: LpInstance, options: Optional[SolverOptions] = None) -> bool:
    """True iff b lies in the cone spanned by the columns of A (the convex hull when row 1 is constant)"""
    return check_membership(instance, options).feasible


def support_is_independent(A: np.ndarray, support: np.ndarray, tol: float = 1e-8) -> bool:
    """Vertex property: the support columns are linearly independent"""
    if len(support) == 0:
        return True
    return int(np.linalg.matrix_rank(A[:, support], tol=tol)) >= len(support)
