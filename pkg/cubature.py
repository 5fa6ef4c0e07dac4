"""
Cubature Builder - Cubature
Builds cubature formulas from i.i.d. candidates: exact construction by growing
a sample pool until the target moments enter the convex hull of the lifted
samples, Caratheodory-Tchakaloff subsampling of finite point sets, compression
of empirical and weighted measures, product grids and verification.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from basis import BasisKind, TestFunctionBasis, basis_dim, evaluate_basis_batch
from errors import (
    BadInputError,
    DimensionMismatchError,
    InfeasibleError,
    NumericalInstabilityError,
    PoolExhaustedError,
    SizeLimitError,
)
from lp_solver import LpInstance, LpStatus, SolverOptions, check_membership, find_bfs
from moments import MomentVector, empirical_moments_from_lift, weighted_moments
from sampler import SamplerSpec, StreamId

NORMALIZATION_TOLERANCE = 1e-12
DEFAULT_MAX_PRODUCT_NODES = 1_000_000

logger = logging.getLogger(__name__)


class ProvenanceKind(str, Enum):
    EXACT_CONSTRUCTION = "exact_construction"
    SUBSAMPLED = "subsampled"
    PRODUCT = "product"


@dataclass(frozen=True)
class Provenance:
    kind: ProvenanceKind
    pool_size: Optional[int] = None
    seed: Optional[int] = None
    stream_id: Optional[Any] = None
    k: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        record: Dict[str, Any] = {"kind": self.kind.value}
        if self.pool_size is not None:
            record["N_used"] = self.pool_size
        if self.seed is not None:
            record["seed"] = self.seed
        if self.stream_id is not None:
            sid = self.stream_id
            record["stream_id"] = list(sid) if isinstance(sid, tuple) else sid
        if self.k is not None:
            record["k"] = self.k
        return record

    @classmethod
    def from_dict(cls, record: Dict[str, Any]) -> "Provenance":
        stream_id = record.get("stream_id")
        if isinstance(stream_id, list):
            stream_id = tuple(stream_id)
        return cls(
            kind=ProvenanceKind(record["kind"]),
            pool_size=record.get("N_used"),
            seed=record.get("seed"),
            stream_id=stream_id,
            k=record.get("k"),
        )


@dataclass(frozen=True, eq=False)
class Cubature:
    """Nodes x_1..x_n (rows) with weights w_1..w_n"""
    nodes: np.ndarray
    weights: np.ndarray
    basis: Optional[TestFunctionBasis]
    target: Optional[MomentVector]
    residual: Optional[float]
    provenance: Provenance

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        weights = np.array(self.weights, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes.reshape(-1, 1)
        if nodes.ndim != 2 or weights.ndim != 1 or nodes.shape[0] != weights.shape[0]:
            raise DimensionMismatchError(
                f"{weights.shape} weights for nodes of shape {nodes.shape}")
        if nodes.shape[0] == 0:
            raise BadInputError("a cubature needs at least one node")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return self.weights.size

    @property
    def s(self) -> int:
        return self.nodes.shape[1]

    def moments(self, basis: TestFunctionBasis) -> np.ndarray:
        """sum_j w_j phi(x_j)"""
        return evaluate_basis_batch(basis, self.nodes) @ self.weights

    def check_invariants(self, tol: Optional[float] = None) -> List[str]:
        """Violated invariants, empty when the cubature is well formed"""
        problems = []
        if np.any(self.weights <= 0):
            problems.append("non-positive weight")
        total = float(self.weights.sum())
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            problems.append(f"weights sum to {total!r}")
        if self.basis is not None:
            if self.basis.input_dim != self.s:
                problems.append(f"nodes in R^{self.s} for a basis on R^{self.basis.input_dim}")
            if self.provenance.kind != ProvenanceKind.PRODUCT and self.n > self.basis.size:
                problems.append(f"{self.n} nodes exceed d = {self.basis.size}")
        if self.target is not None and self.basis is not None and len(self.target) != self.basis.size:
            problems.append("target length differs from the basis size")
        if self.residual is not None:
            if not math.isfinite(self.residual) or self.residual < 0:
                problems.append(f"invalid residual {self.residual!r}")
            elif tol is not None and self.target is not None:
                limit = tol * max(1.0, float(np.abs(self.target.values).max()))
                if self.residual > limit:
                    problems.append(f"residual {self.residual:.3e} above {limit:.3e}")
        return problems


@dataclass
class ConstructionConfig:
    """Pool growth schedule for construct_exact"""
    initial_pool: Optional[int] = None  # defaults to d
    growth_factor: float = 2.0
    max_pool: int = 1_000_000
    lp_tolerance: float = 1e-9
    seed: int = 0
    stream_id: StreamId = 0
    perturb_retries: int = 0
    solver: Optional[SolverOptions] = None

    def __post_init__(self):
        if not self.growth_factor > 1:
            raise BadInputError("growth factor must exceed 1")
        if self.initial_pool is not None and self.initial_pool < 1:
            raise BadInputError("initial pool must be at least 1")
        if self.max_pool < 1:
            raise BadInputError("max pool must be at least 1")

    def solver_options(self) -> SolverOptions:
        if self.solver is None:
            return SolverOptions(tol=self.lp_tolerance)
        return replace(self.solver, tol=self.lp_tolerance)


def _check_target(basis: TestFunctionBasis, target: MomentVector):
    if len(target) != basis.size:
        raise DimensionMismatchError(f"target of length {len(target)} for a basis of size {basis.size}")


def _raise_for_status(result, pool_size: Optional[int] = None):
    if result.status == LpStatus.INFEASIBLE:
        raise InfeasibleError("target moments lie outside the convex hull of the lifted points")
    if result.status == LpStatus.NUMERICALLY_UNSTABLE:
        raise NumericalInstabilityError(result.message or "simplex solver unstable", pool_size)


def _residual(lifted: np.ndarray, weights: np.ndarray, target: np.ndarray) -> float:
    return float(np.abs(lifted @ weights - target).max())


def _normalized(weights: np.ndarray) -> np.ndarray:
    # the constant row already forces sum ~ 1; remove the last rounding
    return weights / math.fsum(weights)


def _perturbed(target: np.ndarray, lifted: np.ndarray, tol: float) -> np.ndarray:
    # move toward the pool's mean lift, which lies inside the hull
    eps = 0.1 * tol
    moved = (1.0 - eps) * target + eps * lifted.mean(axis=1)
    moved[0] = 1.0
    return moved


def construct_exact(sampler: SamplerSpec, basis: TestFunctionBasis, target: MomentVector,
                    config: Optional[ConstructionConfig] = None) -> Cubature:
    """
    Grow an i.i.d. pool (d, 2d, 4d, ... points) until the target enters the
    convex hull of the lifted pool, then extract a basic feasible solution.
    The nodes are a subset of the drawn samples.
    """
    config = config or ConstructionConfig()
    _check_target(basis, target)
    if sampler.dim != basis.input_dim:
        raise DimensionMismatchError(f"sampler on R^{sampler.dim} for a basis on R^{basis.input_dim}")

    options = config.solver_options()
    b = target.values
    stream = sampler.open_stream(config.seed, config.stream_id)
    pool_size = min(config.initial_pool or basis.size, config.max_pool)
    points = stream.draw(pool_size)
    lifted = evaluate_basis_batch(basis, points)
    retries = config.perturb_retries
    goal = b

    while True:
        instance = LpInstance(lifted, goal, tol=config.lp_tolerance)
        status = check_membership(instance, options)
        logger.info("pool of %d samples: %s", pool_size, status.status.value)

        if status.feasible:
            result = find_bfs(instance, options)
            if result.feasible:
                weights = _normalized(result.weights)
                residual = _residual(lifted[:, result.support], weights, b)
                logger.info("captured target with %d samples; %d nodes, residual %.3e",
                            pool_size, result.support.size, residual)
                return Cubature(
                    nodes=points[result.support],
                    weights=weights,
                    basis=basis,
                    target=target,
                    residual=residual,
                    provenance=Provenance(ProvenanceKind.EXACT_CONSTRUCTION, pool_size=pool_size,
                                          seed=config.seed, stream_id=config.stream_id),
                )
            status = result
            if status.status == LpStatus.INFEASIBLE:
                logger.warning("membership held but extraction found the pool infeasible at N=%d",
                               pool_size)

        if status.status == LpStatus.NUMERICALLY_UNSTABLE:
            if retries <= 0:
                raise NumericalInstabilityError(status.message or "simplex solver unstable", pool_size)
            retries -= 1
            goal = _perturbed(b, lifted, config.lp_tolerance)
            logger.warning("retrying with a perturbed target at N=%d (%s)", pool_size, status.message)
            continue

        if pool_size >= config.max_pool:
            raise PoolExhaustedError(pool_size)
        new_size = min(config.max_pool, max(pool_size + 1, math.ceil(pool_size * config.growth_factor)))
        extra = stream.draw(new_size - pool_size)
        points = np.vstack([points, extra])
        lifted = np.hstack([lifted, evaluate_basis_batch(basis, extra)])
        pool_size = new_size


def subsample(points: np.ndarray, basis: TestFunctionBasis, target: MomentVector,
              tol: float = 1e-9, lifted: Optional[np.ndarray] = None,
              options: Optional[SolverOptions] = None) -> Cubature:
    """
    At most d of the given points with positive weights matching the target.
    Feasible iff the target lies in the convex hull of the lifted points.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points.reshape(-1, 1)
    _check_target(basis, target)
    if lifted is None:
        lifted = evaluate_basis_batch(basis, points)
    else:
        lifted = np.asarray(lifted, dtype=float)
        if lifted.shape != (basis.size, points.shape[0]):
            raise DimensionMismatchError(
                f"lift of shape {lifted.shape} for {points.shape[0]} points and d = {basis.size}")

    if options is None:
        options = SolverOptions(tol=tol)
    result = find_bfs(LpInstance(lifted, target.values, tol=tol), options)
    _raise_for_status(result)
    weights = _normalized(result.weights)
    return Cubature(
        nodes=points[result.support],
        weights=weights,
        basis=basis,
        target=target,
        residual=_residual(lifted[:, result.support], weights, target.values),
        provenance=Provenance(ProvenanceKind.SUBSAMPLED),
    )


def compress_empirical(samples, basis: TestFunctionBasis, tol: float = 1e-9,
                       lifted: Optional[np.ndarray] = None,
                       options: Optional[SolverOptions] = None) -> Cubature:
    """Compress (1/N) sum delta_{X_i} to at most d weighted samples"""
    points = np.asarray(getattr(samples, "points", samples), dtype=float)
    if points.ndim != 2 or points.shape[0] == 0:
        raise BadInputError("empty sample set")
    if lifted is None:
        lifted = evaluate_basis_batch(basis, points)
    target = empirical_moments_from_lift(lifted, seed=getattr(samples, "seed", None))
    return subsample(points, basis, target, tol=tol, lifted=lifted, options=options)


def compress_weighted(points: np.ndarray, weights: Sequence[float], basis: TestFunctionBasis,
                      tol: float = 1e-9, lifted: Optional[np.ndarray] = None,
                      options: Optional[SolverOptions] = None) -> Cubature:
    """Compress a weighted discrete measure sum a_x delta_x to at most d points"""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points.reshape(-1, 1)
    if lifted is None:
        lifted = evaluate_basis_batch(basis, points)
    target = weighted_moments(points, weights, basis, lifted=lifted)
    return subsample(points, basis, target, tol=tol, lifted=lifted, options=options)


def product_of(factors: Sequence[Cubature], max_nodes: int = DEFAULT_MAX_PRODUCT_NODES) -> Cubature:
    """
    Tensor product of cubatures: one node per index tuple (j_1, ..., j_k) in
    lexicographic order, weight w_{j_1} ... w_{j_k}. Basis and target are left
    unset for the caller to pair with a product-space basis.
    """
    if not factors:
        raise BadInputError("need at least one factor")
    total = 1
    for factor in factors:
        total *= factor.n
        if total > max_nodes:
            raise SizeLimitError(f"product grid exceeds the cap of {max_nodes} nodes")

    grids = np.meshgrid(*[np.arange(f.n) for f in factors], indexing="ij")
    index = np.stack([g.ravel() for g in grids], axis=1)
    nodes = np.hstack([f.nodes[index[:, i]] for i, f in enumerate(factors)])
    weights = np.ones(total)
    for i, f in enumerate(factors):
        weights *= f.weights[index[:, i]]
    return Cubature(nodes=nodes, weights=weights, basis=None, target=None, residual=None,
                    provenance=Provenance(ProvenanceKind.PRODUCT, k=len(factors)))


def product_cubature(base: Cubature, k: int, max_nodes: int = DEFAULT_MAX_PRODUCT_NODES) -> Cubature:
    """k-fold product of one cubature with itself: n^k nodes"""
    if k < 1:
        raise BadInputError("k must be at least 1")
    if base.n ** k > max_nodes:
        raise SizeLimitError(f"{base.n}^{k} nodes exceed the cap of {max_nodes}")
    return product_of([base] * k, max_nodes=max_nodes)


def reduce_cubature(cub: Cubature, basis: TestFunctionBasis, tol: float = 1e-9,
                    options: Optional[SolverOptions] = None) -> Cubature:
    """Caratheodory reduction of a cubature against its own moments on the given basis"""
    if basis.input_dim != cub.s:
        raise DimensionMismatchError(f"nodes in R^{cub.s} for a basis on R^{basis.input_dim}")
    weights = cub.weights / cub.weights.sum()
    return compress_weighted(cub.nodes, weights, basis, tol=tol, options=options)


def fisher_bound(basis: TestFunctionBasis) -> Optional[int]:
    """dim P_{floor(m/2)}: minimum node count of a degree-m cubature (full polynomial bases)"""
    if not basis.is_full_polynomial:
        return None
    return basis_dim(basis.input_dim, basis.max_degree // 2)


@dataclass
class VerificationReport:
    component_residuals: np.ndarray
    max_residual: float
    tolerance: float
    weight_sum: float
    weights_positive: bool
    weights_normalized: bool
    node_count: int
    basis_size: int
    within_tchakaloff: bool
    fisher_bound: Optional[int]
    dimension_ok: bool = True
    size_bound_required: bool = True
    messages: List[str] = field(default_factory=list)

    @property
    def residual_ok(self) -> bool:
        return self.dimension_ok and self.max_residual <= self.tolerance

    @property
    def satisfies_fisher(self) -> Optional[bool]:
        if self.fisher_bound is None:
            return None
        return self.node_count >= self.fisher_bound

    @property
    def passed(self) -> bool:
        size_ok = self.within_tchakaloff or not self.size_bound_required
        return (self.residual_ok and self.weights_positive and self.weights_normalized
                and size_ok and self.satisfies_fisher is not False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "component_residuals": [float(r) for r in self.component_residuals],
            "weight_sum": self.weight_sum,
            "weights_positive": self.weights_positive,
            "weights_normalized": self.weights_normalized,
            "node_count": self.node_count,
            "basis_size": self.basis_size,
            "within_tchakaloff": self.within_tchakaloff,
            "fisher_bound": self.fisher_bound,
            "satisfies_fisher": self.satisfies_fisher,
            "dimension_ok": self.dimension_ok,
            "messages": list(self.messages),
        }

    def render(self) -> str:
        def flag(ok) -> str:
            return "n/a" if ok is None else ("ok" if ok else "FAIL")

        lines = [
            f"nodes: {self.node_count}  basis size d: {self.basis_size}",
            f"max residual: {self.max_residual:.3e} (tolerance {self.tolerance:.1e}) [{flag(self.residual_ok)}]",
            f"weights positive: {flag(self.weights_positive)}",
            f"weights sum: {self.weight_sum:.17g} [{flag(self.weights_normalized)}]",
            f"n <= d: {flag(self.within_tchakaloff)}"
            + ("" if self.size_bound_required else " (not required for product grids)"),
        ]
        if self.fisher_bound is not None:
            lines.append(f"Fisher-type bound n >= {self.fisher_bound}: {flag(self.satisfies_fisher)}")
        lines.extend(self.messages)
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def verify(cub: Cubature, basis: TestFunctionBasis, target: MomentVector, tol: float = 1e-9,
           lifted: Optional[np.ndarray] = None) -> VerificationReport:
    """Check a cubature against a basis and target; reports, never raises"""
    messages: List[str] = []
    weights = cub.weights
    weight_sum = float(weights.sum())
    scale = max(1.0, float(np.abs(target.values).max()))
    dimension_ok = basis.input_dim == cub.s and len(target) == basis.size

    residuals = np.full(len(target), np.inf)
    if not dimension_ok:
        messages.append(f"dimension mismatch: nodes in R^{cub.s}, basis {basis.describe()}, "
                        f"target of length {len(target)}")
    elif basis.kind == BasisKind.TABULATED and lifted is None:
        dimension_ok = False
        messages.append("tabulated basis: node values are required to verify")
    else:
        try:
            if lifted is None:
                lifted = evaluate_basis_batch(basis, cub.nodes)
            residuals = np.abs(lifted @ weights - target.values)
        except Exception as e:
            dimension_ok = False
            messages.append(f"cannot evaluate the basis at the nodes: {e}")

    report = VerificationReport(
        component_residuals=residuals,
        max_residual=float(residuals.max()),
        tolerance=tol * scale,
        weight_sum=weight_sum,
        weights_positive=bool(np.all(weights > 0)),
        weights_normalized=abs(weight_sum - 1.0) <= NORMALIZATION_TOLERANCE,
        node_count=cub.n,
        basis_size=basis.size,
        within_tchakaloff=cub.n <= basis.size,
        fisher_bound=fisher_bound(basis),
        dimension_ok=dimension_ok,
        size_bound_required=cub.provenance.kind != ProvenanceKind.PRODUCT,
        messages=messages,
    )
    if dimension_ok and not report.residual_ok:
        bad = np.flatnonzero(residuals > report.tolerance)
        messages.append(f"{bad.size} component(s) exceed the tolerance, first at index {int(bad[0])}")
    if not report.weights_positive:
        messages.append(f"{int(np.sum(weights <= 0))} non-positive weight(s)")
    return report


def integrate(cub: Cubature, values: Sequence[float]) -> float:
    """sum_j w_j f(x_j) given the values f(x_j)"""
    values = np.asarray(values, dtype=float)
    if values.shape != (cub.n,):
        raise DimensionMismatchError(f"{values.size} values for {cub.n} nodes")
    return float(math.fsum(cub.weights * values))


def integrate_function(cub: Cubature, f: Callable[[np.ndarray], float]) -> float:
    return integrate(cub, [f(x) for x in cub.nodes])
