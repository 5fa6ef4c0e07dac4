"""
Cubature Builder - Moments
Target moment vectors b = E[phi(X)]: analytic on the unit cube, loaded from a
file for other known measures, or empirical from samples.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from basis import BasisKind, MultiIndex, TestFunctionBasis, evaluate_basis_batch
from errors import BadInputError, DimensionMismatchError, MomentFileError

LEADING_MOMENT_TOLERANCE = 1e-9

logger = logging.getLogger(__name__)


class MomentSource(str, Enum):
    ANALYTIC = "analytic"
    USER_SUPPLIED = "user_supplied"
    EMPIRICAL = "empirical"
    WEIGHTED = "weighted"


@dataclass(frozen=True, eq=False)
class MomentVector:
    """Target vector b; values[0] is exactly 1"""
    values: np.ndarray
    source: MomentSource
    sample_count: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise DimensionMismatchError("a moment vector must be a non-empty 1-d array")
        if not np.all(np.isfinite(values)):
            raise BadInputError("moment vector contains NaN or Inf")
        if values[0] != 1.0:
            raise BadInputError(f"leading moment must be exactly 1, got {values[0]!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    def provenance(self) -> Dict[str, Any]:
        record: Dict[str, Any] = {"source": self.source.value}
        if self.sample_count is not None:
            record["N"] = self.sample_count
        if self.seed is not None:
            record["seed"] = self.seed
        return record


def uniform_cube_moment(alpha: Union[MultiIndex, Sequence[int]]) -> float:
    """E[X^alpha] for X uniform on [0,1)^s, i.e. prod 1/(alpha_i + 1)"""
    exponents = alpha.exponents if isinstance(alpha, MultiIndex) else tuple(alpha)
    value = Fraction(1)
    for a in exponents:
        value /= (int(a) + 1)
    return float(value)


def analytic_moment_vector(basis: TestFunctionBasis) -> MomentVector:
    """Exact moments of the uniform measure on the unit cube"""
    if basis.kind != BasisKind.MONOMIAL:
        raise BadInputError("analytic moments are only available for monomial bases")
    values = np.array([uniform_cube_moment(mi) for mi in basis.members])
    return MomentVector(values, MomentSource.ANALYTIC)


def _check_sample_dim(basis: TestFunctionBasis, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] == 0:
        raise BadInputError("empty sample set")
    if points.shape[1] != basis.input_dim:
        raise DimensionMismatchError(
            f"samples of dimension {points.shape[1]} for a basis on R^{basis.input_dim}")
    return points


def empirical_moments_from_lift(lifted: np.ndarray, seed: Optional[int] = None) -> MomentVector:
    """Average of the columns of a d x N lift matrix, leading entry set to 1"""
    lifted = np.asarray(lifted, dtype=float)
    if lifted.ndim != 2 or lifted.shape[1] == 0:
        raise BadInputError("empty sample set")
    values = lifted.mean(axis=1)
    values[0] = 1.0
    return MomentVector(values, MomentSource.EMPIRICAL, sample_count=lifted.shape[1], seed=seed)


def empirical_moments(samples, basis: TestFunctionBasis) -> MomentVector:
    """(1/N) sum phi(X_i) over a SampleBatch (or a bare N x s array)"""
    points = getattr(samples, "points", samples)
    points = _check_sample_dim(basis, points)
    seed = getattr(samples, "seed", None)
    return empirical_moments_from_lift(evaluate_basis_batch(basis, points), seed=seed)


def weighted_moments(points: np.ndarray, weights: Sequence[float], basis: TestFunctionBasis,
                     lifted: Optional[np.ndarray] = None) -> MomentVector:
    """sum a_x phi(x) for a discrete probability measure with masses a_x"""
    weights = np.asarray(weights, dtype=float)
    if lifted is None:
        points = _check_sample_dim(basis, points)
        lifted = evaluate_basis_batch(basis, points)
    if weights.ndim != 1 or weights.size != lifted.shape[1]:
        raise DimensionMismatchError(f"{weights.size} weights for {lifted.shape[1]} points")
    if np.any(weights <= 0):
        raise BadInputError("weights of a discrete measure must be positive")
    total = weights.sum()
    if abs(total - 1.0) > LEADING_MOMENT_TOLERANCE:
        raise BadInputError(f"weights sum to {total!r}, not 1")
    values = lifted @ weights
    values[0] = 1.0
    return MomentVector(values, MomentSource.WEIGHTED, sample_count=weights.size)


def load_moment_vector(path: str, basis: TestFunctionBasis) -> MomentVector:
    """
    One decimal value per line, d lines. `#` starts a comment. The leading
    value must be within 1e-9 of 1 and is snapped to exactly 1.
    """
    values: List[float] = []
    try:
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                try:
                    values.append(float(text))
                except ValueError:
                    raise MomentFileError(path, f"not a number: {text!r}", lineno)
    except OSError as e:
        raise MomentFileError(path, f"cannot read moment file: {e}")

    if len(values) != basis.size:
        raise MomentFileError(path, f"{len(values)} moments for a basis of size {basis.size}")
    if abs(values[0] - 1.0) > LEADING_MOMENT_TOLERANCE:
        raise MomentFileError(path, f"leading moment {values[0]!r} deviates from 1")
    values[0] = 1.0
    try:
        return MomentVector(np.array(values), MomentSource.USER_SUPPLIED)
    except BadInputError as e:
        raise MomentFileError(path, str(e))


def save_moment_vector(path: str, moments: MomentVector, basis: Optional[TestFunctionBasis] = None) -> None:
    lines = [f"# moments ({moments.source.value})"]
    for i, value in enumerate(moments.values):
        label = ""
        if basis is not None and basis.kind == BasisKind.MONOMIAL:
            label = f"  # {basis.members[i]}"
        lines.append(f"{value:.17g}{label}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
