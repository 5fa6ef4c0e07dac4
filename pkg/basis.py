"""
Cubature Builder - Basis
Enumerates and evaluates the test-function family: multivariate monomials of
bounded total degree, or tabulated test functions given by their values.
"""

import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import comb

from errors import BadInputError, BasisSizeError, DimensionMismatchError, SampleFileError

DEFAULT_MAX_BASIS_SIZE = 100_000
INDEX_LIMIT = np.iinfo(np.int64).max

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MultiIndex:
    """Exponent vector of one monomial test function"""
    exponents: Tuple[int, ...]

    def __post_init__(self):
        exponents = tuple(int(e) for e in self.exponents)
        if any(e < 0 for e in exponents):
            raise BadInputError(f"negative exponent in {exponents}")
        object.__setattr__(self, "exponents", exponents)

    @property
    def degree(self) -> int:
        return sum(self.exponents)

    @property
    def dim(self) -> int:
        return len(self.exponents)

    def __str__(self) -> str:
        return "x^(" + ",".join(str(e) for e in self.exponents) + ")"


class BasisKind(str, Enum):
    MONOMIAL = "monomial"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class TestFunctionBasis:
    """
    Ordered family phi = (phi_1, ..., phi_d) with phi_1 identically 1.

    Monomial bases list their multi-indices in graded lexicographic order.
    Tabulated bases only carry member names; their values come with the points.
    """
    __test__ = False  # keep pytest from collecting this class

    input_dim: int
    kind: BasisKind
    max_degree: Optional[int] = None
    members: Tuple[MultiIndex, ...] = ()
    names: Tuple[str, ...] = ()
    _exponents: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.input_dim < 1:
            raise BadInputError("input dimension must be positive")
        if self.kind == BasisKind.MONOMIAL:
            if not self.members or any(mi.degree != 0 for mi in self.members[:1]):
                raise BadInputError("the first monomial must be the constant")
            if len(set(self.members)) != len(self.members):
                raise BadInputError("basis members must be distinct")
            exps = np.array([mi.exponents for mi in self.members], dtype=np.int64)
            exps.setflags(write=False)
            object.__setattr__(self, "_exponents", exps)
        else:
            if not self.names:
                raise BadInputError("a tabulated basis needs at least the constant member")
            if len(set(self.names)) != len(self.names):
                raise BadInputError("basis members must be distinct")

    @property
    def size(self) -> int:
        return len(self.members) if self.kind == BasisKind.MONOMIAL else len(self.names)

    def __len__(self) -> int:
        return self.size

    @property
    def exponents(self) -> np.ndarray:
        """d x s exponent matrix (monomial bases only)"""
        if self.kind != BasisKind.MONOMIAL:
            raise BadInputError("tabulated bases have no exponents")
        return self._exponents

    @property
    def is_full_polynomial(self) -> bool:
        return self.kind == BasisKind.MONOMIAL and self.max_degree is not None

    def index_of(self, alpha: Sequence[int]) -> int:
        return self.members.index(MultiIndex(tuple(alpha)))

    def describe(self) -> str:
        if self.kind == BasisKind.MONOMIAL:
            return f"monomial(s={self.input_dim}, m={self.max_degree}, d={self.size})"
        return f"tabulated(s={self.input_dim}, d={self.size})"

    def to_descriptor(self) -> Dict[str, Any]:
        if self.kind == BasisKind.MONOMIAL:
            return {"kind": self.kind.value, "s": self.input_dim, "m": self.max_degree}
        return {"kind": self.kind.value, "s": self.input_dim, "members": list(self.names)}

    @classmethod
    def from_descriptor(cls, descriptor: Dict[str, Any],
                        max_size: int = DEFAULT_MAX_BASIS_SIZE) -> "TestFunctionBasis":
        try:
            kind = BasisKind(descriptor["kind"])
            s = int(descriptor["s"])
            if kind == BasisKind.MONOMIAL:
                return enumerate_monomials(s, int(descriptor["m"]), max_size=max_size)
            return tabulated_basis(s, descriptor["members"])
        except (KeyError, TypeError, ValueError) as e:
            raise BadInputError(f"invalid basis descriptor {descriptor!r}: {e}")


def basis_dim(s: int, m: int) -> int:
    """Number of s-variate monomials of total degree at most m, C(s+m, s)"""
    if s < 1 or m < 0:
        raise BadInputError(f"need s >= 1 and m >= 0, got s={s}, m={m}")
    dim = int(comb(s + m, s, exact=True))
    if dim > INDEX_LIMIT:
        raise BasisSizeError(f"basis dimension C({s + m}, {s}) overflows 64-bit indexing")
    return dim


def _compositions(total: int, parts: int) -> Iterator[Tuple[int, ...]]:
    # descending lex: the leading exponent runs from total down to 0
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def graded_lex(s: int, m: int) -> Iterator[MultiIndex]:
    """Multi-indices of degree <= m, degree-major, x_1 dominant within a degree"""
    for degree in range(m + 1):
        for exps in _compositions(degree, s):
            yield MultiIndex(exps)


def enumerate_monomials(s: int, m: int,
                        max_size: int = DEFAULT_MAX_BASIS_SIZE) -> TestFunctionBasis:
    """All monomials of total degree <= m in s variables, constant first"""
    d = basis_dim(s, m)
    if d > max_size:
        raise BasisSizeError(f"basis size {d} for s={s}, m={m} exceeds the cap {max_size}")
    members = tuple(graded_lex(s, m))
    return TestFunctionBasis(input_dim=s, kind=BasisKind.MONOMIAL, max_degree=m, members=members)


def monomial_basis(exponents: Sequence[Sequence[int]]) -> TestFunctionBasis:
    """A monomial basis from an explicit exponent list (constant first)"""
    members = tuple(MultiIndex(tuple(e)) for e in exponents)
    if not members:
        raise BadInputError("empty exponent list")
    dims = {mi.dim for mi in members}
    if len(dims) != 1:
        raise DimensionMismatchError("exponent vectors of different lengths")
    return TestFunctionBasis(input_dim=dims.pop(), kind=BasisKind.MONOMIAL, members=members)


def tabulated_basis(s: int, names: Sequence[str]) -> TestFunctionBasis:
    return TestFunctionBasis(input_dim=s, kind=BasisKind.TABULATED, names=tuple(str(n) for n in names))


def _power_table(points: np.ndarray, max_exponent: int) -> np.ndarray:
    # table[j, i, k] = points[j, i] ** k
    ks = np.arange(max_exponent + 1)
    return np.power(points[:, :, None], ks[None, None, :])


def evaluate_basis_batch(basis: TestFunctionBasis, points: np.ndarray) -> np.ndarray:
    """
    Lift a batch of points: returns the d x N matrix whose column j is phi(points[j]).
    Component 1 is exactly 1 for every point.
    """
    if basis.kind != BasisKind.MONOMIAL:
        raise BadInputError("tabulated test functions cannot be evaluated at new points")
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points.reshape(1, -1)
    if points.ndim != 2 or points.shape[1] != basis.input_dim:
        raise DimensionMismatchError(
            f"points of dimension {points.shape[-1]} for a basis on R^{basis.input_dim}")

    exps = basis.exponents
    table = _power_table(points, int(exps.max()) if exps.size else 0)
    lifted = np.ones((points.shape[0], basis.size))
    for i in range(basis.input_dim):
        lifted *= table[:, i, exps[:, i]]
    lifted[:, 0] = 1.0
    return lifted.T.copy()


def evaluate_basis(basis: TestFunctionBasis, point: Sequence[float]) -> np.ndarray:
    """phi(point) as a length-d vector"""
    point = np.asarray(point, dtype=float)
    if point.ndim != 1 or point.shape[0] != basis.input_dim:
        raise DimensionMismatchError(
            f"point of shape {point.shape} for a basis on R^{basis.input_dim}")
    return evaluate_basis_batch(basis, point.reshape(1, -1))[:, 0]


def load_tabulated(path: str, s: int) -> Tuple[np.ndarray, TestFunctionBasis, np.ndarray]:
    """
    Read tabulated test functions. Each data line holds the s node coordinates
    followed by the d test-function values at that node; the first value column
    must be the constant 1. An optional `#names: f1,f2,...` line names the members.

    Returns (points N x s, basis, lifted d x N).
    """
    names: Optional[List[str]] = None
    rows: List[List[float]] = []
    width: Optional[int] = None
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            for lineno, record in enumerate(csv.reader(f), start=1):
                if not record or not "".join(record).strip():
                    continue
                head = record[0].strip()
                if head.startswith("#"):
                    if head.lower().startswith("#names:"):
                        names = [head.split(":", 1)[1].strip()] + [r.strip() for r in record[1:]]
                    continue
                try:
                    values = [float(cell) for cell in record]
                except ValueError:
                    raise SampleFileError(path, f"non-numeric cell in {record!r}", lineno)
                if width is None:
                    width = len(values)
                    if width <= s:
                        raise SampleFileError(path, f"expected {s} coordinates plus values", lineno)
                elif len(values) != width:
                    raise SampleFileError(path, f"expected {width} columns, got {len(values)}", lineno)
                if values[s] != 1.0:
                    raise SampleFileError(path, "the first test function must be the constant 1", lineno)
                rows.append(values)
    except OSError as e:
        raise SampleFileError(path, f"cannot read file: {e}")

    if not rows:
        raise SampleFileError(path, "no data lines")
    data = np.array(rows)
    d = data.shape[1] - s
    if names is None:
        names = ["1"] + [f"f{i}" for i in range(2, d + 1)]
    if len(names) != d:
        raise SampleFileError(path, f"{len(names)} names for {d} test functions")
    return data[:, :s].copy(), tabulated_basis(s, names), data[:, s:].T.copy()
