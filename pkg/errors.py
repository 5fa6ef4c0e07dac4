"""
Cubature Builder - Errors
Exception hierarchy shared by the library, the CLI and the web service.
Each error carries the process exit code the CLI reports for it.
"""

from typing import Optional


EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_BAD_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_POOL_EXHAUSTED = 4
EXIT_UNSTABLE = 5
EXIT_SIZE_LIMIT = 6


class CubatureError(Exception):
    """Base class for every error raised by this project"""
    exit_code = EXIT_BAD_INPUT


class BadInputError(CubatureError):
    """Malformed arguments or input files"""
    exit_code = EXIT_BAD_INPUT


class DimensionMismatchError(BadInputError):
    """Vectors, matrices or bases whose sizes do not agree"""


class FileFormatError(BadInputError):
    """A text file that cannot be parsed; reports the offending line"""

    def __init__(self, path: str, message: str, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")


class SampleFileError(FileFormatError):
    pass


class MomentFileError(FileFormatError):
    pass


class CubatureFileError(FileFormatError):
    pass


class SizeLimitError(CubatureError):
    """A requested basis, pool or product grid exceeds its configured cap"""
    exit_code = EXIT_SIZE_LIMIT


class BasisSizeError(SizeLimitError):
    pass


class InfeasibleError(CubatureError):
    """The target moment vector lies outside the convex hull of the lifted points"""
    exit_code = EXIT_INFEASIBLE


class PoolExhaustedError(CubatureError):
    """The candidate pool reached its cap without capturing the target"""
    exit_code = EXIT_POOL_EXHAUSTED

    def __init__(self, pool_size: int, message: str = ""):
        self.pool_size = pool_size
        super().__init__(message or f"target not captured by {pool_size} samples")


class NumericalInstabilityError(CubatureError):
    """The simplex solver hit its degeneracy floor, iteration cap or time budget"""
    exit_code = EXIT_UNSTABLE

    def __init__(self, message: str, pool_size: Optional[int] = None):
        self.pool_size = pool_size
        if pool_size is not None:
            message = f"{message} (pool size {pool_size})"
        super().__init__(message)
