"""
Cubature Builder - Sampler
Reproducible i.i.d. sample batches. Every stream is a Philox counter-based
generator keyed by (seed, stream_id), so independent trials can run in any
order or in parallel and any stream can be extended without changing its prefix.
"""

import csv
import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import BadInputError, DimensionMismatchError, SampleFileError

StreamId = Union[int, Tuple[int, ...]]

logger = logging.getLogger(__name__)


class Distribution(str, Enum):
    UNIFORM_CUBE = "uniform"
    GAUSSIAN = "gaussian"
    FILE = "file"


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """N x s matrix of i.i.d. points and where they came from"""
    points: np.ndarray
    source: Distribution
    seed: Optional[int] = None
    stream_id: Optional[StreamId] = None
    path: Optional[str] = None

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim != 2:
            raise DimensionMismatchError(f"sample batch must be N x s, got shape {points.shape}")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.N


def _spawn_key(stream_id: StreamId) -> Tuple[int, ...]:
    key = (stream_id,) if isinstance(stream_id, (int, np.integer)) else tuple(stream_id)
    key = tuple(int(k) for k in key)
    if any(k < 0 for k in key):
        raise BadInputError(f"stream ids must be non-negative, got {stream_id!r}")
    return key


def draw_seed() -> int:
    """A fresh 64-bit seed from system entropy (recorded in manifests by the caller)"""
    return int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0])


class SampleStream:
    """
    A resumable stream of points. Drawing n and then m more points yields the
    same rows as drawing n + m at once.
    """

    def __init__(self, distribution: Distribution, dim: int, seed: int, stream_id: StreamId = 0):
        if dim < 1:
            raise BadInputError("sample dimension must be positive")
        if distribution not in (Distribution.UNIFORM_CUBE, Distribution.GAUSSIAN):
            raise BadInputError(f"cannot open a stream for {distribution}")
        if int(seed) < 0:
            raise BadInputError(f"seeds must be non-negative, got {seed}")
        self.distribution = Distribution(distribution)
        self.dim = dim
        self.seed = int(seed)
        self.stream_id = stream_id
        seed_seq = np.random.SeedSequence(entropy=self.seed, spawn_key=_spawn_key(stream_id))
        self.bit_generator = np.random.Philox(seed_seq)
        self.generator = np.random.Generator(self.bit_generator)
        self.drawn = 0

    def draw(self, n: int) -> np.ndarray:
        if n < 0:
            raise BadInputError("cannot draw a negative number of points")
        if self.distribution == Distribution.UNIFORM_CUBE:
            # 53-bit mantissa doubles on [0, 1)
            points = self.generator.random((n, self.dim))
        else:
            points = self.generator.standard_normal((n, self.dim))
        self.drawn += n
        return points

    def batch(self, n: int) -> SampleBatch:
        return SampleBatch(self.draw(n), self.distribution, seed=self.seed, stream_id=self.stream_id)


@dataclass(frozen=True)
class SamplerSpec:
    """Which built-in distribution to draw from, and in what dimension"""
    distribution: Distribution
    dim: int

    def open_stream(self, seed: int, stream_id: StreamId = 0) -> SampleStream:
        return SampleStream(self.distribution, self.dim, seed, stream_id)


def sample_uniform_cube(s: int, n: int, seed: int, stream_id: StreamId = 0) -> SampleBatch:
    if n < 1:
        raise BadInputError("need at least one sample")
    return SampleStream(Distribution.UNIFORM_CUBE, s, seed, stream_id).batch(n)


def sample_gaussian(s: int, n: int, seed: int, stream_id: StreamId = 0) -> SampleBatch:
    if n < 1:
        raise BadInputError("need at least one sample")
    return SampleStream(Distribution.GAUSSIAN, s, seed, stream_id).batch(n)


def load_samples(path: str, s: int) -> SampleBatch:
    """CSV with one point per line, s comma-separated decimals; '#' lines are skipped"""
    rows: List[List[float]] = []
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            for lineno, record in enumerate(csv.reader(f), start=1):
                if not record or not "".join(record).strip():
                    continue
                if record[0].lstrip().startswith("#"):
                    continue
                if len(record) != s:
                    raise SampleFileError(path, f"expected {s} values, got {len(record)}", lineno)
                try:
                    rows.append([float(cell) for cell in record])
                except ValueError:
                    raise SampleFileError(path, f"non-numeric cell in {record!r}", lineno)
    except OSError as e:
        raise SampleFileError(path, f"cannot read sample file: {e}")

    if not rows:
        raise SampleFileError(path, "no samples")
    points = np.array(rows)
    if not np.all(np.isfinite(points)):
        raise SampleFileError(path, "samples contain NaN or Inf")
    logger.info("loaded %d samples of dimension %d from %s", len(rows), s, path)
    return SampleBatch(points, Distribution.FILE, path=str(path))


def save_samples(path: str, points: Sequence[Sequence[float]]) -> None:
    points = np.asarray(points, dtype=float)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        for row in points:
            writer.writerow([f"{x:.17g}" for x in row])
