"""
Cubature Builder - Experiment Manager
Estimates, per (s, m), the smallest sample size N for which the uniform-cube
moment vector lies in the convex hull of N lifted samples with probability at
least 1/2 (binary search with repeated trials), and runs the Monte Carlo error
study of compressed empirical measures.
"""

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from basis import basis_dim, enumerate_monomials, evaluate_basis_batch
from cubature import compress_empirical
from errors import BadInputError
from lp_solver import LpInstance, LpStatus, SolverOptions, check_membership
from moments import analytic_moment_vector
from sampler import sample_uniform_cube

# stream-key tags keep probe trials and error-study runs on disjoint streams
PROBE_STREAM = 0
MC_STREAM = 1

logger = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    trials: int = 20
    success_threshold: int = 10
    search_lo: Optional[int] = None  # defaults to d_{s,m}
    search_hi: int = 10_000
    master_seed: int = 0
    jobs: int = 1
    max_dim: int = 10
    max_degree: int = 10
    lp_tolerance: float = 1e-9
    lp_time_limit: Optional[float] = 10.0

    def __post_init__(self):
        if self.trials < 1:
            raise BadInputError("need at least one trial per probe")
        if not 1 <= self.success_threshold <= self.trials:
            raise BadInputError("success threshold must lie in [1, trials]")
        if self.jobs < 1:
            raise BadInputError("jobs must be at least 1")

    def solver_options(self) -> SolverOptions:
        return SolverOptions(tol=self.lp_tolerance, time_limit=self.lp_time_limit)


@dataclass
class ProbeRecord:
    n: int
    successes: int
    unstable: int
    trial_streams: List[List[int]]

    def to_dict(self) -> Dict[str, Any]:
        return {"n": self.n, "successes": self.successes, "unstable": self.unstable,
                "trial_streams": self.trial_streams}


@dataclass
class ExperimentRecord:
    s: int
    m: int
    d: int
    trials: int
    success_threshold: int
    search_lo: int
    search_hi: int
    master_seed: int
    estimated_N: Optional[int] = None
    exceeds_search_hi: bool = False
    probes: List[ProbeRecord] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def ratio(self) -> Optional[float]:
        if self.estimated_N is None:
            return None
        return self.estimated_N / self.d

    def cell(self) -> str:
        """Table cell 'A (B)': estimated N and d"""
        if self.error is not None:
            return f"error ({self.d})"
        if self.exceeds_search_hi:
            return f">{self.search_hi} ({self.d})"
        return f"{self.estimated_N} ({self.d})"

    def to_dict(self) -> Dict[str, Any]:
        record = {k: v for k, v in asdict(self).items() if k != "probes"}
        record["probes"] = [p.to_dict() for p in self.probes]
        return record

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def run_trial(s: int, m: int, n: int, master_seed: int, stream_key: Tuple[int, ...],
              options: SolverOptions) -> LpStatus:
    """One membership test on a fresh n-sample against the analytic moments"""
    basis = enumerate_monomials(s, m)
    target = analytic_moment_vector(basis)
    points = sample_uniform_cube(s, n, master_seed, stream_key).points
    instance = LpInstance(evaluate_basis_batch(basis, points), target.values, tol=options.tol)
    return check_membership(instance, options).status


def _run_trial_args(args) -> LpStatus:
    return run_trial(*args)


def probe(s: int, m: int, n: int, trials: int, seeds: Sequence[Tuple[int, Tuple[int, ...]]],
          options: Optional[SolverOptions] = None, jobs: int = 1) -> Tuple[int, int]:
    """
    Success count over `trials` independent n-samples; seeds[i] is the
    (master_seed, stream_key) pair of trial i. Unstable LP runs count as
    failures. Returns (successes, unstable).
    """
    if n < 1:
        raise BadInputError("probe size must be at least 1")
    if len(seeds) != trials:
        raise BadInputError(f"{len(seeds)} seeds for {trials} trials")
    options = options or SolverOptions()
    args = [(s, m, n, seed, key, options) for seed, key in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            statuses = list(pool.map(_run_trial_args, args))
    else:
        statuses = [_run_trial_args(a) for a in args]
    successes = sum(1 for st in statuses if st == LpStatus.FEASIBLE)
    unstable = sum(1 for st in statuses if st == LpStatus.NUMERICALLY_UNSTABLE)
    if unstable:
        logger.warning("(s=%d, m=%d, n=%d): %d unstable LP run(s) counted as failures", s, m, n, unstable)
    return successes, unstable


class ExperimentManager:
    """
    Runs the sample-size estimation over a grid of (s, m) cells. Probes are
    sequential (the search is adaptive); trials inside a probe run on
    `config.jobs` worker processes.
    """

    def __init__(self, config: Optional[ExperimentConfig] = None):
        self.config = config or ExperimentConfig()

    def _check_cell(self, s: int, m: int):
        if not (1 <= s <= self.config.max_dim and 1 <= m <= self.config.max_degree):
            raise BadInputError(f"cell ({s}, {m}) outside the configured grid "
                                f"[1, {self.config.max_dim}] x [1, {self.config.max_degree}]")

    def trial_seeds(self, s: int, m: int, probe_index: int) -> List[Tuple[int, Tuple[int, ...]]]:
        seed = self.config.master_seed
        return [(seed, (PROBE_STREAM, s, m, probe_index, i)) for i in range(self.config.trials)]

    def probe(self, s: int, m: int, n: int, probe_index: int) -> ProbeRecord:
        seeds = self.trial_seeds(s, m, probe_index)
        started = time.perf_counter()
        successes, unstable = probe(s, m, n, self.config.trials, seeds,
                                    self.config.solver_options(), jobs=self.config.jobs)
        elapsed = time.perf_counter() - started
        logger.info("(s=%d, m=%d) probe %d at n=%d: %d/%d successes in %.2fs",
                    s, m, probe_index, n, successes, self.config.trials, elapsed)
        return ProbeRecord(n=n, successes=successes, unstable=unstable,
                           trial_streams=[list(key) for _, key in seeds])

    def estimate_N(self, s: int, m: int) -> ExperimentRecord:
        """
        Binary search on [search_lo, search_hi]. search_hi is probed first; from
        then on the upper end always met the threshold, and the search returns it.
        """
        self._check_cell(s, m)
        cfg = self.config
        d = basis_dim(s, m)
        lo = cfg.search_lo if cfg.search_lo is not None else d
        hi = cfg.search_hi
        if lo > hi:
            raise BadInputError(f"empty search range [{lo}, {hi}]")
        record = ExperimentRecord(s=s, m=m, d=d, trials=cfg.trials,
                                  success_threshold=cfg.success_threshold,
                                  search_lo=lo, search_hi=hi, master_seed=cfg.master_seed)

        def passes(n: int) -> bool:
            result = self.probe(s, m, n, len(record.probes))
            record.probes.append(result)
            return result.successes >= cfg.success_threshold

        if not passes(hi):
            record.exceeds_search_hi = True
            record.estimated_N = hi
            logger.warning("(s=%d, m=%d): estimate exceeds the search ceiling %d", s, m, hi)
            return record
        while lo < hi:
            mid = (lo + hi) // 2
            if passes(mid):
                hi = mid
            else:
                lo = mid + 1
        record.estimated_N = hi
        return record

    def run_table(self, grid: Iterable[Tuple[int, int]]) -> List[ExperimentRecord]:
        """estimate_N per cell; failures are recorded on the cell, the table still completes"""
        records = []
        for s, m in sorted(set(grid)):
            try:
                records.append(self.estimate_N(s, m))
            except Exception as e:
                logger.error("cell (%d, %d) failed: %s", s, m, e)
                d = basis_dim(s, m) if s >= 1 and m >= 0 else 0
                records.append(ExperimentRecord(
                    s=s, m=m, d=d, trials=self.config.trials,
                    success_threshold=self.config.success_threshold,
                    search_lo=self.config.search_lo or d, search_hi=self.config.search_hi,
                    master_seed=self.config.master_seed, error=str(e)))
        return records


def render_table(records: Sequence[ExperimentRecord]) -> str:
    """Grid with rows s and columns m; each cell reads 'estimated N (d)'"""
    dims = sorted({r.s for r in records})
    degrees = sorted({r.m for r in records})
    cells = {(r.s, r.m): r.cell() for r in records}
    width = max([len(c) for c in cells.values()] + [5])
    header = "s \\ m | " + " | ".join(str(m).rjust(width) for m in degrees)
    lines = [header, "-" * len(header)]
    for s in dims:
        row = [cells.get((s, m), "").rjust(width) for m in degrees]
        lines.append(f"{str(s).rjust(5)} | " + " | ".join(row))
    return "\n".join(lines)


def records_to_csv(records: Sequence[ExperimentRecord]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["s", "m", "d", "estimated_N", "ratio", "exceeds_search_hi", "probes", "error"])
    for r in records:
        ratio = "" if r.ratio is None else f"{r.ratio:.4g}"
        writer.writerow([r.s, r.m, r.d, "" if r.estimated_N is None else r.estimated_N, ratio,
                         int(r.exceeds_search_hi), len(r.probes), r.error or ""])
    return buffer.getvalue()


def save_records(path: str, records: Sequence[ExperimentRecord]) -> None:
    """One JSON record per (s, m) cell per line"""
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(r.to_json() + "\n")


def load_records(path: str) -> List[Dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


@dataclass
class ErrorStudyRow:
    N: int
    rmse: np.ndarray
    mean_error: np.ndarray
    standard_error: np.ndarray
    aggregate_rmse: float
    max_z: float
    max_nodes: int

    @property
    def unbiased(self) -> bool:
        return self.max_z <= 5.0


@dataclass
class ErrorStudy:
    s: int
    m: int
    reps: int
    seed: int
    rows: List[ErrorStudyRow]

    def ratios(self) -> List[float]:
        """aggregate RMSE of each size over the previous one"""
        return [b.aggregate_rmse / a.aggregate_rmse for a, b in zip(self.rows, self.rows[1:])]

    def render(self) -> str:
        lines = [f"Monte Carlo error of compressed empirical measures (s={self.s}, m={self.m}, "
                 f"reps={self.reps}, seed={self.seed})",
                 f"{'N':>8} | {'RMSE':>11} | {'ratio':>6} | {'max |z|':>7} | {'nodes':>5}"]
        previous = None
        for row in self.rows:
            ratio = "" if previous is None else f"{row.aggregate_rmse / previous:.3f}"
            lines.append(f"{row.N:>8} | {row.aggregate_rmse:>11.4e} | {ratio:>6} | "
                         f"{row.max_z:>7.2f} | {row.max_nodes:>5}")
            previous = row.aggregate_rmse
        return "\n".join(lines)


def mc_error_study(s: int, m: int, N_list: Sequence[int], reps: int, seed: int,
                   tol: float = 1e-9) -> ErrorStudy:
    """
    RMSE per basis component of compressed empirical measures against the
    analytic uniform-cube moments, for each sample size in N_list.
    """
    if reps < 30:
        raise BadInputError("the error study needs at least 30 repetitions")
    if not N_list or min(N_list) < 1:
        raise BadInputError("sample sizes must be positive")
    basis = enumerate_monomials(s, m)
    exact = analytic_moment_vector(basis).values
    rows = []
    for N in N_list:
        errors = np.empty((reps, basis.size))
        max_nodes = 0
        for r in range(reps):
            samples = sample_uniform_cube(s, N, seed, (MC_STREAM, N, r))
            cub = compress_empirical(samples, basis, tol=tol)
            errors[r] = cub.moments(basis) - exact
            max_nodes = max(max_nodes, cub.n)
        rmse = np.sqrt(np.mean(errors ** 2, axis=0))
        mean_error = errors.mean(axis=0)
        standard_error = stats.sem(errors, axis=0)
        nonconstant = standard_error[1:] > 0
        z = np.abs(mean_error[1:][nonconstant]) / standard_error[1:][nonconstant]
        rows.append(ErrorStudyRow(
            N=N, rmse=rmse, mean_error=mean_error, standard_error=standard_error,
            aggregate_rmse=float(np.sqrt(np.mean(rmse[1:] ** 2))) if basis.size > 1 else 0.0,
            max_z=float(z.max()) if z.size else 0.0, max_nodes=max_nodes))
        logger.info("error study N=%d: aggregate RMSE %.4e", N, rows[-1].aggregate_rmse)
    return ErrorStudy(s=s, m=m, reps=reps, seed=seed, rows=rows)
