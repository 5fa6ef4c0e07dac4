#!/usr/bin/env python3
"""
Cubature Builder - Command Line
Subcommands: construct, compress, verify, experiment, product, integrate, serve.

Parameters resolve as built-in defaults < CUBATURE_* environment variables <
`--config` file < command-line flags. Every run that writes an output also
writes `<output>.manifest` with the fully resolved parameters; passing that
manifest back through `--config` reproduces the output byte for byte.

Exit codes: 0 ok, 1 verification failed, 2 bad input, 3 infeasible,
4 pool exhausted, 5 numerically unstable, 6 size limit.
"""

import argparse
import logging
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from basis import TestFunctionBasis, enumerate_monomials, load_tabulated
from config import Settings, load_config_file, setup_logging, write_manifest
from cubature import (
    ConstructionConfig,
    Cubature,
    compress_empirical,
    compress_weighted,
    construct_exact,
    integrate,
    product_cubature,
    reduce_cubature,
    verify,
)
from cubature_io import fmt, read_cubature, write_cubature
from errors import EXIT_OK, EXIT_VERIFY_FAILED, BadInputError, CubatureError, FileFormatError
from experiment_manager import (
    ExperimentConfig,
    ExperimentManager,
    mc_error_study,
    records_to_csv,
    render_table,
    save_records,
)
from lp_solver import SolverOptions
from moments import analytic_moment_vector, empirical_moments_from_lift, load_moment_vector
from sampler import Distribution, SamplerSpec, draw_seed, load_samples, sample_gaussian, sample_uniform_cube

# argparse bookkeeping, never persisted to manifests
NOT_PERSISTED = ("func", "config", "command")
# relative, for matching cubature nodes to table rows
NODE_MATCH_TOLERANCE = 1e-12

logger = logging.getLogger(__name__)


def _require(args: argparse.Namespace, *names: str):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) is None]
    if missing:
        raise BadInputError(f"{args.command}: missing required option(s) {', '.join(missing)}")


def _ensure_seed(args: argparse.Namespace):
    if args.seed is None:
        args.seed = draw_seed()
        logger.info("no --seed given; drew %d from system entropy", args.seed)


def _manifest(args: argparse.Namespace, output: str):
    values = {k: v for k, v in vars(args).items() if k not in NOT_PERSISTED}
    write_manifest(output + ".manifest", args.command, values)


def _solver_options(args: argparse.Namespace, settings: Settings) -> SolverOptions:
    return SolverOptions.from_settings(settings, tol=args.tol)


def _read_values(path: str) -> np.ndarray:
    """One decimal per line; '#' starts a comment"""
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
                    raise FileFormatError(path, f"not a number: {text!r}", lineno)
    except OSError as e:
        raise FileFormatError(path, f"cannot read file: {e}")
    return np.array(values)


def _int_list(text: Any, what: str) -> List[int]:
    try:
        return [int(part) for part in str(text).split(",") if part.strip()]
    except ValueError:
        raise BadInputError(f"{what}: expected comma-separated integers, got {text!r}")


def _axis(text: str) -> List[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        try:
            return list(range(int(lo), int(hi) + 1))
        except ValueError:
            raise BadInputError(f"bad range {text!r}")
    return _int_list(text, "grid axis")


def parse_grid(text: str) -> List[Tuple[int, int]]:
    """'1..3x1..3' or '1,2x2..4' -> (s, m) cells"""
    if "x" not in str(text):
        raise BadInputError(f"grid must look like '1..3x1..3', got {text!r}")
    dims, degrees = str(text).split("x", 1)
    cells = [(s, m) for s in _axis(dims) for m in _axis(degrees)]
    if not cells:
        raise BadInputError(f"empty grid {text!r}")
    return cells


def cmd_construct(args: argparse.Namespace, settings: Settings) -> int:
    _require(args, "dim", "degree")
    _ensure_seed(args)
    basis = enumerate_monomials(args.dim, args.degree, max_size=settings.max_basis_size)
    measure = Distribution(args.measure)
    if args.moments is not None:
        target = load_moment_vector(args.moments, basis)
    elif measure == Distribution.UNIFORM_CUBE:
        target = analytic_moment_vector(basis)
    else:
        raise BadInputError(f"no analytic moments for the {measure.value} measure; pass --moments")

    config = ConstructionConfig(
        initial_pool=args.initial_pool,
        growth_factor=args.growth_factor,
        max_pool=args.max_pool,
        lp_tolerance=args.tol,
        seed=args.seed,
        stream_id=args.stream_id,
        perturb_retries=args.perturb_retries,
        solver=_solver_options(args, settings),
    )
    cub = construct_exact(SamplerSpec(measure, args.dim), basis, target, config)
    write_cubature(args.output, cub, tolerance=args.tol)
    _manifest(args, args.output)
    print(f"✅ {cub.n} nodes (d = {basis.size}), N_used = {cub.provenance.pool_size}, "
          f"residual = {cub.residual:.3e}")
    print(f"wrote {args.output}")
    return EXIT_OK


def cmd_compress(args: argparse.Namespace, settings: Settings) -> int:
    options = _solver_options(args, settings)
    if args.tabulated is not None:
        _require(args, "dim")
        points, basis, lifted = load_tabulated(args.tabulated, args.dim)
        cub = compress_empirical(points, basis, tol=args.tol, lifted=lifted, options=options)
        sample_count = points.shape[0]
    else:
        _require(args, "dim", "degree")
        basis = enumerate_monomials(args.dim, args.degree, max_size=settings.max_basis_size)
        if args.samples is not None:
            samples = load_samples(args.samples, args.dim)
        else:
            _require(args, "n")
            _ensure_seed(args)
            draw = sample_uniform_cube if args.measure == Distribution.UNIFORM_CUBE.value else sample_gaussian
            samples = draw(args.dim, args.n, args.seed, args.stream_id)
        sample_count = samples.N
        if args.weights is not None:
            weights = _read_values(args.weights)
            cub = compress_weighted(samples.points, weights, basis, tol=args.tol, options=options)
        else:
            cub = compress_empirical(samples, basis, tol=args.tol, options=options)

    write_cubature(args.output, cub, tolerance=args.tol)
    _manifest(args, args.output)
    print(f"✅ compressed {sample_count} samples to {cub.n} nodes (d = {basis.size})")
    print(f"max |empirical - compressed| moment difference: {cub.residual:.3e}")
    print(f"wrote {args.output}")
    return EXIT_OK


def _tabulated_node_values(path: str, cub: Cubature) -> Tuple[TestFunctionBasis, np.ndarray, np.ndarray]:
    """Tabulated basis and its d x n values at the cubature's nodes, matched by coordinates"""
    points, basis, lifted = load_tabulated(path, cub.s)
    columns = []
    for node in cub.nodes:
        close = np.all(np.abs(points - node) <= NODE_MATCH_TOLERANCE * np.maximum(1.0, np.abs(node)), axis=1)
        hits = np.flatnonzero(close)
        if hits.size == 0:
            raise BadInputError(f"{path}: no row for node {[float(x) for x in node]}")
        columns.append(int(hits[0]))
    return basis, lifted, lifted[:, columns]


def cmd_verify(args: argparse.Namespace, settings: Settings) -> int:
    _require(args, "cubature")
    # invariants are checked by the report, not on load
    cub = read_cubature(args.cubature, validate=False, max_basis_size=settings.max_basis_size)
    node_values = None
    if args.tabulated is not None:
        basis, table, node_values = _tabulated_node_values(args.tabulated, cub)
        if cub.basis is not None and cub.basis.size != basis.size:
            raise BadInputError(f"{args.tabulated} has {basis.size} test functions, "
                                f"the cubature was built for {cub.basis.size}")
    elif args.dim is not None or args.degree is not None:
        _require(args, "degree")
        basis = enumerate_monomials(args.dim if args.dim is not None else cub.s, args.degree,
                                    max_size=settings.max_basis_size)
    elif cub.basis is not None:
        basis = cub.basis
    else:
        raise BadInputError("the cubature file names no basis; pass --dim and --degree")
    if basis.input_dim != cub.s:
        raise BadInputError(f"basis on R^{basis.input_dim} for nodes in R^{cub.s}")

    if args.moments is not None:
        target = load_moment_vector(args.moments, basis)
    elif args.tabulated is not None and (cub.target is None or len(cub.target) != basis.size):
        target = empirical_moments_from_lift(table)
    elif args.analytic or cub.target is None or len(cub.target) != basis.size:
        target = analytic_moment_vector(basis)
    else:
        target = cub.target

    report = verify(cub, basis, target, tol=args.tol, lifted=node_values)
    print(report.render())
    if report.passed:
        return EXIT_OK
    logger.error("verification failed for %s", args.cubature)
    return EXIT_VERIFY_FAILED


def cmd_experiment(args: argparse.Namespace, settings: Settings) -> int:
    if args.seed is None:
        args.seed = draw_seed()

    if args.mc_error:
        _require(args, "dim", "degree")
        study = mc_error_study(args.dim, args.degree, _int_list(args.n_list, "--n-list"),
                               args.reps, args.seed, tol=args.tol)
        text = study.render()
        with open(args.output, "w", encoding="utf-8") as f:
            f.write(text + "\n")
        _manifest(args, args.output)
        print(text)
        return EXIT_OK

    if args.cell is not None:
        cell = _int_list(args.cell, "--cell")
        if len(cell) != 2:
            raise BadInputError(f"--cell expects 's,m', got {args.cell!r}")
        grid = [(cell[0], cell[1])]
    elif args.grid is not None:
        grid = parse_grid(args.grid)
    else:
        raise BadInputError("experiment: pass --grid, --cell or --mc-error")

    config = ExperimentConfig(
        trials=args.trials,
        success_threshold=args.threshold,
        search_lo=args.search_lo,
        search_hi=args.search_hi,
        master_seed=args.seed,
        jobs=args.jobs,
        lp_tolerance=args.tol,
        lp_time_limit=args.lp_time_limit,
    )
    records = ExperimentManager(config).run_table(grid)
    save_records(args.output, records)
    if args.csv is not None:
        with open(args.csv, "w", encoding="utf-8") as f:
            f.write(records_to_csv(records))
    _manifest(args, args.output)
    print(render_table(records))
    for record in records:
        if record.error is not None:
            print(f"❌ cell ({record.s}, {record.m}): {record.error}", file=sys.stderr)
    return EXIT_OK


def cmd_product(args: argparse.Namespace, settings: Settings) -> int:
    _require(args, "cubature")
    base = read_cubature(args.cubature, max_basis_size=settings.max_basis_size)
    cub = product_cubature(base, args.k, max_nodes=args.max_nodes)
    if args.reduce:
        _require(args, "degree")
        basis = enumerate_monomials(cub.s, args.degree, max_size=settings.max_basis_size)
        full = cub.n
        cub = reduce_cubature(cub, basis, tol=args.tol, options=_solver_options(args, settings))
        print(f"reduced {full} product nodes to {cub.n} (d = {basis.size})")
    write_cubature(args.output, cub, tolerance=args.tol if args.reduce else None)
    _manifest(args, args.output)
    print(f"✅ {args.k}-fold product: {cub.n} nodes in R^{cub.s}")
    print(f"wrote {args.output}")
    return EXIT_OK


def cmd_integrate(args: argparse.Namespace, settings: Settings) -> int:
    _require(args, "cubature")
    cub = read_cubature(args.cubature, max_basis_size=settings.max_basis_size)
    if args.values is not None and args.monomial is not None:
        raise BadInputError("pass either --values or --monomial, not both")
    if args.values is not None:
        values = _read_values(args.values)
    elif args.monomial is not None:
        exponents = _int_list(args.monomial, "--monomial")
        if len(exponents) != cub.s or min(exponents) < 0:
            raise BadInputError(f"--monomial needs {cub.s} non-negative exponents")
        values = np.prod(cub.nodes ** np.array(exponents), axis=1)
    else:
        raise BadInputError("integrate: pass --values or --monomial")
    print(fmt(integrate(cub, values)))
    return EXIT_OK


def cmd_serve(args: argparse.Namespace, settings: Settings) -> int:
    from web_app import app

    print(f"🚀 Starting cubature service on {args.host}:{args.port}")
    app.run(host=args.host, port=args.port)
    return EXIT_OK


def build_parser(settings: Settings) -> Tuple[argparse.ArgumentParser, Dict[str, argparse.ArgumentParser]]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; flags override it")
    common.add_argument("--log-level", default=settings.log_level)
    common.add_argument("--tol", type=float, default=settings.lp_tolerance,
                        help="LP feasibility tolerance (relative to max(1, |b|_inf))")

    parser = argparse.ArgumentParser(prog="cubature", description="Cubature construction by random sampling")
    sub = parser.add_subparsers(dest="command", required=True)
    commands: Dict[str, argparse.ArgumentParser] = {}

    def add(name: str, func: Callable, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        commands[name] = p
        return p

    p = add("construct", cmd_construct, "build a cubature from i.i.d. samples and known moments")
    p.add_argument("--dim", type=int)
    p.add_argument("--degree", type=int)
    p.add_argument("--measure", choices=[Distribution.UNIFORM_CUBE.value, Distribution.GAUSSIAN.value],
                   default=Distribution.UNIFORM_CUBE.value)
    p.add_argument("--moments", help="moment file; analytic uniform-cube moments when omitted")
    p.add_argument("--seed", type=int)
    p.add_argument("--stream-id", type=int, default=0)
    p.add_argument("--initial-pool", type=int)
    p.add_argument("--growth-factor", type=float, default=2.0)
    p.add_argument("--max-pool", type=int, default=settings.max_pool)
    p.add_argument("--perturb-retries", type=int, default=0)
    p.add_argument("-o", "--output", default="cubature.txt")

    p = add("compress", cmd_compress, "compress an empirical or weighted measure to at most d nodes")
    p.add_argument("--dim", type=int)
    p.add_argument("--degree", type=int)
    p.add_argument("--samples", help="CSV of sample points")
    p.add_argument("--weights", help="positive weights, one per sample, summing to 1")
    p.add_argument("--tabulated", help="CSV of node coordinates followed by test-function values")
    p.add_argument("--measure", choices=[Distribution.UNIFORM_CUBE.value, Distribution.GAUSSIAN.value],
                   default=Distribution.UNIFORM_CUBE.value)
    p.add_argument("--n", type=int, help="number of samples to draw when no file is given")
    p.add_argument("--seed", type=int)
    p.add_argument("--stream-id", type=int, default=0)
    p.add_argument("-o", "--output", default="compressed.txt")

    p = add("verify", cmd_verify, "check a cubature file against a basis and target moments")
    p.add_argument("cubature", nargs="?")
    p.add_argument("--dim", type=int)
    p.add_argument("--degree", type=int)
    p.add_argument("--moments", help="moment file to verify against")
    p.add_argument("--analytic", action="store_true", help="verify against uniform-cube moments")
    p.add_argument("--tabulated", help="CSV of test-function values the cubature was compressed from")

    p = add("experiment", cmd_experiment, "estimate sample sizes or run the Monte Carlo error study")
    p.add_argument("--grid", help="cells as '1..3x1..3'")
    p.add_argument("--cell", help="single cell as 's,m'")
    p.add_argument("--mc-error", action="store_true")
    p.add_argument("--dim", type=int)
    p.add_argument("--degree", type=int)
    p.add_argument("--n-list", default="250,1000")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--threshold", type=int, default=10)
    p.add_argument("--search-lo", type=int)
    p.add_argument("--search-hi", type=int, default=10_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--lp-time-limit", type=float,
                   default=settings.lp_time_limit if settings.lp_time_limit is not None else 10.0)
    p.add_argument("--csv", help="also write the table as CSV")
    p.add_argument("-o", "--output", default="experiment.jsonl")

    p = add("product", cmd_product, "k-fold product of a cubature, optionally reduced")
    p.add_argument("cubature", nargs="?")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--reduce", action="store_true")
    p.add_argument("--degree", type=int, help="degree of the product-space basis used by --reduce")
    p.add_argument("--max-nodes", type=int, default=settings.max_product_nodes)
    p.add_argument("-o", "--output", default="product.txt")

    p = add("integrate", cmd_integrate, "apply a cubature to function values")
    p.add_argument("cubature", nargs="?")
    p.add_argument("--values", help="f(x_j), one per node")
    p.add_argument("--monomial", help="exponents e1,...,es")

    p = add("serve", cmd_serve, "run the JSON web service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)

    return parser, commands


def _apply_config_file(argv: Sequence[str], commands: Dict[str, argparse.ArgumentParser]):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config is None or not argv or argv[0] not in commands:
        return
    command = commands[argv[0]]
    values = load_config_file(known.config)
    recorded = values.pop("command", argv[0])
    if recorded != argv[0]:
        raise BadInputError(f"{known.config} was written for '{recorded}', not '{argv[0]}'")
    allowed = {action.dest for action in command._actions}
    unknown = sorted(set(values) - allowed)
    if unknown:
        raise BadInputError(f"{known.config}: unknown option(s) {', '.join(unknown)}")
    command.set_defaults(**values)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        settings = Settings.from_env()
        parser, commands = build_parser(settings)
        _apply_config_file(argv, commands)
    except CubatureError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code

    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    try:
        return args.func(args, settings)
    except CubatureError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
