#!/usr/bin/env python3
"""
🧮 Cubature Service
JSON endpoints over the cubature library: construct, compress, verify and
integrate. Every response carries `success`; failures add `error` and come back
with HTTP 400 (bad input) or 422 (no cubature could be produced).
"""

import logging
import os
from typing import Any, Dict

import numpy as np
from flask import Flask, jsonify, request

from basis import TestFunctionBasis, enumerate_monomials
from config import Settings, setup_logging
from cubature import (
    ConstructionConfig,
    compress_empirical,
    compress_weighted,
    construct_exact,
    integrate,
    verify,
)
from cubature_io import cubature_from_dict, cubature_to_dict
from errors import BadInputError, CubatureError
from moments import MomentSource, MomentVector, analytic_moment_vector
from sampler import Distribution, SamplerSpec, draw_seed

settings = Settings.from_env()
logger = logging.getLogger(__name__)

app = Flask(__name__)


def _payload() -> Dict[str, Any]:
    data = request.get_json(silent=True)
    if not isinstance(data, dict):
        raise BadInputError("expected a JSON object body")
    return data


def _int(data: Dict[str, Any], key: str, default: Any = None) -> int:
    value = data.get(key, default)
    if value is None:
        raise BadInputError(f"missing '{key}'")
    if isinstance(value, bool) or not isinstance(value, int):
        raise BadInputError(f"'{key}' must be an integer")
    return value


def _basis(data: Dict[str, Any]) -> TestFunctionBasis:
    return enumerate_monomials(_int(data, "dim"), _int(data, "degree"), max_size=settings.max_basis_size)


def _target(data: Dict[str, Any], basis: TestFunctionBasis) -> MomentVector:
    if data.get("moments") is None:
        return analytic_moment_vector(basis)
    values = np.asarray(data["moments"], dtype=float)
    if values.shape != (basis.size,):
        raise BadInputError(f"{values.size} moments for a basis of size {basis.size}")
    return MomentVector(values, MomentSource.USER_SUPPLIED)


def _tol(data: Dict[str, Any]) -> float:
    tol = float(data.get("tol", settings.lp_tolerance))
    if not tol > 0:
        raise BadInputError("'tol' must be positive")
    return tol


@app.errorhandler(CubatureError)
def handle_cubature_error(error: CubatureError):
    status = 400 if isinstance(error, BadInputError) else 422
    logger.warning("%s: %s", type(error).__name__, error)
    return jsonify({"success": False, "error": str(error), "exit_code": error.exit_code}), status


@app.errorhandler(ValueError)
def handle_value_error(error: ValueError):
    return jsonify({"success": False, "error": f"invalid value: {error}"}), 400


@app.route("/health")
def health():
    """Health check"""
    return jsonify({
        "status": "healthy",
        "service": "cubature",
        "settings": {
            "lp_tolerance": settings.lp_tolerance,
            "max_pool": settings.max_pool,
            "max_basis_size": settings.max_basis_size,
        },
    })


@app.route("/construct", methods=["POST"])
def construct():
    data = _payload()
    basis = _basis(data)
    measure = Distribution(data.get("measure", Distribution.UNIFORM_CUBE.value))
    if measure == Distribution.FILE:
        raise BadInputError("the service samples built-in measures only")
    if measure != Distribution.UNIFORM_CUBE and data.get("moments") is None:
        raise BadInputError(f"no analytic moments for the {measure.value} measure; send 'moments'")
    target = _target(data, basis)
    seed = data.get("seed")
    seed = draw_seed() if seed is None else _int(data, "seed")
    tol = _tol(data)

    config = ConstructionConfig(
        max_pool=min(_int(data, "max_pool", settings.max_pool), settings.max_pool),
        lp_tolerance=tol,
        seed=seed,
        stream_id=_int(data, "stream_id", 0),
        perturb_retries=_int(data, "perturb_retries", 0),
    )
    cub = construct_exact(SamplerSpec(measure, basis.input_dim), basis, target, config)
    logger.info("construct (s=%d, m=%d): %d nodes from %d samples",
                basis.input_dim, basis.max_degree, cub.n, cub.provenance.pool_size)
    return jsonify({"success": True, "seed": seed, "cubature": cubature_to_dict(cub, tolerance=tol)})


@app.route("/compress", methods=["POST"])
def compress():
    data = _payload()
    basis = _basis(data)
    if data.get("points") is None:
        raise BadInputError("missing 'points'")
    points = np.asarray(data["points"], dtype=float)
    if points.ndim == 1 and basis.input_dim == 1:
        points = points.reshape(-1, 1)
    if points.ndim != 2 or points.shape[0] == 0:
        raise BadInputError("'points' must be a non-empty list of points")
    tol = _tol(data)
    if data.get("weights") is not None:
        cub = compress_weighted(points, data["weights"], basis, tol=tol)
    else:
        cub = compress_empirical(points, basis, tol=tol)
    return jsonify({"success": True, "sample_count": points.shape[0],
                    "cubature": cubature_to_dict(cub, tolerance=tol)})


@app.route("/verify", methods=["POST"])
def verify_cubature():
    data = _payload()
    if not isinstance(data.get("cubature"), dict):
        raise BadInputError("missing 'cubature' object")
    cub = cubature_from_dict(data["cubature"], validate=False, max_basis_size=settings.max_basis_size)
    if data.get("degree") is not None:
        basis = enumerate_monomials(_int(data, "dim", cub.s), _int(data, "degree"),
                                    max_size=settings.max_basis_size)
    elif cub.basis is not None:
        basis = cub.basis
    else:
        raise BadInputError("the cubature names no basis; send 'dim' and 'degree'")
    if data.get("moments") is None and cub.target is not None and len(cub.target) == basis.size:
        target = cub.target
    else:
        target = _target(data, basis)
    report = verify(cub, basis, target, tol=_tol(data))
    return jsonify({"success": True, "passed": report.passed, "report": report.to_dict()})


@app.route("/integrate", methods=["POST"])
def integrate_cubature():
    data = _payload()
    if not isinstance(data.get("cubature"), dict):
        raise BadInputError("missing 'cubature' object")
    cub = cubature_from_dict(data["cubature"], max_basis_size=settings.max_basis_size)
    if data.get("values") is not None:
        values = data["values"]
    elif data.get("monomial") is not None:
        exponents = np.asarray(data["monomial"], dtype=int)
        if exponents.shape != (cub.s,) or np.any(exponents < 0):
            raise BadInputError(f"'monomial' needs {cub.s} non-negative exponents")
        values = np.prod(cub.nodes ** exponents, axis=1)
    else:
        raise BadInputError("send 'values' or 'monomial'")
    return jsonify({"success": True, "value": integrate(cub, values)})


if __name__ == "__main__":
    setup_logging(settings.log_level)
    port = int(os.environ.get("PORT", 8080))
    print(f"🚀 Starting cubature service on port {port}")
    app.run(host="0.0.0.0", port=port)
