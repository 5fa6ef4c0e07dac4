"""
Cubature Builder - Cubature Files
Text format for cubature formulas: a `key = <json>` header followed by a
`[nodes]` section with one `x_1,...,x_s,w` record per node. Numbers are written
with 17 significant digits so binary64 values survive a round trip bit for bit.
"""

import json
import logging
from typing import Any, Dict, List, Optional

import numpy as np

from basis import TestFunctionBasis
from cubature import Cubature, Provenance, ProvenanceKind
from errors import BadInputError, CubatureFileError
from moments import MomentSource, MomentVector

FORMAT_VERSION = 1
NODES_MARKER = "[nodes]"
HEADER_KEYS = ("format_version", "s", "d", "n", "basis", "provenance", "residual",
               "tolerance", "target", "target_source")

logger = logging.getLogger(__name__)


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def cubature_to_dict(cub: Cubature, tolerance: Optional[float] = None) -> Dict[str, Any]:
    """JSON-ready representation shared by the file writer and the web service"""
    return {
        "format_version": FORMAT_VERSION,
        "s": cub.s,
        "d": cub.basis.size if cub.basis is not None else None,
        "n": cub.n,
        "basis": cub.basis.to_descriptor() if cub.basis is not None else None,
        "provenance": cub.provenance.to_dict(),
        "residual": cub.residual,
        "tolerance": tolerance,
        "target": [float(v) for v in cub.target.values] if cub.target is not None else None,
        "target_source": cub.target.provenance() if cub.target is not None else None,
        "nodes": [[float(x) for x in row] for row in cub.nodes],
        "weights": [float(w) for w in cub.weights],
    }


def cubature_from_dict(record: Dict[str, Any], validate: bool = True,
                       max_basis_size: int = 100_000) -> Cubature:
    try:
        version = record.get("format_version", FORMAT_VERSION)
        if version != FORMAT_VERSION:
            raise BadInputError(f"unsupported format version {version!r}")
        basis = None
        if record.get("basis") is not None:
            basis = TestFunctionBasis.from_descriptor(record["basis"], max_size=max_basis_size)
            if record.get("d") is not None and int(record["d"]) != basis.size:
                raise BadInputError(f"header d = {record['d']} but the basis has {basis.size} members")
        target = None
        if record.get("target") is not None:
            source = (record.get("target_source") or {}).get("source", MomentSource.USER_SUPPLIED.value)
            extra = record.get("target_source") or {}
            target = MomentVector(np.array(record["target"], dtype=float), MomentSource(source),
                                  sample_count=extra.get("N"), seed=extra.get("seed"))
        provenance = Provenance.from_dict(record.get("provenance") or {"kind": ProvenanceKind.SUBSAMPLED.value})
        nodes = np.array(record["nodes"], dtype=float)
        s = int(record.get("s", nodes.shape[1] if nodes.ndim == 2 else 1))
        nodes = nodes.reshape(-1, s)
        cub = Cubature(nodes=nodes, weights=np.array(record["weights"], dtype=float), basis=basis,
                       target=target, residual=record.get("residual"), provenance=provenance)
    except (KeyError, TypeError, ValueError) as e:
        raise BadInputError(f"malformed cubature record: {e}")

    if validate:
        problems = cub.check_invariants(tol=record.get("tolerance"))
        if problems:
            raise BadInputError("invalid cubature: " + "; ".join(problems))
    return cub


def write_cubature(path: str, cub: Cubature, tolerance: Optional[float] = None) -> None:
    record = cubature_to_dict(cub, tolerance=tolerance)
    lines = ["# cubature formula: header, then one 'x_1,...,x_s,w' line per node"]
    for key in HEADER_KEYS:
        value = record[key]
        if key == "target" and value is not None:
            text = "[" + ", ".join(fmt(v) for v in value) + "]"
        elif key in ("residual", "tolerance") and value is not None:
            text = fmt(value)
        else:
            text = json.dumps(value, sort_keys=True)
        lines.append(f"{key} = {text}")
    lines.append(NODES_MARKER)
    for row, w in zip(cub.nodes, cub.weights):
        lines.append(",".join(fmt(x) for x in row) + "," + fmt(w))
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    logger.info("wrote %d-node cubature to %s", cub.n, path)


def read_cubature(path: str, validate: bool = True, max_basis_size: int = 100_000) -> Cubature:
    """Parse a cubature file; with validate=True every invariant is checked on load"""
    header: Dict[str, Any] = {}
    rows: List[List[float]] = []
    in_nodes = False
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise CubatureFileError(path, f"cannot read cubature file: {e}")

    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if not in_nodes:
            if text == NODES_MARKER:
                in_nodes = True
                continue
            if "=" not in text:
                raise CubatureFileError(path, "expected 'key = value' in header", lineno)
            key, raw = (part.strip() for part in text.split("=", 1))
            try:
                header[key] = json.loads(raw)
            except ValueError:
                raise CubatureFileError(path, f"invalid value for {key!r}", lineno)
            continue
        try:
            rows.append([float(cell) for cell in text.split(",")])
        except ValueError:
            raise CubatureFileError(path, "non-numeric node record", lineno)
        expected = header.get("s", 1) + 1
        if len(rows[-1]) != expected:
            raise CubatureFileError(path, f"expected {expected} values per node, got {len(rows[-1])}", lineno)

    if not in_nodes:
        raise CubatureFileError(path, f"missing {NODES_MARKER} section")
    if not rows:
        raise CubatureFileError(path, "no nodes")
    if header.get("n") is not None and header["n"] != len(rows):
        raise CubatureFileError(path, f"header n = {header['n']} but {len(rows)} nodes follow")

    data = np.array(rows)
    record = dict(header)
    record["nodes"] = data[:, :-1]
    record["weights"] = data[:, -1]
    try:
        return cubature_from_dict(record, validate=validate, max_basis_size=max_basis_size)
    except BadInputError as e:
        raise CubatureFileError(path, str(e))
