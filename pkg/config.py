"""
Cubature Builder - Configuration
Runtime settings read from the environment, key-value config files and the
reproducibility manifests every CLI run writes next to its outputs.
"""

import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from typing import Any, Dict, Mapping, Optional

from errors import BadInputError, FileFormatError

ENV_PREFIX = "CUBATURE_"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

logger = logging.getLogger(__name__)


@dataclass
class Settings:
    """Tunable defaults shared by the solver, the constructions and the CLI"""
    lp_tolerance: float = 1e-9
    pivot_floor: float = 1e-11
    prune_threshold: float = 1e-12
    degenerate_switch_factor: int = 10
    iteration_factor: int = 50
    max_pool: int = 1_000_000
    max_basis_size: int = 100_000
    max_product_nodes: int = 1_000_000
    lp_time_limit: Optional[float] = None
    log_level: str = "WARNING"

    @classmethod
    def from_env(cls, environ: Optional[Mapping[str, str]] = None) -> "Settings":
        """Build settings from CUBATURE_* environment variables"""
        environ = os.environ if environ is None else environ
        values: Dict[str, Any] = {}
        for f in fields(cls):
            raw = environ.get(ENV_PREFIX + f.name.upper())
            if raw is None or raw == "":
                continue
            try:
                values[f.name] = _coerce(f.name, parse_value(raw), f.default)
            except (TypeError, ValueError):
                raise BadInputError(f"{ENV_PREFIX}{f.name.upper()}: invalid value {raw!r}")
        return cls(**values)


def _coerce(name: str, value: Any, default: Any) -> Any:
    if value is None:
        return None
    if isinstance(default, bool):
        return bool(value)
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float) or (default is None and name.endswith("limit")):
        return float(value)
    return str(value)


def parse_value(raw: str) -> Any:
    """JSON literal when possible (numbers, true/false, null, lists), else the raw string"""
    raw = raw.strip()
    try:
        return json.loads(raw)
    except ValueError:
        return raw


def load_config_file(path: str) -> Dict[str, Any]:
    """
    Read a `key = value` file. Blank lines and `#` comments are ignored,
    dashes in keys are normalized to underscores.
    """
    values: Dict[str, Any] = {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise FileFormatError(path, f"cannot read config file: {e}")

    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise FileFormatError(path, "expected 'key = value'", lineno)
        key, raw = stripped.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise FileFormatError(path, "empty key", lineno)
        values[key] = parse_value(raw)
    return values


def write_manifest(path: str, command: str, values: Mapping[str, Any]) -> None:
    """Write the fully resolved run parameters in the config file format"""
    lines = [f"# resolved parameters for '{command}'", f"command = {json.dumps(command)}"]
    for key in sorted(values):
        lines.append(f"{key} = {json.dumps(values[key])}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    logger.info("wrote manifest %s", path)


def setup_logging(level: str = "WARNING") -> None:
    """Install a single stderr handler; safe to call more than once"""
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_cubature_handler", False):
            root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._cubature_handler = True
    root.addHandler(handler)
    root.setLevel(getattr(logging, str(level).upper(), logging.WARNING))
