"""Run configuration and CSV/JSON persistence.

Configs are TOML with flat model keys::

    model = "hawkes"
    mu = 0.05
    sigma1 = 0.2
    kappa = 1.0
    theta = 0.5
    eta = 0.5
    lambda0 = 0.5
    T = 2.0
    nu_atoms = [[1.0, 1.0]]
    jump = { kind = "const", value = 0.3 }

    [grid]
    n_steps = 128

    [rng]
    seed = 7

Optional tables: ``[run]`` (paths, inner, n_ef, workers), ``[price]``
(payoff, strike, discount, monitoring), ``[first_passage]`` (b, e lists) and
``[constants]`` (alpha1 for Cox).
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .model import (CoxParams, HawkesParams, JumpSpec, SimGrid, make_spec, validate_cox,
                    validate_hawkes, validate_jumps)


class ConfigError(ValueError):
    pass


COX_KEYS = ("mu", "sigma1", "kappa", "theta", "sigma2", "lambda0")
HAWKES_KEYS = ("mu", "sigma1", "kappa", "theta", "eta", "lambda0")


@dataclass
class RunConfig:
    model: str
    params: CoxParams | HawkesParams
    spec: JumpSpec
    grid: SimGrid
    seed: int
    paths: int = 1000
    inner: int = 256
    n_ef: int | None = None
    workers: int = 1
    options: dict[str, Any] = field(default_factory=dict)
    raw: dict[str, Any] = field(default_factory=dict)

    @property
    def sha256(self) -> str:
        return config_hash(self.raw)

    def section(self, name: str) -> dict[str, Any]:
        return dict(self.raw.get(name, {}))


def config_hash(raw: dict) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _num(d: dict, key: str, default=None) -> float:
    if key not in d:
        if default is None:
            raise ConfigError(f"missing key {key!r}")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key!r} must be a number")
    return float(v)


def parse_config(raw: dict) -> RunConfig:
    """Build and validate a :class:`RunConfig` from a parsed TOML mapping."""
    raw = copy.deepcopy(raw)
    model = raw.get("model")
    if model not in ("cox", "hawkes"):
        raise ConfigError("model must be 'cox' or 'hawkes'")
    keys = COX_KEYS if model == "cox" else HAWKES_KEYS
    vals = {k: _num(raw, k) for k in keys}
    vals["s0"] = _num(raw, "s0", 1.0)
    vals["T"] = _num(raw, "T", 1.0)
    params = CoxParams(**vals) if model == "cox" else HawkesParams(**vals)
    (validate_cox if model == "cox" else validate_hawkes)(params)

    atoms = raw.get("nu_atoms", [] if model == "cox" else [[1.0, 1.0]])
    if not isinstance(atoms, list) or any(not isinstance(a, list) or len(a) != 2 for a in atoms):
        raise ConfigError("nu_atoms must be a list of [z, w] pairs")
    jump = raw.get("jump", {"kind": "const", "value": 0.0})
    if not isinstance(jump, dict):
        raise ConfigError("jump must be a table {kind, value}")
    spec = make_spec(atoms, str(jump.get("kind", "const")), _num(jump, "value"))
    validate_jumps(spec, model)

    grid_t = raw.get("grid", {})
    n_steps = int(_num(grid_t, "n_steps", 256))
    if n_steps < 1:
        raise ConfigError("grid.n_steps must be >= 1")
    seed = int(_num(raw.get("rng", {}), "seed", 0))
    if seed < 0:
        raise ConfigError("rng.seed must be >= 0")
    run = raw.get("run", {})
    # worker count changes scheduling only, so it stays out of the hashed echo
    workers = int(_num(run, "workers", 1))
    if workers < 1:
        raise ConfigError("run.workers must be >= 1")
    run.pop("workers", None)
    n_ef = run.get("n_ef")
    return RunConfig(model, params, spec, SimGrid(params.T, n_steps), seed,
                     paths=int(_num(run, "paths", 1000)), inner=int(_num(run, "inner", 256)),
                     n_ef=None if n_ef is None else int(n_ef), workers=workers,
                     options={k: v for k, v in raw.items() if isinstance(v, dict)}, raw=raw)


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Read a TOML config; ``overrides`` are dotted keys (``"run.paths"``) applied before validation."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        *head, last = dotted.split(".")
        d = raw
        for h in head:
            d = d.setdefault(h, {})
        d[last] = value
    return parse_config(raw)


# ---------------------------------------------------------------------------
# Writers


def fmt(v) -> str:
    """Shortest round-trip text for numbers, so outputs are byte-stable."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, np.integer):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence], config_sha: str | None = None) -> Path:
    """CRLF-terminated CSV with a mandatory header; an optional leading ``# config_sha256=`` line."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="") as fh:
        if config_sha:
            fh.write(f"# config_sha256={config_sha}\r\n")
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return p


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def _jsonable(v):
    if hasattr(v, "item"):
        return v.item()
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_json(path: str | Path, payload: dict, config: RunConfig | None = None) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    body = _jsonable(dict(payload))
    if config is not None:
        body["config_sha256"] = config.sha256
        body["config"] = config.raw
    p.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return p
