"""Key-value experiment configuration.

The format is one ``key = value`` pair per line; ``#`` starts a comment.
Values are parsed with the type of the corresponding default, and lists
are comma separated. Unknown keys and malformed values raise
:class:`~ineqlab.errors.ConfigParse`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields, replace
from importlib import resources
from pathlib import Path

from .errors import ConfigParse

__all__ = ["Config", "load_config", "parse_config", "default_config_text"]


@dataclass(frozen=True)
class Config:
    """Inputs of every suite. Sample counts are multiplied by ``--samples``."""

    # Sobolev/HLS grid and system
    n: int = 1
    alpha: float = 0.25
    N: int = 4096
    L: float = 80.0
    alphas: tuple[float, ...] = (0.2, 0.25, 0.4)
    S_override: float = 0.0
    kappa_BE: float = 0.1
    r: float = 0.5
    lam: float = 0.25
    bubbles: int = 20
    sobolev_samples: int = 10000
    hls_samples: int = 10000
    transfer_samples: int = 1000
    local_samples: int = 12
    riesz_samples: int = 5
    # L^p geometry
    lp_N: int = 256
    lp_pairs: int = 10000
    gradcon_pairs: int = 1000
    gradcon_R: float = 2.0
    p_small: tuple[float, ...] = (1.1, 1.25, 1.5, 1.75, 2.0)
    p_large: tuple[float, ...] = (2.5, 3.0, 4.0, 6.0)
    p_gradcon: tuple[float, ...] = (1.25, 1.5, 3.0, 4.0)
    # duality
    duality_knots: int = 401
    young_samples: int = 10000
    deficit_samples: int = 1000
    # fast diffusion
    flow_n: int = 3
    flow_mass: float = 1.0
    flow_R: float = 80.0
    flow_M: int = 2048
    flow_t_end: float = 5.0
    flow_samples: int = 100
    flow_cfl: float = 0.5

    def canonical(self) -> str:
        """Sorted JSON of all fields, the input of :meth:`digest`."""
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        """Deterministic hash of the canonicalised configuration."""
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def scaled(self, mult: float) -> "Config":
        """Copy with every sample count multiplied by ``mult`` (rounded)."""
        keys = (
            "bubbles", "sobolev_samples", "hls_samples", "transfer_samples",
            "local_samples", "riesz_samples", "lp_pairs", "gradcon_pairs",
            "young_samples", "deficit_samples",
        )
        return replace(self, **{k: int(round(getattr(self, k) * mult)) for k in keys})


_TYPES = {f.name: f.type for f in fields(Config)}


def _convert(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind.startswith("tuple"):
            return tuple(float(x) for x in raw.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigParse(f"bad value for {key!r}: {raw!r}") from exc
    raise ConfigParse(f"unsupported type for {key!r}")


def parse_config(text: str) -> Config:
    """Parse configuration text; keys not given keep their defaults."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParse(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigParse(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigParse(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw)
    return Config(**values)


def load_config(path: str | Path | None) -> Config:
    """Read a configuration file, or the shipped default when ``path`` is None."""
    if path is None:
        return parse_config(default_config_text())
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigParse(f"cannot read {path}: {exc}") from exc
    return parse_config(text)


def default_config_text() -> str:
    """Contents of the configuration file shipped with the package."""
    return resources.files("ineqlab").joinpath("default.cfg").read_text()
