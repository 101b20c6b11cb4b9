"""Flat key=value run configuration with validated defaults.

A configuration document is plain text, one `key = value` per line,
with `#` comments and blank lines ignored.  Unknown keys are rejected
rather than ignored so that a typo cannot silently fall back to a
default.  `canonical_text` round-trips through `parse_config` and is
what gets hashed into every artifact.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .energy import DELTA_MAX

__all__ = ["RunConfig", "parse_config", "canonical_text", "config_hash"]

_MODES = ("simulate", "verify", "mms", "report")


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs: grid, solver, physics, and output layout."""

    # grid
    nx: int = 64
    ny: int = 257
    lx: float = 2.0 * np.pi
    ymax: float = 12.0
    stretch: float = 0.0
    # solver
    dt: float = 1e-3
    t_end: float = 100.0
    save_every: int = 100
    scheme: str = "imex2"
    y_order: int = 2
    # physics
    delta: float = 0.04
    epsilon: float = 1e-3
    seed: int = 0
    lambda_list: tuple = (0.0, 0.25, 0.5)
    # verification battery
    profile_count: int = 100
    defect: Optional[str] = None
    # orchestration and outputs
    mode: str = "simulate"
    outdir: str = "out"
    resume: Optional[str] = None

    def __post_init__(self):
        if self.nx < 1 or (self.nx & (self.nx - 1)) != 0:
            raise ValueError(f"nx must be a power of two, got {self.nx}")
        if not 0.0 < self.delta <= DELTA_MAX:
            if self.delta > DELTA_MAX:
                raise ValueError(f"delta exceeds 1/25, got {self.delta}")
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.epsilon < 0.0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.scheme not in ("imex1", "imex2"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.y_order not in (2, 4):
            raise ValueError("y_order must be 2 or 4")
        if self.dt <= 0.0 or self.t_end < 0.0:
            raise ValueError("dt must be positive and t_end non-negative")
        if self.save_every < 1:
            raise ValueError("save_every must be a positive integer")
        if self.profile_count < 1:
            raise ValueError("profile_count must be a positive integer")
        if self.defect not in (None, "flip_S2"):
            raise ValueError(f"unknown defect {self.defect!r}")
        for lam in self.lambda_list:
            if not 0.0 <= lam < 1.0:
                raise ValueError(
                    f"lambda_list entries must lie in [0, 1), got {lam}")

    # -- output layout ------------------------------------------------------

    @property
    def frames_csv(self) -> Path:
        return Path(self.outdir) / "frames.csv"

    @property
    def checkpoint_path(self) -> Path:
        return Path(self.outdir) / "checkpoint.bin"

    @property
    def summary_json(self) -> Path:
        return Path(self.outdir) / "summary.json"

    @property
    def verify_json(self) -> Path:
        return Path(self.outdir) / "verify.json"

    @property
    def mms_json(self) -> Path:
        return Path(self.outdir) / "mms.json"


def _convert(name: str, kind, raw: str):
    raw = raw.strip()
    if kind is Optional[str]:
        return None if raw.lower() in ("", "none") else raw
    if kind is tuple:
        return tuple(float(part) for part in raw.split(",") if part.strip())
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


_FIELD_TYPES = {
    "nx": int, "ny": int, "save_every": int, "seed": int, "profile_count": int,
    "lx": float, "ymax": float, "stretch": float, "dt": float, "t_end": float,
    "delta": float, "epsilon": float,
    "scheme": str, "mode": str, "outdir": str,
    "y_order": int,
    "lambda_list": tuple,
    "defect": Optional[str], "resume": Optional[str],
}


def parse_config(text: str, **overrides) -> RunConfig:
    """Parse a flat key=value document, then apply keyword overrides.

    Raises on unknown keys, malformed lines, and any RunConfig
    validation failure.
    """
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = body.split("=", 1)
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ValueError(f"unknown key {key!r}")
        values[key] = _convert(key, _FIELD_TYPES[key], raw)
    for key, val in overrides.items():
        if key not in _FIELD_TYPES:
            raise ValueError(f"unknown key {key!r}")
        values[key] = (_convert(key, _FIELD_TYPES[key], val)
                       if isinstance(val, str) else val)
    return RunConfig(**values)


def canonical_text(cfg: RunConfig) -> str:
    """Deterministic rendering: every key, sorted, repr-formatted values."""
    lines = []
    for f in sorted(dataclasses.fields(cfg), key=lambda f: f.name):
        val = getattr(cfg, f.name)
        if isinstance(val, tuple):
            rendered = ",".join(repr(v) for v in val)
        elif val is None:
            rendered = "none"
        else:
            rendered = repr(val) if isinstance(val, float) else str(val)
        lines.append(f"{f.name}={rendered}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    """Short content hash embedded in artifacts for provenance."""
    return hashlib.sha256(canonical_text(cfg).encode("ascii")).hexdigest()[:12]
