"""Driver configuration and ``key = value`` config files."""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from ..eqwm import Method
from ..errors import ConfigurationError

OUTPUT_DIR_ENV = "WALLMODELS_OUTPUT_DIR"


class Model(enum.Enum):
    FV = "fv"
    GQ_LINEAR = "gq-linear"
    GQ_CLUSTERED = "gq-clustered"
    IWM = "iwm"
    IWM_LEGACY = "iwm-legacy"

    @property
    def method(self) -> Method | None:
        """Equilibrium solver behind this model, if any."""
        try:
            return Method(self.value)
        except ValueError:
            return None

    @property
    def is_iwm(self) -> bool:
        return self in (Model.IWM, Model.IWM_LEGACY)


@dataclass(frozen=True)
class DriverConfig:
    model: Model = Model.GQ_CLUSTERED
    re_tau: float = 1000.0
    h_wm_over_delta: float = 0.1
    n: int | None = None  # points or cells; None picks the optimal count
    dt: float = 5e-3
    steps: int = 20000
    dpdx: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if not 0.0 < self.h_wm_over_delta < 1.0:
            raise ConfigurationError("h_wm_over_delta must lie in (0, 1)")
        if self.steps < 0:
            raise ConfigurationError("steps must be non-negative")
        if not self.re_tau > 0:
            raise ConfigurationError("re_tau must be positive")
        if self.n is not None and self.n < 1:
            raise ConfigurationError("n must be positive")
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")

    def with_overrides(self, **kw) -> "DriverConfig":
        known = {f.name for f in fields(self)}
        bad = set(kw) - known
        if bad:
            raise ConfigurationError(f"unknown config keys: {sorted(bad)}")
        return replace(self, **kw)


def _coerce(text: str):
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", ""):
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment.  Dashes in keys become underscores."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"{path}:{lineno}: empty key")
        out[key.replace("-", "_")] = _coerce(value)
    return out


def output_dir() -> Path:
    """Directory for CSV outputs: ``$WALLMODELS_OUTPUT_DIR`` or the working directory."""
    d = Path(os.environ.get(OUTPUT_DIR_ENV, "."))
    d.mkdir(parents=True, exist_ok=True)
    return d
