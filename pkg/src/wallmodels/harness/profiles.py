"""Reference mean-velocity profiles: reading, writing and sampling."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ProfileDataError, ProfileParseError, RangeError

MIN_SAMPLES = 10


class ProfileFormat(enum.Enum):
    Y_PLUS_U_PLUS = "yplus"
    Y_OVER_DELTA_U_PLUS = "ydelta"


@dataclass(frozen=True, eq=False)
class ReferenceProfile:
    """Mean profile in inner units.  ``ordinate`` is y+ or y/delta per ``fmt``."""

    source: str
    re_tau: float
    ordinate: np.ndarray
    u_plus: np.ndarray
    fmt: ProfileFormat = ProfileFormat.Y_PLUS_U_PLUS

    def __post_init__(self):
        y = np.array(self.ordinate, dtype=float)
        u = np.array(self.u_plus, dtype=float)
        if y.shape != u.shape or y.ndim != 1:
            raise ProfileDataError("ordinate and u_plus must be 1-D arrays of equal length")
        if y.size < MIN_SAMPLES:
            raise ProfileDataError(f"need at least {MIN_SAMPLES} samples, got {y.size}")
        if np.any(np.diff(y) <= 0):
            raise ProfileDataError("ordinate must be strictly increasing")
        if np.any(u < 0):
            raise ProfileDataError("u_plus must be non-negative")
        y.flags.writeable = False
        u.flags.writeable = False
        object.__setattr__(self, "ordinate", y)
        object.__setattr__(self, "u_plus", u)

    def y_over_delta(self) -> np.ndarray:
        if self.fmt is ProfileFormat.Y_OVER_DELTA_U_PLUS:
            return self.ordinate
        return self.ordinate / self.re_tau

    def u_plus_at(self, y_over_delta) -> np.ndarray:
        """Piecewise-linear u+ at heights given in outer units."""
        q = np.atleast_1d(np.asarray(y_over_delta, dtype=float))
        y = self.y_over_delta()
        # tolerate round-off at the ends
        lo, hi = y[0] * (1 - 1e-12), y[-1] * (1 + 1e-12)
        if np.any(q < lo) or np.any(q > hi):
            raise RangeError(f"query outside sampled range [{y[0]:g}, {y[-1]:g}] (y/delta)")
        return np.interp(q, y, self.u_plus)


def reichardt_u_plus(y_plus, kappa: float = 0.41, c: float = 7.8):
    """Reichardt's smooth inner-layer profile, used as a synthetic channel reference."""
    yp = np.asarray(y_plus, dtype=float)
    return np.log1p(kappa * yp) / kappa + c * (1.0 - np.exp(-yp / 11.0) - yp / 11.0 * np.exp(-yp / 3.0))


def synthetic_reichardt(re_tau: float, n: int = 200, y_plus_min: float = 0.1) -> ReferenceProfile:
    """Geometrically spaced Reichardt samples from ``y_plus_min`` up to y+ = Re_tau."""
    yp = np.geomspace(y_plus_min, re_tau, n)
    return ReferenceProfile(f"reichardt(re_tau={re_tau:g})", re_tau, yp, reichardt_u_plus(yp))


def write_profile(profile: ReferenceProfile, path) -> None:
    """Two whitespace-separated columns with a ``#`` header carrying Re_tau."""
    lines = [f"# {profile.source}", f"# re_tau = {profile.re_tau!r}"]
    lines += [f"{y!r} {u!r}" for y, u in zip(profile.ordinate.tolist(), profile.u_plus.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def ingest_profile(path, fmt=ProfileFormat.Y_PLUS_U_PLUS, re_tau: float | None = None) -> ReferenceProfile:
    """Read a two-column whitespace or comma separated profile file.

    Lines starting with ``#`` are comments; ``# re_tau = <value>`` sets
    Re_tau unless given explicitly.  Extra columns are ignored.

    Raises
    ------
    ProfileParseError
        Empty file or a malformed row (the message carries the line number).
    ProfileDataError
        Too few samples, non-monotone ordinate or negative u+.
    """
    fmt = ProfileFormat(fmt)
    path = Path(path)
    ys, us = [], []
    header_re = None
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip().lower().replace(" ", "")
            if body.startswith("re_tau="):
                try:
                    header_re = float(body.split("=", 1)[1])
                except ValueError as exc:
                    raise ProfileParseError(f"bad re_tau header {raw!r}", lineno) from exc
            continue
        parts = line.replace(",", " ").split()
        if len(parts) < 2:
            raise ProfileParseError(f"expected two columns, got {raw!r}", lineno)
        try:
            y, u = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise ProfileParseError(f"non-numeric value in {raw!r}", lineno) from exc
        if not (math.isfinite(y) and math.isfinite(u)):
            raise ProfileParseError(f"non-finite value in {raw!r}", lineno)
        ys.append(y)
        us.append(u)
    if not ys:
        raise ProfileParseError(f"{path} contains no samples")
    re = re_tau if re_tau is not None else header_re
    if re is None:
        raise ProfileParseError(f"{path}: Re_tau not given and no '# re_tau =' header")
    return ReferenceProfile(str(path), float(re), np.array(ys), np.array(us), fmt)


def sample_matching_velocity(profile: ReferenceProfile, h_wm_over_delta: float, re_tau: float | None = None) -> float:
    """u+ at the matching height by linear interpolation in the ordinate.

    ``re_tau`` defaults to the profile's own value; a different value
    rescales y+ profiles before sampling.
    """
    if not 0.0 < h_wm_over_delta < 1.0:
        raise RangeError("h_wm_over_delta must lie in (0, 1)")
    if re_tau is None or profile.fmt is ProfileFormat.Y_OVER_DELTA_U_PLUS:
        return float(profile.u_plus_at(h_wm_over_delta)[0])
    y_plus = h_wm_over_delta * re_tau
    y = profile.ordinate
    if not y[0] * (1 - 1e-12) <= y_plus <= y[-1] * (1 + 1e-12):
        raise RangeError(f"y+ = {y_plus:g} outside sampled range [{y[0]:g}, {y[-1]:g}]")
    return float(np.interp(y_plus, y, profile.u_plus))
