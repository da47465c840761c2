"""ODE equilibrium wall model: spectral (quadrature) and finite-volume solvers.

Both solvers return the friction velocity for a constant-stress layer
closed with the Van Driest mixing length.  The spectral route integrates
the closed-form velocity gradient with a GLL rule and shoots on u_tau;
the finite-volume route solves the diffusion ODE on a stretched
wall-normal grid with lagged eddy viscosity.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import (
    ConvergenceError,
    InvalidDomainError,
    InvalidGridError,
    RangeError,
    SaturationError,
)
from .quadrature import DomainMap, MapKind, build_gll_rule, map_to_physical

# Arithmetic per quadrature point / per FV cell sweep, counted from the
# kernels below (mul, add, div, exp and sqrt each count as one).
GQ_FLOPS_PER_POINT = 16
FV_FLOPS_PER_CELL = 26

POINT_CAP = 1024


@dataclass(frozen=True)
class ClosureConstants:
    kappa: float = 0.4
    a_plus: float = 26.0
    b_log: float = 5.0

    def __post_init__(self):
        if min(self.kappa, self.a_plus, self.b_log) <= 0:
            raise ValueError("closure constants must be positive")


DEFAULT_CONSTANTS = ClosureConstants()


@dataclass(frozen=True)
class WallModelInput:
    u_les: float
    h_wm: float
    nu: float
    rho: float = 1.0

    def __post_init__(self):
        if not self.u_les >= 0.0:
            raise InvalidDomainError(f"u_les must be a non-negative magnitude, got {self.u_les}")
        for name in ("h_wm", "nu", "rho"):
            if not getattr(self, name) > 0.0:
                raise InvalidDomainError(f"{name} must be positive")


class Method(enum.Enum):
    SPECTRAL_LINEAR = "gq-linear"
    SPECTRAL_CLUSTERED = "gq-clustered"
    FINITE_VOLUME = "fv"

    @property
    def map_kind(self) -> MapKind | None:
        return {
            Method.SPECTRAL_LINEAR: MapKind.LINEAR,
            Method.SPECTRAL_CLUSTERED: MapKind.CLUSTERED,
        }.get(self)

    @classmethod
    def for_map(cls, kind: MapKind) -> "Method":
        return cls.SPECTRAL_LINEAR if kind is MapKind.LINEAR else cls.SPECTRAL_CLUSTERED


@dataclass(frozen=True)
class EqwmSolution:
    """Converged equilibrium solve.

    ``n_points`` is Q for the spectral solver and the cell count for FV.
    ``iterations`` counts residual evaluations (spectral) or tridiagonal
    sweeps (FV).  ``profile`` holds the FV nodal profile ``(y, u)``
    including the wall and matching points; it is ``None`` for spectral
    solutions, whose profile is rebuilt by quadrature.
    """

    u_tau: float
    tau_w: float
    iterations: int
    residual: float
    method: Method
    n_points: int
    integrand_evals: int = 0
    cell_updates: int = 0
    profile: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def viscous_length(self, nu: float) -> float:
        return nu / self.u_tau if self.u_tau > 0 else math.inf

    @property
    def flops(self) -> int:
        return GQ_FLOPS_PER_POINT * self.integrand_evals + FV_FLOPS_PER_CELL * self.cell_updates


# --------------------------------------------------------------------------
# closure


def mixing_length_plus(y_plus, constants: ClosureConstants = DEFAULT_CONSTANTS):
    """Van Driest damped mixing length in wall units."""
    y_plus = np.asarray(y_plus, dtype=float)
    return constants.kappa * y_plus * -np.expm1(-y_plus / constants.a_plus)


def velocity_gradient_plus(y_plus, constants: ClosureConstants = DEFAULT_CONSTANTS):
    """Positive root of du+/dy+ + (l+ du+/dy+)^2 = 1."""
    lm = mixing_length_plus(y_plus, constants)
    return 2.0 / (1.0 + np.sqrt(1.0 + 4.0 * lm * lm))


def _integrand(y, u_tau, nu, constants):
    return (u_tau * u_tau / nu) * velocity_gradient_plus(y * (u_tau / nu), constants)


def log_law_u_tau(u_les: float, h_wm: float, nu: float, kappa: float = 0.4, b_log: float = 5.0) -> float:
    """Invert U/u_tau = ln(h u_tau / nu)/kappa + B, falling back to the linear law.

    Used only for seeding iterations.
    """
    if u_les <= 0.0:
        return 0.0
    u_lam = math.sqrt(nu * u_les / h_wm)
    if h_wm * u_lam / nu < 11.0:
        return u_lam
    lnh = math.log(h_wm / nu)
    ln_u = math.log(u_les)
    # Newton on s + ln g(s) = ln U with s = ln u_tau; concave, so no overshoot from the right
    s = ln_u - math.log(lnh / kappa + b_log)
    for _ in range(100):
        g = (s + lnh) / kappa + b_log
        if g <= 0.0:
            s = 0.5 * (s + ln_u)
            continue
        step = (s + math.log(g) - ln_u) / (1.0 + 1.0 / (kappa * g))
        s -= step
        if abs(step) < 1e-14:
            break
    return math.exp(s)


# --------------------------------------------------------------------------
# spectral solver


def solve_utau_spectral(
    inp: WallModelInput,
    rule,
    dmap: DomainMap,
    constants: ClosureConstants = DEFAULT_CONSTANTS,
    tol: float | None = None,
    max_iters: int = 50,
) -> EqwmSolution:
    """Shoot on u_tau so that the quadrature of du/dy over the layer equals U_LES.

    Secant iteration seeded with the algebraic log-law estimate and 1.1
    times it.  ``tol`` is an absolute velocity tolerance, defaulting to
    ``1e-8 * u_les``.
    """
    method = Method.for_map(dmap.kind)
    q = rule.order_q
    if inp.u_les == 0.0:
        return EqwmSolution(0.0, 0.0, 0, 0.0, method, q)
    if dmap.h_wm != inp.h_wm:
        dmap = DomainMap(dmap.kind, inp.h_wm)
    if tol is None:
        tol = 1e-8 * inp.u_les
    if not tol > 0:
        raise ValueError("tol must be positive")
    y, jw = map_to_physical(rule, dmap)
    nu = inp.nu
    evals = 0

    def residual(u_tau):
        nonlocal evals
        evals += 1
        return float(np.dot(jw, _integrand(y, u_tau, nu, constants))) - inp.u_les

    x0 = log_law_u_tau(inp.u_les, inp.h_wm, nu, constants.kappa, constants.b_log)
    x1 = 1.1 * x0
    f0, f1 = residual(x0), residual(x1)
    if abs(f0) <= tol and abs(f0) < abs(f1):
        x1, f1 = x0, f0
    while abs(f1) > tol:
        if evals >= max_iters:
            raise ConvergenceError(
                f"secant iteration for u_tau did not converge in {max_iters} evaluations",
                residual=abs(f1),
                iterations=evals,
            )
        if f1 == f0:
            raise ConvergenceError("secant iteration stalled", residual=abs(f1), iterations=evals)
        x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        if x2 <= 0.0:
            x2 = 0.5 * x1
        x0, f0 = x1, f1
        x1, f1 = x2, residual(x2)
    return EqwmSolution(
        u_tau=x1,
        tau_w=inp.rho * x1**2,
        iterations=evals,
        residual=abs(f1),
        method=method,
        n_points=q,
        integrand_evals=evals * q,
    )


# --------------------------------------------------------------------------
# finite-volume solver


@dataclass(frozen=True, eq=False)
class FvGrid:
    cell_faces: np.ndarray
    stretching: float

    def __post_init__(self):
        f = np.asarray(self.cell_faces, dtype=float)
        if f.ndim != 1 or f.size < 2:
            raise InvalidGridError("FV grid needs at least one cell")
        if f[0] != 0.0 or not np.all(np.diff(f) > 0):
            raise InvalidGridError("FV faces must start at the wall and increase strictly")
        object.__setattr__(self, "cell_faces", f)

    @property
    def n_cells(self) -> int:
        return self.cell_faces.size - 1

    @property
    def h_wm(self) -> float:
        return float(self.cell_faces[-1])

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.cell_faces[1:] + self.cell_faces[:-1])


def build_fv_grid(
    n_cells: int,
    h_wm: float,
    h_wm_plus: float,
    target_dy1_plus: float = 1.0,
    max_ratio: float = 1.2,
) -> FvGrid:
    """Geometrically stretched grid whose first cell is ~``target_dy1_plus`` wall units.

    The ratio is capped at ``max_ratio``; when a uniform grid already
    meets the target the grid is uniform.
    """
    if n_cells < 1 or h_wm <= 0 or h_wm_plus <= 0:
        raise InvalidGridError("need n_cells >= 1 and positive heights")
    dy1 = target_dy1_plus * h_wm / h_wm_plus
    if n_cells == 1 or h_wm / n_cells <= dy1:
        ratio = 1.0
    else:

        def first(r):
            return h_wm * (r - 1.0) / (r**n_cells - 1.0) - dy1

        if first(max_ratio) > 0:
            ratio = max_ratio
        else:
            ratio = brentq(first, 1.0 + 1e-12, max_ratio, xtol=1e-14)
    if ratio == 1.0:
        faces = np.linspace(0.0, h_wm, n_cells + 1)
    else:
        widths = ratio ** np.arange(n_cells)
        faces = np.concatenate(([0.0], np.cumsum(widths)))
        faces *= h_wm / faces[-1]
        faces[-1] = h_wm
    return FvGrid(faces, ratio)


def thomas_solve(lower, diag, upper, rhs):
    """Solve a tridiagonal system; ``lower[0]`` and ``upper[-1]`` are ignored."""
    n = len(diag)
    c = [0.0] * n
    d = [0.0] * n
    c[0] = upper[0] / diag[0]
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - lower[i] * c[i - 1]
        c[i] = upper[i] / m
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m
    x = [0.0] * n
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


def solve_utau_fv(
    inp: WallModelInput,
    grid: FvGrid,
    constants: ClosureConstants = DEFAULT_CONSTANTS,
    tol: float = 1e-6,
    max_iters: int = 200,
    laminar: bool = False,
) -> EqwmSolution:
    """Finite-volume solve of d/dy[(nu + nu_t) du/dy] = 0 on ``grid``.

    Eddy viscosity at faces is lagged one sweep (Picard) and the wall
    stress comes from the first cell value over its half height.
    ``laminar=True`` forces nu_t = 0.
    """
    if not math.isclose(grid.h_wm, inp.h_wm, rel_tol=1e-12):
        raise InvalidGridError(f"grid height {grid.h_wm} does not match h_wm {inp.h_wm}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    n = grid.n_cells
    nu, U = inp.nu, inp.u_les
    faces = grid.cell_faces
    yc = grid.centers
    if U == 0.0:
        return EqwmSolution(
            0.0, 0.0, 0, 0.0, Method.FINITE_VOLUME, n,
            profile=(np.concatenate(([0.0], yc, [inp.h_wm])), np.zeros(n + 2)),
        )
    nodes = np.concatenate(([0.0], yc, [inp.h_wm]))
    spacing = np.diff(nodes)  # n + 1 face-to-node distances

    u_tau = log_law_u_tau(U, inp.h_wm, nu, constants.kappa, constants.b_log)
    tau_old = None
    sweeps = 0
    u = None
    while True:
        if sweeps >= max_iters:
            raise ConvergenceError(
                f"FV wall model did not converge in {max_iters} sweeps",
                residual=rel_change,
                iterations=sweeps,
            )
        if laminar:
            gamma = np.full(n + 1, nu)
        else:
            # nu_t = l_m^2 |du/dy| with the constant-stress gradient at the lagged u_tau
            yp = faces * (u_tau / nu)
            lp = mixing_length_plus(yp, constants)
            gamma = nu * (1.0 + lp * lp * velocity_gradient_plus(yp, constants))
        k = (gamma / spacing).tolist()
        lower = [-k[j] for j in range(n)]
        upper = [-k[j + 1] for j in range(n)]
        diag = [k[j] + k[j + 1] for j in range(n)]
        rhs = [0.0] * n
        rhs[-1] = k[n] * U
        u = np.array(thomas_solve(lower, diag, upper, rhs))
        sweeps += 1
        tau = nu * u[0] / yc[0]
        full = np.concatenate(([0.0], u, [U]))
        if tau <= 0.0:
            raise ConvergenceError("non-positive wall stress in FV sweep", iterations=sweeps)
        u_tau = math.sqrt(tau)
        rel_change = math.inf if tau_old is None else abs(tau - tau_old) / tau
        if laminar or rel_change <= tol:
            break
        tau_old = tau
    return EqwmSolution(
        u_tau=u_tau,
        tau_w=inp.rho * u_tau**2,
        iterations=sweeps,
        residual=0.0 if laminar else rel_change,
        method=Method.FINITE_VOLUME,
        n_points=n,
        cell_updates=sweeps * n,
        profile=(nodes, full),
    )


def fv_face_stress(solution: EqwmSolution, grid: FvGrid, inp: WallModelInput, constants=DEFAULT_CONSTANTS) -> np.ndarray:
    """Kinematic total stress (nu + nu_t) du/dy at the interior faces of an FV solution.

    nu_t is re-evaluated from the converged profile, so the spread of
    the result measures how well the lagged iteration settled.
    """
    y, u = solution.profile
    nu = inp.nu
    g = (np.diff(u) / np.diff(y))[1:-1]
    faces = grid.cell_faces[1:-1]
    lm = mixing_length_plus(faces * (solution.u_tau / nu), constants) * (nu / solution.u_tau)
    return (nu + lm * lm * np.abs(g)) * g


# --------------------------------------------------------------------------
# profiles and diagnostics


def reconstruct_profile(
    solution: EqwmSolution,
    inp: WallModelInput,
    constants: ClosureConstants = DEFAULT_CONSTANTS,
    y_samples=None,
) -> np.ndarray:
    """Velocity at ``y_samples`` implied by a converged solution.

    Spectral solutions integrate du/dy from the wall to each sample with
    the solver's own rule and mapping, so the value at h_wm reproduces
    U_LES to the solver tolerance.  FV solutions are interpolated
    linearly through the nodal profile.
    """
    y_s = np.atleast_1d(np.asarray(y_samples, dtype=float))
    if y_s.size and (y_s.min() < 0.0 or y_s.max() > inp.h_wm * (1 + 1e-12)):
        raise RangeError("profile samples must lie in [0, h_wm]")
    if y_s.size > 1 and np.any(np.diff(y_s) < 0):
        raise RangeError("profile samples must be sorted")
    if solution.method is Method.FINITE_VOLUME:
        yn, un = solution.profile
        return np.interp(y_s, yn, un)
    if solution.u_tau == 0.0:
        return np.zeros_like(y_s)
    rule = build_gll_rule(solution.n_points)
    ref_y, ref_jw = map_to_physical(rule, DomainMap(solution.method.map_kind, 1.0))
    # scale the unit-height rule to [0, y_s] for every sample at once
    pts = y_s[:, None] * ref_y[None, :]
    vals = _integrand(pts, solution.u_tau, inp.nu, constants)
    return (vals @ ref_jw) * y_s


@dataclass(frozen=True)
class SpuriousDiagnosis:
    ok: bool
    l2_error: float
    reference_u_tau: float

    @property
    def label(self) -> str:
        return "ok" if self.ok else "spurious"


def detect_spurious_profile(
    solution: EqwmSolution,
    inp: WallModelInput,
    reference_q: int = 256,
    constants: ClosureConstants = DEFAULT_CONSTANTS,
    threshold: float = 0.02,
    n_samples: int = 401,
) -> SpuriousDiagnosis:
    """Compare a spectral profile with one from a finer rule of the same mapping.

    The relative L2 error is taken over ``n_samples`` uniformly spaced
    heights in [0, h_wm]; above ``threshold`` the profile is spurious.
    """
    kind = solution.method.map_kind
    if kind is None:
        raise ValueError("spurious-profile check applies to spectral solutions")
    if reference_q <= solution.n_points:
        raise ValueError(
            f"reference_q ({reference_q}) must exceed the solution's Q ({solution.n_points})"
        )
    ref = solve_utau_spectral(inp, build_gll_rule(reference_q), DomainMap(kind, inp.h_wm), constants)
    y = np.linspace(0.0, inp.h_wm, n_samples)
    u = reconstruct_profile(solution, inp, constants, y)
    u_ref = reconstruct_profile(ref, inp, constants, y)
    denom = np.trapezoid(u_ref**2, y)
    err = math.sqrt(np.trapezoid((u - u_ref) ** 2, y) / denom) if denom > 0 else 0.0
    return SpuriousDiagnosis(err <= threshold, err, ref.u_tau)


# --------------------------------------------------------------------------
# resolution requirements


def synthetic_input(re_tau: float, h_wm_over_delta: float = 0.1, constants=DEFAULT_CONSTANTS) -> WallModelInput:
    """Log-law-consistent channel input in outer units (delta = u_tau = rho = 1)."""
    nu = 1.0 / re_tau
    h = h_wm_over_delta
    u_plus = math.log(h / nu) / constants.kappa + constants.b_log
    return WallModelInput(u_les=u_plus, h_wm=h, nu=nu, rho=1.0)


def solve_with_count(inp: WallModelInput, method: Method, n: int, constants=DEFAULT_CONSTANTS) -> EqwmSolution:
    """Solve ``inp`` with ``n`` quadrature points or cells."""
    if method is Method.FINITE_VOLUME:
        h_plus = inp.h_wm / inp.nu * log_law_u_tau(inp.u_les, inp.h_wm, inp.nu, constants.kappa, constants.b_log)
        # below one wall unit the grid is uniform anyway; this also covers U = 0
        h_plus = max(h_plus, 1.0)
        return solve_utau_fv(inp, build_fv_grid(n, inp.h_wm, h_plus), constants)
    return solve_utau_spectral(inp, build_gll_rule(n), DomainMap(method.map_kind, inp.h_wm), constants)


def optimal_point_count(
    re_tau: float,
    method: Method,
    error_target: float = 0.03,
    h_wm_over_delta: float = 0.1,
    constants: ClosureConstants = DEFAULT_CONSTANTS,
    cap: int = POINT_CAP,
    inp: WallModelInput | None = None,
    reference_n: int = POINT_CAP,
) -> int:
    """Smallest point/cell count whose tau_w is within ``error_target`` of a resolved solve.

    The reference is the same method at ``reference_n`` points.  The
    count is bracketed by doubling up to ``cap`` and then bisected.

    Raises
    ------
    SaturationError
        If no count up to ``cap`` meets the target.
    """
    if not re_tau > 0:
        raise ValueError("re_tau must be positive")
    if not 0.0 < error_target < 1.0:
        raise ValueError("error_target must lie in (0, 1)")
    if inp is None:
        inp = synthetic_input(re_tau, h_wm_over_delta, constants)
    tau_ref = solve_with_count(inp, method, reference_n, constants).tau_w
    lo_n = 2 if method is not Method.FINITE_VOLUME else 1
    cache: dict[int, float] = {}

    def err(n):
        if n not in cache:
            try:
                tau = solve_with_count(inp, method, n, constants).tau_w
                cache[n] = abs(tau - tau_ref) / tau_ref
            except ConvergenceError:
                cache[n] = math.inf
        return cache[n]

    if err(lo_n) <= error_target:
        return lo_n
    lo, hi = lo_n, lo_n
    while True:
        hi = min(2 * hi, cap)
        if err(hi) <= error_target:
            break
        if hi == cap:
            raise SaturationError(
                f"{method.value} at Re_tau={re_tau:g} misses {error_target:.3g} below {cap} points",
                cap=cap,
                best_error=min(cache.values()),
            )
        lo = hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if err(mid) <= error_target:
            hi = mid
        else:
            lo = mid
    return hi
