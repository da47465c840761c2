"""Three-dimensional integral wall model.

The wall layer carries a composite velocity profile per wall-parallel
component: linear below the sublayer height ``delta_i`` and
log-plus-linear above it.  Vertically integrating the thin
boundary-layer momentum equations gives evolution equations for the
integrals ``L_x`` and ``L_z``, which are marched with explicit Euler;
each step a small Newton solve recovers the profile parameters.

Component ``i`` of the modified profile is::

    y <= delta_i:  u_i = s_i * u_tau * y / nu
    y >  delta_i:  u_i = s_i / kappa * ln(y / h) + u_tau * (C_i + A_i * y / h)

with ``s_i = sign(u_tau_i) * u_tau_i**2 / u_tau``.  The wall-stress
vector is ``rho * u_tau * s`` and ``|s| = u_tau``, so the profile is a
proper wall-parallel vector and the stresses do not depend on how the
local x-z axes are chosen.  ``legacy=True`` switches to the original
sublayer ``u_i = u_tau_i * y / delta_nu`` with a per-component sublayer
height, which forces ``tau_w_x == tau_w_z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .eqwm import (
    DEFAULT_CONSTANTS,
    ClosureConstants,
    WallModelInput,
    log_law_u_tau,
    mixing_length_plus,
    solve_utau_spectral,
)
from .errors import InvalidStateError, RangeError
from .quadrature import DomainMap, MapKind, build_gll_rule

NEWTON_TOL = 1e-10
NEWTON_MAX_ITERS = 50
FD_STEP = 1e-7


def sublayer_height(kappa: float = 0.4, b_log: float = 5.0) -> float:
    """Wall-unit height where u+ = y+ meets the log law, by Newton from 11."""
    d = 11.0
    for _ in range(100):
        f = d - math.log(d) / kappa - b_log
        step = f / (1.0 - 1.0 / (kappa * d))
        d -= step
        if abs(step) < 1e-15 * d:
            break
    return d


DELTA_PLUS = sublayer_height()


@dataclass(frozen=True)
class IwmParams:
    """The eight profile unknowns.  ``u_tau == 0`` marks the no-flow state."""

    u_tau: float
    u_tau_x: float
    u_tau_z: float
    a_x: float
    a_z: float
    c_x: float
    c_z: float
    delta_i: float
    legacy: bool = False

    def scales(self) -> tuple[float, float]:
        """Signed sublayer velocity scales (s_x, s_z)."""
        if self.u_tau == 0.0:
            return 0.0, 0.0
        if self.legacy:
            return self.u_tau_x, self.u_tau_z
        return (
            math.copysign(self.u_tau_x**2, self.u_tau_x) / self.u_tau,
            math.copysign(self.u_tau_z**2, self.u_tau_z) / self.u_tau,
        )

    def coefficients(self, nu: float) -> np.ndarray:
        """Rows (sublayer slope, log coeff, constant, linear coeff) for x and z."""
        s_x, s_z = self.scales()
        ut = self.u_tau
        if self.legacy:
            logc = (ut / DEFAULT_CONSTANTS.kappa, ut / DEFAULT_CONSTANTS.kappa)
        else:
            logc = (s_x / DEFAULT_CONSTANTS.kappa, s_z / DEFAULT_CONSTANTS.kappa)
        return np.array(
            [
                [s_x * ut / nu, logc[0], ut * self.c_x, ut * self.a_x],
                [s_z * ut / nu, logc[1], ut * self.c_z, ut * self.a_z],
            ]
        )


@dataclass(frozen=True)
class IntegralTerms:
    l_x: float = 0.0
    l_z: float = 0.0
    l_xx: float = 0.0
    l_zz: float = 0.0
    l_xz: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.l_x, self.l_z, self.l_xx, self.l_zz, self.l_xz])


@dataclass(frozen=True)
class IntegralGradients:
    """Wall-parallel derivatives of the five integral terms in the local frame."""

    dlx_dx: float = 0.0
    dlx_dz: float = 0.0
    dlz_dx: float = 0.0
    dlz_dz: float = 0.0
    dlxx_dx: float = 0.0
    dlxx_dz: float = 0.0
    dlzz_dx: float = 0.0
    dlzz_dz: float = 0.0
    dlxz_dx: float = 0.0
    dlxz_dz: float = 0.0


ZERO_GRADIENTS = IntegralGradients()


@dataclass(frozen=True)
class MatchingData:
    u_les: float
    w_les: float
    dpdx: float = 0.0
    dpdz: float = 0.0
    grad_terms: IntegralGradients = ZERO_GRADIENTS
    dt: float = 0.0

    def __post_init__(self):
        if not self.dt >= 0.0:
            raise ValueError("dt must be non-negative")


@dataclass(frozen=True)
class IwmFaceState:
    params: IwmParams
    integrals: IntegralTerms
    tau_w_x: float
    tau_w_z: float
    tau_h_x: float
    tau_h_z: float
    time: float = 0.0
    u_match: float = 0.0
    w_match: float = 0.0
    newton_iterations: int = 0
    fallback: bool = False
    u_filtered: float | None = field(default=None, compare=False)
    w_filtered: float | None = field(default=None, compare=False)


# --------------------------------------------------------------------------
# profile and closed-form integrals


def composite_profile(params: IwmParams, h_wm: float, nu: float, y):
    """Evaluate (u, w) of the composite profile at height(s) ``y``."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0.0) or np.any(y > h_wm * (1.0 + 1e-12)):
        raise RangeError("profile height outside [0, h_wm]")
    coef = params.coefficients(nu)
    inner = y <= params.delta_i
    eta = np.where(inner, 1.0, y / h_wm)
    log_eta = np.log(eta)
    out = []
    for a, p, q, r in coef:
        out.append(np.where(inner, a * y, p * log_eta + q + r * eta))
    return out[0], out[1]


def _log_layer_moments(d: float) -> dict[str, float]:
    """Integrals over eta in [d, 1] of 1, eta, eta^2, ln, eta ln, ln^2."""
    if d <= 0.0:
        ln_d, dl, dl2, d2l = 0.0, 0.0, 0.0, 0.0
    else:
        ln_d = math.log(d)
        dl = d * ln_d
        dl2 = d * ln_d * ln_d
        d2l = d * d * ln_d
    return {
        "1": 1.0 - d,
        "e": 0.5 * (1.0 - d * d),
        "ee": (1.0 - d**3) / 3.0,
        "l": -1.0 + d - dl,
        "el": -0.25 - 0.5 * d2l + 0.25 * d * d,
        "ll": 2.0 - dl2 + 2.0 * dl - 2.0 * d,
    }


def _bilinear(c1, c2, m) -> float:
    _, p1, q1, r1 = c1
    _, p2, q2, r2 = c2
    return (
        p1 * p2 * m["ll"]
        + (p1 * q2 + q1 * p2) * m["l"]
        + (p1 * r2 + r1 * p2) * m["el"]
        + q1 * q2 * m["1"]
        + (q1 * r2 + r1 * q2) * m["e"]
        + r1 * r2 * m["ee"]
    )


def _linear(c, m) -> float:
    _, p, q, r = c
    return p * m["l"] + q * m["1"] + r * m["e"]


def integral_terms(params: IwmParams, h_wm: float, nu: float) -> IntegralTerms:
    """Closed-form L_x, L_z, L_xx, L_zz, L_xz of the composite profile."""
    di = params.delta_i
    if di > h_wm * (1.0 + 1e-12):
        raise InvalidStateError(f"sublayer height {di} exceeds h_wm {h_wm}")
    if params.u_tau == 0.0:
        return IntegralTerms()
    di = min(di, h_wm)
    cx, cz = params.coefficients(nu)
    m = _log_layer_moments(di / h_wm)
    h = h_wm
    d2, d3 = di * di / 2.0, di**3 / 3.0
    return IntegralTerms(
        l_x=cx[0] * d2 + h * _linear(cx, m),
        l_z=cz[0] * d2 + h * _linear(cz, m),
        l_xx=cx[0] ** 2 * d3 + h * _bilinear(cx, cx, m),
        l_zz=cz[0] ** 2 * d3 + h * _bilinear(cz, cz, m),
        l_xz=cx[0] * cz[0] * d3 + h * _bilinear(cx, cz, m),
    )


def wall_and_matching_stress(
    params: IwmParams,
    h_wm: float,
    nu: float,
    rho: float = 1.0,
    constants: ClosureConstants = DEFAULT_CONSTANTS,
) -> tuple[float, float, float, float]:
    """Wall stress from the sublayer slope and matching-height stress with damped nu_t."""
    if params.u_tau == 0.0:
        return 0.0, 0.0, 0.0, 0.0
    coef = params.coefficients(nu)
    tw_x = rho * nu * coef[0, 0]
    tw_z = rho * nu * coef[1, 0]
    if params.delta_i >= h_wm:
        g_x, g_z = coef[0, 0], coef[1, 0]
    else:
        g_x = (coef[0, 1] + coef[0, 3]) / h_wm
        g_z = (coef[1, 1] + coef[1, 3]) / h_wm
    lm = float(mixing_length_plus(h_wm * params.u_tau / nu, constants)) * nu / params.u_tau
    nu_eff = nu + lm * lm * math.hypot(g_x, g_z)
    return tw_x, tw_z, rho * nu_eff * g_x, rho * nu_eff * g_z


# --------------------------------------------------------------------------
# closure: parameters from the free unknowns


def _sign(v: float) -> float:
    return -1.0 if v < 0.0 else 1.0


def _zero_params(h_wm: float, legacy: bool) -> IwmParams:
    return IwmParams(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, h_wm, legacy)


def _laminar_params(u_les, w_les, h_wm, nu, legacy=False) -> IwmParams:
    speed = math.hypot(u_les, w_les)
    if speed == 0.0:
        return _zero_params(h_wm, legacy)
    u_tau = math.sqrt(speed * nu / h_wm)
    s_x, s_z = u_tau * u_les / speed, u_tau * w_les / speed
    return IwmParams(
        u_tau,
        _sign(s_x) * math.sqrt(abs(s_x) * u_tau),
        _sign(s_z) * math.sqrt(abs(s_z) * u_tau),
        0.0,
        0.0,
        u_les / u_tau,
        w_les / u_tau,
        h_wm,
        legacy,
    )


def params_from_scales(s_x, s_z, u_les, w_les, h_wm, nu) -> IwmParams:
    """Modified-closure parameters from the signed scales ``(s_x, s_z)``.

    u_tau = |s|, the sublayer height follows from ``DELTA_PLUS`` and each
    component's C and A solve the matching and continuity conditions.
    """
    u_tau = math.hypot(s_x, s_z)
    if u_tau == 0.0:
        raise InvalidStateError("zero friction velocity")
    delta_i = DELTA_PLUS * nu / u_tau
    d = delta_i / h_wm
    if d >= 1.0:
        raise InvalidStateError("sublayer reaches the matching height")
    ln_d = math.log(d)
    kappa = DEFAULT_CONSTANTS.kappa
    ac = []
    for s, target in ((s_x, u_les), (s_z, w_les)):
        # continuity: s*delta+ = s/kappa ln d + u_tau (C + A d); matching: u_tau (C + A) = target
        a = (target - s * (DELTA_PLUS - ln_d / kappa)) / (u_tau * (1.0 - d))
        ac.append((a, target / u_tau - a))
    return IwmParams(
        u_tau,
        _sign(s_x) * math.sqrt(abs(s_x) * u_tau),
        _sign(s_z) * math.sqrt(abs(s_z) * u_tau),
        ac[0][0],
        ac[1][0],
        ac[0][1],
        ac[1][1],
        delta_i,
    )


def params_legacy(u_tau, u_tau_dir, u_les, w_les, h_wm, nu) -> IwmParams:
    """Original-sublayer parameters.

    Each component's sublayer must meet the standard log law at the
    common height ``delta_i``, i.e. ``delta_i * u_tau_i / nu = delta+``
    for both i, which pins ``u_tau_x = u_tau_z = u_tau_dir``.
    """
    if u_tau <= 0.0 or u_tau_dir <= 0.0:
        raise InvalidStateError("non-positive friction velocity")
    delta_i = DELTA_PLUS * nu / u_tau_dir
    d = delta_i / h_wm
    if d >= 1.0:
        raise InvalidStateError("sublayer reaches the matching height")
    ln_d = math.log(d)
    kappa = DEFAULT_CONSTANTS.kappa
    ac = []
    for target in (u_les, w_les):
        # continuity: u_tau_dir*u_tau*delta_i/nu = u_tau (ln d / kappa + C + A d)
        a = (target / u_tau - DELTA_PLUS + ln_d / kappa) / (1.0 - d)
        ac.append((a, target / u_tau - a))
    return IwmParams(
        u_tau, u_tau_dir, u_tau_dir, ac[0][0], ac[1][0], ac[0][1], ac[1][1], delta_i, legacy=True
    )


def _params_from_unknowns(x, u_les, w_les, h_wm, nu, legacy):
    a, b = float(x[0]), float(x[1])
    if legacy:
        return params_legacy(a, b, u_les, w_les, h_wm, nu)
    return params_from_scales(a, b, u_les, w_les, h_wm, nu)


def _unknowns_from_params(params: IwmParams) -> np.ndarray:
    if params.legacy:
        return np.array([params.u_tau, params.u_tau_x])
    return np.array(params.scales())


def closure_residuals(
    params: IwmParams,
    u_les: float,
    w_les: float,
    h_wm: float,
    nu: float,
    targets: tuple[float, float] | None = None,
    constants: ClosureConstants = DEFAULT_CONSTANTS,
) -> np.ndarray:
    """Scaled residuals of the full eight-equation system.

    Order: x/z momentum targets (zero when ``targets`` is None), x/z
    matching, x/z continuity at delta_i, sublayer height, and the
    friction-velocity closure.  Velocities are scaled by
    max(|U|, u_tau) and integrals by that times h_wm.
    """
    ut = params.u_tau
    vel = max(math.hypot(u_les, w_les), ut, 1e-300)
    if ut == 0.0:
        return np.array([0, 0, u_les / vel, w_les / vel, 0, 0, 0, 0], dtype=float)
    li = integral_terms(params, h_wm, nu)
    res = np.zeros(8)
    if targets is not None:
        res[0] = (li.l_x - targets[0]) / (vel * h_wm)
        res[1] = (li.l_z - targets[1]) / (vel * h_wm)
    res[2] = (ut * (params.c_x + params.a_x) - u_les) / vel
    res[3] = (ut * (params.c_z + params.a_z) - w_les) / vel
    if params.delta_i < h_wm:
        coef = params.coefficients(nu)
        eta = params.delta_i / h_wm
        u_in = coef[:, 0] * params.delta_i
        u_out = coef[:, 1] * math.log(eta) + coef[:, 2] + coef[:, 3] * eta
        res[4:6] = (u_in - u_out) / vel
        if params.legacy:
            res[6] = params.delta_i * params.u_tau_x / nu - DELTA_PLUS
        else:
            res[6] = params.delta_i * ut / nu - DELTA_PLUS
        res[6] /= DELTA_PLUS
    if params.legacy:
        res[7] = (params.u_tau_x - params.u_tau_z) / vel
    else:
        res[7] = (params.u_tau_x**4 + params.u_tau_z**4 - ut**4) / ut**4
    return res


# --------------------------------------------------------------------------
# states


def _state_from_params(params, h_wm, nu, rho, constants, time, u_les, w_les, iters=0, fallback=False, prev=None):
    tw_x, tw_z, th_x, th_z = wall_and_matching_stress(params, h_wm, nu, rho, constants)
    return IwmFaceState(
        params=params,
        integrals=integral_terms(params, h_wm, nu),
        tau_w_x=tw_x,
        tau_w_z=tw_z,
        tau_h_x=th_x,
        tau_h_z=th_z,
        time=time,
        u_match=u_les,
        w_match=w_les,
        newton_iterations=iters,
        fallback=fallback,
        u_filtered=None if prev is None else prev.u_filtered,
        w_filtered=None if prev is None else prev.w_filtered,
    )


def state_from_params(
    params: IwmParams,
    h_wm: float,
    nu: float,
    rho: float = 1.0,
    constants: ClosureConstants = DEFAULT_CONSTANTS,
    time: float = 0.0,
    u_les: float | None = None,
    w_les: float | None = None,
) -> IwmFaceState:
    """Face state with integrals and stresses evaluated from ``params``.

    The stored matching velocity defaults to the profile value at h_wm.
    """
    if u_les is None or w_les is None:
        u_h, w_h = composite_profile(params, h_wm, nu, h_wm)
        u_les = float(u_h) if u_les is None else u_les
        w_les = float(w_h) if w_les is None else w_les
    return _state_from_params(params, h_wm, nu, rho, constants, time, u_les, w_les)


def equilibrium_params(
    u_les: float,
    w_les: float,
    h_wm: float,
    nu: float,
    constants: ClosureConstants = DEFAULT_CONSTANTS,
    legacy: bool = False,
    q_points: int = 64,
) -> IwmParams:
    """Reseed parameters from the spectral equilibrium u_tau, aligned with the LES velocity."""
    speed = math.hypot(u_les, w_les)
    if speed == 0.0:
        return _zero_params(h_wm, legacy)
    sol = solve_utau_spectral(
        WallModelInput(speed, h_wm, nu),
        build_gll_rule(q_points),
        DomainMap(MapKind.CLUSTERED, h_wm),
        constants,
    )
    u_tau = sol.u_tau
    if DELTA_PLUS * nu / u_tau >= h_wm:
        return _laminar_params(u_les, w_les, h_wm, nu, legacy)
    if legacy:
        return params_legacy(u_tau, u_tau / math.sqrt(2.0), u_les, w_les, h_wm, nu)
    return params_from_scales(u_tau * u_les / speed, u_tau * w_les / speed, u_les, w_les, h_wm, nu)


def log_law_params(u_les, w_les, h_wm, nu, legacy=False) -> IwmParams:
    """A = 0 log-law state for the LES velocity (kappa = 0.4, B = 5)."""
    speed = math.hypot(u_les, w_les)
    if speed == 0.0:
        return _zero_params(h_wm, legacy)
    u_tau = log_law_u_tau(speed, h_wm, nu, DEFAULT_CONSTANTS.kappa, DEFAULT_CONSTANTS.b_log)
    if DELTA_PLUS * nu / u_tau >= h_wm:
        return _laminar_params(u_les, w_les, h_wm, nu, legacy)
    if legacy:
        return params_legacy(u_tau, u_tau / math.sqrt(2.0), u_les, w_les, h_wm, nu)
    return params_from_scales(u_tau * u_les / speed, u_tau * w_les / speed, u_les, w_les, h_wm, nu)


def initial_state(
    u_les: float,
    w_les: float,
    h_wm: float,
    nu: float,
    rho: float = 1.0,
    constants: ClosureConstants = DEFAULT_CONSTANTS,
    legacy: bool = False,
    kind: str = "plug",
) -> IwmFaceState:
    """Start-up state.

    ``kind="plug"`` takes the LES velocity as a uniform outer flow
    reaching the matching point and starts from the A = 0 log law that
    the integral closure itself recovers; ``kind="equilibrium"`` starts
    from the spectral equilibrium solve.
    """
    if kind == "plug":
        params = log_law_params(u_les, w_les, h_wm, nu, legacy)
    elif kind == "equilibrium":
        params = equilibrium_params(u_les, w_les, h_wm, nu, constants, legacy)
    else:
        raise ValueError(f"unknown initial state kind {kind!r}")
    return _state_from_params(params, h_wm, nu, rho, constants, 0.0, u_les, w_les)


def steady_state(
    u_les: float,
    w_les: float,
    h_wm: float,
    nu: float,
    rho: float = 1.0,
    constants: ClosureConstants = DEFAULT_CONSTANTS,
    dpdx: float = 0.0,
    dpdz: float = 0.0,
) -> IwmFaceState:
    """State whose explicit-Euler right-hand side vanishes with no surface gradients.

    Solves tau_h - tau_w - h dp/dx_i = 0 for both components by Newton on
    the scales (modified closure only).
    """
    p0 = log_law_params(u_les, w_les, h_wm, nu)
    if p0.u_tau == 0.0 or p0.delta_i >= h_wm:
        return _state_from_params(p0, h_wm, nu, rho, constants, 0.0, u_les, w_les)

    def balance(x):
        p = params_from_scales(x[0], x[1], u_les, w_les, h_wm, nu)
        tw_x, tw_z, th_x, th_z = wall_and_matching_stress(p, h_wm, nu, rho, constants)
        return np.array([th_x - tw_x - dpdx * h_wm, th_z - tw_z - dpdz * h_wm]) / (rho * p.u_tau**2)

    x, _, ok = _newton(balance, np.array(p0.scales()))
    if not ok:
        raise InvalidStateError("no steady integral-model state for these inputs")
    p = _params_from_unknowns(x, u_les, w_les, h_wm, nu, False)
    return _state_from_params(p, h_wm, nu, rho, constants, 0.0, u_les, w_les)


# --------------------------------------------------------------------------
# Newton solve and time advance


def _newton(fun, x0, tol=NEWTON_TOL, max_iters=NEWTON_MAX_ITERS):
    """Damped Newton with a forward-difference Jacobian.

    ``fun`` raises InvalidStateError outside the admissible set; such
    trial points are rejected by halving the step.
    """
    x = np.array(x0, dtype=float)
    f = fun(x)
    n = x.size
    for it in range(max_iters + 1):
        if np.max(np.abs(f)) <= tol:
            return x, it, True
        if it == max_iters:
            break
        scale = max(np.max(np.abs(x)), 1e-300)
        jac = np.empty((n, n))
        for j in range(n):
            xp = x.copy()
            step = FD_STEP * max(abs(x[j]), scale)
            xp[j] += step
            try:
                jac[:, j] = (fun(xp) - f) / step
            except InvalidStateError:
                xp[j] = x[j] - step
                jac[:, j] = (f - fun(xp)) / step
        try:
            dx = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        fnorm = np.max(np.abs(f))
        while lam > 1e-6:
            trial = x + lam * dx
            try:
                ft = fun(trial)
            except InvalidStateError:
                lam *= 0.5
                continue
            if np.all(np.isfinite(ft)) and np.max(np.abs(ft)) < fnorm * (1.0 - 1e-4 * lam) or lam < 1e-3:
                break
            lam *= 0.5
        else:
            break
        if not np.all(np.isfinite(ft)):
            break
        x, f = trial, ft
    return x, max_iters, False


def newton_step_system(
    state: IwmFaceState,
    targets: tuple[float, float],
    match: MatchingData,
    h_wm: float,
    nu: float,
    rho: float = 1.0,
    constants: ClosureConstants = DEFAULT_CONSTANTS,
) -> tuple[IwmParams, int, bool]:
    """Find parameters whose L_x, L_z hit ``targets`` under the closure conditions.

    Returns ``(params, iterations, fallback)``.  On divergence the
    parameters are reseeded from the spectral equilibrium solution and
    ``fallback`` is True.
    """
    legacy = state.params.legacy
    u_les, w_les = match.u_les, match.w_les
    speed = math.hypot(u_les, w_les)
    if speed == 0.0 and targets[0] == 0.0 and targets[1] == 0.0:
        return _zero_params(h_wm, legacy), 0, False

    vel = max(speed, state.params.u_tau, 1e-300)
    norm = vel * h_wm

    def resid(x):
        p = _params_from_unknowns(x, u_les, w_les, h_wm, nu, legacy)
        li = integral_terms(p, h_wm, nu)
        return np.array([(li.l_x - targets[0]) / norm, (li.l_z - targets[1]) / norm])

    if state.params.u_tau > 0.0 and state.params.delta_i < h_wm:
        x0 = _unknowns_from_params(state.params)
    else:
        x0 = _unknowns_from_params(log_law_params(u_les, w_les, h_wm, nu, legacy))
    try:
        x, iters, ok = _newton(resid, x0)
    except InvalidStateError:
        ok, iters = False, 0
    if ok:
        return _params_from_unknowns(x, u_les, w_les, h_wm, nu, legacy), iters, False
    return equilibrium_params(u_les, w_les, h_wm, nu, constants, legacy), iters, True


def explicit_rhs(state: IwmFaceState, match: MatchingData, h_wm: float, rho: float = 1.0) -> tuple[float, float]:
    """Time-n right-hand side of the integrated x and z momentum equations."""
    g = match.grad_terms
    div_l = g.dlx_dx + g.dlz_dz
    u_n, w_n = state.u_match, state.w_match
    rhs_x = (
        -g.dlxx_dx
        - g.dlxz_dz
        + u_n * div_l
        + (-match.dpdx * h_wm + state.tau_h_x - state.tau_w_x) / rho
    )
    rhs_z = (
        -g.dlxz_dx
        - g.dlzz_dz
        + w_n * div_l
        + (-match.dpdz * h_wm + state.tau_h_z - state.tau_w_z) / rho
    )
    return rhs_x, rhs_z


def advance_face(
    state: IwmFaceState,
    match: MatchingData,
    h_wm: float,
    nu: float,
    rho: float = 1.0,
    constants: ClosureConstants = DEFAULT_CONSTANTS,
    filter_time: float | None = None,
) -> IwmFaceState:
    """One explicit-Euler step of the integral momentum equations.

    Spatial derivatives, stresses and the transport velocity are taken
    at time n; the matching velocity of ``match`` is imposed at n+1.
    ``filter_time`` enables exponential relaxation of the imposed LES
    velocity with that time constant.
    """
    dt = match.dt
    if dt == 0.0:
        return replace(state)
    u_new, w_new = match.u_les, match.w_les
    uf, wf = state.u_filtered, state.w_filtered
    if filter_time is not None and filter_time > 0.0:
        if uf is None:
            uf, wf = state.u_match, state.w_match
        alpha = -math.expm1(-dt / filter_time)
        uf += alpha * (u_new - uf)
        wf += alpha * (w_new - wf)
        u_new, w_new = uf, wf
        match = replace(match, u_les=u_new, w_les=w_new)
    rhs_x, rhs_z = explicit_rhs(state, match, h_wm, rho)
    targets = (state.integrals.l_x + dt * rhs_x, state.integrals.l_z + dt * rhs_z)
    params, iters, fell_back = newton_step_system(state, targets, match, h_wm, nu, rho, constants)
    new = _state_from_params(
        params, h_wm, nu, rho, constants, state.time + dt, u_new, w_new, iters, fell_back
    )
    if filter_time is not None and filter_time > 0.0:
        new = replace(new, u_filtered=uf, w_filtered=wf)
    return new


def fd_gradient_fallback(values_neighbors, dx: float) -> float:
    """Central difference from (left, centre, right) samples spaced ``dx`` apart."""
    if not dx > 0.0:
        raise ValueError("dx must be positive")
    left, _, right = values_neighbors
    return (right - left) / (2.0 * dx)


# --------------------------------------------------------------------------
# frame handling


def rotate_vector(vx: float, vz: float, angle: float) -> tuple[float, float]:
    """Components of a wall-parallel vector in axes rotated by ``angle`` (radians)."""
    c, s = math.cos(angle), math.sin(angle)
    return c * vx + s * vz, -s * vx + c * vz


def rotate_params(params: IwmParams, angle: float) -> IwmParams:
    """Express modified-closure parameters in x-z axes rotated by ``angle``."""
    if params.legacy:
        raise InvalidStateError("legacy parameters are not frame covariant")
    if params.u_tau == 0.0:
        return params
    ut = params.u_tau
    s_x, s_z = rotate_vector(*params.scales(), angle)
    c_x, c_z = rotate_vector(params.c_x, params.c_z, angle)
    a_x, a_z = rotate_vector(params.a_x, params.a_z, angle)
    return IwmParams(
        ut,
        _sign(s_x) * math.sqrt(abs(s_x) * ut),
        _sign(s_z) * math.sqrt(abs(s_z) * ut),
        a_x,
        a_z,
        c_x,
        c_z,
        params.delta_i,
    )


def rotate_gradients(g: IntegralGradients, angle: float) -> IntegralGradients:
    """Transform the local-frame gradient bundle to axes rotated by ``angle``.

    (L_x, L_z) is a vector and (L_xx, L_xz, L_zz) a symmetric tensor,
    so each derivative is a rank-2 / rank-3 object; the bundle is
    rotated accordingly.
    """
    c, s = math.cos(angle), math.sin(angle)
    r = np.array([[c, s], [-s, c]])
    dv = np.array([[g.dlx_dx, g.dlx_dz], [g.dlz_dx, g.dlz_dz]])
    dv = r @ dv @ r.T
    dt = np.empty((2, 2, 2))
    dt[0, 0] = g.dlxx_dx, g.dlxx_dz
    dt[1, 1] = g.dlzz_dx, g.dlzz_dz
    dt[0, 1] = dt[1, 0] = g.dlxz_dx, g.dlxz_dz
    dt = np.einsum("ai,bj,ck,ijk->abc", r, r, r, dt)
    return IntegralGradients(
        dlx_dx=dv[0, 0],
        dlx_dz=dv[0, 1],
        dlz_dx=dv[1, 0],
        dlz_dz=dv[1, 1],
        dlxx_dx=dt[0, 0, 0],
        dlxx_dz=dt[0, 0, 1],
        dlzz_dx=dt[1, 1, 0],
        dlzz_dz=dt[1, 1, 1],
        dlxz_dx=dt[0, 1, 0],
        dlxz_dz=dt[0, 1, 1],
    )
