"""A priori validation: drive a wall model with reference data at the matching height.

Everything is in outer units (delta = u_tau = rho = 1, nu = 1/Re_tau),
so the reference wall stress is exactly one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import iwm
from ..eqwm import (
    DEFAULT_CONSTANTS,
    WallModelInput,
    optimal_point_count,
    reconstruct_profile,
    solve_with_count,
)
from .config import DriverConfig, Model
from .profiles import ReferenceProfile, sample_matching_velocity


@dataclass(frozen=True)
class AprioriReport:
    model: Model
    n: int | None
    u_les: float
    u_tau: float
    tau_w: float
    tau_w_rel_error: float
    profile_l2_error: float
    iterations: int
    steps: int = 0
    fallback: bool = False

    def lines(self) -> list[str]:
        return [
            f"model = {self.model.value}",
            f"n = {self.n if self.n is not None else '-'}",
            f"u_les_plus = {self.u_les:.10g}",
            f"u_tau = {self.u_tau:.10g}",
            f"tau_w = {self.tau_w:.10g}",
            f"tau_w_rel_error = {self.tau_w_rel_error:.6g}",
            f"profile_l2_error = {self.profile_l2_error:.6g}",
            f"iterations = {self.iterations}",
            f"steps = {self.steps}",
            f"fallback = {self.fallback}",
        ]


def march_to_steady(state, match, h_wm, nu, max_steps, rtol=1e-12, constants=DEFAULT_CONSTANTS):
    """Advance one face until u_tau stops changing; returns (state, steps taken)."""
    for step in range(1, max_steps + 1):
        new = iwm.advance_face(state, match, h_wm, nu, constants=constants)
        done = abs(new.params.u_tau - state.params.u_tau) <= rtol * max(new.params.u_tau, 1e-300)
        state = new
        if done:
            return state, step
    return state, max_steps


def _l2(u, u_ref, y) -> float:
    denom = np.trapezoid(u_ref**2, y)
    return math.sqrt(np.trapezoid((u - u_ref) ** 2, y) / denom)


def run_apriori(config: DriverConfig, profile: ReferenceProfile, constants=DEFAULT_CONSTANTS) -> AprioriReport:
    """Feed the reference velocity at h_wm to the selected model and score it.

    Equilibrium models solve once; the integral model starts from the
    plug-flow state and marches with zero pressure gradient until
    u_tau settles (or ``config.steps`` runs out).
    """
    re = config.re_tau
    h = config.h_wm_over_delta
    nu = 1.0 / re
    u_les = sample_matching_velocity(profile, h, re)
    inp = WallModelInput(u_les, h, nu)
    y_lo = max(profile.y_over_delta()[0], 0.0)
    y = np.linspace(y_lo, h, 401)
    u_ref = profile.u_plus_at(y)

    model = config.model
    if not model.is_iwm:
        method = model.method
        n = config.n or optimal_point_count(re, method, h_wm_over_delta=h, constants=constants)
        sol = solve_with_count(inp, method, n, constants)
        u = reconstruct_profile(sol, inp, constants, y)
        return AprioriReport(
            model, n, u_les, sol.u_tau, sol.tau_w, abs(sol.tau_w - 1.0), _l2(u, u_ref, y), sol.iterations
        )

    legacy = model is Model.IWM_LEGACY
    state = iwm.initial_state(u_les, 0.0, h, nu, legacy=legacy, constants=constants)
    match = iwm.MatchingData(u_les, 0.0, dpdx=config.dpdx, dt=config.dt)
    state, steps = march_to_steady(state, match, h, nu, config.steps, constants=constants)
    tau = math.hypot(state.tau_w_x, state.tau_w_z)
    u, _ = iwm.composite_profile(state.params, h, nu, y)
    return AprioriReport(
        model,
        None,
        u_les,
        state.params.u_tau,
        tau,
        abs(tau - 1.0),
        _l2(u, u_ref, y),
        state.newton_iterations,
        steps,
        state.fallback,
    )
