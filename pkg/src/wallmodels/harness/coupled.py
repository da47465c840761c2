"""Synchronised wall-model stepping against a prescribed outer flow.

Each step runs the integral-model coupling sequence with the LES
advance replaced by an analytic outer-flow update:

1. publish wall stress
2. broadcast wall variables to cells
3. cell gradients (Green-Gauss)
4. advance outer flow
5. interpolate matching data (velocity, pressure gradient, surface gradients)
6. advance the wall model
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field

import numpy as np

from .. import iwm, surface
from ..eqwm import DEFAULT_CONSTANTS
from ..errors import WallModelError

STAGES = (
    "publish_stress",
    "broadcast",
    "cell_gradients",
    "advance_outer",
    "interpolate",
    "advance_wm",
)


class FlowKind(enum.Enum):
    UNIFORM = "uniform"
    SINUSOIDAL = "sinusoidal"
    PRESSURE_PULSE = "pulse"


@dataclass(frozen=True)
class OuterFlow:
    """Prescribed velocity and pressure gradient at the matching height, in global X-Z.

    ``sinusoidal``: U = u0 (1 + amplitude sin(2 pi X / wavelength)).
    ``pulse``: dp/dX = amplitude for pulse_start <= t < pulse_start + pulse_width.
    ``noise`` adds seeded Gaussian perturbations to U, the same on every
    face, so homogeneous runs stay homogeneous.
    """

    kind: FlowKind = FlowKind.UNIFORM
    u0: float = 16.9
    w0: float = 0.0
    amplitude: float = 0.0
    wavelength: float = 1.0
    pulse_start: float = 0.0
    pulse_width: float = 0.0
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", FlowKind(self.kind))

    def sample(self, points: np.ndarray, t: float):
        """Global (U, W, dp/dX, dp/dZ) arrays at ``points`` (shape (n, 3)) and time ``t``."""
        x = points[:, 0]
        u = np.full(len(points), self.u0)
        w = np.full(len(points), self.w0)
        dpx = np.zeros(len(points))
        dpz = np.zeros(len(points))
        if self.kind is FlowKind.SINUSOIDAL:
            u = self.u0 * (1.0 + self.amplitude * np.sin(2.0 * np.pi * x / self.wavelength))
        elif self.kind is FlowKind.PRESSURE_PULSE:
            if self.pulse_start <= t < self.pulse_start + self.pulse_width:
                dpx[:] = self.amplitude
        if self.noise:
            # keyed on (seed, time) so repeated runs draw identical values
            rng = np.random.default_rng([self.seed, int(round(t * 1e9))])
            u = u + self.noise * rng.standard_normal()
        return u, w, dpx, dpz


@dataclass
class CoupledResult:
    states: list
    stage_log: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    last_gradients: surface.GradientBundle | None = None

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TIMESERIES_HEADER)
        w.writerows(self.rows)
        return buf.getvalue()


TIMESERIES_HEADER = (
    "step",
    "time",
    "face_id",
    "u_les",
    "w_les",
    "u_tau",
    "tau_w_x",
    "tau_w_z",
    "a_x",
    "l_x",
    "dlx_dx",
    "dlxx_dx",
    "newton_iterations",
    "fallback",
)


class StageError(WallModelError):
    def __init__(self, stage, step, cause):
        super().__init__(f"step {step}, stage {stage}: {cause}")
        self.stage = stage
        self.step = step


def _to_local(mesh, gx, gz):
    """Project global X-Z components onto each face's local axes."""
    b = np.array([f.basis[:, [0, 2]] for f in mesh.wall_faces])  # (F, 2, 2)
    return b[:, 0, 0] * gx + b[:, 0, 1] * gz, b[:, 1, 0] * gx + b[:, 1, 1] * gz


def run_coupled_loop(
    mesh: surface.Mesh,
    flow: OuterFlow,
    steps: int,
    dt: float,
    h_wm: float,
    nu: float,
    rho: float = 1.0,
    legacy: bool = False,
    mode=surface.GradientMode.GLOBAL_VECTOR,
    filter_passes: int = 0,
    record_every: int = 1,
    constants=DEFAULT_CONSTANTS,
) -> CoupledResult:
    """March every wall face of ``mesh`` for ``steps`` steps.

    Faces start from the plug-flow state of the outer flow at t = 0.
    Rows of the time series are recorded every ``record_every`` steps.
    """
    fmap = surface.build_face_cell_map(mesh)
    match_pts = np.array([f.centroid - h_wm * f.unit_normal for f in mesh.wall_faces])
    t = 0.0
    gu, gw, _, _ = flow.sample(match_pts, t)
    ul, wl = _to_local(mesh, gu, gw)
    states = [
        iwm.initial_state(float(a), float(b), h_wm, nu, rho, constants, legacy=legacy)
        for a, b in zip(ul, wl)
    ]
    result = CoupledResult(states)
    log = result.stage_log
    bundle = None
    for step in range(1, steps + 1):
        stage = STAGES[0]
        try:
            # wall stress would be applied as the LES Neumann condition here
            tau = np.array([[s.tau_w_x, s.tau_w_z] for s in states])
            if not np.all(np.isfinite(tau)):
                raise ValueError("non-finite wall stress")
            log.append((step, stage))

            stage = STAGES[1]
            fields = {
                name: surface.WallScalarField(
                    [getattr(s.integrals, name) for s in states],
                    {"l_x": surface.Frame.LOCAL_X, "l_z": surface.Frame.LOCAL_Z}.get(name, surface.Frame.FRAME_FREE),
                )
                for name in surface.TERM_NAMES
            }
            log.append((step, stage))

            stage = STAGES[2]
            cg = surface.cell_gradients(fields, mesh, fmap, mode)
            log.append((step, stage))

            stage = STAGES[3]
            t_new = t + dt
            gu, gw, gpx, gpz = flow.sample(match_pts, t_new)
            log.append((step, stage))

            stage = STAGES[4]
            bundle = surface.face_gradients(cg, mesh, fmap, h_wm)
            if filter_passes:
                bundle = surface.spatial_filter(bundle, mesh, filter_passes)
            ul, wl = _to_local(mesh, gu, gw)
            pxl, pzl = _to_local(mesh, gpx, gpz)
            log.append((step, stage))

            stage = STAGES[5]
            new_states = []
            for f in mesh.wall_faces:
                m = iwm.MatchingData(
                    float(ul[f.id]),
                    float(wl[f.id]),
                    float(pxl[f.id]),
                    float(pzl[f.id]),
                    bundle.for_face(f.id),
                    dt,
                )
                new_states.append(iwm.advance_face(states[f.id], m, h_wm, nu, rho, constants))
            states = new_states
            t = t_new
            log.append((step, stage))
        except WallModelError as exc:
            if isinstance(exc, StageError):
                raise
            raise StageError(stage, step, exc) from exc
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            raise StageError(stage, step, exc) from exc

        if step % record_every == 0 or step == steps:
            for f, s in zip(mesh.wall_faces, states):
                g = bundle.values[f.id]
                result.rows.append(
                    (
                        step,
                        repr(float(s.time)),
                        f.id,
                        repr(float(s.u_match)),
                        repr(float(s.w_match)),
                        repr(float(s.params.u_tau)),
                        repr(float(s.tau_w_x)),
                        repr(float(s.tau_w_z)),
                        repr(float(s.params.a_x)),
                        repr(float(s.integrals.l_x)),
                        repr(float(g[0])),
                        repr(float(g[4])),
                        s.newton_iterations,
                        int(s.fallback),
                    )
                )
    result.states = states
    result.last_gradients = bundle
    return result


def stage_sequence_ok(log) -> bool:
    """True if the log is whole steps of ``STAGES`` in order."""
    if len(log) % len(STAGES):
        return False
    for k, (step, stage) in enumerate(log):
        if stage != STAGES[k % len(STAGES)] or step != k // len(STAGES) + 1:
            return False
    return True


CHECKPOINT_HEADER = (
    "face_id",
    "u_tau",
    "u_tau_x",
    "u_tau_z",
    "a_x",
    "a_z",
    "c_x",
    "c_z",
    "delta_i",
    "l_x",
    "l_z",
    "l_xx",
    "l_zz",
    "l_xz",
    "tau_w_x",
    "tau_w_z",
    "tau_h_x",
    "tau_h_z",
    "time",
    "legacy",
)


def checkpoint_csv(states) -> str:
    """Per-face IWM state: eight parameters, five integrals, stresses, time."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CHECKPOINT_HEADER)
    for fid, s in enumerate(states):
        p, li = s.params, s.integrals
        vals = (
            p.u_tau, p.u_tau_x, p.u_tau_z, p.a_x, p.a_z, p.c_x, p.c_z, p.delta_i,
            li.l_x, li.l_z, li.l_xx, li.l_zz, li.l_xz,
            s.tau_w_x, s.tau_w_z, s.tau_h_x, s.tau_h_z, s.time,
        )
        w.writerow([fid, *(repr(float(v)) for v in vals), int(p.legacy)])
    return buf.getvalue()


def read_checkpoint(text: str, h_wm: float, nu: float, rho: float = 1.0, constants=DEFAULT_CONSTANTS) -> list:
    """Rebuild face states from :func:`checkpoint_csv` output (integrals are re-evaluated)."""
    rows = list(csv.DictReader(io.StringIO(text)))
    states = []
    for r in sorted(rows, key=lambda r: int(r["face_id"])):
        p = iwm.IwmParams(
            *(float(r[k]) for k in CHECKPOINT_HEADER[1:9]), legacy=bool(int(r["legacy"]))
        )
        st = iwm.state_from_params(p, h_wm, nu, rho, constants, float(r["time"]))
        states.append(st)
    return states


def homogeneity_defect(states) -> float:
    """Largest relative spread of any stored state quantity across faces."""
    cols = np.array(
        [
            [
                s.params.u_tau, s.params.a_x, s.params.a_z, s.params.c_x, s.params.c_z,
                s.integrals.l_x, s.integrals.l_z, s.integrals.l_xx, s.tau_w_x, s.tau_w_z,
            ]
            for s in states
        ]
    )
    spread = cols.max(axis=0) - cols.min(axis=0)
    scale = np.maximum(np.abs(cols).max(axis=0), 1e-300)
    return float(np.max(spread / scale))
