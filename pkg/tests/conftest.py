import math

import numpy as np
import pytest

from wallmodels import iwm
from wallmodels.harness.profiles import synthetic_reichardt, write_profile

H_WM = 0.1
NU = 1e-3


@pytest.fixture
def reichardt_file(tmp_path):
    """Re_tau = 1000 channel profile written in the two-column y+ format."""
    path = tmp_path / "reichardt_1000.dat"
    write_profile(synthetic_reichardt(1000.0), path)
    return path


@pytest.fixture(autouse=True)
def _output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("WALLMODELS_OUTPUT_DIR", str(tmp_path / "out"))


def random_params(rng, h_wm=H_WM, nu=NU):
    """A physically plausible modified-closure state.

    u_tau in [0.3, 3], arbitrary wall-stress direction, LES velocity
    within 60 degrees of it and within 20% of the log-law magnitude.
    """
    u_tau = rng.uniform(0.3, 3.0)
    theta = rng.uniform(0.0, 2.0 * np.pi)
    skew = rng.uniform(-1.0, 1.0) * np.pi / 3.0
    mag = u_tau * (math.log(h_wm * u_tau / nu) / 0.4 + 5.0) * rng.uniform(0.8, 1.2)
    u, w = mag * math.cos(theta + skew), mag * math.sin(theta + skew)
    p = iwm.params_from_scales(u_tau * math.cos(theta), u_tau * math.sin(theta), u, w, h_wm, nu)
    return p, u, w


def brute_force_integrals(params, h_wm, nu, n=20000):
    """Trapezoid sums of u, w, uu, ww, uw over sublayer and log region separately.

    Returns the five integrals and the matching integrals of |.|, used
    to scale the error.
    """
    d = params.delta_i
    y_in = np.linspace(0.0, d, n + 1)
    y_out = np.linspace(d, h_wm, n + 1)
    ui, wi = iwm.composite_profile(params, h_wm, nu, y_in)
    uo, wo = iwm.composite_profile(params, h_wm, nu, y_out)

    def integ(f):
        return np.trapezoid(f(ui, wi), y_in) + np.trapezoid(f(uo, wo), y_out)

    fns = [
        lambda u, w: u,
        lambda u, w: w,
        lambda u, w: u * u,
        lambda u, w: w * w,
        lambda u, w: u * w,
    ]
    vals = np.array([integ(f) for f in fns])
    mags = np.array([integ(lambda u, w, f=f: np.abs(f(u, w))) for f in fns])
    return vals, mags
