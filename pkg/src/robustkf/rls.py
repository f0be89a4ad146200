"""Robustified corrections (clipped Kalman updates) and their calibration.

The attenuating variant clips the classical correction radially:

    x_filt = x_pred + H_b(gain @ innovation),   H_b(w) = w min(1, b/|w|)

The tracking variant (square invertible Z only) instead clips the
residual between full tracking and the classical correction:

    x_filt = x_pred + [Z^-1 dy - H_b(Z^-1 dy - gain dy)]

so b = +inf recovers the classical filter and b = 0 follows the
observation outright.

Two calibrations pin down b per step.  The radius rule solves

    (1 - r) E (|W| - b)_+ = r b,        W = gain @ innovation (ideal law)

and the premium rule solves

    E (|W| - b)_+^2 = delta * trace(Sigma_filt)

which is the stated efficiency loss under the ideal model, granted the
(approximate) linearity of the ideal conditional mean.  Covariances keep
the classical recursion in both variants; b is recalibrated every step
from the current prediction covariance.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from . import engines
from ._mat import symmetrize
from .errors import ValidationError
from .kalman import innovation_stats

INF = float("inf")


def huberize(w, b):
    """Clip the vector w radially to norm at most b, preserving direction.

    b = +inf is the identity.  b = 0 collapses everything to zero (the
    full-tracking limit of the IO step); negative b is rejected.
    """
    if b < 0:
        raise ValidationError("clipping height b must be >= 0")
    w = np.asarray(w, dtype=np.float64)
    norm = float(np.linalg.norm(w))
    if norm <= b:
        return w.copy()
    return w * (b / norm)


def _huberize_rows(w, b):
    # batch variant used by the ensemble runner: w is (n, p)
    if math.isinf(b):
        return w.copy()
    norms = np.linalg.norm(w, axis=1)
    scale = np.ones_like(norms)
    np.divide(b, norms, out=scale, where=norms > b)
    return w * scale[:, None]


@dataclass
class ClipCalibration:
    """A clipping height with its provenance.

    method is "radius", "delta", "radius-range", or "fixed"; parameter is
    the r, delta, (r_l, r_u), or b that produced it.  residual is the
    plug-back residual of the calibration equation under the engine that
    solved it (0 by convention at the b = +inf / b = 0 boundaries).
    """

    b: float
    method: str
    parameter: Union[float, tuple]
    residual: float = 0.0
    engine: Optional[dict] = None
    seed: Optional[int] = None

    def to_dict(self):
        return {
            "method": self.method,
            "parameter": list(self.parameter) if isinstance(self.parameter, tuple)
            else self.parameter,
            "b": "inf" if math.isinf(self.b) else self.b,
            "residual": self.residual,
            "engine": self.engine,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        b = d["b"]
        b = INF if b in ("inf", "Infinity") else float(b)
        param = d["parameter"]
        if isinstance(param, list):
            param = tuple(param)
        return cls(b=b, method=d["method"], parameter=param,
                   residual=float(d.get("residual", 0.0)),
                   engine=d.get("engine"), seed=d.get("seed"))


def _radius_root(moments, r):
    """Solve (1-r) tail1(b) = r b for a strictly decreasing residual."""
    g = lambda b: (1.0 - r) * moments.tail1(b) - r * b
    b = engines.bisect_decreasing(g, lo=0.0, hi0=1.0, rtol=1e-9)
    return b, g(b)


def calibrate_b_radius(gain, Delta, r, engine=None):
    """Clipping height from the contamination radius r in [0, 1].

    r = 0 yields b = +inf (classical filter), r = 1 yields b = 0.
    """
    r = float(r)
    if not 0.0 <= r <= 1.0:
        raise ValidationError("radius r must lie in [0, 1]")
    eng = engines.resolve_engine(engine)
    if r == 0.0:
        return ClipCalibration(b=INF, method="radius", parameter=r, engine=eng.describe())
    if r == 1.0:
        return ClipCalibration(b=0.0, method="radius", parameter=r, engine=eng.describe())
    mom = engines.gaussian_norm_moments(gain, Delta, eng)
    b, resid = _radius_root(mom, r)
    return ClipCalibration(b=b, method="radius", parameter=r, residual=resid,
                           engine=mom.describe(), seed=mom.describe().get("seed"))


def calibrate_b_delta(gain, Delta, Sigma_filt_trace, delta, engine=None):
    """Clipping height from the tolerated ideal-model efficiency loss delta.

    delta = 0 recovers the classical filter (b = +inf).  The attainable
    premium is capped at E|W|^2 / trace(Sigma_filt); beyond the cap the
    solver returns b = 0 and reports the honest residual.
    """
    delta = float(delta)
    if delta < 0:
        raise ValidationError("efficiency loss delta must be >= 0")
    eng = engines.resolve_engine(engine)
    if delta == 0.0:
        return ClipCalibration(b=INF, method="delta", parameter=delta, engine=eng.describe())
    target = delta * float(Sigma_filt_trace)
    mom = engines.gaussian_norm_moments(gain, Delta, eng)
    g = lambda b: mom.tail2(b) - target
    b = engines.bisect_decreasing(g, lo=0.0, hi0=1.0, rtol=1e-9)
    return ClipCalibration(b=b, method="delta", parameter=delta, residual=g(b),
                           engine=mom.describe(), seed=mom.describe().get("seed"))


def io_residual_weight(gain, Z):
    """The matrix (Z^-1 - gain) whose innovation image is clipped by the IO step."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if Z.shape[0] != Z.shape[1]:
        raise ValidationError("IO correction needs a square observation matrix")
    if abs(np.linalg.det(Z)) < 1e-300:
        raise ValidationError("IO correction needs an invertible observation matrix")
    Zinv = np.linalg.inv(Z)
    return Zinv - np.atleast_2d(gain)


def calibrate_b_io(gain, Z, Delta, r, engine=None):
    """Radius-rule clipping height for the tracking (IO) correction.

    Uses the ideal law of W = (Z^-1 - gain) @ innovation.
    """
    r = float(r)
    if not 0.0 <= r <= 1.0:
        raise ValidationError("radius r must lie in [0, 1]")
    eng = engines.resolve_engine(engine)
    weight = io_residual_weight(gain, Z)
    if r == 0.0:
        return ClipCalibration(b=INF, method="radius", parameter=r, engine=eng.describe())
    if r == 1.0:
        return ClipCalibration(b=0.0, method="radius", parameter=r, engine=eng.describe())
    mom = engines.gaussian_norm_moments(weight, Delta, eng)
    b, resid = _radius_root(mom, r)
    return ClipCalibration(b=b, method="radius", parameter=r, residual=resid,
                           engine=mom.describe(), seed=mom.describe().get("seed"))


def rls_ao_step(state, model, y, b):
    """Correction with the update clipped to norm b; covariances classical."""
    if state.x_pred is None:
        raise ValidationError("correct requires a predicted state")
    t = state.t
    Zt = model.Z_at(t)
    y = np.asarray(y, dtype=np.float64).ravel()
    Delta, gain = innovation_stats(state, model)
    innovation = y - Zt @ state.x_pred
    x_filt = state.x_pred + huberize(gain @ innovation, b)
    Sigma_filt = symmetrize((np.eye(model.p) - gain @ Zt) @ state.Sigma_pred)
    return replace(state, x_filt=x_filt, Sigma_filt=Sigma_filt, gain=gain, Delta=Delta)


def rls_io_step(state, model, y, b_io):
    """Correction that follows the observation except for a clipped residual.

    Needs p = q and invertible Z so the observation maps back onto the
    state space; b_io = +inf gives the classical correction, b_io = 0
    full tracking.
    """
    if state.x_pred is None:
        raise ValidationError("correct requires a predicted state")
    if model.p != model.q:
        raise ValidationError("IO correction needs p == q")
    t = state.t
    Zt = model.Z_at(t)
    y = np.asarray(y, dtype=np.float64).ravel()
    Delta, gain = innovation_stats(state, model)
    weight = io_residual_weight(gain, Zt)          # Z^-1 - gain
    innovation = y - Zt @ state.x_pred
    Zinv_dy = (weight + gain) @ innovation          # Z^-1 @ innovation
    residual = weight @ innovation                  # Z^-1 dy - gain dy
    x_filt = state.x_pred + (Zinv_dy - huberize(residual, b_io))
    Sigma_filt = symmetrize((np.eye(model.p) - gain @ Zt) @ state.Sigma_pred)
    return replace(state, x_filt=x_filt, Sigma_filt=Sigma_filt, gain=gain, Delta=Delta)


def ao_corrector(b):
    """kf_correct-compatible closure with a fixed clipping height."""
    return lambda state, model, y: rls_ao_step(state, model, y, b)


def io_corrector(b_io):
    return lambda state, model, y: rls_io_step(state, model, y, b_io)


def filter_trajectory(model, ys, method="classical", bs=None):
    """Run one of the three corrections over an observation sequence.

    bs is the per-step clipping height array (ignored for classical);
    a scalar is broadcast.  Returns the list of FilterState.
    """
    from .kalman import run_filter

    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    T = ys.shape[0]
    if method == "classical":
        return run_filter(model, ys)
    if bs is None:
        raise ValidationError("clipped corrections need clipping heights")
    bs = np.broadcast_to(np.asarray(bs, dtype=np.float64), (T,))
    if method == "rls-ao":
        step = rls_ao_step
    elif method == "rls-io":
        step = rls_io_step
    else:
        raise ValidationError(f"unknown method {method!r}")

    def correct(state, model_, y):
        return step(state, model_, y, bs[state.t - 1])

    return run_filter(model, ys, correct=correct)
