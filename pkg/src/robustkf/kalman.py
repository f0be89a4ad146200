"""Classical Kalman filter: init/predict/correct and covariance recursions.

The correction uses the Moore-Penrose inverse of the innovation
covariance, so singular cases (V = 0, rank-deficient Z) pass through
without special-casing.  Covariance recursions depend only on the model,
never on the data; `covariance_path` exploits that.
"""

import csv
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ._mat import check_symmetric, symmetrize
from .errors import ValidationError

PINV_RTOL = 1e-12


def pinv_psd(a, rtol=PINV_RTOL):
    """Moore-Penrose inverse of a symmetric PSD matrix.

    Eigenvalues below ``rtol`` times the largest are treated as exact
    zeros.  Asymmetric input is rejected.
    """
    a = check_symmetric(a, "pinv_psd input")
    w, v = np.linalg.eigh(a)
    cut = rtol * max(float(w[-1]), 0.0)
    inv = np.where(w > cut, 1.0 / np.where(w > cut, w, 1.0), 0.0)
    return (v * inv) @ v.T


@dataclass
class FilterState:
    """One step of a filter run.

    After ``kf_predict`` only the prediction fields are fresh; after a
    correction all fields are populated.  States are values: every step
    returns a new one.
    """

    t: int
    x_pred: Optional[np.ndarray] = None
    Sigma_pred: Optional[np.ndarray] = None
    x_filt: Optional[np.ndarray] = None
    Sigma_filt: Optional[np.ndarray] = None
    gain: Optional[np.ndarray] = None
    Delta: Optional[np.ndarray] = None


def kf_init(model):
    """Start a filter run: x_{0|0} = a0, Sigma_{0|0} = Q0."""
    return FilterState(t=0, x_filt=model.a0.copy(), Sigma_filt=model.Q0.copy())


def kf_predict(state, model):
    """Propagate to time t+1: x_pred = F x_filt, Sigma_pred = F Sigma F' + Q."""
    if state.x_filt is None:
        raise ValidationError("predict requires a corrected (or initial) state")
    t = state.t + 1
    Ft = model.F_at(t)
    if Ft.shape[1] != state.x_filt.shape[0]:
        raise ValidationError("state dimension does not match model.F")
    x_pred = Ft @ state.x_filt
    Sigma_pred = symmetrize(Ft @ state.Sigma_filt @ Ft.T + model.Q_at(t))
    return FilterState(t=t, x_pred=x_pred, Sigma_pred=Sigma_pred)


def innovation_stats(state, model):
    """Innovation covariance and Kalman gain at the state's time step.

    Delta = Z Sigma_pred Z' + V;  gain = Sigma_pred Z' Delta^+.
    """
    t = state.t
    Zt = model.Z_at(t)
    Delta = symmetrize(Zt @ state.Sigma_pred @ Zt.T + model.V_at(t))
    gain = state.Sigma_pred @ Zt.T @ pinv_psd(Delta)
    return Delta, gain


def kf_correct(state, model, y):
    """Classical correction: x_filt = x_pred + gain (y - Z x_pred)."""
    if state.x_pred is None:
        raise ValidationError("correct requires a predicted state")
    t = state.t
    Zt = model.Z_at(t)
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape[0] != Zt.shape[0]:
        raise ValidationError(f"observation length {y.shape[0]}, expected {Zt.shape[0]}")
    Delta, gain = innovation_stats(state, model)
    innovation = y - Zt @ state.x_pred
    x_filt = state.x_pred + gain @ innovation
    Sigma_filt = symmetrize((np.eye(model.p) - gain @ Zt) @ state.Sigma_pred)
    return replace(state, x_filt=x_filt, Sigma_filt=Sigma_filt, gain=gain, Delta=Delta)


def covariance_path(model, T):
    """The data-independent covariance sequence for steps 1..T.

    Returns arrays Sigma_pred (T,p,p), Sigma_filt (T+1,p,p) with the
    initial covariance at index 0, gain (T,p,q), Delta (T,q,q).
    """
    model.check_horizon(T)
    p, q = model.p, model.q
    Sigma_pred = np.empty((T, p, p))
    Sigma_filt = np.empty((T + 1, p, p))
    gains = np.empty((T, p, q))
    Deltas = np.empty((T, q, q))
    Sigma_filt[0] = model.Q0
    st = FilterState(t=0, x_filt=np.zeros(p), Sigma_filt=model.Q0.copy())
    for t in range(1, T + 1):
        st = kf_predict(st, model)
        Sigma_pred[t - 1] = st.Sigma_pred
        Delta, gain = innovation_stats(st, model)
        Deltas[t - 1] = Delta
        gains[t - 1] = gain
        Zt = model.Z_at(t)
        Sigma_filt[t] = symmetrize((np.eye(p) - gain @ Zt) @ st.Sigma_pred)
        st = replace(st, x_filt=np.zeros(p), Sigma_filt=Sigma_filt[t])
    return {"Sigma_pred": Sigma_pred, "Sigma_filt": Sigma_filt,
            "gain": gains, "Delta": Deltas}


def run_filter(model, ys, correct=kf_correct):
    """Run predict/correct over observations y_1..y_T.

    ``correct`` is any function with the kf_correct signature, so the
    robust corrections slot in unchanged.  Returns the list of corrected
    states including the initial one.
    """
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    states = [kf_init(model)]
    model.check_horizon(len(ys))
    for y in ys:
        st = kf_predict(states[-1], model)
        states.append(correct(st, model, y))
    return states


def states_to_csv(states, path):
    """Export a filter run as CSV with header t,xhat_1..xhat_p,trace_sigma."""
    p = states[0].x_filt.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"xhat_{i+1}" for i in range(p)] + ["trace_sigma"])
        for st in states:
            w.writerow([str(st.t)] + [repr(float(v)) for v in st.x_filt]
                       + [repr(float(np.trace(st.Sigma_filt)))])
