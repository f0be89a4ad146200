"""Configuration-driven Monte Carlo experiments.

One experiment simulates N replications of a model over horizon T,
optionally contaminates the observations, runs every configured filter
over the same observation stream (paired comparison), and reports
per-time and aggregate mean squared state errors with standard errors.

Replication i draws from the documented sub-streams (seed, SIM, i) and
(seed, CONTAMINATE, i), so a single replication is bit-identical to
simulate_ideal/contaminate called with rep=i.  Reports carry no
wall-clock information; (config, seed) fully determine every byte.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import minimax, models, rls, rng
from ._mat import psd_factor
from .errors import ValidationError
from .kalman import covariance_path

_METHODS = ("classical", "rls-ao", "rls-io")
_CAL_METHODS = {"rls-ao": ("radius", "delta", "fixed"), "rls-io": ("radius", "fixed")}


@dataclass
class FilterSpec:
    """One competitor: a correction method plus how to pick its clipping."""

    name: str
    method: str
    calibration: Optional[dict] = None

    def __post_init__(self, _where="filter"):
        if self.method not in _METHODS:
            raise ValidationError(f"unknown method {self.method!r}; use one of {_METHODS}",
                                  field=f"{_where}.method")
        if self.method == "classical":
            if self.calibration is not None:
                raise ValidationError("classical takes no calibration",
                                      field=f"{_where}.calibration")
            return
        cal = self.calibration
        if not isinstance(cal, dict) or "method" not in cal:
            raise ValidationError("calibration object with a 'method' key required",
                                  field=f"{_where}.calibration")
        allowed = _CAL_METHODS[self.method]
        if cal["method"] not in allowed:
            raise ValidationError(f"calibration method must be one of {allowed}",
                                  field=f"{_where}.calibration.method")
        if cal["method"] == "radius":
            r = cal.get("r")
            if r is None or not 0.0 <= float(r) <= 1.0:
                raise ValidationError("need r in [0, 1]", field=f"{_where}.calibration.r")
        elif cal["method"] == "delta":
            d = cal.get("delta")
            if d is None or float(d) < 0.0:
                raise ValidationError("need delta >= 0", field=f"{_where}.calibration.delta")
        else:  # fixed
            b = cal.get("b")
            b = math.inf if b == "inf" else b
            if b is None or float(b) < 0.0:
                raise ValidationError("need b >= 0 (or \"inf\")",
                                      field=f"{_where}.calibration.b")

    @classmethod
    def from_dict(cls, d, where):
        if not isinstance(d, dict) or "method" not in d:
            raise ValidationError("filter object with a 'method' key required", field=where)
        unknown = set(d) - {"name", "method", "calibration"}
        if unknown:
            raise ValidationError(f"unknown keys {sorted(unknown)}", field=where)
        spec = cls.__new__(cls)
        spec.name = d.get("name", d["method"])
        spec.method = d["method"]
        spec.calibration = d.get("calibration")
        spec.__post_init__(_where=where)
        return spec

    def to_dict(self):
        out = {"name": self.name, "method": self.method}
        if self.calibration is not None:
            out["calibration"] = dict(self.calibration)
        return out


@dataclass
class ExperimentConfig:
    model: models.ModelSpec
    horizon: int
    replications: int
    seed: int
    filters: list
    contamination: Optional[dict] = None
    # resolved declarative contamination, None for absent or least-favorable
    _spec: Optional[models.ContaminationSpec] = field(default=None, repr=False)

    def __post_init__(self):
        self.horizon = int(self.horizon)
        self.replications = int(self.replications)
        if self.replications < 1:
            raise ValidationError("need at least one replication", field="replications")
        if not self.filters:
            raise ValidationError("need at least one filter", field="filters")
        if self.seed is None:
            raise ValidationError("seed is required (no wall-clock seeding)", field="seed")
        self.seed = int(self.seed)
        names = [f.name for f in self.filters]
        if len(set(names)) != len(names):
            raise ValidationError("filter names must be unique (set 'name')", field="filters")
        self.model.check_horizon(self.horizon)
        if self.contamination is not None:
            law = self.contamination.get("law", {})
            if isinstance(law, dict) and law.get("kind") == "least-favorable":
                if self.contamination.get("kind") != "SO":
                    raise ValidationError("least-favorable law is a whole-observation "
                                          "replacement; kind must be SO",
                                          field="contamination.kind")
                r = float(self.contamination.get("r", -1.0))
                if not 0.0 < r < 1.0:
                    raise ValidationError("least-favorable law needs r in (0, 1)",
                                          field="contamination.r")
                if self.model.q != 1 or self.horizon != 1:
                    raise ValidationError(
                        "least-favorable law is resolved against the one-step problem; "
                        "needs q = 1 and horizon = 1", field="contamination.law")
                self._spec = None
            else:
                self._spec = models.ContaminationSpec.from_dict(self.contamination)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ValidationError("config must be a JSON object")
        required = ("model", "horizon", "replications", "seed", "filters")
        missing = [k for k in required if k not in d]
        if missing:
            raise ValidationError(f"missing keys {missing}", field="config")
        unknown = set(d) - set(required) - {"contamination"}
        if unknown:
            raise ValidationError(f"unknown keys {sorted(unknown)}", field="config")
        model = models.ModelSpec.from_dict(d["model"])
        if not isinstance(d["filters"], list):
            raise ValidationError("filters must be a list", field="filters")
        filters = [FilterSpec.from_dict(f, where=f"filters[{i}]")
                   for i, f in enumerate(d["filters"])]
        return cls(model=model, horizon=d["horizon"], replications=d["replications"],
                   seed=d["seed"], filters=filters, contamination=d.get("contamination"))

    def to_dict(self):
        out = {"model": self.model.to_dict(), "horizon": self.horizon,
               "replications": self.replications, "seed": self.seed,
               "filters": [f.to_dict() for f in self.filters]}
        if self.contamination is not None:
            out["contamination"] = dict(self.contamination)
        return out


@dataclass
class ExperimentReport:
    config: dict
    meta: dict
    hit_rate: Optional[float]
    filters: list
    comparisons: list

    def to_dict(self):
        return {"config": self.config, "meta": self.meta, "hit_rate": self.hit_rate,
                "filters": self.filters, "comparisons": self.comparisons}

    def csv_rows(self):
        yield ["filter", "t", "mse", "se", "b"]
        for f in self.filters:
            bs = f.get("b")
            for i, (m, s) in enumerate(zip(f["mse"], f["se"])):
                b = "" if bs is None else bs[i]
                yield [f["name"], i + 1, m, s, b]
            yield [f["name"], "all", f["aggregate_mse"], f["aggregate_se"], ""]


def _calibrate_filter(fspec, model, path, where):
    """Per-step clipping heights for one filter; None for classical."""
    if fspec.method == "classical":
        return None, None
    T = path["gain"].shape[0]
    cal = fspec.calibration
    engine = cal.get("engine")
    record = {"method": cal["method"]}
    if cal["method"] == "fixed":
        b = math.inf if cal["b"] == "inf" else float(cal["b"])
        return np.full(T, b), {**record, "b": b}
    bs = np.empty(T)
    residuals = []
    try:
        for t in range(1, T + 1):
            gain, Delta = path["gain"][t - 1], path["Delta"][t - 1]
            if cal["method"] == "radius":
                if fspec.method == "rls-io":
                    c = rls.calibrate_b_io(gain, model.Z_at(t), Delta, cal["r"], engine)
                else:
                    c = rls.calibrate_b_radius(gain, Delta, cal["r"], engine)
                record["r"] = float(cal["r"])
            else:  # delta
                trace = float(np.trace(path["Sigma_filt"][t]))
                c = rls.calibrate_b_delta(gain, Delta, trace, cal["delta"], engine)
                record["delta"] = float(cal["delta"])
            bs[t - 1] = c.b
            residuals.append(abs(c.residual))
    except ValidationError as exc:
        raise ValidationError(str(exc), field=where)
    record["max_residual"] = max(residuals)
    return bs, record


def _lf_observation_draws(model, r, u_mag, u_sign, engine=None):
    """Worst-case observation draws for the one-step problem, from the
    per-replication uniforms (shape (N, 1) each)."""
    ideal = minimax.IdealPair.from_model(model, 1)
    sp = minimax.solve_rho(ideal, r, engine)
    c, sigma_y = minimax.lf_threshold_scalar(ideal, sp)
    mags = minimax.lf_magnitudes(u_mag, c)
    signs = np.where(u_sign < 0.5, -1.0, 1.0)
    center = float((model.Z_at(1) @ (model.F_at(1) @ model.a0))[0])
    return (center + signs * sigma_y * mags)[..., None]  # (N, T=1, q=1)


def run_experiment(config):
    """Simulate, contaminate, filter, and summarize.  See module docstring."""
    model = config.model
    T, N = config.horizon, config.replications
    p, q = model.p, model.q
    path = covariance_path(model, T)

    per_filter = []
    for i, fspec in enumerate(config.filters):
        bs, record = _calibrate_filter(fspec, model, path, where=f"filters[{i}]")
        per_filter.append((fspec, bs, record))

    # raw standard-normal blocks, one sub-stream per replication
    Z0 = np.empty((N, p))
    ZV = np.empty((N, T, p))
    ZE = np.empty((N, T, q))
    for i in range(N):
        gen = rng.stream(config.seed, rng.SIM, i)
        Z0[i], ZV[i], ZE[i] = models._ideal_normals(gen, T, p, q)

    hits = None
    draws = None
    lf_draws = None
    con = config.contamination
    spec = config._spec
    if con is not None:
        r = float(con["r"])
        hits = np.empty((N, T), dtype=bool)
        if spec is not None:
            dim = q if spec.kind in ("AO", "SO") else p
            draws = np.empty((N, T, dim))
            for i in range(N):
                gen = rng.stream(config.seed, rng.CONTAMINATE, i)
                hits[i] = gen.random(T) < r
                draws[i] = models.law_block(model, spec, dim, T, gen)
        else:  # least-favorable; draw order: hits, magnitudes, signs
            u_mag = np.empty((N, T))
            u_sign = np.empty((N, T))
            for i in range(N):
                gen = rng.stream(config.seed, rng.CONTAMINATE, i)
                hits[i] = gen.random(T) < r
                u_mag[i] = gen.random(T)
                u_sign[i] = gen.random(T)
            lf_draws = _lf_observation_draws(model, r, u_mag, u_sign)

    # transform to innovations/errors, then propagate the ensemble
    v = np.empty((N, T, p))
    eps = np.empty((N, T, q))
    fq = models._FactorCache(model.Q_at, "model.Q")
    fv = models._FactorCache(model.V_at, "model.V")
    for t in range(1, T + 1):
        v[:, t - 1] = ZV[:, t - 1] @ fq.at(t).T
        eps[:, t - 1] = ZE[:, t - 1] @ fv.at(t).T

    if spec is not None and spec.kind == "IO":
        replace = np.maximum.accumulate(hits, axis=1) if spec.persistent else hits
        v[replace] = draws[replace]

    x = np.empty((N, T + 1, p))
    y = np.empty((N, T, q))
    x[:, 0] = model.a0 + Z0 @ psd_factor(model.Q0, "model.Q0").T
    for t in range(1, T + 1):
        x[:, t] = x[:, t - 1] @ model.F_at(t).T + v[:, t - 1]
        y[:, t - 1] = x[:, t] @ model.Z_at(t).T + eps[:, t - 1]

    if spec is not None and spec.kind == "SO":
        y[hits] = draws[hits]
    elif spec is not None and spec.kind == "AO":
        for t in range(1, T + 1):
            m = hits[:, t - 1]
            if m.any():
                y[m, t - 1] = x[m, t] @ model.Z_at(t).T + draws[m, t - 1]
    elif lf_draws is not None:
        y[hits] = lf_draws[hits]

    # run every filter over the shared observations
    rep_means = {}
    results = []
    for fspec, bs, record in per_filter:
        sq = _ensemble_filter(model, path, x, y, fspec.method, bs)
        mse = sq.mean(axis=0)
        se = sq.std(axis=0, ddof=1) / math.sqrt(N) if N > 1 else np.zeros(T)
        rm = sq.mean(axis=1)
        rep_means[fspec.name] = rm
        entry = {"name": fspec.name, "method": fspec.method,
                 "mse": mse.tolist(), "se": se.tolist(),
                 "aggregate_mse": float(rm.mean()),
                 "aggregate_se": float(rm.std(ddof=1) / math.sqrt(N)) if N > 1 else 0.0}
        if bs is not None:
            entry["b"] = [float(b) for b in bs]
            entry["calibration"] = record
        results.append(entry)

    comparisons = []
    names = [f.name for f in config.filters]
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            d = rep_means[names[i]] - rep_means[names[j]]
            comparisons.append({
                "a": names[i], "b": names[j],
                "mean_diff": float(d.mean()),
                "se_diff": float(d.std(ddof=1) / math.sqrt(N)) if N > 1 else 0.0,
            })

    return ExperimentReport(
        config=config.to_dict(), meta=_metadata(),
        hit_rate=float(hits.mean()) if hits is not None else None,
        filters=results, comparisons=comparisons)


def _ensemble_filter(model, path, x, y, method, bs):
    """Squared state errors (N, T) of one filter over the ensemble."""
    N, T = y.shape[0], y.shape[1]
    x_filt = np.broadcast_to(model.a0, (N, model.p)).copy()
    sq = np.empty((N, T))
    for t in range(1, T + 1):
        x_pred = x_filt @ model.F_at(t).T
        gain = path["gain"][t - 1]
        innov = y[:, t - 1] - x_pred @ model.Z_at(t).T
        if method == "classical":
            x_filt = x_pred + innov @ gain.T
        elif method == "rls-ao":
            corr = innov @ gain.T
            x_filt = x_pred + corr * _clip_scale(corr, bs[t - 1])
        else:  # rls-io
            Zt = model.Z_at(t)
            weight = rls.io_residual_weight(gain, Zt)
            track = innov @ (weight + gain).T
            resid = innov @ weight.T
            x_filt = x_pred + track - resid * _clip_scale(resid, bs[t - 1])
        sq[:, t - 1] = np.sum((x[:, t] - x_filt) ** 2, axis=1)
    return sq


def _clip_scale(rows, b):
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    return np.minimum(1.0, b / np.maximum(norms, 1e-300))


def _metadata():
    import platform

    import numpy
    import scipy

    from . import __version__

    return {"package": __version__, "numpy": numpy.__version__,
            "scipy": scipy.__version__, "python": platform.python_version()}
