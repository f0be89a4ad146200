"""Linear Gaussian state-space models, simulation, and contamination.

The ideal model is

    x_0 ~ N(a0, Q0)
    x_t = F_t x_{t-1} + v_t,   v_t ~ N(0, Q_t)
    y_t = Z_t x_t + e_t,       e_t ~ N(0, V_t)

with all draws independent and the hyper-parameters known (possibly
time-varying).  Three contamination mechanisms disturb a simulated
trajectory, each firing independently per step with probability r:

    AO  the observation error e_t is replaced; states untouched
    IO  the state innovation v_t is replaced; the distortion propagates
        through the state recursion (optionally persistently)
    SO  the observation y_t is replaced wholesale by an independent draw
"""

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng
from ._mat import check_psd, psd_factor
from .errors import ValidationError

_LAW_KINDS = ("point", "gaussian", "scaled-ideal")


def _as_vector(v, dim, name):
    # np.asarray(None) is a silent nan scalar, so reject missing values here
    if v is None:
        raise ValidationError("missing value", field=name)
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size != dim:
        raise ValidationError(f"expected length {dim}, got {v.size}", field=name)
    return v


def _normalize_sequence(m, rows, cols, name, psd=False):
    """Accept one matrix (broadcast over time) or a list of matrices."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim == 2:
        mats = [arr]
        broadcast = True
    elif arr.ndim == 3:
        mats = [arr[i] for i in range(arr.shape[0])]
        broadcast = False
    else:
        raise ValidationError(f"expected a matrix or list of matrices", field=name)
    out = []
    for i, a in enumerate(mats):
        label = name if broadcast else f"{name}[{i}]"
        if a.shape != (rows, cols):
            raise ValidationError(f"expected shape {(rows, cols)}, got {a.shape}", field=label)
        out.append(check_psd(a, label) if psd else a)
    return out[0] if broadcast else tuple(out)


class _Seq:
    """Indexing helper: one matrix broadcast over t, or a length-T tuple."""

    def __init__(self, value):
        self.value = value
        self.broadcast = isinstance(value, np.ndarray)

    def at(self, t):
        # t is the 1-based step index
        return self.value if self.broadcast else self.value[t - 1]

    def length_ok(self, T):
        return self.broadcast or len(self.value) == T


@dataclass
class ModelSpec:
    """Hyper-parameters of the linear Gaussian state-space model.

    F, Z, Q, V each accept a single matrix (constant over time) or a
    length-T list of matrices.  Dimensions: F p×p, Z q×p, Q p×p, V q×q,
    a0 length p, Q0 p×p.
    """

    F: object
    Z: object
    Q: object
    V: object
    a0: object
    Q0: object
    p: int = field(init=False)
    q: int = field(init=False)

    def __post_init__(self):
        F0 = np.asarray(self.F, dtype=np.float64)
        first_F = F0 if F0.ndim == 2 else F0[0]
        p = first_F.shape[0]
        Z0 = np.asarray(self.Z, dtype=np.float64)
        first_Z = Z0 if Z0.ndim == 2 else Z0[0]
        q = first_Z.shape[0]
        self.p, self.q = int(p), int(q)
        self.F = _normalize_sequence(self.F, p, p, "model.F")
        self.Z = _normalize_sequence(self.Z, q, p, "model.Z")
        self.Q = _normalize_sequence(self.Q, p, p, "model.Q", psd=True)
        self.V = _normalize_sequence(self.V, q, q, "model.V", psd=True)
        self.a0 = _as_vector(self.a0, p, "model.a0")
        self.Q0 = check_psd(np.asarray(self.Q0, dtype=np.float64), "model.Q0")
        if self.Q0.shape != (p, p):
            raise ValidationError(f"expected shape {(p, p)}", field="model.Q0")
        self._seqs = {k: _Seq(getattr(self, k)) for k in ("F", "Z", "Q", "V")}

    def F_at(self, t):
        return self._seqs["F"].at(t)

    def Z_at(self, t):
        return self._seqs["Z"].at(t)

    def Q_at(self, t):
        return self._seqs["Q"].at(t)

    def V_at(self, t):
        return self._seqs["V"].at(t)

    def check_horizon(self, T):
        if T < 1:
            raise ValidationError("horizon T must be >= 1", field="T")
        for k, s in self._seqs.items():
            if not s.length_ok(T):
                raise ValidationError(
                    f"time-varying model.{k} has length {len(s.value)}, horizon is {T}"
                )

    def state_moments(self, T):
        """Unconditional state mean/covariance paths m_0..m_T, P_0..P_T."""
        m = [self.a0]
        P = [self.Q0]
        for t in range(1, T + 1):
            Ft = self.F_at(t)
            m.append(Ft @ m[-1])
            P.append(Ft @ P[-1] @ Ft.T + self.Q_at(t))
        return m, P

    def to_dict(self):
        def seq(v):
            return v.tolist() if isinstance(v, np.ndarray) else [a.tolist() for a in v]

        return {
            "F": seq(self.F), "Z": seq(self.Z), "Q": seq(self.Q), "V": seq(self.V),
            "a0": self.a0.tolist(), "Q0": self.Q0.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        missing = [k for k in ("F", "Z", "Q", "V", "a0", "Q0") if k not in d]
        if missing:
            raise ValidationError(f"missing keys {missing}", field="model")
        return cls(F=d["F"], Z=d["Z"], Q=d["Q"], V=d["V"], a0=d["a0"], Q0=d["Q0"])


@dataclass
class ContaminationSpec:
    """Which mechanism fires, how often, and what it draws.

    ``law`` is one of
        {"kind": "point", "c": [...]}
        {"kind": "gaussian", "mean": [...], "cov": [[...]]}
        {"kind": "scaled-ideal", "kappa": k}
    ``persistent`` (IO only) extends every hit to all later steps, which
    turns an innovation hit into a sustained level shift.
    """

    kind: str
    r: float
    law: dict
    persistent: bool = False

    def __post_init__(self):
        if self.kind not in ("AO", "IO", "SO"):
            raise ValidationError(f"unknown kind {self.kind!r}", field="contamination.kind")
        self.r = float(self.r)
        if not 0.0 <= self.r <= 1.0:
            raise ValidationError("radius r must lie in [0, 1]", field="contamination.r")
        if not isinstance(self.law, dict) or self.law.get("kind") not in _LAW_KINDS:
            raise ValidationError(
                f"law.kind must be one of {_LAW_KINDS}", field="contamination.law"
            )
        if self.persistent and self.kind != "IO":
            raise ValidationError("persistent only applies to IO", field="contamination.persistent")
        if self.law["kind"] == "scaled-ideal" and not float(self.law.get("kappa", 0)) > 0:
            raise ValidationError("kappa must be > 0", field="contamination.law.kappa")

    def to_dict(self):
        d = {"kind": self.kind, "r": self.r, "law": dict(self.law)}
        if self.persistent:
            d["persistent"] = True
        return d

    @classmethod
    def from_dict(cls, d):
        for k in ("kind", "r", "law"):
            if k not in d:
                raise ValidationError(f"missing key {k!r}", field="contamination")
        return cls(kind=d["kind"], r=d["r"], law=d["law"],
                   persistent=bool(d.get("persistent", False)))


@dataclass
class Trajectory:
    """A simulated path: states x_0..x_T, observations y_1..y_T, hit flags."""

    T: int
    x: np.ndarray          # (T+1, p)
    y: np.ndarray          # (T, q)
    hits: np.ndarray       # (T,) bool
    seed: Optional[int] = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.hits = np.asarray(self.hits, dtype=bool)
        if self.x.shape[0] != self.T + 1 or self.y.shape[0] != self.T:
            raise ValidationError("state/observation lengths inconsistent with T")
        if self.hits.shape != (self.T,):
            raise ValidationError("hits length inconsistent with T")

    @property
    def p(self):
        return self.x.shape[1]

    @property
    def q(self):
        return self.y.shape[1]

    def csv_rows(self):
        header = (["t"] + [f"x_{i+1}" for i in range(self.p)]
                  + [f"y_{j+1}" for j in range(self.q)] + ["hit"])
        yield header
        # t = 0 carries the initial state only; no observation exists yet
        yield ["0"] + [repr(float(v)) for v in self.x[0]] + [""] * self.q + [""]
        for t in range(1, self.T + 1):
            yield ([str(t)] + [repr(float(v)) for v in self.x[t]]
                   + [repr(float(v)) for v in self.y[t - 1]]
                   + ["1" if self.hits[t - 1] else "0"])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(self.csv_rows())

    @classmethod
    def from_csv(cls, path):
        try:
            with open(path, newline="") as fh:
                rows = list(csv.reader(fh))
        except FileNotFoundError:
            raise ValidationError(f"trajectory file not found: {path}")
        if not rows or rows[0][0] != "t":
            raise ValidationError("not a trajectory CSV (missing 't' header)", field=str(path))
        header = rows[0]
        p = sum(1 for h in header if h.startswith("x_"))
        q = sum(1 for h in header if h.startswith("y_"))
        body = rows[1:]
        T = len(body) - 1
        x = np.zeros((T + 1, p))
        y = np.zeros((T, q))
        hits = np.zeros(T, dtype=bool)
        for row in body:
            t = int(row[0])
            x[t] = [float(v) for v in row[1:1 + p]]
            if t >= 1:
                y[t - 1] = [float(v) for v in row[1 + p:1 + p + q]]
                hits[t - 1] = row[1 + p + q] == "1"
        return cls(T=T, x=x, y=y, hits=hits)


def simulate_ideal(model, T, seed, rep=None):
    """Simulate one ideal trajectory.

    Draw order (fixed forever, so equal seeds give bit-identical output):
    the x_0 normals, then the whole block of state-innovation normals
    (T x p, row-major), then the whole block of observation-error normals
    (T x q).  ``rep`` selects a replication sub-stream; the ensemble
    runner uses the same derivation, so its replication i reproduces
    simulate_ideal(..., rep=i) exactly.
    """
    T = int(T)
    if T < 1:
        raise ValidationError("horizon T must be >= 1", field="T")
    model.check_horizon(T)
    path = (rng.SIM,) if rep is None else (rng.SIM, int(rep))
    gen = rng.stream(seed, *path)
    z0, zv, ze = _ideal_normals(gen, T, model.p, model.q)
    x, y = _propagate(model, T, z0, zv, ze)
    return Trajectory(T=T, x=x, y=y, hits=np.zeros(T, dtype=bool), seed=int(seed))


def _ideal_normals(gen, T, p, q):
    return (gen.standard_normal(p),
            gen.standard_normal((T, p)),
            gen.standard_normal((T, q)))


def _propagate(model, T, z0, zv, ze):
    """Build the trajectory from raw standard-normal blocks."""
    p, q = model.p, model.q
    L0 = psd_factor(model.Q0, "model.Q0")
    factors_q = _FactorCache(model.Q_at, "model.Q")
    factors_v = _FactorCache(model.V_at, "model.V")
    x = np.empty((T + 1, p))
    y = np.empty((T, q))
    x[0] = model.a0 + L0 @ z0
    for t in range(1, T + 1):
        x[t] = model.F_at(t) @ x[t - 1] + factors_q.at(t) @ zv[t - 1]
        y[t - 1] = model.Z_at(t) @ x[t] + factors_v.at(t) @ ze[t - 1]
    return x, y


class _FactorCache:
    """Cholesky-like factors of a (possibly time-varying) covariance."""

    def __init__(self, accessor, name):
        self.accessor = accessor
        self.name = name
        self._cache = {}

    def at(self, t):
        mat = self.accessor(t)
        key = id(mat)
        if key not in self._cache:
            self._cache[key] = psd_factor(mat, self.name)
        return self._cache[key]


def law_block(model, spec, dim, T, gen):
    """Contaminating draws for all T steps, shape (T, dim).

    Drawn for every step whether or not it is hit, so the stream layout
    is fixed: vectorized runners can reproduce it without replaying hit
    patterns.  point laws consume no randomness.
    """
    law = spec.law
    kind = law["kind"]
    if kind == "point":
        c = _as_vector(law.get("c"), dim, "contamination.law.c")
        return np.tile(c, (T, 1))
    if kind == "gaussian":
        mean = _as_vector(law.get("mean"), dim, "contamination.law.mean")
        if law.get("cov") is None:
            raise ValidationError("missing value", field="contamination.law.cov")
        cov = check_psd(np.asarray(law["cov"], dtype=np.float64), "contamination.law.cov")
        if cov.shape != (dim, dim):
            raise ValidationError(f"expected shape {(dim, dim)}", field="contamination.law.cov")
        return mean + gen.standard_normal((T, dim)) @ psd_factor(cov).T
    # scaled-ideal: kappa times a fresh draw from the ideal component law
    kappa = float(law["kappa"])
    z = gen.standard_normal((T, dim))
    out = np.empty((T, dim))
    if spec.kind == "AO":
        cache = _FactorCache(model.V_at, "model.V")
        for t in range(1, T + 1):
            out[t - 1] = kappa * (cache.at(t) @ z[t - 1])
        return out
    if spec.kind == "IO":
        cache = _FactorCache(model.Q_at, "model.Q")
        for t in range(1, T + 1):
            out[t - 1] = kappa * (cache.at(t) @ z[t - 1])
        return out
    # SO: scaled copy of the ideal observation law at each t
    m, P = model.state_moments(T)
    for t in range(1, T + 1):
        Zt = model.Z_at(t)
        mean = Zt @ m[t]
        cov = Zt @ P[t] @ Zt.T + model.V_at(t)
        out[t - 1] = kappa * (mean + psd_factor(cov) @ z[t - 1])
    return out


def contaminate(model, ideal, spec, seed, rep=None):
    """Apply AO/IO/SO contamination to an ideal trajectory.

    Hit indicators are independent Bernoulli(r) per step; `hits` records
    the raw indicators (for persistent IO the replacement extends beyond
    them).  Draw order: T hit uniforms, then the full law block.
    Observation errors are recovered from the ideal trajectory, so AO/SO
    leave the state path untouched and IO leaves the observation errors
    untouched.
    """
    if ideal.p != model.p or ideal.q != model.q:
        raise ValidationError("trajectory dimensions do not match the model")
    T = ideal.T
    model.check_horizon(T)
    path = (rng.CONTAMINATE,) if rep is None else (rng.CONTAMINATE, int(rep))
    gen = rng.stream(seed, *path)
    hits = gen.random(T) < spec.r
    dim = model.q if spec.kind in ("AO", "SO") else model.p
    draws = law_block(model, spec, dim, T, gen)

    x = ideal.x.copy()
    y = ideal.y.copy()

    if spec.kind == "SO":
        y[hits] = draws[hits]
    elif spec.kind == "AO":
        for t in range(1, T + 1):
            if hits[t - 1]:
                y[t - 1] = model.Z_at(t) @ x[t] + draws[t - 1]
    else:  # IO
        eps = np.array([ideal.y[t - 1] - model.Z_at(t) @ ideal.x[t] for t in range(1, T + 1)])
        v = np.array([ideal.x[t] - model.F_at(t) @ ideal.x[t - 1] for t in range(1, T + 1)])
        replace = np.maximum.accumulate(hits) if spec.persistent else hits
        v[replace] = draws[replace]
        for t in range(1, T + 1):
            x[t] = model.F_at(t) @ x[t - 1] + v[t - 1]
            y[t - 1] = model.Z_at(t) @ x[t] + eps[t - 1]

    return Trajectory(T=T, x=x, y=y, hits=hits, seed=int(seed))
