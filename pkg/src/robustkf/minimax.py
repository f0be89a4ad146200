"""Worst-case contamination analysis for a single correction step.

The object of study is a pair (X, Y) under an ideal joint law, and the
family of laws where Y is replaced, with probability r, by a draw from an
arbitrary contaminating distribution.  Write

    D(y) = E_id[X | Y = y] - E X

for the centered conditional mean.  The minimax estimator clips D
radially at a threshold rho chosen so that the worst-case contamination,
which places its mass where |D(y)| > rho with density weight
proportional to (|D(y)|/rho - 1)_+, integrates to one:

    H(rho) = (1-r)/r * E_id (|D(Y)|/rho - 1)_+ = 1.

H is continuous and strictly decreasing with limits +inf and 0, so the
root exists whenever |D| is not degenerate at zero and is found by the
same bracketing bisection the calibrations use.  The minimax risk, the
risk of the clipped estimator under any specific contamination, the
extended problem with a state second-moment budget G, and the
least-favorable-radius construction for interval-known r all live here.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import engines, rng
from ._mat import check_psd, psd_factor
from .errors import NumericalError, ValidationError
from .kalman import covariance_path, pinv_psd

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass
class IdealPair:
    """The ideal joint law of (X, Y) that a correction step faces.

    Gaussian-linear pairs (Y = Z X + noise) carry their matrices and get
    closed forms; anything else supplies a sampler and a conditional-mean
    evaluator (the library never estimates E[X|Y] itself).
    """

    p: int
    q: int
    EX: np.ndarray
    trace_cov_X: float
    cond_var_term: float
    # gaussian-linear description (None for generic pairs)
    Sigma_X: Optional[np.ndarray] = None
    Z: Optional[np.ndarray] = None
    V: Optional[np.ndarray] = None
    Delta: Optional[np.ndarray] = None
    gain: Optional[np.ndarray] = None
    # generic description
    sampler: Optional[Callable] = field(default=None, repr=False)
    cond_mean: Optional[Callable] = field(default=None, repr=False)
    marginal_density: Optional[Callable] = field(default=None, repr=False)
    y_support: Optional[tuple] = None

    @property
    def gaussian_linear(self):
        return self.Sigma_X is not None

    @property
    def EY(self):
        if self.gaussian_linear:
            return self.Z @ self.EX
        return None

    @property
    def mean_sq_X(self):
        return self.trace_cov_X + float(self.EX @ self.EX)

    @classmethod
    def from_gaussian(cls, Sigma_X, Z, V, EX=None):
        Sigma_X = check_psd(np.atleast_2d(np.asarray(Sigma_X, dtype=np.float64)), "Sigma_X")
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        V = check_psd(np.atleast_2d(np.asarray(V, dtype=np.float64)), "V")
        p = Sigma_X.shape[0]
        q = Z.shape[0]
        if Z.shape != (q, p) or V.shape != (q, q):
            raise ValidationError("inconsistent shapes for (Sigma_X, Z, V)")
        EX = np.zeros(p) if EX is None else np.asarray(EX, dtype=np.float64).ravel()
        Delta = Z @ Sigma_X @ Z.T + V
        gain = Sigma_X @ Z.T @ pinv_psd(Delta)
        cond_var = float(np.trace((np.eye(p) - gain @ Z) @ Sigma_X))
        return cls(p=p, q=q, EX=EX, trace_cov_X=float(np.trace(Sigma_X)),
                   cond_var_term=cond_var, Sigma_X=Sigma_X, Z=Z, V=V,
                   Delta=Delta, gain=gain)

    @classmethod
    def from_model(cls, model, t=1):
        """The (state-prediction-error, innovation) pair of a filter step.

        Both components are centered, so EX = 0 and the pair's Sigma_X is
        the prediction covariance at step t.
        """
        path = covariance_path(model, t)
        return cls.from_gaussian(path["Sigma_pred"][t - 1], model.Z_at(t), model.V_at(t))

    @classmethod
    def from_sampler(cls, p, q, sampler, cond_mean, EX=None, marginal_density=None,
                     y_support=None, moments_n=200_000, seed=0):
        """Generic pair; second moments estimated once by Monte Carlo."""
        EX = np.zeros(p) if EX is None else np.asarray(EX, dtype=np.float64).ravel()
        gen = rng.stream(seed, rng.ENGINE, 0)
        X, Y = sampler(gen, moments_n)
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[0] != moments_n:
            X = X.T
        centered = X - EX
        trace_cov = float(np.mean(np.sum(centered**2, axis=1)))
        resid = X - np.atleast_2d(cond_mean(Y)).reshape(X.shape)
        cond_var = float(np.mean(np.sum(resid**2, axis=1)))
        return cls(p=p, q=q, EX=EX, trace_cov_X=trace_cov, cond_var_term=cond_var,
                   sampler=sampler, cond_mean=cond_mean,
                   marginal_density=marginal_density, y_support=y_support)

    # -- evaluators ----------------------------------------------------

    def shift(self, y):
        """D(y) = E[X|Y=y] - EX, for y of shape (q,) or (n, q)."""
        y = np.asarray(y, dtype=np.float64)
        single = y.ndim <= 1 and self.q >= 1 and y.size == self.q
        rows = y.reshape(1, self.q) if single else np.atleast_2d(y).reshape(-1, self.q)
        if self.gaussian_linear:
            out = (rows - self.EY) @ self.gain.T
        else:
            out = np.atleast_2d(self.cond_mean(rows)).reshape(-1, self.p) - self.EX
        return out[0] if single else out

    def shift_norms(self, y):
        return np.linalg.norm(np.atleast_2d(self.shift(y)), axis=1)

    def shift_norm_moments(self, engine=None):
        """Tail functionals of |D(Y)| under the ideal law."""
        eng = engines.resolve_engine(engine)
        if self.gaussian_linear:
            return engines.gaussian_norm_moments(self.gain, self.Delta, eng)
        if (eng.kind in ("auto", "quadrature") and self.q == 1
                and self.marginal_density is not None and self.y_support is not None):
            return _QuadratureMoments(self)
        if self.sampler is None:
            raise ValidationError("generic pair needs a sampler for Monte Carlo moments")
        gen = rng.stream(eng.seed, rng.ENGINE, 1)
        _, Y = self.sampler(gen, eng.n)
        norms = self.shift_norms(Y)
        return engines.EmpiricalMoments(
            norms, {"kind": "monte-carlo", "n": eng.n, "seed": eng.seed})

    def sample(self, gen, n):
        """Draw n ideal pairs (X: (n,p), Y: (n,q))."""
        if self.gaussian_linear:
            X = self.EX + gen.standard_normal((n, self.p)) @ psd_factor(self.Sigma_X).T
            noise = gen.standard_normal((n, self.q)) @ psd_factor(self.V).T
            return X, X @ self.Z.T + noise
        if self.sampler is None:
            raise ValidationError("generic pair has no sampler")
        X, Y = self.sampler(gen, n)
        return (np.atleast_2d(np.asarray(X, float)).reshape(n, self.p),
                np.atleast_2d(np.asarray(Y, float)).reshape(n, self.q))

    def y_density(self, y):
        """Marginal density of Y (scalar observation only)."""
        y = np.asarray(y, dtype=np.float64).ravel()
        if self.gaussian_linear:
            if self.q != 1:
                raise ValidationError("marginal density implemented for q = 1")
            var = float(self.Delta[0, 0])
            mu = float(self.EY[0])
            return np.exp(-0.5 * (y - mu) ** 2 / var) / math.sqrt(var) / _SQRT_2PI
        if self.marginal_density is None:
            raise ValidationError("generic pair has no marginal density")
        return np.asarray(self.marginal_density(y), dtype=np.float64)


class _QuadratureMoments:
    """Adaptive-quadrature functionals of |D(Y)| for 1-d generic pairs."""

    tolerance = 1e-6

    def __init__(self, pair):
        self.pair = pair
        self.lo, self.hi = pair.y_support

    def describe(self):
        return {"kind": "quadrature"}

    def _integrate(self, f):
        from scipy.integrate import quad

        pair = self.pair
        g = lambda y: f(float(pair.shift_norms(np.array([y]))[0])) * float(pair.y_density(np.array([y]))[0])
        val, _ = quad(g, self.lo, self.hi, limit=200)
        return val

    def tail1(self, b):
        if math.isinf(b):
            return 0.0
        return self._integrate(lambda d: max(d - b, 0.0))

    def tail2(self, b):
        if math.isinf(b):
            return 0.0
        return self._integrate(lambda d: max(d - b, 0.0) ** 2)

    def clipped_sq(self, c):
        return self._integrate(lambda d: d * d * min(1.0, c / d) if d > 0 else 0.0)

    def clipped_sq2(self, c):
        return self._integrate(lambda d: d * d * min(1.0, c / d) ** 2 if d > 0 else 0.0)

    @property
    def mean_sq(self):
        return self._integrate(lambda d: d * d)

    @property
    def abs_mean(self):
        return self._integrate(lambda d: d)

    def se(self, *_):
        return 0.0


@dataclass
class SaddlePoint:
    """Solved worst-case problem: threshold, risk, and bookkeeping."""

    r: float
    rho: float
    risk: float
    normalization_residual: float
    kind: str = "so"
    pair: Optional[IdealPair] = field(default=None, repr=False, compare=False)
    _estimator: Optional[Callable] = field(default=None, repr=False, compare=False)

    def estimate(self, y):
        """The minimax estimator f(y), vectorized over rows of y."""
        if self._estimator is None:
            raise ValidationError("saddle point carries no estimator")
        return self._estimator(y)

    def to_dict(self):
        return {"r": self.r, "rho": self.rho, "risk": self.risk,
                "normalization_residual": self.normalization_residual,
                "kind": self.kind}


def _clip_weights(norms, rho):
    return np.minimum(1.0, rho / np.maximum(norms, 1e-300))


def solve_rho(ideal, r, engine=None):
    """Solve H(rho) = 1 and assemble the saddle point.

    Requires 0 < r < 1; at the boundaries H degenerates.  Reports a
    numerical failure when |D| is degenerate at zero (H never reaches 1).
    """
    r = float(r)
    if not 0.0 < r < 1.0:
        raise ValidationError("radius r must lie strictly inside (0, 1)")
    mom = ideal.shift_norm_moments(engine)
    if mom.abs_mean <= 0.0:
        raise NumericalError("conditional-mean shift is degenerate at zero; "
                             "the normalization H never crosses 1")
    ratio = (1.0 - r) / r

    def h_minus_one(s):
        return ratio * mom.tail1(s) / s - 1.0

    rho = engines.bisect_decreasing(h_minus_one, lo=1e-12, hi0=1.0, rtol=1e-9)
    if rho <= 1e-12:
        raise NumericalError("normalization root collapsed to the lower bracket")
    risk = ideal.trace_cov_X - (1.0 - r) * mom.clipped_sq(rho)
    resid = abs(h_minus_one(rho))

    def estimator(y):
        shifts = np.atleast_2d(ideal.shift(y))
        w = _clip_weights(np.linalg.norm(shifts, axis=1), rho)
        out = ideal.EX + shifts * w[:, None]
        return out[0] if np.asarray(y).ndim <= 1 and np.asarray(y).size == ideal.q else out

    return SaddlePoint(r=r, rho=rho, risk=risk, normalization_residual=resid,
                       kind="so", pair=ideal, _estimator=estimator)


def lf_density_weight(y, sp, ideal):
    """Density weights of the worst-case contamination at y.

    Returns (di_weight, re_density_factor): the density of the
    contaminating component relative to the ideal marginal, and the
    density factor of the full contaminated law.  di_weight is positive
    exactly where |D(y)| exceeds rho.
    """
    norms = ideal.shift_norms(y)
    di = (1.0 - sp.r) / sp.r * np.clip(norms / sp.rho - 1.0, 0.0, None)
    re = (1.0 - sp.r) + sp.r * di
    if np.asarray(y).ndim <= 1 and np.asarray(y).size == ideal.q:
        return float(di[0]), float(re[0])
    return di, re


def lf_threshold_scalar(ideal, sp):
    """(c, sigma_y): the standardized clipping threshold and observation
    scale for a scalar-observation Gaussian-linear pair."""
    if not (ideal.gaussian_linear and ideal.q == 1):
        raise ValidationError("worst-case sampling implemented for scalar-observation "
                              "Gaussian-linear pairs only")
    gnorm = float(np.linalg.norm(ideal.gain[:, 0]))
    if gnorm <= 0:
        raise NumericalError("zero gain; contaminating law undefined")
    sigma_y = math.sqrt(float(ideal.Delta[0, 0]))
    return sp.rho / gnorm / sigma_y, sigma_y


def lf_magnitudes(u, c):
    """Inverse CDF of the standardized worst-case magnitude law.

    The law on (c, inf) has density (s - c) phi(s) / K with
    K = phi(c) - c Phi(-c); its CDF inverts only numerically, so this
    bisects (u in [0, 1), vectorized).
    """
    from scipy.special import ndtr as vec_ndtr

    u = np.asarray(u, dtype=np.float64)
    phi_c = math.exp(-0.5 * c * c) / _SQRT_2PI
    Phi_c = 0.5 * math.erfc(-c / math.sqrt(2.0))
    total = phi_c - c * (1.0 - Phi_c)
    target = u * total
    lo = np.full(u.shape, c)
    hi = np.full(u.shape, c + 20.0)  # mass beyond is below fp resolution
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        F = phi_c - np.exp(-0.5 * mid * mid) / _SQRT_2PI - c * (vec_ndtr(mid) - Phi_c)
        lower = F < target
        lo = np.where(lower, mid, lo)
        hi = np.where(lower, hi, mid)
    return 0.5 * (lo + hi)


def lf_sample(ideal, sp, n, gen):
    """Draw n observations from the worst-case contaminating law.

    Implemented for scalar observations of Gaussian-linear pairs, where
    the law has density proportional to (|y - EY| - t)_+ phi(y) beyond
    the threshold t = rho/|gain| and is symmetric about EY.  Sampling is
    by inverse CDF on the magnitude; draw order: magnitudes then signs.
    """
    c, sigma_y = lf_threshold_scalar(ideal, sp)
    mags = lf_magnitudes(gen.random(n), c)
    signs = np.where(gen.random(n) < 0.5, -1.0, 1.0)
    return (float(ideal.EY[0]) + signs * sigma_y * mags).reshape(n, 1)


def risk_under_contamination(ideal, sp_or_rho, contamination, r, engine=None):
    """Mean squared error of the clipped estimator under a specific attack.

    Decomposes as (1-r) * ideal term + r * trace Cov X + r * E_P min(|D|^2, rho^2);
    ``contamination`` is a sample array, ("point", y0), or "ideal" for
    re-feeding the ideal marginal.
    """
    rho = sp_or_rho.rho if isinstance(sp_or_rho, SaddlePoint) else float(sp_or_rho)
    mom = ideal.shift_norm_moments(engine)
    ideal_term = (ideal.trace_cov_X - 2.0 * mom.clipped_sq(rho) + mom.clipped_sq2(rho))

    if isinstance(contamination, str) and contamination == "ideal":
        attack = mom.clipped_sq2(rho)  # = E_id min(|D|^2, rho^2)
    elif isinstance(contamination, tuple) and contamination[0] == "point":
        d = float(np.linalg.norm(np.atleast_1d(ideal.shift(np.asarray(contamination[1])))))
        attack = min(d * d, rho * rho)
    else:
        ys = np.asarray(contamination, dtype=np.float64)
        if ys.ndim == 1 and ideal.q == 1:
            ys = ys.reshape(-1, 1)
        elif ys.ndim == 1:
            # a single q-vector point mass
            ys = ys.reshape(1, -1)
        norms = ideal.shift_norms(ys)
        attack = float(np.mean(np.minimum(norms**2, rho**2)))

    return (1.0 - r) * ideal_term + r * ideal.trace_cov_X + r * attack


def minimax_risk_eso(ideal, r, G, engine=None):
    """Minimax risk when the state may also be replaced, under a
    second-moment budget E|X^di|^2 <= G with matched mean.

    Equals the plain worst-case value at G = E|X|^2 and grows affinely
    with slope r in G.
    """
    G = float(G)
    mean_sq = ideal.mean_sq_X
    if G < mean_sq * (1.0 - 1e-12):
        raise ValidationError(f"budget G = {G} below E|X|^2 = {mean_sq}")
    sp = solve_rho(ideal, r, engine)
    return sp.risk + r * (G - mean_sq)


def _radius_b(mom, r):
    """b(r) on given moments; closed boundaries b(0) = inf, b(1) = 0."""
    if r == 0.0:
        return math.inf
    if r == 1.0:
        return 0.0
    g = lambda b: (1.0 - r) * mom.tail1(b) - r * b
    return engines.bisect_decreasing(g, lo=0.0, hi0=1.0, rtol=1e-9)


def lfr_A(r, ideal, engine=None):
    """Ideal-model risk component of the radius construction.

    A_r = cond_var_term + E (|D(Y)| - b(r))_+^2; increasing in r from the
    classical conditional risk at r = 0.
    """
    r = float(r)
    if not 0.0 <= r <= 1.0:
        raise ValidationError("radius r must lie in [0, 1]")
    mom = ideal.shift_norm_moments(engine)
    return ideal.cond_var_term + mom.tail2(_radius_b(mom, r))


def lfr_B(r, ideal, engine=None):
    """Worst-case bias component: B_r = E|D|^2 - E(|D|-b(r))_+^2 + b(r)^2.

    Decreasing in r; infinite at r = 0 (unclipped), zero at r = 1.
    """
    r = float(r)
    if not 0.0 <= r <= 1.0:
        raise ValidationError("radius r must lie in [0, 1]")
    mom = ideal.shift_norm_moments(engine)
    b = _radius_b(mom, r)
    if math.isinf(b):
        return math.inf
    return mom.mean_sq - mom.tail2(b) + b * b


@dataclass
class RadiusSolution:
    """Least-favorable radius over an interval of candidate radii."""

    r_l: float
    r_u: float
    r0: float
    rho0_at_r0: float
    grid: np.ndarray
    A_table: np.ndarray
    B_table: np.ndarray

    def to_dict(self):
        return {"r_l": self.r_l, "r_u": self.r_u, "r0": self.r0,
                "rho0_at_r0": self.rho0_at_r0,
                "grid": self.grid.tolist(),
                "A_table": self.A_table.tolist(),
                "B_table": [("inf" if math.isinf(v) else v) for v in self.B_table]}


def solve_least_favorable_radius(r_l, r_u, ideal, engine=None, grid_points=11):
    """The radius whose calibration minimizes worst-case inefficiency
    when the true radius is only known to lie in [r_l, r_u].

    Solves A_r / A_{r_l} = B_r / B_{r_u} by bisection; with r_u = 1 the
    bias ratio forces r0 = 1 outright.
    """
    r_l, r_u = float(r_l), float(r_u)
    if not (0.0 <= r_l < r_u <= 1.0):
        raise ValidationError("need 0 <= r_l < r_u <= 1")
    mom = ideal.shift_norm_moments(engine)

    def A_of(r):
        return ideal.cond_var_term + mom.tail2(_radius_b(mom, r))

    def B_of(r):
        b = _radius_b(mom, r)
        if math.isinf(b):
            return math.inf
        return mom.mean_sq - mom.tail2(b) + b * b

    grid = np.linspace(r_l, r_u, grid_points)
    A_table = np.array([A_of(r) for r in grid])
    B_table = np.array([B_of(r) for r in grid])

    A_l = A_of(r_l)
    if r_u == 1.0:
        # B_{r_u} = 0: any r < 1 has unbounded bias ratio
        return RadiusSolution(r_l=r_l, r_u=r_u, r0=1.0, rho0_at_r0=A_of(1.0) / A_l,
                              grid=grid, A_table=A_table, B_table=B_table)
    B_u = B_of(r_u)

    def g(r):
        return A_of(r) / A_l - B_of(r) / B_u

    lo, hi = r_l, r_u
    # g is increasing: negative at r_l (B ratio > 1), positive at r_u
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if g(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    r0 = 0.5 * (lo + hi)
    rho0 = max(A_of(r0) / A_l, B_of(r0) / B_u)
    rho_grid = np.maximum(A_table / A_l, B_table / B_u)
    if np.any(rho_grid < rho0 - 1e-9):
        raise NumericalError("least-favorable radius is not the grid minimizer; "
                             "the inefficiency curve is not unimodal here")
    return RadiusSolution(r_l=r_l, r_u=r_u, r0=r0, rho0_at_r0=rho0,
                          grid=grid, A_table=A_table, B_table=B_table)


def io_saddle(ideal, r, engine=None):
    """Worst-case problem when the contamination enters the state side.

    Needs the additive structure reachable for Gaussian-linear pairs with
    square invertible Z: transform by Z^-1, swap the roles of signal and
    noise, and solve the same normalization on the tracking residual
    D~(y) = y - E[X|Y=y] (in transformed coordinates).  The estimator
    follows the observation except for the clipped residual.
    """
    if not ideal.gaussian_linear:
        raise ValidationError("IO saddle point implemented for Gaussian-linear pairs")
    if ideal.p != ideal.q:
        raise ValidationError("IO saddle point needs p == q")
    Z = ideal.Z
    if abs(np.linalg.det(Z)) < 1e-300:
        raise ValidationError("IO saddle point needs an invertible observation matrix")
    Zinv = np.linalg.inv(Z)
    noise_cov = Zinv @ ideal.V @ Zinv.T
    swapped = IdealPair.from_gaussian(Sigma_X=noise_cov, Z=np.eye(ideal.p), V=ideal.Sigma_X)
    sp = solve_rho(swapped, r, engine)
    rho = sp.rho
    EY = ideal.EY
    EX = ideal.EX
    resid_weight = Zinv - ideal.gain

    def estimator(y):
        rows = np.atleast_2d(np.asarray(y, dtype=np.float64)).reshape(-1, ideal.q)
        u = rows - EY
        track = u @ Zinv.T
        resid = u @ resid_weight.T
        norms = np.linalg.norm(resid, axis=1)
        w = _clip_weights(norms, rho)
        out = EX + track - resid * w[:, None]
        return out[0] if np.asarray(y).ndim <= 1 and np.asarray(y).size == ideal.q else out

    return SaddlePoint(r=r, rho=rho, risk=sp.risk,
                       normalization_residual=sp.normalization_residual,
                       kind="io", pair=ideal, _estimator=estimator)


def density_trace(sp, ideal, y_grid):
    """Columns (y, p_id, p_re, p_di) of the three densities on a grid.

    The contaminating density is zero wherever |D(y)| <= rho; the
    contaminated marginal mixes it with the ideal one at weight r.
    """
    y = np.asarray(y_grid, dtype=np.float64).ravel()
    p_id = ideal.y_density(y)
    di, re = lf_density_weight(y.reshape(-1, 1), sp, ideal)
    p_di = di * p_id
    p_re = re * p_id
    return {"y": y, "p_id": p_id, "p_re": p_re, "p_di": p_di}
