"""Expectation engines for the clipping and saddle-point equations.

Every calibration in this package reduces to tail functionals of |W| for
some zero-mean Gaussian vector W.  When W is supported on a line (scalar
state or scalar observation) |W| is folded-normal and everything has a
closed form; otherwise a seeded Monte Carlo sample stands in.  Both
engines expose the same small set of functionals:

    tail1(b)        E (|W| - b)_+
    tail2(b)        E (|W| - b)_+^2
    clipped_sq(c)   E |W|^2 min(1, c/|W|)
    clipped_sq2(c)  E |W|^2 min(1, c/|W|)^2
    mean_sq         E |W|^2
    abs_mean        E |W|

plus a ``tolerance`` used when recording plug-back residuals: 1e-8 for
closed forms, three standard errors for Monte Carlo.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from ._mat import psd_factor
from .errors import NumericalError, ValidationError

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SQRT2 = math.sqrt(2.0)

# bracket growth cap for the root searches; past this the equation is
# considered numerically hopeless rather than merely slow
BRACKET_CAP = 1e12


def _phi(x):
    return math.exp(-0.5 * x * x) * _INV_SQRT_2PI


def _ndtr(x):
    return 0.5 * math.erfc(-x / _SQRT2)


@dataclass(frozen=True)
class Engine:
    """Descriptor for how expectations are evaluated.

    kind "auto" picks the closed form when |W| is folded-normal and
    Monte Carlo otherwise; "monte-carlo" forces sampling.
    """

    kind: str = "auto"
    n: int = 100_000
    seed: int = 0

    def describe(self):
        if self.kind == "monte-carlo":
            return {"kind": "monte-carlo", "n": self.n, "seed": self.seed}
        return {"kind": self.kind}


def resolve_engine(engine):
    if engine is None:
        return Engine()
    if isinstance(engine, Engine):
        return engine
    if isinstance(engine, dict):
        known = {"kind", "n", "seed"}
        bad = set(engine) - known
        if bad:
            raise ValidationError(f"unknown engine keys {sorted(bad)}", field="engine")
        return Engine(**{**{"kind": "auto"}, **engine})
    raise ValidationError(f"cannot interpret engine descriptor {engine!r}", field="engine")


class FoldedNormalMoments:
    """Tail functionals of |W| for W ~ N(0, tau^2), in closed form."""

    tolerance = 1e-8

    def __init__(self, tau):
        if tau < 0:
            raise ValidationError("scale tau must be >= 0")
        self.tau = float(tau)

    def describe(self):
        return {"kind": "closed-form-1d"}

    def tail1(self, b):
        if math.isinf(b):
            return 0.0
        t = self.tau
        if t == 0.0:
            return 0.0
        c = b / t
        return 2.0 * (t * _phi(c) - b * _ndtr(-c))

    def tail2(self, b):
        if math.isinf(b):
            return 0.0
        t = self.tau
        if t == 0.0:
            return 0.0
        c = b / t
        return 2.0 * ((t * t + b * b) * _ndtr(-c) - b * t * _phi(c))

    def clipped_sq(self, c):
        # E |W|^2 min(1, c/|W|); the phi terms cancel exactly
        t = self.tau
        if t == 0.0 or math.isinf(c):
            return t * t
        return t * t * (2.0 * _ndtr(c / t) - 1.0)

    def clipped_sq2(self, c):
        t = self.tau
        if t == 0.0 or math.isinf(c):
            return t * t
        u = c / t
        inner = t * t * (1.0 - 2.0 * _ndtr(-u) - 2.0 * u * _phi(u))
        return inner + 2.0 * c * c * _ndtr(-u)

    @property
    def mean_sq(self):
        return self.tau * self.tau

    @property
    def abs_mean(self):
        return self.tau * math.sqrt(2.0 / math.pi)

    def se(self, *_args):
        return 0.0


class EmpiricalMoments:
    """The same functionals evaluated on a fixed sample of norms |W_i|.

    The sample is drawn once so that root searches see a deterministic,
    monotone function of b.
    """

    def __init__(self, norms, descriptor=None):
        norms = np.asarray(norms, dtype=np.float64).ravel()
        if norms.size == 0:
            raise ValidationError("empty Monte Carlo sample")
        self.norms = norms
        self._descriptor = descriptor or {"kind": "monte-carlo", "n": int(norms.size)}

    def describe(self):
        return dict(self._descriptor)

    @property
    def tolerance(self):
        # three standard errors of the dominant tail term
        return 3.0 * self.se()

    def tail1(self, b):
        if math.isinf(b):
            return 0.0
        return float(np.mean(np.clip(self.norms - b, 0.0, None)))

    def tail2(self, b):
        if math.isinf(b):
            return 0.0
        return float(np.mean(np.clip(self.norms - b, 0.0, None) ** 2))

    def clipped_sq(self, c):
        w = np.minimum(1.0, c / np.maximum(self.norms, 1e-300))
        return float(np.mean(self.norms**2 * w))

    def clipped_sq2(self, c):
        w = np.minimum(1.0, c / np.maximum(self.norms, 1e-300))
        return float(np.mean(self.norms**2 * w**2))

    @property
    def mean_sq(self):
        return float(np.mean(self.norms**2))

    @property
    def abs_mean(self):
        return float(np.mean(self.norms))

    def se(self, b=0.0):
        x = np.clip(self.norms - b, 0.0, None)
        return float(np.std(x) / math.sqrt(x.size))


def gaussian_norm_moments(weight, cov, engine=None):
    """Moments of |weight @ u| with u ~ N(0, cov).

    Closed form whenever the image is one-dimensional (weight has one row
    or one column), Monte Carlo otherwise.  ``weight`` may be a (p, q)
    matrix, a vector, or a scalar.
    """
    engine = resolve_engine(engine)
    weight = np.atleast_2d(np.asarray(weight, dtype=np.float64))
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    p, q = weight.shape
    if cov.shape != (q, q):
        raise ValidationError(
            f"covariance shape {cov.shape} does not match weight columns {q}"
        )
    one_dimensional = p == 1 or q == 1
    if engine.kind != "monte-carlo" and one_dimensional:
        var = float((weight @ cov @ weight.T)[0, 0]) if p == 1 else float(
            (weight[:, 0] @ weight[:, 0]) * cov[0, 0]
        )
        return FoldedNormalMoments(math.sqrt(max(var, 0.0)))
    gen = rng.stream(engine.seed, rng.ENGINE)
    factor = psd_factor(cov, "cov")
    draws = gen.standard_normal((engine.n, q)) @ factor.T
    norms = np.linalg.norm(draws @ weight.T, axis=1)
    return EmpiricalMoments(norms, {"kind": "monte-carlo", "n": engine.n, "seed": engine.seed})


def bisect_decreasing(g, lo=0.0, hi0=1.0, rtol=1e-9, cap=BRACKET_CAP):
    """Root of a strictly decreasing g with g(lo) >= 0.

    The upper bracket starts at ``hi0`` and doubles until the sign flips;
    growth past ``cap`` raises NumericalError.  The interval is then
    bisected until its width is below ``rtol`` relative to the root.
    """
    glo = g(lo)
    if glo <= 0.0:
        return lo
    hi = hi0
    while g(hi) > 0.0:
        hi *= 2.0
        if hi > cap:
            raise NumericalError(
                f"no sign change up to {cap:g}; equation has no root in range"
            )
    lo_b = lo
    while hi - lo_b > rtol * max(hi, 1.0):
        mid = 0.5 * (lo_b + hi)
        if g(mid) > 0.0:
            lo_b = mid
        else:
            hi = mid
    return 0.5 * (lo_b + hi)
