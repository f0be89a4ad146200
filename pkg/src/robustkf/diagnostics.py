"""Data-driven checks on the assumptions behind the clipped corrections.

Three probes:

* a third-moment test of joint Gaussianity on a sample of state
  increments, projecting onto the dominant covariance direction; under
  Gaussianity the conditional mean of the increment given the
  observation increment is linear, which is what the clipped correction
  relies on;
* a one-sample Kolmogorov-Smirnov check of values against a supplied
  normal reference (filter theory provides the moments; estimating them
  here would change the null distribution);
* a kernel-density check of whether an observed error marginal dominates
  (1-r) times a reference Gaussian density, the structural requirement
  for extending the worst-case solution to state-side contamination.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import rng
from .errors import NumericalError, ValidationError

# two-sided standard normal quantiles for the supported test levels
_Z_TWO_SIDED = {0.10: 1.6448536269514722, 0.05: 1.959963984540054,
                0.01: 2.5758293035489004}
# asymptotic 0.99 quantile of the Kolmogorov distribution
_KS_CRIT_01 = 1.628


@dataclass
class LinTestResult:
    n: int
    T_n: float
    sigma_hat: float
    e_hat: np.ndarray
    alpha: float
    critical: float
    reject: bool

    def to_dict(self):
        return {"n": self.n, "T_n": self.T_n, "sigma_hat": self.sigma_hat,
                "e_hat": self.e_hat.tolist(), "alpha": self.alpha,
                "critical": self.critical, "reject": bool(self.reject)}


def linearity_test(sample, alpha=0.05):
    """Third-moment Gaussianity test on an n x p sample of increments.

    Computes the sample covariance, takes its top unit eigenvector e_hat
    (sign fixed: first nonzero component positive) and the root of the
    top eigenvalue sigma_hat, then tests

        T_n = mean( (e_hat' dX_i)^3 )

    against the asymptotic null bound sqrt(15/n) * sigma_hat^3 * z_{alpha/2}
    (15 being the sixth moment of a standard normal).  The projection
    keeps the test one-dimensional regardless of p.
    """
    if alpha not in _Z_TWO_SIDED:
        raise ValidationError(f"unsupported test level {alpha}; use one of "
                              f"{sorted(_Z_TWO_SIDED)}")
    x = np.asarray(sample, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValidationError("sample must be an n x p matrix")
    n = x.shape[0]
    if n < 10:
        raise ValidationError("need at least 10 increments")
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    if not np.all(np.isfinite(cov)):
        raise NumericalError("diagnostic error: increment covariance is not finite")
    evals, evecs = np.linalg.eigh(cov)
    if evals[-1] <= 0.0:
        raise NumericalError("diagnostic error: degenerate increment sample")
    e_hat = evecs[:, -1]
    nz = np.nonzero(np.abs(e_hat) > 1e-12)[0]
    if e_hat[nz[0]] < 0:
        e_hat = -e_hat
    sigma_hat = math.sqrt(float(evals[-1]))
    T_n = float(np.mean((x @ e_hat) ** 3))
    critical = math.sqrt(15.0 / n) * sigma_hat**3 * _Z_TWO_SIDED[alpha]
    return LinTestResult(n=n, T_n=T_n, sigma_hat=sigma_hat, e_hat=e_hat,
                         alpha=alpha, critical=critical,
                         reject=abs(T_n) > critical)


class NormalityResult(NamedTuple):
    ks_distance: float
    reject_at_001: bool
    n: int
    critical: float

    def to_dict(self):
        return {"ks_distance": self.ks_distance,
                "reject_at_001": bool(self.reject_at_001),
                "n": self.n, "critical": self.critical}


def normality_probe(sample, mean, variance):
    """One-sample KS distance of the standardized sample against N(0,1).

    Rejection is at level 0.01 via the asymptotic critical value
    1.628 / sqrt(n).
    """
    sample = np.asarray(sample, dtype=np.float64).ravel()
    n = sample.size
    if n < 100:
        raise ValidationError("need at least 100 values")
    variance = float(variance)
    if variance <= 0.0:
        raise ValidationError("reference variance must be positive")
    from scipy.special import ndtr

    z = np.sort((sample - float(mean)) / math.sqrt(variance))
    cdf = ndtr(z)
    k = np.arange(1, n + 1)
    d_plus = float(np.max(k / n - cdf))
    d_minus = float(np.max(cdf - (k - 1) / n))
    stat = max(d_plus, d_minus)
    critical = _KS_CRIT_01 / math.sqrt(n)
    return NormalityResult(ks_distance=stat, reject_at_001=stat > critical,
                           n=n, critical=critical)


class DominationResult(NamedTuple):
    holds: bool
    margin: float
    bootstrap_se: float
    n: int

    def to_dict(self):
        return {"holds": bool(self.holds), "margin": self.margin,
                "bootstrap_se": self.bootstrap_se, "n": self.n}


def eso_domination_probe(sample, Sigma, r, grid=None, n_boot=200, seed=0):
    """Check whether the sample's density dominates the nominal share.

    Fits a Gaussian-kernel density with Silverman bandwidth to the
    scalar sample and tests p_hat(x) >= (1 - r) * phi_Sigma(x) on a grid
    (default: +-6 sd around zero, step sd/20, with phi_Sigma the centered
    Gaussian of variance Sigma).  margin is the minimum slack over the
    grid; since the estimate is itself noisy in the tails, "holds"
    tolerates a dip to -3 bootstrap standard errors of the margin.

    Scalar samples only; the reference mean is zero by construction
    (filter errors are centered).
    """
    x = np.asarray(sample, dtype=np.float64)
    if x.ndim == 2 and x.shape[1] == 1:
        x = x[:, 0]
    if x.ndim != 1:
        raise ValidationError("domination probe supports p = 1 only")
    n = x.size
    if n < 100:
        raise ValidationError("need at least 100 values for a density fit")
    r = float(r)
    if not 0.0 <= r < 1.0:
        raise ValidationError("contamination share r must lie in [0, 1)")
    var = float(np.atleast_2d(np.asarray(Sigma, dtype=np.float64))[0, 0])
    if var <= 0.0:
        raise ValidationError("reference variance must be positive")
    sd = math.sqrt(var)
    if grid is None:
        grid = np.linspace(-6.0 * sd, 6.0 * sd, 241)  # step sd/20
    else:
        grid = np.asarray(grid, dtype=np.float64).ravel()
    floor = (1.0 - r) * np.exp(-0.5 * (grid / sd) ** 2) / (sd * math.sqrt(2 * math.pi))

    def margin_of(values):
        dens = _gaussian_kde(values, grid, _silverman_bandwidth(values))
        return float(np.min(dens - floor))

    margin = margin_of(x)
    gen = rng.stream(seed, rng.RISK, 0)
    boot = np.empty(n_boot)
    for i in range(n_boot):
        boot[i] = margin_of(x[gen.integers(0, n, size=n)])
    se = float(np.std(boot, ddof=1))
    holds = margin >= -3.0 * se
    return DominationResult(holds=holds, margin=margin, bootstrap_se=se, n=n)


def _silverman_bandwidth(values):
    sd = float(np.std(values, ddof=1))
    q75, q25 = np.percentile(values, [75, 25])
    iqr = q75 - q25
    scale = min(sd, iqr / 1.34) if iqr > 0 else sd
    if scale <= 0:
        raise NumericalError("diagnostic error: zero-spread sample")
    return 0.9 * scale * values.size ** (-0.2)


def _gaussian_kde(values, grid, h):
    # kernel contributions beyond nine bandwidths are below 2e-18/h in
    # absolute density, so window the sum instead of forming the full
    # (grid x sample) matrix
    v = np.sort(values)
    lo = np.searchsorted(v, grid - 9.0 * h)
    hi = np.searchsorted(v, grid + 9.0 * h)
    out = np.empty(grid.size)
    for i in range(grid.size):
        z = (grid[i] - v[lo[i]:hi[i]]) / h
        out[i] = np.exp(-0.5 * z * z).sum()
    return out / (values.size * h * math.sqrt(2 * math.pi))
