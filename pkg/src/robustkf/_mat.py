"""Small shared matrix helpers (symmetry/PSD checks, Gaussian factors)."""

import numpy as np

from .errors import ValidationError

# relative floor below which an eigenvalue of a PSD matrix counts as zero
PSD_EIG_RTOL = 1e-10


def as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValidationError(f"expected a 2-d array, got shape {a.shape}", field=name)
    return a


def check_symmetric(a, name="matrix", rtol=1e-8):
    a = as_matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise ValidationError(f"expected square, got shape {a.shape}", field=name)
    scale = max(1.0, float(np.abs(a).max()))
    if float(np.abs(a - a.T).max()) > rtol * scale:
        raise ValidationError("matrix is not symmetric", field=name)
    return 0.5 * (a + a.T)


def check_psd(a, name="matrix"):
    """Validate symmetry and positive semi-definiteness of ``a``.

    Eigenvalues down to -PSD_EIG_RTOL * max-eigenvalue are tolerated as
    round-off and treated as zero.
    """
    a = check_symmetric(a, name)
    w = np.linalg.eigvalsh(a)
    floor = PSD_EIG_RTOL * max(float(w[-1]), 0.0)
    if float(w[0]) < -max(floor, 1e-300):
        raise ValidationError(
            f"matrix is not positive semi-definite (min eigenvalue {w[0]:.3e})", field=name
        )
    return a


def psd_factor(a, name="matrix"):
    """A factor L with L Lᵀ = a, valid for singular PSD matrices too."""
    a = check_psd(a, name)
    w, v = np.linalg.eigh(a)
    w = np.clip(w, 0.0, None)
    return v * np.sqrt(w)


def symmetrize(a):
    return 0.5 * (a + a.T)
