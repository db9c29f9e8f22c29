"""1C mass-constrained fit of a two-photon system.

Minimises (alpha - alpha0)^T V^-1 (alpha - alpha0) subject to
m^2(alpha) = m_target^2 by iterating the linearised Lagrange solution.
Parameters are (E1, theta1, phi1, E2, theta2, phi2) with diagonal V, which
matches the detector smearing model exactly.

The batch kernel has two interchangeable backends: a numba @njit loop and a
vectorised pure-numpy twin.  Selection: environment variable ZCALO_BACKEND
set to "numba" or "numpy" ("auto" or unset prefers numba when available).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from .constants import PI0_MASS
from .detector import ReconstructedPhoton
from .errors import DegenerateCovarianceError, UnphysicalInputError
from .kinematics import FourVector, from_polar

MAX_ITERATIONS = 20
TOL_CONSTRAINT = 1e-6    # |m^2 - m_target^2|, GeV^2
TOL_DELTA_CHI2 = 1e-6


def _select_backend() -> tuple[str, object]:
    choice = os.environ.get("ZCALO_BACKEND", "auto").lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"ZCALO_BACKEND must be auto/numba/numpy, got {choice!r}")
    if choice in ("auto", "numba"):
        try:
            from ._fit_numba import fit_batch
            return "numba", fit_batch
        except ImportError:
            if choice == "numba":
                raise
    from ._fit_numpy import fit_batch
    return "numpy", fit_batch


BACKEND_NAME, _fit_batch = _select_backend()


@dataclass(frozen=True)
class PhotonParameters:
    """Measured 6-vector (E1, th1, ph1, E2, th2, ph2) with diagonal covariance."""

    alpha: np.ndarray  # shape (6,)
    var: np.ndarray    # shape (6,), diagonal of V

    @staticmethod
    def from_photons(g1: ReconstructedPhoton,
                     g2: ReconstructedPhoton) -> "PhotonParameters":
        alpha = np.array([g1.e, g1.theta, g1.phi, g2.e, g2.theta, g2.phi])
        var = np.array(list(g1.cov_diag) + list(g2.cov_diag))
        return PhotonParameters(alpha=alpha, var=var)

    def validate(self) -> None:
        if self.alpha[0] <= 0 or self.alpha[3] <= 0:
            raise UnphysicalInputError("photon energies must be positive")
        if np.any(self.var <= 0):
            raise DegenerateCovarianceError("all parameter variances must be > 0")


@dataclass(frozen=True)
class FitResult:
    alpha_fit: np.ndarray
    chi2: float
    n_iter: int
    converged: bool
    pulls: np.ndarray
    fitted_pi0: FourVector


def gamma_pair_mass2(alpha: np.ndarray) -> float:
    """m^2 of two massless photons in (E, theta, phi) parameters."""
    e1, t1, p1, e2, t2, p2 = alpha
    cpsi = (math.sin(t1) * math.sin(t2) * math.cos(p1 - p2)
            + math.cos(t1) * math.cos(t2))
    return 2.0 * e1 * e2 * (1.0 - cpsi)


def pair_four_vector(alpha: np.ndarray) -> FourVector:
    return from_polar(alpha[0], alpha[1], alpha[2]) + \
        from_polar(alpha[3], alpha[4], alpha[5])


def fit_pi0_batch(alpha0: np.ndarray, var: np.ndarray,
                  m_target: float = PI0_MASS):
    """Fit many candidates at once.

    Returns (alpha_fit, chi2, n_iter, converged, pulls) arrays.
    """
    alpha0 = np.ascontiguousarray(alpha0, dtype=float)
    var = np.ascontiguousarray(var, dtype=float)
    if np.any(var <= 0):
        raise DegenerateCovarianceError("all parameter variances must be > 0")
    return _fit_batch(alpha0, var, m_target * m_target,
                      MAX_ITERATIONS, TOL_CONSTRAINT, TOL_DELTA_CHI2)


def fit_pi0_mass(params: PhotonParameters,
                 m_target: float = PI0_MASS) -> FitResult:
    """1C fit of one photon pair to the target mass."""
    params.validate()
    if gamma_pair_mass2(params.alpha) <= 0.0:
        raise UnphysicalInputError("measured two-photon mass must be positive")
    alpha_fit, chi2, n_iter, converged, pulls = fit_pi0_batch(
        params.alpha[None, :], params.var[None, :], m_target)
    return FitResult(alpha_fit=alpha_fit[0], chi2=float(chi2[0]),
                     n_iter=int(n_iter[0]), converged=bool(converged[0]),
                     pulls=pulls[0], fitted_pi0=pair_four_vector(alpha_fit[0]))


def chi2_probability(chi2: float, ndof: int = 1) -> float:
    """Upper-tail chi-square probability; erfc form for the 1-dof case."""
    if chi2 < 0:
        raise UnphysicalInputError(f"chi2 must be >= 0, got {chi2:g}")
    if ndof == 1:
        return math.erfc(math.sqrt(chi2 / 2.0))
    return float(gammaincc(ndof / 2.0, chi2 / 2.0))
