"""Toy Z-peak fast simulation and B-decay benchmark analyses."""

from .kinematics import (FourVector, UnitAxis, boost, invariant_mass,
                         n_body_phase_space, thrust, two_body_decay)
from .kinfit import FitResult, PhotonParameters, chi2_probability, fit_pi0_mass

__version__ = "0.1.0"

__all__ = [
    "FourVector", "UnitAxis", "boost", "invariant_mass", "n_body_phase_space",
    "thrust", "two_body_decay", "FitResult", "PhotonParameters",
    "chi2_probability", "fit_pi0_mass", "__version__",
]
