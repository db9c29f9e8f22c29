"""Relativistic four-vector algebra, phase-space decays and thrust.

All energies and momenta in GeV (c = 1).  Every generator function takes an
explicit ``numpy.random.Generator`` so results are reproducible and safe to
parallelise across events.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BelowThresholdError, DegenerateEventError, UnphysicalInputError

MASS2_CLAMP = -1e-6  # tolerated numerical undershoot of m^2, GeV^2


@dataclass(frozen=True, slots=True)
class FourVector:
    """Energy-momentum four-vector (e, px, py, pz)."""

    e: float
    px: float
    py: float
    pz: float

    def __add__(self, other: "FourVector") -> "FourVector":
        return FourVector(self.e + other.e, self.px + other.px,
                          self.py + other.py, self.pz + other.pz)

    def __sub__(self, other: "FourVector") -> "FourVector":
        return FourVector(self.e - other.e, self.px - other.px,
                          self.py - other.py, self.pz - other.pz)

    @property
    def p3(self) -> np.ndarray:
        return np.array([self.px, self.py, self.pz])

    @property
    def p_mag(self) -> float:
        return math.sqrt(self.px ** 2 + self.py ** 2 + self.pz ** 2)

    @property
    def pt(self) -> float:
        return math.sqrt(self.px ** 2 + self.py ** 2)

    @property
    def mass2(self) -> float:
        return self.e ** 2 - self.px ** 2 - self.py ** 2 - self.pz ** 2

    @property
    def mass(self) -> float:
        m2 = self.mass2
        if m2 < MASS2_CLAMP:
            raise UnphysicalInputError(f"mass^2 = {m2:g} GeV^2 below tolerance")
        return math.sqrt(max(m2, 0.0))

    @property
    def theta(self) -> float:
        p = self.p_mag
        if p == 0.0:
            return 0.0
        return math.acos(max(-1.0, min(1.0, self.pz / p)))

    @property
    def phi(self) -> float:
        if self.px == 0.0 and self.py == 0.0:
            return 0.0
        return math.atan2(self.py, self.px)

    def beta_vector(self) -> np.ndarray:
        if self.e <= 0.0:
            raise UnphysicalInputError("beta undefined for non-positive energy")
        return self.p3 / self.e

    def scaled(self, factor: float) -> "FourVector":
        return FourVector(self.e * factor, self.px * factor,
                          self.py * factor, self.pz * factor)


def from_polar(e: float, theta: float, phi: float, mass: float = 0.0) -> FourVector:
    """Four-vector from energy and direction angles for a given mass."""
    p = math.sqrt(max(e * e - mass * mass, 0.0))
    st = math.sin(theta)
    return FourVector(e, p * st * math.cos(phi), p * st * math.sin(phi),
                      p * math.cos(theta))


@dataclass(frozen=True, slots=True)
class UnitAxis:
    """Unit direction vector (direction cosines)."""

    nx: float
    ny: float
    nz: float

    def as_array(self) -> np.ndarray:
        return np.array([self.nx, self.ny, self.nz])

    @staticmethod
    def from_array(v: np.ndarray) -> "UnitAxis":
        n = float(np.linalg.norm(v))
        if n == 0.0:
            raise UnphysicalInputError("cannot normalise a zero vector")
        return UnitAxis(float(v[0]) / n, float(v[1]) / n, float(v[2]) / n)


def invariant_mass(vectors: list[FourVector]) -> float:
    """Invariant mass of the summed system.

    Clamps m^2 in [-1e-6, 0] GeV^2 to zero; anything below raises.
    """
    if not vectors:
        raise UnphysicalInputError("invariant_mass of an empty list")
    e = px = py = pz = 0.0
    for v in vectors:
        e += v.e
        px += v.px
        py += v.py
        pz += v.pz
    m2 = e * e - px * px - py * py - pz * pz
    if m2 < MASS2_CLAMP:
        raise UnphysicalInputError(f"system mass^2 = {m2:g} GeV^2 below tolerance")
    return math.sqrt(max(m2, 0.0))


def boost(v: FourVector, beta: np.ndarray) -> FourVector:
    """Lorentz boost of ``v`` by velocity ``beta`` (3-vector, |beta| < 1)."""
    bx, by, bz = float(beta[0]), float(beta[1]), float(beta[2])
    b2 = bx * bx + by * by + bz * bz
    if b2 >= 1.0:
        raise UnphysicalInputError(f"superluminal boost |beta|^2 = {b2:g}")
    if b2 == 0.0:
        return v
    gamma = 1.0 / math.sqrt(1.0 - b2)
    bp = bx * v.px + by * v.py + bz * v.pz
    coef = (gamma - 1.0) * bp / b2 + gamma * v.e
    return FourVector(gamma * (v.e + bp),
                      v.px + coef * bx,
                      v.py + coef * by,
                      v.pz + coef * bz)


def two_body_momentum(parent_mass: float, m1: float, m2: float) -> float:
    """Momentum of either daughter in the parent rest frame."""
    if parent_mass < m1 + m2:
        raise BelowThresholdError(
            f"M = {parent_mass:g} below threshold {m1 + m2:g}")
    t1 = parent_mass * parent_mass - (m1 + m2) ** 2
    t2 = parent_mass * parent_mass - (m1 - m2) ** 2
    return math.sqrt(max(t1 * t2, 0.0)) / (2.0 * parent_mass)


def isotropic_direction(rng: np.random.Generator) -> np.ndarray:
    cos_t = rng.uniform(-1.0, 1.0)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    sin_t = math.sqrt(max(0.0, 1.0 - cos_t * cos_t))
    return np.array([sin_t * math.cos(phi), sin_t * math.sin(phi), cos_t])


def two_body_decay(parent_mass: float, m1: float, m2: float,
                   rng: np.random.Generator) -> tuple[FourVector, FourVector]:
    """Isotropic two-body decay, daughters back to back in the parent rest frame."""
    p = two_body_momentum(parent_mass, m1, m2)
    n = isotropic_direction(rng)
    e1 = math.sqrt(m1 * m1 + p * p)
    e2 = math.sqrt(m2 * m2 + p * p)
    d1 = FourVector(e1, p * n[0], p * n[1], p * n[2])
    d2 = FourVector(e2, -p * n[0], -p * n[1], -p * n[2])
    return d1, d2


def _phase_space_weight_max(parent_mass: float, masses: list[float]) -> float:
    """Maximum product of sequential two-body momenta (normalisation for
    the accept-reject loop)."""
    n = len(masses)
    t_kin = parent_mass - sum(masses)
    w = 1.0
    e_min = 0.0
    e_max = t_kin + masses[0]
    for i in range(1, n):
        e_min += masses[i - 1]
        e_max += masses[i]
        w *= two_body_momentum(e_max, e_min, masses[i])
    return w


def n_body_phase_space(parent: FourVector, daughter_masses: list[float],
                       rng: np.random.Generator) -> list[FourVector]:
    """Unweighted flat-phase-space decay of ``parent`` into N daughters.

    Sequential two-body splittings with accept-reject against the maximum
    weight; daughters are returned boosted to the lab frame of ``parent``.
    """
    n = len(daughter_masses)
    if not 2 <= n <= 8:
        raise UnphysicalInputError(f"N = {n} outside supported range 2..8")
    big_m = parent.mass
    m_sum = sum(daughter_masses)
    if big_m < m_sum:
        raise BelowThresholdError(
            f"parent mass {big_m:g} below daughter sum {m_sum:g}")

    masses = list(daughter_masses)
    t_kin = big_m - m_sum
    if n == 2:
        inter = [masses[0], big_m]
    else:
        w_max = _phase_space_weight_max(big_m, masses)
        cum = np.cumsum(masses)
        while True:
            r = np.sort(rng.uniform(0.0, 1.0, n - 2))
            inter = [masses[0]]
            for i in range(1, n - 1):
                inter.append(cum[i] + r[i - 1] * t_kin)
            inter.append(big_m)
            w = 1.0
            for i in range(1, n):
                w *= two_body_momentum(inter[i], inter[i - 1], masses[i])
            if rng.uniform(0.0, 1.0) * w_max <= w:
                break

    # Build daughters inside out: split M_i -> (system of mass M_{i-1}) + m_i,
    # boosting the already-built daughters into each successive frame.  The
    # first split places both daughters directly (a single massless daughter
    # has no rest frame to boost from).
    daughters: list[FourVector] = []
    for i in range(1, n):
        m_sys = inter[i - 1]
        q = two_body_momentum(inter[i], m_sys, masses[i])
        axis = isotropic_direction(rng)
        if i == 1:
            daughters = [FourVector(math.sqrt(q * q + masses[0] * masses[0]),
                                    q * axis[0], q * axis[1], q * axis[2])]
        else:
            e_sys = math.sqrt(q * q + m_sys * m_sys)
            beta_sys = (q / e_sys) * axis
            daughters = [boost(d, beta_sys) for d in daughters]
        daughters.append(FourVector(math.sqrt(q * q + masses[i] * masses[i]),
                                    -q * axis[0], -q * axis[1], -q * axis[2]))

    lab_beta = parent.beta_vector()
    return [boost(d, lab_beta) for d in daughters]


def _fix_axis_sign(axis: np.ndarray) -> np.ndarray:
    """Sign convention: positive z-component, tie broken to positive x then y."""
    if axis[2] != 0.0:
        return axis if axis[2] > 0 else -axis
    if axis[0] != 0.0:
        return axis if axis[0] > 0 else -axis
    return axis if axis[1] >= 0 else -axis


def _thrust_exhaustive(p: np.ndarray) -> tuple[float, np.ndarray]:
    """Exact thrust by enumerating all sign combinations of particle subsets.

    The optimal axis is parallel to some signed sum of the momenta, so for
    N particles it suffices to scan 2^(N-1) sign vectors.
    """
    n = p.shape[0]
    signs = np.ones((2 ** (n - 1), n))
    for k in range(1, n):
        period = 2 ** (k - 1)
        col = np.where((np.arange(2 ** (n - 1)) // period) % 2 == 0, 1.0, -1.0)
        signs[:, k] = col
    sums = signs @ p
    norms = np.linalg.norm(sums, axis=1)
    best = int(np.argmax(norms))
    denom = np.sum(np.linalg.norm(p, axis=1))
    axis = sums[best]
    if norms[best] == 0.0:
        axis = p[0]
    return float(norms[best] / denom), axis / np.linalg.norm(axis)


def _thrust_iterative(p: np.ndarray, n_seeds: int = 8) -> tuple[float, np.ndarray]:
    """Seeded iterative maximisation over axis candidates.

    Seeds are the sign combinations of the four leading particles; each seed
    is iterated by re-aligning with the signed momentum sum until stable.
    """
    mags = np.linalg.norm(p, axis=1)
    denom = float(np.sum(mags))
    order = np.argsort(mags)[::-1]
    lead = p[order[:4]]
    best_t = 0.0
    best_axis = None
    for seed_idx in range(min(n_seeds, 2 ** (len(lead) - 1))):
        axis = lead[0].copy()
        for k in range(1, len(lead)):
            if (seed_idx >> (k - 1)) & 1:
                axis = axis + lead[k]
            else:
                axis = axis - lead[k]
        norm = np.linalg.norm(axis)
        if norm == 0.0:
            continue
        axis /= norm
        for _ in range(100):
            proj = p @ axis
            new_axis = np.sum(np.where(proj[:, None] >= 0, p, -p), axis=0)
            norm = np.linalg.norm(new_axis)
            if norm == 0.0:
                break
            new_axis /= norm
            if np.abs(new_axis - axis).max() < 1e-12:
                axis = new_axis
                break
            axis = new_axis
        t = float(np.sum(np.abs(p @ axis)) / denom)
        if t > best_t:
            best_t = t
            best_axis = axis
    if best_axis is None:
        best_axis = p[order[0]] / mags[order[0]]
        best_t = float(np.sum(np.abs(p @ best_axis)) / denom)
    return best_t, best_axis


def thrust(momenta: list[FourVector]) -> tuple[float, UnitAxis]:
    """Thrust T = max_n sum|p.n| / sum|p| and its maximising axis.

    Exact subset-sign enumeration for N <= 12, seeded iterative maximisation
    above.  Axis sign fixed to positive z (tie: positive x).
    """
    p = np.array([[v.px, v.py, v.pz] for v in momenta], dtype=float)
    if p.shape[0] == 0 or np.all(np.linalg.norm(p, axis=1) == 0.0):
        raise DegenerateEventError("thrust of an empty or all-zero event")
    p = p[np.linalg.norm(p, axis=1) > 0.0]
    if p.shape[0] == 1:
        axis = _fix_axis_sign(p[0] / np.linalg.norm(p[0]))
        return 1.0, UnitAxis.from_array(axis)
    if p.shape[0] <= 12:
        t, axis = _thrust_exhaustive(p)
    else:
        t, axis = _thrust_iterative(p)
    return t, UnitAxis.from_array(_fix_axis_sign(axis))
