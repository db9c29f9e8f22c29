"""Parametric detector response.

Photons are smeared in (E, theta, phi) with a diagonal covariance that the
kinematic fit consumes directly; charged hadrons get a 1/pT smearing and a
smeared impact vertex.  A DetectorScenario holds every response parameter,
read from a config file with no silent defaults.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass

import numpy as np

from . import constants as K
from .errors import ConfigError, InsufficientTracksError, UnphysicalInputError
from .evtgen import Event
from .kinematics import FourVector, from_polar

MIN_PHOTON_ENERGY = 0.001  # floor applied after smearing, GeV

ORIGIN_GENUINE = "genuine"
ORIGIN_FAKE = "fake"
ORIGIN_MERGED = "merged_pi0"

TAG_SINGLE_PHOTON = "single_photon"
TAG_PI0_LIKE = "pi0_like"

SINGLE_PHOTON_EFF = 0.98  # tag efficiency for genuine photons


@dataclass(frozen=True)
class DetectorScenario:
    """Full parametric response of one detector configuration."""

    name: str
    ecal_stochastic: float        # a in dE/E = a/sqrt(E) (+) b
    ecal_constant: float          # b
    pos_res_stochastic: float     # c in sigma_pos = c/sqrt(E) (+) d, mm GeV^1/2
    pos_res_constant: float       # d, mm
    ecal_radius: float            # R, mm
    photon_threshold: float       # E_min, GeV
    fake_rate: float              # mean fakes per hemisphere
    fake_energy_mean: float       # mean of the exponential fake spectrum, GeV
    merge_distance: float         # mm at the ECAL face
    pi0_mass_fit_enabled: bool
    gamma_pi0_sep_max_energy: float  # GeV, full separation below this
    track_pt_res: float           # k in sigma(1/pT) = k, GeV^-1
    vertex_res: float             # mm, per component

    def __post_init__(self):
        for attr in ("ecal_stochastic", "ecal_constant", "pos_res_stochastic",
                     "pos_res_constant", "photon_threshold", "fake_rate",
                     "fake_energy_mean", "merge_distance", "track_pt_res",
                     "vertex_res"):
            if getattr(self, attr) < 0:
                raise ConfigError(f"scenario {self.name}: {attr} must be >= 0")
        if self.ecal_radius <= 0:
            raise ConfigError(f"scenario {self.name}: ecal_radius must be > 0")

    def energy_resolution(self, e: float) -> float:
        """Relative sigma_E/E at photon energy e."""
        a, b = self.ecal_stochastic, self.ecal_constant
        return math.sqrt(a * a / e + b * b)

    def position_resolution(self, e: float) -> float:
        """Transverse position sigma at the ECAL face, mm."""
        c, d = self.pos_res_stochastic, self.pos_res_constant
        return math.sqrt(c * c / e + d * d)


@dataclass(frozen=True)
class ReconstructedPhoton:
    """Smeared ECAL cluster with diagonal (E, theta, phi) covariance."""

    e: float
    theta: float
    phi: float
    cov_diag: tuple[float, float, float]
    origin: str                # genuine / fake / merged_pi0
    truth_index: int           # truth record index, -1 for fakes

    @property
    def p4(self) -> FourVector:
        return from_polar(self.e, self.theta, self.phi)


@dataclass(frozen=True)
class ReconstructedTrack:
    """Smeared charged hadron with truth-perfect particle id."""

    p: FourVector
    charge: int
    pid: str                   # "pion" or "kaon"
    impact_vertex: np.ndarray  # mm
    truth_index: int
    truth_vertex: np.ndarray   # production vertex before smearing, mm


def smear_photon(truth: FourVector, scenario: DetectorScenario,
                 rng: np.random.Generator,
                 origin: str = ORIGIN_GENUINE,
                 truth_index: int = -1) -> ReconstructedPhoton:
    """Apply energy and angular smearing to a massless cluster."""
    e = truth.e
    if e <= 0.0:
        raise UnphysicalInputError("photon with non-positive energy")
    rel = scenario.energy_resolution(e)
    e_meas = max(e * (1.0 + rng.normal(0.0, 1.0) * rel), MIN_PHOTON_ENERGY)

    sigma_pos = scenario.position_resolution(e)
    r = scenario.ecal_radius
    theta = truth.theta
    sin_theta = max(math.sin(theta), 1e-6)
    sigma_theta = sigma_pos / r
    sigma_phi = sigma_pos / (r * sin_theta)
    theta_meas = theta + rng.normal(0.0, 1.0) * sigma_theta
    phi_meas = truth.phi + rng.normal(0.0, 1.0) * sigma_phi

    sigma_e = e_meas * scenario.energy_resolution(e_meas)
    return ReconstructedPhoton(
        e=e_meas, theta=theta_meas, phi=phi_meas,
        cov_diag=(sigma_e ** 2, sigma_theta ** 2, sigma_phi ** 2),
        origin=origin, truth_index=truth_index)


def _face_separation(a: FourVector, b: FourVector, radius: float) -> float:
    """Great-circle distance times R between two cluster directions, mm."""
    na = math.sqrt(a.px * a.px + a.py * a.py + a.pz * a.pz)
    nb = math.sqrt(b.px * b.px + b.py * b.py + b.pz * b.pz)
    cosang = (a.px * b.px + a.py * b.py + a.pz * b.pz) / (na * nb)
    return radius * math.acos(max(-1.0, min(1.0, cosang)))


def reconstruct_photons(event: Event, scenario: DetectorScenario,
                        rng: np.random.Generator) -> list[ReconstructedPhoton]:
    """Threshold, merge, inject fakes and smear the event's truth photons.

    Output count is exactly (genuine above threshold) - (merged pairs) +
    (fakes).  Merging is greedy over pairs sorted by face separation; the
    merged cluster carries the summed four-momentum and the truth index of
    its harder photon.
    """
    truths = [(i, rec.p) for i, rec in enumerate(event.records)
              if rec.pdg_id == K.PDG_GAMMA and rec.status == "final"
              and rec.p.e >= scenario.photon_threshold]

    # Greedy pair merging by ascending ECAL-face separation.
    merged_into: dict[int, int] = {}
    if scenario.merge_distance > 0 and len(truths) > 1:
        pairs = []
        for i in range(len(truths)):
            for j in range(i + 1, len(truths)):
                sep = _face_separation(truths[i][1], truths[j][1],
                                       scenario.ecal_radius)
                if sep < scenario.merge_distance:
                    pairs.append((sep, i, j))
        pairs.sort()
        used: set[int] = set()
        for _, i, j in pairs:
            if i in used or j in used:
                continue
            used.add(i)
            used.add(j)
            merged_into[j] = i

    clusters: list[tuple[FourVector, str, int]] = []
    absorbed = set(merged_into.keys())
    for idx, (truth_idx, p4) in enumerate(truths):
        if idx in absorbed:
            continue
        partner = [j for j, tgt in merged_into.items() if tgt == idx]
        if partner:
            q4 = truths[partner[0]][1]
            summed = p4 + q4
            lead_idx = truth_idx if p4.e >= q4.e else truths[partner[0]][0]
            clusters.append((summed, ORIGIN_MERGED, lead_idx))
        else:
            clusters.append((p4, ORIGIN_GENUINE, truth_idx))

    # Fake clusters: Poisson(fake_rate) per z-hemisphere, soft exponential
    # spectrum on top of the threshold, isotropic within the hemisphere.
    for hemi_sign in (1.0, -1.0):
        n_fake = rng.poisson(scenario.fake_rate)
        for _ in range(n_fake):
            e = scenario.photon_threshold + rng.exponential(scenario.fake_energy_mean)
            cos_t = rng.uniform(0.0, 1.0) * hemi_sign
            phi = rng.uniform(0.0, 2.0 * math.pi)
            theta = math.acos(cos_t)
            clusters.append((from_polar(e, theta, phi), ORIGIN_FAKE, -1))

    return [smear_photon(p4, scenario, rng, origin=origin, truth_index=tidx)
            for p4, origin, tidx in clusters]


def gamma_pi0_separation(cluster: ReconstructedPhoton,
                         scenario: DetectorScenario,
                         rng: np.random.Generator) -> str:
    """Classify a cluster as single_photon or pi0_like.

    Merged pi0 clusters are identified with probability 1 up to the
    scenario's separation energy, falling linearly to 0.5 at twice that
    energy (clamped beyond).  Genuine photons pass with 98% efficiency;
    fakes are always rejected as pi0_like.
    """
    if cluster.origin == ORIGIN_FAKE:
        return TAG_PI0_LIKE
    if cluster.origin == ORIGIN_MERGED:
        e_max = scenario.gamma_pi0_sep_max_energy
        if cluster.e <= e_max:
            p_sep = 1.0
        else:
            p_sep = max(0.5, 1.0 - 0.5 * (cluster.e - e_max) / e_max)
        return TAG_PI0_LIKE if rng.uniform() < p_sep else TAG_SINGLE_PHOTON
    return TAG_SINGLE_PHOTON if rng.uniform() < SINGLE_PHOTON_EFF else TAG_PI0_LIKE


def smear_track(truth: FourVector, charge: int, pid: str,
                production_vertex: np.ndarray,
                scenario: DetectorScenario,
                rng: np.random.Generator,
                truth_index: int = -1) -> ReconstructedTrack:
    """Momentum scale from sigma(1/pT) = k, direction unchanged."""
    pt = truth.pt
    k = scenario.track_pt_res
    p4 = truth
    if k > 0 and pt > 1e-9:
        inv_pt = 1.0 / pt + rng.normal(0.0, 1.0) * k
        if inv_pt <= 0.0:
            inv_pt = 1.0 / pt  # pathological tail, keep the truth momentum
        scale = (1.0 / inv_pt) / pt
        mass = math.sqrt(max(truth.mass2, 0.0))
        px, py, pz = truth.px * scale, truth.py * scale, truth.pz * scale
        e = math.sqrt(mass * mass + px * px + py * py + pz * pz)
        p4 = FourVector(e, px, py, pz)
    vtx = production_vertex + rng.normal(0.0, 1.0, 3) * scenario.vertex_res
    return ReconstructedTrack(p=p4, charge=charge, pid=pid, impact_vertex=vtx,
                              truth_index=truth_index,
                              truth_vertex=np.array(production_vertex, dtype=float))


def reconstruct_tracks(event: Event, scenario: DetectorScenario,
                       rng: np.random.Generator) -> list[ReconstructedTrack]:
    """Smear all final-state charged pions and kaons (truth-perfect PID)."""
    tracks = []
    for i, rec in enumerate(event.records):
        if rec.status != "final":
            continue
        a = abs(rec.pdg_id)
        if a == K.PDG_PIP:
            pid = "pion"
        elif a == K.PDG_KP:
            pid = "kaon"
        else:
            continue
        charge = K.charge_of(rec.pdg_id)
        tracks.append(smear_track(rec.p, charge, pid, rec.production_vertex,
                                  scenario, rng, truth_index=i))
    return tracks


def reconstruct_secondary_vertex(tracks: list[ReconstructedTrack],
                                 ) -> tuple[np.ndarray, float]:
    """Vertex position as the mean of smeared impact points, plus its distance
    from the origin."""
    if len(tracks) < 2:
        raise InsufficientTracksError(
            f"vertexing needs >= 2 tracks, got {len(tracks)}")
    pos = np.mean([t.impact_vertex for t in tracks], axis=0)
    return pos, float(np.linalg.norm(pos))


# ---------------------------------------------------------------------------
# Scenario configuration

_SCENARIO_FIELDS = {
    "ecal_stochastic": float,
    "ecal_constant": float,
    "pos_res_stochastic": float,
    "pos_res_constant": float,
    "ecal_radius": float,
    "photon_threshold": float,
    "fake_rate": float,
    "fake_energy_mean": float,
    "merge_distance": float,
    "pi0_mass_fit_enabled": bool,
    "gamma_pi0_sep_max_energy": float,
    "track_pt_res": float,
    "vertex_res": float,
}


def scenario_from_section(name: str, section) -> DetectorScenario:
    kwargs = {"name": name}
    for key, typ in _SCENARIO_FIELDS.items():
        if key not in section:
            raise ConfigError(f"scenario '{name}' is missing required key '{key}'")
        raw = section[key]
        if typ is bool:
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigError(f"scenario '{name}': {key} must be boolean, got {raw!r}")
            kwargs[key] = raw.lower() in ("true", "1", "yes")
        else:
            kwargs[key] = typ(raw)
    return DetectorScenario(**kwargs)


def load_scenarios(parser: configparser.ConfigParser) -> dict[str, DetectorScenario]:
    """All [scenario NAME] sections of a parsed config."""
    out = {}
    for section in parser.sections():
        if section.startswith("scenario "):
            name = section.split(None, 1)[1]
            out[name] = scenario_from_section(name, parser[section])
    return out
