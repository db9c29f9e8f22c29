"""Benchmark channel analyses: hemisphere splitting, candidate building,
cut flows, separation metric, b-tag model and yield scaling.

Every selection is deterministic given (event, scenario, cuts, rng seed);
candidates carry the quantities the cuts were applied to so a result can be
re-checked from its record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import constants as K
from .detector import (DetectorScenario, ReconstructedPhoton,
                       ReconstructedTrack, TAG_SINGLE_PHOTON,
                       gamma_pi0_separation, reconstruct_photons,
                       reconstruct_tracks, reconstruct_secondary_vertex)
from .errors import ConfigError, UnphysicalInputError
from .evtgen import Event
from .kinematics import FourVector, UnitAxis, invariant_mass, thrust
from .kinfit import PhotonParameters, chi2_probability, fit_pi0_mass
from .report import Histogram


@dataclass
class Hemisphere:
    photons: list[ReconstructedPhoton]
    photon_tags: list[str]
    tracks: list[ReconstructedTrack]
    side: str  # "plus" or "minus"


@dataclass(frozen=True)
class BTagModel:
    eff_b: float = 0.90
    mistag_c: float = 0.10
    mistag_uds: float = 0.0

    def tag(self, flavour: str, rng: np.random.Generator) -> bool:
        p = {"b": self.eff_b, "c": self.mistag_c, "uds": self.mistag_uds}[flavour]
        return bool(rng.uniform() < p)


@dataclass
class RecoEvent:
    """Detector-level view of one event, split into thrust hemispheres."""

    event: Event
    photons: list[ReconstructedPhoton]
    photon_tags: list[str]
    tracks: list[ReconstructedTrack]
    thrust_value: float
    axis: UnitAxis
    plus: Hemisphere
    minus: Hemisphere

    def hemispheres(self) -> tuple[Hemisphere, Hemisphere]:
        return self.plus, self.minus

    def opposite(self, hemi: Hemisphere) -> Hemisphere:
        return self.minus if hemi is self.plus else self.plus


def split_hemispheres(photons: list[ReconstructedPhoton],
                      photon_tags: list[str],
                      tracks: list[ReconstructedTrack],
                      axis: UnitAxis) -> tuple[Hemisphere, Hemisphere]:
    """Assign objects by sign of momentum . axis; ties (zero) go to plus."""
    n = axis.as_array()
    plus = Hemisphere([], [], [], "plus")
    minus = Hemisphere([], [], [], "minus")
    for ph, tag in zip(photons, photon_tags):
        target = plus if float(np.dot(ph.p4.p3, n)) >= 0.0 else minus
        target.photons.append(ph)
        target.photon_tags.append(tag)
    for tr in tracks:
        target = plus if float(np.dot(tr.p.p3, n)) >= 0.0 else minus
        target.tracks.append(tr)
    return plus, minus


def reconstruct_event(event: Event, scenario: DetectorScenario,
                      rng: np.random.Generator) -> RecoEvent | None:
    """Full detector pass: photons, tracks, gamma/pi0 tags, thrust split.

    Returns None for events with no reconstructable momenta.
    """
    photons = reconstruct_photons(event, scenario, rng)
    tracks = reconstruct_tracks(event, scenario, rng)
    tags = [gamma_pi0_separation(ph, scenario, rng) for ph in photons]
    momenta = [ph.p4 for ph in photons] + [tr.p for tr in tracks]
    if not momenta:
        return None
    t_value, axis = thrust(momenta)
    plus, minus = split_hemispheres(photons, tags, tracks, axis)
    return RecoEvent(event=event, photons=photons, photon_tags=tags,
                     tracks=tracks, thrust_value=t_value, axis=axis,
                     plus=plus, minus=minus)


def bs_b0_separation(sigma_bs: float, sigma_b0: float,
                     delta_m: float = K.BS_B0_DELTA_M) -> float:
    """Peak distance over the quadratic sum of the two peak widths."""
    if sigma_bs <= 0 or sigma_b0 <= 0:
        raise UnphysicalInputError("peak widths must be positive")
    return delta_m / math.sqrt(sigma_bs ** 2 + sigma_b0 ** 2)


def scale_yield(n_pass: int, n_generated: int, chain_br_product: float,
                flavour_fraction: float, species_fraction: float,
                n_z: float) -> float:
    """Expected events for n_z Z decays (factor 2 for the two hemispheres)."""
    if n_generated <= 0:
        raise UnphysicalInputError("n_generated must be positive")
    for name, frac in (("chain_br_product", chain_br_product),
                       ("flavour_fraction", flavour_fraction),
                       ("species_fraction", species_fraction)):
        if not 0.0 <= frac <= 1.0:
            raise UnphysicalInputError(f"{name} must lie in [0, 1]")
    return (n_z * 2.0 * flavour_fraction * species_fraction
            * chain_br_product * (n_pass / n_generated))


# ---------------------------------------------------------------------------
# Candidates

@dataclass(frozen=True)
class DsPiCandidate:
    m_phi: float
    m_rho: float
    m_ds: float
    m_b: float
    energy: float
    pi0_metric: float          # |m(gg) - m_pi0| before any fit
    pi0_mass: float            # post-fit when the fit is enabled
    fit_chi2: float | None
    photon_origins: tuple[str, str]
    side: str


@dataclass(frozen=True)
class Pi0Pi0Candidate:
    m_pi0pi0: float
    m_4gamma_raw: float
    system_energy: float
    pi0_masses: tuple[float, float]   # post-fit when the fit is enabled
    fit_chi2: tuple[float, float] | None
    photon_origins: tuple[str, str, str, str]
    side: str


@dataclass(frozen=True)
class KstarGammaCandidate:
    m_kpigamma: float
    m_kpi: float
    vertex_distance: float
    photon_energy: float
    system_energy: float
    photon_origin: str
    side: str


def _pair_mass(g1: ReconstructedPhoton, g2: ReconstructedPhoton) -> float:
    return invariant_mass([g1.p4, g2.p4])


def _best_pi0_pair(photons: list[ReconstructedPhoton], lo: float, hi: float,
                   ) -> tuple[int, int, float] | None:
    """Pair inside the mass window minimising |m - m_pi0|."""
    best = None
    for i in range(len(photons)):
        for j in range(i + 1, len(photons)):
            m = _pair_mass(photons[i], photons[j])
            if not lo <= m <= hi:
                continue
            metric = abs(m - K.PI0_MASS)
            if best is None or metric < best[2]:
                best = (i, j, metric)
    return best


def _fit_pair(g1: ReconstructedPhoton, g2: ReconstructedPhoton):
    """1C fit of a photon pair; returns (four_vector, chi2) or None if the
    fit does not converge (never silently accepted)."""
    result = fit_pi0_mass(PhotonParameters.from_photons(g1, g2))
    if not result.converged:
        return None
    return result.fitted_pi0, result.chi2


def select_ds_pi(reco: RecoEvent, scenario: DetectorScenario,
                 cuts: dict) -> tuple[list[DsPiCandidate], int]:
    """Ds -> phi rho selection; one best candidate per hemisphere.

    Returns (candidates, n_unconverged_fits).
    """
    out: list[DsPiCandidate] = []
    n_bad_fit = 0
    for hemi in reco.hemispheres():
        pair = _best_pi0_pair(hemi.photons, cuts["pi0_window_lo"],
                              cuts["pi0_window_hi"])
        if pair is None:
            continue
        g1, g2 = hemi.photons[pair[0]], hemi.photons[pair[1]]
        pi0_metric = pair[2]
        fit_chi2 = None
        if scenario.pi0_mass_fit_enabled:
            fitted = _fit_pair(g1, g2)
            if fitted is None:
                n_bad_fit += 1
                continue
            pi0_p4, fit_chi2 = fitted
            if cuts["chi2_prob_min"] > 0.0 and \
                    chi2_probability(fit_chi2) < cuts["chi2_prob_min"]:
                continue
        else:
            pi0_p4 = g1.p4 + g2.p4

        kaons_pos = [t for t in hemi.tracks if t.pid == "kaon" and t.charge > 0]
        kaons_neg = [t for t in hemi.tracks if t.pid == "kaon" and t.charge < 0]
        pions = [t for t in hemi.tracks if t.pid == "pion"]

        # The pi0 pair is fixed per hemisphere, so remaining combinatorics
        # (phi pair, rho pion, bachelor) rank by Ds-mass proximity, ties by
        # higher candidate energy.
        best: DsPiCandidate | None = None
        best_key = None
        for kp in kaons_pos:
            for km in kaons_neg:
                m_phi = invariant_mass([kp.p, km.p])
                if not cuts["phi_lo"] <= m_phi <= cuts["phi_hi"]:
                    continue
                phi_p4 = kp.p + km.p
                for rho_pi in pions:
                    m_rho = invariant_mass([rho_pi.p, pi0_p4])
                    if not cuts["rho_lo"] <= m_rho <= cuts["rho_hi"]:
                        continue
                    ds_p4 = phi_p4 + rho_pi.p + pi0_p4
                    m_ds = ds_p4.mass
                    if not cuts["ds_lo"] <= m_ds <= cuts["ds_hi"]:
                        continue
                    for bach in pions:
                        if bach is rho_pi or bach.charge * rho_pi.charge >= 0:
                            continue
                        b_p4 = ds_p4 + bach.p
                        cand = DsPiCandidate(
                            m_phi=m_phi, m_rho=m_rho, m_ds=m_ds,
                            m_b=b_p4.mass, energy=b_p4.e,
                            pi0_metric=pi0_metric, pi0_mass=pi0_p4.mass,
                            fit_chi2=fit_chi2,
                            photon_origins=(g1.origin, g2.origin),
                            side=hemi.side)
                        key = (abs(m_ds - K.DS_MASS), -cand.energy)
                        if best is None or key < best_key:
                            best = cand
                            best_key = key
        if best is not None:
            out.append(best)
    return out, n_bad_fit


def _vertex_veto(hemi: Hemisphere, veto_distance: float) -> bool:
    """True when the hemisphere holds a reconstructed track vertex beyond
    the veto distance (tracks grouped by shared truth vertex)."""
    groups: dict[bytes, list[ReconstructedTrack]] = {}
    for tr in hemi.tracks:
        key = np.round(tr.truth_vertex, 9).tobytes()
        groups.setdefault(key, []).append(tr)
    for tracks in groups.values():
        if len(tracks) < 2:
            continue
        _, dist = reconstruct_secondary_vertex(tracks)
        if dist > veto_distance:
            return True
    return False


def select_pi0pi0(reco: RecoEvent, scenario: DetectorScenario,
                  btag: BTagModel, cuts: dict,
                  rng: np.random.Generator) -> tuple[list[Pi0Pi0Candidate], int]:
    """B0 -> pi0 pi0 selection in the b-tagged event's search hemisphere."""
    out: list[Pi0Pi0Candidate] = []
    n_bad_fit = 0
    flavour = reco.event.primary_flavour
    for hemi in reco.hemispheres():
        # Tag the opposite hemisphere; this one becomes the search hemisphere.
        if not btag.tag(flavour, rng):
            continue
        if _vertex_veto(hemi, cuts["vertex_veto_mm"]):
            continue
        photons = sorted(hemi.photons, key=lambda g: g.e, reverse=True)
        if len(photons) < 4:
            continue

        lead = photons[0]
        companion = None
        best_metric = None
        for g in photons[1:]:
            metric = abs(_pair_mass(lead, g) - K.PI0_MASS)
            if best_metric is None or metric < best_metric:
                best_metric = metric
                companion = g
        remaining = [g for g in photons if g is not lead and g is not companion]
        if len(remaining) < 2:
            continue
        second = remaining[0]
        partner = None
        best_metric2 = None
        for g in remaining[1:]:
            m = _pair_mass(second, g)
            if not cuts["pi0_window_lo"] <= m <= cuts["pi0_window_hi"]:
                continue
            metric = abs(m - K.PI0_MASS)
            if best_metric2 is None or metric < best_metric2:
                best_metric2 = metric
                partner = g
        if partner is None:
            continue

        m4g = invariant_mass([lead.p4, companion.p4, second.p4, partner.p4])
        if not cuts["m4g_lo"] < m4g < cuts["m4g_hi"]:
            continue

        fit_chi2 = None
        if scenario.pi0_mass_fit_enabled:
            f1 = _fit_pair(lead, companion)
            f2 = _fit_pair(second, partner)
            if f1 is None or f2 is None:
                n_bad_fit += 1
                continue
            pi0_1, c1 = f1
            pi0_2, c2 = f2
            fit_chi2 = (c1, c2)
        else:
            pi0_1 = lead.p4 + companion.p4
            pi0_2 = second.p4 + partner.p4

        system = pi0_1 + pi0_2
        if system.e <= cuts["system_e_min"]:
            continue
        out.append(Pi0Pi0Candidate(
            m_pi0pi0=system.mass, m_4gamma_raw=m4g, system_energy=system.e,
            pi0_masses=(pi0_1.mass, pi0_2.mass), fit_chi2=fit_chi2,
            photon_origins=(lead.origin, companion.origin,
                            second.origin, partner.origin),
            side=hemi.side))
    return out, n_bad_fit


def select_kstar_gamma(reco: RecoEvent, scenario: DetectorScenario,
                       cuts: dict) -> list[KstarGammaCandidate]:
    """B0 -> K* gamma selection: displaced (K, pi) vertex plus a hard photon
    tagged as a single photon."""
    out: list[KstarGammaCandidate] = []
    for hemi in reco.hemispheres():
        kaons = [t for t in hemi.tracks if t.pid == "kaon"]
        pions = [t for t in hemi.tracks if t.pid == "pion"]
        best_pair = None
        for k in kaons:
            for pi in pions:
                if k.charge * pi.charge >= 0:
                    continue
                _, dist = reconstruct_secondary_vertex([k, pi])
                if not dist > cuts["vertex_min_mm"]:
                    continue
                m_kpi = invariant_mass([k.p, pi.p])
                if not cuts["kstar_lo"] < m_kpi < cuts["kstar_hi"]:
                    continue
                metric = abs(m_kpi - K.MASS_GEV[K.PDG_KSTAR0])
                if best_pair is None or metric < best_pair[0]:
                    best_pair = (metric, k, pi, m_kpi, dist)
        if best_pair is None:
            continue
        _, k, pi, m_kpi, dist = best_pair

        photon = None
        for g, tag in zip(hemi.photons, hemi.photon_tags):
            if tag != TAG_SINGLE_PHOTON or not g.e > cuts["egamma_min"]:
                continue
            if photon is None or g.e > photon.e:
                photon = g
        if photon is None:
            continue

        system = k.p + pi.p + photon.p4
        if not system.e > cuts["system_e_min"]:
            continue
        out.append(KstarGammaCandidate(
            m_kpigamma=system.mass, m_kpi=m_kpi, vertex_distance=dist,
            photon_energy=photon.e, system_energy=system.e,
            photon_origin=photon.origin, side=hemi.side))
    return out


# ---------------------------------------------------------------------------
# Channel bookkeeping

@dataclass
class ChannelResult:
    spectrum: Histogram
    n_generated: int = 0
    n_signal_pass: int = 0
    n_background_pass: int = 0
    n_unconverged: int = 0
    scaled_yield: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def efficiency(self) -> float:
        return self.n_signal_pass / self.n_generated if self.n_generated else 0.0


def load_cuts(parser, channel: str) -> dict:
    """Read the [cuts CHANNEL] section; every key is required, no defaults."""
    section_name = f"cuts {channel}"
    if not parser.has_section(section_name):
        raise ConfigError(f"missing config section [{section_name}]")
    section = parser[section_name]
    required = {
        "ds_pi": ["phi_lo", "phi_hi", "rho_lo", "rho_hi", "ds_lo", "ds_hi",
                  "pi0_window_lo", "pi0_window_hi", "chi2_prob_min",
                  "hist_lo", "hist_hi", "hist_bins"],
        "pi0pi0": ["pi0_window_lo", "pi0_window_hi", "m4g_lo", "m4g_hi",
                   "system_e_min", "vertex_veto_mm", "btag_eff_b",
                   "btag_mistag_c", "btag_mistag_uds",
                   "hist_lo", "hist_hi", "hist_bins"],
        "kstar_gamma": ["vertex_min_mm", "kstar_lo", "kstar_hi", "egamma_min",
                        "system_e_min", "hist_lo", "hist_hi", "hist_bins"],
        "single_pi0": ["energies", "hist_lo", "hist_hi", "hist_bins"],
    }
    if channel not in required:
        raise ConfigError(f"unknown channel {channel!r}")
    cuts: dict = {}
    for key in required[channel]:
        if key not in section:
            raise ConfigError(f"[{section_name}] is missing required key '{key}'")
        raw = section[key]
        if key == "energies":
            cuts[key] = [float(x) for x in raw.split()]
        elif key == "hist_bins":
            cuts[key] = int(raw)
        else:
            cuts[key] = float(raw)
    return cuts
