import math

import numpy as np
import pytest

from zcalo import constants as K
from zcalo.analysis import (BTagModel, Hemisphere, RecoEvent,
                            bs_b0_separation, load_cuts, reconstruct_event,
                            scale_yield, select_ds_pi, select_kstar_gamma,
                            select_pi0pi0, split_hemispheres)
from zcalo.config import channel_spec, generator_from_config, load_config
from zcalo.detector import (ReconstructedPhoton, ReconstructedTrack,
                            TAG_PI0_LIKE, TAG_SINGLE_PHOTON, load_scenarios)
from zcalo.errors import UnphysicalInputError
from zcalo.evtgen import (Event, RECO_STREAM, event_rng, force_signal_chain)
from zcalo.kinematics import FourVector, UnitAxis, boost, from_polar


@pytest.fixture(scope="module")
def parser():
    return load_config()


@pytest.fixture(scope="module")
def scenarios(parser):
    return load_scenarios(parser)


@pytest.fixture(scope="module")
def gen_cfg(parser):
    return generator_from_config(parser)


def make_photon(p4: FourVector, origin="genuine", idx=0) -> ReconstructedPhoton:
    return ReconstructedPhoton(e=p4.e, theta=p4.theta, phi=p4.phi,
                               cov_diag=(1e-4, 1e-8, 1e-8),
                               origin=origin, truth_index=idx)


def make_track(p4: FourVector, charge: int, pid: str,
               vertex=(0.0, 0.0, 0.0), idx=0) -> ReconstructedTrack:
    v = np.array(vertex, dtype=float)
    return ReconstructedTrack(p=p4, charge=charge, pid=pid, impact_vertex=v,
                              truth_index=idx, truth_vertex=v.copy())


def make_reco(photons, tags, tracks, flavour="b") -> RecoEvent:
    plus = Hemisphere(photons=list(photons), photon_tags=list(tags),
                      tracks=list(tracks), side="plus")
    minus = Hemisphere(photons=[], photon_tags=[], tracks=[], side="minus")
    ev = Event(event_id=0, seed=0, records=[], primary_flavour=flavour)
    return RecoEvent(event=ev, photons=list(photons), photon_tags=list(tags),
                     tracks=list(tracks), thrust_value=1.0,
                     axis=UnitAxis(1.0, 0.0, 0.0), plus=plus, minus=minus)


class TestSplitHemispheres:
    def test_along_axis_goes_plus(self):
        axis = UnitAxis(0.0, 0.0, 1.0)
        ph = make_photon(from_polar(1.0, 0.3, 0.0))
        plus, minus = split_hemispheres([ph], ["single_photon"], [], axis)
        assert len(plus.photons) == 1
        assert len(minus.photons) == 0

    def test_orthogonal_ties_to_plus(self):
        axis = UnitAxis(0.0, 0.0, 1.0)
        ph = make_photon(FourVector(1.0, 1.0, 0.0, 0.0))
        plus, _ = split_hemispheres([ph], ["single_photon"], [], axis)
        assert len(plus.photons) == 1

    def test_counts_partition(self):
        rng = np.random.default_rng(1)
        axis = UnitAxis(0.0, 0.0, 1.0)
        photons = [make_photon(from_polar(1.0, rng.uniform(0, math.pi),
                                          rng.uniform(-3, 3)))
                   for _ in range(17)]
        tracks = [make_track(FourVector(1.0, *rng.normal(0, 1, 3)), 1, "pion")
                  for _ in range(9)]
        plus, minus = split_hemispheres(photons, ["x"] * 17, tracks, axis)
        assert len(plus.photons) + len(minus.photons) == 17
        assert len(plus.tracks) + len(minus.tracks) == 9


class TestSeparationMetric:
    def test_paper_inputs(self):
        assert bs_b0_separation(0.1453 / math.sqrt(2), 0.1453 / math.sqrt(2),
                                delta_m=0.0872) == pytest.approx(0.600, abs=2e-3)
        assert bs_b0_separation(0.0545 / math.sqrt(2), 0.0545 / math.sqrt(2),
                                delta_m=0.0872) == pytest.approx(1.600, abs=2e-3)

    def test_zero_delta(self):
        assert bs_b0_separation(0.1, 0.1, delta_m=0.0) == 0.0

    def test_symmetric_in_widths(self):
        assert bs_b0_separation(0.03, 0.07) == bs_b0_separation(0.07, 0.03)

    def test_nonpositive_width_rejected(self):
        with pytest.raises(UnphysicalInputError):
            bs_b0_separation(0.0, 0.1)


class TestScaleYield:
    def test_pdg_br_arithmetic(self):
        y = scale_yield(1, 1, 1.55e-6, 0.2158, 0.40, 1e9)
        assert y == pytest.approx(267.6, abs=0.1)

    def test_zero_efficiency(self):
        assert scale_yield(0, 100, 1e-5, 0.2, 0.4, 1e9) == 0.0

    def test_identity_two_hemispheres(self):
        assert scale_yield(5, 5, 1.0, 1.0, 1.0, 1e9) == 2e9

    def test_zero_generated_rejected(self):
        with pytest.raises(UnphysicalInputError):
            scale_yield(1, 0, 1.0, 1.0, 1.0, 1e9)


def run_channel(channel, scenario, gen_cfg, parser, parent, n, seed,
                collect=lambda c: c):
    cuts = load_cuts(parser, channel)
    spec = channel_spec(parser, channel)
    btag = BTagModel()
    out = []
    bad = 0
    for i in range(n):
        ev = force_signal_chain(gen_cfg, spec.chains[parent],
                                event_rng(seed, i), event_id=i, seed=seed)
        reco = reconstruct_event(ev, scenario, event_rng(seed, i, RECO_STREAM))
        if channel == "ds_pi":
            cands, nb = select_ds_pi(reco, scenario, cuts)
        elif channel == "pi0pi0":
            cands, nb = select_pi0pi0(reco, scenario, btag, cuts,
                                      event_rng(seed, i, RECO_STREAM + 1))
        else:
            cands, nb = select_kstar_gamma(reco, scenario, cuts), 0
        bad += nb
        out.extend(collect(c) for c in cands)
    return out, bad


class TestDsPiSelection:
    def test_perfect_detector_masses(self, parser, scenarios, gen_cfg):
        # combinatorial runners-up (wrong bachelor pion) survive the windows
        # in a small fraction of events; the bulk sits exactly on the
        # nominal masses
        cands, _ = run_channel("ds_pi", scenarios["perfect"], gen_cfg, parser,
                               531, 60, seed=50)
        assert len(cands) > 10
        ds_exact = [abs(c.m_ds - K.DS_MASS) < 1e-3 for c in cands]
        b_exact = [abs(c.m_b - K.BS_MASS) < 1e-3 for c in cands]
        assert np.mean(ds_exact) > 0.85
        assert np.mean(b_exact) > 0.85
        assert np.median([c.m_ds for c in cands]) == pytest.approx(
            K.DS_MASS, abs=1e-3)
        assert np.median([c.m_b for c in cands]) == pytest.approx(
            K.BS_MASS, abs=1e-3)

    def test_phi_window_enforced(self, parser, scenarios):
        cuts = load_cuts(parser, "ds_pi")
        # KK mass at 1.08: outside the phi window, no candidate may form
        kk_mass = 1.08
        p = math.sqrt((kk_mass / 2) ** 2 - K.MASS_GEV[K.PDG_KP] ** 2)
        k1 = FourVector(kk_mass / 2, p, 0, 0)
        k2 = FourVector(kk_mass / 2, -p, 0, 0)
        booster = np.array([0.0, 0.0, 0.9])
        tracks = [make_track(boost(k1, booster), +1, "kaon"),
                  make_track(boost(k2, booster), -1, "kaon"),
                  make_track(from_polar(3.0, 0.4, 0.1, 0.13957), +1, "pion"),
                  make_track(from_polar(2.0, 0.5, -0.1, 0.13957), -1, "pion")]
        g1 = from_polar(1.0, 0.45, 0.05)
        g2 = from_polar(1.2, 0.52, -0.03)
        photons = [make_photon(g1), make_photon(g2)]
        reco = make_reco(photons, ["single_photon"] * 2, tracks)
        cands, _ = select_ds_pi(reco, scenarios["perfect"], cuts)
        assert all(not 1.010 <= c.m_phi <= 1.030 for c in cands) is True
        assert cands == []

    def test_candidates_recheck_cuts(self, parser, scenarios, gen_cfg):
        cuts = load_cuts(parser, "ds_pi")
        cands, _ = run_channel("ds_pi", scenarios["s1"], gen_cfg, parser,
                               531, 150, seed=51)
        assert cands
        for c in cands:
            assert cuts["phi_lo"] <= c.m_phi <= cuts["phi_hi"]
            assert cuts["rho_lo"] <= c.m_rho <= cuts["rho_hi"]
            assert cuts["ds_lo"] <= c.m_ds <= cuts["ds_hi"]
            assert c.pi0_metric <= 0.025 + 1e-12

    def test_fit_constrains_pi0_mass(self, parser, scenarios, gen_cfg):
        cands, _ = run_channel("ds_pi", scenarios["s3"], gen_cfg, parser,
                               531, 120, seed=52)
        assert cands
        for c in cands:
            assert c.fit_chi2 is not None
            assert c.pi0_mass == pytest.approx(K.PI0_MASS, abs=1e-4)

    def test_fitted_narrower_than_unfitted(self, parser, scenarios, gen_cfg):
        from dataclasses import replace
        from zcalo.report import core_width
        s3 = scenarios["s3"]
        s3_nofit = replace(s3, name="s3_nofit", pi0_mass_fit_enabled=False)
        with_fit, _ = run_channel("ds_pi", s3, gen_cfg, parser, 531, 1200,
                                  seed=53, collect=lambda c: c.m_b)
        without_fit, _ = run_channel("ds_pi", s3_nofit, gen_cfg, parser, 531,
                                     1200, seed=53, collect=lambda c: c.m_b)
        assert core_width(with_fit).sigma < core_width(without_fit).sigma

    def test_selection_deterministic(self, parser, scenarios, gen_cfg):
        a, _ = run_channel("ds_pi", scenarios["s1"], gen_cfg, parser, 531, 30,
                           seed=54)
        b, _ = run_channel("ds_pi", scenarios["s1"], gen_cfg, parser, 531, 30,
                           seed=54)
        assert a == b


def pi0pi0_photons(masses_ok=True):
    """Four photons forming two clean pi0-like pairs flying along +x at high
    energy, mimicking a hard pi0 pair system."""
    out = []
    rng = np.random.default_rng(99)
    for e_pi, tilt in ((18.0, 0.10), (17.0, -0.10)):
        half = math.acos(1.0 - K.PI0_MASS ** 2 / (2 * (e_pi / 2) ** 2)) / 2
        t1 = math.pi / 2 + tilt + half
        t2 = math.pi / 2 + tilt - half
        out.append(from_polar(e_pi / 2, t1, 0.0))
        out.append(from_polar(e_pi / 2, t2, 0.0))
    return [make_photon(p, idx=i) for i, p in enumerate(out)]


class TestPi0Pi0Selection:
    def test_perfect_detector_candidate_mass(self, parser, scenarios, gen_cfg):
        cands, _ = run_channel("pi0pi0", scenarios["perfect"], gen_cfg, parser,
                               511, 60, seed=55, collect=lambda c: c.m_pi0pi0)
        assert len(cands) > 10
        masses = np.array(cands)
        close = np.abs(masses - K.B0_MASS) < 1e-3
        assert close.mean() > 0.8  # rare combinatorial candidates aside

    def test_vertex_veto(self, parser, scenarios):
        cuts = load_cuts(parser, "pi0pi0")
        photons = pi0pi0_photons()
        tags = [TAG_SINGLE_PHOTON] * len(photons)
        displaced = [make_track(from_polar(3.0, 1.2, 0.3, 0.13957), +1,
                                "pion", vertex=(1.0, 0.0, 0.0), idx=1),
                     make_track(from_polar(2.0, 1.3, -0.2, 0.13957), -1,
                                "pion", vertex=(1.0, 0.0, 0.0), idx=2)]
        reco = make_reco(photons, tags, displaced)
        rng = np.random.default_rng(0)
        cands, _ = select_pi0pi0(reco, scenarios["perfect"], BTagModel(1.0, 0, 0),
                                 cuts, rng)
        assert cands == []

        prompt = [make_track(t.p, t.charge, t.pid, vertex=(0.0, 0.0, 0.0),
                             idx=t.truth_index) for t in displaced]
        reco2 = make_reco(photons, tags, prompt)
        cands2, _ = select_pi0pi0(reco2, scenarios["perfect"],
                                  BTagModel(1.0, 0, 0), cuts,
                                  np.random.default_rng(0))
        assert len(cands2) == 1

    def test_4gamma_mass_window(self, parser, scenarios):
        cuts = load_cuts(parser, "pi0pi0")
        # scale photon energies down so m(4gamma) = 3.5 GeV: outside (4, 6)
        photons = pi0pi0_photons()
        reco = make_reco(photons, [TAG_SINGLE_PHOTON] * 4, [])
        cands, _ = select_pi0pi0(reco, scenarios["perfect"],
                                 BTagModel(1.0, 0, 0), cuts,
                                 np.random.default_rng(0))
        m4g = cands[0].m_4gamma_raw if cands else None
        if cands:  # nominal geometry gives ~5.4 GeV, inside the window
            assert 4.0 < m4g < 6.0
        scale = 3.5 / 5.4
        shrunk = [make_photon(p.p4.scaled(scale), idx=i)
                  for i, p in enumerate(photons)]
        reco2 = make_reco(shrunk, [TAG_SINGLE_PHOTON] * 4, [])
        cands2, _ = select_pi0pi0(reco2, scenarios["perfect"],
                                  BTagModel(1.0, 0, 0), cuts,
                                  np.random.default_rng(0))
        assert cands2 == []

    def test_btag_rates(self):
        rng = np.random.default_rng(56)
        btag = BTagModel()
        n = 100_000
        b_hits = sum(btag.tag("b", rng) for _ in range(n))
        c_hits = sum(btag.tag("c", rng) for _ in range(n))
        assert abs(b_hits / n - 0.90) < 5 * math.sqrt(0.9 * 0.1 / n)
        assert abs(c_hits / n - 0.10) < 5 * math.sqrt(0.1 * 0.9 / n)
        assert not any(btag.tag("uds", rng) for _ in range(1000))

    def test_pi0_masses_constrained_when_fit(self, parser, scenarios, gen_cfg):
        cands, _ = run_channel("pi0pi0", scenarios["s3"], gen_cfg, parser,
                               511, 250, seed=57)
        assert cands
        for c in cands:
            for m in c.pi0_masses:
                assert m == pytest.approx(K.PI0_MASS, abs=1e-4)


def kstar_hemisphere(vertex=(0.2, 0.0, 0.0), kpi_mass=0.92,
                     photon_e=6.0, boost_e=28.0, tag=TAG_SINGLE_PHOTON):
    """One hemisphere holding a K* -> K pi pair plus a hard photon."""
    p_star = math.sqrt((kpi_mass ** 2 - (K.MASS_GEV[K.PDG_KP]
                                         + K.MASS_GEV[K.PDG_PIP]) ** 2)
                       * (kpi_mass ** 2 - (K.MASS_GEV[K.PDG_KP]
                                           - K.MASS_GEV[K.PDG_PIP]) ** 2)) \
        / (2 * kpi_mass)
    ek = math.sqrt(K.MASS_GEV[K.PDG_KP] ** 2 + p_star ** 2)
    epi = math.sqrt(K.MASS_GEV[K.PDG_PIP] ** 2 + p_star ** 2)
    k = FourVector(ek, 0.0, p_star, 0.0)
    pi = FourVector(epi, 0.0, -p_star, 0.0)
    beta = math.sqrt(1 - (kpi_mass / boost_e) ** 2)
    b = np.array([beta, 0.0, 0.0])
    k, pi = boost(k, b), boost(pi, b)
    tracks = [make_track(k, +1, "kaon", vertex=vertex, idx=1),
              make_track(pi, -1, "pion", vertex=vertex, idx=2)]
    photon = make_photon(from_polar(photon_e, math.pi / 2 - 0.05, 0.02), idx=3)
    return tracks, [photon], [tag]


class TestKstarGammaSelection:
    def _select(self, parser, scenarios, cuts_override=None, **kwargs):
        cuts = load_cuts(parser, "kstar_gamma")
        if cuts_override:
            cuts.update(cuts_override)
        tracks, photons, tags = kstar_hemisphere(**kwargs)
        reco = make_reco(photons, tags, tracks)
        return select_kstar_gamma(reco, scenarios["perfect"], cuts)

    def test_nominal_accepted(self, parser, scenarios):
        cands = self._select(parser, scenarios)
        assert len(cands) == 1
        c = cands[0]
        assert 0.85 < c.m_kpi < 1.0
        assert c.photon_energy > 5.0
        assert c.system_energy > 30.0

    def test_vertex_boundary_bit_exact(self, parser, scenarios):
        from zcalo.detector import reconstruct_secondary_vertex
        tracks, _, _ = kstar_hemisphere()
        _, dist = reconstruct_secondary_vertex(tracks)
        # cut exactly at the reconstructed distance: strict > rejects
        assert self._select(parser, scenarios,
                            cuts_override={"vertex_min_mm": dist}) == []
        below = np.nextafter(dist, -np.inf)
        assert len(self._select(parser, scenarios,
                                cuts_override={"vertex_min_mm": below})) == 1

    def test_vertex_40um_rejected(self, parser, scenarios):
        assert self._select(parser, scenarios,
                            vertex=(0.040, 0.0, 0.0)) == []

    def test_kpi_window_boundaries(self, parser, scenarios):
        cands = self._select(parser, scenarios)
        m = cands[0].m_kpi
        assert self._select(parser, scenarios,
                            cuts_override={"kstar_lo": m}) == []
        assert self._select(parser, scenarios,
                            cuts_override={"kstar_hi": m}) == []
        lo = np.nextafter(m, -np.inf)
        hi = np.nextafter(m, np.inf)
        assert len(self._select(parser, scenarios,
                                cuts_override={"kstar_lo": lo,
                                               "kstar_hi": hi})) == 1

    def test_photon_energy_boundary(self, parser, scenarios):
        assert self._select(parser, scenarios,
                            cuts_override={"egamma_min": 6.0},
                            photon_e=6.0) == []
        assert len(self._select(parser, scenarios,
                                cuts_override={"egamma_min":
                                               np.nextafter(6.0, -np.inf)},
                                photon_e=6.0)) == 1

    def test_system_energy_boundary(self, parser, scenarios):
        cands = self._select(parser, scenarios)
        e_sys = cands[0].system_energy
        assert self._select(parser, scenarios,
                            cuts_override={"system_e_min": e_sys}) == []
        assert len(self._select(parser, scenarios,
                                cuts_override={"system_e_min":
                                               np.nextafter(e_sys, -np.inf)})) == 1

    def test_pi0_like_photon_rejected(self, parser, scenarios):
        assert self._select(parser, scenarios, tag=TAG_PI0_LIKE) == []

    def test_perfect_detector_signal_masses(self, parser, scenarios, gen_cfg):
        cands, _ = run_channel("kstar_gamma", scenarios["perfect"], gen_cfg,
                               parser, 511, 80, seed=58)
        assert len(cands) > 20
        for c in cands:
            assert c.m_kpigamma == pytest.approx(K.B0_MASS, abs=1e-3)
