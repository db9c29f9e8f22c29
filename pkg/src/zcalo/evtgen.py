"""Toy generation of Z -> qqbar events at sqrt(s) = 91.19 GeV.

Each hemisphere gets one leading heavy hadron (energy fraction from a
truncated-normal fragmentation model) plus Poisson-distributed fragmentation
pions from iterated longitudinal splitting; unstable particles decay
recursively through a configurable decay table; the full event is balanced
exactly by rescaling the fragmentation system.  Forced signal chains replace
the table for the leading hadron of one hemisphere.

Event records serialise to a plain-text format, one block per event:

    E <event_id> <seed> <flavour>
    P <index> <pdg> <status> <mother> <e> <px> <py> <pz> <vx> <vy> <vz>

with energies in GeV (9 significant digits), vertices in mm, blocks
separated by blank lines and '#' comments ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import constants as K
from .errors import ConfigError, EventParseError, EventValidationError
from .kinematics import FourVector, boost, n_body_phase_space

STATUS_INITIAL = "initial"
STATUS_DECAYED = "decayed"
STATUS_FINAL = "final"

# Self-conjugate codes: sign flip is a no-op under charge conjugation.
_SELF_CONJ = frozenset({22, 111, 113, 221, 223, 130, 310, 333})

RECO_STREAM = 0x5EC0  # stream tag for detector randomness, see event_rng()


def conjugate_pdg(pdg: int) -> int:
    return pdg if abs(pdg) in _SELF_CONJ else -pdg


@dataclass
class ParticleRecord:
    pdg_id: int
    status: str
    mother_index: int
    p: FourVector
    production_vertex: np.ndarray = field(
        default_factory=lambda: np.zeros(3))


@dataclass
class Event:
    event_id: int
    seed: int
    records: list[ParticleRecord]
    primary_flavour: str  # b / c / uds
    signal_root: int | None = None  # index of the forced hadron, not serialised

    def final_state(self) -> list[ParticleRecord]:
        return [r for r in self.records if r.status == STATUS_FINAL]

    def total_final_momentum(self) -> FourVector:
        tot = FourVector(0.0, 0.0, 0.0, 0.0)
        for r in self.records:
            if r.status == STATUS_FINAL:
                tot = tot + r.p
        return tot

    def signal_descendant_indices(self) -> set[int]:
        """Indices of the signal subtree (empty if no forced chain)."""
        if self.signal_root is None:
            return set()
        out = {self.signal_root}
        for i, rec in enumerate(self.records):
            if rec.mother_index in out:
                out.add(i)
        return out


@dataclass(frozen=True)
class DecayChannel:
    parent_pdg: int
    daughter_pdgs: tuple[int, ...]
    branching_fraction: float
    model: str = "phase_space"


@dataclass
class GeneratorConfig:
    sqrt_s: float = K.SQRT_S
    rb: float = K.R_B
    rc: float = K.R_C
    include_uds: bool = False
    frag_mean_pions: float = 6.0
    frag_x_mean: float = 0.70
    frag_x_width: float = 0.10
    frag_x_lo: float = 0.10
    frag_x_hi: float = 0.98
    frag_pt_sigma: float = 0.30
    b_species: dict[int, float] = field(default_factory=lambda: {
        K.PDG_B0: 0.40, K.PDG_BP: 0.40, K.PDG_BS: 0.10, K.PDG_LAMBDAB: 0.10})
    c_species: dict[int, float] = field(default_factory=lambda: {
        K.PDG_D0: 0.55, K.PDG_DP: 0.25, K.PDG_DS: 0.10, K.PDG_LAMBDAC: 0.10})
    decay_table: dict[int, list[DecayChannel]] = field(default_factory=dict)
    signal_chains: dict[str, dict[int, list[DecayChannel]]] = field(
        default_factory=dict)

    def validate(self) -> None:
        if not 0.999999 >= self.rb + self.rc > 0:
            raise ConfigError("rb + rc must lie in (0, 1]")
        for name, mix in (("b_species", self.b_species),
                          ("c_species", self.c_species)):
            s = sum(mix.values())
            if abs(s - 1.0) > 1e-9:
                raise ConfigError(f"{name} fractions sum to {s:g}, expected 1")
        for pdg, channels in self.decay_table.items():
            total = sum(c.branching_fraction for c in channels)
            if total > 1.0 + 1e-9:
                raise ConfigError(
                    f"decay table for {pdg}: branching fractions sum to {total:g} > 1")
            for c in channels:
                for d in c.daughter_pdgs:
                    K.mass_of(d)  # raises KeyError for unknown species

    def species_mix(self, flavour: str) -> dict[int, float]:
        return self.b_species if flavour == "b" else self.c_species


class _RetryGeneration(Exception):
    """Internal: energy bookkeeping failed, regenerate the event."""


def event_rng(master_seed: int, event_id: int,
              stream: int | None = None) -> np.random.Generator:
    """Per-event random stream derived from (master_seed, event_id).

    An optional stream tag decouples detector randomness from generation so
    analyses are deterministic regardless of worker scheduling.
    """
    key = [master_seed, event_id] if stream is None else [master_seed, event_id, stream]
    return np.random.default_rng(np.random.SeedSequence(key))


# ---------------------------------------------------------------------------
# Decay machinery

def _lookup_channels(table: dict[int, list[DecayChannel]],
                     pdg: int) -> list[DecayChannel] | None:
    if pdg in table:
        return table[pdg]
    if -pdg in table:
        return [DecayChannel(pdg, tuple(conjugate_pdg(d) for d in c.daughter_pdgs),
                             c.branching_fraction, c.model)
                for c in table[-pdg]]
    return None


def _sample_bw_mass(pdg: int, rng: np.random.Generator) -> float:
    """Nominal mass, or a Breit-Wigner draw truncated at +-3 Gamma."""
    m0 = K.mass_of(pdg)
    gamma = K.width_of(pdg)
    if gamma == 0.0:
        return m0
    theta = rng.uniform(-math.atan(6.0), math.atan(6.0))
    return m0 + 0.5 * gamma * math.tan(theta)


def _pion_species(rng: np.random.Generator) -> int:
    """Charged:neutral = 2:1, random sign for charged."""
    u = rng.uniform()
    if u < 1.0 / 3.0:
        return K.PDG_PI0
    return K.PDG_PIP if rng.uniform() < 0.5 else -K.PDG_PIP


_FILLER_CORE = {
    K.PDG_B0: (-K.PDG_DP,),
    K.PDG_BP: (-K.PDG_D0,),
    K.PDG_BS: (-K.PDG_DS,),
    K.PDG_LAMBDAB: (K.PDG_LAMBDAC, -K.PDG_PIP),
    K.PDG_D0: (-K.PDG_KP, K.PDG_PIP),
    K.PDG_DP: (-K.PDG_KP, K.PDG_PIP, K.PDG_PIP),
    K.PDG_DS: (K.PDG_KP, -K.PDG_KP, K.PDG_PIP),
    K.PDG_LAMBDAC: (K.PDG_PROTON, -K.PDG_KP, K.PDG_PIP),
}


def _filler_daughters(pdg: int, parent_mass: float,
                      rng: np.random.Generator) -> tuple[int, ...]:
    """Generic hadronic 'other' mode: flavour core plus a few pions."""
    a = abs(pdg)
    core = _FILLER_CORE.get(a)
    if core is None:
        raise ConfigError(f"no decay channels or filler for PDG {pdg}")
    if pdg < 0:
        core = tuple(conjugate_pdg(d) for d in core)
    max_extra = 4 if a in (K.PDG_B0, K.PDG_BP, K.PDG_BS, K.PDG_LAMBDAB) else 2
    n_extra = int(rng.integers(1, max_extra + 1))
    for _ in range(20):
        extra = tuple(_pion_species(rng) for _ in range(n_extra))
        daughters = core + extra
        if sum(K.mass_of(d) for d in daughters) < parent_mass:
            return daughters
        n_extra = max(1, n_extra - 1)
    return core  # core alone is always open for the tabulated parents


def _choose_channel(channels: list[DecayChannel], pdg: int, parent_mass: float,
                    rng: np.random.Generator) -> tuple[int, ...]:
    """Draw a channel by branching fraction; remainder is the filler."""
    for _ in range(100):
        u = rng.uniform()
        acc = 0.0
        picked = None
        for c in channels:
            acc += c.branching_fraction
            if u < acc:
                picked = c.daughter_pdgs
                break
        if picked is None:
            picked = _filler_daughters(pdg, parent_mass, rng)
        if sum(K.mass_of(d) for d in picked) < parent_mass:
            return picked
    raise ConfigError(f"no kinematically open decay found for PDG {pdg} "
                      f"at mass {parent_mass:g}")


def _decay_tree(records: list[ParticleRecord], index: int,
                table: dict[int, list[DecayChannel]],
                forced: dict[int, list[DecayChannel]] | None,
                rng: np.random.Generator) -> None:
    """Recursively decay records[index]; appends daughters in place."""
    rec = records[index]
    pdg = rec.pdg_id
    if K.is_stable(pdg):
        return
    forced_here = None
    if forced is not None and pdg in forced and forced[pdg]:
        forced_here = forced[pdg].pop(0)
    if forced_here is not None:
        daughters = forced_here.daughter_pdgs
    else:
        channels = _lookup_channels(table, pdg)
        if channels is None:
            if abs(pdg) in _FILLER_CORE:
                daughters = _filler_daughters(pdg, rec.p.mass, rng)
            else:
                return  # no decay model: leave as final state
        else:
            daughters = _choose_channel(channels, pdg, rec.p.mass, rng)

    parent_mass = rec.p.mass
    masses = None
    for _ in range(100):
        trial = [_sample_bw_mass(d, rng) for d in daughters]
        if sum(trial) < parent_mass:
            masses = trial
            break
    if masses is None:
        masses = [K.mass_of(d) for d in daughters]
        if sum(masses) >= parent_mass:
            raise _RetryGeneration

    momenta = n_body_phase_space(rec.p, masses, rng)
    rec.status = STATUS_DECAYED
    child_forced = forced  # forced map applies to the whole signal subtree
    for d_pdg, d_p in zip(daughters, momenta):
        records.append(ParticleRecord(
            pdg_id=d_pdg, status=STATUS_FINAL, mother_index=index, p=d_p))
        _decay_tree(records, len(records) - 1, table, child_forced, rng)


# ---------------------------------------------------------------------------
# Fragmentation and event assembly

def _orthonormal_basis(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(axis, ref)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    return u, v


def _truncated_normal(mean: float, width: float, lo: float, hi: float,
                      rng: np.random.Generator) -> float:
    for _ in range(1000):
        x = rng.normal(mean, width)
        if lo <= x <= hi:
            return x
    raise _RetryGeneration


def _fragmentation_pions(axis: np.ndarray, e_avail: float,
                         config: GeneratorConfig,
                         rng: np.random.Generator) -> list[tuple[int, FourVector]]:
    """Iterated uniform longitudinal splitting with transverse smearing."""
    n = int(rng.poisson(config.frag_mean_pions))
    if n == 0:
        return []
    species = [_pion_species(rng) for _ in range(n)]
    u, v = _orthonormal_basis(axis)
    out = []
    remaining = e_avail
    for i, pdg in enumerate(species):
        mass = K.mass_of(pdg)
        if i == n - 1:
            e = remaining
        else:
            e = remaining * rng.uniform()
            remaining -= e
        e = max(e, mass * 1.05)
        kx = rng.normal(0.0, config.frag_pt_sigma)
        ky = rng.normal(0.0, config.frag_pt_sigma)
        pt2 = kx * kx + ky * ky
        p2 = e * e - mass * mass
        if pt2 >= p2:
            shrink = math.sqrt(0.81 * p2 / pt2)
            kx *= shrink
            ky *= shrink
            pt2 = kx * kx + ky * ky
        pl = math.sqrt(p2 - pt2)
        p3 = pl * axis + kx * u + ky * v
        out.append((pdg, FourVector(e, p3[0], p3[1], p3[2])))
    return out


def _rescale_system(particles: list[FourVector],
                    target: FourVector) -> list[FourVector]:
    """Exactly map a particle system onto a target four-momentum.

    Boost to the system rest frame, Newton-rescale the three-momenta so the
    invariant mass matches the target mass, then boost onto the target
    velocity.  Raises _RetryGeneration when the target is kinematically
    unreachable.
    """
    m_target2 = target.mass2
    masses = [math.sqrt(max(p.mass2, 0.0)) for p in particles]
    if len(particles) < 2:
        raise _RetryGeneration
    if m_target2 <= 0.0 or math.sqrt(m_target2) <= sum(masses) * 1.0000001:
        raise _RetryGeneration
    m_target = math.sqrt(m_target2)

    total = FourVector(0.0, 0.0, 0.0, 0.0)
    for p in particles:
        total = total + p
    rest = [boost(p, -total.beta_vector()) for p in particles]

    mom2 = [r.px ** 2 + r.py ** 2 + r.pz ** 2 for r in rest]
    # a system without genuine momentum spread cannot be mapped onto an
    # off-shell target; regenerate instead of chasing a degenerate solution
    if sum(mom2) <= 1e-12:
        raise _RetryGeneration
    xi = 1.0
    for _ in range(200):
        f = sum(math.sqrt(m * m + xi * xi * q2)
                for m, q2 in zip(masses, mom2)) - m_target
        if abs(f) < 1e-13 * m_target:
            break
        df = sum(xi * q2 / math.sqrt(m * m + xi * xi * q2)
                 for m, q2 in zip(masses, mom2))
        if df <= 0.0:
            raise _RetryGeneration
        xi -= f / df
        if xi <= 0.0:
            raise _RetryGeneration

    scaled = [FourVector(math.sqrt(m * m + xi * xi * q2),
                         xi * r.px, xi * r.py, xi * r.pz)
              for m, q2, r in zip(masses, mom2, rest)]
    beta_t = target.beta_vector()
    out = [boost(p, beta_t) for p in scaled]
    achieved = FourVector(0.0, 0.0, 0.0, 0.0)
    for p in out:
        achieved = achieved + p
    if max(abs(achieved.e - target.e), abs(achieved.px - target.px),
           abs(achieved.py - target.py), abs(achieved.pz - target.pz)) > 1e-7:
        raise _RetryGeneration
    return out


def _draw_species(mix: dict[int, float], rng: np.random.Generator) -> int:
    u = rng.uniform()
    acc = 0.0
    for pdg, frac in mix.items():
        acc += frac
        if u < acc:
            return pdg
    return list(mix)[-1]


def _generate_once(config: GeneratorConfig, rng: np.random.Generator,
                   event_id: int, seed: int,
                   forced: list[DecayChannel] | None) -> Event:
    e_hemi = config.sqrt_s / 2.0

    if forced is not None:
        flavour = "b" if abs(forced[0].parent_pdg) in (
            K.PDG_B0, K.PDG_BP, K.PDG_BS, K.PDG_LAMBDAB) else "c"
    else:
        u = rng.uniform()
        if config.include_uds:
            flavour = "b" if u < config.rb else (
                "c" if u < config.rb + config.rc else "uds")
        else:
            flavour = "b" if u < config.rb / (config.rb + config.rc) else "c"

    axis = None
    cos_t = rng.uniform(-1.0, 1.0)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    sin_t = math.sqrt(1.0 - cos_t * cos_t)
    axis = np.array([sin_t * math.cos(phi), sin_t * math.sin(phi), cos_t])

    quark_pdg = {"b": K.PDG_B, "c": K.PDG_C, "uds": 2}[flavour]
    records: list[ParticleRecord] = [
        ParticleRecord(quark_pdg, STATUS_INITIAL, -1,
                       FourVector(e_hemi, *(e_hemi * axis))),
        ParticleRecord(-quark_pdg, STATUS_INITIAL, -1,
                       FourVector(e_hemi, *(-e_hemi * axis))),
    ]

    leading: list[tuple[int, ParticleRecord | None]] = []
    frag_all: list[tuple[int, int]] = []  # (mother quark idx, record idx)
    frag_vectors: list[FourVector] = []
    frag_pdgs: list[tuple[int, int]] = []

    for side, sign in ((0, 1.0), (1, -1.0)):
        hemi_axis = sign * axis
        if flavour == "uds":
            lead_rec = None
            e_frag = e_hemi
        else:
            if side == 0 and forced is not None:
                species = forced[0].parent_pdg
            else:
                species = _draw_species(config.species_mix(flavour), rng)
                if side == 1:
                    species = conjugate_pdg(species)
            mass = K.mass_of(species)
            x = _truncated_normal(config.frag_x_mean, config.frag_x_width,
                                  config.frag_x_lo, config.frag_x_hi, rng)
            e_lead = x * e_hemi
            if e_lead <= mass:
                raise _RetryGeneration
            p_lead = math.sqrt(e_lead * e_lead - mass * mass)
            lead_rec = ParticleRecord(
                species, STATUS_FINAL, side,
                FourVector(e_lead, *(p_lead * hemi_axis)))
            e_frag = e_hemi - e_lead
        leading.append((side, lead_rec))
        for pdg, p4 in _fragmentation_pions(hemi_axis, e_frag, config, rng):
            frag_pdgs.append((side, pdg))
            frag_vectors.append(p4)

    if not frag_vectors:
        raise _RetryGeneration

    target = FourVector(config.sqrt_s, 0.0, 0.0, 0.0)
    for _, rec in leading:
        if rec is not None:
            target = target - rec.p
    frag_vectors = _rescale_system(frag_vectors, target)

    signal_root = None
    for side, rec in leading:
        if rec is not None:
            records.append(rec)
            if forced is not None and side == 0:
                signal_root = len(records) - 1
    for (side, pdg), p4 in zip(frag_pdgs, frag_vectors):
        records.append(ParticleRecord(pdg, STATUS_FINAL, side, p4))

    forced_map: dict[int, list[DecayChannel]] | None = None
    if forced is not None:
        forced_map = {}
        for ch in forced:
            forced_map.setdefault(ch.parent_pdg, []).append(ch)

    n_primary = len(records)
    for i in range(2, n_primary):
        use_forced = forced_map if i == signal_root else None
        # Forced channels deeper in the chain apply inside the signal subtree
        # only; the recursion carries the map down from the root.
        _decay_tree(records, i, config.decay_table, use_forced, rng)

    event = Event(event_id=event_id, seed=seed, records=records,
                  primary_flavour=flavour, signal_root=signal_root)
    place_decay_vertices(event, rng)
    return event


def generate_event(config: GeneratorConfig, rng: np.random.Generator,
                   event_id: int = 0, seed: int = 0,
                   forced: list[DecayChannel] | None = None) -> Event:
    """Generate one balanced Z event; regenerates internally on bookkeeping
    failures (never surfaced)."""
    config.validate()
    if forced is not None:
        for ch in forced:
            if K.mass_of(ch.parent_pdg) <= sum(K.mass_of(d)
                                               for d in ch.daughter_pdgs):
                raise ConfigError(
                    f"forced channel {ch.parent_pdg} -> {ch.daughter_pdgs} "
                    "is kinematically closed")
    for _ in range(500):
        try:
            return _generate_once(config, rng, event_id, seed,
                                  list(forced) if forced else None)
        except _RetryGeneration:
            continue
    raise ConfigError("event generation failed repeatedly; check configuration")


def force_signal_chain(event_template: GeneratorConfig,
                       chain: list[DecayChannel],
                       rng: np.random.Generator,
                       event_id: int = 0, seed: int = 0) -> Event:
    """Event whose leading hadron in one hemisphere decays through ``chain``."""
    if not chain:
        raise ConfigError("empty signal chain")
    return generate_event(event_template, rng, event_id=event_id, seed=seed,
                          forced=chain)


def place_decay_vertices(event: Event, rng: np.random.Generator) -> Event:
    """Assign production vertices from exponential proper-time flight.

    Weakly decaying hadrons fly d = gamma*beta*ctau*t with t ~ Exp(1) along
    their momentum; everything else decays where it was produced.  Daughters
    inherit the mother's decay vertex.  Vertices are overwritten in place.
    """
    decay_vertex = [np.zeros(3) for _ in event.records]
    for i, rec in enumerate(event.records):
        if rec.mother_index < 0:
            prod = np.zeros(3)
        else:
            prod = decay_vertex[rec.mother_index]
        rec.production_vertex = prod.copy()
        ctau = K.ctau_of(rec.pdg_id)
        if rec.status == STATUS_DECAYED and ctau > 0.0:
            mass = rec.p.mass
            if mass > 0.0 and rec.p.p_mag > 0.0:
                gamma_beta = rec.p.p_mag / mass
                flight = gamma_beta * ctau * rng.exponential(1.0)
                decay_vertex[i] = prod + flight * (rec.p.p3 / rec.p.p_mag)
            else:
                decay_vertex[i] = prod.copy()
        else:
            decay_vertex[i] = prod.copy()
    return event


# ---------------------------------------------------------------------------
# Event file format

def _fmt(x: float) -> str:
    return f"{x:.9g}"


def write_events(events, sink) -> None:
    """Write events to a path or text file handle."""
    if hasattr(sink, "write"):
        _write_events_handle(events, sink)
    else:
        with open(sink, "w", encoding="utf-8") as fh:
            _write_events_handle(events, fh)


def _write_events_handle(events, fh) -> None:
    first = True
    for ev in events:
        if not first:
            fh.write("\n")
        first = False
        fh.write(f"E {ev.event_id} {ev.seed} {ev.primary_flavour}\n")
        for i, r in enumerate(ev.records):
            v = r.production_vertex
            fh.write(
                f"P {i} {r.pdg_id} {r.status} {r.mother_index} "
                f"{_fmt(r.p.e)} {_fmt(r.p.px)} {_fmt(r.p.py)} {_fmt(r.p.pz)} "
                f"{_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}\n")


def read_events(source) -> list[Event]:
    """Parse an event file; raises EventParseError / EventValidationError."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()

    events: list[Event] = []
    current: Event | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            current = None
            continue
        if line.startswith("#"):
            continue
        fields = line.split()
        if fields[0] == "E":
            if len(fields) != 4:
                raise EventParseError("event header needs 4 fields", lineno)
            try:
                event_id = int(fields[1])
                seed = int(fields[2])
            except ValueError as exc:
                raise EventParseError(str(exc), lineno) from None
            flavour = fields[3]
            if flavour not in ("b", "c", "uds"):
                raise EventParseError(f"unknown flavour {flavour!r}", lineno)
            current = Event(event_id=event_id, seed=seed, records=[],
                            primary_flavour=flavour)
            events.append(current)
        elif fields[0] == "P":
            if current is None:
                raise EventParseError("particle line before event header", lineno)
            if len(fields) != 12:
                raise EventParseError("particle line needs 12 fields", lineno)
            try:
                index = int(fields[1])
                pdg = int(fields[2])
                status = fields[3]
                mother = int(fields[4])
                nums = [float(x) for x in fields[5:12]]
            except ValueError as exc:
                raise EventParseError(str(exc), lineno) from None
            if status not in (STATUS_INITIAL, STATUS_DECAYED, STATUS_FINAL):
                raise EventParseError(f"unknown status {status!r}", lineno)
            if index != len(current.records):
                raise EventParseError(
                    f"particle index {index} out of order", lineno)
            if mother >= index:
                raise EventValidationError(
                    f"line {lineno}: mother index {mother} not earlier than "
                    f"particle {index}")
            if mother < -1:
                raise EventValidationError(
                    f"line {lineno}: invalid mother index {mother}")
            current.records.append(ParticleRecord(
                pdg_id=pdg, status=status, mother_index=mother,
                p=FourVector(*nums[:4]),
                production_vertex=np.array(nums[4:7])))
        else:
            raise EventParseError(f"unknown record type {fields[0]!r}", lineno)
    return events
