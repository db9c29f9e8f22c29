"""Configuration loading: scenarios, cuts, generator settings, decay tables
and signal chains from key=value section files (configparser syntax).

The packaged default file is always read first; user files override it
section by section, key by key.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .evtgen import DecayChannel, GeneratorConfig


def default_config_text() -> str:
    return (resources.files("zcalo") / "data" / "default.cfg").read_text()


def load_config(paths: list[str | Path] | None = None) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(default_config_text())
    for p in paths or []:
        p = Path(p)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        with open(p, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    return parser


def _parse_species_mix(raw: str, context: str) -> dict[int, float]:
    mix = {}
    for item in raw.split():
        try:
            pdg, frac = item.split(":")
            mix[int(pdg)] = float(frac)
        except ValueError:
            raise ConfigError(f"{context}: bad species entry {item!r}") from None
    return mix


def _parse_decay_sections(parser) -> dict[int, list[DecayChannel]]:
    table: dict[int, list[DecayChannel]] = {}
    for section in parser.sections():
        if not section.startswith("decay "):
            continue
        try:
            pdg = int(section.split(None, 1)[1])
        except ValueError:
            raise ConfigError(f"bad decay section name [{section}]") from None
        channels = []
        for key in parser[section]:
            raw = parser[section][key]
            try:
                br_part, daughters_part = raw.split(":", 1)
                br = float(br_part)
                daughters = tuple(int(x) for x in daughters_part.split())
            except ValueError:
                raise ConfigError(
                    f"[{section}] {key}: expected 'br : pdg pdg ...', "
                    f"got {raw!r}") from None
            if not daughters:
                raise ConfigError(f"[{section}] {key}: no daughters")
            channels.append(DecayChannel(parent_pdg=pdg,
                                         daughter_pdgs=daughters,
                                         branching_fraction=br))
        table[pdg] = channels
    return table


def generator_from_config(parser) -> GeneratorConfig:
    if not parser.has_section("generator"):
        raise ConfigError("missing config section [generator]")
    g = parser["generator"]
    try:
        cfg = GeneratorConfig(
            sqrt_s=g.getfloat("sqrt_s"),
            rb=g.getfloat("rb"),
            rc=g.getfloat("rc"),
            include_uds=g.getboolean("include_uds"),
            frag_mean_pions=g.getfloat("frag_mean_pions"),
            frag_x_mean=g.getfloat("frag_x_mean"),
            frag_x_width=g.getfloat("frag_x_width"),
            frag_x_lo=g.getfloat("frag_x_lo"),
            frag_x_hi=g.getfloat("frag_x_hi"),
            frag_pt_sigma=g.getfloat("frag_pt_sigma"),
            b_species=_parse_species_mix(g.get("b_species"), "[generator] b_species"),
            c_species=_parse_species_mix(g.get("c_species"), "[generator] c_species"),
            decay_table=_parse_decay_sections(parser),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[generator]: {exc}") from None
    cfg.validate()
    return cfg


@dataclass(frozen=True)
class ChannelSpec:
    """Forced signal chains of one analysis channel."""

    name: str
    parents: tuple[int, ...]
    chains: dict[int, list[DecayChannel]]
    br_products: dict[int, float]
    species_fractions: dict[int, float]


def _parse_chain(raw: str, context: str) -> tuple[list[DecayChannel], float]:
    steps = []
    br_product = 1.0
    for step in raw.split(";"):
        step = step.strip()
        if not step:
            continue
        try:
            head, br_part = step.rsplit("@", 1)
            parent_part, daughters_part = head.split("->")
            parent = int(parent_part)
            daughters = tuple(int(x) for x in daughters_part.split())
            br = float(br_part)
        except ValueError:
            raise ConfigError(
                f"{context}: expected 'parent -> d1 d2 @ br', got {step!r}"
            ) from None
        steps.append(DecayChannel(parent_pdg=parent, daughter_pdgs=daughters,
                                  branching_fraction=br))
        br_product *= br
    if not steps:
        raise ConfigError(f"{context}: empty chain")
    return steps, br_product


def channel_spec(parser, name: str) -> ChannelSpec:
    section_name = f"channel {name}"
    if not parser.has_section(section_name):
        raise ConfigError(f"missing config section [{section_name}]")
    section = parser[section_name]
    if "parents" not in section:
        raise ConfigError(f"[{section_name}] is missing required key 'parents'")
    parents = tuple(int(x) for x in section["parents"].split())
    chains = {}
    brs = {}
    fractions = {}
    for parent in parents:
        key = f"chain.{parent}"
        if key not in section:
            raise ConfigError(f"[{section_name}] is missing required key '{key}'")
        chain, br = _parse_chain(section[key], f"[{section_name}] {key}")
        if chain[0].parent_pdg != parent:
            raise ConfigError(
                f"[{section_name}] {key}: chain must start at {parent}")
        chains[parent] = chain
        brs[parent] = br
        fkey = f"species_fraction.{parent}"
        if fkey not in section:
            raise ConfigError(f"[{section_name}] is missing required key '{fkey}'")
        fractions[parent] = float(section[fkey])
    return ChannelSpec(name=name, parents=parents, chains=chains,
                       br_products=brs, species_fractions=fractions)
