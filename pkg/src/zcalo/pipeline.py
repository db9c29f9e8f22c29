"""Run orchestration: event production, channel analysis and comparison.

All randomness is derived from (master_seed, event_id[, stream]), so outputs
are byte-identical for identical configuration regardless of the worker
count; accumulation happens in event order in the main thread.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import constants as K
from .analysis import (BTagModel, ChannelResult, bs_b0_separation, load_cuts,
                       reconstruct_event, scale_yield, select_ds_pi,
                       select_kstar_gamma, select_pi0pi0)
from .config import channel_spec, generator_from_config, load_config
from .detector import load_scenarios, smear_photon
from .errors import ConfigError
from .evtgen import (RECO_STREAM, event_rng, force_signal_chain, read_events,
                     write_events)
from .kinematics import FourVector, boost, two_body_decay
from .kinfit import fit_pi0_batch
from .report import Histogram, core_width, emit_csv, emit_panels, fmt9

CHANNELS = ("ds_pi", "pi0pi0", "kstar_gamma", "single_pi0")


@dataclass
class RunConfig:
    master_seed: int
    n_events: int
    scenario_name: str
    channel: str
    out_dir: Path
    config_paths: list = field(default_factory=list)
    n_z: float = 1e9
    threads: int = 1
    input_path: Path | None = None

    def validate(self) -> None:
        if self.n_events < 1:
            raise ConfigError("n_events must be >= 1")
        if self.channel not in CHANNELS:
            raise ConfigError(
                f"unknown channel {self.channel!r}; expected one of {CHANNELS}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")


def _load_context(rc: RunConfig):
    parser = load_config(rc.config_paths)
    scenarios = load_scenarios(parser)
    if rc.scenario_name not in scenarios:
        raise ConfigError(f"missing config section [scenario {rc.scenario_name}]")
    return parser, scenarios[rc.scenario_name]


def _chunks(n: int, n_chunks: int) -> list[range]:
    size = max(1, math.ceil(n / n_chunks))
    return [range(i, min(i + size, n)) for i in range(0, n, size)]


def _run_ordered(rc: RunConfig, worker, n: int) -> list:
    """Map ``worker`` over 0..n-1 preserving order, optionally threaded."""
    if rc.threads == 1:
        return [worker(i) for i in range(n)]
    ranges = _chunks(n, rc.threads * 4)
    with ThreadPoolExecutor(max_workers=rc.threads) as pool:
        futures = [pool.submit(lambda r=r: [worker(i) for i in r])
                   for r in ranges]
        out = []
        for fut in futures:
            out.extend(fut.result())
    return out


# ---------------------------------------------------------------------------
# generate

def run_generate(rc: RunConfig) -> Path:
    """Produce an event file for the channel's forced signal samples."""
    rc.validate()
    if rc.channel == "single_pi0":
        raise ConfigError("channel single_pi0 is generated inline by analyze; "
                          "cmd_generate does not apply")
    parser, _ = _load_context(rc)
    gen_cfg = generator_from_config(parser)
    spec = channel_spec(parser, rc.channel)

    def make(i: int):
        parent = spec.parents[i // rc.n_events]
        rng = event_rng(rc.master_seed, i)
        return force_signal_chain(gen_cfg, spec.chains[parent], rng,
                                  event_id=i, seed=rc.master_seed)

    events = _run_ordered(rc, make, rc.n_events * len(spec.parents))
    rc.out_dir.mkdir(parents=True, exist_ok=True)
    path = rc.out_dir / f"events_{rc.channel}.txt"
    write_events(events, path)
    mult = np.mean([len(ev.final_state()) for ev in events])
    print(f"wrote {len(events)} events to {path} "
          f"(mean final-state multiplicity {mult:.2f})")
    return path


# ---------------------------------------------------------------------------
# analyze

def _hist_from_cuts(cuts: dict) -> Histogram:
    return Histogram(n_bins=cuts["hist_bins"], lo=cuts["hist_lo"],
                     hi=cuts["hist_hi"])


def _peak_or_none(values: list[float]):
    if len(values) < 50:
        return None
    return core_width(values)


def _analyze_mass_channel(rc: RunConfig, parser, scenario) -> dict:
    gen_cfg = generator_from_config(parser)
    cuts = load_cuts(parser, rc.channel)
    spec = channel_spec(parser, rc.channel)
    btag = BTagModel(eff_b=cuts["btag_eff_b"], mistag_c=cuts["btag_mistag_c"],
                     mistag_uds=cuts["btag_mistag_uds"]) \
        if rc.channel == "pi0pi0" else BTagModel()

    input_events = None
    if rc.input_path is not None:
        input_events = read_events(rc.input_path)
        parents = (0,)  # one undifferentiated sample
        n_per_parent = len(input_events)
    else:
        parents = spec.parents
        n_per_parent = rc.n_events

    def process(i: int):
        if input_events is not None:
            ev = input_events[i]
            event_key = ev.event_id
        else:
            parent = parents[i // n_per_parent]
            rng = event_rng(rc.master_seed, i)
            ev = force_signal_chain(gen_cfg, spec.chains[parent], rng,
                                    event_id=i, seed=rc.master_seed)
            event_key = i
        reco_rng = event_rng(rc.master_seed, event_key, RECO_STREAM)
        reco = reconstruct_event(ev, scenario, reco_rng)
        if reco is None:
            return [], 0, ev.signal_root is not None
        if rc.channel == "ds_pi":
            cands, n_bad = select_ds_pi(reco, scenario, cuts)
        elif rc.channel == "pi0pi0":
            cands, n_bad = select_pi0pi0(reco, scenario, btag, cuts, reco_rng)
        else:
            cands, n_bad = select_kstar_gamma(reco, scenario, cuts), 0
        return cands, n_bad, ev.signal_root is not None

    outputs = _run_ordered(rc, process, n_per_parent * len(parents))

    per_parent: dict[int, ChannelResult] = {}
    masses: dict[int, list[float]] = {}
    ds_masses: list[float] = []
    for p in parents:
        per_parent[p] = ChannelResult(spectrum=_hist_from_cuts(cuts))
        masses[p] = []

    for i, (cands, n_bad, is_signal) in enumerate(outputs):
        p = parents[i // n_per_parent]
        res = per_parent[p]
        res.n_generated += 1
        res.n_unconverged += n_bad
        for cand in cands:
            if rc.channel == "ds_pi":
                m = cand.m_b
                ds_masses.append(cand.m_ds)
            elif rc.channel == "pi0pi0":
                m = cand.m_pi0pi0
            else:
                m = cand.m_kpigamma
            res.spectrum.fill(m)
            masses[p].append(m)
            if is_signal:
                res.n_signal_pass += 1
            else:
                res.n_background_pass += 1

    results: dict = {"channel": rc.channel, "scenario": rc.scenario_name,
                     "seed": rc.master_seed, "n_z": rc.n_z,
                     "per_parent": {}}
    files: dict[str, str] = {}
    panels = []
    total_unconv = 0
    total_cand = 0

    for p in parents:
        res = per_parent[p]
        fit = _peak_or_none(masses[p])
        label = str(p) if p else "input"
        if rc.input_path is None:
            res.scaled_yield = scale_yield(
                res.n_signal_pass, res.n_generated, spec.br_products[p],
                gen_cfg.rb, spec.species_fractions[p], rc.n_z)
        entry = {
            "n_generated": res.n_generated,
            "n_candidates": len(masses[p]),
            "n_signal_pass": res.n_signal_pass,
            "n_background_pass": res.n_background_pass,
            "n_unconverged": res.n_unconverged,
            "efficiency": res.efficiency,
            "scaled_yield": res.scaled_yield,
            "peak_mean": fit.mean if fit else None,
            "peak_sigma": fit.sigma if fit else None,
        }
        results["per_parent"][label] = entry
        files[f"spectrum_{label}.csv"] = emit_csv(res.spectrum)
        panels.append(([res.spectrum], [f"{rc.channel} {label}"],
                       f"{rc.channel} parent {label} ({rc.scenario_name})",
                       "candidate mass [GeV]"))
        total_unconv += res.n_unconverged
        total_cand += len(masses[p])

    if rc.channel == "ds_pi" and len(parents) == 2:
        f_bs = _peak_or_none(masses[parents[0]])
        f_b0 = _peak_or_none(masses[parents[1]])
        if f_bs and f_b0:
            results["separation"] = bs_b0_separation(f_bs.sigma, f_b0.sigma)
        if len(ds_masses) >= 50:
            ds_hist = Histogram(n_bins=80, lo=1.80, hi=2.15)
            ds_hist.fill_many(ds_masses)
            ds_fit = core_width(ds_masses)
            results["ds_peak_mean"] = ds_fit.mean
            results["ds_peak_sigma"] = ds_fit.sigma
            files["ds_mass.csv"] = emit_csv(ds_hist)
            panels.append(([ds_hist], ["m(phi rho)"],
                           f"Ds candidate mass ({rc.scenario_name})",
                           "m(K K pi pi0) [GeV]"))

    warn = ""
    if total_cand and total_unconv > 0.5 * (total_cand + total_unconv):
        warn = "WARNING: unconverged-fit fraction above 50%"
        results["warning"] = warn

    files["plot.svg"] = emit_panels(panels)
    files["report.txt"] = _format_report(rc, cuts, results, warn)
    files["summary.json"] = json.dumps(results, sort_keys=True, indent=2) + "\n"
    return {"results": results, "files": files}


def _analyze_single_pi0(rc: RunConfig, parser, scenario) -> dict:
    cuts = load_cuts(parser, rc.channel)
    results = {"channel": rc.channel, "scenario": rc.scenario_name,
               "seed": rc.master_seed, "bins": {}}
    files: dict[str, str] = {}
    panels = []

    for bin_idx, energy in enumerate(cuts["energies"]):
        rng = event_rng(rc.master_seed, bin_idx, stream=1)
        alphas, variances = [], []
        raw_resid = []
        for _ in range(rc.n_events):
            direction = rng.uniform(-1.0, 1.0)
            phi = rng.uniform(0.0, 2.0 * math.pi)
            theta = math.acos(direction)
            st = math.sin(theta)
            pi0 = FourVector(energy,
                             *(math.sqrt(energy ** 2 - K.PI0_MASS ** 2)
                               * np.array([st * math.cos(phi),
                                           st * math.sin(phi),
                                           math.cos(theta)])))
            g1, g2 = two_body_decay(K.PI0_MASS, 0.0, 0.0, rng)
            beta = pi0.beta_vector()
            g1 = boost(g1, beta)
            g2 = boost(g2, beta)
            if g1.e < scenario.photon_threshold or g2.e < scenario.photon_threshold:
                continue
            r1 = smear_photon(g1, scenario, rng)
            r2 = smear_photon(g2, scenario, rng)
            alphas.append([r1.e, r1.theta, r1.phi, r2.e, r2.theta, r2.phi])
            variances.append(list(r1.cov_diag) + list(r2.cov_diag))
            raw_resid.append((r1.e + r2.e - energy) / energy)

        alphas = np.array(alphas)
        variances = np.array(variances)
        af, chi2, n_iter, conv, pulls = fit_pi0_batch(alphas, variances)
        fit_resid = (af[conv, 0] + af[conv, 3] - energy) / energy
        raw_resid = np.asarray(raw_resid)

        raw_fit = core_width(raw_resid)
        fitted_fit = core_width(fit_resid)
        key = fmt9(energy)
        results["bins"][key] = {
            "energy": energy,
            "n_fitted": int(conv.sum()),
            "n_unconverged": int((~conv).sum()),
            "raw_resolution": raw_fit.sigma,
            "fitted_resolution": fitted_fit.sigma,
            "raw_mean": raw_fit.mean,
            "fitted_mean": fitted_fit.mean,
        }
        h_raw = _hist_from_cuts(cuts)
        h_fit = _hist_from_cuts(cuts)
        h_raw.fill_many(raw_resid)
        h_fit.fill_many(fit_resid)
        files[f"residuals_raw_E{key}.csv"] = emit_csv(h_raw)
        files[f"residuals_fit_E{key}.csv"] = emit_csv(h_fit)
        panels.append(([h_raw, h_fit], ["raw", "1C fit"],
                       f"pi0 at {key} GeV ({rc.scenario_name})",
                       "(E_rec - E_true)/E_true"))

    files["plot.svg"] = emit_panels(panels)
    files["report.txt"] = _format_report(rc, cuts, results, "")
    files["summary.json"] = json.dumps(results, sort_keys=True, indent=2) + "\n"
    return {"results": results, "files": files}


def _format_report(rc: RunConfig, cuts: dict, results: dict, warn: str) -> str:
    lines = [
        "zcalo run report",
        f"channel: {rc.channel}",
        f"scenario: {rc.scenario_name}",
        f"seed: {rc.master_seed}",
        f"events: {rc.n_events}",
        f"threads: {rc.threads}",
        "",
        "effective cuts:",
    ]
    for key in sorted(cuts):
        value = cuts[key]
        if isinstance(value, list):
            lines.append(f"  {key} = {' '.join(fmt9(v) for v in value)}")
        elif isinstance(value, int):
            lines.append(f"  {key} = {value}")
        else:
            lines.append(f"  {key} = {fmt9(value)}")
    lines.append("")
    lines.append("results:")

    if rc.channel == "single_pi0":
        lines.append("  energy  n_fitted  raw_resolution  fitted_resolution")
        for key, entry in sorted(results["bins"].items(),
                                 key=lambda kv: kv[1]["energy"]):
            lines.append(
                f"  {key:>6}  {entry['n_fitted']:>8}  "
                f"{fmt9(entry['raw_resolution']):>14}  "
                f"{fmt9(entry['fitted_resolution']):>17}")
    else:
        for label, entry in sorted(results["per_parent"].items()):
            lines.append(f"  parent {label}:")
            for k in ("n_generated", "n_candidates", "n_signal_pass",
                      "n_background_pass", "n_unconverged"):
                lines.append(f"    {k} = {entry[k]}")
            lines.append(f"    efficiency = {fmt9(entry['efficiency'])}")
            lines.append(f"    scaled_yield = {fmt9(entry['scaled_yield'])}")
            if entry["peak_mean"] is not None:
                lines.append(f"    peak_mean = {fmt9(entry['peak_mean'])}")
                lines.append(f"    peak_sigma = {fmt9(entry['peak_sigma'])}")
        if "separation" in results:
            lines.append(f"  separation = {fmt9(results['separation'])}")
        if "ds_peak_sigma" in results:
            lines.append(f"  ds_peak_mean = {fmt9(results['ds_peak_mean'])}")
            lines.append(f"  ds_peak_sigma = {fmt9(results['ds_peak_sigma'])}")
    if warn:
        lines.append("")
        lines.append(warn)
    return "\n".join(lines) + "\n"


def run_analyze(rc: RunConfig) -> dict:
    """Full pipeline for one channel and scenario; writes CSV, report, plot
    and summary into <out>/<channel>_<scenario>/."""
    rc.validate()
    parser, scenario = _load_context(rc)
    if rc.channel == "single_pi0":
        out = _analyze_single_pi0(rc, parser, scenario)
    else:
        out = _analyze_mass_channel(rc, parser, scenario)
    run_dir = rc.out_dir / f"{rc.channel}_{rc.scenario_name}"
    run_dir.mkdir(parents=True, exist_ok=True)
    for name, content in sorted(out["files"].items()):
        (run_dir / name).write_text(content, encoding="utf-8")
    out["run_dir"] = run_dir
    return out


# ---------------------------------------------------------------------------
# compare

def run_compare(run_dirs: list[Path], out_dir: Path) -> dict:
    """Merge >= 2 analyze outputs of one channel into a side-by-side report."""
    if len(run_dirs) < 2:
        raise ConfigError("compare needs at least two run directories")
    summaries = []
    for d in run_dirs:
        path = Path(d) / "summary.json"
        if not path.exists():
            raise FileNotFoundError(f"missing {path}")
        summaries.append(json.loads(path.read_text()))
    channels = {s["channel"] for s in summaries}
    if len(channels) != 1:
        raise ValueError(f"mismatched channels in comparison: {sorted(channels)}")
    channel = channels.pop()

    lines = [f"zcalo comparison ({channel})", ""]
    header = ["metric"] + [f"{s['scenario']}" for s in summaries]
    lines.append("  ".join(f"{h:>18}" for h in header))

    def row(name, values):
        cells = [f"{name:>18}"]
        for v in values:
            cells.append(f"{fmt9(v) if isinstance(v, float) else str(v):>18}")
        lines.append("  ".join(cells))

    if channel == "single_pi0":
        keys = sorted(summaries[0]["bins"],
                      key=lambda k: summaries[0]["bins"][k]["energy"])
        for key in keys:
            row(f"raw res E={key}",
                [s["bins"][key]["raw_resolution"] for s in summaries])
            row(f"fit res E={key}",
                [s["bins"][key]["fitted_resolution"] for s in summaries])
    else:
        labels = sorted(summaries[0]["per_parent"])
        for label in labels:
            for metric in ("n_candidates", "efficiency", "peak_sigma",
                           "scaled_yield"):
                row(f"{metric} [{label}]",
                    [s["per_parent"].get(label, {}).get(metric, "-")
                     for s in summaries])
        if all("separation" in s for s in summaries):
            row("separation", [s["separation"] for s in summaries])

    # Paneled plot: one panel per spectrum file common to every run.
    from .report import parse_csv
    common = None
    for d in run_dirs:
        names = {p.name for p in Path(d).glob("*.csv")}
        common = names if common is None else (common & names)
    panels = []
    for name in sorted(common or []):
        hists = [parse_csv((Path(d) / name).read_text()) for d in run_dirs]
        labels = [s["scenario"] for s in summaries]
        panels.append((hists, labels, name.removesuffix(".csv"), "value"))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    text = "\n".join(lines) + "\n"
    (out_dir / "comparison.txt").write_text(text, encoding="utf-8")
    if panels:
        (out_dir / "comparison.svg").write_text(emit_panels(panels),
                                                encoding="utf-8")
    return {"text": text, "n_panels": len(panels), "out_dir": out_dir}
