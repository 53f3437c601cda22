"""Run a parsed scenario: compute, then write CSV traces and ``report.json``.

Nothing is written until every computation has succeeded, so a failing run
leaves the output directory untouched.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ScenarioConfig
from .constants import BOHR_MHZ_PER_MT
from .dynamics import (InhomogeneityModel, RelaxationParams, concurrence, decay_time,
                       entangling_time, exchange_evolution, fft_peaks, oscillation_period,
                       rabi_components, simulate_eseem, simulate_nuclear_rabi)
from .gates import (RotationSpec, fidelity_sweep, surface_to_csv)
from .hamiltonian import CouplingSpec, build_dimer_hamiltonian, build_static_hamiltonian
from .spectral import (C13Profile, MixtureComponent, composite_spectrum, diagonalize,
                       isotopologue_weights, perturbative_transitions, species_lines,
                       transitions, with_resonance_fields, LITERATURE_ISOTOPOLOGUE_PERCENT)
from .species import get_species
from .traces import (SURFACE_DIGITS, SpectrumTrace, _atomic_write_text, _fmt,
                     trace_to_csv)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

# line and level tables hold absolute frequencies near 10 GHz; 15 digits keep
# kHz-scale differences exact to well below the reported precision
TABLE_DIGITS = 15


class ScenarioFailure(RuntimeError):
    """Numerical failure inside an engine, tagged with the scenario kind."""


@dataclass
class RunReport:
    scenario: str
    config: dict
    scalars: dict
    outputs: list
    wall_ms: float = 0.0
    traces: dict = field(default_factory=dict, repr=False)

    def to_json(self) -> str:
        # wall-clock time is left out so identical configs give identical files
        body = {"scenario": self.scenario, "config": self.config,
                "scalars": _jsonable(self.scalars), "outputs": list(self.outputs)}
        return json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n"


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def _table(header, rows, digits=TABLE_DIGITS) -> str:
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(_fmt(float(v), digits) if isinstance(v, (float, np.floating))
                            else str(v) for v in row))
    return "\n".join(out) + "\n"


def _key(x: float) -> str:
    return _fmt(float(x), SURFACE_DIGITS)


# ---------------------------------------------------------------- levels

def _group_spacings(lines) -> dict:
    groups: dict = {}
    for l in lines:
        groups.setdefault(l.from_label[1], []).append(l.frequency)
    return {mi: np.sort(f) for mi, f in groups.items()}


def run_levels(cfg: ScenarioConfig, threads: int = 1):
    sp, fld = cfg.species, cfg.field
    order = cfg.params["order"]
    eig = diagonalize(build_static_hamiltonian(sp, fld))
    exact = with_resonance_fields(transitions(eig), fld, sp.g)
    pert = with_resonance_fields(perturbative_transitions(sp, fld, order), fld, sp.g)

    level_rows = [(k, lab[0], lab[1], float(e)) for k, (lab, e)
                  in enumerate(zip(eig.labels, eig.energies))]
    line_rows = []
    for method, lines in (("exact", exact), (f"order{order}", pert)):
        for l in lines:
            line_rows.append((method, l.from_label[0], l.from_label[1], float(l.frequency),
                              float(l.intensity), float(l.resonance_field)))

    groups = _group_spacings(exact)
    pgroups = _group_spacings(pert)
    outer = max(abs(m) for m in groups)
    mhz_per_mt = sp.g * BOHR_MHZ_PER_MT
    splits = [float(np.mean(np.diff(groups[m]))) for m in (outer, -outer) if len(groups[m]) > 1]
    psplits = [float(np.mean(np.diff(pgroups[m]))) for m in (outer, -outer) if len(pgroups[m]) > 1]
    scalars = {
        "a_MHz": sp.a,
        "omega_e_MHz": sp.g * BOHR_MHZ_PER_MT * fld.B0,
        "outer_M_I": outer,
        "splitting_kHz": 1e3 * float(np.mean(splits)) if splits else None,
        "splitting_uT": 1e3 * float(np.mean(splits)) / mhz_per_mt if splits else None,
        "splitting_perturbative_kHz": 1e3 * float(np.mean(psplits)) if psplits else None,
        "center_group_spread_kHz": None,
    }
    inner = min(groups, key=abs)
    if inner == 0:
        scalars["center_group_spread_kHz"] = 1e3 * float(np.ptp(groups[0]))
    for method, lines in (("exact", exact), ("perturbative", pert)):
        ratios = {}
        for m in (outer, -outer):
            ints = [l.intensity for l in sorted(lines, key=lambda l: l.frequency)
                    if l.from_label[1] == m]
            ref = max(ints)
            ratios[_key(m)] = [4 * i / ref for i in ints]
        scalars[f"intensity_ratio_{method}"] = ratios
    files = {
        "levels.csv": _table(("index", "M_S", "M_I", "energy_MHz"), level_rows),
        "transitions.csv": _table(("method", "M_S_lower", "M_I", "frequency_MHz", "intensity",
                                   "resonance_field_mT"), line_rows),
    }
    return scalars, files, {}


# ---------------------------------------------------------------- cw

def run_cw(cfg: ScenarioConfig, threads: int = 1):
    sp, fld, p = cfg.species, cfg.field, cfg.params
    width = p["linewidth"]
    cage = p["cage"] or ("C70" if "C70" in sp.name else "C60")
    profile = None
    if p["c13"] == "natural":
        base = C13Profile.natural(cage, p["max_k"])
        profile = C13Profile(p["abundance"] if p["abundance"] is not None else base.abundance,
                             base.n_sites, p["max_k"], p["a13"] if p["a13"] else base.a13)
    kmax = profile.max_k if profile else 0
    weights = (isotopologue_weights(profile.abundance, profile.n_sites, kmax)
               if profile else np.array([1.0]))

    lines_by_k = {k: species_lines(sp, fld, k, profile.a13 if profile else None)
                  for k in range(kmax + 1)}
    fields = [l.resonance_field for ls in lines_by_k.values() for l in ls]
    step = width / 20 if p["step"] == "auto" else p["step"]
    margin = 10 * width if p["margin"] == "auto" else p["margin"]
    lo = math.floor((min(fields) - margin) / step) * step
    hi = math.ceil((max(fields) + margin) / step) * step
    axis = lo + step * np.arange(int(round((hi - lo) / step)) + 1)
    trace = composite_spectrum([MixtureComponent(sp, 1.0, profile)], fld, width, axis,
                               derivative=p["derivative"], lineshape=p["lineshape"])

    line_rows = []
    for k, ls in lines_by_k.items():
        for l in ls:
            mc = sum(l.from_label[2:]) if k else 0.0
            line_rows.append((k, l.from_label[0], l.from_label[1], mc, float(l.frequency),
                              float(l.resonance_field), float(l.intensity / 2 ** k),
                              float(weights[k])))

    scalars = {"linewidth_uT": width * 1e3, "lineshape": p["lineshape"],
               "isotopologue_weights": [float(w) for w in weights]}
    if profile:
        scalars["c13_abundance"] = profile.abundance
        scalars["c13_sites"] = profile.n_sites
        scalars["a13_MHz"] = profile.a13
        scalars["isotopologue_weights_literature_percent"] = list(LITERATURE_ISOTOPOLOGUE_PERCENT)
        scalars["isotopologue_note"] = (
            "weights are binomial probabilities of k 13C among the cage sites; "
            "the quoted literature percentages (57, 30, 12) are not reproduced by this "
            "model and are listed for comparison only")
    if kmax >= 1:
        scalars["satellite_splitting_kHz"] = satellite_splitting_khz(line_rows)
    scalars["outer_to_central_ratio"] = outer_to_central_ratio(trace, line_rows, width)
    files = {
        "spectrum.csv": trace_to_csv(trace),
        "lines.csv": _table(("k13C", "M_S_lower", "M_I", "m_C13", "frequency_MHz",
                             "resonance_field_mT", "intensity", "isotopologue_weight"),
                            line_rows),
    }
    return scalars, files, {"spectrum": trace}


def satellite_splitting_khz(line_rows) -> float:
    """Mean frequency gap between the m_C = -1/2 and +1/2 partners of each singly labelled line."""
    pairs: dict = {}
    for k, ms, mi, mc, f, *_ in line_rows:
        if int(k) == 1:
            pairs.setdefault((float(ms), float(mi)), {})[float(mc)] = float(f)
    gaps = [abs(d[-0.5] - d[0.5]) for d in pairs.values() if 0.5 in d and -0.5 in d]
    return 1e3 * float(np.mean(gaps))


def outer_to_central_ratio(trace: SpectrumTrace, line_rows, width: float) -> float:
    """Peak-to-peak amplitude of the outer hyperfine groups relative to the central one."""
    centers: dict = {}
    for k, ms, mi, mc, f, b, *_ in line_rows:
        if int(k) == 0:
            centers.setdefault(float(mi), []).append(float(b))
    mis = sorted(centers)
    x, y = trace.axis, trace.amplitude

    def p2p(mi):
        c = float(np.mean(centers[mi]))
        win = np.abs(x - c) <= 3 * width
        return float(np.ptp(y[win]))

    inner = min(mis, key=abs)
    outer = [m for m in mis if abs(m) == max(abs(v) for v in mis)]
    return float(np.mean([p2p(m) for m in outer]) / p2p(inner))


# ---------------------------------------------------------------- eseem

def run_eseem(cfg: ScenarioConfig, threads: int = 1):
    p = cfg.params
    tau = np.linspace(p["tau_start"], p["tau_stop"], p["points"])
    echo, spec = simulate_eseem(cfg.species, cfg.field, tau, pad=p["pad"])
    peaks = fft_peaks(spec, 3)
    scalars = {
        "peak_kHz": spec.metadata["peak_kHz"],
        "peak_kHz_vs_tau": spec.metadata["peak_kHz_vs_tau"],
        "peaks_kHz": [f for f, _ in peaks],
        "points": len(tau),
        "carrier_MHz": echo.metadata["carrier_MHz"],
    }
    files = {"echo.csv": trace_to_csv(echo), "fft.csv": trace_to_csv(spec)}
    return scalars, files, {"echo": echo, "fft": spec}


# ---------------------------------------------------------------- rabi

def run_rabi(cfg: ScenarioConfig, threads: int = 1):
    p = cfg.params
    t = np.linspace(0.0, p["t_stop"], p["points"])
    inh = InhomogeneityModel(p["distribution"], p["sigma"], p["lo"], p["hi"], p["nodes"])
    relax = RelaxationParams(p["T1"] / 1e6, p["T2"] / 1e6)
    amp = p["nutationAmp"]
    t, sy, sz, setup = rabi_components(cfg.species, cfg.field, amp, t, inh, relax,
                                       target_mi=p["target_mi"], threads=threads)
    signal = SpectrumTrace(t, sy, "ns", "signal")
    env = SpectrumTrace(t, np.hypot(sy, sz), "ns", "envelope")
    period = oscillation_period(signal)
    scalars = {
        "nutation_amp_MHz": amp,
        "carrier_MHz": setup.carrier,
        "period_ns": period,
        "period_oracle_ns": 1e3 / amp,
        "envelope_max_deviation": float(np.max(np.abs(env.amplitude - 1))),
        "decay_time_ns": None,
        "decay_oracle_ns": None,
        "reference_T2_ms": p["reference_T2"] / 1e6,
        "periods_in_reference_T2": p["reference_T2"] / period,
    }
    d = decay_time(env)
    if math.isfinite(d):
        scalars["decay_time_ns"] = d
    if p["distribution"] == "gaussian" and not relax.active:
        # exp(-(sigma w1 t)^2 / 2) reaches 1/e at sigma w1 t = sqrt(2)
        scalars["decay_oracle_ns"] = math.sqrt(2) / (2 * math.pi * p["sigma"] * amp * 1e-3)
    files = {"signal.csv": trace_to_csv(signal), "envelope.csv": trace_to_csv(env)}
    return scalars, files, {"signal": signal, "envelope": env}


# ---------------------------------------------------------------- nuclear-rabi

def manifold_nmr_lines(species, fld):
    """Exact NMR lines grouped by electron projection: {M_S: [MHz, ...]}."""
    eig = diagonalize(build_static_hamiltonian(species, fld))
    out: dict = {}
    for l in transitions(eig, rule="NMR"):
        out.setdefault(l.from_label[0], []).append(float(l.frequency))
    return {ms: sorted(f) for ms, f in sorted(out.items())}


def run_nuclear_rabi(cfg: ScenarioConfig, threads: int = 1):
    sp, fld, p = cfg.species, cfg.field, cfg.params
    manifolds = manifold_nmr_lines(sp, fld)
    top = max(abs(m) for m in manifolds)
    edge = {m: float(np.mean(f)) for m, f in manifolds.items() if abs(m) == top}
    targets = sorted(edge.values()) if p["targets"] == "auto" else list(p["targets"])
    t = np.linspace(0.0, p["t_stop"], p["points"])
    files, traces, rabi = {}, {}, []
    for k, amp in enumerate(p["rfAmp"]):
        res = simulate_nuclear_rabi(sp, fld, amp, targets, t, snap=p["snap"], pad=p["pad"])
        files[f"signal_{k}.csv"] = trace_to_csv(res.trace)
        files[f"fft_{k}.csv"] = trace_to_csv(res.spectrum)
        traces[f"signal_{k}"] = res.trace
        rabi.append(res.rabi_MHz)
    nmr_rows = [(ms, f) for ms, fs in manifolds.items() for f in fs]
    files["nmr_lines.csv"] = _table(("M_S", "frequency_MHz"), nmr_rows)
    scalars = {
        "nmr_lines_MHz": {_key(ms): fs for ms, fs in manifolds.items()},
        "edge_manifold_lines_MHz": [edge[m] for m in sorted(edge)],
        "targets_MHz": targets,
        "rf_amp_MHz": list(p["rfAmp"]),
        "rabi_MHz": rabi,
    }
    if len(rabi) > 1 and all(r for r in rabi) and p["rfAmp"][0] > 0:
        scalars["rabi_ratio"] = [r / rabi[0] for r in rabi]
        scalars["amp_ratio"] = [a / p["rfAmp"][0] for a in p["rfAmp"]]
    return scalars, files, traces


# ---------------------------------------------------------------- bb1

def naive_oracle(angle: float, eps: float) -> float:
    """Closed-form fidelity of a single rotation with angle error eps."""
    return (4 * math.cos(eps * angle / 2) ** 2 + 2) / 6


def run_bb1(cfg: ScenarioConfig, threads: int = 1):
    p = cfg.params
    target = RotationSpec(p["angle"], p["phase"])
    files, scalars, traces = {}, {"angle_rad": p["angle"]}, {}
    for scheme in ("naive", "bb1"):
        surf = fidelity_sweep(target, scheme, p["eps"], p["detuning"],
                              nutation_rate=p["nutationRate"], threads=threads)
        files[f"fidelity_{scheme}.csv"] = surface_to_csv(surf)
        row = int(np.argmin(np.abs(surf.detuning)))
        scalars[f"fidelity_{scheme}"] = {_key(e): float(v) for e, v in zip(surf.eps, surf.values[row])}
        scalars[f"min_fidelity_{scheme}"] = float(surf.values.min())
        traces[scheme] = surf
    scalars["fidelity_detuning_MHz"] = float(np.asarray(p["detuning"])[
        int(np.argmin(np.abs(np.asarray(p["detuning"]))))])
    scalars["naive_oracle"] = {_key(e): naive_oracle(p["angle"], e) for e in p["eps"]}
    return scalars, files, traces


# ---------------------------------------------------------------- dimer

def run_dimer(cfg: ScenarioConfig, threads: int = 1):
    p = cfg.params
    a = cfg.species
    b = get_species(p["species_b"]) if p["species_b"] else a
    coupling = CouplingSpec(p["J"], p["D"], p["distance"])
    h = build_dimer_hamiltonian(a, b, coupling, cfg.field)
    energies = np.linalg.eigvalsh(h.matrix)
    t_ent = entangling_time(p["J"])
    t_stop = 2 * t_ent if p["t_stop"] == "auto" else p["t_stop"]
    t = np.linspace(0.0, t_stop, p["points"])
    conc = np.array([concurrence(exchange_evolution(p["J"], x)) for x in t])
    trace = SpectrumTrace(t, conc, "ns", "concurrence")
    scalars = {
        "J_MHz": p["J"],
        "D_MHz": coupling.D,
        "dimension": h.dim,
        "entangling_time_ns": t_ent,
        "concurrence_at_entangling_time": concurrence(exchange_evolution(p["J"], t_ent)),
    }
    files = {
        "concurrence.csv": trace_to_csv(trace),
        "dimer_levels.csv": _table(("index", "energy_MHz"),
                                   [(k, float(e)) for k, e in enumerate(energies)]),
    }
    return scalars, files, {"concurrence": trace}


RUNNERS = {
    "levels": run_levels,
    "cw": run_cw,
    "eseem": run_eseem,
    "rabi": run_rabi,
    "nuclear-rabi": run_nuclear_rabi,
    "bb1": run_bb1,
    "dimer": run_dimer,
}


def run_scenario(cfg: ScenarioConfig, out_dir=None, *, threads: int = 1,
                 svg: bool = False) -> RunReport:
    """Dispatch ``cfg`` to its engine; write outputs to ``out_dir`` when given."""
    start = time.perf_counter()
    try:
        with np.errstate(invalid="raise", divide="raise", over="raise"):
            scalars, files, traces = RUNNERS[cfg.kind](cfg, threads)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise ScenarioFailure(f"scenario {cfg.kind!r}: {exc}") from exc
    outputs = sorted(files) + ["report.json"]
    report = RunReport(cfg.kind, cfg.echo, scalars, outputs, traces=traces)
    if out_dir is not None:
        out = Path(out_dir)
        for name in sorted(files):
            _atomic_write_text(out / name, files[name])
        if svg:
            from .plotting import render_svg
            for name, tr in traces.items():
                if isinstance(tr, SpectrumTrace):
                    _atomic_write_text(out / f"{name}.svg", render_svg(tr, f"{cfg.kind}: {name}"))
        _atomic_write_text(out / "report.json", report.to_json())
    report.wall_ms = (time.perf_counter() - start) * 1e3
    return report
