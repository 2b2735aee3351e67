"""Experiment presets and conjecture-versus-simulation comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import ModelParams
from .engine import SimConfig, SimulationResult, flux_estimates, simulate
from .observables import (DensityProfile, ZoneStatistics, bulk_density, density_profile,
                          zone_statistics)
from .theory import (CASE_A, CASE_B, CASE_NEITHER, QUARTER, ConjectureCase, FluxProvider,
                     classify_case)

REFERENCE_SITES = 1200
HEATMAP_ROWS = 1200
ZETA_TOL = 0.01
DENSITY_MATCH_TOL = 0.03
HALF_TOL = 0.03


def preset_config(name: str, n_sites: int = REFERENCE_SITES, seed: int = 0) -> SimConfig:
    """Named run protocols.

    ``reference``: horizon 2e9 / N from empty, 10% burn-in, 1200 snapshot rows.
    ``stationary``: three times that horizon with 30% burn-in, long enough for
    zone fronts to forget the empty start at N = 1200.
    """
    base = 2e9 / n_sites
    if name == "reference":
        return SimConfig(duration=base, burn_in=0.1 * base, seed=seed,
                         snapshot_stride=base / HEATMAP_ROWS)
    if name == "stationary":
        dur = 3 * base
        return SimConfig(duration=dur, burn_in=0.3 * dur, seed=seed,
                         snapshot_stride=dur / HEATMAP_ROWS)
    raise ValueError(f"unknown preset {name!r}")


PRESETS = ("reference", "stationary")


@dataclass
class RunSummary:
    params: ModelParams
    cfg: SimConfig
    result: SimulationResult
    profile: DensityProfile
    zones: Optional[ZoneStatistics]
    phi: float
    phi_stderr: float

    def floor_density(self, m: int, trim: float = 0.1) -> float:
        """On-floor density over the mean floor-m zone (trimmed)."""
        if self.zones is None:
            return bulk_density(self.profile, m, trim)
        lo, hi = self.zones.zone_range(m)
        return bulk_density(self.profile, m, trim, zone=(lo, hi))


def summarize(params: ModelParams, cfg: SimConfig, result: SimulationResult) -> RunSummary:
    est = flux_estimates(result.counters, params.alpha)
    zones = None
    if result.trace is not None:
        post = result.trace.after(cfg.burn_in)
        if len(post.times):
            zones = zone_statistics(post.states, params.c)
    return RunSummary(params, cfg, result, density_profile(result.counters), zones,
                      est.phi_entry, est.stderr)


def run(params: ModelParams, cfg: SimConfig) -> RunSummary:
    return summarize(params, cfg, simulate(params, cfg))


@dataclass
class ConjectureComparison:
    predicted: ConjectureCase
    run: RunSummary
    sim_case: str
    sim_floors: list
    sim_density: dict
    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(v[0] for v in self.checks.values())

    def lines(self) -> list:
        p, r = self.predicted, self.run
        out = [
            f"alpha={p.alpha} beta={p.beta} c={p.c}  ({p.label})",
            f"  zeta        predicted {p.zeta:.4f}  simulated {r.phi:.4f} +- {r.phi_stderr:.4f}",
            f"  case        predicted {p.case}  simulated {self.sim_case}",
            f"  L*          {p.l_star[0]}..{p.l_star[1]}",
            f"  zone floors predicted {p.predicted_floors}  simulated {self.sim_floors}",
        ]
        for m in sorted(set(p.predicted_density) | set(self.sim_density)):
            pd = p.predicted_density.get(m)
            sd = self.sim_density.get(m)
            out.append(f"  density[{m}]  predicted {_fmt(pd)}  simulated {_fmt(sd)}")
        for name, (passed, detail) in self.checks.items():
            out.append(f"  {'MATCH' if passed else 'MISMATCH':8s} {name}: {detail}")
        return out


def _fmt(x):
    return "-" if x is None else f"{x:.3f}"


def simulated_case(zones: ZoneStatistics, densities: dict) -> str:
    """Case read off a run: B when every large stable zone sits at density 1/2."""
    floors = zones.large_stable_floors()
    if not floors:
        return CASE_NEITHER
    if all(abs(densities[m] - 0.5) <= HALF_TOL for m in floors):
        return CASE_B
    if len(floors) == 1:
        return CASE_A
    return CASE_NEITHER


def compare_conjecture(alpha: float, beta: float, c: int, provider: FluxProvider,
                       summary: RunSummary, zeta_tol: float = ZETA_TOL,
                       density_tol: float = DENSITY_MATCH_TOL) -> ConjectureComparison:
    """Line up predictions against a finished run of the same parameters."""
    pred = classify_case(alpha, beta, c, provider)
    zones = summary.zones
    if zones is None:
        raise ValueError("comparison needs snapshots")
    floors = zones.large_stable_floors()
    dens = {}
    for m in sorted(set(floors) | set(pred.predicted_floors)):
        try:
            dens[m] = summary.floor_density(m)
        except ValueError:
            dens[m] = math.nan
    sim_case = simulated_case(zones, dens)
    checks = {
        "case": (sim_case == pred.case, f"{pred.case} vs {sim_case}"),
        "zone floors": (floors == pred.predicted_floors, f"{pred.predicted_floors} vs {floors}"),
        "zeta": (abs(summary.phi - pred.zeta) <= zeta_tol,
                 f"|{summary.phi:.4f} - {pred.zeta:.4f}| <= {zeta_tol}"),
    }
    worst = 0.0
    for m, d in pred.predicted_density.items():
        worst = max(worst, abs(dens.get(m, math.nan) - d)) if not math.isnan(dens.get(m, math.nan)) else math.inf
    checks["bulk density"] = (bool(pred.predicted_density) and worst <= density_tol,
                              f"max deviation {worst:.3f} <= {density_tol}")
    return ConjectureComparison(pred, summary, sim_case, floors, dens, checks)


# parameter triples spanning both cases and the saturation thresholds
REFERENCE_CASES = (
    (1.0, 1.0, 2), (1.0, 1.0, 3),
    (0.45, 1.0, 2), (0.45, 1.0, 3), (0.45, 0.6, 2),
    (0.3, 1.0, 2), (0.3, 1.0, 3), (0.3, 1.0, 4),
    (0.3, 0.48, 2),
    (0.3, 0.4, 2), (0.3, 0.4, 3), (0.3, 0.4, 4), (0.3, 0.4, 5),
)


def heatmap_pixels(states: np.ndarray, c: int) -> np.ndarray:
    """Grey levels ``round(q * 255 / c)``; lighter means fuller."""
    states = np.asarray(states, dtype=np.float64)
    return np.rint(states * 255.0 / c).astype(np.uint8)


def write_pgm(path, states: np.ndarray, c: int) -> None:
    """Binary P5 image: one row per snapshot (earliest first), one column per site."""
    pix = heatmap_pixels(states, c)
    if pix.ndim != 2 or pix.shape[0] < 1:
        raise ValueError("heatmap needs at least one snapshot row")
    h, w = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5" or int(tokens[3]) != 255:
        raise ValueError("expected a binary PGM with maxval 255")
    w, h = int(tokens[1]), int(tokens[2])
    body = data[pos + 1: pos + 1 + w * h]
    if len(body) != w * h:
        raise ValueError("truncated PGM")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w)
