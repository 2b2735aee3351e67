"""Command-line front end: ``mftasep <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 runtime or provider failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import platform
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np

from .core import ModelParams
from .engine import (RNG_ALGORITHM, SimConfig, blocking_from_flux, blocking_probability,
                     flux_estimates, simulate, simulate_batch)
from .harness import PRESETS, compare_conjecture, preset_config, summarize, write_pgm
from .theory import (FluxTable, SimulationFluxProvider, estimate_alpha_star, exact_stationary)

log = logging.getLogger("mftasep")

CSV_SCHEMA_VERSION = "1"
EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
SIMULATION_OUTPUTS = ("counters.csv", "profile.csv", "zones.csv", "heatmap.pgm", "snapshots.npy")


class UsageError(Exception):
    pass


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def read_config(path) -> dict:
    """``key=value`` lines; ``#`` starts a comment. Keys use flag spelling without dashes."""
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line without '=': {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def parse_list(text: str, kind=float) -> list:
    """Comma list with optional ``start:stop:step`` ranges (stop inclusive)."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            a, b, s = (float(x) for x in part.split(":"))
            if s <= 0:
                raise UsageError(f"range step must be positive in {part!r}")
            n = int(math.floor((b - a) / s + 1e-9)) + 1
            out += [kind(round(a + i * s, 12)) for i in range(n)]
        else:
            out.append(kind(float(part)) if kind is int else kind(part))
    return out


# simulate ---------------------------------------------------------------------

def _sim_args(p: argparse.ArgumentParser):
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--floors", type=int)
    p.add_argument("--sites", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("--burn-in", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--snapshot-stride", type=float)
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--config", help="key=value file; flags take precedence")


def resolve_run(args) -> tuple:
    """Merge preset < config file < flags into ``(ModelParams, SimConfig)``."""
    vals = {}
    if getattr(args, "config", None):
        vals.update(read_config(args.config))
    for key in ("alpha", "beta", "floors", "sites", "duration", "burn_in", "seed",
                "snapshot_stride", "preset"):
        v = getattr(args, key, None)
        if v is not None:
            vals[key] = v
    missing = [k for k in ("alpha", "beta", "floors", "sites") if k not in vals]
    if missing:
        raise UsageError("missing " + ", ".join("--" + k for k in missing))
    try:
        params = ModelParams(float(vals["alpha"]), float(vals["beta"]), int(vals["floors"]),
                             int(vals["sites"]))
        if vals.get("preset"):
            base = preset_config(vals["preset"], params.n_sites, int(vals.get("seed", 0)))
        else:
            if "duration" not in vals:
                raise UsageError("--duration or --preset is required")
            dur = float(vals["duration"])
            base = SimConfig(duration=dur, seed=int(vals.get("seed", 0)))
        dur = float(vals.get("duration", base.duration))
        burn = float(vals["burn_in"]) if "burn_in" in vals else (
            base.burn_in if dur == base.duration else 0.1 * dur)
        stride = float(vals.get("snapshot_stride", base.snapshot_stride))
        cfg = SimConfig(duration=dur, burn_in=burn, seed=int(vals.get("seed", base.seed)),
                        snapshot_stride=stride)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return params, cfg


def _manifest(params: ModelParams, cfg: SimConfig) -> dict:
    return {
        "schema_version": CSV_SCHEMA_VERSION,
        "command": "simulate",
        "alpha": params.alpha, "beta": params.beta, "floors": params.c, "sites": params.n_sites,
        "duration": cfg.duration, "burn_in": cfg.burn_in, "seed": cfg.seed,
        "snapshot_stride": cfg.snapshot_stride, "initial_state": "empty",
        "n_batches": cfg.n_batches, "stream": cfg.stream,
        "rng_algorithm": RNG_ALGORITHM,
        "code_version": code_version(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def write_simulation(out_dir, params: ModelParams, cfg: SimConfig) -> dict:
    """Run and write every artifact; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    res = simulate(params, cfg)
    wall = time.time() - t0
    summary = summarize(params, cfg, res)
    cnt = res.counters
    est = flux_estimates(cnt, params.alpha)

    with open(out / "counters.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "value"])
        rows = [
            ("arrivals_attempted", cnt.arrivals_attempted),
            ("arrivals_accepted", cnt.arrivals_accepted),
            ("departures", cnt.departures),
            ("elapsed", repr(cnt.elapsed)),
            ("site1_below_c_time", repr(cnt.site1_below_c_time)),
            ("particles_at_burn_in", cnt.particles_at_burn_in),
            ("particles_at_end", cnt.particles_at_end),
            ("phi_entry", repr(est.phi_entry)),
            ("phi_entry_vacancy", repr(est.phi_entry_vacancy)),
            ("phi_exit", repr(est.phi_exit)),
            ("phi_bond_mean", repr(est.phi_bond_mean)),
            ("stderr", repr(est.stderr)),
        ]
        if cnt.arrivals_attempted:
            rows.append(("blocking_probability", repr(blocking_probability(cnt))))
        rows.append(("blocking_from_flux", repr(blocking_from_flux(cnt, params.alpha))))
        rows += [(f"bond_crossings_{n}", int(x)) for n, x in enumerate(cnt.bond_crossings, start=1)]
        w.writerows(rows)

    prof = summary.profile
    with open(out / "profile.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site", "rho"] + [f"level_frac_{k}" for k in range(params.c + 1)])
        for n in range(params.n_sites):
            w.writerow([n + 1, repr(float(prof.rho[n]))]
                       + [repr(float(x)) for x in prof.level_occupation[n]])

    with open(out / "zones.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["floor", "mean_boundary_norm", "sd_boundary_norm", "mean_size_norm",
                    "classification"])
        z = summary.zones
        if z is not None:
            for m in range(1, params.c + 1):
                w.writerow([m, repr(float(z.mean_a[m])), repr(float(math.sqrt(z.var_a[m]))),
                            repr(float(z.zone_sizes[m - 1])), z.classification(m)])

    files = ["counters.csv", "profile.csv", "zones.csv"]
    if res.trace is not None and len(res.trace.times):
        write_pgm(out / "heatmap.pgm", res.trace.states, params.c)
        np.save(out / "snapshots.npy", res.trace.states)
        files += ["heatmap.pgm", "snapshots.npy"]
    manifest = _manifest(params, cfg)
    manifest["wall_clock_seconds"] = round(wall, 3)
    for f in files:
        manifest[f"digest_{f}"] = sha256(out / f)
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return manifest


def cmd_simulate(args) -> int:
    params, cfg = resolve_run(args)
    if not args.out_dir:
        raise UsageError("--out-dir is required")
    m = write_simulation(args.out_dir, params, cfg)
    print(f"wrote {args.out_dir} in {m['wall_clock_seconds']} s")
    return EXIT_OK


def cmd_verify(args) -> int:
    """Re-run a manifest into a scratch directory and compare file digests."""
    src = Path(args.manifest)
    if src.is_dir():
        src = src / "manifest.json"
    try:
        man = json.loads(src.read_text())
        params = ModelParams(float(man["alpha"]), float(man["beta"]), int(man["floors"]),
                             int(man["sites"]))
        cfg = SimConfig(duration=float(man["duration"]), burn_in=float(man["burn_in"]),
                        seed=int(man["seed"]), snapshot_stride=float(man["snapshot_stride"]),
                        n_batches=int(man.get("n_batches", 32)), stream=int(man.get("stream", 0)))
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"unreadable manifest: {exc}") from exc
    with tempfile.TemporaryDirectory() as tmp:
        again = write_simulation(tmp, params, cfg)
    keys = sorted(k for k in man if k.startswith("digest_"))
    bad = [k for k in keys if again.get(k) != man[k]]
    for k in keys:
        print(f"{k[7:]:16s} {'ok' if k not in bad else 'DIFFERS'}")
    return EXIT_OK if keys and not bad else EXIT_RUNTIME


# sweep ------------------------------------------------------------------------

FLUX_COLUMNS = ["alpha", "beta", "floors", "sites", "duration", "seed", "phi_entry", "phi_exit",
                "phi_bond_mean", "stderr"]


def sweep_rows(grid, duration: float, replicates: int, seed: int, jobs: int,
               burn_frac: float = 0.1) -> list:
    """Per-replicate rows then one aggregate row per cell (``seed = mean``)."""
    jobs_list = []
    for a, b, c, n in grid:
        for r in range(replicates):
            jobs_list.append((ModelParams(a, b, c, n),
                              SimConfig(duration=duration, burn_in=burn_frac * duration,
                                        seed=seed + r)))
    results = simulate_batch(jobs_list, jobs)
    rows = []
    for i, (a, b, c, n) in enumerate(grid):
        cell = []
        for r in range(replicates):
            params, cfg = jobs_list[i * replicates + r]
            est = flux_estimates(results[i * replicates + r].counters, a)
            row = dict(alpha=a, beta=b, floors=c, sites=n, duration=duration, seed=cfg.seed,
                       phi_entry=est.phi_entry, phi_exit=est.phi_exit,
                       phi_bond_mean=est.phi_bond_mean, stderr=est.stderr)
            cell.append(row)
            rows.append(row)
        phis = np.array([r["phi_entry"] for r in cell])
        if replicates > 1:
            se = float(phis.std(ddof=1) / math.sqrt(replicates))
        else:
            se = cell[0]["stderr"]
        rows.append(dict(alpha=a, beta=b, floors=c, sites=n, duration=duration, seed="mean",
                         phi_entry=float(phis.mean()),
                         phi_exit=float(np.mean([r["phi_exit"] for r in cell])),
                         phi_bond_mean=float(np.mean([r["phi_bond_mean"] for r in cell])),
                         stderr=se))
    return rows


def cmd_sweep(args) -> int:
    try:
        alphas = parse_list(args.alpha)
        betas = parse_list(args.beta)
        floors = parse_list(args.floors, int)
        sites = parse_list(args.sites, int)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    grid = [(a, b, c, n) for a in alphas for b in betas for c in floors for n in sites]
    if not grid:
        raise UsageError("empty parameter grid")
    if args.replicates < 1:
        raise UsageError("--replicates must be >= 1")
    try:
        for a, b, c, n in grid:
            ModelParams(a, b, c, n)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rows = sweep_rows(grid, args.duration, args.replicates, args.seed, args.jobs)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=FLUX_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    print(f"wrote {len(rows)} rows to {out}")
    return EXIT_OK


# alpha-star -------------------------------------------------------------------

def alpha_star_report(floors: list, n_sites: int, duration: float, tolerance: float,
                      seed: int, jobs: int = 1) -> tuple:
    """Brackets per floor count plus the ordering check across them.

    Floor counts are bisected concurrently on ``jobs`` threads; the report
    follows floor order.
    """
    cs = sorted(set(floors))

    def one(c):
        return estimate_alpha_star(c, n_sites=n_sites, duration=duration, tolerance=tolerance,
                                   seed=seed)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        found = dict(zip(cs, pool.map(one, cs)))
    lines = []
    for c in cs:
        est = found[c]
        tag = "" if est.determinate else "  (indeterminate: a probe sat within 2 SE of the threshold)"
        lines.append(f"c={c}: alpha* in [{est.lo:.4f}, {est.hi:.4f}]{tag}")
        for p in est.probes:
            lines.append(f"    probe alpha={p.rate:.5f} flux={p.flux:.5f} density={p.density:.4f}"
                         f" +- {p.density_stderr:.4f} saturated={p.plateau}")
    ok = True
    for lo_c, hi_c in zip(cs, cs[1:]):
        a, b = found[lo_c], found[hi_c]
        good = b.hi <= a.hi + tolerance
        ok &= good
        lines.append(f"ordering: upper(c={hi_c}) {b.hi:.4f} <= upper(c={lo_c}) {a.hi:.4f} + tol"
                     f" -> {'ok' if good else 'VIOLATED'}")
    return found, lines, ok


def cmd_alpha_star(args) -> int:
    floors = parse_list(args.floors, int)
    if not floors or min(floors) < 1:
        raise UsageError("--floors needs positive integers")
    _, lines, ok = alpha_star_report(floors, args.sites, args.duration, args.tolerance, args.seed,
                                     args.jobs)
    print("\n".join(lines))
    return EXIT_OK if ok else EXIT_RUNTIME


# conjecture -------------------------------------------------------------------

def load_flux_table(path) -> FluxTable:
    """CSV with columns rate,floors,value[,stderr]."""
    from .theory import FluxValue, QUARTER
    table = FluxTable()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            v = float(row["value"])
            se = float(row.get("stderr") or 0.0)
            table.add(float(row["rate"]), int(row["floors"]),
                      FluxValue(v, se, "table", plateau=v >= QUARTER - 1e-12))
    return table


def cmd_conjecture(args) -> int:
    try:
        params = ModelParams(args.alpha, args.beta, args.floors, args.sites)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    sim = SimulationFluxProvider(n_sites=args.probe_sites, duration=args.probe_duration,
                                 seed=args.seed)
    provider = load_flux_table(args.flux_table) if args.flux_table else FluxTable()
    if args.provider == "simulation":
        provider.fallback = sim
    cfg = preset_config(args.preset, params.n_sites, args.seed)
    if args.duration:
        cfg = SimConfig(duration=args.duration, burn_in=0.3 * args.duration, seed=args.seed,
                        snapshot_stride=args.duration / 1200)
    try:
        summary = summarize(params, cfg, simulate(params, cfg))
        comp = compare_conjecture(args.alpha, args.beta, args.floors, provider, summary)
    except LookupError as exc:
        print(f"flux provider failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print("\n".join(comp.lines()))
    print(f"  provenance: {', '.join(comp.predicted.provenance)}")
    print(f"verdict: {'match' if comp.ok else 'mismatch'}")
    return EXIT_OK


# oracle / render --------------------------------------------------------------

def cmd_oracle(args) -> int:
    try:
        params = ModelParams(args.alpha, args.beta, args.floors, args.sites)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    try:
        sol = exact_stationary(params, cap=args.cap)
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_RUNTIME
    print(f"states {len(sol.states)}")
    print(f"flux entry {sol.flux_entry:.12f} exit {sol.flux_exit:.12f} "
          f"bond spread {sol.flux_spread():.3e}")
    if args.show:
        for s, p in sorted(zip(sol.states, sol.pi), key=lambda sp: -sp[1])[: args.show]:
            print("".join(map(str, s)), f"{p:.10f}")
    return EXIT_OK


def cmd_render(args) -> int:
    try:
        states = np.load(args.snapshots)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read snapshots: {exc}") from exc
    if states.ndim != 2 or len(states) < 1:
        raise UsageError("snapshots must be a non-empty (rows, sites) array")
    write_pgm(args.out, states, args.floors)
    print(f"wrote {args.out} ({states.shape[1]} x {states.shape[0]})")
    return EXIT_OK


# entry point ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mftasep", description="Multi-floor TASEP experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="one run with counters, profile, zones and heatmap")
    _sim_args(s)
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="flux table over a parameter grid")
    s.add_argument("--alpha", required=True, help="list, e.g. 0.1,0.2 or 0.1:0.5:0.1")
    s.add_argument("--beta", default="1")
    s.add_argument("--floors", default="1")
    s.add_argument("--sites", default="400")
    s.add_argument("--duration", type=float, default=5e5)
    s.add_argument("--replicates", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", default="flux_table.csv")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("alpha-star", help="bisection brackets for the saturation rate")
    s.add_argument("--floors", required=True, help="list of floor counts")
    s.add_argument("--sites", type=int, default=600)
    s.add_argument("--duration", type=float, default=6e5)
    s.add_argument("--tolerance", type=float, default=0.01)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_alpha_star)

    s = sub.add_parser("conjecture", help="predicted versus simulated zone structure")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--floors", type=int, required=True)
    s.add_argument("--sites", type=int, default=1200)
    s.add_argument("--preset", choices=PRESETS, default="stationary")
    s.add_argument("--duration", type=float)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--provider", choices=("simulation", "table"), default="simulation")
    s.add_argument("--flux-table", help="CSV rate,floors,value[,stderr] consulted first")
    s.add_argument("--probe-sites", type=int, default=600)
    s.add_argument("--probe-duration", type=float, default=6e5)
    s.set_defaults(func=cmd_conjecture)

    s = sub.add_parser("oracle", help="exact stationary solve of a tiny system")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--floors", type=int, required=True)
    s.add_argument("--sites", type=int, required=True)
    s.add_argument("--cap", type=int, default=200_000)
    s.add_argument("--show", type=int, default=0, help="print the N most likely states")
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("render", help="PGM heatmap from a snapshots.npy file")
    s.add_argument("--snapshots", required=True)
    s.add_argument("--floors", type=int, required=True)
    s.add_argument("--out", default="heatmap.pgm")
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("verify", help="re-run a manifest and compare digests")
    s.add_argument("--manifest", required=True, help="manifest.json or its directory")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mftasep: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - top-level failure report
        log.debug("failure", exc_info=True)
        print(f"mftasep: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
