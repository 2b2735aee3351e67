"""Exact continuous-time simulation of the multi-floor TASEP.

The generator is uniformized: bells ring at the constant total rate
``R = alpha + (N - 1) + beta`` and each ring picks its kind with probability
proportional to its rate; disallowed moves are no-ops. Because the ring
epochs form a rate-R Poisson process independent of which bells ring, the
driver splits the time axis into intervals (snapshot times, burn-in end,
batch boundaries), draws the Poisson number of rings in each interval and
hands the ring loop to a compiled kernel. The realised trajectory is exact;
time integrals are accumulated as their conditional expectation given the
jump chain (the K rings of an interval of length T split it into K + 1
spacings of mean T / (K + 1)), which is unbiased and has lower variance than
integrating one sampled clock.

Randomness comes from numpy's PCG64 bit generator seeded through
``SeedSequence(seed, spawn_key=(stream,))``.
"""

from __future__ import annotations

import bisect
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from numba import njit

from .core import ModelParams, SystemState

RNG_ALGORITHM = "numpy.random.PCG64 via SeedSequence(entropy=seed, spawn_key=(stream,))"
DEFAULT_BATCHES = 32


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent, reproducible substream ``stream`` of master ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class SimConfig:
    """Run horizon and bookkeeping.

    ``burn_in`` defaults to 10% of ``duration``; ``snapshot_stride = 0``
    disables snapshots. ``initial_state`` is ``None`` for the empty state or
    any length-N occupancy sequence.
    """

    duration: float
    burn_in: Optional[float] = None
    seed: int = 0
    snapshot_stride: float = 0.0
    initial_state: Optional[tuple] = None
    n_batches: int = DEFAULT_BATCHES
    stream: int = 0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", 0.1 * self.duration)
        if not 0 <= self.burn_in < self.duration:
            raise ValueError("burn_in must satisfy 0 <= burn_in < duration")
        if self.snapshot_stride < 0:
            raise ValueError("snapshot_stride must be >= 0")
        if self.n_batches < 1:
            raise ValueError("n_batches must be >= 1")
        if self.initial_state is not None:
            object.__setattr__(self, "initial_state", tuple(int(x) for x in self.initial_state))

    @classmethod
    def reference(cls, n_sites: int = 1200, seed: int = 0, rows: int = 1200, **kw) -> "SimConfig":
        """Long-run protocol: duration 2e9 / N from empty, ``rows`` snapshots."""
        duration = 2e9 / n_sites
        return cls(duration=duration, seed=seed, snapshot_stride=duration / rows, **kw)


@dataclass
class SimulationCounters:
    """Tallies collected after burn-in.

    ``occupancy_time[n, k]`` is the time site n+1 spent holding k particles.
    The ``batch_*`` arrays split the measurement window into equal batches
    for batch-means standard errors.
    """

    n_sites: int
    c: int
    arrivals_attempted: int
    arrivals_accepted: int
    departures: int
    bond_crossings: np.ndarray
    occupancy_time: np.ndarray
    elapsed: float
    rings: int
    particles_at_burn_in: int
    particles_at_end: int
    batch_elapsed: np.ndarray
    batch_accepted: np.ndarray
    batch_departures: np.ndarray
    batch_crossings: np.ndarray

    @property
    def site1_below_c_time(self) -> float:
        return float(self.occupancy_time[0, : self.c].sum())

    def conservation_holds(self) -> bool:
        return (self.arrivals_accepted - self.departures
                == self.particles_at_end - self.particles_at_burn_in)


class Trace(NamedTuple):
    times: np.ndarray   # (K,)
    states: np.ndarray  # (K, N) uint8; row k is the state at times[k]

    def after(self, t0: float) -> "Trace":
        keep = self.times >= t0
        return Trace(self.times[keep], self.states[keep])


class SimulationResult(NamedTuple):
    final: SystemState
    counters: SimulationCounters
    trace: Optional[Trace]


@njit(nogil=True, cache=True)
def _ring(q, n_rings, c, alpha, rate, rng, measure, occ_steps, last, bond_counts, tallies):
    """Ring ``n_rings`` uniformized bells on ``q`` in place.

    ``tallies`` = [attempted, accepted, departures]. With ``measure`` set,
    ``occ_steps[n, k]`` counts visited states in which site n held k
    particles; ``last[n]`` is the ring index of the latest change at n and
    the caller flushes the remainder at the end of the interval.
    """
    n_bonds = q.shape[0] - 1
    entry = n_bonds + alpha
    m = n_bonds
    for j in range(1, n_rings + 1):
        u = rng.random() * rate
        if u < n_bonds:
            n = int(u)
            a = q[n]
            b = q[n + 1]
            if a > b:
                if measure:
                    occ_steps[n, a] += j - last[n]
                    last[n] = j
                    occ_steps[n + 1, b] += j - last[n + 1]
                    last[n + 1] = j
                    bond_counts[n] += 1
                q[n] = a - 1
                q[n + 1] = b + 1
        elif u < entry:
            a = q[0]
            if measure:
                tallies[0] += 1
            if a < c:
                if measure:
                    occ_steps[0, a] += j - last[0]
                    last[0] = j
                    tallies[1] += 1
                q[0] = a + 1
        else:
            a = q[m]
            if a > 0:
                if measure:
                    occ_steps[m, a] += j - last[m]
                    last[m] = j
                    tallies[2] += 1
                q[m] = a - 1


@njit(nogil=True, cache=True)
def _flush(q, n_rings, occ_steps, last):
    for n in range(q.shape[0]):
        occ_steps[n, q[n]] += n_rings + 1 - last[n]
        last[n] = 0


def _schedule(cfg: SimConfig) -> list:
    """Interval end points as ``(time, is_snapshot, is_burn_in_end, batch)``.

    ``batch`` is the measurement batch containing the interval ending at
    ``time`` (-1 during burn-in).
    """
    span = cfg.duration - cfg.burn_in
    edges = [cfg.burn_in + span * j / cfg.n_batches for j in range(1, cfg.n_batches)]
    edges.append(cfg.duration)
    marks = {t: set() for t in edges}
    marks.setdefault(cfg.burn_in, set()).add("burn")
    if cfg.snapshot_stride > 0:
        k = 1
        while True:
            t = k * cfg.snapshot_stride
            if t > cfg.duration * (1 + 1e-12):
                break
            marks.setdefault(min(t, cfg.duration), set()).add("snap")
            k += 1
    out = []
    for t in sorted(marks):
        if t <= 0:
            continue
        batch = -1 if t <= cfg.burn_in else min(bisect.bisect_left(edges, t), cfg.n_batches - 1)
        out.append((t, "snap" in marks[t], "burn" in marks[t], batch))
    return out


def _initial(params: ModelParams, cfg: SimConfig) -> np.ndarray:
    if cfg.initial_state is None:
        return np.zeros(params.n_sites, dtype=np.int64)
    q = np.asarray(cfg.initial_state, dtype=np.int64)
    if q.shape != (params.n_sites,) or q.min() < 0 or q.max() > params.c:
        raise ValueError("initial_state does not fit the model parameters")
    return q.copy()


def simulate(params: ModelParams, cfg: SimConfig) -> SimulationResult:
    """Run one trajectory; deterministic given ``(params, cfg)``."""
    n, c = params.n_sites, params.c
    rate = params.total_rate
    rng = make_rng(cfg.seed, cfg.stream)
    q = _initial(params, cfg)

    occ_time = np.zeros((n, c + 1))
    occ_steps = np.zeros((n, c + 1), dtype=np.int64)
    last = np.zeros(n, dtype=np.int64)
    bonds = np.zeros(max(n - 1, 0), dtype=np.int64)
    tallies = np.zeros(3, dtype=np.int64)
    b_elapsed = np.zeros(cfg.n_batches)
    b_acc = np.zeros(cfg.n_batches, dtype=np.int64)
    b_dep = np.zeros(cfg.n_batches, dtype=np.int64)
    b_cross = np.zeros(cfg.n_batches, dtype=np.int64)

    snap_t, snap_q = [], []
    rings = 0
    at_burn = int(q.sum()) if cfg.burn_in == 0 else None
    t_prev = 0.0
    for t, is_snap, is_burn, batch in _schedule(cfg):
        length = t - t_prev
        k = int(rng.poisson(rate * length))
        measure = t_prev >= cfg.burn_in
        if measure:
            before = (tallies[1], tallies[2], int(bonds.sum()))
        _ring(q, k, c, params.alpha, rate, rng, measure, occ_steps, last, bonds, tallies)
        if measure:
            rings += k
            _flush(q, k, occ_steps, last)
            occ_time += occ_steps * (length / (k + 1))
            occ_steps[:] = 0
            b_elapsed[batch] += length
            b_acc[batch] += tallies[1] - before[0]
            b_dep[batch] += tallies[2] - before[1]
            b_cross[batch] += int(bonds.sum()) - before[2]
        if is_burn:
            at_burn = int(q.sum())
        if is_snap:
            snap_t.append(t)
            snap_q.append(q.astype(np.uint8))
        t_prev = t

    counters = SimulationCounters(
        n_sites=n, c=c,
        arrivals_attempted=int(tallies[0]),
        arrivals_accepted=int(tallies[1]),
        departures=int(tallies[2]),
        bond_crossings=bonds,
        occupancy_time=occ_time,
        elapsed=float(b_elapsed.sum()),
        rings=rings,
        particles_at_burn_in=at_burn,
        particles_at_end=int(q.sum()),
        batch_elapsed=b_elapsed,
        batch_accepted=b_acc,
        batch_departures=b_dep,
        batch_crossings=b_cross,
    )
    trace = None
    if cfg.snapshot_stride > 0:
        states = np.array(snap_q, dtype=np.uint8).reshape(len(snap_q), n)
        trace = Trace(np.array(snap_t), states)
    return SimulationResult(SystemState(tuple(q.tolist()), c), counters, trace)


@njit(nogil=True, cache=True)
def _reachable(q) -> bool:
    n = q.shape[0]
    suffix = 0
    # smax[k] is the suffix maximum from k on
    smax = np.zeros(n + 1, dtype=np.int64)
    for k in range(n - 1, -1, -1):
        suffix = max(suffix, q[k])
        smax[k] = suffix
    pmin = q[0]
    for k in range(n - 1):
        pmin = min(pmin, q[k])
        if pmin < smax[k + 1] - 1:
            return False
    return True


@njit(nogil=True, cache=True)
def _audit(q, n_events, c, alpha, rate, rng):
    occ = np.zeros((1, 1), dtype=np.int64)
    last = np.zeros(1, dtype=np.int64)
    bonds = np.zeros(1, dtype=np.int64)
    tallies = np.zeros(3, dtype=np.int64)
    for e in range(n_events):
        _ring(q, 1, c, alpha, rate, rng, False, occ, last, bonds, tallies)
        if not _reachable(q):
            return e
    return -1


def audit_reachability(params: ModelParams, n_events: int, seed: int = 0, stream: int = 0):
    """Ring ``n_events`` bells from empty, checking reachability after each.

    Returns ``(final, first_bad)`` where ``first_bad`` is the index of the
    first offending event or None.
    """
    q = np.zeros(params.n_sites, dtype=np.int64)
    bad = _audit(q, int(n_events), params.c, params.alpha, params.total_rate,
                 make_rng(seed, stream))
    return SystemState(tuple(q.tolist()), params.c), (None if bad < 0 else int(bad))


def simulate_batch(jobs, n_jobs: int = 1) -> list:
    """Run independent ``(params, cfg)`` jobs, results in job order.

    The ring kernel releases the GIL, so threads give real parallelism.
    """
    jobs = list(jobs)
    if n_jobs <= 1 or len(jobs) <= 1:
        return [simulate(p, cfg) for p, cfg in jobs]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(lambda job: simulate(*job), jobs))


@dataclass(frozen=True)
class FluxEstimates:
    phi_entry: float
    phi_entry_vacancy: float  # alpha * P{Q_1 < c}
    phi_bond: np.ndarray
    phi_exit: float
    stderr: float             # batch-means standard error of phi_entry

    @property
    def phi_bond_mean(self) -> float:
        return float(self.phi_bond.mean()) if self.phi_bond.size else self.phi_entry


def _require_elapsed(counters: SimulationCounters):
    if not counters.elapsed > 0:
        raise ValueError("counters cover zero elapsed time")


def batch_stderr(counts: np.ndarray, elapsed: np.ndarray) -> float:
    """Standard error of the overall rate from per-batch counts."""
    if len(counts) < 2:
        return float("nan")
    rates = counts / elapsed
    return float(rates.std(ddof=1) / np.sqrt(len(rates)))


def flux_estimates(counters: SimulationCounters, alpha: float) -> FluxEstimates:
    _require_elapsed(counters)
    T = counters.elapsed
    return FluxEstimates(
        phi_entry=counters.arrivals_accepted / T,
        phi_entry_vacancy=alpha * counters.site1_below_c_time / T,
        phi_bond=counters.bond_crossings / T,
        phi_exit=counters.departures / T,
        stderr=batch_stderr(counters.batch_accepted, counters.batch_elapsed),
    )


def blocking_probability(counters: SimulationCounters) -> float:
    """Fraction of arrival bells that found site 1 full."""
    if counters.arrivals_attempted == 0:
        raise ValueError("no arrival attempts recorded")
    return (counters.arrivals_attempted - counters.arrivals_accepted) / counters.arrivals_attempted


def blocking_from_flux(counters: SimulationCounters, alpha: float) -> float:
    """Consistency value (alpha - phi) / alpha."""
    _require_elapsed(counters)
    return (alpha - counters.arrivals_accepted / counters.elapsed) / alpha


# coupled runs -----------------------------------------------------------------

SCENARIOS = ("alpha-coupling", "c-coupling", "monotone-pair", "impeded-pair")


@dataclass
class CoupledCounters:
    """Post-burn-in tallies of a coupled run.

    ``departures_by_class[k]`` counts class-(k+1) departures (for the pair
    scenarios index 0 is the lower/lagging process and 1 the upper/leading).
    """

    events: int
    elapsed: float
    departures_by_class: np.ndarray
    coupling: "CouplingCounters"

    def class_flux(self) -> np.ndarray:
        if not self.elapsed > 0:
            raise ValueError("counters cover zero elapsed time")
        return self.departures_by_class / self.elapsed


class CoupledResult(NamedTuple):
    finals: tuple
    counters: CoupledCounters
    violations: list  # (event index, message); empty when every check passed


def _plain_arrival(q, c):
    if q[0] < c:
        q[0] += 1
        return True
    return False


def _plain_bond(q, i):
    if q[i] > q[i + 1]:
        q[i] -= 1
        q[i + 1] += 1


def _plain_departure(q):
    if q[-1] > 0:
        q[-1] -= 1
        return True
    return False


def simulate_coupled(scenario: str, params: ModelParams, cfg: SimConfig, alpha_hat: float = None,
                     initial_upper=None, lag_rate: float = None, max_events: int = None,
                     check_every: int = 1) -> CoupledResult:
    """Run two coupled systems on one bell clock and audit their order.

    * ``alpha-coupling``: classes 1 and 2 arrive on bells of rate ``alpha``
      and ``alpha_hat - alpha``; the class-1 and combined projections are
      replayed as plain systems with rates alpha and alpha_hat.
    * ``c-coupling``: class 1 lives in ``c - 1`` floors, the combination in
      ``c``; both projections are replayed likewise.
    * ``monotone-pair``: the empty state and ``initial_upper`` share all bells;
      the coordinatewise order must persist.
    * ``impeded-pair``: the lagging copy gets its own arrival bell (rate
      ``lag_rate``, default alpha) and may not overtake the leader's entries;
      the suffix-sum order must persist.

    Pure Python and slow; meant for audits on small lattices.
    """
    from . import coupling as cp
    from .core import preceq

    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    n, c, alpha, beta = params.n_sites, params.c, params.alpha, params.beta
    rng = make_rng(cfg.seed, cfg.stream)
    extra = 0.0
    if scenario == "alpha-coupling":
        if alpha_hat is None or not alpha < alpha_hat <= 1.0:
            raise ValueError("alpha-coupling needs alpha < alpha_hat <= 1")
        extra = alpha_hat - alpha
    elif scenario == "c-coupling":
        if c < 2:
            raise ValueError("c-coupling needs c >= 2")
    elif scenario == "impeded-pair":
        extra = alpha if lag_rate is None else float(lag_rate)
        if extra <= 0:
            raise ValueError("lag_rate must be positive")
    upper0 = None
    if scenario == "monotone-pair" and initial_upper is not None:
        upper0 = [int(x) for x in initial_upper]
        if len(upper0) != n or min(upper0) < 0 or max(upper0) > c:
            raise ValueError("initial_upper does not fit the model parameters")
    if cfg.initial_state is not None and scenario in ("alpha-coupling", "c-coupling"):
        raise ValueError("multi-class scenarios start empty")

    rate = alpha + extra + (n - 1) + beta
    cc = cp.CouplingCounters()
    dep = np.zeros(2, dtype=np.int64)
    violations = []

    rows = [[0, 0] for _ in range(n)]
    low = list(cfg.initial_state) if cfg.initial_state is not None else [0] * n
    high = upper0 if upper0 is not None else list(low)
    sh1, sh2 = [0] * n, [0] * n
    cap1 = c - 1 if scenario == "c-coupling" else c
    entries = [0, 0]
    gone = [0, 0]

    t, events, measured = 0.0, 0, 0
    limit = max_events if max_events is not None else None
    while True:
        dt = rng.exponential(1.0 / rate)
        if t + dt > cfg.duration or (limit is not None and events >= limit):
            if t < cfg.duration and limit is None:
                cc.elapsed_time += cfg.duration - max(t, cfg.burn_in)
            break
        t_new = t + dt
        measure = t_new > cfg.burn_in
        if measure:
            cc.elapsed_time += t_new - max(t, cfg.burn_in)
        t = t_new
        events += 1
        u = rng.random() * rate
        if u < n - 1:
            i = int(u)
            if scenario in ("alpha-coupling", "c-coupling"):
                cp._bond_inplace(rows, i + 1)
                _plain_bond(sh1, i)
                _plain_bond(sh2, i)
            else:
                _plain_bond(low, i)
                _plain_bond(high, i)
        elif u < n - 1 + alpha:
            if scenario == "alpha-coupling":
                d_in, d_out = cp._alpha_arrival_inplace(rows, 1, c)
                _plain_arrival(sh1, c)
                _plain_arrival(sh2, c)
            elif scenario == "c-coupling":
                d_in, d_out = cp._c_arrival_inplace(rows, c)
                _plain_arrival(sh1, c - 1)
                _plain_arrival(sh2, c)
            elif scenario == "monotone-pair":
                d_in = d_out = 0
                _plain_arrival(low, c)
                _plain_arrival(high, c)
            else:
                d_in = d_out = 0
                entries[1] += _plain_arrival(high, c)
            if measure:
                cc.r2_in_events += d_in
                cc.r2_out_events += d_out
        elif u < n - 1 + alpha + extra:
            if scenario == "alpha-coupling":
                d_in, d_out = cp._alpha_arrival_inplace(rows, 2, c)
                _plain_arrival(sh2, c)
                if measure:
                    cc.r2_in_events += d_in
                    cc.r2_out_events += d_out
            elif entries[0] < entries[1]:
                entries[0] += _plain_arrival(low, c)
        else:
            if scenario in ("alpha-coupling", "c-coupling"):
                last = rows[-1]
                k = 0 if last[0] > 0 else 1 if last[1] > 0 else -1
                cp._departure_inplace(rows)
                _plain_departure(sh1)
                _plain_departure(sh2)
                if k >= 0 and measure:
                    dep[k] += 1
            else:
                d0 = _plain_departure(low)
                d1 = _plain_departure(high)
                gone[0] += d0
                gone[1] += d1
                if measure:
                    dep[0] += d0
                    dep[1] += d1
        if measure:
            measured += 1
        if events % check_every:
            continue
        if scenario in ("alpha-coupling", "c-coupling"):
            p1 = [r[0] for r in rows]
            p2 = [r[0] + r[1] for r in rows]
            if p1 != sh1 or p2 != sh2 or any(x > cap1 for x in p1):
                violations.append((events, "projection differs from its plain replay"))
        elif scenario == "monotone-pair":
            if any(a > b for a, b in zip(low, high)):
                violations.append((events, "coordinatewise order broken"))
        elif not preceq(low + [gone[0]], high + [gone[1]]):
            violations.append((events, "suffix-sum order broken"))

    if scenario in ("alpha-coupling", "c-coupling"):
        finals = (SystemState(tuple(r[0] for r in rows), c),
                  SystemState(tuple(r[0] + r[1] for r in rows), c))
    else:
        finals = (SystemState(tuple(low), c), SystemState(tuple(high), c))
    counters = CoupledCounters(measured, cc.elapsed_time, dep, cc)
    return CoupledResult(finals, counters, violations)
