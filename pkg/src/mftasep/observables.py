"""Steady-state statistics computed from counters and snapshot traces."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .engine import SimulationCounters, Trace

THETA_FLOOR = 0.99
THETA_MIX = 0.01
TRIM = 0.10
LARGE_ZONE_SIZE = 0.05
STABLE_ZONE_SD = 0.05


@dataclass(frozen=True)
class DensityProfile:
    """Time-averaged occupancy per site.

    ``rho[n]`` is the mean number of particles at site n+1 and
    ``level_occupation[n, k]`` the fraction of time it held exactly k.
    """

    rho: np.ndarray
    level_occupation: np.ndarray

    @property
    def n_sites(self) -> int:
        return len(self.rho)

    @property
    def c(self) -> int:
        return self.level_occupation.shape[1] - 1

    def vacancy(self) -> np.ndarray:
        return self.c - self.rho

    def flipped(self) -> "DensityProfile":
        """Right-side view: sites relabelled n -> N - n + 1, particles <-> holes."""
        levels = self.level_occupation[::-1, ::-1].copy()
        return DensityProfile(self.c - self.rho[::-1], levels)

    @classmethod
    def from_states(cls, states: np.ndarray, c: int) -> "DensityProfile":
        """Equal-weight average over snapshot rows."""
        states = np.asarray(states)
        levels = np.stack([(states == k).mean(axis=0) for k in range(c + 1)], axis=1)
        return cls(states.mean(axis=0).astype(float), levels)


def density_profile(counters: SimulationCounters) -> DensityProfile:
    if not counters.elapsed > 0:
        raise ValueError("counters cover zero elapsed time")
    levels = counters.occupancy_time / counters.elapsed
    rho = levels @ np.arange(counters.c + 1)
    return DensityProfile(rho, levels)


def _window(window, n_sites: int) -> np.ndarray:
    lo, hi = window
    lo, hi = max(int(lo), 1), min(int(hi), n_sites)
    if hi < lo:
        raise ValueError(f"empty site window {window}")
    return np.arange(lo - 1, hi)


def window_density(profile: DensityProfile, window) -> float:
    """Mean occupancy over 1-based inclusive site range ``window``."""
    return float(profile.rho[_window(window, profile.n_sites)].mean())


def boundary_positions(states: np.ndarray, c: int) -> np.ndarray:
    """``A_m`` for every snapshot row: shape (K, c + 1), column 0 holding N."""
    states = np.asarray(states)
    k, n = states.shape
    out = np.empty((k, c + 1), dtype=np.int64)
    out[:, 0] = n
    for m in range(1, c + 1):
        below = states < m
        first = np.where(below.any(axis=1), below.argmax(axis=1), n)
        out[:, m] = first
    return out


@dataclass(frozen=True)
class ZoneStatistics:
    """Normalized zone geometry averaged over snapshots.

    ``mean_a[m]``/``var_a[m]`` describe ``A_m / N`` (index 0 is always 1).
    ``zone_sizes``, ``zone_left``, ``zone_right`` are indexed by floor m - 1;
    the top-floor zone starts at site 1.
    """

    c: int
    n_sites: int
    mean_a: np.ndarray
    var_a: np.ndarray
    zone_sizes: np.ndarray
    zone_size_sd: np.ndarray
    zone_left: np.ndarray
    zone_right: np.ndarray
    boundary_sd: np.ndarray
    n_snapshots: int

    def classification(self, m: int) -> str:
        """``large stable``, ``large`` or ``vanishing`` for the floor-m zone."""
        size = self.zone_sizes[m - 1]
        if size < LARGE_ZONE_SIZE:
            return "vanishing"
        if self.boundary_sd[m - 1] <= STABLE_ZONE_SD:
            return "large stable"
        return "large"

    def large_stable_floors(self) -> list:
        return [m for m in range(1, self.c + 1) if self.classification(m) == "large stable"]

    def large_floors(self) -> list:
        return [m for m in range(1, self.c + 1) if self.classification(m) != "vanishing"]

    def zone_range(self, m: int) -> tuple:
        """Mean extent of the floor-m zone as a 1-based inclusive site range."""
        lo = int(round(self.zone_left[m - 1] * self.n_sites)) + 1
        hi = int(round(self.zone_right[m - 1] * self.n_sites))
        return lo, hi


def zone_statistics(states, c: int) -> ZoneStatistics:
    """Aggregate per-snapshot zone decompositions.

    ``states`` is a snapshot array (K, N) or a :class:`Trace`. Rows are taken
    as reachable states; a row violating the reachability condition raises.
    """
    if isinstance(states, Trace):
        states = states.states
    states = np.asarray(states)
    if states.ndim != 2 or states.shape[0] == 0:
        raise ValueError("zone statistics need at least one snapshot")
    _check_reachable(states)
    n = states.shape[1]
    a = boundary_positions(states, c) / n
    left = np.concatenate([a[:, 1:c], np.zeros((len(a), 1))], axis=1)   # floor m starts after A_m
    right = a[:, 0:c]                                                   # and ends at A_{m-1}
    sizes = right - left
    # a zone is pinned by whichever of its ends moves; report the larger spread
    sd = np.maximum(left.std(axis=0), right.std(axis=0))
    return ZoneStatistics(
        c=c, n_sites=n,
        mean_a=a.mean(axis=0), var_a=a.var(axis=0),
        zone_sizes=sizes.mean(axis=0), zone_size_sd=sizes.std(axis=0),
        zone_left=left.mean(axis=0), zone_right=right.mean(axis=0),
        boundary_sd=sd, n_snapshots=len(a),
    )


def _check_reachable(states: np.ndarray):
    s = states.astype(np.int64)
    prefix_min = np.minimum.accumulate(s, axis=1)
    suffix_max = np.maximum.accumulate(s[:, ::-1], axis=1)[:, ::-1]
    if np.any(prefix_min[:, :-1] < suffix_max[:, 1:] - 1):
        raise ValueError("snapshot violates the reachability condition")


@dataclass(frozen=True)
class FloorEstimate:
    floor: Optional[int]
    at_least: np.ndarray   # per floor m (index m-1): min over window of P{Q_n >= m-1}
    mixing: np.ndarray     # per floor m: max over window of min(P{Q_n = m}, P{Q_n = m-1})
    theta_floor: float
    theta_mix: float

    @property
    def ok(self) -> bool:
        return self.floor is not None


def effective_floor_estimate(profile: DensityProfile, window, theta_floor=THETA_FLOOR,
                             theta_mix=THETA_MIX) -> FloorEstimate:
    """Largest floor m whose lower floors stay filled and which visibly mixes.

    Over the window every site must hold at least m - 1 particles for more
    than ``theta_floor`` of the time, and some site must spend at least
    ``theta_mix`` of the time at each of the levels m - 1 and m. ``floor``
    is ``None`` when no floor qualifies (for example an always-empty trace).
    """
    idx = _window(window, profile.n_sites)
    lv = profile.level_occupation[idx]
    c = profile.c
    at_least = np.empty(c)
    mixing = np.empty(c)
    for m in range(1, c + 1):
        at_least[m - 1] = lv[:, m - 1:].sum(axis=1).min()
        mixing[m - 1] = np.minimum(lv[:, m], lv[:, m - 1]).max()
    floor = None
    for m in range(c, 0, -1):
        if at_least[m - 1] > theta_floor and mixing[m - 1] >= theta_mix:
            floor = m
            break
    return FloorEstimate(floor, at_least, mixing, theta_floor, theta_mix)


def dominant_zone(profile: DensityProfile, m: int) -> Optional[tuple]:
    """Longest run of sites whose mean occupancy lies in the floor-m band (m-1, m]."""
    band = np.clip(np.ceil(profile.rho - 1e-9), 1, profile.c).astype(int) == m
    best, start = None, None
    for i, flag in enumerate(np.append(band, False)):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if best is None or i - start > best[1] - best[0] + 1:
                best = (start + 1, i)
            start = None
    return best


def bulk_density(profile: DensityProfile, m: int, trim: float = TRIM, zone=None) -> float:
    """On-floor density ``rho - (m - 1)`` averaged over the trimmed floor-m zone.

    ``zone`` is a 1-based inclusive site range; by default the longest run
    of sites whose mean occupancy falls in the floor-m band is used.
    """
    if zone is None:
        zone = dominant_zone(profile, m)
        if zone is None:
            raise ValueError(f"no floor-{m} zone in profile")
    lo, hi = zone
    cut = int(np.floor(trim * (hi - lo + 1)))
    lo, hi = lo + cut, hi - cut
    if hi < lo:
        raise ValueError(f"floor-{m} zone {zone} is empty after trimming")
    return float(np.mean(profile.rho[lo - 1:hi] - (m - 1)))


@dataclass(frozen=True)
class BernoulliReport:
    gamma: float
    marginals: np.ndarray
    marginal_dev: np.ndarray
    pair_cov: np.ndarray
    max_marginal_dev: float
    max_pair_dev: float
    n_samples: int


def bernoulli_compare(samples, gamma: float) -> BernoulliReport:
    """Compare on-floor 0/1 samples (rows = time, cols = sites) with i.i.d. Bernoulli(gamma).

    Reports per-site marginal deviations and nearest-neighbour covariances,
    which vanish for a product measure.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[1] < 2 or x.shape[0] < 2:
        raise ValueError("need a (time, site) array with at least two of each")
    p = x.mean(axis=0)
    joint = (x[:, :-1] * x[:, 1:]).mean(axis=0)
    cov = joint - p[:-1] * p[1:]
    dev = np.abs(p - gamma)
    return BernoulliReport(gamma, p, dev, cov, float(dev.max()), float(np.abs(cov).max()), x.shape[0])


def on_floor(states: np.ndarray, m: int, window) -> np.ndarray:
    """Floor-m indicator ``Q_n - (m - 1)`` clipped to {0, 1} over a site window."""
    idx = _window(window, np.asarray(states).shape[1])
    return np.clip(np.asarray(states)[:, idx].astype(np.int64) - (m - 1), 0, 1)
