"""Ground truth and conjecture machinery.

* the single-floor flux law and an exact stationary solver for tiny systems;
* flux providers that supply ``phi(rate, floors)`` with an error bar and a
  provenance tag (closed form, frozen table or large-N simulation);
* the max-min flux ``zeta``, the floor thresholds ``c_alpha`` and the
  zone-structure predictions built on them;
* a bisection estimate of the threshold rate ``alpha*_c``.

Predictions from :func:`classify_case` are conjectural and labelled so.
"""

from __future__ import annotations

import dataclasses
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import core
from .core import ModelParams, SystemState

QUARTER = 0.25
EPS_FLUX = 0.005
DENSITY_TOL = 0.005
TIE_SIGMAS = 3.0
DEFAULT_CAP = 200_000
INFINITE_FLOORS = math.inf


def phi_single_floor(alpha: float) -> float:
    """Limiting flux of the one-floor system with arrival rate ``alpha`` and beta = 1."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return alpha * (1.0 - alpha) if alpha <= 0.5 else QUARTER


def density_for_flux(flux: float) -> float:
    """Root ``gamma <= 1/2`` of ``gamma (1 - gamma) = flux``."""
    if not 0.0 <= flux <= QUARTER + 1e-12:
        raise ValueError(f"flux {flux} outside [0, 1/4]")
    return 0.5 * (1.0 - math.sqrt(max(0.0, 1.0 - 4.0 * flux)))


# exact stationary solve -------------------------------------------------------

class StateSpaceTooLarge(ValueError):
    def __init__(self, count: int, cap: int):
        super().__init__(f"reachable state count exceeds cap {cap} (reached {count})")
        self.count = count
        self.cap = cap


@dataclass(frozen=True)
class ExactSolution:
    params: ModelParams
    states: list            # occupancy tuples, index-aligned with pi
    pi: np.ndarray
    flux_entry: float
    flux_bonds: np.ndarray
    flux_exit: float

    @property
    def flux(self) -> float:
        return self.flux_entry

    def flux_spread(self) -> float:
        """Largest disagreement among the N + 1 flux expressions."""
        all_ = np.concatenate([[self.flux_entry, self.flux_exit], self.flux_bonds])
        return float(all_.max() - all_.min())

    def probability(self, q) -> float:
        return float(self.pi[self.states.index(tuple(q))])

    def marginals(self) -> np.ndarray:
        """``P{Q_n = k}`` as an N x (c + 1) array."""
        c, n = self.params.c, self.params.n_sites
        out = np.zeros((n, c + 1))
        for s, p in zip(self.states, self.pi):
            out[np.arange(n), list(s)] += p
        return out


def _transitions(q: tuple, c: int):
    n = len(q)
    if q[0] < c:
        yield "arrival", (q[0] + 1,) + q[1:]
    for i in range(n - 1):
        if q[i] > q[i + 1]:
            yield i, q[:i] + (q[i] - 1, q[i + 1] + 1) + q[i + 2:]
    if q[-1] > 0:
        yield "departure", q[:-1] + (q[-1] - 1,)


def reachable_states(n_sites: int, c: int, cap: int = DEFAULT_CAP) -> list:
    """Breadth-first closure of the empty state under the three bell maps."""
    start = (0,) * n_sites
    seen = {start: 0}
    order = [start]
    todo = deque([start])
    while todo:
        q = todo.popleft()
        for _, t in _transitions(q, c):
            if t not in seen:
                if len(seen) >= cap:
                    raise StateSpaceTooLarge(len(seen) + 1, cap)
                seen[t] = len(order)
                order.append(t)
                todo.append(t)
    return order


def exact_stationary(params: ModelParams, cap: int = DEFAULT_CAP) -> ExactSolution:
    """Stationary law of the finite system by a sparse direct solve.

    The balance equations ``pi G = 0`` are solved with one equation replaced
    by the normalization ``sum(pi) = 1``.
    """
    c, n = params.c, params.n_sites
    states = reachable_states(n, c, cap)
    index = {s: i for i, s in enumerate(states)}
    rows, cols, vals = [], [], []
    for i, q in enumerate(states):
        for kind, t in _transitions(q, c):
            rate = params.alpha if kind == "arrival" else params.beta if kind == "departure" else 1.0
            j = index[t]
            rows += [i, i]
            cols += [j, i]
            vals += [rate, -rate]
    m = len(states)
    gen_t = sp.csr_matrix((vals, (cols, rows)), shape=(m, m)).tolil()
    gen_t[0, :] = np.ones(m)
    rhs = np.zeros(m)
    rhs[0] = 1.0
    if m == 1:
        pi = np.ones(1)
    else:
        pi = spla.spsolve(gen_t.tocsc(), rhs)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()

    arr = np.array(states, dtype=np.int64)
    entry = params.alpha * float(pi[arr[:, 0] < c].sum())
    bonds = np.array([float(pi[arr[:, k] > arr[:, k + 1]].sum()) for k in range(n - 1)])
    exit_ = params.beta * float(pi[arr[:, -1] > 0].sum())
    return ExactSolution(params, states, pi, entry, bonds, exit_)


# flux providers ---------------------------------------------------------------

@dataclass(frozen=True)
class FluxValue:
    """``phi(rate, floors)`` with an error bar.

    ``plateau`` states whether the value sits at the maximal flux 1/4; when a
    provider leaves it ``None`` the ``EPS_FLUX`` band decides.
    """

    value: float
    stderr: float = 0.0
    provenance: str = "closed-form"
    plateau: Optional[bool] = None
    density: Optional[float] = None
    note: str = ""

    def is_plateau(self, eps: float = EPS_FLUX) -> bool:
        if self.plateau is not None:
            return self.plateau
        return self.value >= QUARTER - eps


FluxProvider = Callable[[float, int], FluxValue]


def closed_form_flux(rate: float, floors: int) -> FluxValue:
    """Values fixed without simulation.

    One floor follows the single-floor law. With two or more floors a rate of
    at least 1/2 already saturates the first floor, and flux is monotone in
    the floor count, so the value is 1/4. Anything else raises ``LookupError``.
    """
    if floors < 1:
        raise ValueError("floors must be >= 1")
    if floors == 1:
        return FluxValue(phi_single_floor(rate), 0.0, "closed-form", plateau=rate >= 0.5)
    if rate >= 0.5:
        return FluxValue(QUARTER, 0.0, "closed-form", plateau=True)
    raise LookupError(f"no closed form for phi({rate}, {floors})")


class FluxTable:
    """Frozen or accumulated ``phi(rate, floors)`` entries with monotone inference.

    Lookups try an exact entry, then the closed form, then a plateau inferred
    from a plateau entry with fewer floors or a smaller rate (flux is
    non-decreasing in both). Missing entries go to ``fallback`` if given.
    """

    def __init__(self, entries=None, fallback: Optional[FluxProvider] = None):
        self.entries: dict = {}
        self.fallback = fallback
        for key, val in (entries or {}).items():
            self.add(*key, val)

    @staticmethod
    def _key(rate, floors):
        return (round(float(rate), 12), int(floors))

    def add(self, rate: float, floors: int, value) -> None:
        if not isinstance(value, FluxValue):
            value = float(value)
            value = FluxValue(value, 0.0, "table", plateau=value >= QUARTER - 1e-12)
        self.entries[self._key(rate, floors)] = value

    def _inferred(self, rate, floors) -> Optional[FluxValue]:
        for (r, k), v in self.entries.items():
            if v.is_plateau() and r <= rate and k <= floors:
                return FluxValue(QUARTER, 0.0, f"inferred from phi({r}, {k})", plateau=True)
        return None

    def __call__(self, rate: float, floors: int) -> FluxValue:
        key = self._key(rate, floors)
        if key in self.entries:
            return self.entries[key]
        try:
            return closed_form_flux(rate, floors)
        except LookupError:
            pass
        hit = self._inferred(rate, floors)
        if hit is not None:
            return hit
        if self.fallback is None:
            raise LookupError(f"phi({rate}, {floors}) not in table")
        val = self.fallback(rate, floors)
        self.entries[key] = val
        return val

    def violations(self, sigmas: float = TIE_SIGMAS) -> list:
        """Entries breaking range or monotonicity in floors beyond ``sigmas`` errors."""
        bad = []
        for (r, k), v in self.entries.items():
            if not -1e-12 <= v.value <= QUARTER + sigmas * v.stderr + 1e-12:
                bad.append(((r, k), "out of range"))
            up = self.entries.get((r, k + 1))
            if up is not None and up.value < v.value - sigmas * math.hypot(v.stderr, up.stderr):
                bad.append(((r, k), "decreases with floors"))
        return bad


@dataclass(frozen=True)
class ProbeResult:
    rate: float
    floors: int
    flux: float
    stderr: float
    density: float
    density_stderr: float
    floor: Optional[int]
    plateau: bool
    resolved: bool


def left_window(n_sites: int) -> tuple:
    return max(1, int(0.05 * n_sites)), max(1, int(0.30 * n_sites))


def probe_flux(rate: float, floors: int, n_sites: int, duration: float, seed: int = 0,
               burn_frac: float = 0.3, density_tol: float = DENSITY_TOL, stream: int = 0) -> ProbeResult:
    """One beta = 1 run summarised by flux and left-window on-floor density.

    The effective floor of the window is estimated from the profile; the
    on-floor density there reaches 1/2 exactly when the flux has saturated.
    Its standard error comes from batch means over snapshot rows.
    """
    from .engine import SimConfig, flux_estimates, simulate
    from .observables import density_profile, effective_floor_estimate

    cfg = SimConfig(duration=duration, burn_in=burn_frac * duration, seed=seed,
                    snapshot_stride=duration / 400, stream=stream)
    res = simulate(ModelParams(rate, 1.0, floors, n_sites), cfg)
    est = flux_estimates(res.counters, rate)
    prof = density_profile(res.counters)
    lo, hi = left_window(n_sites)
    fl = effective_floor_estimate(prof, (lo, hi)).floor
    rho = prof.rho[lo - 1:hi]
    m = fl if fl is not None else int(np.clip(np.ceil(rho.mean()), 1, floors))
    density = float(rho.mean()) - (m - 1)

    snaps = res.trace.after(cfg.burn_in).states[:, lo - 1:hi].astype(float).mean(axis=1) - (m - 1)
    groups = np.array_split(snaps, 20)
    means = np.array([g.mean() for g in groups if len(g)])
    d_se = float(means.std(ddof=1) / math.sqrt(len(means))) if len(means) > 1 else math.inf
    plateau = density >= 0.5 - density_tol
    resolved = abs(density - (0.5 - density_tol)) > 2.0 * d_se
    return ProbeResult(rate, floors, est.phi_entry, est.stderr, density, d_se, fl, plateau, resolved)


class SimulationFluxProvider:
    """Large-N estimates of ``phi(rate, floors)`` from beta = 1 runs.

    Saturation is read off the on-floor density (within ``density_tol`` of
    1/2), because flux differences near 1/4 are quadratic in the density gap
    and drown in noise. Unsaturated values report the measured flux.
    """

    def __init__(self, n_sites: int = 1200, duration: Optional[float] = None, seed: int = 0,
                 burn_frac: float = 0.3, density_tol: float = DENSITY_TOL):
        self.n_sites = n_sites
        self.duration = duration if duration is not None else 2e9 / n_sites
        self.seed = seed
        self.burn_frac = burn_frac
        self.density_tol = density_tol
        self.probes: dict = {}

    def __call__(self, rate: float, floors: int) -> FluxValue:
        p = probe_flux(rate, floors, self.n_sites, self.duration, self.seed, self.burn_frac,
                       self.density_tol)
        self.probes[(rate, floors)] = p
        note = f"N={self.n_sites} duration={self.duration:g} seed={self.seed}"
        if p.plateau:
            return FluxValue(QUARTER, p.stderr, "simulated", True, p.density, note)
        return FluxValue(p.flux, p.stderr, "simulated", False, p.density, note)


def default_provider(**sim_kw) -> FluxTable:
    """Closed form where possible, otherwise cached simulation."""
    return FluxTable(fallback=SimulationFluxProvider(**sim_kw))


# conjecture -------------------------------------------------------------------

CASE_A, CASE_B, CASE_NEITHER = "A", "B", "neither"


@dataclass(frozen=True)
class ConjectureCase:
    """Conjectured limiting flux and zone structure for ``(alpha, beta, c)``.

    ``terms[l-1] = min(phi(alpha, c-l+1), phi(beta, l))``; ``l_star`` is the
    contiguous argmax range. Predicted zones are ``(floor, normalized size)``
    pairs and ``predicted_density`` maps floor to on-floor density.
    """

    alpha: float
    beta: float
    c: int
    zeta: float
    zeta_stderr: float
    l_star: tuple
    terms: tuple
    case: str = CASE_NEITHER
    predicted_zones: tuple = ()
    predicted_density: dict = field(default_factory=dict)
    limited_by: str = ""
    c_alpha: float = INFINITE_FLOORS
    c_beta: float = INFINITE_FLOORS
    provenance: tuple = ()
    label: str = "conjectured prediction"

    @property
    def l_star_set(self) -> list:
        return list(range(self.l_star[0], self.l_star[1] + 1))

    @property
    def predicted_floors(self) -> list:
        return [f for f, _ in self.predicted_zones]


def _terms(alpha, beta, c, phi):
    out = []
    for ell in range(1, c + 1):
        a = phi(alpha, c - ell + 1)
        b = phi(beta, ell)
        out.append((a, b))
    return out


def _min_term(a: FluxValue, b: FluxValue) -> FluxValue:
    if a.is_plateau() and b.is_plateau():
        return FluxValue(QUARTER, 0.0, a.provenance, plateau=True)
    return a if a.value <= b.value else b


def zeta(alpha: float, beta: float, c: int, phi: FluxProvider) -> ConjectureCase:
    """Max-min flux over the floor index and its argmax range.

    Terms whose difference from the maximum is within ``TIE_SIGMAS`` combined
    standard errors count as tied; two saturated terms tie exactly.
    """
    pairs = _terms(alpha, beta, c, phi)
    mins = [_min_term(a, b) for a, b in pairs]
    best = max(range(c), key=lambda i: (mins[i].is_plateau(), mins[i].value))
    top = mins[best]
    tied = []
    for i, t in enumerate(mins):
        if t.is_plateau() and top.is_plateau():
            tied.append(i)
        elif not top.is_plateau() and not t.is_plateau():
            if top.value - t.value <= TIE_SIGMAS * math.hypot(top.stderr, t.stderr) + 1e-12:
                tied.append(i)
    lo, hi = min(tied) + 1, max(tied) + 1
    prov = tuple(sorted({v.provenance for ab in pairs for v in ab}))
    value = QUARTER if top.is_plateau() else top.value
    return ConjectureCase(alpha, beta, c, value, top.stderr, (lo, hi),
                          tuple(m.value for m in mins), provenance=prov)


def c_alpha(alpha: float, phi: FluxProvider, c_max: int) -> float:
    """Fewest floors at which ``phi(alpha, .)`` saturates; ``inf`` if none up to ``c_max``."""
    if c_max < 1:
        raise ValueError("c_max must be >= 1")
    if alpha <= 0.25:
        return INFINITE_FLOORS
    for c in range(1, c_max + 1):
        if phi(alpha, c).is_plateau():
            return c
    return INFINITE_FLOORS


def classify_case(alpha: float, beta: float, c: int, phi: FluxProvider) -> ConjectureCase:
    """Case A (one zone on floor l*), case B (saturated, several zones) or neither."""
    base = zeta(alpha, beta, c, phi)
    ca = c_alpha(alpha, phi, c)
    cb = c_alpha(beta, phi, c)
    kw = dict(c_alpha=ca, c_beta=cb)
    if base.zeta == QUARTER and ca + cb - 1 <= c:
        floors = list(range(int(cb), int(c - ca + 1) + 1))
        size = 1.0 / len(floors)
        return _replace(base, case=CASE_B, predicted_zones=tuple((f, size) for f in floors),
                        predicted_density={f: 0.5 for f in floors}, **kw)
    lo, hi = base.l_star
    if lo == hi and base.zeta < QUARTER:
        a = phi(alpha, c - lo + 1)
        b = phi(beta, lo)
        gap = abs(a.value - b.value)
        if gap > TIE_SIGMAS * math.hypot(a.stderr, b.stderr) and not (a.is_plateau() and b.is_plateau()):
            gamma = density_for_flux(min(base.zeta, QUARTER))
            particles = a.value < b.value
            dens = gamma if particles else 1.0 - gamma
            return _replace(base, case=CASE_A, predicted_zones=((lo, 1.0),),
                            predicted_density={lo: dens},
                            limited_by="particles" if particles else "holes", **kw)
    return _replace(base, **kw)


def _replace(base: ConjectureCase, **kw) -> ConjectureCase:
    return dataclasses.replace(base, **kw)


# threshold rate ---------------------------------------------------------------

@dataclass(frozen=True)
class AlphaStarEstimate:
    c: int
    lo: float
    hi: float
    probes: tuple
    determinate: bool

    @property
    def estimate(self) -> float:
        return 0.5 * (self.lo + self.hi)


def estimate_alpha_star(c: int, n_sites: int = 600, duration: float = 6e5, tolerance: float = 0.01,
                        seed: int = 0, lo: float = 0.25, hi: float = 0.5,
                        probe: Optional[Callable] = None) -> AlphaStarEstimate:
    """Bisection bracket ``[lo, hi]`` for the saturation rate of the c-floor system.

    The endpoints are not probed: flux at rate 1/4 is strictly below 1/4 and
    rate 1/2 saturates every floor count. Each interior probe is a beta = 1
    run judged by :func:`probe_flux`. A probe whose density lies within two
    standard errors of the decision threshold marks the bracket indeterminate.
    """
    if c < 1:
        raise ValueError("c must be >= 1")
    if probe is None:
        def probe(rate, k, stream):
            return probe_flux(rate, c, n_sites, duration, seed=seed, stream=stream)
    done = []
    determinate = True
    k = 0
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        p = probe(mid, c, k)
        k += 1
        done.append(p)
        determinate &= p.resolved
        if p.plateau:
            hi = mid
        else:
            lo = mid
    return AlphaStarEstimate(c, lo, hi, tuple(done), determinate)
