"""State representation and single-event rules of the multi-floor TASEP.

Sites are labelled 1..N in every public docstring and output; storage is a
0-based tuple. Everything here is pure: no randomness, no clock.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


class UnreachableStateError(ValueError):
    """Raised when a state violates the reachability condition Q-_n >= Q+_{n+1} - 1."""


@dataclass(frozen=True)
class ModelParams:
    """Rates and sizes of a finite system.

    alpha, beta are the arrival and departure bell rates, ``c`` the number of
    floors (per-site capacity), ``n_sites`` the lattice length N.
    """

    alpha: float
    beta: float
    c: int
    n_sites: int

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if int(self.c) != self.c or self.c < 1:
            raise ValueError(f"c must be an integer >= 1, got {self.c}")
        if int(self.n_sites) != self.n_sites or self.n_sites < 1:
            raise ValueError(f"n_sites must be an integer >= 1, got {self.n_sites}")

    @property
    def total_rate(self) -> float:
        """Sum of all bell rates: alpha + (N - 1) + beta."""
        return self.alpha + (self.n_sites - 1) + self.beta


@dataclass(frozen=True)
class SystemState:
    """Occupancy vector ``q`` (q[0] is site 1) of a system with ``c`` floors."""

    q: tuple
    c: int

    def __post_init__(self):
        q = tuple(int(x) for x in self.q)
        object.__setattr__(self, "q", q)
        if self.c < 1:
            raise ValueError("c must be >= 1")
        if not q:
            raise ValueError("a state needs at least one site")
        for n, x in enumerate(q, start=1):
            if not 0 <= x <= self.c:
                raise ValueError(f"q[{n}] = {x} outside 0..{self.c}")

    @classmethod
    def empty(cls, n_sites: int, c: int) -> "SystemState":
        return cls((0,) * n_sites, c)

    @classmethod
    def full(cls, n_sites: int, c: int) -> "SystemState":
        return cls((c,) * n_sites, c)

    @property
    def n_sites(self) -> int:
        return len(self.q)

    def __len__(self):
        return len(self.q)

    def __iter__(self):
        return iter(self.q)

    def __getitem__(self, i):
        return self.q[i]


@dataclass(frozen=True)
class ZoneDecomposition:
    """Zone boundaries ``a[0..c]`` with ``a[0] = N`` and ``a[m] = A_m``.

    The floor-m zone is sites ``a[m] + 1 .. a[m-1]`` for ``m < c`` and sites
    ``1 .. a[c-1]`` for the top floor (sites ``1..A_c`` are completely full and
    belong to the top-floor zone).
    """

    a: tuple
    c: int

    @property
    def n_sites(self) -> int:
        return self.a[0]

    def zone(self, m: int) -> range:
        """1-based site range of the floor-m zone (possibly empty)."""
        if not 1 <= m <= self.c:
            raise ValueError(f"floor {m} outside 1..{self.c}")
        lo = 0 if m == self.c else self.a[m]
        return range(lo + 1, self.a[m - 1] + 1)

    def zones(self) -> dict:
        return {m: self.zone(m) for m in range(1, self.c + 1)}

    def sizes(self) -> tuple:
        """Zone sizes indexed by floor 1..c (tuple position m-1)."""
        return tuple(len(self.zone(m)) for m in range(1, self.c + 1))


def _q(state) -> tuple:
    return state.q if isinstance(state, SystemState) else tuple(state)


def minorant(state) -> list:
    """Prefix minimum Q-_n = min_{k<=n} Q_k."""
    out, cur = [], None
    for x in _q(state):
        cur = x if cur is None else min(cur, x)
        out.append(cur)
    return out


def majorant(state) -> list:
    """Suffix maximum Q+_n = max_{k>=n} Q_k (sites beyond N count as empty)."""
    q = _q(state)
    out = [0] * len(q)
    cur = 0
    for i in range(len(q) - 1, -1, -1):
        cur = max(cur, q[i])
        out[i] = cur
    return out


def check_reachability_invariant(state) -> bool:
    """True iff Q-_n >= Q+_{n+1} - 1 for every n.

    This is the closed condition satisfied by every state reachable from the
    empty configuration.
    """
    lo = minorant(state)
    hi = majorant(state)
    return all(lo[i] >= hi[i + 1] - 1 for i in range(len(lo) - 1))


def apply_arrival(state: SystemState) -> tuple:
    """Arrival bell: add a particle at site 1 unless it holds ``c`` already."""
    q = state.q
    if q[0] < state.c:
        return SystemState((q[0] + 1,) + q[1:], state.c), True
    return state, False


def apply_bond(state: SystemState, n: int) -> tuple:
    """Bond bell between sites n and n+1 (1-based): move iff Q_n > Q_{n+1}."""
    q = state.q
    if not 1 <= n <= len(q) - 1:
        raise ValueError(f"bond index {n} outside 1..{len(q) - 1}")
    i = n - 1
    if q[i] > q[i + 1]:
        new = q[:i] + (q[i] - 1, q[i + 1] + 1) + q[i + 2:]
        return SystemState(new, state.c), True
    return state, False


def apply_departure(state: SystemState) -> tuple:
    """Departure bell: remove a particle from site N if there is one."""
    q = state.q
    if q[-1] > 0:
        return SystemState(q[:-1] + (q[-1] - 1,), state.c), True
    return state, False


def apply_event(state: SystemState, event) -> tuple:
    """Apply a bell given as ``"arrival"``, ``"departure"`` or ``("bond", n)``."""
    if event == "arrival":
        return apply_arrival(state)
    if event == "departure":
        return apply_departure(state)
    kind, n = event
    if kind != "bond":
        raise ValueError(f"unknown event {event!r}")
    return apply_bond(state, n)


def projections(state, c: int | None = None) -> tuple:
    """Return ``(b, a)`` dicts over floors m = 1..c.

    ``b[m]`` is the last site holding at least m particles and ``a[m]`` the
    end of the leading run of sites holding at least m; both are 0 when the
    defining set is empty.
    """
    q = _q(state)
    if c is None:
        c = state.c
    b, a = {}, {}
    for m in range(1, c + 1):
        last = 0
        for n, x in enumerate(q, start=1):
            if x >= m:
                last = n
        b[m] = last
        run = 0
        for x in q:
            if x < m:
                break
            run += 1
        a[m] = run
    return b, a


def zone_decomposition(state: SystemState) -> ZoneDecomposition:
    if not check_reachability_invariant(state):
        raise UnreachableStateError(f"state {state.q} is not reachable from empty")
    _, a = projections(state)
    return ZoneDecomposition((state.n_sites,) + tuple(a[m] for m in range(1, state.c + 1)), state.c)


def _check_same_length(qa: Sequence, qb: Sequence):
    if len(qa) != len(qb):
        raise ValueError(f"states have different lengths {len(qa)} and {len(qb)}")


def leq(state_a, state_b) -> bool:
    """Coordinatewise order Q <= Q'."""
    qa, qb = _q(state_a), _q(state_b)
    _check_same_length(qa, qb)
    return all(x <= y for x, y in zip(qa, qb))


def suffix_sums(state) -> list:
    q = _q(state)
    out = [0] * len(q)
    acc = 0
    for i in range(len(q) - 1, -1, -1):
        acc += q[i]
        out[i] = acc
    return out


def preceq(state_a, state_b) -> bool:
    """Suffix-sum order: sum_{k>=n} Q_k <= sum_{k>=n} Q'_k for every n."""
    qa, qb = _q(state_a), _q(state_b)
    _check_same_length(qa, qb)
    return all(x <= y for x, y in zip(suffix_sums(qa), suffix_sums(qb)))


def total_particles(state) -> int:
    return sum(_q(state))
