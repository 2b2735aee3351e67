"""Priority-class couplings and order-preserving pair dynamics.

A multi-class state stores ``counts[n][k]``, the number of class-(k+1)
particles at site n+1 (class 1 has the highest priority). The rules below
are arranged so that every prefix projection ``Q^(<=k)`` evolves exactly as
a plain back-pressure system driven by the same bells.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import core
from .core import SystemState


@dataclass(frozen=True)
class MultiClassState:
    counts: tuple  # N rows of L non-negative ints

    def __post_init__(self):
        rows = tuple(tuple(int(x) for x in row) for row in self.counts)
        if not rows:
            raise ValueError("need at least one site")
        width = len(rows[0])
        if width < 1 or any(len(r) != width for r in rows):
            raise ValueError("every site needs the same number of classes")
        if any(x < 0 for r in rows for x in r):
            raise ValueError("class counts must be non-negative")
        object.__setattr__(self, "counts", rows)

    @classmethod
    def empty(cls, n_sites: int, n_classes: int) -> "MultiClassState":
        return cls(((0,) * n_classes,) * n_sites)

    @property
    def n_sites(self) -> int:
        return len(self.counts)

    @property
    def n_classes(self) -> int:
        return len(self.counts[0])

    def prefix(self, k: int) -> tuple:
        """Per-site totals of classes 1..k."""
        return tuple(sum(row[:k]) for row in self.counts)

    def projection(self, k: int, capacity: int) -> SystemState:
        return SystemState(self.prefix(k), capacity)

    def class_totals(self) -> tuple:
        return tuple(sum(row[k] for row in self.counts) for k in range(self.n_classes))


@dataclass
class CouplingCounters:
    """Class-2 traffic through site 1 (additions and removals there)."""

    r2_in_events: int = 0
    r2_out_events: int = 0
    elapsed_time: float = 0.0

    def add(self, other: "CouplingCounters") -> None:
        self.r2_in_events += other.r2_in_events
        self.r2_out_events += other.r2_out_events
        self.elapsed_time += other.elapsed_time


def _mutable(state: MultiClassState) -> list:
    return [list(row) for row in state.counts]


def _frozen(rows: list) -> MultiClassState:
    return MultiClassState(tuple(tuple(r) for r in rows))


def _bond_inplace(rows: list, n: int) -> None:
    i = n - 1
    left, right = rows[i], rows[i + 1]
    n_classes = len(left)
    before = []
    acc = 0
    for k in range(n_classes):
        acc += left[k]
        before.append(acc)
    for k in range(n_classes):
        now_left = sum(left[: k + 1])
        if now_left != before[k] or now_left <= sum(right[: k + 1]):
            continue
        if left[k] == 0:
            raise AssertionError("priority rule asked to move an absent particle")
        left[k] -= 1
        right[k] += 1
        for i2 in range(k + 1, n_classes):
            if right[i2] > 0:
                right[i2] -= 1
                left[i2] += 1
                break


def mc_bond_step(state: MultiClassState, n: int) -> MultiClassState:
    """Bond bell (n, n+1) for the priority-class process.

    Classes are processed in priority order. Class k moves one particle
    right when the prefix total ``Q_n^(<=k)`` is unchanged by the bell so
    far and exceeds ``Q_{n+1}^(<=k)``; each such move sends one particle of
    the smallest lower-priority class present at n+1 back to n.
    """
    if not 1 <= n <= state.n_sites - 1:
        raise ValueError(f"bond index {n} outside 1..{state.n_sites - 1}")
    rows = _mutable(state)
    _bond_inplace(rows, n)
    return _frozen(rows)


def _departure_inplace(rows: list) -> bool:
    last = rows[-1]
    for k, x in enumerate(last):
        if x > 0:
            last[k] -= 1
            return True
    return False


def mc_departure(state: MultiClassState) -> tuple:
    """Departure bell: the highest-priority particle at site N leaves."""
    rows = _mutable(state)
    left = _departure_inplace(rows)
    return _frozen(rows), left


def _arrival_inplace(rows: list, k: int, c: int) -> tuple:
    """Class-(k+1) arrival; returns (entered, displaced class index or -1)."""
    site = rows[0]
    prefix = 0
    sums = []
    for x in site:
        prefix += x
        sums.append(prefix)
    if sums[k] >= c:
        return False, -1
    displaced = -1
    for j in range(k + 1, len(site)):
        if sums[j] >= c:
            displaced = j
            break
    site[k] += 1
    if displaced >= 0:
        site[displaced] -= 1
    return True, displaced


def mc_arrival(state: MultiClassState, k: int, c: int) -> tuple:
    """Arrival bell of class k (1-based) at site 1 with capacity ``c``.

    The particle enters iff ``Q_1^(<=k) < c``. If some lower-priority prefix
    is already at capacity, one particle of the first such class is forced
    out, so that every projection ``Q^(<=j)``, j >= k, sees an ordinary
    (possibly blocked) arrival. Returns ``(state, entered, displaced_class)``
    with ``displaced_class`` 1-based or 0.
    """
    if not 1 <= k <= state.n_classes:
        raise ValueError(f"class {k} outside 1..{state.n_classes}")
    rows = _mutable(state)
    entered, displaced = _arrival_inplace(rows, k - 1, c)
    return _frozen(rows), entered, displaced + 1


def _alpha_arrival_inplace(rows: list, which: int, c: int) -> tuple:
    entered, displaced = _arrival_inplace(rows, which - 1, c)
    d_in = 1 if (which == 2 and entered) else 0
    d_out = 1 if displaced == 1 else 0
    return d_in, d_out


def alpha_coupling_arrival(state: MultiClassState, which: int, c: int) -> tuple:
    """Arrival in the (alpha, c) / (alpha_hat, c) coupling.

    ``which`` is 1 for the class-1 bell (rate alpha) or 2 for the class-2
    bell (rate alpha_hat - alpha). A class-1 entry into a full site 1 forces
    one class-2 particle out.
    """
    if state.n_classes != 2 or which not in (1, 2):
        raise ValueError("alpha coupling uses two classes and bells 1 or 2")
    rows = _mutable(state)
    d_in, d_out = _alpha_arrival_inplace(rows, which, c)
    return _frozen(rows), CouplingCounters(d_in, d_out)


def _c_arrival_inplace(rows: list, c: int) -> tuple:
    site = rows[0]
    q1, q2 = site
    if q1 < c - 1:
        site[0] += 1
        if q1 + q2 == c:
            site[1] -= 1
            return 0, 1
        if q1 + q2 == c - 1:
            # removal and re-addition of a class-2 particle, counted both ways
            return 1, 1
        return 0, 0
    if q1 == c - 1 and q2 == 0:
        site[1] += 1
        return 1, 0
    return 0, 0


def c_coupling_arrival(state: MultiClassState, c: int) -> tuple:
    """Arrival in the (alpha, c-1) / (alpha, c) coupling.

    Class 1 follows the (c-1)-floor system; the combined process follows the
    c-floor system. r2_in counts arrivals while ``Q_1^(<=2) = c-1``, r2_out
    arrivals while ``Q_1^(1) < c-1`` and ``Q_1^(<=2) >= c-1``.
    """
    if state.n_classes != 2 or c < 2:
        raise ValueError("c coupling uses two classes and c >= 2")
    rows = _mutable(state)
    d_in, d_out = _c_arrival_inplace(rows, c)
    return _frozen(rows), CouplingCounters(d_in, d_out)


def monotone_pair_step(q_low: SystemState, q_high: SystemState, event) -> tuple:
    """Apply one shared bell to an ordered pair ``q_low <= q_high``."""
    if not core.leq(q_low, q_high):
        raise ValueError("monotone pair requires q_low <= q_high")
    low, _ = core.apply_event(q_low, event)
    high, _ = core.apply_event(q_high, event)
    return low, high


@dataclass(frozen=True)
class ImpededPair:
    """A lagging process ``q`` and a leading process ``lead`` on shared bonds.

    ``entries`` count particles that actually entered site 1; ``departed``
    count particles that left site N. The order is checked on states extended
    by a sink site holding the departed particles, which keeps the suffix-sum
    comparison meaningful on a finite lattice.
    """

    q: SystemState
    lead: SystemState
    entries: int = 0
    entries_lead: int = 0
    departed: int = 0
    departed_lead: int = 0

    @classmethod
    def start(cls, q: SystemState, lead: SystemState) -> "ImpededPair":
        return cls(q, lead)

    def ordered(self) -> bool:
        a = self.q.q + (self.departed,)
        b = self.lead.q + (self.departed_lead,)
        return core.preceq(a, b)


def impeded_pair_step(pair: ImpededPair, event) -> ImpededPair:
    """Advance an impeded pair by one element of its driving stream.

    Events: ``"arrival_lead"`` (attempt at the leading process),
    ``"arrival_lag"`` (attempt at the lagging process; allowed only while it
    has strictly fewer entries), ``"departure"`` (shared), and
    ``("bond", n)`` or ``("bond", n, True)`` where the trailing flag disables
    the bell for the lagging process only.
    """
    if not pair.ordered():
        raise ValueError("impeded pair requires q preceq lead")
    q, lead = pair.q, pair.lead
    e, el, d, dl = pair.entries, pair.entries_lead, pair.departed, pair.departed_lead
    if event == "arrival_lead":
        lead, ok = core.apply_arrival(lead)
        el += ok
    elif event == "arrival_lag":
        if e >= el:
            raise ValueError("lagging arrivals may not overtake the leading stream")
        q, ok = core.apply_arrival(q)
        e += ok
    elif event == "departure":
        q, ok = core.apply_departure(q)
        d += ok
        lead, ok = core.apply_departure(lead)
        dl += ok
    elif event[0] == "bond":
        disabled = len(event) > 2 and event[2]
        lead, _ = core.apply_bond(lead, event[1])
        if not disabled:
            q, _ = core.apply_bond(q, event[1])
    else:
        raise ValueError(f"unknown event {event!r}")
    return ImpededPair(q, lead, e, el, d, dl)


def class_rate_estimates(counters: CouplingCounters) -> tuple:
    if not counters.elapsed_time > 0:
        raise ValueError("elapsed time must be positive")
    T = counters.elapsed_time
    return counters.r2_in_events / T, counters.r2_out_events / T
