"""Multi-floor totally asymmetric exclusion under the back-pressure hop rule.

Sites 1..N hold up to ``c`` particles each. Particles enter site 1 at rate
alpha (unless it is full), cross bond (n, n+1) at rate 1 whenever
``Q_n > Q_{n+1}`` and leave site N at rate beta.
"""

from .core import (ModelParams, SystemState, UnreachableStateError, ZoneDecomposition,
                   apply_arrival, apply_bond, apply_departure, apply_event,
                   check_reachability_invariant, leq, preceq, projections, zone_decomposition)
from .engine import (SimConfig, SimulationCounters, SimulationResult, Trace, blocking_probability,
                     audit_reachability, flux_estimates, simulate, simulate_batch, simulate_coupled)
from .observables import (DensityProfile, ZoneStatistics, bernoulli_compare, bulk_density,
                          density_profile, effective_floor_estimate, zone_statistics)
from .theory import (ConjectureCase, FluxTable, FluxValue, c_alpha, classify_case,
                     estimate_alpha_star, exact_stationary, phi_single_floor, zeta)

__version__ = "0.1.0"
