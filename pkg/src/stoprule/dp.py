"""Exact backward-induction solvers for the discrete observation models.

The running minimum (j, M_j) is a Markov chain; backward induction over its
lattice fills the stop table s(j,x) and continuation table v(j,x), the optimal
threshold at step j is the largest x with s(j,x) >= v(j,x), and the success
probability splits by first-passage mode of the chain into the stopping
region: by jump (a record lands below the threshold) or by drift (the rising
threshold overtakes the current minimum).

The jump mass at step j is P(M_{j-1} > b_j) * sum_{x <= b_j} P(X_j = x) s(j,x)
and the drift mass collects P(M_m = y) v(m, y) over the window b_m < y <=
b_{m+1}.  Both sums are evaluated in log space (gammaln differences), so no
intermediate product under/overflows even at n ~ 10^4, and their total is
checked against the independent backward-induction value.

For arbitrary monotone policies the same sums apply with v replaced by the
"stop at every future record below y" chain, which is what any monotone
threshold rule does after first passage.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .models import (
    BERNOULLI_PYRAMID,
    RECTANGULAR,
    TRIANGULAR,
    Decomposition,
    InvalidPolicyError,
    ObservationModel,
    ResourceLimitError,
    StateRangeError,
    ThresholdPolicy,
    UnsupportedModelError,
    ValueTables,
)

__all__ = [
    "DpSolution",
    "stop_value",
    "cont_value",
    "solve",
    "policy_value",
    "brute_force_oracle",
    "DEFAULT_MAX_N",
    "ENUMERATION_CAP",
]

DEFAULT_MAX_N = 10_000
ENUMERATION_CAP = 1_000_000
# Above this many lattice cells, value tables are not materialized by default.
TABLE_CELL_DEFAULT = 4_200_000
TABLE_CELL_CAP = 80_000_000
# Backward value and jump+drift sums must agree to this tolerance.
_CONSISTENCY_TOL = 1e-9


def _max_n() -> int:
    env = os.environ.get("STOPRULE_MAX_N")
    return int(env) if env else DEFAULT_MAX_N


@dataclass(frozen=True)
class DpSolution:
    """Solved instance: tables (when materialized), optimal policy, and the
    jump/drift decomposition of the optimal success probability."""

    model: ObservationModel
    tables: ValueTables | None
    policy: ThresholdPolicy
    decomposition: Decomposition

    def to_json(self) -> dict:
        out = {"model": self.model.to_json()}
        out.update(self.policy.to_json())
        out.update(self.decomposition.to_json())
        return out


# ---------------------------------------------------------------------------
# Lattice geometry adapters
# ---------------------------------------------------------------------------

class _TriLattice:
    """X_j uniform on {j, ..., n}; reachable record states j <= x <= n."""

    def __init__(self, n: int):
        self.n = n
        self.x_max = n
        self._lg = gammaln(np.arange(n + 3, dtype=float))

    def lo(self, j: int) -> int:
        return j

    def support_size(self, j: int) -> int:
        return self.n - j + 1

    def stop_col(self, j: int) -> np.ndarray:
        """s(j, x) = prod_{i=0}^{x-j-1} (n-x+1)/(n-j-i) for x in [j..n]."""
        n, lg = self.n, self._lg
        col = np.full(n + 1, np.nan)
        x = np.arange(j, n + 1)
        # Clip float overshoot from the lgamma differences (values are
        # probabilities, mathematically <= 1).
        col[j:] = np.minimum(
            np.exp((x - j - 1) * np.log(n - x + 1.0) + lg[n - x + 2] - lg[n - j + 1]),
            1.0,
        )
        return col

    def n_above(self, j: int, xs: np.ndarray) -> np.ndarray:
        """Count of support values of X_j strictly above x, for x >= j."""
        return self.n - xs

    def prob_min_gt(self, count: int, b: int) -> float:
        """P(min of the first `count` observations > b)."""
        if b <= 0 or count == 0:
            return 1.0
        if b >= self.n:
            return 0.0
        t = min(count, b)
        lg = self._lg
        return float(np.exp(t * math.log(self.n - b) - (lg[self.n + 1] - lg[self.n - t + 1])))

    def prob_min_ge(self, j: int, ys: np.ndarray) -> np.ndarray:
        """P(M_j >= y) for an integer vector y (entries may reach x_max + 1)."""
        n, lg = self.n, self._lg
        t = np.minimum(j, ys - 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.exp(t * np.log(n - ys + 1.0) - (lg[n + 1] - lg[n - t + 1]))
        out[ys <= 1] = 1.0
        out[ys > n] = 0.0
        return out


class _RectLattice:
    """X_j uniform on {1, ..., K}; record states 1 <= x <= K."""

    def __init__(self, n: int, k: int):
        self.n = n
        self.k = k
        self.x_max = k

    def lo(self, j: int) -> int:
        return 1

    def support_size(self, j: int) -> int:
        return self.k

    def stop_col(self, j: int) -> np.ndarray:
        """s(j, x) = ((K-x+1)/K)^(n-j)."""
        k = self.k
        col = np.full(k + 1, np.nan)
        x = np.arange(1, k + 1)
        col[1:] = np.exp((self.n - j) * (np.log(k - x + 1.0) - math.log(k)))
        return col

    def n_above(self, j: int, xs: np.ndarray) -> np.ndarray:
        return self.k - xs

    def prob_min_gt(self, count: int, b: int) -> float:
        if b <= 0 or count == 0:
            return 1.0
        if b >= self.k:
            return 0.0
        return ((self.k - b) / self.k) ** count

    def prob_min_ge(self, j: int, ys: np.ndarray) -> np.ndarray:
        frac = np.clip((self.k - ys + 1.0) / self.k, 0.0, 1.0)
        return frac ** j


def _lattice_for(model: ObservationModel):
    if model.kind == TRIANGULAR:
        return _TriLattice(model.n)
    if model.kind == RECTANGULAR:
        return _RectLattice(model.n, model.k)
    raise UnsupportedModelError(f"no lattice solver for {model.kind}")


# ---------------------------------------------------------------------------
# Unified backward pass with jump/drift accumulation
# ---------------------------------------------------------------------------

def _lattice_pass(lat, policy_ints: np.ndarray | None = None, want_tables: bool = False):
    """One backward sweep.  With policy_ints=None it solves for the optimal
    thresholds and returns (b, jump, drift, v0, stop_tab, cont_tab); with an
    integer policy it evaluates that rule exactly (v0 is then NaN and the
    continuation chain is "stop at every future record")."""
    n, x_max = lat.n, lat.x_max
    optimal = policy_ints is None
    b = np.zeros(n + 2, dtype=np.int64)
    b[n + 1] = x_max  # drift windows at m = n are empty either way
    jump_terms: list[float] = []
    drift_terms: list[float] = []
    stop_tab = cont_tab = None
    if want_tables:
        cells = (n + 1) * (x_max + 1)
        if cells > TABLE_CELL_CAP:
            raise ResourceLimitError(
                f"value tables need {cells} cells, above cap {TABLE_CELL_CAP}"
            )
        stop_tab = np.full((n + 1, x_max + 1), np.nan)
        cont_tab = np.full((n + 1, x_max + 1), np.nan)

    s_next = cont_next = None
    v0 = math.nan
    for j in range(n, 0, -1):
        lo = lat.lo(j)
        s_col = lat.stop_col(j)
        cont = np.zeros(x_max + 1)
        if j < n:
            lo1 = lat.lo(j + 1)
            size = lat.support_size(j + 1)
            if optimal:
                w = np.maximum(s_next[lo1:], cont_next[lo1:])
            else:
                w = s_next[lo1:]
            xs = np.arange(lo1, x_max + 1)
            cont[lo1:] = np.minimum(
                np.cumsum(w) / size + (lat.n_above(j + 1, xs) / size) * cont_next[lo1:],
                1.0,
            )

        if optimal:
            hit = np.nonzero(s_col[lo:] >= cont[lo:])[0]
            b[j] = lo + int(hit[-1])
        else:
            b[j] = policy_ints[j]

        bj = int(b[j])
        if bj >= lo:
            ssum = float(np.sum(s_col[lo : bj + 1]))
            pm = lat.prob_min_gt(j - 1, bj)
            jump_terms.append(pm * ssum / lat.support_size(j))

        if j < n:
            lo_w = max(bj + 1, 1)
            hi_w = min(int(b[j + 1]), x_max)
            if hi_w >= lo_w:
                ys = np.arange(lo_w, hi_w + 2)
                pge = lat.prob_min_ge(j, ys)
                pmass = pge[:-1] - pge[1:]
                drift_terms.append(float(np.dot(pmass, cont[lo_w : hi_w + 1])))

        if want_tables:
            stop_tab[j, lo:] = s_col[lo:]
            cont_tab[j, lo:] = cont[lo:]
        if j == 1 and optimal:
            w1 = np.maximum(s_col[lo:], cont[lo:])
            v0 = float(np.sum(w1)) / lat.support_size(1)
        s_next, cont_next = s_col, cont

    jump = math.fsum(jump_terms)
    drift = math.fsum(drift_terms)
    return b[1 : n + 1], jump, drift, v0, stop_tab, cont_tab


def _policy_to_ints(model: ObservationModel, policy: ThresholdPolicy) -> np.ndarray:
    lat = _lattice_for(model)
    ints = np.zeros(model.n + 1, dtype=np.int64)
    for j, t in enumerate(policy.thresholds, start=1):
        if t == math.inf:
            ints[j] = lat.x_max
        elif t == -math.inf:
            ints[j] = 0
        else:
            # clamp to [0, x_max]: anything below the support stops nothing
            ints[j] = min(max(int(math.floor(t)), 0), lat.x_max)
    return ints


# ---------------------------------------------------------------------------
# Scalar table access
# ---------------------------------------------------------------------------

def _check_state(model: ObservationModel, j: int, x: int):
    if model.kind == TRIANGULAR:
        if not (1 <= j <= model.n and j <= x <= model.n):
            raise StateRangeError(f"({j}, {x}) outside the triangular lattice for n={model.n}")
    elif model.kind == RECTANGULAR:
        if not (1 <= j <= model.n and 1 <= x <= model.k):
            raise StateRangeError(f"({j}, {x}) outside the rectangular lattice for K={model.k}")
    else:
        raise UnsupportedModelError(f"no lattice states for {model.kind}")


def stop_value(model: ObservationModel, j: int, x: int) -> float:
    """Probability that stopping at a record value x at step j succeeds."""
    _check_state(model, j, x)
    lat = _lattice_for(model)
    return float(lat.stop_col(j)[x])


@lru_cache(maxsize=4)
def _cached_tables(model: ObservationModel):
    lat = _lattice_for(model)
    cells = (model.n + 1) * (lat.x_max + 1)
    if cells > TABLE_CELL_CAP:
        raise ResourceLimitError(f"cont_value tables need {cells} cells, above cap")
    _, _, _, _, stop_tab, cont_tab = _lattice_pass(lat, want_tables=True)
    return stop_tab, cont_tab


def cont_value(model: ObservationModel, j: int, x: int) -> float:
    """Best achievable success probability after skipping state (j, x)."""
    _check_state(model, j, x)
    _, cont_tab = _cached_tables(model)
    return float(cont_tab[j, x])


# ---------------------------------------------------------------------------
# Bernoulli pyramid (two-valued ranks; no lattice)
# ---------------------------------------------------------------------------

def _pyramid_cutoff(n: int, p: float) -> int:
    """Smallest step from which stopping at a record is optimal:
    stop iff 1 - p >= (n - j) p, i.e. j >= n - (1-p)/p."""
    return max(1, n - math.floor((1.0 - p) / p + 1e-9))


def _pyramid_solve(model: ObservationModel) -> DpSolution:
    n, p = model.n, model.p
    c = _pyramid_cutoff(n, p)
    if c == 1:
        total = (1.0 - p) ** (n - 1)
        jump, drift = total, 0.0
    else:
        jump = p * (1.0 - p) ** (n - c)
        drift = (n - c) * p * (1.0 - p) ** (n - c)
        total = jump + drift
    thresholds = tuple([-math.inf] * (c - 1) + [math.inf] * (n - c + 1))
    return DpSolution(
        model=model,
        tables=None,
        policy=ThresholdPolicy(thresholds),
        decomposition=Decomposition(jump, drift, total),
    )


def _pyramid_policy_value(model: ObservationModel, policy: ThresholdPolicy) -> Decomposition:
    n, p = model.n, model.p
    bs = policy.thresholds
    # Record values are 1 at step 1 and 1/j afterwards; with nondecreasing
    # thresholds the stoppable steps form an upper range [c, n].
    c = None
    for j in range(1, n + 1):
        value = 1.0 if j == 1 else 1.0 / j
        if value <= bs[j - 1]:
            c = j
            break
    if c is None:
        return Decomposition(0.0, 0.0, 0.0)
    if c == 1:
        total = (1.0 - p) ** (n - 1)
        return Decomposition(total, 0.0, total)
    # Stop happens at the first low draw in [c, n]; the pre-c low pattern only
    # matters through the running minimum seen at the stop, which decides the
    # jump/drift attribution.
    weight = p * (1.0 - p) ** (n - c)

    def prob_min_above(t: float) -> float:
        # Running minimum before the stop: 1/l for the last low l in [2, c-1],
        # or 1 when there were none (X_1 = 1).
        total_p = (1.0 - p) ** (c - 2) if 1.0 > t else 0.0
        for low in range(2, c):
            if 1.0 / low > t:
                total_p += p * (1.0 - p) ** (c - 1 - low)
        return total_p

    jump = weight * math.fsum(prob_min_above(bs[j - 2]) for j in range(c, n + 1))
    total = (n - c + 1) * weight
    return Decomposition.from_parts(jump, total - jump)


# ---------------------------------------------------------------------------
# Public solvers
# ---------------------------------------------------------------------------

def solve(model: ObservationModel, keep_tables: bool | None = None) -> DpSolution:
    """Optimal stopping solution for a discrete model.

    Value tables are materialized when keep_tables is True (or by default when
    the lattice is small); the Bernoulli pyramid has no lattice tables.  The
    step cap defaults to 10^4 and can be overridden with STOPRULE_MAX_N.
    """
    if model.n > _max_n():
        raise ResourceLimitError(f"n={model.n} above cap {_max_n()} (set STOPRULE_MAX_N)")
    if model.kind == BERNOULLI_PYRAMID:
        return _pyramid_solve(model)
    lat = _lattice_for(model)
    if keep_tables is None:
        keep_tables = (model.n + 1) * (lat.x_max + 1) <= TABLE_CELL_DEFAULT
    b, jump, drift, v0, stop_tab, cont_tab = _lattice_pass(lat, want_tables=keep_tables)
    total = jump + drift
    if abs(total - v0) > _CONSISTENCY_TOL:
        raise RuntimeError(
            f"jump/drift sums ({total}) disagree with backward value ({v0})"
        )
    thresholds = tuple(float(x) for x in b[:-1]) + (math.inf,)
    tables = None
    if keep_tables:
        tables = ValueTables(model, stop_tab, cont_tab)
    return DpSolution(
        model=model,
        tables=tables,
        policy=ThresholdPolicy(thresholds),
        decomposition=Decomposition.from_parts(jump, drift),
    )


def policy_value(model: ObservationModel, policy: ThresholdPolicy) -> Decomposition:
    """Exact success probability of an arbitrary monotone threshold policy,
    split by first passage into the stopping region by jump or by drift.

    The rule stops at the first record (j, x) with x <= b_j; if no such record
    occurs the attempt fails.  Solver-emitted policies end with b_n = +inf,
    which makes this agree with the forced-stop-at-n convention.
    """
    if policy.n != model.n:
        raise InvalidPolicyError(f"policy length {policy.n} != n = {model.n}")
    if not policy.is_nondecreasing():
        raise InvalidPolicyError("thresholds must be nondecreasing")
    if model.kind == BERNOULLI_PYRAMID:
        return _pyramid_policy_value(model, policy)
    if model.n > _max_n():
        raise ResourceLimitError(f"n={model.n} above cap {_max_n()}")
    lat = _lattice_for(model)
    ints = _policy_to_ints(model, policy)
    _, jump, drift, _, _, _ = _lattice_pass(lat, policy_ints=ints)
    return Decomposition.from_parts(jump, drift)


# ---------------------------------------------------------------------------
# Enumeration oracle
# ---------------------------------------------------------------------------

def _support_with_probs(model: ObservationModel, j: int):
    if model.kind == TRIANGULAR:
        lo, hi = j, model.n
        return [(float(v), 1.0 / (hi - lo + 1)) for v in range(lo, hi + 1)]
    if model.kind == RECTANGULAR:
        return [(float(v), 1.0 / model.k) for v in range(1, model.k + 1)]
    if model.kind == BERNOULLI_PYRAMID:
        if j == 1:
            return [(1.0, 1.0)]
        return [(1.0 / j, model.p), (float(j), 1.0 - model.p)]
    raise UnsupportedModelError(f"{model.kind} cannot be enumerated")


def brute_force_oracle(model: ObservationModel, policy="optimal",
                       record_semantics: str = "weak") -> float:
    """Exact value by exhausting all outcome tuples.

    With policy="optimal", decisions are recomputed by backward recursion over
    full observation histories (not just the running minimum), so agreement
    with solve() also certifies that the (step, minimum) state is sufficient.
    Capped at 10^6 outcome tuples.
    """
    count = model.outcome_count()
    if count > ENUMERATION_CAP:
        raise ResourceLimitError(f"{count} outcome tuples exceed cap {ENUMERATION_CAP}")
    if record_semantics not in ("weak", "strict"):
        raise ValueError(f"record_semantics must be weak or strict, got {record_semantics!r}")
    supports = [_support_with_probs(model, j) for j in range(1, model.n + 1)]
    n = model.n

    if isinstance(policy, str) and policy == "optimal":
        if record_semantics != "weak":
            raise UnsupportedModelError("the optimal oracle uses weak-record stopping")
        # Survival products P(X_k >= x) for every distinct support value; by
        # independence the stop payoff is exact regardless of history.
        values = sorted({v for sup in supports for v, _ in sup})
        idx = {v: i for i, v in enumerate(values)}
        surv = np.ones((n + 2, len(values)))
        for k in range(n, 0, -1):
            row = np.array(
                [math.fsum(pb for vv, pb in supports[k - 1] if vv >= v) for v in values]
            )
            surv[k] = surv[k + 1] * row

        def best(prefix: tuple) -> float:
            # Optimal continuation over the full history tree: no state
            # compression, every prefix is treated as its own node.
            j = len(prefix)
            x = prefix[-1]
            is_record = all(x <= earlier for earlier in prefix[:-1])
            stop = float(surv[j + 1][idx[x]]) if is_record else -1.0
            if j == n:
                return max(stop, 0.0)
            cont = math.fsum(pb * best(prefix + (v,)) for v, pb in supports[j])
            return max(stop, cont)

        return math.fsum(pb * best((v,)) for v, pb in supports[0])

    if not isinstance(policy, ThresholdPolicy):
        raise InvalidPolicyError(f"policy must be 'optimal' or a ThresholdPolicy, got {policy!r}")
    if policy.n != n:
        raise InvalidPolicyError(f"policy length {policy.n} != n = {n}")
    bs = policy.thresholds
    total = 0.0
    for outcome in itertools.product(*supports):
        prob = 1.0
        running = math.inf
        stopped_at = None
        for j, (v, pb) in enumerate(outcome, start=1):
            prob *= pb
            is_record = v <= running if record_semantics == "weak" else v < running
            running = min(running, v)
            if stopped_at is None and is_record and v <= bs[j - 1]:
                stopped_at = v
        if stopped_at is not None and stopped_at == running:
            total += prob
    return total
