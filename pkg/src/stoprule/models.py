"""Shared domain types for the best-choice (sample minimum) toolkit.

Observation models describe a finite sequence of independent draws; threshold
policies encode "stop at a record at or below b_j"; value tables hold the
stop/continuation probabilities on the running-minimum lattice; decompositions
split a success probability into jump and drift first-passage mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

__all__ = [
    "StopRuleError",
    "StateRangeError",
    "InvalidPolicyError",
    "UnsupportedModelError",
    "ResourceLimitError",
    "PrecisionError",
    "DomainError",
    "ObservationModel",
    "ThresholdPolicy",
    "ValueTables",
    "Decomposition",
    "RootReport",
    "validate_policy",
]

# Consistency tolerance for total == jump + drift.
DECOMPOSITION_TOL = 1e-12


class StopRuleError(Exception):
    """Base class for all toolkit errors."""


class StateRangeError(StopRuleError, ValueError):
    """A (step, value) pair is outside the model's reachable lattice."""


class InvalidPolicyError(StopRuleError, ValueError):
    """A threshold policy violates monotonicity or range requirements."""


class UnsupportedModelError(StopRuleError, ValueError):
    """The operation is not defined for this observation model kind."""


class ResourceLimitError(StopRuleError, RuntimeError):
    """Problem size exceeds a configured cap (n cap, enumeration cap, memory)."""


class PrecisionError(StopRuleError, RuntimeError):
    """A requested tolerance cannot be met with the given truncation."""

    def __init__(self, message: str, required_k_max: int | None = None):
        super().__init__(message)
        self.required_k_max = required_k_max


class DomainError(StopRuleError, ValueError):
    """Scalar argument outside the mathematical domain of an operation."""


# Model kind tags.
IID_UNIFORM01 = "iid_uniform01"
TRIANGULAR = "triangular"
RECTANGULAR = "rectangular"
BERNOULLI_PYRAMID = "bernoulli_pyramid"
TREND_SHIFTED = "trend_shifted"
TREND_SCALED = "trend_scaled"
TREND_POWER = "trend_power"

MODEL_KINDS = (
    IID_UNIFORM01,
    TRIANGULAR,
    RECTANGULAR,
    BERNOULLI_PYRAMID,
    TREND_SHIFTED,
    TREND_SCALED,
    TREND_POWER,
)

# Kinds whose running minimum lives on an integer lattice solved by dp.solve.
LATTICE_KINDS = (TRIANGULAR, RECTANGULAR)
# Kinds with iid observations (tie probability, sandwich bounds apply).
IID_KINDS = (IID_UNIFORM01, RECTANGULAR)


@dataclass(frozen=True)
class ObservationModel:
    """Tagged description of n independent observations.

    kind        one of MODEL_KINDS
    n           number of observations
    k           support size for the rectangular model (uniform on 1..k)
    p           low-value probability for the Bernoulli pyramid
    rho / theta trend-model parameters
    """

    kind: str
    n: int
    k: int | None = None
    p: float | None = None
    rho: float | None = None
    theta: float | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise UnsupportedModelError(f"unknown model kind {self.kind!r}")
        if not isinstance(self.n, int) or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")
        extras = {"k": self.k, "p": self.p, "rho": self.rho, "theta": self.theta}
        wanted = {
            IID_UNIFORM01: (),
            TRIANGULAR: (),
            RECTANGULAR: ("k",),
            BERNOULLI_PYRAMID: ("p",),
            TREND_SHIFTED: (),
            TREND_SCALED: ("rho",),
            TREND_POWER: ("theta",),
        }[self.kind]
        for name, value in extras.items():
            if name in wanted and value is None:
                raise DomainError(f"{self.kind} model requires parameter {name}")
            if name not in wanted and value is not None:
                raise DomainError(f"{self.kind} model takes no parameter {name}")
        if self.kind == RECTANGULAR and (not isinstance(self.k, int) or self.k < 1):
            raise DomainError(f"support size k must be a positive integer, got {self.k!r}")
        if self.kind == BERNOULLI_PYRAMID and not 0.0 < self.p < 1.0:
            raise DomainError(f"p must lie in (0, 1), got {self.p!r}")
        if self.kind == TREND_SCALED and not self.rho > 0:
            raise DomainError(f"rho must be positive, got {self.rho!r}")
        if self.kind == TREND_POWER and not self.theta > 0:
            raise DomainError(f"theta must be positive, got {self.theta!r}")

    # Constructors ---------------------------------------------------------

    @classmethod
    def iid_uniform01(cls, n: int) -> "ObservationModel":
        return cls(IID_UNIFORM01, n)

    @classmethod
    def triangular(cls, n: int) -> "ObservationModel":
        """X_j uniform on the integers {j, ..., n}."""
        return cls(TRIANGULAR, n)

    @classmethod
    def rectangular(cls, n: int, k: int) -> "ObservationModel":
        """X_j uniform on the integers {1, ..., k}."""
        return cls(RECTANGULAR, n, k=k)

    @classmethod
    def bernoulli_pyramid(cls, n: int, p: float) -> "ObservationModel":
        """X_1 = 1; for j >= 2, X_j = 1/j with probability p, else j."""
        return cls(BERNOULLI_PYRAMID, n, p=float(p))

    @classmethod
    def trend_shifted(cls, n: int) -> "ObservationModel":
        """X_j uniform on the integers {j, ..., j + n - 1}."""
        return cls(TREND_SHIFTED, n)

    @classmethod
    def trend_scaled(cls, n: int, rho: float) -> "ObservationModel":
        """X_j = j + rho * n * U_j with U_j uniform on [0, 1]."""
        return cls(TREND_SCALED, n, rho=float(rho))

    @classmethod
    def trend_power(cls, n: int, theta: float) -> "ObservationModel":
        """X_j = j + n * U_j^(1/theta) with U_j uniform on [0, 1]."""
        return cls(TREND_POWER, n, theta=float(theta))

    # Structure ------------------------------------------------------------

    @property
    def is_iid(self) -> bool:
        return self.kind in IID_KINDS

    @property
    def is_lattice(self) -> bool:
        return self.kind in LATTICE_KINDS

    def support(self, j: int) -> tuple[int, int]:
        """Integer support bounds (lo, hi) of observation j, discrete kinds only."""
        if not 1 <= j <= self.n:
            raise StateRangeError(f"step {j} outside 1..{self.n}")
        if self.kind == TRIANGULAR:
            return j, self.n
        if self.kind == RECTANGULAR:
            return 1, self.k
        if self.kind == TREND_SHIFTED:
            return j, j + self.n - 1
        raise UnsupportedModelError(f"{self.kind} has no integer support")

    def outcome_count(self) -> int:
        """Number of distinct outcome tuples (enumeration size)."""
        if self.kind == TRIANGULAR:
            return math.factorial(self.n)
        if self.kind == RECTANGULAR:
            return self.k ** self.n
        if self.kind == BERNOULLI_PYRAMID:
            return 2 ** (self.n - 1)
        if self.kind == TREND_SHIFTED:
            return self.n ** self.n
        raise UnsupportedModelError(f"{self.kind} is not enumerable")

    # Serialization --------------------------------------------------------

    def to_json(self) -> dict:
        params = {}
        for name in ("k", "p", "rho", "theta"):
            value = getattr(self, name)
            if value is not None:
                params[name] = value
        return {"kind": self.kind, "n": self.n, "params": params}

    @classmethod
    def from_json(cls, obj: dict) -> "ObservationModel":
        params = dict(obj.get("params", {}))
        if "k" in params:
            params["k"] = int(params["k"])
        return cls(obj["kind"], int(obj["n"]), **params)


def _encode_threshold(b: float):
    if b == math.inf:
        return "inf"
    if b == -math.inf:
        return "-inf"
    return b


def _decode_threshold(b) -> float:
    if b == "inf":
        return math.inf
    if b == "-inf":
        return -math.inf
    return float(b)


@dataclass(frozen=True)
class ThresholdPolicy:
    """Per-step stopping thresholds: stop at a record value x at step j iff x <= b_j.

    Extended reals are allowed: -inf never stops at the step, +inf stops at
    every record.  Policies emitted by the solvers end with b_n = +inf.
    """

    thresholds: tuple[float, ...]

    def __post_init__(self):
        if len(self.thresholds) < 1:
            raise InvalidPolicyError("policy must have at least one threshold")
        values = tuple(float(b) for b in self.thresholds)
        if any(math.isnan(b) for b in values):
            raise InvalidPolicyError("thresholds must not be NaN")
        object.__setattr__(self, "thresholds", values)

    @property
    def n(self) -> int:
        return len(self.thresholds)

    def is_nondecreasing(self) -> bool:
        ts = self.thresholds
        return all(ts[i] <= ts[i + 1] for i in range(len(ts) - 1))

    def to_json(self) -> dict:
        return {"thresholds": [_encode_threshold(b) for b in self.thresholds]}

    @classmethod
    def from_json(cls, obj: dict) -> "ThresholdPolicy":
        return cls(tuple(_decode_threshold(b) for b in obj["thresholds"]))


def validate_policy(policy: ThresholdPolicy) -> bool:
    """True iff the thresholds are nondecreasing in the step index."""
    return policy.is_nondecreasing()


class ValueTables:
    """Dense stop/continuation value tables over the reachable lattice states.

    Backed by (n+1) x (x_max+1) float arrays indexed [j, x]; entries outside
    the reachable domain are NaN.  Immutable after construction.
    """

    def __init__(self, model: ObservationModel, stop: np.ndarray, cont: np.ndarray):
        self.model = model
        self._stop = stop
        self._cont = cont
        self._stop.setflags(write=False)
        self._cont.setflags(write=False)

    def _check(self, j: int, x: int):
        if not (1 <= j <= self.model.n):
            raise StateRangeError(f"step {j} outside 1..{self.model.n}")
        if not (0 <= x < self._stop.shape[1]) or math.isnan(self._stop[j, x]):
            raise StateRangeError(f"state ({j}, {x}) not on the lattice")

    def stop_value(self, j: int, x: int) -> float:
        self._check(j, x)
        return float(self._stop[j, x])

    def cont_value(self, j: int, x: int) -> float:
        self._check(j, x)
        return float(self._cont[j, x])

    def states(self) -> Iterator[tuple[int, int]]:
        n = self.model.n
        for j in range(1, n + 1):
            for x in range(self._stop.shape[1]):
                if not math.isnan(self._stop[j, x]):
                    yield (j, x)

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Raw (stop, cont) arrays indexed [j, x]; NaN outside the domain."""
        return self._stop, self._cont


@dataclass(frozen=True)
class Decomposition:
    """Success probability split by first-passage mode: total = jump + drift.

    Solver-produced decompositions have jump >= 0, drift >= 0 and total in
    [0, 1].  Degenerate threshold inputs to the closed-form evaluators can
    produce negative displayed components that cancel; the constructor only
    enforces the sum identity.
    """

    jump: float
    drift: float
    total: float

    def __post_init__(self):
        for name in ("jump", "drift", "total"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if abs(self.total - (self.jump + self.drift)) > DECOMPOSITION_TOL:
            raise DomainError(
                f"total {self.total} != jump + drift {self.jump + self.drift}"
            )

    @classmethod
    def from_parts(cls, jump: float, drift: float) -> "Decomposition":
        return cls(float(jump), float(drift), float(jump) + float(drift))

    def to_json(self) -> dict:
        return {"jump": self.jump, "drift": self.drift, "total": self.total}


@dataclass(frozen=True)
class RootReport:
    """Outcome of a bracketed one-dimensional root solve."""

    root: float
    residual: float
    bracket: tuple[float, float]
    iterations: int

    def __post_init__(self):
        lo, hi = self.bracket
        if not lo <= self.root <= hi:
            raise DomainError(f"root {self.root} outside bracket {self.bracket}")
