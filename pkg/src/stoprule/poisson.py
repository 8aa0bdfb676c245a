"""Poisson-limit analytics for the best-choice problem.

The large-n limits of the lattice models reduce to first-passage problems for
a planar Poisson process.  A record's "box" is the region that must stay empty
for it to remain the minimum; its area z is the sufficient statistic.  Two box
geometries appear: rectangular (iid-style scatter on a strip) and triangular
(observations with a linear trend, scatter above the diagonal).

For each geometry this module provides the success probabilities of stopping
at a record inside the box (jump) and of stopping at the next arrival in the
box (drift), the optimal box-area parameter beta* solving drift = e^{-z},
the value of the self-similar optimal boundary, the beta(theta, 1) jump-chain
generalization, and the integer-levels machinery (root ladder z_k, series
limits, general cutoff boundaries, lambda-intensity interpolation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from .models import (
    Decomposition,
    DomainError,
    InvalidPolicyError,
    PrecisionError,
    ResourceLimitError,
    RootReport,
)

__all__ = [
    "expint_e1",
    "gamma_incomplete",
    "jump_success_rect",
    "drift_success_rect",
    "jump_success_tri",
    "drift_success_tri",
    "beta_star",
    "success_prob_boundary",
    "samuels_value",
    "gm_limit_finite_T",
    "theta_beta_star",
    "theta_limit",
    "BoundaryLadder",
    "ladder_residual",
    "rect_roots",
    "rect_limit",
    "rect_limit_tail_bound",
    "rect_general_boundary",
]

GEOMETRIES = ("rect", "tri")

_QUAD_OPTS = dict(epsabs=1e-13, epsrel=1e-12, limit=200)


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------

def expint_e1(x: float) -> float:
    """Exponential integral E1(x) = int_x^inf e^{-s}/s ds for x > 0.

    Power series below 1, modified-Lentz continued fraction above.
    """
    if x <= 0:
        raise DomainError(f"expint_e1 requires x > 0, got {x}")
    if x < 1.0:
        # E1(x) = -gamma - ln x + sum_{k>=1} (-1)^{k+1} x^k / (k * k!)
        total = -np.euler_gamma - math.log(x)
        term = 1.0
        for k in range(1, 64):
            term *= x / k
            piece = term / k if k % 2 == 1 else -term / k
            total += piece
            if abs(piece) < 1e-17 * max(abs(total), 1e-300):
                break
        return total
    return math.exp(-x) * _e1_cf(x)


def _e1_cf(x: float) -> float:
    """Continued-fraction part of E1: e^x * E1(x), stable for x >= 1."""
    tiny = 1e-300
    b = x + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 200):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h


def gamma_incomplete(a: float, b: float, c: float) -> float:
    """Generalized incomplete gamma int_b^c e^{-t} t^{a-1} dt.

    Any real a is allowed when b > 0; for b = 0 the integral converges only
    for a > 0, where the endpoint singularity is removed by the substitution
    t = s^2 (exact for a = 1/2, where the integrand becomes 2 e^{-s^2} s^{2a-1}).
    """
    if b < 0 or c < b:
        raise DomainError(f"need 0 <= b <= c, got b={b}, c={c}")
    if b == 0 and a <= 0:
        raise DomainError(f"integral diverges at 0 for a={a}")
    if c == b:
        return 0.0
    if b == 0 and a < 1:
        hi = math.sqrt(c) if math.isfinite(c) else np.inf
        val, _ = integrate.quad(
            lambda s: 2.0 * math.exp(-s * s) * s ** (2.0 * a - 1.0),
            0.0, hi, **_QUAD_OPTS,
        )
        return val
    val, _ = integrate.quad(
        lambda t: math.exp(-t) * t ** (a - 1.0),
        b, c if math.isfinite(c) else np.inf, **_QUAD_OPTS,
    )
    return val


def _int_expm1_over_s(z: float) -> float:
    """int_0^z (e^s - 1)/s ds = sum_{k>=1} z^k / (k * k!), entire in z."""
    if z == 0.0:
        return 0.0
    total = 0.0
    term = 1.0
    for k in range(1, 400):
        term *= z / k
        piece = term / k
        total += piece
        if abs(piece) < 1e-17 * max(abs(total), 1e-300):
            break
    return total


# ---------------------------------------------------------------------------
# Box-success functions, both geometries
# ---------------------------------------------------------------------------

def jump_success_rect(z: float) -> float:
    """Success probability stopping at a record uniformly placed in a box of
    area z, rectangular geometry: (1 - e^{-z}) / z."""
    if z < 0:
        raise DomainError(f"box area must be nonnegative, got {z}")
    if z == 0.0:
        return 1.0
    return -math.expm1(-z) / z


def drift_success_rect(z: float) -> float:
    """Success probability stopping at the earliest arrival inside a box of
    area z, rectangular geometry: e^{-z} int_0^z (e^s - 1)/s ds."""
    if z < 0:
        raise DomainError(f"box area must be nonnegative, got {z}")
    return math.exp(-z) * _int_expm1_over_s(z)


def jump_success_tri(z: float) -> float:
    """Triangular-geometry analogue of jump_success_rect:
    int_0^1 e^{-z u^2} du = sqrt(pi) erf(sqrt(z)) / (2 sqrt(z))."""
    if z < 0:
        raise DomainError(f"box area must be nonnegative, got {z}")
    if z < 1e-8:
        return 1.0 - z / 3.0
    rz = math.sqrt(z)
    return math.sqrt(math.pi) * math.erf(rz) / (2.0 * rz)


def _tri_drift_inner(z: float) -> float:
    """int_0^{sqrt(2z)} int_0^u e^{(u^2-v^2)/2} dv du, reduced to a single
    quadrature via the closed inner integral sqrt(pi/2) e^{u^2/2} erf(u/sqrt(2))."""
    if z == 0.0:
        return 0.0
    hi = math.sqrt(2.0 * z)
    c = math.sqrt(math.pi / 2.0)
    val, _ = integrate.quad(
        lambda u: c * math.exp(0.5 * u * u) * math.erf(u / math.sqrt(2.0)),
        0.0, hi, **_QUAD_OPTS,
    )
    return val


def drift_success_tri(z: float) -> float:
    """Triangular-geometry analogue of drift_success_rect:
    e^{-z} * int_0^{sqrt(2z)} int_0^u e^{(u^2-v^2)/2} dv du."""
    if z < 0:
        raise DomainError(f"box area must be nonnegative, got {z}")
    return math.exp(-z) * _tri_drift_inner(z)


def drift_success_tri_first_form(z: float) -> float:
    """Independent single-integral route to drift_success_tri, integrating the
    jump function along the sliding record location.  Kept as a test oracle."""
    if z < 0:
        raise DomainError(f"box area must be nonnegative, got {z}")
    if z == 0.0:
        return 0.0
    w = math.sqrt(2.0 * z)

    def integrand(s):
        rest = (math.sqrt(z) - s / math.sqrt(2.0)) ** 2
        return math.exp(-w * s + 0.5 * s * s) * (w - s) * jump_success_tri(rest)

    val, _ = integrate.quad(integrand, 0.0, w, **_QUAD_OPTS)
    return val


# ---------------------------------------------------------------------------
# Optimal boundary parameter and values
# ---------------------------------------------------------------------------

def _balance_residual(geometry: str, z: float) -> float:
    """drift(z)/e^{-z} - 1; the optimal box area is its root."""
    if geometry == "rect":
        return _int_expm1_over_s(z) - 1.0
    return _tri_drift_inner(z) - 1.0


def beta_star(geometry: str) -> RootReport:
    """Optimal box-area parameter: the root of drift(z) = e^{-z} in (0, 3)."""
    if geometry not in GEOMETRIES:
        raise DomainError(f"geometry must be one of {GEOMETRIES}, got {geometry!r}")
    lo, hi = 1e-9, 3.0
    root, res = optimize.brentq(
        lambda z: _balance_residual(geometry, z),
        lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
        maxiter=200, full_output=True,
    )
    return RootReport(
        root=float(root),
        residual=float(_balance_residual(geometry, root)),
        bracket=(lo, hi),
        iterations=res.iterations,
    )


def _beta_star_value(geometry: str) -> float:
    if geometry not in _BETA_CACHE:
        _BETA_CACHE[geometry] = beta_star(geometry).root
    return _BETA_CACHE[geometry]


_BETA_CACHE: dict[str, float] = {}


def _prob_jump_passage(geometry: str, beta: float) -> float:
    """P(first boundary passage happens by jump) for the self-similar boundary."""
    if geometry == "rect":
        # beta e^beta E1(beta); continued fraction already carries the e^beta.
        if beta >= 1.0:
            return beta * _e1_cf(beta)
        return beta * math.exp(beta) * expint_e1(beta)
    # sqrt(pi beta) e^beta erfc(sqrt(beta)), computed via the scaled erfcx.
    return math.sqrt(math.pi * beta) * special.erfcx(math.sqrt(beta))


def success_prob_boundary(geometry: str, beta: float) -> float:
    """Success probability of the self-similar boundary with area parameter beta.

    Rectangular geometry uses the hyperbolic boundary b(t) = beta/(1-t); the
    triangular one uses the linear boundary b(t) = t + sqrt(2 beta).  The value
    is D + (J - D) * P(jump passage) and is maximized at beta_star(geometry).
    """
    if geometry not in GEOMETRIES:
        raise DomainError(f"geometry must be one of {GEOMETRIES}, got {geometry!r}")
    if beta <= 0:
        raise DomainError(f"beta must be positive, got {beta}")
    if geometry == "rect":
        j, d = jump_success_rect(beta), drift_success_rect(beta)
    else:
        j, d = jump_success_tri(beta), drift_success_tri(beta)
    return d + (j - d) * _prob_jump_passage(geometry, beta)


def samuels_value() -> float:
    """Limit value of the full-information minimum game:
    e^{-b} + (e^b - 1 - b) E1(b) at b = beta_star('rect')."""
    b = _beta_star_value("rect")
    return math.exp(-b) + (math.exp(b) - 1.0 - b) * expint_e1(b)


def gm_limit_finite_T(T: float) -> float:
    """Finite-horizon variant of samuels_value: the exponential integral is
    truncated at T.  Defined for T >= beta_star('rect')."""
    b = _beta_star_value("rect")
    if T < b:
        raise DomainError(f"T must be >= {b:.6f}, got {T}")
    tail = expint_e1(b) - (0.0 if math.isinf(T) else expint_e1(T))
    return math.exp(-b) + (math.exp(b) - 1.0 - b) * tail


# ---------------------------------------------------------------------------
# beta(theta, 1) jump chain
# ---------------------------------------------------------------------------

def _jump_success_theta(theta: float, w: float) -> float:
    """E[e^{-w Y}] for Y ~ beta(theta, 1): theta w^{-theta} * lower_gamma(theta, w)."""
    if w <= 0.0:
        return 1.0
    if w < 1e-8:
        return 1.0 - theta * w / (theta + 1.0)
    return (
        theta * special.gamma(theta) * special.gammainc(theta, w)
        * math.exp(-theta * math.log(w))
    )


def _drift_success_theta(theta: float, z: float) -> float:
    """Success of stopping at the next jump of the area chain started at z:
    int_0^z e^{-s} E[e^{-(z-s) Y}] ds with Y ~ beta(theta, 1)."""
    if z == 0.0:
        return 0.0
    val, _ = integrate.quad(
        lambda s: math.exp(-s) * _jump_success_theta(theta, z - s),
        0.0, z, **_QUAD_OPTS,
    )
    return val


def theta_beta_star(theta: float) -> RootReport:
    """Optimal area parameter for the beta(theta, 1) jump chain: root of
    drift_theta(z) = e^{-z}.  theta = 1 recovers the rectangular geometry and
    theta = 1/2 the triangular one."""
    if theta <= 0:
        raise DomainError(f"theta must be positive, got {theta}")

    def f(z):
        return math.exp(z) * _drift_success_theta(theta, z) - 1.0

    lo, hi = 1e-9, 3.0
    root, res = optimize.brentq(
        f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
        maxiter=200, full_output=True,
    )
    return RootReport(float(root), float(f(root)), (lo, hi), res.iterations)


def theta_limit(theta: float) -> float:
    """Limit best-choice probability for the trend family whose box-area jumps
    shrink by beta(theta, 1) factors:

        Gamma(1-theta, b, inf) * (-b^theta + e^b theta Gamma(theta, 0, b)) + e^{-b}

    evaluated at b = theta_beta_star(theta)."""
    if theta <= 0:
        raise DomainError(f"theta must be positive, got {theta}")
    b = theta_beta_star(theta).root
    upper = gamma_incomplete(1.0 - theta, b, math.inf)
    lower = gamma_incomplete(theta, 0.0, b)
    return upper * (-(b ** theta) + math.exp(b) * theta * lower) + math.exp(-b)


# ---------------------------------------------------------------------------
# Integer-level rectangular limit: root ladder and series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryLadder:
    """Time cutoffs t_k and roots z_k = e^{lam (1 - t_k)} for stopping at
    integer level k.  Arrays are 1-based: entry [k] is level k, entry [0] NaN.
    Roots are clamped at e^lam (cutoff 0) where the level equation has no
    solution below e^lam."""

    cutoffs: np.ndarray
    roots: np.ndarray
    lam: float

    @property
    def k_max(self) -> int:
        return len(self.roots) - 1

    def root(self, k: int) -> float:
        if not 1 <= k <= self.k_max:
            raise DomainError(f"level {k} outside 1..{self.k_max}")
        return float(self.roots[k])

    def cutoff(self, k: int) -> float:
        if not 1 <= k <= self.k_max:
            raise DomainError(f"level {k} outside 1..{self.k_max}")
        return float(self.cutoffs[k])


def ladder_residual(k: int, z: float) -> float:
    """sum_{j=2}^k z^j/j - sum_{j=1}^k 1/j; the level-k root is its zero."""
    if k < 2:
        raise DomainError("the level equation starts at k = 2")
    js = np.arange(2, k + 1, dtype=float)
    # (z^j - 1)/j summed equals the residual + 1 shifted; expm1 keeps z ~ 1 exact.
    lnz = math.log(z)
    return float(np.sum(np.expm1(js * lnz) / js)) - 1.0


# Cache of level-equation roots; entry [k] is the root for level k, [1] = inf
# (level 1 is always stoppable, the clamp maps it to e^lam).
_EQZ_ROOTS: list[float] = [math.nan, math.inf]


def _eqz_roots(k_max: int) -> np.ndarray:
    while len(_EQZ_ROOTS) <= k_max:
        k = len(_EQZ_ROOTS)
        hi = _EQZ_ROOTS[k - 1] if k > 2 else 2.0
        root = optimize.brentq(
            lambda z: ladder_residual(k, z),
            1.0 + 1e-13, hi,
            xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200,
        )
        _EQZ_ROOTS.append(float(root))
    return np.asarray(_EQZ_ROOTS[: k_max + 1])


def rect_roots(k_max: int, lam: float = 1.0) -> BoundaryLadder:
    """Ladder of boundary roots z_k and cutoffs t_k = 1 - ln(z_k)/lam for the
    integer-level model with intensity lam.  Level-1 stopping is always
    optimal (t_1 = 0); roots at or above e^lam are clamped there."""
    if k_max < 1:
        raise DomainError(f"k_max must be >= 1, got {k_max}")
    if lam <= 0:
        raise DomainError(f"lam must be positive, got {lam}")
    cap = math.exp(lam)
    roots = np.minimum(_eqz_roots(k_max), cap)
    cutoffs = 1.0 - np.log(roots) / lam
    cutoffs = np.clip(cutoffs, 0.0, 1.0)
    cutoffs[0] = math.nan
    return BoundaryLadder(cutoffs=cutoffs, roots=roots, lam=lam)


def rect_limit_tail_bound(lam: float, k_max: int) -> float:
    """Upper bound on the mass dropped by truncating the level series at k_max.

    Per level k the drift term is at most (e^lam - 1) e^{-lam k} and the jump
    term at most beta e^beta e^{-lam k}/k < 2.3 e^{-lam k}/k, so a geometric
    tail bound applies.
    """
    r = math.exp(-lam)
    geom = r ** (k_max + 1) / (1.0 - r)
    return (math.expm1(lam) + 2.3 / max(k_max, 1)) * geom


def _auto_k_max(lam: float, tol: float) -> int:
    k = max(8, int(math.ceil(math.log((math.expm1(lam) + 2.3) / (tol * (1.0 - math.exp(-lam)))) / lam)))
    while rect_limit_tail_bound(lam, k) > tol:
        k = int(k * 1.25) + 8
        if k > 5_000_000:
            raise ResourceLimitError(f"level series will not reach tol={tol} at lam={lam}")
    return k


def _jump_series_double(zlam: np.ndarray, lam: float, k_max: int) -> float:
    """Jump series sum_k e^{-lam k} sum_{j<=k} (z_k^j - z_{k+1}^j)/j."""
    pieces = []
    lnz = np.log(zlam)
    for k in range(1, k_max + 1):
        a, b = lnz[k], lnz[k + 1]
        if a == b:
            continue
        js = np.arange(1, k + 1, dtype=float)
        # exponents stay <= 0: j ln z <= k lam for z <= e^lam.
        vals = (np.exp(js * a - lam * k) - np.exp(js * b - lam * k)) / js
        pieces.append(float(np.sum(vals)))
    return math.fsum(pieces)


def _jump_series_simplified(z: np.ndarray, k_max: int) -> float:
    """Telescoped jump series valid at lam = 1 with unclamped ladder roots:
    e^{-1}(z_1 - z_2) + sum_{k>=2} e^{-k} (z_k - z_{k+1} + (z_{k+1}^{k+1}-1)/(k+1))."""
    pieces = [math.exp(-1.0) * (z[1] - z[2])]
    for k in range(2, k_max + 1):
        zk1 = z[k + 1]
        corr = (math.exp((k + 1) * math.log(zk1)) - 1.0) / (k + 1)
        pieces.append(math.exp(-float(k)) * (z[k] - zk1 + corr))
    return math.fsum(pieces)


def rect_limit(lam: float, k_max: int | None = None, tol: float = 1e-10) -> Decomposition:
    """Limit success probability for the integer-level model at intensity lam,
    split into jump and drift series over the levels.

    k_max defaults to the smallest truncation whose geometric tail bound is
    below tol; an explicit k_max that cannot meet tol raises PrecisionError.
    """
    if lam <= 0:
        raise DomainError(f"lam must be positive, got {lam}")
    required = _auto_k_max(lam, tol)
    if k_max is None:
        k_max = required
    elif rect_limit_tail_bound(lam, k_max) > tol:
        raise PrecisionError(
            f"k_max={k_max} leaves tail above tol={tol}; need k_max >= {required}",
            required_k_max=required,
        )
    cap = math.exp(lam)
    zlam = np.minimum(_eqz_roots(k_max + 1), cap)
    drift_terms = [
        math.exp(-lam * k) * (cap - zlam[k])
        for k in range(2, k_max + 1)
        if zlam[k] < cap
    ]
    drift = math.fsum(drift_terms)
    if lam == 1.0:
        jump = _jump_series_simplified(zlam, k_max)
    else:
        jump = _jump_series_double(zlam, lam, k_max)
    return Decomposition.from_parts(jump, drift)


def rect_general_boundary(cutoffs) -> Decomposition:
    """Success probability of an arbitrary integer-level boundary at unit
    intensity, given nondecreasing cutoffs (t_1, ..., t_K) in [0, 1].

    Levels above K are treated as never stoppable (t_k = 1 for k > K).
    """
    t = np.asarray(cutoffs, dtype=float)
    if t.ndim != 1 or len(t) < 1:
        raise InvalidPolicyError("cutoffs must be a nonempty 1-D sequence")
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise InvalidPolicyError("cutoffs must lie in [0, 1]")
    if np.any(np.diff(t) < 0.0):
        raise InvalidPolicyError("cutoffs must be nondecreasing")
    kk = len(t)
    z = np.empty(kk + 2)
    z[0] = math.nan
    z[1 : kk + 1] = np.exp(1.0 - t)
    z[kk + 1] = 1.0
    jump = _jump_series_double(z, 1.0, kk)
    drift_terms = []
    for k in range(1, kk + 1):
        tk = t[k - 1]
        if tk >= 1.0:
            continue
        js = np.arange(1, k + 1, dtype=float)
        inner = float(np.sum(np.expm1(js * (1.0 - tk)) / js))
        drift_terms.append(math.exp(-float(k)) * math.expm1(tk) * inner)
    return Decomposition.from_parts(jump, math.fsum(drift_terms))
