"""Weights, tail sums over the complement of a family and effective order.

Also hosts numerical estimates of the weighted anchored Sobolev norm and
checks of the Poincare-type inequalities that relate it to the mixed
Sobolev norms of the anchored components.
"""

from __future__ import annotations

import math
from itertools import combinations
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .calculus import DEFAULT_FD_STEP, DEFAULT_QUAD, gauss_legendre_box, l2_norm_sq, mixed_derivative
from .decomposition import BlackBoxFunction, anchored_component
from .errors import CapabilityError, InputError
from .index_sets import MAX_ENUM_DIM, DownwardClosedFamily, SubsetMask, check_enumerable
from .points import Anchor, Box, anchored_extend

C2_KMAX = 200
_ENUM_CHUNK = 1 << 18

# Bernoulli numbers B_2, B_4, ..., B_12 for the Euler-Maclaurin tail
_BERNOULLI = (1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730)
_ZETA_TERMS = 32


def zeta(s: float) -> float:
    """Riemann zeta for real s > 1 by a partial sum plus Euler-Maclaurin tail."""
    if not s > 1:
        raise InputError(f"zeta needs s > 1, got {s}")
    N = _ZETA_TERMS
    k = np.arange(1, N, dtype=float)
    total = math.fsum(k ** (-s))
    total += N ** (1 - s) / (s - 1) + 0.5 * N ** (-s)
    # rising factorial s (s+1) ... (s+2j-2) accumulated term by term
    rising = s
    for j, b in enumerate(_BERNOULLI, start=1):
        total += b / math.factorial(2 * j) * rising * N ** (-s - 2 * j + 1)
        rising *= (s + 2 * j - 1) * (s + 2 * j)
    return total


def rho(c: float) -> float:
    """rho(c) = 2 zeta(2c) / (2 pi^2)^c for c in (1/2, 1]."""
    if not 0.5 < c <= 1:
        raise InputError(f"c must lie in (1/2, 1], got {c}")
    return 2 * zeta(2 * c) / (2 * math.pi**2) ** c


@dataclass(frozen=True)
class WeightScheme:
    """Either constant weights or product and order dependent (POD) weights.

    For ``kind='pod'`` the weight of u is
    ((#u + n)!/m * prod_{j in u} alpha_j / sqrt(rho(c)))^(2/(1+c)).
    """

    kind: str = "constant"
    gamma: float = 1.0
    c: float = 1.0
    n: int = 0
    m: int = 1
    alpha: tuple = ()

    def __post_init__(self):
        if self.kind == "constant":
            if not self.gamma > 0:
                raise InputError("constant weight must be positive")
        elif self.kind == "pod":
            rho(self.c)
            if self.n < 0 or self.m < 1:
                raise InputError("need n >= 0 and m >= 1")
            alpha = tuple(float(a) for a in self.alpha)
            if not alpha or any(not a > 0 for a in alpha):
                raise InputError("alpha must be a non-empty list of positive numbers")
            object.__setattr__(self, "alpha", alpha)
        else:
            raise InputError(f"unknown weight scheme {self.kind!r}")

    @classmethod
    def constant(cls, gamma: float = 1.0) -> "WeightScheme":
        return cls("constant", gamma=gamma)

    @classmethod
    def pod(cls, c: float, n: int, m: int, alpha: Sequence[float]) -> "WeightScheme":
        return cls("pod", c=c, n=n, m=m, alpha=tuple(alpha))

    @property
    def d(self) -> int | None:
        return len(self.alpha) if self.kind == "pod" else None

    def check_dim(self, d: int) -> None:
        if self.kind == "pod" and len(self.alpha) != d:
            raise InputError(f"scheme has {len(self.alpha)} alphas but d={d}")

    def half_logs(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        """log gamma_u^(1/2) split as card_log[#u] + sum_{j in u} coord_log[j]."""
        self.check_dim(d)
        k = np.arange(d + 1)
        if self.kind == "constant":
            return np.full(d + 1, 0.5 * math.log(self.gamma)), np.zeros(d)
        p = 1.0 / (1 + self.c)
        lg = np.array([math.lgamma(kk + self.n + 1) for kk in k])
        card = p * (lg - math.log(self.m))
        coord = p * (np.log(np.asarray(self.alpha)) - 0.5 * math.log(rho(self.c)))
        return card, coord

    def __call__(self, u: SubsetMask) -> float:
        return gamma_weight(self, u)


def gamma_weight(scheme: WeightScheme, u: SubsetMask) -> float:
    if scheme.kind == "constant":
        return scheme.gamma
    scheme.check_dim(u.d)
    r = math.sqrt(rho(scheme.c))
    prod = math.factorial(u.card + scheme.n) / scheme.m
    for j in u.indices:
        prod *= scheme.alpha[j] / r
    return prod ** (2 / (1 + scheme.c))


def gamma_table(scheme: WeightScheme, family: DownwardClosedFamily) -> dict:
    return {u: gamma_weight(scheme, u) for u in family}


def _complement_sum(
    d: int, card_log: np.ndarray, coord_log: np.ndarray, family: DownwardClosedFamily | None
) -> float:
    """Sum of exp(card_log[#u] + sum_{j in u} coord_log[j]) over u outside the family."""
    check_enumerable(d)
    total = 2**d
    inside = np.zeros(total, dtype=bool)
    if family is not None:
        inside[[u.bits for u in family]] = True
    parts = []
    for start in range(0, total, _ENUM_CHUNK):
        masks = np.arange(start, min(start + _ENUM_CHUNK, total), dtype=np.int64)
        logs = np.zeros(masks.size)
        cards = np.zeros(masks.size, dtype=np.int64)
        for j in range(d):
            bit = (masks >> j) & 1
            cards += bit
            logs += bit * coord_log[j]
        vals = np.exp(logs + card_log[cards])
        parts.append(math.fsum(vals[~inside[start : start + masks.size]]))
    return math.fsum(parts)


def _check_exponent(e: float) -> None:
    if e not in (0.5, 1, 1.0):
        raise InputError(f"tail-sum exponent must be 1/2 or 1, got {e}")


def tail_sum_exact(scheme: WeightScheme, family: DownwardClosedFamily, exponent: float = 1.0) -> float:
    """sum over u outside the family of 2^(#u e) gamma_u^(1/2), by enumeration."""
    _check_exponent(exponent)
    d = family.d
    card, coord = scheme.half_logs(d)
    card = card + exponent * math.log(2) * np.arange(d + 1)
    return _complement_sum(d, card, coord, family)


def cardinality_sums(scheme: WeightScheme, d: int, exponent: float = 1.0) -> np.ndarray:
    """S_k = sum over #u = k of 2^(k e) gamma_u^(1/2), k = 0..d.

    Uses elementary symmetric polynomials of exp(coord_log), so the cost is
    O(d^2) and no subsets are enumerated.
    """
    _check_exponent(exponent)
    card, coord = scheme.half_logs(d)
    esp = np.zeros(d + 1)
    esp[0] = 1.0
    for x in np.exp(coord):
        esp[1:] = esp[1:] + x * esp[:-1]
    return esp * np.exp(card + exponent * math.log(2) * np.arange(d + 1))


def c2_constant(n: int, c: float, kmax: int = C2_KMAX) -> float:
    """max over k = 1..kmax of ((k+n)!/k!)^(1/(1+c)) (1/k!)^(c/(1+c))."""
    k = np.arange(1, kmax + 1)
    lgk = np.array([math.lgamma(kk + 1) for kk in k])
    lgkn = np.array([math.lgamma(kk + n + 1) for kk in k])
    logs = (lgkn - lgk) / (1 + c) - c / (1 + c) * lgk
    return float(np.exp(logs.max()))


@dataclass
class TailBound:
    """Closed-form tail bound with its feasibility diagnostics."""

    value: float
    feasible: bool
    alpha_sum: float
    limit: float
    q: float
    c2: float
    order: int


def tail_sum_bound(scheme: WeightScheme, L: int) -> TailBound:
    """C2(n) m^(-1/(1+c)) q^(L+1) / (1 - q) for POD weights.

    ``q = sum_j (2^(c+1) alpha_j / sqrt(rho(c)))^(1/(1+c))``. Feasibility,
    sum_j alpha_j^(1/(1+c)) < rho(c)^(1/(2(1+c))) / 2, is checked first;
    an infeasible scheme reports an infinite value.
    """
    if scheme.kind != "pod":
        raise InputError("closed-form tail bound needs product and order dependent weights")
    if L < 0:
        raise InputError("order must be non-negative")
    c = scheme.c
    p = 1 / (1 + c)
    r = rho(c)
    alpha = np.asarray(scheme.alpha)
    asum = float(np.sum(alpha**p))
    limit = r ** (p / 2) / 2
    q = float(np.sum((2 ** (c + 1) * alpha / math.sqrt(r)) ** p))
    c2 = c2_constant(scheme.n, c)
    feasible = 0 < asum < limit
    if not feasible:
        return TailBound(math.inf, False, asum, limit, q, c2, L)
    value = c2 * scheme.m ** (-p) * q ** (L + 1) / (1 - q)
    return TailBound(value, True, asum, limit, q, c2, L)


@dataclass
class EpsilonReport:
    value: float
    in_unit_interval: bool
    max_ratio: float
    max_ratio_ok: bool
    ratio_sum: float
    sum_limit: float
    sum_ok: bool

    @property
    def conditions_met(self) -> bool:
        return self.max_ratio_ok and self.sum_ok


def epsilon(c: float, ratios: Sequence[float]) -> EpsilonReport:
    """eps = 2 rho(c)^(-1/(2(1+c))) sum_j r_j^(1/(1+c)), with r_j = ||psi_j|| / a_min.

    The conditions max r_j <= 1 and sum r_j^(1/(1+c)) < min(sqrt 6,
    rho^(1/(2(1+c)))/2) are reported, not enforced.
    """
    r = np.asarray(ratios, dtype=float)
    if r.ndim != 1 or np.any(r < 0):
        raise InputError("ratios must be a list of non-negative numbers")
    p = 1 / (1 + c)
    root = rho(c) ** (p / 2)
    s = float(np.sum(r**p))
    eps = 2 / root * s
    limit = min(math.sqrt(6), root / 2)
    mx = float(r.max()) if r.size else 0.0
    return EpsilonReport(eps, 0 < eps < 1, mx, mx <= 1, s, limit, s < limit)


@dataclass
class OrderSelection:
    order: int
    met: bool
    mode: str
    tail: float
    tails: list = field(default_factory=list)


def select_order(
    scheme: WeightScheme, d: int, tolerance: float, exponent: float = 1.0, mode: str = "auto"
) -> OrderSelection:
    """Smallest L with tail(order family of order L) <= tolerance.

    ``mode='exact'`` sums the complement exactly (d <= 24), ``'bound'`` uses
    the closed form (POD weights only); ``'auto'`` picks exact when d <= 24.
    If no L <= d reaches the tolerance, d is returned with ``met=False``.
    """
    if not tolerance > 0:
        raise InputError("tolerance must be positive")
    if mode == "auto":
        mode = "exact" if d <= MAX_ENUM_DIM else "bound"
    scheme.check_dim(d)
    tails = []
    if mode == "exact":
        check_enumerable(d)
        S = cardinality_sums(scheme, d, exponent)
        for L in range(d + 1):
            tails.append(math.fsum(S[L + 1 :]))
    elif mode == "bound":
        first = tail_sum_bound(scheme, 0)
        if not first.feasible:
            raise InputError(
                f"weights infeasible: sum alpha^(1/(1+c)) = {first.alpha_sum:.6g} "
                f">= {first.limit:.6g}"
            )
        tails = [first.value * first.q**L for L in range(d + 1)]
    else:
        raise InputError(f"unknown selection mode {mode!r}")
    for L, t in enumerate(tails):
        if t <= tolerance:
            return OrderSelection(L, True, mode, t, tails)
    return OrderSelection(d, False, mode, tails[d], tails)


@dataclass
class TruncationBound:
    value: float
    tail: float
    norm: float
    simplified: bool
    caveat: str = "up to embedding constant"


def truncation_bound(
    scheme: WeightScheme, family: DownwardClosedFamily, norm_estimate: float, box: Box | None = None
) -> TruncationBound:
    """Bound on ||f - f_Lambda||_inf with the embedding constant set to 1.

    On boxes with all sides <= 1 (or ``box=None``) the tail is
    sum 2^(#u/2) gamma_u^(1/2); otherwise each term carries
    K_u = (prod_{j not in u} w_j)^(1/2) 2^(#u/2) prod_{j in u} w_j.
    """
    if norm_estimate < 0:
        raise InputError("norm estimate must be non-negative")
    d = family.d
    card, coord = scheme.half_logs(d)
    card = card + 0.5 * math.log(2) * np.arange(d + 1)
    simplified = box is None or bool(np.all(box.widths <= 1))
    const = 0.0
    if not simplified:
        logw = np.log(box.widths)
        coord = coord + 0.5 * logw
        const = 0.5 * float(np.sum(logw))
    tail = math.exp(const) * _complement_sum(d, card, coord, family)
    return TruncationBound(tail * norm_estimate, tail, norm_estimate, simplified)


def weighted_norm_estimate(
    f: BlackBoxFunction,
    anchor: Anchor,
    scheme: WeightScheme,
    box: Box,
    max_order: int | None = None,
    quadrature_points: int = DEFAULT_QUAD,
    fd_step: float = DEFAULT_FD_STEP,
) -> float:
    """sum over #u <= n of gamma_u^(-1) ||D^u f((.;c)_u)||^2_{L2(box_u)}.

    The empty set contributes gamma_0^(-1) f(c)^2.
    """
    d = f.d
    n = d if max_order is None else max_order
    if n < 0:
        raise InputError("max_order must be non-negative")
    if min(n, d) > 3:
        raise CapabilityError("mixed derivatives are limited to order 3")
    total = []
    for k in range(min(n, d) + 1):
        for u in _subsets_of_card(d, k):
            total.append(
                component_seminorm_sq(f, u, anchor, box, quadrature_points, fd_step) / gamma_weight(scheme, u)
            )
    return math.fsum(total)


def _subsets_of_card(d: int, k: int):
    for idx in combinations(range(d), k):
        yield SubsetMask.from_indices([j + 1 for j in idx], d)


def component_seminorm_sq(
    f: BlackBoxFunction,
    u: SubsetMask,
    anchor: Anchor,
    box: Box,
    quadrature_points: int = DEFAULT_QUAD,
    fd_step: float = DEFAULT_FD_STEP,
) -> float:
    """||D^u f((.;c)_u)||^2 over box_u, which equals ||D^u f_{u;c}||^2."""
    sub = box.restrict(u)
    nodes, w = gauss_legendre_box(sub.lower, sub.upper, quadrature_points)

    def g(xu):
        return f(anchored_extend(xu, u, anchor))

    vals = mixed_derivative(g, nodes, range(u.card), fd_step)
    return l2_norm_sq(vals, w)


def mixed_norm_sq(
    g,
    lower,
    upper,
    quadrature_points: int = DEFAULT_QUAD,
    fd_step: float = DEFAULT_FD_STEP,
    parts: bool = False,
):
    """||g||^2_{H^1_mix} = sum over all v of ||D^v g||^2_{L2} on a k-dim box.

    With ``parts=True`` a dict from v (as bit mask) to ||D^v g||^2 is returned.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    k = lower.size
    if k > 3:
        raise CapabilityError("mixed derivatives are limited to order 3")
    nodes, w = gauss_legendre_box(lower, upper, quadrature_points)
    out = {}
    for vb in range(1 << k):
        dims = [j for j in range(k) if vb >> j & 1]
        out[vb] = l2_norm_sq(mixed_derivative(g, nodes, dims, fd_step), w)
    return out if parts else math.fsum(out.values())


def component_mixed_norm_sq(
    f: BlackBoxFunction,
    u: SubsetMask,
    anchor: Anchor,
    box: Box,
    quadrature_points: int = DEFAULT_QUAD,
    fd_step: float = DEFAULT_FD_STEP,
) -> float:
    """||f_{u;c}||^2_{H^1_mix(box_u)}; the empty component gives f(c)^2."""
    if u.card == 0:
        return float(f(anchor.c)) ** 2
    sub = box.restrict(u)
    return mixed_norm_sq(
        lambda xu: anchored_component(f, u, anchor, xu), sub.lower, sub.upper, quadrature_points, fd_step
    )


def poincare_constant(widths, v: SubsetMask) -> float:
    """C_{v,u} = prod_{j in u} w_j^(1/2) prod_{j in u minus v} w_j^(1/2), u = all coordinates.

    Equals 1 when v = u.
    """
    w = np.asarray(widths, dtype=float)
    if v.bits == (1 << w.size) - 1:
        return 1.0
    rest = [j for j in range(w.size) if j not in v.indices]
    return float(np.sqrt(np.prod(w)) * np.sqrt(np.prod(w[rest])))


def tilde_c(widths) -> float:
    """1 / sum_{v subset u} C_{v,u}^2 for the box with the given side lengths."""
    k = len(widths)
    if k == 0:
        return 1.0
    total = math.fsum(poincare_constant(widths, SubsetMask(vb, k)) ** 2 for vb in range(1 << k))
    return 1.0 / total


@dataclass
class PoincareReport:
    lhs: float
    rhs: float
    constant: float
    slack: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else (0.0 if self.lhs == 0 else math.inf)

    @property
    def holds(self) -> bool:
        return self.lhs <= self.constant * self.rhs * (1 + self.slack) + 1e-14


def poincare_check(
    g,
    lower,
    upper,
    v: SubsetMask,
    quadrature_points: int = DEFAULT_QUAD,
    fd_step: float = DEFAULT_FD_STEP,
    slack: float = 0.05,
) -> PoincareReport:
    """Compare ||D^v g|| with C_{v,u} ||D^u g|| on a k-dimensional box (u = all axes).

    The caller asserts that g vanishes whenever x_l equals the pinning value
    for some l outside v.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    k = lower.size
    if v.d != k:
        raise InputError("v must be a subset of the box coordinates")
    nodes, w = gauss_legendre_box(lower, upper, quadrature_points)
    lhs = math.sqrt(l2_norm_sq(mixed_derivative(g, nodes, v.indices, fd_step), w))
    rhs = math.sqrt(l2_norm_sq(mixed_derivative(g, nodes, range(k), fd_step), w))
    return PoincareReport(lhs, rhs, poincare_constant(upper - lower, v), slack)


@dataclass
class NormInequalityReport:
    lhs: float
    rhs: float
    slack: float
    per_subset: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1 + self.slack)


def lower_bound_check(
    f: BlackBoxFunction,
    anchor: Anchor,
    scheme: WeightScheme,
    box: Box,
    quadrature_points: int = DEFAULT_QUAD,
    fd_step: float = DEFAULT_FD_STEP,
    slack: float = 0.05,
) -> NormInequalityReport:
    """sum_u gamma_u^(-1) C~_u ||f_{u;c}||^2_{H^1_mix} against ||f||^2_{c;gamma}."""
    d = f.d
    if d > 3:
        raise CapabilityError("norm checks are limited to d <= 3")
    norm = weighted_norm_estimate(f, anchor, scheme, box, d, quadrature_points, fd_step)
    terms = {}
    for b in range(1 << d):
        u = SubsetMask(b, d)
        ct = tilde_c(box.widths[list(u.indices)])
        terms[u] = ct * component_mixed_norm_sq(f, u, anchor, box, quadrature_points, fd_step) / gamma_weight(scheme, u)
    return NormInequalityReport(math.fsum(terms.values()), norm, slack, terms)


def anchor_bound_check(
    f: BlackBoxFunction,
    anchor: Anchor,
    scheme: WeightScheme,
    box: Box,
    quadrature_points: int = DEFAULT_QUAD,
    fd_step: float = DEFAULT_FD_STEP,
    slack: float = 0.05,
) -> dict:
    """Per subset u: ||f_{u;c}||^2_{H^1_mix} <= C_u gamma_u ||f||^2_{c;gamma}.

    Returns u -> NormInequalityReport.
    """
    d = f.d
    if d > 3:
        raise CapabilityError("norm checks are limited to d <= 3")
    norm = weighted_norm_estimate(f, anchor, scheme, box, d, quadrature_points, fd_step)
    out = {}
    for b in range(1 << d):
        u = SubsetMask(b, d)
        cu = 1.0 / tilde_c(box.widths[list(u.indices)])
        lhs = component_mixed_norm_sq(f, u, anchor, box, quadrature_points, fd_step)
        out[u] = NormInequalityReport(lhs, cu * gamma_weight(scheme, u) * norm, slack)
    return out


def bochner_norm_bound(scheme: WeightScheme, ratios: Sequence[float], f_norm: float, a_min: float) -> float:
    """(||F||/a_min) (sum_v gamma_v^(-1) (#v! prod_{j in v} r_j)^2)^(1/2) over all v."""
    d = len(ratios)
    check_enumerable(d)
    r = np.asarray(ratios, dtype=float)
    if np.any(r <= 0):
        # zero ratios kill every term containing them; drop those coordinates
        keep = [j for j in range(d) if r[j] > 0]
    else:
        keep = list(range(d))
    total = []
    for b in range(1 << d):
        u = SubsetMask(b, d)
        if any(j not in keep for j in u.indices):
            continue
        term = math.factorial(u.card) * float(np.prod(r[list(u.indices)]))
        total.append(term**2 / gamma_weight(scheme, u))
    return f_norm / a_min * math.sqrt(math.fsum(total))
