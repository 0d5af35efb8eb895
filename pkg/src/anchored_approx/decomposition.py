"""Anchored components, Lambda-truncations and their verification."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CapabilityError, InputError
from .index_sets import DownwardClosedFamily, SubsetMask, iter_submasks
from .points import Anchor, Box, anchored_extend

MAX_COMPONENT_ORDER = 20


class BlackBoxFunction:
    """A deterministic function on R^d with a thread-safe evaluation counter.

    ``evaluator`` maps an (N, d) array to N values. Scalar evaluators can be
    wrapped with ``vectorized=False``.
    """

    def __init__(self, evaluator: Callable, d: int, vectorized: bool = True, name: str = ""):
        self._fn = evaluator
        self.d = d
        self.vectorized = vectorized
        self.name = name
        self._count = 0
        self._lock = threading.Lock()

    @property
    def eval_counter(self) -> int:
        return self._count

    def reset_counter(self) -> None:
        with self._lock:
            self._count = 0

    def __call__(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = x.reshape(1, -1) if single else x
        if pts.shape[1] != self.d:
            raise InputError(f"expected points of dimension {self.d}, got {pts.shape[1]}")
        with self._lock:
            self._count += pts.shape[0]
        if self.vectorized:
            vals = np.asarray(self._fn(pts), dtype=float).reshape(-1)
        else:
            vals = np.array([float(self._fn(p)) for p in pts])
        return float(vals[0]) if single else vals


def anchored_component(f: BlackBoxFunction, u: SubsetMask, anchor: Anchor, x_u) -> np.ndarray | float:
    """f_{u;c}(x_u) by inclusion-exclusion over the 2^#u anchored restrictions.

    ``x_u`` is a vector of length #u or an (M, #u) array.
    """
    if u.card > MAX_COMPONENT_ORDER:
        raise CapabilityError(f"component of order {u.card} needs 2^{u.card} evaluations")
    x_u = np.asarray(x_u, dtype=float)
    single = x_u.ndim <= 1
    xu = x_u.reshape(1, -1) if single else x_u
    if u.card == 0:
        xu = np.zeros((xu.shape[0], 0))
    if xu.shape[1] != u.card:
        raise InputError(f"expected {u.card} coordinates for {u}")
    full = anchored_extend(xu, u, anchor)
    total = np.zeros(xu.shape[0])
    for vb in iter_submasks(u.bits):
        sign = -1.0 if (u.card - vb.bit_count()) % 2 else 1.0
        pts = full.copy()
        off = [j for j in u.indices if not vb >> j & 1]
        pts[:, off] = anchor.c[off]
        total += sign * f(pts)
    return float(total[0]) if single else total


@dataclass(frozen=True, eq=False)
class TruncationPlan:
    """Integer weights a_v such that f_Lambda(x) = sum_v a_v f((x;c)_v)."""

    family: DownwardClosedFamily
    anchor: Anchor
    coefficients: dict = field(default_factory=dict)


def build_truncation_plan(family: DownwardClosedFamily, anchor: Anchor) -> TruncationPlan:
    if anchor.d != family.d:
        raise InputError("anchor and family dimensions differ")
    coef = {v: 0 for v in family}
    for u in family:
        for vb in iter_submasks(u.bits):
            v = SubsetMask(vb, family.d)
            coef[v] += -1 if (u.card - v.card) % 2 else 1
    return TruncationPlan(family, anchor, coef)


def eval_truncation(plan: TruncationPlan, f: BlackBoxFunction, x) -> np.ndarray | float:
    """f_Lambda at one point or an (M, d) array; |Lambda| evaluations per point."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x.reshape(1, -1) if single else x
    c = plan.anchor.c
    total = np.zeros(pts.shape[0])
    for v, a in plan.coefficients.items():
        restricted = np.tile(c, (pts.shape[0], 1))
        idx = list(v.indices)
        restricted[:, idx] = pts[:, idx]
        vals = f(restricted)
        if a:
            total += a * vals
    return float(total[0]) if single else total


def full_decomposition_sum(f: BlackBoxFunction, anchor: Anchor, x) -> float:
    """Sum of all 2^d anchored components at x (reproduces f(x))."""
    d = f.d
    x = np.asarray(x, dtype=float)
    return float(
        sum(
            anchored_component(f, SubsetMask(b, d), anchor, x[list(SubsetMask(b, d).indices)])
            for b in range(1 << d)
        )
    )


@dataclass
class AnnihilationReport:
    trials: int
    max_violation: float
    scale: float
    tolerance: float
    worst_subset: SubsetMask | None

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tolerance


def annihilation_check(
    f: BlackBoxFunction,
    family: DownwardClosedFamily,
    anchor: Anchor,
    box: Box,
    trials: int = 100,
    seed: int = 0,
    rtol: float = 1e-12,
) -> AnnihilationReport:
    """Evaluate f_{u;c} with one coordinate of u pinned to the anchor."""
    if trials < 1:
        raise InputError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    candidates = [u for u in family if u.card > 0]
    worst, worst_u, fmax = 0.0, None, 0.0
    if candidates:
        for _ in range(trials):
            u = candidates[rng.integers(len(candidates))]
            x = box.sample(1, rng)[0]
            fmax = max(fmax, abs(f(x)))
            xu = x[list(u.indices)]
            pos = int(rng.integers(u.card))
            xu[pos] = anchor.c[u.indices[pos]]
            val = abs(anchored_component(f, u, anchor, xu))
            if val > worst:
                worst, worst_u = val, u
    scale = 1.0 + fmax
    return AnnihilationReport(trials, worst, scale, rtol * scale, worst_u)


def component_norms_mc(
    f: BlackBoxFunction,
    family: DownwardClosedFamily,
    anchor: Anchor,
    box: Box,
    samples: int = 4096,
    seed: int = 0,
) -> dict:
    """Root-mean-square of each anchored component over the box, by Monte Carlo."""
    rng = np.random.default_rng(seed)
    pts = box.sample(samples, rng)
    out = {}
    for u in family:
        vals = anchored_component(f, u, anchor, pts[:, list(u.indices)])
        out[u] = float(np.sqrt(np.mean(np.square(vals))))
    return out
