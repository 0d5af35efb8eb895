"""Anchored univariate kernels, Lambda-subspace kernels and Gram assembly."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import InputError
from .index_sets import DownwardClosedFamily, SubsetMask

# rows of the Gram matrix are assembled in chunks of this many points
GRAM_CHUNK = 1024


def matern(r, nu: float, lengthscale: float):
    """Closed-form Matern kernel for nu in {1/2, 3/2, 5/2}."""
    s = np.abs(r) / lengthscale
    if np.isclose(nu, 0.5):
        return np.exp(-s)
    if np.isclose(nu, 1.5):
        t = np.sqrt(3.0) * s
        return (1.0 + t) * np.exp(-t)
    if np.isclose(nu, 2.5):
        t = np.sqrt(5.0) * s
        return (1.0 + t + t * t / 3.0) * np.exp(-t)
    raise InputError(f"Matern smoothness nu={nu} not supported (use 0.5, 1.5 or 2.5)")


@dataclass(frozen=True)
class UnivariateKernel:
    """A kernel on [a, b] that vanishes whenever one argument equals the anchor.

    ``kind='anchored_h1'`` is min(|x-c|, |y-c|) on the same side of c and 0
    otherwise. ``kind='pinned'`` conditions a base kernel k on the anchor,
    k(x,y) - k(x,c) k(c,y) / k(c,c), with base ``'brownian'`` (min(x-a, y-a))
    or ``'matern'``.
    """

    kind: str = "anchored_h1"
    anchor: float = 0.0
    interval: tuple[float, float] = (0.0, 1.0)
    base: str = "matern"
    nu: float = 2.5
    lengthscale: float = 1.0

    def __post_init__(self):
        a, b = self.interval
        if not a < b:
            raise InputError("kernel interval must satisfy a < b")
        if not a <= self.anchor <= b:
            raise InputError("kernel anchor outside its interval")
        if self.kind not in ("anchored_h1", "pinned"):
            raise InputError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "pinned":
            if self.base not in ("brownian", "matern"):
                raise InputError(f"unknown base kernel {self.base!r}")
            if self.base == "matern":
                matern(0.0, self.nu, self.lengthscale)
                if self.lengthscale <= 0:
                    raise InputError("lengthscale must be positive")
            if self._base(self.anchor, self.anchor) <= 0:
                raise InputError("pinned kernel needs k(c, c) > 0")

    def _base(self, x, y):
        if self.base == "brownian":
            a = self.interval[0]
            return np.minimum(np.asarray(x) - a, np.asarray(y) - a)
        return matern(np.asarray(x) - np.asarray(y), self.nu, self.lengthscale)

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        c = self.anchor
        if self.kind == "anchored_h1":
            dx, dy = x - c, y - c
            return np.where(dx * dy > 0, np.minimum(np.abs(dx), np.abs(dy)), 0.0)
        kcc = self._base(c, c)
        return self._base(x, y) - self._base(x, c) * self._base(c, y) / kcc


def eval_univariate(k: UnivariateKernel, x, y):
    return k(x, y)


def kernel_factors(kind: str, anchor, lower, upper, **params) -> list[UnivariateKernel]:
    """One univariate factor per coordinate, sharing ``kind`` and parameters."""
    out = []
    for c, a, b in zip(np.ravel(anchor), np.ravel(lower), np.ravel(upper)):
        if kind == "anchored_h1":
            out.append(UnivariateKernel("anchored_h1", float(c), (float(a), float(b))))
        elif kind == "pinned_matern":
            out.append(
                UnivariateKernel(
                    "pinned", float(c), (float(a), float(b)), base="matern",
                    nu=params.get("nu", 2.5), lengthscale=params.get("lengthscale", 1.0),
                )
            )
        elif kind == "pinned_brownian":
            out.append(UnivariateKernel("pinned", float(c), (float(a), float(b)), base="brownian"))
        else:
            raise InputError(f"unknown kernel kind {kind!r}")
    return out


@dataclass(frozen=True, eq=False)
class LambdaKernel:
    """K(x, y) = sum over u in the family of gamma_u * prod_{j in u} k_j(x_j, y_j)."""

    family: DownwardClosedFamily
    gamma: Mapping[SubsetMask, float]
    factors: Sequence[UnivariateKernel]
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.factors) != self.family.d:
            raise InputError("need one univariate factor per coordinate")
        g = {}
        for u in self.family:
            if u not in self.gamma:
                raise InputError(f"missing weight for {u}")
            val = float(self.gamma[u])
            if not val > 0:
                raise InputError(f"weight for {u} must be positive")
            g[u] = val
        object.__setattr__(self, "gamma", g)

    @property
    def d(self) -> int:
        return self.family.d

    @property
    def anchor(self) -> np.ndarray:
        return np.array([k.anchor for k in self.factors])

    def __call__(self, x, y) -> float:
        return eval_lambda(self, x, y)

    def _block(self, Y: np.ndarray, X: np.ndarray) -> np.ndarray:
        # every factor vanishes when one argument sits at the anchor, so the
        # term for u only touches rows and columns whose u-coordinates all
        # differ from the anchor
        c = self.anchor
        nz_y = Y != c
        nz_x = X != c
        G = np.zeros((Y.shape[0], X.shape[0]))
        for u in self.family:
            g = self.gamma[u]
            if u.card == 0:
                G += g
                continue
            idx = list(u.indices)
            rows = np.flatnonzero(nz_y[:, idx].all(axis=1))
            cols = np.flatnonzero(nz_x[:, idx].all(axis=1))
            if rows.size == 0 or cols.size == 0:
                continue
            term = _univariate_matrix(self.factors[idx[0]], Y[rows, idx[0]], X[cols, idx[0]])
            for j in idx[1:]:
                term *= _univariate_matrix(self.factors[j], Y[rows, j], X[cols, j])
            if rows.size == Y.shape[0] and cols.size == X.shape[0]:
                G += g * term
            else:
                G[np.ix_(rows, cols)] += g * term
        return G


def _univariate_matrix(k: UnivariateKernel, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    # grid-based point sets repeat few coordinate values; evaluate on those only
    ux, ix = np.unique(x, return_inverse=True)
    uy, iy = np.unique(y, return_inverse=True)
    if ux.size * uy.size * 4 > x.size * y.size:
        return k(y[:, None], x[None, :])
    small = k(uy[:, None], ux[None, :])
    return small[iy[:, None], ix[None, :]]


def eval_lambda(K: LambdaKernel, x, y) -> float:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    y = np.asarray(y, dtype=float).reshape(1, -1)
    return float(K._block(x, y)[0, 0])


def gram(K: LambdaKernel, X, Y=None) -> np.ndarray:
    """Matrix with entries K(y_i, x_j); ``Y`` defaults to ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != K.d or Y.shape[1] != K.d:
        raise InputError("point dimension does not match the kernel")
    out = np.empty((Y.shape[0], X.shape[0]))
    for start in range(0, Y.shape[0], GRAM_CHUNK):
        stop = min(start + GRAM_CHUNK, Y.shape[0])
        out[start:stop] = K._block(Y[start:stop], X)
    return out


def constant_gamma(family: DownwardClosedFamily, value: float = 1.0) -> dict:
    return {u: value for u in family}


def make_lambda_kernel(
    family: DownwardClosedFamily,
    anchor,
    lower,
    upper,
    gamma: Mapping[SubsetMask, float] | Callable[[SubsetMask], float] | float = 1.0,
    kind: str = "anchored_h1",
    **params,
) -> LambdaKernel:
    """Convenience constructor used by the pipelines and the CLI."""
    if callable(gamma):
        g = {u: gamma(u) for u in family}
    elif isinstance(gamma, Mapping):
        g = dict(gamma)
    else:
        g = constant_gamma(family, float(gamma))
    factors = kernel_factors(kind, anchor, lower, upper, **params)
    cfg = {"kind": kind, **params}
    return LambdaKernel(family, g, factors, cfg)
