"""Tensor Gauss-Legendre quadrature and mixed central differences."""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

from .errors import CapabilityError, InputError, StepError

DEFAULT_QUAD = 64
DEFAULT_FD_STEP = 1e-4
MAX_QUAD_POINTS = 2_000_000


def gauss_legendre_box(lower, upper, q: int = DEFAULT_QUAD) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre nodes (N, k) and weights (N,) on a k-dimensional box.

    A zero-dimensional box yields one empty node of weight 1.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    k = lower.size
    if q < 1:
        raise InputError("need at least one quadrature point per axis")
    if k == 0:
        return np.zeros((1, 0)), np.ones(1)
    if q**k > MAX_QUAD_POINTS:
        raise CapabilityError(f"{q}^{k} quadrature points exceed the cap {MAX_QUAD_POINTS}")
    t, w = np.polynomial.legendre.leggauss(q)
    half = (upper - lower) / 2
    axes = [lower[j] + half[j] * (t + 1) for j in range(k)]
    wts = [half[j] * w for j in range(k)]
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
    weights = wts[0]
    for wj in wts[1:]:
        weights = np.multiply.outer(weights, wj)
    return nodes, weights.reshape(-1)


def _mixed_cd(g: Callable, X: np.ndarray, dims: Sequence[int], h: float) -> np.ndarray:
    out = np.zeros(X.shape[0])
    for signs in itertools.product((1.0, -1.0), repeat=len(dims)):
        shifted = X.copy()
        for j, s in zip(dims, signs):
            shifted[:, j] += s * h
        out += np.prod(signs) * np.asarray(g(shifted), dtype=float).reshape(-1)
    return out / (2 * h) ** len(dims)


def mixed_derivative(
    g: Callable,
    X,
    dims: Sequence[int],
    h: float = DEFAULT_FD_STEP,
    richardson: bool = True,
    check: float | None = None,
) -> np.ndarray:
    """D^dims g at the rows of X by nested central differences.

    With ``richardson`` the steps h and h/2 are combined to cancel the
    O(h^2) term. When ``check`` is set, a relative disagreement between the
    two steps above ``check`` (measured against the larger of the two
    estimates) raises StepError.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    dims = list(dims)
    if not dims:
        return np.asarray(g(X), dtype=float).reshape(-1)
    if not h > 0:
        raise InputError("finite-difference step must be positive")
    d1 = _mixed_cd(g, X, dims, h)
    if not richardson:
        return d1
    d2 = _mixed_cd(g, X, dims, h / 2)
    if check is not None:
        scale = max(np.max(np.abs(d1)), np.max(np.abs(d2)))
        if scale > 0 and np.max(np.abs(d1 - d2)) > check * scale:
            raise StepError(f"finite differences with step {h:g} disagree under refinement")
    return (4 * d2 - d1) / 3


def l2_norm_sq(values, weights) -> float:
    return float(np.dot(weights, np.square(values)))
