"""Penalized kernel least squares on a Lambda-subspace.

The plain estimator solves (K(X,X) + lam I) alpha = y; the block-weighted
estimator solves (K(X,X) + lam W^{-1}) alpha = y with W = diag(1/N_k) per
block of the sampling set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import InputError, NumericalError
from .kernels import LambdaKernel, gram
from .points import SamplingSet

JITTER_START = 1e-14
JITTER_STOP = 1e-8
RESIDUAL_TOL = 1e-8
PREDICT_CHUNK = 2048


@dataclass(eq=False)
class RegressionModel:
    kernel: LambdaKernel
    X: np.ndarray
    alpha: np.ndarray
    lam: float
    weighted: bool = False
    block_sizes: list[int] | None = None
    block_labels: list | None = None
    diagnostics: dict = field(default_factory=dict)

    def __call__(self, points) -> np.ndarray:
        return predict(self, points)


def block_weights(block_sizes) -> np.ndarray:
    """Diagonal of W: 1/N_k repeated N_k times for each block."""
    sizes = [int(n) for n in block_sizes]
    if any(n < 1 for n in sizes):
        raise InputError("block sizes must be positive")
    return np.concatenate([np.full(n, 1.0 / n) for n in sizes])


def _solve_spd(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, dict]:
    """Cholesky solve with escalating diagonal jitter (relative to trace/N)."""
    n = A.shape[0]
    scale = np.trace(A) / n if n else 1.0
    jitter = 0.0
    step = JITTER_START
    while True:
        try:
            M = A if jitter == 0.0 else A + jitter * scale * np.eye(n)
            factor = cho_factor(M, lower=True, check_finite=False)
            break
        except LinAlgError:
            if step > JITTER_STOP:
                cond = np.linalg.cond(A)
                raise NumericalError(
                    f"factorization failed after jitter {jitter:.1e}; condition estimate {cond:.3e}"
                ) from None
            jitter = step
            step *= 10
    x = cho_solve(factor, b, check_finite=False)
    diag = np.abs(np.diag(factor[0]))
    info = {
        "jitter": float(jitter * scale),
        "condition_estimate": float((diag.max() / diag.min()) ** 2) if diag.min() > 0 else math.inf,
    }
    return x, info


def _fit(kernel, X, y, lam, inv_w, weighted, sizes=None, labels=None) -> RegressionModel:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if not lam > 0:
        raise InputError("smoothing parameter must be positive")
    if X.shape[0] != y.size or y.size < 1:
        raise InputError("need as many values as points (at least one)")
    A = gram(kernel, X)
    shift = lam * inv_w
    A[np.diag_indices_from(A)] += shift
    alpha, info = _solve_spd(A, y)
    Aa = A @ alpha
    resid = np.linalg.norm(Aa + info["jitter"] * alpha - y)
    ynorm = np.linalg.norm(y)
    if resid > RESIDUAL_TOL * ynorm:
        raise NumericalError(f"linear system residual {resid:.3e} too large")
    fitted = Aa - shift * alpha
    w = 1.0 / inv_w
    info.update(
        residual_norm=float(np.linalg.norm(y - fitted)),
        system_residual=float(resid),
        objective=float(np.sum(w * (y - fitted) ** 2) + lam * alpha @ fitted),
    )
    return RegressionModel(kernel, X, alpha, float(lam), weighted, sizes, labels, info)


def fit_plain(kernel: LambdaKernel, X, y, lam: float) -> RegressionModel:
    """Minimizer of sum |y_j - s(x_j)|^2 + lam ||s||^2 over the kernel's space."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return _fit(kernel, X, y, lam, np.ones(X.shape[0]), False)


def fit_weighted(kernel: LambdaKernel, sampling: SamplingSet, y, lam: float) -> RegressionModel:
    """Block-weighted fit; ``y`` lists values block by block in family order."""
    sizes = sampling.block_sizes
    inv_w = np.concatenate([np.full(n, float(n)) for n in sizes])
    return _fit(kernel, sampling.points, y, lam, inv_w, True, sizes, sampling.labels)


def predict(model: RegressionModel, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(pts.shape[0])
    # bounded memory: never hold more than PREDICT_CHUNK rows of the cross Gram matrix
    for start in range(0, pts.shape[0], PREDICT_CHUNK):
        stop = min(start + PREDICT_CHUNK, pts.shape[0])
        out[start:stop] = gram(model.kernel, model.X, pts[start:stop]) @ model.alpha
    return out


def objective(alpha, kernel: LambdaKernel, X, y, lam: float, weights=None, K=None) -> float:
    """J(s) for s = sum_i alpha_i K(., x_i), with ||s||^2 = alpha^T K alpha."""
    alpha = np.asarray(alpha, dtype=float)
    y = np.asarray(y, dtype=float)
    if K is None:
        K = gram(kernel, X)
    s = K @ alpha
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    return float(np.sum(w * (y - s) ** 2) + lam * alpha @ s)


def native_norm_sq(alpha, K) -> float:
    return float(np.asarray(alpha) @ (K @ np.asarray(alpha)))


def mixed_rho1(sigma: float, n: int) -> float:
    return (sigma + 2.5) * (n - 1) + 1


def mixed_rho2(n: int) -> float:
    return 2 * n - 1


@dataclass
class LambdaRule:
    """Smoothing-parameter rule.

    kinds: ``fixed`` (lam), ``ratio_f1_f2`` (sqrt(lam) = F1/F2),
    ``sobolev_h`` (sqrt(lam) = h^(sigma - d/2), or the block sum
    sum_v h_v^(sigma - d/2 + #v/2) when ``block_h`` is given) and
    ``mixed_logN`` (sqrt(lam) = (log N)^(rho1(sigma,n) - rho2(n)) N^(1/2 - sigma)).
    """

    kind: str
    lam: float | None = None
    F1: float | None = None
    F2: float | None = None
    sigma: float | None = None
    d: int | None = None
    n: int | None = None
    h: float | None = None
    N: int | None = None
    block_h: list | None = None


def _need(rule, *names):
    for name in names:
        val = getattr(rule, name)
        if val is None:
            raise InputError(f"lambda rule {rule.kind!r} needs parameter {name!r}")


def select_lambda(rule: LambdaRule) -> float:
    kind = rule.kind
    if kind == "fixed":
        _need(rule, "lam")
        lam = float(rule.lam)
    elif kind == "ratio_f1_f2":
        _need(rule, "F1", "F2")
        if rule.F1 <= 0 or rule.F2 <= 0:
            raise InputError("F1 and F2 must be positive")
        lam = (rule.F1 / rule.F2) ** 2
    elif kind == "sobolev_h":
        _need(rule, "sigma", "d")
        expo = rule.sigma - rule.d / 2
        if expo <= 0:
            raise InputError(f"sigma={rule.sigma} must exceed d/2={rule.d / 2}")
        if rule.block_h is not None:
            root = sum(h ** (expo + k / 2) for h, k in rule.block_h if k > 0)
            if root <= 0:
                raise InputError("block fill distances give a zero smoothing parameter")
        else:
            _need(rule, "h")
            if rule.h <= 0:
                raise InputError("fill distance must be positive")
            root = rule.h**expo
        lam = root**2
    elif kind == "mixed_logN":
        _need(rule, "sigma", "n", "N")
        if rule.N < 2:
            raise InputError("mixed rule needs N >= 2")
        logn = math.log(rule.N)
        root = logn ** (mixed_rho1(rule.sigma, rule.n) - mixed_rho2(rule.n)) * rule.N ** (0.5 - rule.sigma)
        lam = root**2
    else:
        raise InputError(f"unknown lambda rule {kind!r}")
    if not lam > 0:
        raise InputError(f"lambda rule produced non-positive value {lam}")
    return lam
