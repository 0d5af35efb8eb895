"""Built-in test functions used by the CLI and the experiments."""

from __future__ import annotations

import numpy as np

from .decomposition import BlackBoxFunction
from .errors import InputError


def _const(d, **kw):
    value = kw.get("value", 1.0)
    return lambda X: np.full(X.shape[0], value)


def _product(d, **kw):
    return lambda X: np.prod(1.0 + X, axis=1)


def _genz_oscillatory(d, **kw):
    a = np.asarray(kw.get("a", 1.0 / np.arange(1, d + 1)), dtype=float)
    w = kw.get("w", 0.3)
    return lambda X: np.cos(2 * np.pi * w + X @ a)


def _genz_corner_peak(d, **kw):
    a = np.asarray(kw.get("a", 1.0 / np.arange(1, d + 1) ** 2), dtype=float)
    return lambda X: (1.0 + X @ a) ** (-(d + 1))


def _additive_sin(d, **kw):
    return lambda X: np.sum(np.sin(X), axis=1)


def bump_sum(d, family, centers=None, width: float = 1.0, scale: float = 0.5):
    """Sum over u in the family of scale^#u prod_{j in u} exp(-(x_j - mu_j)^2 / (2 width^2)).

    Every term depends only on the variables in u, so the result is an exact
    Lambda-sum for the given family.
    """
    mu = np.asarray(centers if centers is not None else 0.3 * np.cos(np.arange(1, d + 1)), dtype=float)
    members = [(u.indices, scale**u.card) for u in family]

    def evaluate(X):
        B = np.exp(-((X - mu) ** 2) / (2 * width**2))
        out = np.zeros(X.shape[0])
        for idx, w in members:
            out += w * (np.prod(B[:, list(idx)], axis=1) if idx else 1.0)
        return out

    return evaluate


def sin_product(X):
    return np.prod(np.sin(X), axis=1)


REGISTRY = {
    "const": _const,
    "product": _product,
    "genz-oscillatory": _genz_oscillatory,
    "genz-corner-peak": _genz_corner_peak,
    "additive-sin": _additive_sin,
}


def make_function(name: str, d: int, **params) -> BlackBoxFunction:
    """Instantiate a registry function of dimension ``d``."""
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise InputError(f"unknown function {name!r}; choose from {sorted(REGISTRY)}") from None
    return BlackBoxFunction(factory(d, **params), d, name=name)
