"""Regression losses on residuals ``e = y - g(x)``.

Every loss exposes ``value(e, X=None)`` and ``grad(e, X=None)``, the latter
being the gradient with respect to ``e``. Only HSIC reads ``X``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import ClassVar

import numpy as np

from . import entropy
from .kernels import center, check_sigma, gram


def _vec(e) -> np.ndarray:
    e = np.asarray(e, dtype=float).ravel()
    if e.size == 0:
        raise ValueError("empty residual vector")
    return e


class Loss:
    name: ClassVar[str] = ""
    # losses blind to a constant offset in e need post-hoc bias correction
    translation_invariant: ClassVar[bool] = False
    # kernel losses whose bandwidth can be picked by the median rule
    needs_sigma: ClassVar[bool] = False

    def value(self, e, X=None) -> float:
        raise NotImplementedError

    def grad(self, e, X=None) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, e, X=None) -> float:
        return self.value(e, X)


@dataclass(frozen=True)
class MSE(Loss):
    name: ClassVar[str] = "mse"

    def value(self, e, X=None):
        e = _vec(e)
        return float(np.mean(e * e))

    def grad(self, e, X=None):
        e = _vec(e)
        return 2.0 * e / e.size


@dataclass(frozen=True)
class MAE(Loss):
    name: ClassVar[str] = "mae"

    def value(self, e, X=None):
        e = _vec(e)
        return float(np.mean(np.abs(e)))

    def grad(self, e, X=None):
        # subgradient 0 at e == 0
        e = _vec(e)
        return np.sign(e) / e.size


@dataclass(frozen=True)
class Huber(Loss):
    name: ClassVar[str] = "huber"
    delta: float = 4.0

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError(f"huber delta must be positive, got {self.delta}")

    def value(self, e, X=None):
        e = _vec(e)
        a = np.abs(e)
        d = self.delta
        per = np.where(a <= d, 0.5 * e * e, d * (a - 0.5 * d))
        return float(per.mean())

    def grad(self, e, X=None):
        e = _vec(e)
        return np.clip(e, -self.delta, self.delta) / e.size


@dataclass(frozen=True)
class Barron(Loss):
    """General robust loss, valid for ``alpha`` outside {0, 2}."""

    name: ClassVar[str] = "barron"
    alpha: float = -4.0
    scale_c: float = 0.1

    def __post_init__(self):
        if not (self.scale_c > 0 and math.isfinite(self.scale_c)):
            raise ValueError(f"barron scale must be positive, got {self.scale_c}")
        if self.alpha in (0.0, 2.0) or not math.isfinite(self.alpha):
            raise ValueError("barron alpha in {0, 2} (limit cases) is not supported")

    def value(self, e, X=None):
        e = _vec(e)
        a, c = self.alpha, self.scale_c
        b = abs(a - 2.0)
        z = (e / c) ** 2 / b + 1.0
        return float(np.mean((b / a) * (z ** (a / 2.0) - 1.0)))

    def grad(self, e, X=None):
        e = _vec(e)
        a, c = self.alpha, self.scale_c
        b = abs(a - 2.0)
        z = (e / c) ** 2 / b + 1.0
        return (e / (c * c)) * z ** (a / 2.0 - 1.0) / e.size


@dataclass(frozen=True)
class MEE(Loss):
    """Minimum error entropy: the quadratic Renyi entropy of ``e`` in bits.

    ``sigma=None`` means "not chosen yet"; training code fills it in with
    the median rule via :meth:`with_sigma`.
    """

    name: ClassVar[str] = "mee"
    translation_invariant: ClassVar[bool] = True
    needs_sigma: ClassVar[bool] = True
    sigma: float | None = 1.0
    estimator: str = "matrix"

    def __post_init__(self):
        if self.estimator not in ("matrix", "kde"):
            raise ValueError(f"unknown MEE estimator {self.estimator!r}")
        if self.sigma is not None:
            check_sigma(self.sigma)

    def with_sigma(self, sigma: float) -> "MEE":
        return replace(self, sigma=check_sigma(sigma))

    def _sigma(self) -> float:
        if self.sigma is None:
            raise ValueError("MEE bandwidth not set; call with_sigma first")
        return self.sigma

    def value(self, e, X=None):
        if self.estimator == "matrix":
            return entropy.matrix_h2(e, self._sigma())
        return entropy.kde_h2(e, self._sigma())

    def grad(self, e, X=None):
        if self.estimator == "matrix":
            return entropy.matrix_renyi_h2_grad(e, self._sigma())
        return entropy.kde_h2_grad(e, self._sigma())


@dataclass(frozen=True)
class HSIC(Loss):
    """Biased HSIC between inputs and residuals, ``tr(Kx H Ke H) / (N-1)^2``."""

    name: ClassVar[str] = "hsic"
    translation_invariant: ClassVar[bool] = True
    sigma_x: float = 1.0
    sigma_e: float = 1.0

    def __post_init__(self):
        check_sigma(self.sigma_x)
        check_sigma(self.sigma_e)

    def _parts(self, e, X):
        e = _vec(e)
        if X is None:
            raise ValueError("HSIC needs the inputs X")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != e.size:
            raise ValueError(f"X has {X.shape[0]} rows but e has {e.size} entries")
        if e.size < 2:
            raise ValueError("HSIC needs at least 2 samples")
        Kx_c = center(gram(X, self.sigma_x))
        return e, Kx_c

    def value(self, e, X=None):
        e, Kx_c = self._parts(e, X)
        return hsic_centered(Kx_c, e, self.sigma_e)

    def grad(self, e, X=None):
        e, Kx_c = self._parts(e, X)
        n = e.size
        diff = e[:, None] - e[None, :]
        Ke = np.exp(-(diff * diff) / (2.0 * self.sigma_e ** 2))
        g = -2.0 * (Kx_c * Ke * diff).sum(axis=1) / self.sigma_e ** 2
        return g / (n - 1) ** 2


LOSSES = {cls.name: cls for cls in (MSE, MAE, Huber, Barron, MEE, HSIC)}

_ALIASES = {
    "mee_matrix": ("mee", {"estimator": "matrix"}),
    "mee_kde": ("mee", {"estimator": "kde"}),
}


def make_loss(name: str, **params) -> Loss:
    """Build a loss by name, e.g. ``make_loss("huber", delta=4)``.

    Accepts ``mse, mae, huber, barron, mee, mee_matrix, mee_kde, hsic``.
    Unknown parameters raise ``TypeError``.
    """
    key = name.strip().lower()
    if key in _ALIASES:
        key, extra = _ALIASES[key]
        params = {**extra, **params}
    try:
        cls = LOSSES[key]
    except KeyError:
        raise ValueError(f"unknown loss {name!r}; choose from {sorted(LOSSES) + sorted(_ALIASES)}") from None
    return cls(**params)


def hsic_centered(Kx_c: np.ndarray, e, sigma_e: float) -> float:
    """HSIC from an already centered input Gram matrix (reusable across residuals)."""
    e = _vec(e)
    n = e.size
    Ke = gram(e, sigma_e)
    # tr(Kx H Ke H) = <H Kx H, Ke>_F since H is symmetric idempotent
    return float(np.sum(Kx_c * Ke) / (n - 1) ** 2)

