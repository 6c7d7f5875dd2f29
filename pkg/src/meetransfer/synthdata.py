"""Synthetic covariate-shift benchmark.

Responses follow ``y = theta^T x + eps`` with a fixed ground truth.
Source inputs are uniform on ``[-1, 1]^d``; target inputs are
``N(mu_T, 1)`` per coordinate. The noise law is shared by both domains.

Every draw is keyed on ``(scenario.seed, rep, role, mu_T)`` so a dataset
is reproducible from the scenario and those keys alone, and paired arms
of an experiment see the same data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NOISES = ("shifted_exponential", "mixed_gaussian", "laplace")
ROLES = ("source", "target_train", "target_test")

# mixture weights and variances of the mixed Gaussian noise
_MIX_P_OUTLIER = 0.05
_MIX_VAR_INLIER = 0.01
_MIX_VAR_OUTLIER = 100.0


@dataclass(frozen=True)
class ShiftScenario:
    dim: int = 100
    noise: str = "shifted_exponential"
    n_source: int = 1000
    n_target: int = 1000
    n_target_train: int = 100
    seed: int = 0
    theta_std: float = 0.1
    noise_enabled: bool = True

    def __post_init__(self):
        if self.noise not in NOISES:
            raise ValueError(f"unknown noise {self.noise!r}; choose from {NOISES}")
        if min(self.dim, self.n_source, self.n_target, self.n_target_train) < 1:
            raise ValueError("dimension and sample sizes must be positive")

    @property
    def theta_true(self) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x7E7A]))
        return rng.normal(0.0, self.theta_std, size=self.dim)


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    role: str = "source"

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"inconsistent shapes X{self.X.shape} y{self.y.shape}")

    def __len__(self) -> int:
        return self.X.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.role)


def _rng(scenario: ShiftScenario, rep: int, role: str, mu_T: float) -> np.random.Generator:
    mu_key = int(round(float(mu_T) * 1_000_000))
    key = [scenario.seed, int(rep), ROLES.index(role), mu_key & 0xFFFFFFFF, mu_key < 0]
    return np.random.default_rng(np.random.SeedSequence(key))


def sample_noise(tag: str, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` noise values. ``seed`` may be an int or a ``Generator``.

    ``shifted_exponential`` is ``Exp(1) - 1`` (zero mean), ``laplace`` is
    ``Laplace(0, 1)`` and ``mixed_gaussian`` is
    ``0.95 N(0, 0.01) + 0.05 N(0, 100)`` with the second arguments read as
    variances.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if tag == "shifted_exponential":
        return rng.exponential(1.0, size=n) - 1.0
    if tag == "laplace":
        return rng.laplace(0.0, 1.0, size=n)
    if tag == "mixed_gaussian":
        outlier = rng.random(n) < _MIX_P_OUTLIER
        z = rng.standard_normal(n)
        return z * np.where(outlier, np.sqrt(_MIX_VAR_OUTLIER), np.sqrt(_MIX_VAR_INLIER))
    raise ValueError(f"unknown noise {tag!r}; choose from {NOISES}")


def _respond(scenario: ShiftScenario, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    y = X @ scenario.theta_true
    if scenario.noise_enabled:
        y = y + sample_noise(scenario.noise, X.shape[0], rng)
    return y


def gen_source(scenario: ShiftScenario, rep: int = 0) -> Dataset:
    rng = _rng(scenario, rep, "source", 0.0)
    X = rng.uniform(-1.0, 1.0, size=(scenario.n_source, scenario.dim))
    return Dataset(X, _respond(scenario, X, rng), "source")


def gen_target(scenario: ShiftScenario, mu_T: float, rep: int = 0,
               role: str = "target_test", n: int | None = None) -> Dataset:
    if role not in ("target_train", "target_test"):
        raise ValueError(f"target role must be target_train or target_test, got {role!r}")
    if n is None:
        n = scenario.n_target_train if role == "target_train" else scenario.n_target
    rng = _rng(scenario, rep, role, mu_T)
    X = rng.normal(float(mu_T), 1.0, size=(n, scenario.dim))
    return Dataset(X, _respond(scenario, X, rng), role)


def mixed_gaussian_tail_prob(threshold: float = 1.0) -> float:
    """Exact ``P(|eps| > threshold)`` for the mixed Gaussian noise."""
    from scipy.stats import norm

    p_in = 2.0 * norm.sf(threshold / np.sqrt(_MIX_VAR_INLIER))
    p_out = 2.0 * norm.sf(threshold / np.sqrt(_MIX_VAR_OUTLIER))
    return float((1 - _MIX_P_OUTLIER) * p_in + _MIX_P_OUTLIER * p_out)
