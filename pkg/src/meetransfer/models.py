"""Differentiable regressors ``g(x) = w^T f(x; theta) + b``.

``f`` is the identity for the linear model (``theta`` is empty) and a
stack of dense layers for the MLP. ``b`` is the post-hoc bias added after
training with a translation-invariant loss; it is never trained by
gradient steps.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_TAG = "meetransfer-model"
FORMAT_VERSION = 1
INIT_STD = 0.1

_ACTIVATIONS = {
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0).astype(float)),
}


@dataclass(frozen=True)
class MlpConfig:
    layer_widths: tuple[int, ...] = (32,)
    activation: str = "tanh"

    def __post_init__(self):
        if len(self.layer_widths) < 1:
            raise ValueError("the MLP needs at least one hidden layer")
        if any(int(h) < 1 for h in self.layer_widths):
            raise ValueError(f"layer widths must be positive, got {self.layer_widths}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class Model:
    kind: str
    d: int
    theta: list[np.ndarray] = field(default_factory=list)
    w: np.ndarray = field(default_factory=lambda: np.zeros(0))
    bias_b: float = 0.0
    widths: tuple[int, ...] = ()
    activation: str = "tanh"

    # -- construction -------------------------------------------------

    @classmethod
    def linear(cls, d: int, seed: int | None = 0, std: float = INIT_STD) -> "Model":
        rng = np.random.default_rng(seed)
        return cls("linear", int(d), [], rng.normal(0.0, std, size=int(d)))

    @classmethod
    def mlp(cls, d: int, config: MlpConfig = MlpConfig(), seed: int | None = 0,
            std: float = INIT_STD) -> "Model":
        rng = np.random.default_rng(seed)
        theta = []
        fan_in = int(d)
        for h in config.layer_widths:
            theta.append(rng.normal(0.0, std, size=(fan_in, int(h))))
            theta.append(np.zeros(int(h)))
            fan_in = int(h)
        w = rng.normal(0.0, std, size=fan_in)
        return cls("mlp", int(d), theta, w, 0.0, tuple(int(h) for h in config.layer_widths),
                   config.activation)

    def copy(self) -> "Model":
        return copy.deepcopy(self)

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.theta) + self.w.size

    # -- evaluation ---------------------------------------------------

    def _check_X(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.d:
            raise ValueError(f"expected inputs with {self.d} columns, got shape {X.shape}")
        return X

    def _features(self, X):
        act, _ = _ACTIVATIONS[self.activation]
        pre, post = [], [X]
        h = X
        for W, c in zip(self.theta[0::2], self.theta[1::2]):
            z = h @ W + c
            h = act(z)
            pre.append(z)
            post.append(h)
        return h, pre, post

    def features(self, X) -> np.ndarray:
        return self._features(self._check_X(X))[0]

    def forward(self, X) -> np.ndarray:
        """Predictions ``w^T f(x) + bias_b`` for each row of ``X``."""
        X = self._check_X(X)
        return self._features(X)[0] @ self.w + self.bias_b

    __call__ = forward

    def residuals(self, X, y) -> np.ndarray:
        return np.asarray(y, dtype=float) - self.forward(X)

    def backward(self, X, dL_de, *, freeze_theta: bool = False):
        """Parameter gradients from a residual-space gradient.

        Since ``e = y - g(x)``, ``dL/dg = -dL/de``. Returns
        ``(theta_grads, w_grad)``; ``theta_grads`` is an empty list when
        ``freeze_theta`` is set or the model has no feature parameters.
        """
        X = self._check_X(X)
        g = -np.asarray(dL_de, dtype=float).ravel()
        if g.size != X.shape[0]:
            raise ValueError(f"gradient has {g.size} entries for {X.shape[0]} rows")
        F, pre, post = self._features(X)
        w_grad = F.T @ g
        if freeze_theta or not self.theta:
            return [], w_grad
        _, dact = _ACTIVATIONS[self.activation]
        grads: list[np.ndarray] = [None] * len(self.theta)  # type: ignore[list-item]
        delta = np.outer(g, self.w)
        n_layers = len(self.theta) // 2
        for k in reversed(range(n_layers)):
            delta = delta * dact(pre[k], post[k + 1])
            grads[2 * k] = post[k].T @ delta
            grads[2 * k + 1] = delta.sum(axis=0)
            if k:
                delta = delta @ self.theta[2 * k].T
        return grads, w_grad

    # -- parameter access ---------------------------------------------

    def params(self) -> dict[str, np.ndarray]:
        out = {f"theta{i}": a for i, a in enumerate(self.theta)}
        out["w"] = self.w
        return out

    def load_params(self, params: dict[str, np.ndarray]) -> None:
        for i in range(len(self.theta)):
            self.theta[i] = np.array(params[f"theta{i}"], dtype=float)
        self.w = np.array(params["w"], dtype=float)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.theta] + [self.w.ravel()])

    def set_flat(self, vec) -> None:
        vec = np.asarray(vec, dtype=float)
        if vec.size != self.n_params:
            raise ValueError(f"expected {self.n_params} values, got {vec.size}")
        pos = 0
        for i, a in enumerate(self.theta):
            self.theta[i] = vec[pos:pos + a.size].reshape(a.shape).copy()
            pos += a.size
        self.w = vec[pos:].copy()

    def set_bias(self, b: float) -> "Model":
        """Copy of the model with the output bias replaced by ``b``."""
        b = float(b)
        if not math.isfinite(b):
            raise ValueError(f"bias must be finite, got {b}")
        out = self.copy()
        out.bias_b = b
        return out

    # -- serialization ------------------------------------------------

    def save(self, path) -> None:
        """Write the model as text: two header lines then one value per line.

        Header::

            # meetransfer-model 1
            # kind=mlp d=8 widths=16,4 activation=tanh bias_b=0.25 n_params=213

        Values follow in order: for each hidden layer its weight matrix
        (fan_in x width, row-major) and bias vector, then the head ``w``.
        """
        widths = ",".join(str(h) for h in self.widths)
        lines = [
            f"# {FORMAT_TAG} {FORMAT_VERSION}",
            f"# kind={self.kind} d={self.d} widths={widths} activation={self.activation} "
            f"bias_b={self.bias_b!r} n_params={self.n_params}",
        ]
        lines.extend(repr(float(v)) for v in self.flat())
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "Model":
        text = Path(path).read_text().splitlines()
        if len(text) < 2 or not text[0].startswith(f"# {FORMAT_TAG} "):
            raise ValueError(f"{path}: not a {FORMAT_TAG} file")
        version = int(text[0].split()[2])
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {version}")
        meta = dict(kv.split("=", 1) for kv in text[1][1:].split())
        d = int(meta["d"])
        if meta["kind"] == "linear":
            model = cls.linear(d, seed=None)
        elif meta["kind"] == "mlp":
            widths = tuple(int(h) for h in meta["widths"].split(","))
            model = cls.mlp(d, MlpConfig(widths, meta["activation"]), seed=None)
        else:
            raise ValueError(f"{path}: unknown model kind {meta['kind']!r}")
        values = np.array([float(v) for v in text[2:] if v.strip()])
        if values.size != int(meta["n_params"]):
            raise ValueError(f"{path}: header says {meta['n_params']} values, found {values.size}")
        model.set_flat(values)
        model.bias_b = float(meta["bias_b"])
        return model


def build_model(kind: str, d: int, seed: int | None = 0, mlp: MlpConfig | None = None) -> Model:
    if kind == "linear":
        return Model.linear(d, seed)
    if kind == "mlp":
        return Model.mlp(d, mlp or MlpConfig(), seed)
    raise ValueError(f"unknown model kind {kind!r}")
