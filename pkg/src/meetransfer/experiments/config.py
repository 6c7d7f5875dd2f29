"""Sweep configuration and its plain-text file format.

Files are INI-style: ``[section]`` headers followed by ``key = value``
lines. Sections and keys::

    [scenario]  dim, noise, n_source, n_target, n_target_train,
                scenario_seed, theta_std
    [sweep]     mu_grid, losses, repetitions, seed, jobs, out,
                mu_eval, shift
    [losses]    mee_sigma, mee_estimator, hsic_sigma_x, hsic_sigma_e,
                huber_delta, barron_alpha, barron_c
    [model]     kind, widths, activation
    [train]     epochs, batch_size, learning_rate, optimizer,
                validation_fraction, early_stopping
    [adapt]     same keys as [train]; used by the transfer procedures
    [ingest]    source, target_train, target_test, window_size,
                feature_columns, label_column, group_column, stride

Lists are comma separated. ``mee_sigma = median`` selects the median rule.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..ingest import WindowSpec
from ..losses import Loss, make_loss
from ..models import MlpConfig
from ..synthdata import ShiftScenario
from ..training import TrainConfig

DEFAULT_MU_GRID = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
DEFAULT_LOSSES = ("mse", "mae", "hsic", "mee")


@dataclass(frozen=True)
class LossParams:
    mee_sigma: float | None = 1.0
    mee_estimator: str = "matrix"
    hsic_sigma_x: float = 1.0
    hsic_sigma_e: float = 1.0
    huber_delta: float = 4.0
    barron_alpha: float = -4.0
    barron_c: float = 0.1

    def build(self, name: str) -> Loss:
        key = name.strip().lower()
        if key in ("mee", "mee_matrix", "mee_kde"):
            est = {"mee_matrix": "matrix", "mee_kde": "kde"}.get(key, self.mee_estimator)
            return make_loss("mee", sigma=self.mee_sigma, estimator=est)
        if key == "hsic":
            return make_loss("hsic", sigma_x=self.hsic_sigma_x, sigma_e=self.hsic_sigma_e)
        if key == "huber":
            return make_loss("huber", delta=self.huber_delta)
        if key == "barron":
            return make_loss("barron", alpha=self.barron_alpha, scale_c=self.barron_c)
        return make_loss(key)


@dataclass(frozen=True)
class IngestPaths:
    source: str | None = None
    target_train: str | None = None
    target_test: str | None = None
    window: WindowSpec | None = None

    @property
    def enabled(self) -> bool:
        return self.source is not None


@dataclass(frozen=True)
class SweepConfig:
    scenario: ShiftScenario = field(default_factory=ShiftScenario)
    mu_grid: tuple[float, ...] = DEFAULT_MU_GRID
    losses: tuple[str, ...] = DEFAULT_LOSSES
    repetitions: int = 20
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    adapt: TrainConfig = field(default_factory=TrainConfig)
    loss_params: LossParams = field(default_factory=LossParams)
    model_kind: str = "linear"
    mlp: MlpConfig = field(default_factory=MlpConfig)
    ingest: IngestPaths = field(default_factory=IngestPaths)
    # target shift used by the kernel-size study and the noise table
    mu_eval: float = 0.0
    shift: float = 2.0
    jobs: int = 1
    out: str | None = None

    def __post_init__(self):
        if not self.mu_grid:
            raise ValueError("mu grid must not be empty")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.losses:
            raise ValueError("at least one loss is required")
        for name in self.losses:
            self.loss_params.build(name)

    def rep_seeds(self) -> list[int]:
        return [self.seed + r for r in range(self.repetitions)]


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _names(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _sigma(text: str) -> float | None:
    return None if text.strip().lower() == "median" else float(text)


def _coerce(cls, section: configparser.SectionProxy | dict, converters: dict) -> dict:
    known = {f.name for f in fields(cls)}
    out = {}
    for key, raw in section.items():
        if key not in known:
            raise ValueError(f"unknown key {key!r} for [{cls.__name__}]")
        out[key] = converters.get(key, lambda v, f=key: _field_type(cls, f)(v))(raw)
    return out


def _field_type(cls, name):
    default = next(f for f in fields(cls) if f.name == name).default
    if isinstance(default, bool):
        return _bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    return str


def _train(section, base: TrainConfig) -> TrainConfig:
    return replace(base, **_coerce(TrainConfig, section, {"early_stopping": _bool}))


def load_config(path=None, **overrides) -> SweepConfig:
    """Read a config file (optional) and apply keyword overrides."""
    cfg = SweepConfig()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        with open(path) as fh:
            parser.read_file(fh)
        cfg = _apply(cfg, parser)
    return replace(cfg, **overrides) if overrides else cfg


def _apply(cfg: SweepConfig, parser: configparser.ConfigParser) -> SweepConfig:
    changes: dict = {}
    for name in parser.sections():
        sec = parser[name]
        if name == "scenario":
            sc = dict(sec)
            if "scenario_seed" in sc:
                sc["seed"] = sc.pop("scenario_seed")
            changes["scenario"] = replace(cfg.scenario, **_coerce(ShiftScenario, sc, {}))
        elif name == "sweep":
            conv = {"mu_grid": _floats, "losses": _names, "repetitions": int, "seed": int,
                    "jobs": int, "out": str, "mu_eval": float, "shift": float}
            for key, raw in sec.items():
                if key not in conv:
                    raise ValueError(f"unknown key {key!r} in [sweep]")
                changes[key] = conv[key](raw)
        elif name == "losses":
            changes["loss_params"] = replace(
                cfg.loss_params,
                **_coerce(LossParams, sec, {"mee_sigma": _sigma, "mee_estimator": str}))
        elif name == "model":
            kind = sec.get("kind", cfg.model_kind)
            widths = tuple(int(w) for w in _floats(sec["widths"])) if "widths" in sec else cfg.mlp.layer_widths
            changes["model_kind"] = kind
            changes["mlp"] = MlpConfig(widths, sec.get("activation", cfg.mlp.activation))
        elif name == "train":
            changes["train"] = _train(sec, cfg.train)
        elif name == "adapt":
            changes["adapt"] = _train(sec, cfg.adapt)
        elif name == "ingest":
            changes["ingest"] = _ingest(sec)
        else:
            raise ValueError(f"unknown config section [{name}]")
    return replace(cfg, **changes)


def _ingest(sec) -> IngestPaths:
    window = None
    if "label_column" in sec:
        window = WindowSpec(
            window_size=int(sec.get("window_size", "1")),
            feature_columns=_names(sec.get("feature_columns", "")),
            label_column=sec["label_column"].strip(),
            stride=int(sec.get("stride", "1")),
            group_column=(sec.get("group_column") or "").strip() or None,
        )
    return IngestPaths(sec.get("source"), sec.get("target_train"), sec.get("target_test"), window)


def write_default_config(path) -> None:
    """Dump the default configuration in the file format above."""
    cfg = SweepConfig()
    sc, tr, lp = cfg.scenario, cfg.train, cfg.loss_params
    text = f"""[scenario]
dim = {sc.dim}
noise = {sc.noise}
n_source = {sc.n_source}
n_target = {sc.n_target}
n_target_train = {sc.n_target_train}
scenario_seed = {sc.seed}
theta_std = {sc.theta_std}

[sweep]
mu_grid = {", ".join(str(m) for m in cfg.mu_grid)}
losses = {", ".join(cfg.losses)}
repetitions = {cfg.repetitions}
seed = {cfg.seed}
mu_eval = {cfg.mu_eval}
shift = {cfg.shift}

[losses]
mee_sigma = {lp.mee_sigma}
mee_estimator = {lp.mee_estimator}
hsic_sigma_x = {lp.hsic_sigma_x}
hsic_sigma_e = {lp.hsic_sigma_e}
huber_delta = {lp.huber_delta}
barron_alpha = {lp.barron_alpha}
barron_c = {lp.barron_c}

[model]
kind = {cfg.model_kind}

[train]
epochs = {tr.epochs}
batch_size = {tr.batch_size}
learning_rate = {tr.learning_rate}
optimizer = {tr.optimizer}
"""
    Path(path).write_text(text)
