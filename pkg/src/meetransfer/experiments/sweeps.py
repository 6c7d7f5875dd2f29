"""Seeded experiment runners for the synthetic covariate-shift benchmark.

Each runner loops over repetitions; repetition ``r`` uses seed
``cfg.seed + r`` for both its data draw and its training, and all loss
arms of a repetition see the same data and the same initial weights, so
comparisons between arms are paired.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np
from scipy import stats

from ..kernels import DegenerateBandwidthError, center, check_sigma, gram, median_rule
from ..losses import MEE, hsic_centered
from ..models import Model, build_model
from ..synthdata import Dataset, ShiftScenario, gen_source, gen_target
from ..training import DivergenceError, pretrain, transfer
from .config import SweepConfig

log = logging.getLogger(__name__)

SWEEP_HEADER = ["noise", "loss", "mu_t", "rep", "seed", "test_mse", "hsic_xe", "wall_time_s"]
NOISE_TABLE_LOSSES = ("mae", "hsic", "huber", "barron", "mee")
NOISE_TABLE_NOISES = ("laplace", "mixed_gaussian")


def _map(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def _write(header, rows, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _test_mse(model: Model, data: Dataset) -> float:
    r = data.y - model.forward(data.X)
    return float(np.mean(r * r))


def dependence_diagnostic(model: Model, data: Dataset, sigma_x: float = 1.0,
                          sigma_e: float = 1.0) -> float:
    """HSIC between the inputs and the model's residuals on ``data``."""
    Kx_c = center(gram(data.X, sigma_x))
    return hsic_centered(Kx_c, model.residuals(data.X, data.y), check_sigma(sigma_e))


def _train_arm(cfg: SweepConfig, loss_name: str, src: Dataset, seed: int,
               scenario_noise: str) -> tuple[Model | None, float]:
    t0 = time.perf_counter()
    try:
        model = pretrain(src, cfg.loss_params.build(loss_name), replace(cfg.train, seed=seed),
                         kind=cfg.model_kind, mlp=cfg.mlp).model
    except (DivergenceError, DegenerateBandwidthError, FloatingPointError) as exc:
        log.warning("arm %s/%s seed %d flagged: %s", scenario_noise, loss_name, seed, exc)
        model = None
    return model, time.perf_counter() - t0


# -- shift sweep ------------------------------------------------------------


@dataclass
class SweepReport:
    rows: list[list] = field(default_factory=list)
    flagged: list[tuple] = field(default_factory=list)

    def to_csv(self, path=None) -> str:
        return _write(SWEEP_HEADER, [[_fmt(v) for v in r] for r in self.rows], path)

    def values(self, loss: str, mu: float, column: str = "test_mse") -> np.ndarray:
        j = SWEEP_HEADER.index(column)
        sel = sorted((r for r in self.rows if r[1] == loss and math.isclose(r[2], mu)),
                     key=lambda r: r[3])
        return np.array([r[j] for r in sel], dtype=float)

    def mean(self, loss: str, mu: float, column: str = "test_mse") -> float:
        return float(np.nanmean(self.values(loss, mu, column)))

    def win_rate(self, a: str, b: str, mu: float, column: str = "test_mse") -> float:
        """Fraction of paired repetitions where arm ``a`` scores strictly below ``b``."""
        va, vb = self.values(a, mu, column), self.values(b, mu, column)
        ok = np.isfinite(va) & np.isfinite(vb)
        return float(np.mean(va[ok] < vb[ok])) if ok.any() else math.nan

    @property
    def losses(self) -> list[str]:
        return list(dict.fromkeys(r[1] for r in self.rows))

    @property
    def mus(self) -> list[float]:
        return sorted({r[2] for r in self.rows})

    def summary_lines(self) -> list[str]:
        out = []
        for loss in self.losses:
            parts = []
            for mu in self.mus:
                v = self.values(loss, mu)
                parts.append(f"mu={mu:g}: {np.nanmean(v):.3f}+-{np.nanstd(v):.3f}")
            out.append(f"{loss}: " + "  ".join(parts))
        return out


def _shift_rep(cfg: SweepConfig, rep: int) -> tuple[list[list], list[tuple]]:
    seed = cfg.seed + rep
    sc = cfg.scenario
    src = gen_source(sc, seed)
    arms = {name: _train_arm(cfg, name, src, seed, sc.noise) for name in cfg.losses}
    rows, flagged = [], []
    for mu in cfg.mu_grid:
        te = gen_target(sc, mu, seed)
        Kx_c = center(gram(te.X, cfg.loss_params.hsic_sigma_x))
        for name, (model, secs) in arms.items():
            if model is None:
                rows.append([sc.noise, name, float(mu), rep, seed, math.nan, math.nan, secs])
                flagged.append((name, float(mu), rep))
                continue
            t0 = time.perf_counter()
            mse = _test_mse(model, te)
            hs = hsic_centered(Kx_c, model.residuals(te.X, te.y), cfg.loss_params.hsic_sigma_e)
            rows.append([sc.noise, name, float(mu), rep, seed, mse, hs, secs + time.perf_counter() - t0])
    return rows, flagged


def run_shift_sweep(cfg: SweepConfig) -> SweepReport:
    """Train every loss on source data; score each model on targets along the shift grid."""
    results = _map(partial(_shift_rep, cfg), list(range(cfg.repetitions)), cfg.jobs)
    order = {name: i for i, name in enumerate(cfg.losses)}
    report = SweepReport()
    for rows, flagged in results:
        report.rows.extend(rows)
        report.flagged.extend(flagged)
    report.rows.sort(key=lambda r: (order[r[1]], r[2], r[3]))
    if cfg.out:
        report.to_csv(cfg.out)
    return report


# -- kernel-size study --------------------------------------------------------


KERNEL_HEADER = ["multiplier", "rep", "seed", "sigma", "test_mse", "resid_std", "resid_iqr"]


@dataclass
class KernelStudyReport:
    rows: list[list] = field(default_factory=list)
    counts: list[np.ndarray] = field(default_factory=list)
    edges: np.ndarray | None = None

    def to_csv(self, path=None) -> str:
        nb = 0 if self.edges is None else len(self.edges) - 1
        header = KERNEL_HEADER + [f"bin_{k}" for k in range(nb)]
        body = [[_fmt(v) for v in r] + [str(int(c)) for c in cnt]
                for r, cnt in zip(self.rows, self.counts)]
        return _write(header, body, path)

    def values(self, multiplier: float, column: str = "resid_iqr") -> np.ndarray:
        j = KERNEL_HEADER.index(column)
        return np.array([r[j] for r in self.rows if math.isclose(r[0], multiplier)], dtype=float)

    def mean(self, multiplier: float, column: str = "resid_iqr") -> float:
        return float(np.nanmean(self.values(multiplier, column)))

    @property
    def multipliers(self) -> list[float]:
        return list(dict.fromkeys(r[0] for r in self.rows))

    def summary_lines(self) -> list[str]:
        return [f"x{m:g}: sigma={self.mean(m, 'sigma'):.3g} iqr={self.mean(m):.4f} "
                f"std={self.mean(m, 'resid_std'):.4f} test_mse={self.mean(m, 'test_mse'):.3f}"
                for m in self.multipliers]


def _kernel_rep(cfg: SweepConfig, multipliers, edges, rep: int):
    seed = cfg.seed + rep
    sc = cfg.scenario
    src = gen_source(sc, seed)
    te = gen_target(sc, cfg.mu_eval, seed)
    train = replace(cfg.train, seed=seed)
    init = build_model(cfg.model_kind, sc.dim, seed=seed, mlp=cfg.mlp)
    rows, counts = [], []
    try:
        base = median_rule(init.residuals(src.X, src.y))
    except DegenerateBandwidthError:
        base = math.nan
    for m in multipliers:
        nan_row = [float(m), rep, seed, base * m, math.nan, math.nan, math.nan]
        if math.isnan(base):
            rows.append(nan_row)
            counts.append(np.zeros(len(edges) - 1, dtype=int))
            continue
        loss = MEE(sigma=base * m, estimator=cfg.loss_params.mee_estimator)
        try:
            model = pretrain(src, loss, train, init).model
        except DivergenceError as exc:
            log.warning("kernel study x%g seed %d flagged: %s", m, seed, exc)
            rows.append(nan_row)
            counts.append(np.zeros(len(edges) - 1, dtype=int))
            continue
        r = model.residuals(te.X, te.y)
        q75, q25 = np.percentile(r, [75, 25])
        # out-of-range residuals go to the edge bins so counts always sum to N
        cnt, _ = np.histogram(np.clip(r, edges[0], edges[-1]), bins=edges)
        rows.append([float(m), rep, seed, base * m, float(np.mean(r * r)), float(np.std(r)),
                     float(q75 - q25)])
        counts.append(cnt)
    return rows, counts


def run_kernel_size_study(cfg: SweepConfig, sigma_multipliers=(0.1, 1.0, 10.0), *,
                          bins: int = 64, hist_range: tuple[float, float] = (-8.0, 8.0)
                          ) -> KernelStudyReport:
    """Train MEE with ``sigma = m * median_rule(e0)`` for each multiplier ``m``.

    ``e0`` are the initial model's residuals on the source data. Residuals
    are scored on a target test set drawn at ``cfg.mu_eval``.
    """
    multipliers = [float(m) for m in sigma_multipliers]
    for m in multipliers:
        if not (m > 0 and math.isfinite(m)):
            raise DegenerateBandwidthError(f"sigma multiplier must be positive, got {m}")
    edges = np.linspace(hist_range[0], hist_range[1], bins + 1)
    results = _map(partial(_kernel_rep, cfg, multipliers, edges), list(range(cfg.repetitions)), cfg.jobs)
    report = KernelStudyReport(edges=edges)
    for rows, counts in results:
        report.rows.extend(rows)
        report.counts.extend(counts)
    order = sorted(range(len(report.rows)), key=lambda i: (report.rows[i][0], report.rows[i][1]))
    report.rows = [report.rows[i] for i in order]
    report.counts = [report.counts[i] for i in order]
    if cfg.out:
        report.to_csv(cfg.out)
    return report


# -- noise table ---------------------------------------------------------------


NOISE_HEADER = ["noise", "loss", "reps", "mean_test_mse", "std_test_mse", "wilcoxon_p_vs_mee"]


@dataclass
class NoiseTableReport:
    values: dict = field(default_factory=dict)
    losses: tuple[str, ...] = NOISE_TABLE_LOSSES
    noises: tuple[str, ...] = NOISE_TABLE_NOISES

    def mean(self, noise: str, loss: str) -> float:
        return float(np.nanmean(self.values[noise, loss]))

    def std(self, noise: str, loss: str) -> float:
        v = self.values[noise, loss]
        return float(np.nanstd(v, ddof=1)) if np.isfinite(v).sum() > 1 else math.nan

    def wilcoxon_p(self, noise: str, loss: str, ref: str = "mee") -> float:
        if loss == ref or (noise, ref) not in self.values:
            return math.nan
        a, b = self.values[noise, loss], self.values[noise, ref]
        ok = np.isfinite(a) & np.isfinite(b)
        if ok.sum() < 2 or np.all(a[ok] == b[ok]):
            return math.nan
        return float(stats.wilcoxon(a[ok], b[ok]).pvalue)

    def rows(self) -> list[list]:
        return [[n, l, int(np.isfinite(self.values[n, l]).sum()), self.mean(n, l), self.std(n, l),
                 self.wilcoxon_p(n, l)] for n in self.noises for l in self.losses]

    def to_csv(self, path=None) -> str:
        return _write(NOISE_HEADER, [[_fmt(v) for v in r] for r in self.rows()], path)

    def summary_lines(self) -> list[str]:
        return [f"{n}/{l}: {m:.3f} +- {s:.3f}" for n, l, _, m, s, _ in self.rows()]


def _noise_rep(cfg: SweepConfig, noise: str, rep: int) -> dict:
    seed = cfg.seed + rep
    sc = replace(cfg.scenario, noise=noise)
    src = gen_source(sc, seed)
    te = gen_target(sc, cfg.shift, seed)
    out = {}
    for name in cfg.losses:
        model, _ = _train_arm(cfg, name, src, seed, noise)
        out[name] = math.nan if model is None else _test_mse(model, te)
    return out


def run_noise_table(cfg: SweepConfig, noises=NOISE_TABLE_NOISES) -> NoiseTableReport:
    """Target test MSE at shift ``cfg.shift`` for each (noise, loss) pair."""
    report = NoiseTableReport(losses=tuple(cfg.losses), noises=tuple(noises))
    for noise in noises:
        per_rep = _map(partial(_noise_rep, cfg, noise), list(range(cfg.repetitions)), cfg.jobs)
        for name in cfg.losses:
            report.values[noise, name] = np.array([r[name] for r in per_rep])
    if cfg.out:
        report.to_csv(cfg.out)
    return report


# -- dependence ------------------------------------------------------------------


DEPENDENCE_HEADER = ["loss", "rep", "seed", "mu_t", "hsic_xe"]


@dataclass
class DependenceReport:
    rows: list[list] = field(default_factory=list)

    def values(self, loss: str) -> np.ndarray:
        return np.array([r[4] for r in sorted(self.rows, key=lambda r: r[1]) if r[0] == loss], dtype=float)

    def win_rate(self, a: str, b: str) -> float:
        va, vb = self.values(a), self.values(b)
        ok = np.isfinite(va) & np.isfinite(vb)
        return float(np.mean(va[ok] < vb[ok])) if ok.any() else math.nan

    def to_csv(self, path=None) -> str:
        return _write(DEPENDENCE_HEADER, [[_fmt(v) for v in r] for r in self.rows], path)

    def summary_lines(self) -> list[str]:
        names = list(dict.fromkeys(r[0] for r in self.rows))
        return [f"{n}: mean hsic_xe {np.nanmean(self.values(n)):.6g}" for n in names]


def _dependence_rep(cfg: SweepConfig, rep: int) -> list[list]:
    seed = cfg.seed + rep
    sc = cfg.scenario
    src = gen_source(sc, seed)
    te = gen_target(sc, cfg.mu_eval, seed)
    Kx_c = center(gram(te.X, cfg.loss_params.hsic_sigma_x))
    rows = []
    for name in cfg.losses:
        model, _ = _train_arm(cfg, name, src, seed, sc.noise)
        val = math.nan if model is None else hsic_centered(
            Kx_c, model.residuals(te.X, te.y), cfg.loss_params.hsic_sigma_e)
        rows.append([name, rep, seed, float(cfg.mu_eval), val])
    return rows


def run_dependence(cfg: SweepConfig) -> DependenceReport:
    """Input/residual HSIC of each loss's model on a target test set at ``cfg.mu_eval``."""
    report = DependenceReport()
    for rows in _map(partial(_dependence_rep, cfg), list(range(cfg.repetitions)), cfg.jobs):
        report.rows.extend(rows)
    order = {n: i for i, n in enumerate(cfg.losses)}
    report.rows.sort(key=lambda r: (order[r[0]], r[1]))
    if cfg.out:
        report.to_csv(cfg.out)
    return report


# -- transfer --------------------------------------------------------------------


TRANSFER_HEADER = ["procedure", "pretrain_loss", "adapt_loss", "rep", "seed", "test_mse",
                   "sigma", "bias_b", "degenerate", "theta_unchanged"]


@dataclass
class TransferReport:
    rows: list[list] = field(default_factory=list)

    def values(self, pretrain_loss: str, adapt_loss: str) -> np.ndarray:
        sel = sorted((r for r in self.rows if r[1] == pretrain_loss and r[2] == adapt_loss),
                     key=lambda r: r[3])
        return np.array([r[5] for r in sel], dtype=float)

    def arms(self) -> list[tuple[str, str]]:
        return list(dict.fromkeys((r[1], r[2]) for r in self.rows))

    def to_csv(self, path=None) -> str:
        return _write(TRANSFER_HEADER, [[_fmt(v) for v in r] for r in self.rows], path)

    def summary_lines(self) -> list[str]:
        out = []
        for p, a in self.arms():
            v = self.values(p, a)
            sd = np.nanstd(v, ddof=1) if len(v) > 1 else math.nan
            out.append(f"{p}-{a}: {np.nanmean(v):.3f} +- {sd:.3f}")
        return out


def _transfer_data(cfg: SweepConfig, seed: int, mu: float) -> dict[str, Dataset]:
    if cfg.ingest.enabled:
        from ..ingest import load_split

        if cfg.ingest.window is None:
            raise ValueError("ingest paths given without a window spec (label_column etc.)")
        paths = {"source": cfg.ingest.source, "target_train": cfg.ingest.target_train,
                 "target_test": cfg.ingest.target_test}
        data = load_split(paths, cfg.ingest.window)
        if "target_train" not in data or "target_test" not in data:
            raise ValueError("transfer needs target_train and target_test files")
        return data
    sc: ShiftScenario = cfg.scenario
    return {"source": gen_source(sc, seed),
            "target_train": gen_target(sc, mu, seed, "target_train"),
            "target_test": gen_target(sc, mu, seed, "target_test")}


def _transfer_rep(cfg: SweepConfig, procedure: str, arms, mu: float, rep: int) -> list[list]:
    seed = cfg.seed + rep
    data = _transfer_data(cfg, seed, mu)
    rows = []
    sources: dict[str, Model] = {}
    for p_loss, a_loss in arms:
        if p_loss not in sources:
            sources[p_loss] = pretrain(data["source"], cfg.loss_params.build(p_loss),
                                       replace(cfg.train, seed=seed), kind=cfg.model_kind,
                                       mlp=cfg.mlp).model
        src_model = sources[p_loss]
        loss = cfg.loss_params.build(a_loss)
        if isinstance(loss, MEE):
            loss = replace(loss, sigma=None)
        try:
            res = transfer(data["target_train"], src_model, loss, replace(cfg.adapt, seed=seed),
                           freeze_theta=procedure == "probe")
        except (DivergenceError, DegenerateBandwidthError) as exc:
            log.warning("transfer %s-%s seed %d flagged: %s", p_loss, a_loss, seed, exc)
            rows.append([procedure, p_loss, a_loss, rep, seed, math.nan, math.nan, math.nan, "", ""])
            continue
        n_theta = sum(a.size for a in res.model.theta)
        unchanged = bool(np.array_equal(res.model.flat()[:n_theta], res.source_snapshot[:n_theta]))
        rows.append([procedure, p_loss, a_loss, rep, seed, _test_mse(res.model, data["target_test"]),
                     math.nan if res.sigma_used is None else res.sigma_used, res.model.bias_b,
                     int(res.degenerate), int(unchanged)])
    return rows


def run_transfer(cfg: SweepConfig, procedure: str = "finetune", arms=None,
                 mu: float | None = None) -> TransferReport:
    """Pretrain on source, adapt on target_train (fine-tune or probe), score on target_test.

    ``arms`` is a list of ``(pretrain_loss, adapt_loss)`` pairs and defaults
    to the "vary-vary" arms ``(l, l)`` for every loss in ``cfg.losses``.
    Synthetic targets are drawn at ``mu`` (default: the largest grid value).
    """
    if procedure not in ("finetune", "probe"):
        raise ValueError(f"procedure must be finetune or probe, got {procedure!r}")
    arms = [tuple(a) for a in (arms or [(l, l) for l in cfg.losses])]
    mu = max(cfg.mu_grid) if mu is None else float(mu)
    report = TransferReport()
    for rows in _map(partial(_transfer_rep, cfg, procedure, arms, mu), list(range(cfg.repetitions)), cfg.jobs):
        report.rows.extend(rows)
    order = {a: i for i, a in enumerate(arms)}
    report.rows.sort(key=lambda r: (order[(r[1], r[2])], r[3]))
    if cfg.out:
        report.to_csv(cfg.out)
    return report
