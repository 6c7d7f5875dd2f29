"""Ordering checks used by the CLI's ``--assert`` mode and the acceptance tests."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .sweeps import DependenceReport, KernelStudyReport, NoiseTableReport, SweepReport, TransferReport

# reference means of the noise table at shift 2
REFERENCE_MEANS = {
    ("laplace", "mae"): 3.46, ("laplace", "hsic"): 3.81, ("laplace", "huber"): 3.93,
    ("laplace", "barron"): 5.73, ("laplace", "mee"): 3.58,
    ("mixed_gaussian", "mae"): 32.66, ("mixed_gaussian", "hsic"): 30.49,
    ("mixed_gaussian", "huber"): 32.88, ("mixed_gaussian", "barron"): 29.71,
    ("mixed_gaussian", "mee"): 29.50,
}
REFERENCE_REL_TOL = 0.30


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def check_shift_sweep(report: SweepReport, noise: str, min_win_rate: float = 0.8) -> list[Check]:
    out = []
    mus = report.mus
    losses = report.losses
    top = max(mus)
    if noise in ("shifted_exponential", "mixed_gaussian") and {"mee", "mse"} <= set(losses):
        m_mee, m_mse = report.mean("mee", top), report.mean("mse", top)
        wr = report.win_rate("mee", "mse", top)
        out.append(Check(f"{noise}: mee < mse at mu={top:g}",
                         m_mee < m_mse and wr >= min_win_rate,
                         f"mee {m_mee:.3f} vs mse {m_mse:.3f}, paired win-rate {wr:.2f} (need >= {min_win_rate})"))
    if noise == "laplace" and {"mae", "mee", "mse"} <= set(losses):
        for mu in (m for m in mus if m >= 2.0):
            a, b, c = (report.mean(l, mu) for l in ("mae", "mee", "mse"))
            out.append(Check(f"laplace: mae <= mee <= mse at mu={mu:g}", a <= b <= c,
                             f"mae {a:.3f}, mee {b:.3f}, mse {c:.3f}"))
    return out


def check_noise_table(report: NoiseTableReport, rel_tol: float = REFERENCE_REL_TOL) -> list[Check]:
    out = []
    if "mixed_gaussian" in report.noises and {"mee", "mae"} <= set(report.losses):
        mee, mae = report.mean("mixed_gaussian", "mee"), report.mean("mixed_gaussian", "mae")
        out.append(Check("mixed_gaussian: mee in [25, 35]", 25.0 <= mee <= 35.0, f"mee {mee:.3f}"))
        out.append(Check("mixed_gaussian: mee < mae", mee < mae, f"mee {mee:.3f} vs mae {mae:.3f}"))
    if "laplace" in report.noises and {"mae", "mee", "huber"} <= set(report.losses):
        a, b, c = (report.mean("laplace", l) for l in ("mae", "mee", "huber"))
        out.append(Check("laplace: mae <= mee <= huber", a <= b <= c,
                         f"mae {a:.3f}, mee {b:.3f}, huber {c:.3f}"))
    for (noise, loss), ref in REFERENCE_MEANS.items():
        if noise in report.noises and loss in report.losses:
            m = report.mean(noise, loss)
            ok = math.isfinite(m) and abs(m - ref) <= rel_tol * ref
            out.append(Check(f"{noise}/{loss} within {rel_tol:.0%} of {ref}", ok, f"mean {m:.3f}"))
    return out


def check_kernel_study(report: KernelStudyReport, best: float = 1.0) -> list[Check]:
    out = []
    for column, label in (("resid_iqr", "IQR"), ("resid_std", "std")):
        vals = {m: report.mean(m, column) for m in report.multipliers}
        others = [v for m, v in vals.items() if not math.isclose(m, best)]
        ok = best in vals and all(vals[best] < v for v in others)
        detail = ", ".join(f"x{m:g}: {v:.4f}" for m, v in vals.items())
        out.append(Check(f"residual {label} minimal at multiplier {best:g}", ok, detail))
    return out


def check_dependence(report: DependenceReport, a: str = "mee", b: str = "mse",
                     min_win_rate: float = 0.7) -> list[Check]:
    wr = report.win_rate(a, b)
    return [Check(f"hsic_xe({a}) < hsic_xe({b})", wr >= min_win_rate,
                  f"paired win-rate {wr:.2f} (need >= {min_win_rate})")]


def check_transfer(report: TransferReport) -> list[Check]:
    out = []
    arms = report.arms()
    if ("mee", "mee") in arms and ("mse", "mse") in arms:
        a = float(report.values("mee", "mee").mean())
        b = float(report.values("mse", "mse").mean())
        out.append(Check("transfer: mee-mee <= mse-mse", a <= b, f"mee-mee {a:.3f} vs mse-mse {b:.3f}"))
    probe_rows = [r for r in report.rows if r[0] == "probe"]
    if probe_rows:
        ok = all(r[9] == 1 for r in probe_rows)
        out.append(Check("probe leaves theta untouched", ok, f"{len(probe_rows)} rows"))
    return out
