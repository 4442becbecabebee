"""Error metrics for heart-rate predictions and the evaluation protocols.

Errors are prediction minus ground truth. The standard deviation divides by
N (population form). Pearson correlation is reported as ``None`` when it is
undefined (fewer than two pairs or a constant series).
"""

import csv
import io
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EvalReport:
    me: float
    sde: float
    rmse: float
    me_rate: float
    rho: float | None
    n: int

    def as_row(self):
        return {
            "N": self.n,
            "Me": self.me,
            "SDe": self.sde,
            "RMSE": self.rmse,
            "MeRate": self.me_rate,
            "rho": "undefined" if self.rho is None else self.rho,
        }


def _pairs(predicted, truth):
    hp = np.asarray(predicted, dtype=np.float64).reshape(-1)
    hgt = np.asarray(truth, dtype=np.float64).reshape(-1)
    if hp.shape != hgt.shape:
        raise ValueError("predicted and ground-truth series differ in length")
    if hp.size == 0:
        raise ValueError("need at least one pair")
    if np.any(hgt <= 0):
        raise ValueError("ground-truth heart rates must be positive")
    return hp, hgt


def pearson(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        return None
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(dx @ dy) / (math.sqrt(sxx) * math.sqrt(syy))
    return min(1.0, max(-1.0, r))


def evaluate(predicted, truth):
    hp, hgt = _pairs(predicted, truth)
    he = hp - hgt
    n = he.size
    me = float(he.mean())
    sde = float(np.sqrt(np.mean((he - me) ** 2)))
    rmse = float(np.sqrt(np.mean(he ** 2)))
    me_rate = float(np.mean(np.abs(he) / hgt))
    return EvalReport(me, sde, rmse, me_rate, pearson(hgt, hp), n)


def average_hr_protocol(per_second):
    """One heart rate per video: the mean of its per-second predictions."""
    vals = np.asarray(per_second, dtype=np.float64).reshape(-1)
    if vals.size == 0:
        raise ValueError("no per-second predictions")
    return float(vals.mean())


def short_time_protocol(predicted, truth, window_s):
    """Mean prediction and mean truth over non-overlapping windows.

    Returns (window_predictions, window_truth); the trailing partial window
    is dropped.
    """
    hp = np.asarray(predicted, dtype=np.float64).reshape(-1)
    hgt = np.asarray(truth, dtype=np.float64).reshape(-1)
    if hp.shape != hgt.shape:
        raise ValueError("predicted and ground-truth series differ in length")
    if window_s < 1:
        raise ValueError("window must be at least one second")
    n = hp.size // window_s
    if n == 0:
        raise ValueError(f"series of {hp.size} s is shorter than a {window_s} s window")
    cut = n * window_s
    return (hp[:cut].reshape(n, window_s).mean(axis=1),
            hgt[:cut].reshape(n, window_s).mean(axis=1))


COLUMNS = ("name", "N", "Me(SDe)", "RMSE", "MeRate", "rho")


def _row(name, report):
    rho = "undefined" if report.rho is None else f"{report.rho:.2f}"
    return (name, str(report.n), f"{report.me:.2f}({report.sde:.2f})",
            f"{report.rmse:.2f}", f"{100 * report.me_rate:.2f}%", rho)


def format_table(named_reports):
    """Fixed-width text table, one row per (name, EvalReport)."""
    rows = [COLUMNS] + [_row(name, rep) for name, rep in named_reports]
    widths = [max(len(r[i]) for r in rows) for i in range(len(COLUMNS))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def reports_csv(named_reports):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["name", "N", "Me", "SDe", "RMSE", "MeRate", "rho"])
    for name, rep in named_reports:
        writer.writerow([name, rep.n, repr(rep.me), repr(rep.sde), repr(rep.rmse),
                         repr(rep.me_rate), "undefined" if rep.rho is None else repr(rep.rho)])
    return buf.getvalue()
