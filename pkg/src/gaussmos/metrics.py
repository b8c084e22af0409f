"""Evaluation metrics, report tables, and diagnostic table emission.

RMSE and PCC are computed per quality dimension in the canonical order
(mos, noi, col, dis, loud) together with their across-dimension averages.
PCC on a constant input is an error, never silently 0: a zero would corrupt
table averages while looking plausible.

Diagnostic emitters produce delimited tables in the same text conventions as
datasets (comma separators, header line, LF endings): a density grid for a
2-D marginal, and per-sample label pairs with the predicted correlation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .dataio import LABEL_NAMES, LabeledSample
from .gaussian import AffineMap, Gaussian, correlation, marginalize
from .head import HeadModel, predict


class ConstantInputError(ValueError):
    """Correlation is undefined when an input has zero variance."""


def rmse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.ndim != 1 or pred.shape != truth.shape or pred.size == 0:
        raise ValueError("rmse needs two 1-D vectors of equal nonzero length")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def pcc(pred, truth) -> float:
    """Pearson correlation; raises ConstantInputError on zero variance."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.ndim != 1 or pred.shape != truth.shape or pred.size < 2:
        raise ValueError("pcc needs two 1-D vectors of equal length >= 2")
    pc = pred - pred.mean()
    tc = truth - truth.mean()
    sp = float(np.sqrt(np.sum(pc * pc)))
    st = float(np.sqrt(np.sum(tc * tc)))
    if sp == 0.0 or st == 0.0:
        raise ConstantInputError("correlation undefined for constant input")
    # Rounding can push a perfect correlation a few ulp outside [-1, 1].
    return float(min(1.0, max(-1.0, np.dot(pc, tc) / (sp * st))))


@dataclass(frozen=True)
class DimensionMetrics:
    name: str
    rmse: float
    pcc: float | None

    def __post_init__(self):
        if self.rmse < 0:
            raise ValueError("rmse must be non-negative")
        if self.pcc is not None and not -1.0 <= self.pcc <= 1.0:
            raise ValueError("pcc must lie in [-1, 1]")


@dataclass(frozen=True)
class EvalReport:
    """Per-dimension metrics in canonical label order plus their averages.

    pcc fields are None where the correlation was undefined; rmse_avg is the
    mean over all five dimensions, pcc_avg the mean over the defined ones.
    """

    dimensions: tuple[DimensionMetrics, ...]
    rmse_avg: float
    pcc_avg: float | None
    sample_count: int
    variant: str

    def __post_init__(self):
        names = tuple(d.name for d in self.dimensions)
        if names != LABEL_NAMES:
            raise ValueError(f"dimension records must be {LABEL_NAMES} in order")
        if self.sample_count < 1:
            raise ValueError("sample_count must be positive")


def evaluate(model: HeadModel, data: list[LabeledSample],
             amap: AffineMap) -> EvalReport:
    """Point predictions for every sample, then per-dimension rmse/pcc."""
    if not data:
        raise ValueError("evaluate needs a non-empty dataset")
    preds = np.stack([predict(model, s.features, amap).point for s in data])
    truths = np.stack([s.labels for s in data])
    dims = []
    for k, name in enumerate(LABEL_NAMES):
        try:
            rho = pcc(preds[:, k], truths[:, k])
        except (ConstantInputError, ValueError):
            rho = None
        dims.append(DimensionMetrics(name, rmse(preds[:, k], truths[:, k]), rho))
    defined = [d.pcc for d in dims if d.pcc is not None]
    return EvalReport(
        dimensions=tuple(dims),
        rmse_avg=float(np.mean([d.rmse for d in dims])),
        pcc_avg=float(np.mean(defined)) if defined else None,
        sample_count=len(data),
        variant=model.config.variant,
    )


def emit_marginal_grid(g: Gaussian, dims, resolution: int = 61,
                       half_width: float = 6.0, bounds=None):
    """Density table for a 2-D marginal; returns (header, rows).

    Default bounds cover mean +- half_width standard deviations per axis, so
    a Riemann sum of density x cell area recovers ~1.  Rows are
    (v_i, v_j, density) over the full resolution x resolution grid, first
    axis varying slowest.
    """
    i, j = int(dims[0]), int(dims[1])
    if i == j:
        raise ValueError("grid dimensions must be distinct")
    marg = marginalize(g, sorted((i, j)))
    if i > j:
        # marginalize needs increasing dims; restore the requested axis order.
        marg = Gaussian.from_cov(marg.mean[::-1], marg.cov[::-1, ::-1].copy())
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if bounds is None:
        sd = np.sqrt(np.diag(marg.cov))
        bounds = (
            (marg.mean[0] - half_width * sd[0], marg.mean[0] + half_width * sd[0]),
            (marg.mean[1] - half_width * sd[1], marg.mean[1] + half_width * sd[1]),
        )
    (lo0, hi0), (lo1, hi1) = bounds
    if not (lo0 < hi0 and lo1 < hi1):
        raise ValueError("grid bounds must be increasing")
    ax0 = np.linspace(lo0, hi0, resolution)
    ax1 = np.linspace(lo1, hi1, resolution)
    V0, V1 = np.meshgrid(ax0, ax1, indexing="ij")
    pts = np.column_stack([V0.ravel(), V1.ravel()])
    z = solve_triangular(marg.chol, (pts - marg.mean).T, lower=True)
    log_norm = math.log(2.0 * math.pi) + math.log(marg.chol[0, 0]) \
        + math.log(marg.chol[1, 1])
    density = np.exp(-0.5 * np.sum(z * z, axis=0) - log_norm)
    header = [LABEL_NAMES[i], LABEL_NAMES[j], "density"]
    return header, np.column_stack([pts, density])


def emit_correlation_scatter(model: HeadModel, data: list[LabeledSample],
                             amap: AffineMap, dims):
    """Per-sample (label_i, label_j, predicted correlation) table."""
    i, j = int(dims[0]), int(dims[1])
    if not data:
        raise ValueError("scatter emission needs a non-empty dataset")
    rows = np.empty((len(data), 3))
    for k, s in enumerate(data):
        g = predict(model, s.features, amap).gaussian
        rows[k] = (s.labels[i], s.labels[j], correlation(g.cov, i, j))
    header = [LABEL_NAMES[i], LABEL_NAMES[j], "predicted_corr"]
    return header, rows


def write_table(path, header, rows) -> None:
    """Comma-separated table with header, LF endings, %.17g floats."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != len(header):
        raise ValueError("rows must be 2-D with one column per header field")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def _fmt(value, missing="--", pattern="%.3f") -> str:
    return missing if value is None else pattern % value


def write_report_text(path, reports: list[tuple[str, EvalReport]]) -> None:
    """Fixed-width table: one row per model tag, rmse/pcc pair per dimension.

    The mse variant's pcc column is real (point predictions correlate), but
    its distribution outputs are placeholders, hence the variant tag column.
    """
    cols = [f"{name}_{m}" for name in LABEL_NAMES for m in ("rmse", "pcc")]
    cols += ["avg_rmse", "avg_pcc"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{'model':<16}" + "".join(f"{c:>10}" for c in cols)
                 + f"{'n':>7}\n")
        for tag, rep in reports:
            cells = []
            for d in rep.dimensions:
                cells.append(_fmt(d.rmse))
                cells.append(_fmt(d.pcc))
            cells.append(_fmt(rep.rmse_avg))
            cells.append(_fmt(rep.pcc_avg))
            fh.write(f"{tag:<16}" + "".join(f"{c:>10}" for c in cells)
                     + f"{rep.sample_count:>7}\n")


def write_report_csv(path, reports: list[tuple[str, EvalReport]]) -> None:
    """Machine-readable mirror of the text report; missing pcc -> nan."""
    cols = [f"{name}_{m}" for name in LABEL_NAMES for m in ("rmse", "pcc")]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("model,variant,n," + ",".join(cols) + ",avg_rmse,avg_pcc\n")
        for tag, rep in reports:
            vals = []
            for d in rep.dimensions:
                vals.append("%.17g" % d.rmse)
                vals.append(_fmt(d.pcc, missing="nan", pattern="%.17g"))
            vals.append("%.17g" % rep.rmse_avg)
            vals.append(_fmt(rep.pcc_avg, missing="nan", pattern="%.17g"))
            fh.write(f"{tag},{rep.variant},{rep.sample_count},"
                     + ",".join(vals) + "\n")


@dataclass(frozen=True)
class AggregateMetrics:
    name: str
    rmse_mean: float
    rmse_std: float
    pcc_mean: float | None
    pcc_std: float | None


@dataclass(frozen=True)
class BatteryReport:
    """Mean and sample standard deviation (ddof=1) across independent runs."""

    dimensions: tuple[AggregateMetrics, ...]
    rmse_avg_mean: float
    rmse_avg_std: float
    pcc_avg_mean: float | None
    pcc_avg_std: float | None
    runs: int
    variant: str


def aggregate_reports(reports: list[EvalReport]) -> BatteryReport:
    """Aggregate per-run reports; needs >= 2 runs for a sample std.

    A dimension whose pcc is undefined in any run aggregates as missing.
    """
    if len(reports) < 2:
        raise ValueError("aggregation needs at least 2 runs")
    variant = reports[0].variant
    if any(r.variant != variant for r in reports):
        raise ValueError("cannot aggregate across variants")
    dims = []
    for k, name in enumerate(LABEL_NAMES):
        rmses = np.array([r.dimensions[k].rmse for r in reports])
        pccs = [r.dimensions[k].pcc for r in reports]
        if any(p is None for p in pccs):
            p_mean, p_std = None, None
        else:
            arr = np.array(pccs, dtype=float)
            p_mean, p_std = float(arr.mean()), float(arr.std(ddof=1))
        dims.append(AggregateMetrics(
            name, float(rmses.mean()), float(rmses.std(ddof=1)), p_mean, p_std,
        ))
    ravg = np.array([r.rmse_avg for r in reports])
    pavgs = [r.pcc_avg for r in reports]
    if any(p is None for p in pavgs):
        pa_mean, pa_std = None, None
    else:
        arr = np.array(pavgs, dtype=float)
        pa_mean, pa_std = float(arr.mean()), float(arr.std(ddof=1))
    return BatteryReport(
        dimensions=tuple(dims),
        rmse_avg_mean=float(ravg.mean()),
        rmse_avg_std=float(ravg.std(ddof=1)),
        pcc_avg_mean=pa_mean,
        pcc_avg_std=pa_std,
        runs=len(reports),
        variant=variant,
    )


def write_battery_text(path, tag: str, battery: BatteryReport) -> None:
    """Aggregate table with one `mean +-std` cell per metric per dimension."""
    def cell(mean, std):
        if mean is None:
            return "--"
        return f"{mean:.3f} ±{std:.3f}"

    cols = [f"{name}_{m}" for name in LABEL_NAMES for m in ("rmse", "pcc")]
    cols += ["avg_rmse", "avg_pcc"]
    cells = []
    for d in battery.dimensions:
        cells.append(cell(d.rmse_mean, d.rmse_std))
        cells.append(cell(d.pcc_mean, d.pcc_std))
    cells.append(cell(battery.rmse_avg_mean, battery.rmse_avg_std))
    cells.append(cell(battery.pcc_avg_mean, battery.pcc_avg_std))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{'model':<16}" + "".join(f"{c:>16}" for c in cols)
                 + f"{'runs':>7}\n")
        fh.write(f"{tag:<16}" + "".join(f"{c:>16}" for c in cells)
                 + f"{battery.runs:>7}\n")


def write_battery_csv(path, tag: str, battery: BatteryReport) -> None:
    cols = []
    vals = []
    for d in battery.dimensions:
        cols += [f"{d.name}_rmse_mean", f"{d.name}_rmse_std",
                 f"{d.name}_pcc_mean", f"{d.name}_pcc_std"]
        vals += ["%.17g" % d.rmse_mean, "%.17g" % d.rmse_std,
                 _fmt(d.pcc_mean, "nan", "%.17g"),
                 _fmt(d.pcc_std, "nan", "%.17g")]
    cols += ["avg_rmse_mean", "avg_rmse_std", "avg_pcc_mean", "avg_pcc_std"]
    vals += ["%.17g" % battery.rmse_avg_mean, "%.17g" % battery.rmse_avg_std,
             _fmt(battery.pcc_avg_mean, "nan", "%.17g"),
             _fmt(battery.pcc_avg_std, "nan", "%.17g")]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("model,variant,runs," + ",".join(cols) + "\n")
        fh.write(f"{tag},{battery.variant},{battery.runs}," + ",".join(vals) + "\n")
