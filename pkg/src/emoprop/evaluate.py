"""Cross-validation harness, multilabel P/R/F1, pooled R/R² and the two
significance tests used to compare configurations.

Folds: annotated LU ids are shuffled once per seed and cut into 10
contiguous blocks; fold k tests on block k, validates on block (k+1) mod
10 and trains on the rest, an 80/10/10 split when the count divides
evenly.  Classification metrics binarize at 0.5 and follow the 0/0 = 0
convention; regression metrics pool all (LU, dimension) pairs into one
series.  Normality is checked with the Shapiro-Wilk W statistic using
Royston's 1995 approximation (AS R94) for the p-value, and runs are
compared with a paired two-sided Student t-test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy.special import betainc, ndtr, ndtri

from .graph import DIMENSIONS, NUM_DIMENSIONS, NodeId, WordNetGraph
from .mlp import MLPConfig, binarize
from .propagate import propagate

NUM_FOLDS = 10
DEFAULT_ALPHA = 0.05


class EvalError(ValueError):
    """Invalid evaluation inputs."""


@dataclass(frozen=True)
class FoldSpec:
    index: int
    train: tuple
    val: tuple
    test: tuple


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float


class ShapiroResult(NamedTuple):
    statistic: float
    pvalue: float


class TTestResult(NamedTuple):
    statistic: float
    df: int
    pvalue: float


@dataclass
class MetricsReport:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    micro: PRF
    macro: PRF
    weighted: PRF
    pooled_r: float | None = None
    pooled_r2: float | None = None


@dataclass
class CVResult:
    folds: list[FoldSpec]
    reports: list[MetricsReport]
    aggregate: dict


@dataclass
class ComparisonReport:
    alpha: float
    shapiro_a: ShapiroResult | None
    shapiro_b: ShapiroResult | None
    normal_a: bool | None
    normal_b: bool | None
    ttest: TTestResult | None
    significant: bool | None
    identical: bool
    notes: list[str] = field(default_factory=list)


def make_folds(lu_ids: Sequence, seed: int, n_folds: int = NUM_FOLDS) -> list[FoldSpec]:
    """Shuffle, cut into n_folds contiguous blocks (sizes differ by at
    most 1), rotate test/val/train roles."""
    ids = list(lu_ids)
    if len(ids) < n_folds:
        raise EvalError(f"need at least {n_folds} ids, got {len(ids)}")
    rng = np.random.default_rng(seed)
    shuffled = [ids[i] for i in rng.permutation(len(ids))]
    blocks = [
        [shuffled[i] for i in chunk]
        for chunk in np.array_split(np.arange(len(ids)), n_folds)
    ]
    folds = []
    for k in range(n_folds):
        test = tuple(blocks[k])
        val = tuple(blocks[(k + 1) % n_folds])
        train = tuple(
            x for j, b in enumerate(blocks) if j not in (k, (k + 1) % n_folds) for x in b
        )
        folds.append(FoldSpec(index=k, train=train, val=val, test=test))
    return folds


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den != 0)
    return out


def prf_scores(pred: np.ndarray, gold: np.ndarray) -> MetricsReport:
    """Per-dimension and averaged precision/recall/F1 over binary labels.

    0/0 counts as 0 everywhere; weighted averages use gold positives per
    dimension as weights.
    """
    pred = np.asarray(pred, dtype=bool)
    gold = np.asarray(gold, dtype=bool)
    if pred.shape != gold.shape or pred.ndim != 2 or pred.shape[1] != NUM_DIMENSIONS:
        raise EvalError(f"label shape mismatch: pred {pred.shape} vs gold {gold.shape}")
    tp = (pred & gold).sum(axis=0)
    fp = (pred & ~gold).sum(axis=0)
    fn = (~pred & gold).sum(axis=0)
    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    support = gold.sum(axis=0)

    tp_all, fp_all, fn_all = int(tp.sum()), int(fp.sum()), int(fn.sum())
    micro_p = tp_all / (tp_all + fp_all) if tp_all + fp_all else 0.0
    micro_r = tp_all / (tp_all + fn_all) if tp_all + fn_all else 0.0
    micro_f1 = 2 * micro_p * micro_r / (micro_p + micro_r) if micro_p + micro_r else 0.0
    macro = PRF(float(precision.mean()), float(recall.mean()), float(f1.mean()))
    total = support.sum()
    if total:
        weighted = PRF(
            float(np.average(precision, weights=support)),
            float(np.average(recall, weights=support)),
            float(np.average(f1, weights=support)),
        )
    else:
        weighted = PRF(0.0, 0.0, 0.0)
    return MetricsReport(
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        micro=PRF(micro_p, micro_r, micro_f1),
        macro=macro,
        weighted=weighted,
    )


def pooled_r_r2(pred: np.ndarray, gold: np.ndarray) -> tuple[float, float]:
    """Pearson R and R² = 1 − FVU over the flattened (LU, dim) series.

    A constant prediction series has no defined correlation; R = 0 by
    convention there.  Zero residual short-circuits to exactly (1, 1).
    """
    p = np.asarray(pred, dtype=np.float64).ravel()
    g = np.asarray(gold, dtype=np.float64).ravel()
    if p.shape != g.shape:
        raise EvalError(f"series length mismatch: {p.shape} vs {g.shape}")
    if p.size < 2:
        raise EvalError("need at least 2 pooled values")
    gc = g - g.mean()
    ss_gold = float(np.dot(gc, gc))
    if ss_gold == 0.0:
        raise EvalError("gold series is constant")
    resid = p - g
    ss_res = float(np.dot(resid, resid))
    if ss_res == 0.0:
        return 1.0, 1.0
    r2 = 1.0 - ss_res / ss_gold
    pc = p - p.mean()
    ss_pred = float(np.dot(pc, pc))
    if ss_pred == 0.0:
        return 0.0, r2
    r = float(np.dot(pc, gc) / np.sqrt(ss_pred * ss_gold))
    return max(-1.0, min(1.0, r)), r2


# Royston's AS R94 polynomial coefficients, lowest order first.
_SW_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_SW_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_SW_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_SW_C4 = (1.3822, -0.77857, 0.062767, -2.0322e-3)
_SW_C5 = (-1.5861, -0.31082, -0.083751, 3.8915e-3)
_SW_C6 = (-0.4803, -0.082676, 3.0302e-3)
_SW_G = (-2.273, 0.459)
_SW_PI6 = 1.90985931710274
_SW_STQR = 1.04719755119660
_SW_SMALL = 1e-19


def _poly(coeffs: tuple[float, ...], x: float) -> float:
    out = 0.0
    for c in reversed(coeffs):
        out = out * x + c
    return out


def shapiro_wilk(sample: Iterable[float]) -> ShapiroResult:
    """W statistic and its p-value under the normality null.

    Weights follow Royston (1995): Blom scores normalized to unit length
    with polynomial corrections to the one or two extreme weights; the
    p-value transforms W to an approximately standard normal z whose
    parameters depend on n (a direct arcsine formula at n = 3).
    """
    x = np.sort(np.asarray(list(sample), dtype=np.float64))
    n = x.size
    if n < 3:
        raise EvalError("need at least 3 observations")
    if n > 5000:
        raise EvalError("more than 5000 observations")
    if x[0] == x[-1]:
        raise EvalError("zero variance sample")

    m = ndtri((np.arange(1, n + 1) - 0.375) / (n + 0.25))
    ssumm2 = float(np.dot(m, m))
    rsn = 1.0 / np.sqrt(n)
    if n == 3:
        a = np.array([-np.sqrt(0.5), 0.0, np.sqrt(0.5)])
    else:
        a_top = m[-1] / np.sqrt(ssumm2) + _poly(_SW_C1, rsn)
        if n > 5:
            a_next = m[-2] / np.sqrt(ssumm2) + _poly(_SW_C2, rsn)
            fac = np.sqrt(
                (ssumm2 - 2 * m[-1] ** 2 - 2 * m[-2] ** 2)
                / (1 - 2 * a_top**2 - 2 * a_next**2)
            )
            a = m / fac
            a[-1], a[-2], a[0], a[1] = a_top, a_next, -a_top, -a_next
        else:
            fac = np.sqrt((ssumm2 - 2 * m[-1] ** 2) / (1 - 2 * a_top**2))
            a = m / fac
            a[-1], a[0] = a_top, -a_top

    xc = x - x.mean()
    w = float(np.dot(a, x)) ** 2 / float(np.dot(xc, xc))
    w = min(w, 1.0)

    if n == 3:
        p = _SW_PI6 * (np.arcsin(np.sqrt(w)) - _SW_STQR)
        return ShapiroResult(w, float(min(max(p, 0.0), 1.0)))

    y = float(np.log(max(1.0 - w, _SW_SMALL)))
    if n <= 11:
        gamma = _poly(_SW_G, float(n))
        if y >= gamma:
            return ShapiroResult(w, _SW_SMALL)
        y = -np.log(gamma - y)
        mu = _poly(_SW_C3, float(n))
        sigma = np.exp(_poly(_SW_C4, float(n)))
    else:
        log_n = np.log(float(n))
        mu = _poly(_SW_C5, log_n)
        sigma = np.exp(_poly(_SW_C6, log_n))
    p = float(ndtr(-(y - mu) / sigma))
    return ShapiroResult(w, min(max(p, 0.0), 1.0))


def paired_t_test(a: Iterable[float], b: Iterable[float]) -> TTestResult:
    """Two-sided paired Student t-test on a − b.

    t = mean(d)/(sd(d)/√n) with the n−1 sample standard deviation; the
    p-value comes from the t CDF expressed through the regularized
    incomplete beta function.
    """
    a = np.asarray(list(a), dtype=np.float64)
    b = np.asarray(list(b), dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise EvalError(f"paired samples differ in shape: {a.shape} vs {b.shape}")
    n = a.size
    if n < 2:
        raise EvalError("need at least 2 pairs")
    d = a - b
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        raise EvalError("zero-variance differences (samples identical up to a shift)")
    t = float(d.mean() / (sd / np.sqrt(n)))
    df = n - 1
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTestResult(t, df, p)


def compare_runs(
    f1_a: Sequence[float], f1_b: Sequence[float], alpha: float = DEFAULT_ALPHA
) -> ComparisonReport:
    """Normality check on each per-fold sample, then the paired t-test.

    Degenerate inputs are reported instead of raised: a zero-variance
    sample leaves its normality flag undetermined, and identical paired
    samples produce identical=True with no test statistic.
    """
    notes: list[str] = []

    def _shapiro(sample, label):
        try:
            res = shapiro_wilk(sample)
        except EvalError as exc:
            notes.append(f"sample {label}: normality undetermined ({exc})")
            return None, None
        return res, bool(res.pvalue > alpha)

    shapiro_a, normal_a = _shapiro(f1_a, "a")
    shapiro_b, normal_b = _shapiro(f1_b, "b")

    ttest = None
    significant = None
    identical = False
    try:
        ttest = paired_t_test(f1_a, f1_b)
        significant = bool(ttest.pvalue < alpha)
    except EvalError:
        identical = True
        notes.append("identical samples: paired differences have zero variance")
    return ComparisonReport(
        alpha=alpha,
        shapiro_a=shapiro_a,
        shapiro_b=shapiro_b,
        normal_a=normal_a,
        normal_b=normal_b,
        ttest=ttest,
        significant=significant,
        identical=identical,
        notes=notes,
    )


def _mean_sd(values: Sequence[float]) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    sd = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return {"mean": float(arr.mean()), "sd": sd}


def aggregate_reports(reports: Sequence[MetricsReport]) -> dict:
    """Mean ± sample sd across folds, keyed by dimension name plus the
    three averaging schemes and the pooled regression metrics."""
    if not reports:
        raise EvalError("no reports to aggregate")
    agg: dict = {}
    for di, name in enumerate(DIMENSIONS):
        agg[name] = {
            "precision": _mean_sd([r.precision[di] for r in reports]),
            "recall": _mean_sd([r.recall[di] for r in reports]),
            "f1": _mean_sd([r.f1[di] for r in reports]),
            "support": _mean_sd([float(r.support[di]) for r in reports]),
        }
    for scheme in ("micro", "macro", "weighted"):
        agg[scheme] = {
            metric: _mean_sd([getattr(getattr(r, scheme), metric) for r in reports])
            for metric in ("precision", "recall", "f1")
        }
    if all(r.pooled_r is not None for r in reports):
        agg["pooled_r"] = _mean_sd([r.pooled_r for r in reports])
        agg["pooled_r2"] = _mean_sd([r.pooled_r2 for r in reports])
    return agg


def format_metrics_table(aggregate: Mapping) -> str:
    """Aligned text rendering of an aggregate, one row per key."""
    rows = [("", "P", "R", "F1")]
    for name in (*DIMENSIONS, "micro", "macro", "weighted"):
        if name not in aggregate:
            continue
        entry = aggregate[name]
        rows.append(
            (
                name,
                _pm(entry["precision"]),
                _pm(entry["recall"]),
                _pm(entry["f1"]),
            )
        )
    for name in ("pooled_r", "pooled_r2"):
        if name in aggregate:
            rows.append((name, _pm(aggregate[name]), "", ""))
    widths = [max(len(row[c]) for row in rows) for c in range(4)]
    lines = [
        "  ".join(
            cell.ljust(widths[c]) if c == 0 else cell.rjust(widths[c])
            for c, cell in enumerate(row)
        ).rstrip()
        for row in rows
    ]
    return "\n".join(lines)


def _pm(entry: Mapping) -> str:
    return f"{entry['mean']:.3f} ± {entry['sd']:.3f}"


def format_comparison(report: ComparisonReport) -> str:
    lines = [f"alpha = {report.alpha}"]
    for label, res, flag in (
        ("a", report.shapiro_a, report.normal_a),
        ("b", report.shapiro_b, report.normal_b),
    ):
        if res is None:
            lines.append(f"shapiro-wilk {label}: undetermined")
        else:
            verdict = "not rejected" if flag else "rejected"
            lines.append(
                f"shapiro-wilk {label}: W = {res.statistic:.4f}, "
                f"p = {res.pvalue:.4f} (normality {verdict})"
            )
    if report.identical:
        lines.append("paired t-test: identical samples, no statistic")
    elif report.ttest is not None:
        verdict = "significant" if report.significant else "not significant"
        lines.append(
            f"paired t-test: t = {report.ttest.statistic:.4f}, "
            f"df = {report.ttest.df}, p = {report.ttest.pvalue:.4f} ({verdict})"
        )
    for note in report.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines)


def run_cv(
    g: WordNetGraph,
    embeddings,
    mlp_cfg: MLPConfig,
    seed: int,
    retrain_per_wave: bool = False,
    annotations: Mapping[NodeId, np.ndarray] | None = None,
    n_folds: int = NUM_FOLDS,
) -> CVResult:
    """Full cross-validated propagation: each fold seeds the model with
    its train block, early-stops on its val block and scores predictions
    against the held-out test block."""
    if annotations is None:
        annotations = g.annotations
    lu_ids = sorted(annotations)
    if len(lu_ids) < 2 * n_folds:
        raise EvalError(
            f"need at least {2 * n_folds} annotated LUs for {n_folds}-fold "
            f"evaluation (each validation block needs 2 samples), got {len(lu_ids)}"
        )
    folds = make_folds(lu_ids, seed, n_folds)
    reports = []
    for fold in folds:
        seed_ann = {lu: annotations[lu] for lu in fold.train}
        val_ann = {lu: annotations[lu] for lu in fold.val}
        result = propagate(
            g, embeddings, mlp_cfg, seed_ann, val_ann, fold.test, retrain_per_wave
        )
        test_sorted = sorted(fold.test)
        raw = np.stack([result.predictions[lu].raw for lu in test_sorted])
        pred_labels = np.stack([result.predictions[lu].labels for lu in test_sorted])
        gold_raw = np.stack(
            [np.asarray(annotations[lu], dtype=np.float64) for lu in test_sorted]
        )
        report = prf_scores(pred_labels, binarize(gold_raw))
        report.pooled_r, report.pooled_r2 = pooled_r_r2(raw, gold_raw)
        reports.append(report)
    return CVResult(folds=folds, reports=reports, aggregate=aggregate_reports(reports))
