"""Evaluation: extraction accuracy by class and Bland-Altman agreement.

Accuracy follows the usual convention for chart-extraction benchmarks:
string classes (tick and axis text) score exact matches; bar values score
the share of detected bars whose relative error stays under 1, 2 and 5
percent. Bland-Altman summarizes numeric agreement as mean difference
(bias) and limits of agreement bias +/- z * sd.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EPS = 1e-9
TICK_MATCH_DIST = 25  # px: max pixel distance between truth/pred tick rows


@dataclass(frozen=True)
class MatchedPair:
    truth: float
    pred: float

    @property
    def rel_error(self) -> float:
        return abs(self.pred - self.truth) / max(abs(self.truth), EPS)


@dataclass
class ClassScore:
    n: int = 0
    hits: int = 0

    @property
    def pct(self) -> float | None:
        """Percentage correct, or None when the class is empty."""
        if self.n == 0:
            return None
        return 100.0 * self.hits / self.n


@dataclass
class AccuracyReport:
    x_tick: ClassScore = field(default_factory=ClassScore)
    x_label: ClassScore = field(default_factory=ClassScore)
    y_tick: ClassScore = field(default_factory=ClassScore)
    y_label: ClassScore = field(default_factory=ClassScore)
    bars_truth: int = 0
    bars_detected: int = 0
    bar_within_1: int = 0
    bar_within_2: int = 0
    bar_within_5: int = 0
    pairs: list[MatchedPair] = field(default_factory=list)

    @property
    def detection_pct(self) -> float | None:
        if self.bars_truth == 0:
            return None
        return 100.0 * self.bars_detected / self.bars_truth

    def bar_pct(self, threshold: int) -> float | None:
        """Share of detected bars within the given percent error."""
        if self.bars_detected == 0:
            return None
        hits = {1: self.bar_within_1, 2: self.bar_within_2, 5: self.bar_within_5}[threshold]
        return 100.0 * hits / self.bars_detected

    def merge(self, other: "AccuracyReport") -> None:
        for name in ("x_tick", "x_label", "y_tick", "y_label"):
            a, b = getattr(self, name), getattr(other, name)
            a.n += b.n
            a.hits += b.hits
        self.bars_truth += other.bars_truth
        self.bars_detected += other.bars_detected
        self.bar_within_1 += other.bar_within_1
        self.bar_within_2 += other.bar_within_2
        self.bar_within_5 += other.bar_within_5
        self.pairs.extend(other.pairs)


def match(truth: dict, pred: dict) -> AccuracyReport:
    """Score one predicted chart model against its ground truth.

    Both arguments use the extraction JSON schema. Bars pair by
    (category, group); y ticks pair by nearest pixel row within
    TICK_MATCH_DIST; x ticks compare in left-to-right order.
    """
    rep = AccuracyReport()

    truth_x = list(truth.get("x_ticks") or [])
    pred_x = list(pred.get("x_ticks") or [])
    rep.x_tick.n = len(truth_x)
    rep.x_tick.hits = sum(1 for t, p in zip(truth_x, pred_x) if t == p)

    for name in ("x_label", "y_label"):
        t = truth.get(name)
        if t is None:
            continue
        score = getattr(rep, name)
        score.n = 1
        score.hits = int(pred.get(name) == t)

    truth_ticks = list(truth.get("y_ticks") or [])
    pred_ticks = list(pred.get("y_ticks") or [])
    rep.y_tick.n = len(truth_ticks)
    taken = [False] * len(pred_ticks)
    for tt in truth_ticks:
        best_j, best_d = -1, None
        for j, pt in enumerate(pred_ticks):
            if taken[j]:
                continue
            d = abs(pt["pixel"] - tt["pixel"])
            if best_d is None or d < best_d:
                best_j, best_d = j, d
        if best_j >= 0 and best_d is not None and best_d <= TICK_MATCH_DIST:
            taken[best_j] = True
            if math.isclose(pred_ticks[best_j]["value"], tt["value"], rel_tol=0, abs_tol=EPS):
                rep.y_tick.hits += 1

    truth_bars = list(truth.get("bars") or [])
    pred_bars = list(pred.get("bars") or [])
    rep.bars_truth = len(truth_bars)
    by_key: dict[tuple, dict] = {}
    for b in pred_bars:
        by_key.setdefault((b["category"], b["group"]), b)
    for tb in truth_bars:
        pb = by_key.pop((tb["category"], tb["group"]), None)
        if pb is None or pb.get("value") is None:
            continue
        rep.bars_detected += 1
        pair = MatchedPair(truth=float(tb["value"]), pred=float(pb["value"]))
        rep.pairs.append(pair)
        e = pair.rel_error
        rep.bar_within_1 += e < 0.01
        rep.bar_within_2 += e < 0.02
        rep.bar_within_5 += e < 0.05
    return rep


@dataclass(frozen=True)
class BlandAltman:
    bias: float
    sd: float
    loa_low: float
    loa_high: float
    z: float
    n: int
    pct_within: float  # share of points inside the limits
    means: tuple[float, ...]
    diffs: tuple[float, ...]


def bland_altman(pairs: list[MatchedPair], z: float = 2.0, ddof: int = 1) -> BlandAltman:
    """Bland-Altman agreement statistics for matched value pairs.

    diffs = pred - truth; bias is their mean, sd the sample standard
    deviation (ddof=1), limits of agreement bias +/- z * sd.
    """
    if len(pairs) < 2:
        raise ValueError("need at least two pairs")
    diffs = np.array([p.pred - p.truth for p in pairs], dtype=np.float64)
    means = np.array([(p.pred + p.truth) / 2.0 for p in pairs], dtype=np.float64)
    bias = float(diffs.mean())
    sd = float(diffs.std(ddof=ddof))
    lo, hi = bias - z * sd, bias + z * sd
    within = float(100.0 * np.mean((diffs >= lo) & (diffs <= hi)))
    return BlandAltman(
        bias=bias,
        sd=sd,
        loa_low=lo,
        loa_high=hi,
        z=z,
        n=len(pairs),
        pct_within=within,
        means=tuple(means),
        diffs=tuple(diffs),
    )


def _fmt_pct(p: float | None) -> str:
    return "   n/a" if p is None else f"{p:6.1f}"


# Table row order follows the usual accuracy-table convention
_TABLE_ROWS = [
    ("X-TICK VALUE", lambda r: r.x_tick.pct),
    ("X-AXIS LABEL", lambda r: r.x_label.pct),
    ("Y-TICK VALUE", lambda r: r.y_tick.pct),
    ("Y-AXIS LABEL", lambda r: r.y_label.pct),
    ("BAR VALUE (<1% ERR)", lambda r: r.bar_pct(1)),
    ("BAR VALUE (<2% ERR)", lambda r: r.bar_pct(2)),
    ("BAR VALUE (<5% ERR)", lambda r: r.bar_pct(5)),
]


def format_table(rep: AccuracyReport) -> str:
    lines = [f"{'CLASS':<22}{'ACC %':>8}"]
    for name, fn in _TABLE_ROWS:
        lines.append(f"{name:<22}{_fmt_pct(fn(rep)):>8}")
    det = rep.detection_pct
    lines.append(f"{'BARS DETECTED':<22}{_fmt_pct(det):>8}")
    return "\n".join(lines)


def report_dict(rep: AccuracyReport, ba: BlandAltman | None = None) -> dict:
    out = {
        "classes": {
            "x_tick": {"n": rep.x_tick.n, "hits": rep.x_tick.hits, "pct": rep.x_tick.pct},
            "x_label": {"n": rep.x_label.n, "hits": rep.x_label.hits, "pct": rep.x_label.pct},
            "y_tick": {"n": rep.y_tick.n, "hits": rep.y_tick.hits, "pct": rep.y_tick.pct},
            "y_label": {"n": rep.y_label.n, "hits": rep.y_label.hits, "pct": rep.y_label.pct},
        },
        "bars": {
            "truth": rep.bars_truth,
            "detected": rep.bars_detected,
            "detection_pct": rep.detection_pct,
            "within_1_pct": rep.bar_pct(1),
            "within_2_pct": rep.bar_pct(2),
            "within_5_pct": rep.bar_pct(5),
        },
    }
    if ba is not None:
        out["bland_altman"] = {
            "bias": ba.bias,
            "sd": ba.sd,
            "loa_low": ba.loa_low,
            "loa_high": ba.loa_high,
            "z": ba.z,
            "n": ba.n,
            "pct_within": ba.pct_within,
        }
    return out


def scatter_csv(ba: BlandAltman) -> str:
    """mean,diff rows for plotting the agreement scatter."""
    lines = ["mean,diff"]
    lines += [f"{m:.6g},{d:.6g}" for m, d in zip(ba.means, ba.diffs)]
    return "\n".join(lines)


def truth_to_model(truth: dict) -> dict:
    """Rewrite a renderer ground-truth dict into extraction-schema form.

    The renderer stores bar categories as indices; the extraction model
    binds them to x-tick strings, so resolve indices through x_ticks.
    """
    x_ticks = list(truth.get("x_ticks") or [])
    bars = []
    for b in truth.get("bars") or []:
        cat = b["category"]
        if isinstance(cat, int):
            cat = x_ticks[cat] if cat < len(x_ticks) else str(cat)
        bars.append({**b, "category": cat})
    return {**truth, "bars": bars}
