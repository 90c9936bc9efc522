"""Deterministic synthetic bar-chart renderer with exact ground truth.

One rendering pass emits both the RGB raster and the geometry/strings it
drew, so ground truth is correct by construction. Text uses the shipped
bitmap font at an integer scale, which the built-in OCR recognizes
exactly on noise-free output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import font
from .imgproc import Rect

PALETTE = [
    (31, 119, 180),
    (255, 127, 14),
    (44, 160, 44),
    (214, 39, 40),
    (148, 103, 189),
    (140, 86, 75),
]
GRID_COLOR = (185, 185, 185)
AXIS_THICKNESS = 2
TEXT_SCALE = 2


class SpecInfeasible(ValueError):
    """Layout cannot fit the requested content on the canvas."""


@dataclass
class ChartSpec:
    values: list[list[float]]  # values[category][series]
    y_max: float
    tick_step: float
    colors: list[tuple[int, int, int]] = field(default_factory=list)
    value_labels: bool = False
    gridlines: bool = False
    hatching: bool = False
    noise: float = 0.0
    canvas: tuple[int, int] = (800, 600)  # (width, height)
    seed: int = 0
    title: str | None = None
    x_label: str | None = None
    y_label: str | None = None
    x_tick_labels: list[str] = field(default_factory=list)

    @property
    def n_categories(self) -> int:
        return len(self.values)

    @property
    def n_series(self) -> int:
        return len(self.values[0]) if self.values else 0

    def validate(self) -> None:
        if not self.values or not self.values[0]:
            raise SpecInfeasible("no values")
        if len({len(row) for row in self.values}) != 1:
            raise SpecInfeasible("ragged value rows")
        for row in self.values:
            for v in row:
                if not (0 <= v <= self.y_max):
                    raise SpecInfeasible(f"value {v} outside [0, {self.y_max}]")
        n_steps = self.y_max / self.tick_step
        if abs(n_steps - round(n_steps)) > 1e-9:
            raise SpecInfeasible("tick_step must divide y_max")
        if not 0 <= self.noise <= 0.05:
            raise SpecInfeasible("noise outside [0, 0.05]")
        for s in [self.title, self.x_label, self.y_label, *self.x_tick_labels]:
            if s is None:
                continue
            bad = set(s) - set(font.SUPPORTED)
            if bad:
                raise SpecInfeasible(f"unsupported glyphs {bad!r} in {s!r}")
        if self.x_tick_labels and len(self.x_tick_labels) != self.n_categories:
            raise SpecInfeasible("x_tick_labels length != category count")


@dataclass
class TruthText:
    bbox: Rect
    text: str
    role: str


@dataclass
class TruthBar:
    category: int
    group: int
    value: float
    x_left: int
    x_right: int
    y_top: int
    baseline_y: int


@dataclass
class GroundTruth:
    spec: ChartSpec
    bar_rects: list[TruthBar]
    text_boxes: list[TruthText]
    x_axis: tuple[tuple[int, int], tuple[int, int]]
    y_axis: tuple[tuple[int, int], tuple[int, int]]
    baseline_y: int
    axis_x: int
    px_per_unit: float

    def to_dict(self) -> dict:
        s = self.spec
        y_ticks = []
        n_ticks = int(round(s.y_max / s.tick_step)) + 1
        for i in range(n_ticks):
            v = i * s.tick_step
            y_ticks.append(
                {
                    "pixel": self.baseline_y - int(round(v * self.px_per_unit)),
                    "value": v,
                    "suspect": False,
                }
            )
        return {
            "title": s.title,
            "x_label": s.x_label,
            "y_label": s.y_label,
            "x_ticks": list(s.x_tick_labels),
            "y_ticks": y_ticks,
            "bars": [
                {
                    "category": b.category,
                    "group": b.group,
                    "value": b.value,
                    "value_source": "truth",
                    "geometry": {
                        "x_left": b.x_left,
                        "x_right": b.x_right,
                        "y_top": b.y_top,
                        "baseline_y": b.baseline_y,
                    },
                }
                for b in self.bar_rects
            ],
            "text_boxes": [
                {"bbox": list(t.bbox), "text": t.text, "role": t.role}
                for t in self.text_boxes
            ],
            "axes": {
                "x_axis": [list(self.x_axis[0]), list(self.x_axis[1])],
                "y_axis": [list(self.y_axis[0]), list(self.y_axis[1])],
                "baseline_y": self.baseline_y,
                "axis_x": self.axis_x,
                "px_per_unit": self.px_per_unit,
            },
            "canvas": {"width": s.canvas[0], "height": s.canvas[1]},
            "noise": s.noise,
            "seed": s.seed,
        }


def format_value(v: float) -> str:
    """Compact numeric string: integers without a decimal point."""
    if abs(v - round(v)) < 1e-9:
        return str(int(round(v)))
    return f"{v:g}"


def _blit_text(
    img: np.ndarray, text: str, x: int, y: int, scale: int = TEXT_SCALE, rotate: bool = False
) -> Rect:
    """Draw black text with a white halo; returns the ink bounding box."""
    m = font.render_text(text)
    m = np.repeat(np.repeat(m, scale, axis=0), scale, axis=1)
    if rotate:
        m = np.rot90(m, k=1)
    h, w = m.shape
    if y < 0 or x < 0 or y + h > img.shape[0] or x + w > img.shape[1]:
        raise SpecInfeasible(f"text {text!r} overflows canvas at ({x}, {y})")
    halo = 2
    y0, x0 = max(0, y - halo), max(0, x - halo)
    img[y0 : y + h + halo, x0 : x + w + halo] = 255
    img[y : y + h, x : x + w][m] = 0
    return Rect(x, y, w, h)


def render(spec: ChartSpec) -> tuple[np.ndarray, GroundTruth]:
    """Render a spec to an RGB canvas plus exact ground truth."""
    spec.validate()
    w, h = spec.canvas
    img = np.full((h, w, 3), 255, dtype=np.uint8)
    scale = TEXT_SCALE
    text_h = font.CELL_H * scale
    colors = list(spec.colors) if spec.colors else PALETTE[: spec.n_series]
    if len(colors) < spec.n_series:
        raise SpecInfeasible("not enough colors for series count")

    texts: list[TruthText] = []

    # vertical layout
    top_pad = 8
    title_h = text_h if spec.title else 0
    plot_top = top_pad + title_h + 14
    if spec.value_labels:
        plot_top += text_h + 8
    bottom = h - 8
    x_label_h = text_h if spec.x_label else 0
    baseline_y = bottom - x_label_h - 10 - text_h - 8

    # horizontal layout
    n_ticks = int(round(spec.y_max / spec.tick_step)) + 1
    tick_strings = [format_value(i * spec.tick_step) for i in range(n_ticks)]
    max_tick_w = max(font.text_extent(t)[0] for t in tick_strings) * scale
    y_label_w = text_h if spec.y_label else 0
    axis_x = 8 + y_label_w + 18 + max_tick_w + 10
    plot_right = w - 20
    if plot_right - axis_x < 40 or baseline_y - plot_top < 40:
        raise SpecInfeasible("canvas too small for layout")

    plot_height = baseline_y - plot_top
    px_per_unit = plot_height / spec.y_max

    def y_of(value: float) -> int:
        return baseline_y - int(round(value * px_per_unit))

    # gridlines first so everything else paints over them
    if spec.gridlines:
        for i in range(1, n_ticks):
            yy = y_of(i * spec.tick_step)
            img[yy, axis_x : plot_right + 1] = GRID_COLOR

    # 1 px axes: x-axis at row baseline_y+1, y-axis at col axis_x-2
    img[baseline_y + 1, axis_x - 2 : plot_right + 1] = 0
    img[plot_top - 4 : baseline_y + 2, axis_x - 2] = 0
    x_axis_seg = ((axis_x - 2, baseline_y + 1), (plot_right, baseline_y + 1))
    y_axis_seg = ((axis_x - 2, plot_top - 4), (axis_x - 2, baseline_y + 1))

    # y ticks: mark + right-aligned label; no mark at zero where the axis
    # corner already is, and a gap before the axis stroke so tick edges
    # stay clear of the axis line
    for i in range(n_ticks):
        v = i * spec.tick_step
        yy = y_of(v)
        if i > 0:
            img[yy, axis_x - 10 : axis_x - 5] = 0
        t = tick_strings[i]
        tw = font.text_extent(t)[0] * scale
        bbox = _blit_text(img, t, axis_x - 14 - tw, yy - text_h // 2)
        texts.append(TruthText(bbox, t, "y_tick"))

    # bars
    slot_w = (plot_right - axis_x) / spec.n_categories
    n_series = spec.n_series
    series_gap = 6
    bar_w = int((slot_w * 0.7 - series_gap * (n_series - 1)) / n_series)
    if bar_w < 8:
        raise SpecInfeasible("bars too narrow; reduce categories/series")
    bars: list[TruthBar] = []
    for ci, row in enumerate(spec.values):
        slot_x0 = axis_x + ci * slot_w
        group_w = n_series * bar_w + (n_series - 1) * series_gap
        gx0 = int(round(slot_x0 + (slot_w - group_w) / 2))
        for si, v in enumerate(row):
            x0 = gx0 + si * (bar_w + series_gap)
            x1 = x0 + bar_w - 1
            hpx = int(round(v * px_per_unit))
            y_top = baseline_y - hpx
            img[y_top : baseline_y + 1, x0 : x1 + 1] = colors[si]
            if spec.hatching and si % 2 == 1:
                # 1 px diagonal stripes: enough to shift the mean color for
                # grouping, thin enough to binarize solid after blurring
                for d in range(-(baseline_y - y_top) - bar_w, bar_w + 1, 6):
                    for dy in range(y_top, baseline_y + 1):
                        xx = x0 + d + (dy - y_top)
                        if x0 + 1 <= xx <= x1 - 1:
                            img[dy, xx] = 255
            bars.append(TruthBar(ci, si, v, x0, x1, y_top, baseline_y))

    # x tick labels under slot centers
    xt_y = baseline_y + 3 + 6
    for ci in range(spec.n_categories):
        if not spec.x_tick_labels:
            break
        t = spec.x_tick_labels[ci]
        tw = font.text_extent(t)[0] * scale
        cx = int(round(axis_x + (ci + 0.5) * slot_w))
        bbox = _blit_text(img, t, cx - tw // 2, xt_y)
        texts.append(TruthText(bbox, t, "x_tick"))

    # value labels above bars
    if spec.value_labels:
        for b in bars:
            t = format_value(b.value)
            tw = font.text_extent(t)[0] * scale
            cx = (b.x_left + b.x_right) // 2
            bbox = _blit_text(img, t, cx - tw // 2, b.y_top - text_h - 4)
            texts.append(TruthText(bbox, t, "bar_value"))

    # title / axis labels
    if spec.title:
        tw = font.text_extent(spec.title)[0] * scale
        bbox = _blit_text(img, spec.title, (w - tw) // 2, top_pad)
        texts.append(TruthText(bbox, spec.title, "title"))
    if spec.x_label:
        tw = font.text_extent(spec.x_label)[0] * scale
        cx = (axis_x + plot_right) // 2
        bbox = _blit_text(img, spec.x_label, cx - tw // 2, xt_y + text_h + 10)
        texts.append(TruthText(bbox, spec.x_label, "x_label"))
    if spec.y_label:
        tw = font.text_extent(spec.y_label)[0] * scale
        cy = (plot_top + baseline_y) // 2
        bbox = _blit_text(img, spec.y_label, 8, cy - tw // 2, rotate=True)
        texts.append(TruthText(bbox, spec.y_label, "y_label"))

    # salt-and-pepper: exactly round(noise * w * h) inverted pixels
    if spec.noise > 0:
        rng = np.random.default_rng(spec.seed)
        k = int(round(spec.noise * w * h))
        flat = rng.choice(w * h, size=k, replace=False)
        ys, xs = flat // w, flat % w
        img[ys, xs] = 255 - img[ys, xs]

    truth = GroundTruth(
        spec=spec,
        bar_rects=bars,
        text_boxes=texts,
        x_axis=x_axis_seg,
        y_axis=y_axis_seg,
        baseline_y=baseline_y,
        axis_x=axis_x - 2,
        px_per_unit=px_per_unit,
    )
    return img, truth


TITLE_POOL = [
    "CHANGE IN VA",
    "MEAN CFT",
    "PATIENTS BY ARM",
    "VA AT MONTH 12",
    "RESPONSE RATE",
    "LETTER SCORE",
    "EVENTS BY GROUP",
    "DOSE RESPONSE",
]
X_LABEL_POOL = ["MONTH", "ARM", "GROUP", "DOSE", "WEEK", "VISIT"]
Y_LABEL_POOL = ["PERCENT", "LETTERS", "COUNT", "SCORE", "RATE", "VALUE"]
X_TICK_POOLS = [
    ["A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "K", "L"],
    ["1", "2", "3", "4", "5", "6", "7", "8", "9", "10", "11", "12"],
    ["G1", "G2", "G3", "G4", "G5", "G6", "G7", "G8", "G9", "G10", "G11", "G12"],
]
Y_MAX_CHOICES = [10, 50, 100, 200, 1000]
NOISE_CHOICES = [0.0, 0.01, 0.02]


def sample_spec(rng: np.random.Generator, canvas: tuple[int, int] = (800, 600)) -> ChartSpec:
    """Draw one random chart spec from the corpus distribution."""
    n_series = int(rng.integers(1, 4))
    # total bars 2..12
    max_cats = max(2, 12 // n_series)
    n_cats = int(rng.integers(2, max_cats + 1))
    y_max = float(Y_MAX_CHOICES[rng.integers(len(Y_MAX_CHOICES))])
    tick_step = y_max / int(rng.choice([4, 5, 10]))
    values = [
        [
            round(float(rng.uniform(0.12, 0.95)) * y_max, 1 if y_max <= 100 else 0)
            for _ in range(n_series)
        ]
        for _ in range(n_cats)
    ]
    ticks = list(X_TICK_POOLS[rng.integers(len(X_TICK_POOLS))][:n_cats])
    return ChartSpec(
        values=values,
        y_max=y_max,
        tick_step=tick_step,
        value_labels=bool(rng.random() < 0.5),
        gridlines=bool(rng.random() < 0.5),
        hatching=bool(rng.random() < 0.5),
        noise=float(NOISE_CHOICES[rng.integers(len(NOISE_CHOICES))]),
        canvas=canvas,
        seed=int(rng.integers(0, 2**63 - 1)),
        title=str(rng.choice(TITLE_POOL)),
        x_label=str(rng.choice(X_LABEL_POOL)),
        y_label=str(rng.choice(Y_LABEL_POOL)),
        x_tick_labels=ticks,
    )


DEFAULT_CORPUS_SEED = 20260826


def generate_corpus(
    n: int,
    seed: int = DEFAULT_CORPUS_SEED,
    out_dir: str | Path | None = None,
    canvas: tuple[int, int] = (800, 600),
) -> list[tuple[np.ndarray, GroundTruth]]:
    """Deterministically sample and render n charts; optionally write
    paired NNNN.png / NNNN.truth.json files."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        while True:
            spec = sample_spec(rng, canvas)
            try:
                img, truth = render(spec)
                break
            except SpecInfeasible:
                continue
        out.append((img, truth))
        if out_dir is not None:
            out_path = Path(out_dir)
            out_path.mkdir(parents=True, exist_ok=True)
            save_png(img, out_path / f"{i:04d}.png")
            with open(out_path / f"{i:04d}.truth.json", "w") as f:
                json.dump(truth.to_dict(), f, indent=1, sort_keys=True)
    return out


def save_png(img: np.ndarray, path: str | Path) -> None:
    from PIL import Image

    Image.fromarray(img).save(path)


def load_png(path: str | Path) -> np.ndarray:
    from PIL import Image

    return np.asarray(Image.open(path).convert("RGB"))
