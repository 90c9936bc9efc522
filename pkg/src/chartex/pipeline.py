"""End-to-end extraction: page -> panels -> gate -> text -> bars -> model.

This is the shared orchestration used by both the CLI and the tests, so
the two always agree on what "the pipeline" means.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import disassembly, imgproc, semantics, textscan
from .config import Config
from .disassembly import Bar, NoAxesError
from .semantics import ChartModel


@dataclass
class PanelResult:
    bbox: tuple[int, int, int, int]  # x, y, w, h in page coordinates
    is_bar_chart: bool
    gate_score: float
    gated_by: str | None  # reason a panel was rejected, None if accepted
    model: ChartModel | None
    warnings: list[str] = field(default_factory=list)


@dataclass
class PageResult:
    panels: list[PanelResult]
    config_hash: str

    def to_dict(self) -> dict:
        return {
            "panels": [
                {
                    "bbox": list(p.bbox),
                    "is_bar_chart": p.is_bar_chart,
                    "gate_score": p.gate_score,
                    "model": p.model.to_dict() if p.model else None,
                    "provenance": {
                        "gated_by": p.gated_by,
                        "warnings": p.warnings,
                    },
                }
                for p in self.panels
            ],
        }


def extract_panel(
    rgb: np.ndarray,
    engine: textscan.OcrEngine | None = None,
    config: Config | None = None,
) -> PanelResult:
    """Run the full extraction pipeline on one panel image."""
    cfg = config or Config()
    if engine is None:
        engine = textscan.builtin_glyph_ocr
    if rgb.ndim == 2:
        rgb = np.stack([rgb] * 3, axis=-1)
    gray = imgproc.to_grayscale(rgb)
    bbox = (0, 0, gray.shape[1], gray.shape[0])

    binary, _ = imgproc.otsu_binarize(gray)
    candidates = textscan.detect_text_candidates(binary)
    mask = textscan.build_text_mask(gray.shape, candidates)
    word_boxes = textscan.group_glyphs(candidates)

    text_free = imgproc.subtract_mask(gray, mask)
    blurred = imgproc.gaussian_blur(text_free, cfg.blur_kernel)
    edges = imgproc.canny(blurred)
    try:
        axes = disassembly.detect_axes(
            edges,
            angle_tol_deg=cfg.angle_tol_deg,
            corner_dist=cfg.corner_dist,
            hough_votes=cfg.hough_votes,
            hough_max_gap=cfg.hough_max_gap,
        )
    except NoAxesError as e:
        return PanelResult(bbox, False, 0.0, f"no axes: {e}", None)

    crop, (dx, dy) = disassembly.crop_plot(blurred, axes, inset=cfg.crop_inset)
    if crop.size == 0:
        return PanelResult(bbox, False, 0.0, "empty plot area", None)
    plot_bin = disassembly.preprocess_plot(crop, open_kernel=cfg.open_kernel)
    baseline_local = min(axes.origin[1] - dy - 1, plot_bin.shape[0] - 1)
    bars = disassembly.detect_bars(
        plot_bin,
        baseline_local,
        top_tol=cfg.bar_top_tol,
        base_tol=cfg.bar_base_tol,
        min_width=cfg.min_bar_width,
        min_height=cfg.min_bar_height,
    )
    score = min(1.0, len(bars) / 4.0)
    if len(bars) < 2:
        return PanelResult(bbox, False, score, f"only {len(bars)} bars on the axis", None)

    panel_crop_rgb = rgb[dy : dy + plot_bin.shape[0], dx : dx + plot_bin.shape[1]]
    bars = disassembly.group_bars(
        panel_crop_rgb,
        sorted(bars, key=lambda b: b.x_left),
        color_dist_max=cfg.color_dist_max,
        density_tol=cfg.density_tol,
    )
    # shift bars from crop coordinates into panel coordinates
    bars = [
        Bar(
            x_left=b.x_left + dx,
            x_right=b.x_right + dx,
            y_top=b.y_top + dy,
            baseline_y=b.baseline_y + dy,
            group_id=b.group_id,
            signature=b.signature,
        )
        for b in bars
    ]

    # recognition sees only glyph candidates, so masked-out noise specks
    # do not land inside the OCR crops
    glyph_mask = textscan.build_text_mask(
        gray.shape, [c for c in candidates if c.glyph]
    )
    blocks = textscan.recognize(gray, glyph_mask, word_boxes, engine, y_axis_x=axes.origin[0])
    model = semantics.assemble(blocks, axes, bars, gray.shape)
    return PanelResult(bbox, True, score, None, model, warnings=list(model.warnings))


def extract_page(
    rgb: np.ndarray,
    engine: textscan.OcrEngine | None = None,
    config: Config | None = None,
) -> PageResult:
    """Segment a page into panels and extract each bar-chart panel."""
    cfg = config or Config()
    gray = imgproc.to_grayscale(rgb if rgb.ndim == 3 else np.stack([rgb] * 3, axis=-1))
    panels = disassembly.segment_panels(gray)
    if not panels:
        return PageResult([], cfg.hash)
    results = []
    for p in panels:
        b = p.bbox
        sub = rgb[b.y : b.y1, b.x : b.x1]
        r = extract_panel(sub, engine=engine, config=cfg)
        if r.model is not None:
            r.model.translate(b.x, b.y)
        results.append(replace(r, bbox=(b.x, b.y, b.w, b.h)))
    return PageResult(results, cfg.hash)
