"""Flat key=value configuration with validated defaults and a stable hash."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

# (default, min, max) for every tunable; ints stay ints, floats stay floats
_SCHEMA: dict[str, tuple[float, float, float]] = {
    "blur_kernel": (5, 1, 31),
    "open_kernel": (5, 1, 31),
    "hough_votes": (50, 1, 10_000),
    "hough_max_gap": (5, 0, 100),
    "angle_tol_deg": (2.0, 0.0, 45.0),
    "corner_dist": (10.0, 0.0, 200.0),
    "min_bar_width": (3, 1, 500),
    "min_bar_height": (3, 1, 500),
    "bar_top_tol": (2, 0, 50),
    "bar_base_tol": (3, 0, 50),
    "color_dist_max": (20.0, 0.0, 442.0),
    "density_tol": (0.2, 0.0, 1.0),
    "residual_factor": (0.25, 0.0, 10.0),
    "label_gap_max": (15, 0, 200),
    "crop_inset": (2, 0, 50),
}
_INT_KEYS = {
    "blur_kernel",
    "open_kernel",
    "hough_votes",
    "hough_max_gap",
    "min_bar_width",
    "min_bar_height",
    "bar_top_tol",
    "bar_base_tol",
    "label_gap_max",
    "crop_inset",
}


class ConfigError(ValueError):
    """Unknown key, unparseable value, or value out of range."""


@dataclass(frozen=True)
class Config:
    blur_kernel: int = 5
    open_kernel: int = 5
    hough_votes: int = 50
    hough_max_gap: int = 5
    angle_tol_deg: float = 2.0
    corner_dist: float = 10.0
    min_bar_width: int = 3
    min_bar_height: int = 3
    bar_top_tol: int = 2
    bar_base_tol: int = 3
    color_dist_max: float = 20.0
    density_tol: float = 0.2
    residual_factor: float = 0.25
    label_gap_max: int = 15
    crop_inset: int = 2

    def to_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def hash(self) -> str:
        """Stable short digest of the effective settings."""
        canon = "\n".join(f"{k}={self.to_dict()[k]!r}" for k in sorted(_SCHEMA))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


def parse_config(text: str) -> Config:
    """Parse `key = value` lines; # starts a comment, blanks are ignored."""
    overrides: dict[str, float] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {ln}: unknown key {key!r}")
        try:
            num = int(val) if key in _INT_KEYS else float(val)
        except ValueError:
            kind = "integer" if key in _INT_KEYS else "number"
            raise ConfigError(f"line {ln}: {key} needs a {kind}, got {val!r}") from None
        _, lo, hi = _SCHEMA[key]
        if not lo <= num <= hi:
            raise ConfigError(f"line {ln}: {key}={num} outside [{lo}, {hi}]")
        overrides[key] = num
    return Config(**overrides)


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    return parse_config(Path(path).read_text())
