"""Built-in 5x9 bitmap glyph font.

The same glyph bitmaps are used by the synthetic chart renderer and by the
built-in template OCR engine, so recognition of noise-free renderings is
exact by construction. Cell layout: 5 columns x 9 rows, baseline after
row 6 (rows 7-8 hold descenders).
"""

from __future__ import annotations

import numpy as np

CELL_W = 5
CELL_H = 9
GLYPH_SPACING = 2  # blank columns between consecutive glyphs
SPACE_ADVANCE = 9  # extra advance for a space character

# fmt: off
_RAW = {
    "0": ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    "1": ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    "2": ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    "3": ("01110", "10001", "00001", "00110", "00001", "10001", "01110"),
    "4": ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    "5": ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    "6": ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    "7": ("11111", "00001", "00010", "00100", "00100", "00100", "00100"),
    "8": ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    "9": ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
    "A": ("00100", "01010", "10001", "10001", "11111", "10001", "10001"),
    "B": ("11110", "10001", "10001", "11110", "10001", "10001", "11110"),
    "C": ("01110", "10001", "10000", "10000", "10000", "10001", "01110"),
    "D": ("11110", "10001", "10001", "10001", "10001", "10001", "11110"),
    "E": ("11111", "10000", "10000", "11110", "10000", "10000", "11111"),
    "F": ("11111", "10000", "10000", "11110", "10000", "10000", "10000"),
    "G": ("01110", "10001", "10000", "10111", "10001", "10001", "01111"),
    "H": ("10001", "10001", "10001", "11111", "10001", "10001", "10001"),
    "I": ("11111", "00100", "00100", "00100", "00100", "00100", "11111"),
    "J": ("00111", "00010", "00010", "00010", "00010", "10010", "01100"),
    "K": ("10001", "10010", "10100", "11000", "10100", "10010", "10001"),
    "L": ("10000", "10000", "10000", "10000", "10000", "10000", "11111"),
    "M": ("10001", "11011", "10101", "10101", "10001", "10001", "10001"),
    "N": ("10001", "11001", "11001", "10101", "10011", "10011", "10001"),
    "O": ("01110", "10001", "10001", "10001", "10001", "10001", "01110"),
    "P": ("11110", "10001", "10001", "11110", "10000", "10000", "10000"),
    "Q": ("01110", "10001", "10001", "10001", "10101", "10010", "01101"),
    "R": ("11110", "10001", "10001", "11110", "10100", "10010", "10001"),
    "S": ("01111", "10000", "10000", "01110", "00001", "00001", "11110"),
    "T": ("11111", "00100", "00100", "00100", "00100", "00100", "00100"),
    "U": ("10001", "10001", "10001", "10001", "10001", "10001", "01110"),
    "V": ("10001", "10001", "10001", "10001", "01010", "01010", "00100"),
    "W": ("10001", "10001", "10001", "10101", "10101", "11011", "10001"),
    "X": ("10001", "10001", "01010", "00100", "01010", "10001", "10001"),
    "Y": ("10001", "10001", "01010", "00100", "00100", "00100", "00100"),
    "Z": ("11111", "00001", "00010", "00100", "01000", "10000", "11111"),
    "a": ("00000", "00000", "01110", "00001", "01111", "10001", "01111"),
    "b": ("10000", "10000", "11110", "10001", "10001", "10001", "11110"),
    "c": ("00000", "00000", "01110", "10001", "10000", "10001", "01110"),
    "d": ("00001", "00001", "01111", "10001", "10001", "10001", "01111"),
    "e": ("00000", "00000", "01110", "10001", "11111", "10000", "01110"),
    "f": ("00110", "01000", "11110", "01000", "01000", "01000", "01000"),
    "h": ("10000", "10000", "11110", "10001", "10001", "10001", "10001"),
    "i": ("01100", "00000", "01100", "00100", "00100", "00100", "01110"),
    "k": ("10000", "10000", "10010", "10100", "11000", "10100", "10010"),
    "l": ("00100", "00100", "00100", "00100", "00100", "00100", "00110"),
    "m": ("00000", "00000", "11010", "10101", "10101", "10101", "10101"),
    "n": ("00000", "00000", "11110", "10001", "10001", "10001", "10001"),
    "o": ("00000", "00000", "01110", "10001", "10001", "10001", "01110"),
    "r": ("00000", "00000", "10110", "11001", "10000", "10000", "10000"),
    "s": ("00000", "00000", "01111", "10000", "01110", "00001", "11110"),
    "t": ("01000", "01000", "11110", "01000", "01000", "01000", "00110"),
    "u": ("00000", "00000", "10001", "10001", "10001", "10011", "01101"),
    "v": ("00000", "00000", "10001", "10001", "10001", "01010", "00100"),
    "w": ("00000", "00000", "10001", "10101", "10101", "10101", "01010"),
    "x": ("00000", "00000", "10001", "01010", "00100", "01010", "10001"),
    "z": ("00000", "00000", "11111", "00010", "00100", "01000", "11111"),
    "%": ("11001", "11010", "00010", "00100", "01000", "01011", "10011"),
    ".": ("00000", "00000", "00000", "00000", "00000", "01100", "01100"),
    "-": ("00000", "00000", "00000", "11110", "00000", "00000", "00000"),
    "+": ("00000", "00100", "00100", "11111", "00100", "00100", "00000"),
    "(": ("00010", "00100", "00100", "01000", "00100", "00100", "00010"),
    ")": ("01000", "00100", "00100", "00010", "00100", "00100", "01000"),
    "/": ("00001", "00001", "00010", "00100", "01000", "10000", "10000"),
}
_RAW_DESCENDER = {
    # glyphs occupying rows 2-8 (two rows below the baseline)
    "g": ("01110", "10001", "10001", "01111", "00001", "10001", "01110"),
    "j": ("00110", "00000", "00110", "00010", "00010", "10010", "01100"),
    "p": ("10110", "11001", "10001", "11001", "10110", "10000", "10000"),
    "q": ("01101", "10011", "10001", "10011", "01101", "00001", "00001"),
    "y": ("10001", "10001", "10001", "01111", "00001", "00010", "11100"),
}
# fmt: on


def _to_cell(rows: tuple[str, ...], top: int) -> np.ndarray:
    cell = np.zeros((CELL_H, CELL_W), dtype=bool)
    for i, row in enumerate(rows):
        cell[top + i] = [ch == "1" for ch in row]
    return cell


GLYPHS: dict[str, np.ndarray] = {}
for _ch, _rows in _RAW.items():
    GLYPHS[_ch] = _to_cell(_rows, top=0)
for _ch, _rows in _RAW_DESCENDER.items():
    GLYPHS[_ch] = _to_cell(_rows, top=2)

SUPPORTED = "".join(sorted(GLYPHS)) + " "


def _tight(cell: np.ndarray) -> np.ndarray:
    ys, xs = np.nonzero(cell)
    return cell[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]


#: tight-cropped glyph bitmaps, the OCR matching templates
TEMPLATES: dict[str, np.ndarray] = {ch: _tight(cell) for ch, cell in GLYPHS.items()}


def glyph_width(ch: str) -> int:
    """Tight ink width of a glyph in pixels."""
    return TEMPLATES[ch].shape[1]


def text_extent(text: str) -> tuple[int, int]:
    """(width, height) in pixels of a rendered string."""
    w = 0
    for ch in text:
        if ch == " ":
            w += SPACE_ADVANCE
        else:
            w += glyph_width(ch) + GLYPH_SPACING
    if text and not text.endswith(" "):
        w -= GLYPH_SPACING
    return max(w, 0), CELL_H


def render_text(text: str) -> np.ndarray:
    """Render a string into a boolean ink bitmap of shape text_extent[::-1].

    Raises KeyError for characters outside the supported glyph set.
    """
    w, h = text_extent(text)
    out = np.zeros((h, max(w, 1)), dtype=bool)
    x = 0
    for ch in text:
        if ch == " ":
            x += SPACE_ADVANCE
            continue
        cell = GLYPHS[ch]
        ys, xs = np.nonzero(cell)
        gw = glyph_width(ch)
        out[:, x : x + gw] |= cell[:, xs.min() : xs.min() + gw]
        x += gw + GLYPH_SPACING
    return out
