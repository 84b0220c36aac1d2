"""Minimal deterministic rasterizer and PNG writer.

Figures are drawn pixel-by-pixel into an RGB array and written as an
8-bit PNG with a fixed zlib level, so identical inputs give identical
bytes. Only the primitives the report needs exist: rectangles, Bresenham
lines, bars, and bitmap-font text.
"""

import struct
import zlib

import numpy as np

from .font5x7 import GLYPH_HEIGHT, GLYPH_WIDTH, glyph_for

WHITE = (255, 255, 255)
BLACK = (0, 0, 0)
GRAY = (200, 200, 200)
LIGHT_GRAY = (235, 235, 235)
BLUE = (31, 119, 180)
RED = (214, 39, 40)
GREEN = (44, 160, 44)
STEEL = (120, 160, 200)


def write_png(path, pixels):
    """Write an (h, w, 3) uint8 array as an RGB PNG."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    height, width = pixels.shape[:2]
    raw = b"".join(b"\x00" + pixels[y].tobytes() for y in range(height))

    def chunk(tag, data):
        body = tag + data
        return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body))

    header = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
    blob = (b"\x89PNG\r\n\x1a\n"
            + chunk(b"IHDR", header)
            + chunk(b"IDAT", zlib.compress(raw, 9))
            + chunk(b"IEND", b""))
    with open(path, "wb") as fh:
        fh.write(blob)


class Canvas:
    """Fixed-size RGB drawing surface with integer pixel coordinates."""

    def __init__(self, width, height, background=WHITE):
        self.width = width
        self.height = height
        self.pixels = np.empty((height, width, 3), dtype=np.uint8)
        self.pixels[:] = background

    def fill_rect(self, x, y, w, h, color):
        x0, y0 = max(0, int(x)), max(0, int(y))
        x1, y1 = min(self.width, int(x + w)), min(self.height, int(y + h))
        if x1 > x0 and y1 > y0:
            self.pixels[y0:y1, x0:x1] = color

    def set_pixel(self, x, y, color):
        if 0 <= x < self.width and 0 <= y < self.height:
            self.pixels[int(y), int(x)] = color

    def hline(self, x0, x1, y, color):
        self.fill_rect(min(x0, x1), y, abs(x1 - x0) + 1, 1, color)

    def vline(self, x, y0, y1, color):
        self.fill_rect(x, min(y0, y1), 1, abs(y1 - y0) + 1, color)

    def line(self, x0, y0, x1, y1, color, thickness=1):
        x0, y0, x1, y1 = int(x0), int(y0), int(x1), int(y1)
        dx = abs(x1 - x0)
        dy = -abs(y1 - y0)
        sx = 1 if x0 < x1 else -1
        sy = 1 if y0 < y1 else -1
        err = dx + dy
        while True:
            if thickness == 1:
                self.set_pixel(x0, y0, color)
            else:
                half = thickness // 2
                self.fill_rect(x0 - half, y0 - half, thickness, thickness, color)
            if x0 == x1 and y0 == y1:
                break
            e2 = 2 * err
            if e2 >= dy:
                err += dy
                x0 += sx
            if e2 <= dx:
                err += dx
                y0 += sy

    def polyline(self, points, color, thickness=1):
        for (x0, y0), (x1, y1) in zip(points, points[1:]):
            self.line(x0, y0, x1, y1, color, thickness)

    def text(self, x, y, string, color=BLACK, scale=1):
        """Draw a string with its top-left corner at (x, y)."""
        cx = int(x)
        for char in str(string):
            glyph = glyph_for(char)
            for gy in range(GLYPH_HEIGHT):
                row = glyph[gy]
                for gx in range(GLYPH_WIDTH):
                    if row[gx] == "X":
                        self.fill_rect(cx + gx * scale, int(y) + gy * scale,
                                       scale, scale, color)
            cx += (GLYPH_WIDTH + 1) * scale
        return cx

    @staticmethod
    def text_width(string, scale=1):
        return len(str(string)) * (GLYPH_WIDTH + 1) * scale

    def blit(self, x, y, block):
        h, w = block.shape[:2]
        self.pixels[int(y):int(y) + h, int(x):int(x) + w] = block

    def save(self, path):
        write_png(path, self.pixels)
