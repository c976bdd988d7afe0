"""Raster image container and binary PGM/PPM I/O.

Images are 8-bit, row-major, 1 channel (grayscale) or 3 channels (RGB).
Calibrated images carry pixels-per-inch metadata; the normative on-disk
encoding for it is a comment line ``# ppi <x> <y>`` placed immediately
after the PGM/PPM magic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidImageError, InvalidInputError


@dataclass
class RasterImage:
    """8-bit pixel grid with optional ppi metadata.

    ``data`` has shape (height, width) for grayscale or (height, width, 3)
    for color, dtype uint8.
    """

    data: np.ndarray
    ppi_x: float | None = None
    ppi_y: float | None = None
    upsampled: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.dtype != np.uint8:
            raise InvalidInputError("image data must be uint8")
        if arr.ndim == 2:
            pass
        elif arr.ndim == 3 and arr.shape[2] == 3:
            pass
        else:
            raise InvalidInputError(f"unsupported image shape {arr.shape}")
        if arr.shape[0] <= 0 or arr.shape[1] <= 0:
            raise InvalidInputError("image dimensions must be positive")
        if (self.ppi_x is None) != (self.ppi_y is None):
            raise InvalidInputError("ppi metadata must set both axes or neither")
        if self.ppi_x is not None and (self.ppi_x <= 0 or self.ppi_y <= 0):
            raise InvalidInputError("ppi values must be positive")
        self.data = arr

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    @property
    def has_ppi(self) -> bool:
        return self.ppi_x is not None

    def copy_with(self, data: np.ndarray) -> "RasterImage":
        return RasterImage(data, ppi_x=self.ppi_x, ppi_y=self.ppi_y)

    def as_float(self) -> np.ndarray:
        return self.data.astype(np.float64)


# ---------------------------------------------------------------------------
# PGM (P5) / PPM (P6) with the ppi comment convention


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    # skip whitespace and '#' comments that are not the ppi line
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c in b" \t\r\n":
            pos += 1
        elif c == b"#":
            while pos < n and buf[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and buf[pos : pos + 1] not in b" \t\r\n":
        pos += 1
    if start == pos:
        raise InvalidImageError("truncated PNM header")
    return buf[start:pos], pos


def _parse_ppi_comment(buf: bytes, pos: int) -> tuple[float | None, float | None, int]:
    # A '# ppi <x> <y>' comment directly after the magic carries calibration.
    n = len(buf)
    probe = pos
    while probe < n and buf[probe : probe + 1] in b" \t\r\n":
        probe += 1
    if probe < n and buf[probe : probe + 1] == b"#":
        end = probe
        while end < n and buf[end : end + 1] != b"\n":
            end += 1
        parts = buf[probe + 1 : end].split()
        if len(parts) == 3 and parts[0] == b"ppi":
            try:
                return float(parts[1]), float(parts[2]), end
            except ValueError as exc:
                raise InvalidImageError("malformed ppi comment") from exc
    return None, None, pos


def parse_pnm(buf: bytes, source: str = "<bytes>") -> RasterImage:
    """Parse a binary PGM or PPM payload, honoring the ppi comment."""
    if len(buf) < 2:
        raise InvalidImageError(f"{source}: not a PNM payload")
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise InvalidImageError(f"{source}: unsupported magic {magic!r}")
    ppi_x, ppi_y, pos = _parse_ppi_comment(buf, 2)
    tok, pos = _read_token(buf, pos)
    width = int(tok)
    tok, pos = _read_token(buf, pos)
    height = int(tok)
    tok, pos = _read_token(buf, pos)
    maxval = int(tok)
    if maxval != 255:
        raise InvalidImageError(f"{source}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    raw = buf[pos : pos + need]
    if len(raw) != need:
        raise InvalidImageError(f"{source}: expected {need} pixel bytes, got {len(raw)}")
    arr = np.frombuffer(raw, dtype=np.uint8)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return RasterImage(arr.reshape(shape).copy(), ppi_x=ppi_x, ppi_y=ppi_y)


def read_pnm(path: str | Path) -> RasterImage:
    """Read a binary PGM or PPM file, honoring the ppi comment."""
    return parse_pnm(Path(path).read_bytes(), source=str(path))


def write_pnm(img: RasterImage, path: str | Path) -> None:
    """Write binary PGM (grayscale) or PPM (color) with ppi comment if set."""
    magic = b"P5" if img.channels == 1 else b"P6"
    header = bytearray(magic + b"\n")
    if img.has_ppi:
        header += f"# ppi {img.ppi_x:g} {img.ppi_y:g}\n".encode()
    header += f"{img.width} {img.height}\n255\n".encode()
    Path(path).write_bytes(bytes(header) + img.data.tobytes())
