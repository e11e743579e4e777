"""Readers and writers for binary PPM/PGM, PFM and plain-text depth files."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .images import DepthMap, Frame, ValidMask


class FormatError(InvalidArgumentError):
    """A file could not be parsed; carries the path and byte offset."""

    def __init__(self, path, offset: int, msg: str):
        self.path = str(path)
        self.offset = offset
        super().__init__(f"{self.path}: byte {offset}: {msg}")


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(path, 0, f"cannot read file ({exc.strerror})") from exc


def _header_tokens(buf: bytes, count: int, path) -> tuple[list[bytes], list[int], int]:
    """Split ``count`` whitespace-separated header tokens, skipping # comments.

    Returns the tokens, their byte offsets and the offset of the first payload byte.
    """
    tokens = []
    offsets = []
    i = 0
    n = len(buf)
    while len(tokens) < count:
        while i < n and buf[i:i + 1].isspace():
            i += 1
        if i < n and buf[i:i + 1] == b"#":
            while i < n and buf[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        if i >= n:
            raise FormatError(path, i, "truncated header")
        start = i
        while i < n and not buf[i:i + 1].isspace():
            i += 1
        tokens.append(buf[start:i])
        offsets.append(start)
    if i >= n:
        raise FormatError(path, i, "missing payload")
    return tokens, offsets, i + 1  # exactly one whitespace byte ends the header


def _int_token(tok: bytes, path, offset: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise FormatError(path, offset, f"expected integer, got {tok!r}") from None


def read_frame(path) -> Frame:
    """Read an 8-bit P6 (RGB) or P5 (gray) file, rescaled to [0, 1]."""
    buf = _read_bytes(path)
    tokens, offs, start = _header_tokens(buf, 4, path)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise FormatError(path, 0, f"unsupported magic {magic!r}; expected P5 or P6")
    w = _int_token(tokens[1], path, offs[1])
    h = _int_token(tokens[2], path, offs[2])
    maxval = _int_token(tokens[3], path, offs[3])
    if maxval != 255:
        raise FormatError(path, start - 1, f"only 8-bit files are supported (maxval {maxval})")
    ch = 3 if magic == b"P6" else 1
    need = w * h * ch
    if len(buf) - start < need:
        raise FormatError(path, len(buf), f"payload truncated: need {need} bytes after offset {start}")
    pix = np.frombuffer(buf, dtype=np.uint8, count=need, offset=start)
    return Frame(pix.reshape(h, w, ch).astype(np.float64) / 255.0)


def _to_bytes(data: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(data * 255.0), 0, 255).astype(np.uint8)


def write_frame(path, frame: Frame) -> None:
    """Write P6 for 3-channel frames, P5 for single-channel ones."""
    magic = b"P6" if frame.channels == 3 else b"P5"
    header = magic + b"\n%d %d\n255\n" % (frame.width, frame.height)
    Path(path).write_bytes(header + _to_bytes(frame.data).tobytes())


def write_mask(path, mask: ValidMask) -> None:
    h, w = mask.shape
    payload = np.where(mask.data, 255, 0).astype(np.uint8)
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + payload.tobytes())


def read_mask(path) -> ValidMask:
    f = read_frame(path)
    if f.channels != 1:
        raise FormatError(path, 0, "mask must be a P5 file")
    return ValidMask(f.data[:, :, 0] > 0.5)


def write_pfm(path, depth: DepthMap) -> None:
    """Single-channel little-endian PFM (scale -1), rows stored bottom-up."""
    h, w = depth.shape
    payload = np.flipud(depth.data).astype("<f4")
    Path(path).write_bytes(b"Pf\n%d %d\n-1.0\n" % (w, h) + payload.tobytes())


def read_pfm(path) -> DepthMap:
    buf = _read_bytes(path)
    tokens, offs, start = _header_tokens(buf, 4, path)
    if tokens[0] != b"Pf":
        raise FormatError(path, 0, f"expected single-channel PFM 'Pf', got {tokens[0]!r}")
    w = _int_token(tokens[1], path, offs[1])
    h = _int_token(tokens[2], path, offs[2])
    try:
        scale = float(tokens[3])
    except ValueError:
        raise FormatError(path, start - 1, f"bad scale {tokens[3]!r}") from None
    if scale == 0:
        raise FormatError(path, start - 1, "scale must be non-zero")
    dtype = "<f4" if scale < 0 else ">f4"
    need = w * h * 4
    if len(buf) - start < need:
        raise FormatError(path, len(buf), f"payload truncated: need {need} bytes after offset {start}")
    vals = np.frombuffer(buf, dtype=dtype, count=w * h, offset=start).reshape(h, w)
    data = np.flipud(vals).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise FormatError(path, start, "non-finite depth values")
    return DepthMap(data)


def write_depth_text(path, depth: DepthMap) -> None:
    """Plain-text depth with full round-trip precision."""
    h, w = depth.shape
    lines = [f"{w} {h}"]
    lines.extend(" ".join(repr(float(x)) for x in row) for row in depth.data)
    Path(path).write_text("\n".join(lines) + "\n")


def read_depth_text(path) -> DepthMap:
    buf = _read_bytes(path)
    try:
        text = buf.decode("ascii")
    except UnicodeDecodeError as exc:
        raise FormatError(path, exc.start, "non-ASCII byte in text depth file") from None
    parts = text.split()
    if len(parts) < 2:
        raise FormatError(path, 0, "missing 'width height' header")
    w = _int_token(parts[0].encode(), path, text.find(parts[0]))
    h = _int_token(parts[1].encode(), path, text.find(parts[1], text.find(parts[0]) + len(parts[0])))
    body = parts[2:]
    if len(body) != w * h:
        raise FormatError(path, len(buf), f"expected {w * h} depth values, found {len(body)}")
    try:
        vals = np.array([float(x) for x in body], dtype=np.float64)
    except ValueError as exc:
        bad = str(exc).split(":")[-1].strip().strip("'")
        raise FormatError(path, text.find(bad), f"bad depth value {bad!r}") from None
    return DepthMap(vals.reshape(h, w))


def read_depth(path) -> DepthMap:
    """Dispatch on content: PFM when the file starts with 'Pf', text otherwise."""
    head = _read_bytes(path)[:2]
    if head in (b"Pf", b"PF"):
        return read_pfm(path)
    return read_depth_text(path)


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
