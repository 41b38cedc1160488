"""File formats: PGM/PPM and the raw little-endian float containers.

``.f32img``  u32 width, u32 height, float32 row-major pixels
``.f32vol``  u32 width, u32 height, u32 depth, float32 slice-major voxels
``.f32fld``  u32 width, u32 height, interleaved (vx, vy) float32
"""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np


def _read_exact(path, fmt_header: str):
    raw = Path(path).read_bytes()
    n = struct.calcsize(fmt_header)
    if len(raw) < n:
        raise ValueError(f"{path}: truncated header")
    return struct.unpack(fmt_header, raw[:n]), raw[n:]


def write_f32img(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", w, h))
        fh.write(np.ascontiguousarray(img, dtype="<f4").tobytes())


def read_f32img(path) -> np.ndarray:
    (w, h), body = _read_exact(path, "<II")
    data = np.frombuffer(body, dtype="<f4")
    if data.size != w * h:
        raise ValueError(f"{path}: expected {w * h} pixels, found {data.size}")
    return data.reshape(h, w).astype(np.float64)


def write_f32vol(path, vol: np.ndarray) -> None:
    vol = np.asarray(vol)
    d, h, w = vol.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<III", w, h, d))
        fh.write(np.ascontiguousarray(vol, dtype="<f4").tobytes())


def read_f32vol(path) -> np.ndarray:
    (w, h, d), body = _read_exact(path, "<III")
    data = np.frombuffer(body, dtype="<f4")
    if data.size != w * h * d:
        raise ValueError(f"{path}: expected {w * h * d} voxels, found {data.size}")
    return data.reshape(d, h, w).astype(np.float64)


def write_f32fld(path, field: np.ndarray) -> None:
    field = np.asarray(field)
    h, w, _ = field.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", w, h))
        fh.write(np.ascontiguousarray(field, dtype="<f4").tobytes())


def read_f32fld(path) -> np.ndarray:
    (w, h), body = _read_exact(path, "<II")
    data = np.frombuffer(body, dtype="<f4")
    if data.size != 2 * w * h:
        raise ValueError(f"{path}: expected {2 * w * h} components, found {data.size}")
    return data.reshape(h, w, 2).astype(np.float64)


def _pnm_header(raw: bytes, magic: bytes):
    # header tokens: magic, width, height, maxval, separated by whitespace/comments
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if tokens[0] != magic:
        raise ValueError(f"not a {magic.decode()} file")
    w, h, maxval = (int(t) for t in tokens[1:])
    return w, h, maxval, pos + 1


def write_pgm(path, img: np.ndarray, maxval: int = 65535) -> None:
    """Binary PGM; intensities in [0, 1] are scaled to ``maxval``."""
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    h, w = img.shape
    q = np.rint(img * maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(q.astype(dtype).tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    w, h, maxval, off = _pnm_header(raw, b"P5")
    dtype = ">u2" if maxval > 255 else "u1"
    data = np.frombuffer(raw, dtype=dtype, count=w * h, offset=off)
    return data.reshape(h, w).astype(np.float64) / maxval


def write_ppm(path, rgb: np.ndarray) -> None:
    """8-bit binary PPM from an ``(h, w, 3)`` uint8 array."""
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb).tobytes())


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    w, h, maxval, off = _pnm_header(raw, b"P6")
    if maxval != 255:
        raise ValueError("only 8-bit PPM is supported")
    return np.frombuffer(raw, dtype=np.uint8, count=w * h * 3, offset=off).reshape(h, w, 3).copy()


def read_image(path) -> np.ndarray:
    """Dispatch on suffix: ``.pgm`` or ``.f32img``."""
    suffix = Path(path).suffix.lower()
    if suffix == ".pgm":
        return read_pgm(path)
    if suffix == ".f32img":
        return read_f32img(path)
    raise ValueError(f"unsupported image format: {path}")


def write_image(path, img: np.ndarray) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".pgm":
        write_pgm(path, img)
    elif suffix == ".f32img":
        write_f32img(path, img)
    else:
        raise ValueError(f"unsupported image format: {path}")


def read_mask(path) -> np.ndarray:
    return read_image(path) > 0.5


def write_mask(path, mask: np.ndarray) -> None:
    write_image(path, np.asarray(mask, dtype=np.float64))


def read_landmarks(path) -> tuple[np.ndarray, np.ndarray]:
    """CSV rows ``fx,fy,mx,my``; a non-numeric first row is treated as a header."""
    rows = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                vals = [float(v) for v in row]
            except ValueError:
                if i == 0:
                    continue
                raise ValueError(f"{path}:{i + 1}: non-numeric landmark row")
            if len(vals) != 4:
                raise ValueError(f"{path}:{i + 1}: expected 4 columns, got {len(vals)}")
            rows.append(vals)
    arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
    return arr[:, 0:2], arr[:, 2:4]


def write_landmarks(path, fixed: np.ndarray, moving: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["fx", "fy", "mx", "my"])
        for (fx, fy), (mx, my) in zip(fixed, moving):
            wr.writerow([repr(float(fx)), repr(float(fy)), repr(float(mx)), repr(float(my))])
