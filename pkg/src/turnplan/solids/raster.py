"""Binary 2D rasters and their Minkowski algebra.

A :class:`Raster2D` is a boolean image on a uniform lattice.  ``origin`` is
the world position (mm) of the *center* of pixel ``[0, 0]``; pixel
``[i, j]`` sits at ``origin + (i, j) * pixel``.  The first index is the
``u`` coordinate (the spindle ``z`` for sections), the second is ``v``
(radius ``r`` or signed ``x``).

Dilation keeps every operand's own origin, so the Minkowski sum of two
rasters lives at ``a.origin + b.origin`` with ``a.dims + b.dims - 1``
pixels; no frame is ever resampled implicitly.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np
from scipy import signal

from ..errors import FrameMismatchError

_ALIGN_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class Raster2D:
    origin: Tuple[float, float]
    pixel: float
    data: np.ndarray

    def __post_init__(self):
        if not self.pixel > 0:
            raise ValueError(f"pixel size must be positive, got {self.pixel}")
        data = np.array(self.data, dtype=bool, copy=True)
        if data.ndim != 2:
            raise ValueError("raster data must be 2D")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def empty(cls, origin, pixel, dims) -> "Raster2D":
        return cls(origin, pixel, np.zeros(tuple(dims), dtype=bool))

    @property
    def dims(self) -> Tuple[int, int]:
        return self.data.shape

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.data))

    def is_empty(self) -> bool:
        return not self.data.any()

    @property
    def frame(self):
        return self.origin, self.pixel, self.dims

    def u_centers(self) -> np.ndarray:
        return self.origin[0] + self.pixel * np.arange(self.dims[0])

    def v_centers(self) -> np.ndarray:
        return self.origin[1] + self.pixel * np.arange(self.dims[1])

    def same_frame(self, other: "Raster2D") -> bool:
        if self.dims != other.dims or not _close(self.pixel, other.pixel):
            return False
        tol = _ALIGN_TOL * self.pixel
        return (abs(self.origin[0] - other.origin[0]) <= tol
                and abs(self.origin[1] - other.origin[1]) <= tol)

    def with_data(self, data) -> "Raster2D":
        data = np.asarray(data, dtype=bool)
        if data.shape != self.dims:
            raise ValueError(f"shape {data.shape} does not match dims {self.dims}")
        return Raster2D(self.origin, self.pixel, data)

    def occupied_coords(self) -> np.ndarray:
        """World (u, v) of every occupied pixel center, shape (n, 2)."""
        idx = np.argwhere(self.data)
        return np.asarray(self.origin) + idx * self.pixel

    def bbox(self):
        """((u_min, v_min), (u_max, v_max)) of occupied pixel extents, or None."""
        idx = np.argwhere(self.data)
        if len(idx) == 0:
            return None
        lo = np.asarray(self.origin) + (idx.min(axis=0) - 0.5) * self.pixel
        hi = np.asarray(self.origin) + (idx.max(axis=0) + 0.5) * self.pixel
        return tuple(lo.tolist()), tuple(hi.tolist())

    def reframe(self, origin, dims) -> "Raster2D":
        """Crop/pad onto another frame on the same lattice.

        Pixels falling outside the new frame are discarded.  Raises
        :class:`FrameMismatchError` if the two frames are not lattice-aligned.
        """
        di, dj = lattice_offset(self.origin, origin, self.pixel)
        nu, nv = (int(dims[0]), int(dims[1]))
        out = np.zeros((nu, nv), dtype=bool)
        # new[i, j] = old[i + di, j + dj]
        su0, su1 = max(0, -di), min(nu, self.dims[0] - di)
        sv0, sv1 = max(0, -dj), min(nv, self.dims[1] - dj)
        if su1 > su0 and sv1 > sv0:
            out[su0:su1, sv0:sv1] = self.data[su0 + di:su1 + di, sv0 + dj:sv1 + dj]
        return Raster2D(origin, self.pixel, out)

    def reframe_like(self, other: "Raster2D") -> "Raster2D":
        _check_pixel(self, other)
        return self.reframe(other.origin, other.dims)

    def union(self, other: "Raster2D") -> "Raster2D":
        check_frames(self, other)
        return self.with_data(self.data | other.data)

    def intersect(self, other: "Raster2D") -> "Raster2D":
        check_frames(self, other)
        return self.with_data(self.data & other.data)

    def difference(self, other: "Raster2D") -> "Raster2D":
        check_frames(self, other)
        return self.with_data(self.data & ~other.data)

    def __eq__(self, other):
        if not isinstance(other, Raster2D):
            return NotImplemented
        return self.same_frame(other) and np.array_equal(self.data, other.data)

    __hash__ = None


def _close(a, b):
    return abs(a - b) <= 1e-12 * max(abs(a), abs(b))


def _check_pixel(a: Raster2D, b: Raster2D):
    if not _close(a.pixel, b.pixel):
        raise FrameMismatchError(f"pixel size mismatch: {a.pixel} vs {b.pixel}")


def check_frames(a: Raster2D, b: Raster2D):
    if not a.same_frame(b):
        raise FrameMismatchError(
            f"raster frames differ: {a.origin}/{a.pixel}/{a.dims} vs "
            f"{b.origin}/{b.pixel}/{b.dims}")


def lattice_offset(src_origin, dst_origin, pixel) -> Tuple[int, int]:
    """Integer pixel offset from ``src_origin`` to ``dst_origin``."""
    off = (np.asarray(dst_origin, dtype=float) - np.asarray(src_origin, dtype=float)) / pixel
    rounded = np.rint(off)
    if np.any(np.abs(off - rounded) > _ALIGN_TOL):
        raise FrameMismatchError(f"origins {src_origin} and {dst_origin} are not on a common lattice")
    return int(rounded[0]), int(rounded[1])


def bounding_frame(*rasters: Raster2D):
    """Smallest lattice-aligned frame holding every given raster's frame."""
    first = rasters[0]
    lo = np.array([0, 0])
    hi = np.array(first.dims) - 1
    for r in rasters[1:]:
        _check_pixel(first, r)
        off = np.array(lattice_offset(first.origin, r.origin, first.pixel))
        lo = np.minimum(lo, off)
        hi = np.maximum(hi, off + np.array(r.dims) - 1)
    origin = tuple((np.asarray(first.origin) + lo * first.pixel).tolist())
    dims = tuple((hi - lo + 1).tolist())
    return origin, dims


def union_all(*rasters: Raster2D) -> Raster2D:
    """Union of rasters on a common lattice, in their bounding frame."""
    origin, dims = bounding_frame(*rasters)
    out = np.zeros(dims, dtype=bool)
    for r in rasters:
        out |= r.reframe(origin, dims).data
    return Raster2D(origin, rasters[0].pixel, out)


def dilate2d(a: Raster2D, b: Raster2D, method: str = "fft") -> Raster2D:
    """Minkowski sum ``a (+) b``.

    Pixel ``p`` of the result is occupied iff some ``q`` in ``b`` has
    ``p - q`` in ``a``.  ``method`` selects the implementation: ``"direct"``
    ORs a shifted copy of ``a`` for every pixel of ``b``; ``"fft"``
    convolves the indicator images and thresholds the rounded counts at 1.
    Both return bit-identical rasters.
    """
    _check_pixel(a, b)
    origin = (a.origin[0] + b.origin[0], a.origin[1] + b.origin[1])
    dims = (a.dims[0] + b.dims[0] - 1, a.dims[1] + b.dims[1] - 1)
    if a.is_empty() or b.is_empty():
        return Raster2D.empty(origin, a.pixel, dims)
    if method == "direct":
        data = _dilate_direct(a.data, b.data)
    elif method == "fft":
        data = _dilate_fft(a.data, b.data)
    else:
        raise ValueError(f"unknown dilation method {method!r}")
    return Raster2D(origin, a.pixel, data)


def _dilate_direct(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    nu, nv = a.shape
    out = np.zeros((nu + b.shape[0] - 1, nv + b.shape[1] - 1), dtype=bool)
    for i, j in np.argwhere(b):
        out[i:i + nu, j:j + nv] |= a
    return out


def _dilate_fft(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    conv = signal.fftconvolve(a.astype(np.float64), b.astype(np.float64), mode="full")
    # counts are integers; round away FFT noise before thresholding
    return np.rint(conv) >= 1


def reflect2d(a: Raster2D) -> Raster2D:
    """Point reflection ``p -> -p`` about the world origin."""
    nu, nv = a.dims
    origin = (-(a.origin[0] + (nu - 1) * a.pixel), -(a.origin[1] + (nv - 1) * a.pixel))
    return Raster2D(origin, a.pixel, a.data[::-1, ::-1])


def erode_band(a: Raster2D) -> Raster2D:
    """Pixels of ``a`` whose full 8-neighbourhood is also in ``a``."""
    padded = np.pad(a.data, 1, constant_values=False)
    out = padded.copy()
    nu, nv = a.dims
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            out[1:-1, 1:-1] &= padded[1 + di:1 + di + nu, 1 + dj:1 + dj + nv]
    return a.with_data(out[1:-1, 1:-1])


def grow_band(a: Raster2D) -> Raster2D:
    """``a`` grown by one pixel in the 8-neighbourhood sense, same frame."""
    padded = np.pad(a.data, 1, constant_values=False)
    nu, nv = a.dims
    out = np.zeros_like(a.data)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            out |= padded[1 + di:1 + di + nu, 1 + dj:1 + dj + nv]
    return a.with_data(out)


def within_band(a: Raster2D, b: Raster2D) -> bool:
    """True if the symmetric difference of ``a`` and ``b`` hugs both boundaries.

    Every pixel in ``a - b`` must touch the complement of ``a`` and lie
    next to ``b``, and vice versa: the sets agree up to one pixel.
    """
    check_frames(a, b)
    a_only = a.data & ~b.data
    b_only = b.data & ~a.data
    ok_a = not np.any(a_only & (erode_band(a).data | ~grow_band(b).data))
    ok_b = not np.any(b_only & (erode_band(b).data | ~grow_band(a).data))
    return ok_a and ok_b


def raster_from_box(origin, pixel, dims, u_range, v_range) -> Raster2D:
    """Pixels whose centers fall in the half-open box ``[u0,u1) x [v0,v1)``."""
    r = Raster2D.empty(origin, pixel, dims)
    u = r.u_centers()[:, None]
    v = r.v_centers()[None, :]
    eps = 1e-9 * pixel
    data = ((u >= u_range[0] - eps) & (u < u_range[1] - eps)
            & (v >= v_range[0] - eps) & (v < v_range[1] - eps))
    return r.with_data(data)


def write_pgm(raster: Raster2D, path) -> Path:
    """Binary PGM (P5); rows run top (max v) to bottom, columns along u."""
    path = Path(path)
    img = np.where(raster.data.T[::-1, :], 255, 0).astype(np.uint8)
    height, width = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    """Read a P5 or P2 PGM into a uint8/uint16 array of shape (rows, cols)."""
    raw = Path(path).read_bytes()
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
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        tokens.append(raw[start:pos])
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == b"P5":
        pos += 1
        dtype = np.uint8 if maxval < 256 else ">u2"
        count = width * height
        img = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
    elif magic == b"P2":
        img = np.array(raw[pos:].split(), dtype=np.int64)[:width * height]
    else:
        raise ValueError(f"{path}: not a PGM file (magic {magic!r})")
    if img.size != width * height:
        raise ValueError(f"{path}: expected {width * height} pixels, found {img.size}")
    return img.reshape(height, width)


def raster_from_pgm(path, pixel: float, origin_pixel=(0, 0), threshold: int = 128) -> Raster2D:
    """Load a monochrome PGM as a raster whose ``origin_pixel`` sits at (0, 0).

    ``origin_pixel`` is given in image coordinates ``(column, row)``.
    Pixels at or above ``threshold`` are occupied.
    """
    img = read_pgm(path)
    rows = img.shape[0]
    data = (img >= threshold)[::-1, :].T
    col, row = origin_pixel
    iu0, iv0 = col, rows - 1 - row
    return Raster2D((-iu0 * pixel, -iv0 * pixel), pixel, data)
