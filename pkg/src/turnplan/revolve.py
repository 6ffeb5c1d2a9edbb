"""Turnable closures: half-sections of solids of revolution.

A :class:`HalfSection` is a raster over ``(z, r)`` with ``z`` measured
along the axis from ``axis.point`` and ``r >= 0`` the distance from it.
Pixel centers sit on the half-integer lattice ``(k + 1/2) * pixel`` in
both coordinates, so an occupied pixel in column ``j`` stands for the
annulus ``r in [j, j + 1] * pixel``.

Point membership against a voxel part is decided on the trilinear
reconstruction of its cell-center samples (inside iff the interpolated
occupancy is at least 1/2).  Every closure also contains the revolved image
of each occupied cell center, so the part's own samples always map into
their closure.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from .errors import FrameMismatchError
from .solids.grid import Axis, VoxelGrid
from .solids.raster import Raster2D, lattice_offset, read_pgm, write_pgm

logger = logging.getLogger(__name__)

_ISO = 0.5 - 1e-9


@dataclass(frozen=True, eq=False)
class HalfSection:
    axis: Axis
    raster: Raster2D

    def __post_init__(self):
        r = self.raster
        if abs(r.origin[1] - 0.5 * r.pixel) > 1e-9 * r.pixel:
            raise ValueError(f"half-section radial origin must be pixel/2, got {r.origin[1]}")
        k = r.origin[0] / r.pixel - 0.5
        if abs(k - round(k)) > 1e-6:
            raise ValueError("half-section z origin must lie on the half-integer lattice")

    @classmethod
    def empty(cls, axis: Axis, z0_index: int, nz: int, nr: int, pixel: float) -> "HalfSection":
        return cls(axis, Raster2D.empty(((z0_index + 0.5) * pixel, 0.5 * pixel), pixel, (nz, nr)))

    @property
    def pixel(self) -> float:
        return self.raster.pixel

    @property
    def data(self) -> np.ndarray:
        return self.raster.data

    @property
    def dims(self):
        return self.raster.dims

    @property
    def z0_index(self) -> int:
        return int(round(self.raster.origin[0] / self.pixel - 0.5))

    def z_centers(self) -> np.ndarray:
        return self.raster.u_centers()

    def r_centers(self) -> np.ndarray:
        return self.raster.v_centers()

    def is_empty(self) -> bool:
        return self.raster.is_empty()

    def with_data(self, data) -> "HalfSection":
        return HalfSection(self.axis, self.raster.with_data(data))

    def same_frame(self, other: "HalfSection") -> bool:
        return self.raster.same_frame(other.raster)

    def reframe(self, z0_index: int, nz: int, nr: int) -> "HalfSection":
        origin = ((z0_index + 0.5) * self.pixel, 0.5 * self.pixel)
        return HalfSection(self.axis, self.raster.reframe(origin, (nz, nr)))

    def reframe_like(self, other: "HalfSection") -> "HalfSection":
        return HalfSection(self.axis, self.raster.reframe_like(other.raster))

    def union(self, other: "HalfSection") -> "HalfSection":
        return HalfSection(self.axis, self.raster.union(other.raster))

    def intersect(self, other: "HalfSection") -> "HalfSection":
        return HalfSection(self.axis, self.raster.intersect(other.raster))

    def difference(self, other: "HalfSection") -> "HalfSection":
        return HalfSection(self.axis, self.raster.difference(other.raster))

    def volume(self) -> float:
        return revolve_volume(self)

    def __eq__(self, other):
        if not isinstance(other, HalfSection):
            return NotImplemented
        return self.raster == other.raster

    __hash__ = None


@dataclass(frozen=True)
class TurnabilityReport:
    axis: Axis
    gamma: float
    gamma_raw: float
    part_volume: float
    tc_volume: float


def section_frame(part: VoxelGrid, axis: Axis, pixel: float, margin: int = 1) -> Tuple[int, int, int]:
    """``(z0_index, nz, nr)`` covering the part's projection onto ``(z, r)``."""
    if part.is_empty():
        return 0, 1, 1
    z, r = axis.cylindrical(part.occupied_corners())
    k0 = int(math.floor(z.min() / pixel)) - margin
    k1 = int(math.ceil(z.max() / pixel)) + margin
    nr = int(math.ceil(r.max() / pixel)) + margin
    return k0, k1 - k0, nr


def _density_sampler(part: VoxelGrid):
    occ = part.data.astype(np.float64)

    def inside(points: np.ndarray) -> np.ndarray:
        coords = ((points - part.origin) / part.spacing).T
        return ndimage.map_coordinates(occ, coords, order=1, mode="constant", cval=0.0) >= _ISO

    return inside


def orbit_samples(radius: float, pixel: float) -> int:
    return max(8, int(math.ceil(2 * math.pi * radius / pixel)))


def _sample_centers(section: np.ndarray, part: VoxelGrid, axis: Axis, pixel: float, z0_index: int):
    if part.is_empty():
        return
    zc, rc = axis.cylindrical(part.occupied_centers())
    iz = np.floor(zc / pixel).astype(np.int64) - z0_index
    ir = np.floor(rc / pixel).astype(np.int64)
    ok = (iz >= 0) & (iz < section.shape[0]) & (ir < section.shape[1])
    section[iz[ok], ir[ok]] = True


def tc_implicit(part: VoxelGrid, axis: Axis, pixel: float, frame=None,
                workers: int = 1) -> HalfSection:
    """Turnable closure by orbit point-membership.

    Pixel ``(z, r)`` is occupied iff one of ``max(8, ceil(2*pi*r/pixel))``
    equally spaced points on the circle of radius ``r`` at height ``z``
    lies inside the part.
    """
    if not pixel > 0:
        raise ValueError("pixel size must be positive")
    z0, nz, nr = frame if frame is not None else section_frame(part, axis, pixel)
    out = np.zeros((nz, nr), dtype=bool)
    if not part.is_empty():
        inside = _density_sampler(part)
        e1, e2 = axis.basis()
        zs = (z0 + 0.5 + np.arange(nz)) * pixel
        stem = axis.point + np.outer(zs, axis.direction)

        def column(j):
            rc = (j + 0.5) * pixel
            n = orbit_samples(rc, pixel)
            th = 2 * np.pi * np.arange(n) / n
            ring = rc * (np.outer(np.cos(th), e1) + np.outer(np.sin(th), e2))
            pts = (stem[:, None, :] + ring[None, :, :]).reshape(-1, 3)
            return inside(pts).reshape(nz, n).any(axis=1)

        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                cols = list(pool.map(column, range(nr)))
        else:
            cols = [column(j) for j in range(nr)]
        for j, col in enumerate(cols):
            out[:, j] = col
        _sample_centers(out, part, axis, pixel, z0)
    return HalfSection.empty(axis, z0, nz, nr, pixel).with_data(out)


def tc_explicit(part: VoxelGrid, axis: Axis, n_sections: int, pixel: float,
                frame=None) -> HalfSection:
    """Turnable closure as the union of longitudinal sections.

    ``n_sections`` full planes through the axis at angles ``k*pi/n`` give
    ``2n`` half-planes; each is rasterized over ``(z, r)`` and the results
    are OR-ed together.
    """
    if n_sections < 1:
        raise ValueError("n_sections must be at least 1")
    z0, nz, nr = frame if frame is not None else section_frame(part, axis, pixel)
    out = np.zeros((nz, nr), dtype=bool)
    if not part.is_empty():
        inside = _density_sampler(part)
        e1, e2 = axis.basis()
        zs = (z0 + 0.5 + np.arange(nz)) * pixel
        rs = (0.5 + np.arange(nr)) * pixel
        stem = axis.point + np.outer(zs, axis.direction)
        for k in range(2 * n_sections):
            th = k * np.pi / n_sections
            radial = np.cos(th) * e1 + np.sin(th) * e2
            pts = (stem[:, None, :] + rs[None, :, None] * radial).reshape(-1, 3)
            out |= inside(pts).reshape(nz, nr)
        _sample_centers(out, part, axis, pixel, z0)
    return HalfSection.empty(axis, z0, nz, nr, pixel).with_data(out)


def sections_for_spacing(part: VoxelGrid, axis: Axis, pixel: float) -> int:
    """Section count whose angular spacing is at most ``pixel / r_max``."""
    if part.is_empty():
        return 1
    _, r = axis.cylindrical(part.occupied_corners())
    return max(1, int(math.ceil(math.pi * r.max() / pixel)))


def revolve_volume(s: HalfSection) -> float:
    """Pappus volume: each pixel contributes ``2*pi*r_c*pixel**2``."""
    rc = s.r_centers()
    per_column = s.data.sum(axis=0)
    return float(2 * np.pi * s.pixel ** 2 * np.dot(per_column, rc))


def turnability_ratio(part: VoxelGrid, axis: Axis, pixel: float, tol: float = 0.02,
                      workers: int = 1) -> TurnabilityReport:
    if part.is_empty():
        raise ValueError("turnability ratio of an empty part is undefined")
    tc = tc_implicit(part, axis, pixel, workers=workers)
    tc_vol = revolve_volume(tc)
    vol = part.volume()
    raw = vol / tc_vol
    gamma = min(raw, 1.0) if raw <= 1.0 + tol else raw
    if raw > 1.0 + tol:
        logger.warning("turnability ratio %.4f exceeds 1 beyond tolerance %.3g", raw, tol)
    return TurnabilityReport(axis, gamma, raw, vol, tc_vol)


# -- plane/section conversions ------------------------------------------------

def mirror_to_plane(s: HalfSection) -> Raster2D:
    """The full longitudinal plane ``(z, x)`` with ``x`` in ``[-R, R]``."""
    nz, nr = s.dims
    data = np.concatenate([s.data[:, ::-1], s.data], axis=1)
    return Raster2D((s.raster.origin[0], -(nr - 0.5) * s.pixel), s.pixel, data)


def fold_plane(plane: Raster2D, axis: Axis, z0_index: int, nz: int, nr: int) -> HalfSection:
    """Revolve a plane raster: ``(z, r)`` is set iff ``(z, r)`` or ``(z, -r)`` is."""
    sym = plane.reframe(((z0_index + 0.5) * plane.pixel, -(nr - 0.5) * plane.pixel), (nz, 2 * nr))
    data = sym.data[:, nr:] | sym.data[:, :nr][:, ::-1]
    return HalfSection.empty(axis, z0_index, nz, nr, plane.pixel).with_data(data)


def map_section_z(s: HalfSection, flip: bool, shift: float, axis: Optional[Axis] = None) -> HalfSection:
    """Apply ``z -> (-z if flip else z) + shift`` to a half-section.

    ``shift`` must be an integer multiple of the pixel size so the lattice
    maps onto itself.
    """
    k = shift / s.pixel
    if abs(k - round(k)) > 1e-6:
        raise FrameMismatchError(f"z shift {shift} is not a multiple of the pixel size {s.pixel}")
    k = int(round(k))
    nz, nr = s.dims
    axis = axis if axis is not None else s.axis
    if flip:
        z0 = k - s.z0_index - nz
        return HalfSection.empty(axis, z0, nz, nr, s.pixel).with_data(s.data[::-1, :])
    return HalfSection.empty(axis, s.z0_index + k, nz, nr, s.pixel).with_data(s.data)


def common_section_frame(*sections: HalfSection) -> Tuple[int, int, int]:
    z0 = min(s.z0_index for s in sections)
    z1 = max(s.z0_index + s.dims[0] for s in sections)
    nr = max(s.dims[1] for s in sections)
    return z0, z1 - z0, nr


def union_sections(*sections: HalfSection) -> HalfSection:
    z0, nz, nr = common_section_frame(*sections)
    out = sections[0].reframe(z0, nz, nr)
    for s in sections[1:]:
        out = out.union(s.reframe(z0, nz, nr))
    return out


def annulus_section(axis: Axis, pixel: float, z_range, r_range, frame=None) -> HalfSection:
    """Pixels whose centers fall in the half-open box ``[z0, z1) x [r0, r1)``."""
    if frame is None:
        k0 = int(math.floor(z_range[0] / pixel)) - 1
        k1 = int(math.ceil(z_range[1] / pixel)) + 1
        frame = (k0, k1 - k0, int(math.ceil(r_range[1] / pixel)) + 1)
    z0, nz, nr = frame
    s = HalfSection.empty(axis, z0, nz, nr, pixel)
    z = s.z_centers()[:, None]
    r = s.r_centers()[None, :]
    eps = 1e-9 * pixel
    data = ((z >= z_range[0] - eps) & (z < z_range[1] - eps)
            & (r >= r_range[0] - eps) & (r < r_range[1] - eps))
    return s.with_data(data)


def section_image_of(part: VoxelGrid, s: HalfSection) -> np.ndarray:
    """Pixels of ``s``'s frame holding the image of an occupied part cell center."""
    out = np.zeros(s.dims, dtype=bool)
    _sample_centers(out, part, s.axis, s.pixel, s.z0_index)
    return out


# -- file I/O -------------------------------------------------------------------

def write_section(s: HalfSection, path) -> Tuple[Path, Path]:
    """PGM image plus a ``.hdr`` sidecar with axis, origin, pixel size and dims."""
    path = Path(path)
    pgm = path.with_suffix(".pgm")
    hdr = path.with_suffix(".hdr")
    write_pgm(s.raster, pgm)
    p, d = s.axis.point, s.axis.direction
    lines = [
        "format halfsection-1",
        "axis_point {:.12g} {:.12g} {:.12g}".format(*p),
        "axis_direction {:.15g} {:.15g} {:.15g}".format(*d),
        "origin {:.12g} {:.12g}".format(*s.raster.origin),
        f"pixel {s.pixel:.15g}",
        "dims {} {}".format(*s.dims),
        "layout rows=r(descending) cols=z(ascending)",
    ]
    hdr.write_text("\n".join(lines) + "\n")
    return pgm, hdr


def read_section(path) -> HalfSection:
    path = Path(path)
    fields = {}
    for line in path.with_suffix(".hdr").read_text().splitlines():
        key, _, value = line.partition(" ")
        fields[key] = value.split()
    pixel = float(fields["pixel"][0])
    img = read_pgm(path.with_suffix(".pgm"))
    data = (img >= 128)[::-1, :].T
    origin = tuple(float(v) for v in fields["origin"])
    axis = Axis.make([float(v) for v in fields["axis_point"]],
                     [float(v) for v in fields["axis_direction"]])
    dims = tuple(int(v) for v in fields["dims"])
    if data.shape != dims:
        raise ValueError(f"{path}: image shape {data.shape} does not match header dims {dims}")
    lattice_offset(origin, (0.5 * pixel, 0.5 * pixel), pixel)
    return HalfSection(axis, Raster2D(origin, pixel, data))
