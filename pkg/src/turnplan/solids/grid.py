"""Voxel grids, rigid transforms and axes.

``VoxelGrid.origin`` is the world position of the *center* of cell
``[0, 0, 0]``; cell ``[i, j, k]`` is centered at ``origin + (i, j, k) * spacing``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from ..errors import FrameMismatchError, VoxelizationError
from .mesh import TriangleMesh

logger = logging.getLogger(__name__)

_DET_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """``p -> rotation @ p + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        tr = np.array(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-9):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > _DET_TOL:
            raise ValueError("rotation determinant is not +1")
        rot.flags.writeable = False
        tr.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def translate(cls, offset) -> "RigidTransform":
        return cls(np.eye(3), offset)

    @classmethod
    def about_axis(cls, point, direction, angle: float) -> "RigidTransform":
        """Rotation by ``angle`` about the line through ``point`` along ``direction``."""
        rot = rotation_matrix(direction, angle)
        point = np.asarray(point, dtype=float)
        return cls(rot, point - rot @ point)

    @classmethod
    def aligning(cls, src, dst) -> "RigidTransform":
        """Rotation about the origin taking unit vector ``src`` onto ``dst``."""
        return cls(align_vectors(src, dst), np.zeros(3))

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def apply_vector(self, vectors) -> np.ndarray:
        return np.asarray(vectors, dtype=np.float64) @ self.rotation.T

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        """``(self @ other)(p) == self(other(p))``."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def is_identity(self, tol: float = 1e-9) -> bool:
        return (np.allclose(self.rotation, np.eye(3), atol=tol)
                and np.allclose(self.translation, 0.0, atol=tol))

    def to_json(self):
        return {"rotation": np.round(self.rotation, 12).tolist(),
                "translation": np.round(self.translation, 12).tolist()}


def rotation_matrix(direction, angle: float) -> np.ndarray:
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    k = np.array([[0, -d[2], d[1]], [d[2], 0, -d[0]], [-d[1], d[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def align_vectors(src, dst) -> np.ndarray:
    a = np.asarray(src, dtype=float)
    b = np.asarray(dst, dtype=float)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    c = float(np.dot(a, b))
    if c > 1 - 1e-15:
        return np.eye(3)
    if c < -1 + 1e-15:
        # half turn about any axis perpendicular to a
        perp = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-6:
            perp = np.cross(a, [0.0, 1.0, 0.0])
        return rotation_matrix(perp, np.pi)
    v = np.cross(a, b)
    k = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + k + (k @ k) / (1 + c)


@dataclass(frozen=True, eq=False)
class Axis:
    point: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        p = np.array(self.point, dtype=np.float64).reshape(3)
        d = np.array(self.direction, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError(f"axis direction must be a unit vector, |d| = {np.linalg.norm(d)}")
        p.flags.writeable = False
        d.flags.writeable = False
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "direction", d)

    @classmethod
    def make(cls, point, direction) -> "Axis":
        d = np.asarray(direction, dtype=float)
        return cls(point, d / np.linalg.norm(d))

    @classmethod
    def z(cls) -> "Axis":
        return cls(np.zeros(3), np.array([0.0, 0.0, 1.0]))

    def basis(self) -> Tuple[np.ndarray, np.ndarray]:
        """Two unit vectors completing ``direction`` to a right-handed frame.

        For the machine ``z`` axis this returns ``(x, y)``.
        """
        d = self.direction
        helper = np.array([1.0, 0.0, 0.0])
        if abs(d @ helper) > 0.9:
            helper = np.array([0.0, 1.0, 0.0])
        e1 = helper - (helper @ d) * d
        e1 /= np.linalg.norm(e1)
        return e1, np.cross(d, e1)

    def canonical(self) -> "Axis":
        """Same line with a sign-normalised direction (first nonzero component > 0)."""
        d = self.direction
        nz = np.flatnonzero(np.abs(d) > 1e-12)
        if len(nz) and d[nz[0]] < 0:
            d = -d
        return Axis(self.point, d)

    def cylindrical(self, points) -> Tuple[np.ndarray, np.ndarray]:
        """Axial coordinate and radial distance of ``points`` (n, 3)."""
        rel = np.asarray(points, dtype=float) - self.point
        z = rel @ self.direction
        radial = rel - np.outer(z, self.direction)
        return z, np.linalg.norm(radial, axis=1)

    def angle_to(self, other: "Axis") -> float:
        """Angle between the two lines' directions in [0, pi/2]."""
        c = min(1.0, abs(float(self.direction @ other.direction)))
        return float(np.arccos(c))

    def to_json(self):
        return {"point": np.round(self.point, 9).tolist(),
                "direction": np.round(self.direction, 12).tolist()}


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    origin: np.ndarray
    spacing: float
    data: np.ndarray

    def __post_init__(self):
        if not self.spacing > 0:
            raise ValueError(f"voxel spacing must be positive, got {self.spacing}")
        origin = np.array(self.origin, dtype=np.float64).reshape(3)
        data = np.array(self.data, dtype=bool, copy=True)
        if data.ndim != 3:
            raise ValueError("voxel data must be 3D")
        origin.flags.writeable = False
        data.flags.writeable = False
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "data", data)

    @classmethod
    def empty(cls, origin, spacing, dims) -> "VoxelGrid":
        return cls(origin, spacing, np.zeros(tuple(dims), dtype=bool))

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.data.shape

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.data))

    def volume(self) -> float:
        return self.count * self.spacing ** 3

    def is_empty(self) -> bool:
        return not self.data.any()

    def same_frame(self, other: "VoxelGrid") -> bool:
        return (self.dims == other.dims
                and abs(self.spacing - other.spacing) <= 1e-12 * self.spacing
                and np.allclose(self.origin, other.origin, rtol=0, atol=1e-9 * self.spacing))

    def with_data(self, data) -> "VoxelGrid":
        return VoxelGrid(self.origin, self.spacing, data)

    def occupied_centers(self) -> np.ndarray:
        return self.origin + np.argwhere(self.data) * self.spacing

    def occupied_bounds(self):
        """(lo, hi) world extents of occupied cells, or None when empty."""
        idx = np.argwhere(self.data)
        if len(idx) == 0:
            return None
        lo = self.origin + (idx.min(axis=0) - 0.5) * self.spacing
        hi = self.origin + (idx.max(axis=0) + 0.5) * self.spacing
        return lo, hi

    def occupied_corners(self) -> np.ndarray:
        """The 8 corners of the occupied cells' bounding box."""
        lo, hi = self.occupied_bounds()
        return np.array([[(lo, hi)[i & 1][0], (lo, hi)[(i >> 1) & 1][1], (lo, hi)[(i >> 2) & 1][2]]
                         for i in range(8)])

    def cell_index(self, points) -> np.ndarray:
        return np.rint((np.asarray(points, dtype=float) - self.origin) / self.spacing).astype(np.int64)

    def contains(self, points) -> np.ndarray:
        """Nearest-cell point membership: inside iff the enclosing cell is occupied."""
        idx = self.cell_index(points)
        shape = np.array(self.dims)
        ok = np.all((idx >= 0) & (idx < shape), axis=-1)
        out = np.zeros(idx.shape[:-1], dtype=bool)
        sel = idx[ok]
        out[ok] = self.data[sel[:, 0], sel[:, 1], sel[:, 2]]
        return out

    def density(self, points) -> np.ndarray:
        """Trilinear interpolation of the 0/1 occupancy at ``points``."""
        f = (np.asarray(points, dtype=float) - self.origin) / self.spacing
        base = np.floor(f).astype(np.int64)
        frac = f - base
        padded = np.pad(self.data, 1, constant_values=False)
        shape = np.array(padded.shape)
        out = np.zeros(f.shape[:-1])
        for corner in range(8):
            off = np.array([corner & 1, (corner >> 1) & 1, (corner >> 2) & 1])
            idx = base + off + 1
            ok = np.all((idx >= 0) & (idx < shape), axis=-1)
            w = np.prod(np.where(off == 1, frac, 1.0 - frac), axis=-1)
            vals = np.zeros(out.shape, dtype=bool)
            sel = idx[ok]
            vals[ok] = padded[sel[:, 0], sel[:, 1], sel[:, 2]]
            out += w * vals
        return out

    def boundary_mask(self) -> np.ndarray:
        """Occupied cells with at least one empty face neighbour."""
        p = np.pad(self.data, 1, constant_values=False)
        interior = (p[2:, 1:-1, 1:-1] & p[:-2, 1:-1, 1:-1] & p[1:-1, 2:, 1:-1]
                    & p[1:-1, :-2, 1:-1] & p[1:-1, 1:-1, 2:] & p[1:-1, 1:-1, :-2])
        return self.data & ~interior

    def complement(self) -> "VoxelGrid":
        return self.with_data(~self.data)


def grid_frame_for_bounds(lo, hi, spacing: float, padding: int = 0):
    """Frame (origin, dims) whose cells tile the box ``[lo, hi]`` plus padding."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    dims = np.maximum(np.ceil((hi - lo) / spacing - 1e-9).astype(np.int64), 1) + 2 * padding
    origin = lo - padding * spacing + 0.5 * spacing
    return origin, tuple(int(d) for d in dims)


def voxelize(mesh: TriangleMesh, spacing: float, padding: int = 1,
             frame: Optional[Tuple[Sequence[float], Sequence[int]]] = None) -> VoxelGrid:
    """Classify cell centers against a closed mesh by ray parity.

    Rays run along +z through each column of cell centers.  Rays that pass
    within rounding distance of a triangle edge or vertex are recast from a
    fixed, slightly perturbed position.  A ray with an odd number of
    crossings means the mesh is open and raises :class:`VoxelizationError`.
    """
    if not spacing > 0:
        raise ValueError("voxel spacing must be positive")
    if frame is None:
        if mesh.is_empty():
            return VoxelGrid.empty(np.zeros(3), spacing, (max(1, 2 * padding),) * 3)
        origin, dims = grid_frame_for_bounds(*mesh.bounds(), spacing, padding)
    else:
        origin = np.asarray(frame[0], dtype=float)
        dims = tuple(int(d) for d in frame[1])
    nx, ny, nz = dims
    if mesh.is_empty():
        return VoxelGrid.empty(origin, spacing, dims)

    xs = origin[0] + spacing * np.arange(nx)
    ys = origin[1] + spacing * np.arange(ny)
    tri = mesh.corners()

    cols, zs, ambiguous = _cast_columns(tri, xs, ys, (0.0, 0.0))
    if len(ambiguous):
        # deterministic sub-cell jitter, small enough to keep every center's class
        shifts = [(0.5e-4 * np.sqrt(2.0), 0.5e-4 * np.sqrt(3.0)),
                  (-0.7e-4 * np.sqrt(5.0), 0.3e-4 * np.sqrt(7.0)),
                  (0.9e-4 * np.sqrt(11.0), -0.8e-4 * np.sqrt(13.0))]
        redo = ambiguous
        keep = ~np.isin(cols, redo)
        cols, zs = cols[keep], zs[keep]
        for sx, sy in shifts:
            rc, rz, still = _cast_columns(tri, xs, ys, (sx * spacing, sy * spacing), redo)
            good = ~np.isin(rc, still)
            cols = np.concatenate([cols, rc[good]])
            zs = np.concatenate([zs, rz[good]])
            redo = still
            if len(redo) == 0:
                break
        if len(redo):
            raise VoxelizationError(
                f"{len(redo)} rays stay degenerate after perturbation",
                ray=_ray_of(int(redo[0]), xs, ys, ny))

    counts = np.bincount(cols, minlength=nx * ny)
    odd = np.flatnonzero(counts % 2)
    if len(odd):
        ray = _ray_of(int(odd[0]), xs, ys, ny)
        raise VoxelizationError(
            f"odd ray parity ({counts[odd[0]]} crossings) along +z through "
            f"x={ray[0]:.6g}, y={ray[1]:.6g}; mesh is not watertight", ray=ray)

    toggles = np.zeros((nx * ny, nz + 1), dtype=np.int64)
    k0 = np.clip(np.ceil((zs - origin[2]) / spacing), 0, nz).astype(np.int64)
    np.add.at(toggles, (cols, k0), 1)
    occ = (np.cumsum(toggles, axis=1)[:, :nz] % 2).astype(bool)
    return VoxelGrid(origin, spacing, occ.reshape(nx, ny, nz))


def _ray_of(col, xs, ys, ny):
    return float(xs[col // ny]), float(ys[col % ny])


def _cast_columns(tri, xs, ys, shift, only=None, eps=1e-10, chunk=2_000_000):
    """Crossings of +z rays with triangles.

    Returns flat column ids, crossing heights, and the ids of columns with a
    near-edge hit.
    """
    nx, ny = len(xs), len(ys)
    spacing = xs[1] - xs[0] if nx > 1 else (ys[1] - ys[0] if ny > 1 else 1.0)
    x0, y0 = xs[0] + shift[0], ys[0] + shift[1]
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    area = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    scale = np.maximum(np.abs(tri[:, :, :2]).max(axis=(1, 2)), 1.0)
    flat = np.abs(area) <= 1e-14 * scale ** 2
    lo = tri[:, :, :2].min(axis=1)
    hi = tri[:, :, :2].max(axis=1)
    i0 = np.clip(np.ceil((lo[:, 0] - x0) / spacing - 1e-9), 0, nx).astype(np.int64)
    i1 = np.clip(np.floor((hi[:, 0] - x0) / spacing + 1e-9), -1, nx - 1).astype(np.int64)
    j0 = np.clip(np.ceil((lo[:, 1] - y0) / spacing - 1e-9), 0, ny).astype(np.int64)
    j1 = np.clip(np.floor((hi[:, 1] - y0) / spacing + 1e-9), -1, ny - 1).astype(np.int64)
    ni = np.maximum(i1 - i0 + 1, 0)
    nj = np.maximum(j1 - j0 + 1, 0)
    n_pairs = ni * nj
    n_pairs[flat] = 0
    tids = np.flatnonzero(n_pairs)

    out_cols, out_z, out_amb = [], [], []
    start = 0
    cum = np.cumsum(n_pairs[tids])
    while start < len(tids):
        base = cum[start - 1] if start else 0
        stop = int(np.searchsorted(cum, base + chunk, side="right"))
        stop = max(stop, start + 1)
        sel = tids[start:stop]
        start = stop
        reps = n_pairs[sel]
        t = np.repeat(sel, reps)
        local = np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps)
        ii = i0[t] + local // nj[t]
        jj = j0[t] + local % nj[t]
        col = ii * ny + jj
        if only is not None:
            m = np.isin(col, only)
            t, ii, jj, col = t[m], ii[m], jj[m], col[m]
        px = x0 + ii * spacing
        py = y0 + jj * spacing
        ta, tb, tc = a[t], b[t], c[t]
        w0 = (tc[:, 0] - tb[:, 0]) * (py - tb[:, 1]) - (tc[:, 1] - tb[:, 1]) * (px - tb[:, 0])
        w1 = (ta[:, 0] - tc[:, 0]) * (py - tc[:, 1]) - (ta[:, 1] - tc[:, 1]) * (px - tc[:, 0])
        w2 = (tb[:, 0] - ta[:, 0]) * (py - ta[:, 1]) - (tb[:, 1] - ta[:, 1]) * (px - ta[:, 0])
        ar = area[t]
        l0, l1, l2 = w0 / ar, w1 / ar, w2 / ar
        inside = (l0 >= -eps) & (l1 >= -eps) & (l2 >= -eps)
        near = inside & ((np.abs(l0) <= eps) | (np.abs(l1) <= eps) | (np.abs(l2) <= eps))
        hit = inside & ~near
        out_cols.append(col[hit])
        out_z.append(l0[hit] * ta[hit, 2] + l1[hit] * tb[hit, 2] + l2[hit] * tc[hit, 2])
        out_amb.append(col[near])
    if not out_cols:
        return np.zeros(0, np.int64), np.zeros(0), np.zeros(0, np.int64)
    return (np.concatenate(out_cols), np.concatenate(out_z),
            np.unique(np.concatenate(out_amb)))


def grid_boolean(a: VoxelGrid, b: VoxelGrid, op: str) -> VoxelGrid:
    if not a.same_frame(b):
        raise FrameMismatchError(
            f"grid frames differ: origin {a.origin.tolist()} / {a.spacing} / {a.dims} vs "
            f"{b.origin.tolist()} / {b.spacing} / {b.dims}")
    if op == "union":
        data = a.data | b.data
    elif op == "intersect":
        data = a.data & b.data
    elif op == "difference":
        data = a.data & ~b.data
    else:
        raise ValueError(f"unknown boolean op {op!r}")
    return a.with_data(data)


def transform_solid(solid, t: RigidTransform, frame=None):
    """Apply a rigid motion to a mesh (exactly) or a grid (by resampling).

    Grids are resampled by pulling each output cell center back through the
    inverse transform and reading the nearest input cell.  Unless ``frame``
    is given, the output lattice is anchored at the image of the input
    origin, so lattice translations and lattice rotations are exact.
    """
    if isinstance(solid, TriangleMesh):
        return TriangleMesh(t.apply(solid.vertices), solid.triangles, solid.unit_scale)
    if not isinstance(solid, VoxelGrid):
        raise TypeError(f"cannot transform {type(solid).__name__}")
    g = solid
    if frame is None and t.is_identity(0.0):
        return g
    if frame is None:
        if g.is_empty():
            return VoxelGrid.empty(t.apply(g.origin), g.spacing, g.dims)
        anchor = t.apply(g.origin)
        corners = t.apply(g.occupied_corners())
        lo = np.floor((corners.min(axis=0) - anchor) / g.spacing + 1e-9) - 1
        hi = np.ceil((corners.max(axis=0) - anchor) / g.spacing - 1e-9) + 1
        origin = anchor + lo * g.spacing
        dims = tuple(int(d) for d in (hi - lo + 1))
    else:
        origin = np.asarray(frame[0], dtype=float)
        dims = tuple(int(d) for d in frame[1])
    idx = np.indices(dims).reshape(3, -1).T
    centers = origin + idx * g.spacing
    back = t.inverse().apply(centers)
    occ = g.contains(back)
    return VoxelGrid(origin, g.spacing, occ.reshape(dims))


def write_vtk(grid: VoxelGrid, path, title: str = "occupancy") -> Path:
    """Legacy ASCII VTK STRUCTURED_POINTS with an unsigned-char occupancy field."""
    path = Path(path)
    nx, ny, nz = grid.dims
    vals = grid.data.transpose(2, 1, 0).ravel().astype(np.uint8)
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {nx} {ny} {nz}",
        "ORIGIN {:.9g} {:.9g} {:.9g}".format(*grid.origin),
        f"SPACING {grid.spacing:.9g} {grid.spacing:.9g} {grid.spacing:.9g}",
        f"POINT_DATA {nx * ny * nz}",
        "SCALARS occupancy unsigned_char 1",
        "LOOKUP_TABLE default",
    ]
    body = [" ".join(map(str, vals[i:i + 64].tolist())) for i in range(0, len(vals), 64)]
    path.write_text("\n".join(lines + body) + "\n")
    return path


def box_grid(lo, hi, spacing: float, padding: int = 1) -> VoxelGrid:
    """Axis-aligned box sampled at cell centers, framed like ``voxelize`` would."""
    origin, dims = grid_frame_for_bounds(lo, hi, spacing, padding)
    idx = np.indices(dims)
    c = [origin[k] + idx[k] * spacing for k in range(3)]
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    occ = np.ones(dims, dtype=bool)
    for k in range(3):
        occ &= (c[k] >= lo[k]) & (c[k] <= hi[k])
    return VoxelGrid(origin, spacing, occ)
