"""Triangle meshes: STL reading/writing and a few closed primitives."""
from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..errors import StlParseError

DEGENERATE_AREA = 1e-12  # mm^2


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    unit_scale: float = 1.0

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(t) and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        v.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def corners(self) -> np.ndarray:
        """Triangle corner coordinates, shape (n, 3, 3)."""
        return self.vertices[self.triangles]

    def areas(self) -> np.ndarray:
        c = self.corners()
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def signed_volume(self) -> float:
        c = self.corners()
        return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)

    def scaled(self, factor: float) -> "TriangleMesh":
        return TriangleMesh(self.vertices * factor, self.triangles, self.unit_scale * factor)


def mesh_from_soup(corners: np.ndarray, unit_scale: float = 1.0) -> TriangleMesh:
    """Weld a triangle soup (n, 3, 3), dropping zero-area triangles."""
    corners = np.asarray(corners, dtype=np.float64).reshape(-1, 3, 3) * unit_scale
    if len(corners) == 0:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), unit_scale)
    area = 0.5 * np.linalg.norm(
        np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]), axis=1)
    corners = corners[area > DEGENERATE_AREA]
    verts, inverse = np.unique(corners.reshape(-1, 3), axis=0, return_inverse=True)
    tris = inverse.reshape(-1, 3)
    # welding can collapse a sliver onto a repeated index
    keep = (tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2]) & (tris[:, 0] != tris[:, 2])
    return TriangleMesh(verts, tris[keep], unit_scale)


def load_mesh(path, unit_scale: float = 1.0) -> TriangleMesh:
    """Read an ASCII or binary STL file.  Coordinates are taken as mm."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise StlParseError(f"cannot read {path}: {exc}") from exc
    if _looks_binary(data):
        corners = _parse_binary(data)
    elif data.lstrip()[:5].lower() == b"solid":
        corners = _parse_ascii(data)
    else:
        corners = _parse_binary(data)
    return mesh_from_soup(corners, unit_scale)


def _looks_binary(data: bytes) -> bool:
    if len(data) < 84:
        return False
    (count,) = struct.unpack_from("<I", data, 80)
    return 84 + 50 * count == len(data)


def _parse_binary(data: bytes) -> np.ndarray:
    if len(data) < 84:
        raise StlParseError("binary STL header truncated", offset=len(data))
    (count,) = struct.unpack_from("<I", data, 80)
    available = (len(data) - 84) // 50
    if available < count:
        raise StlParseError(
            f"binary STL declares {count} triangles but record {available} is truncated",
            offset=84 + 50 * available, record=available)
    record = np.dtype([("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    recs = np.frombuffer(data, dtype=record, count=count, offset=84)
    return recs["v"].astype(np.float64)


_TOKEN = re.compile(rb"\S+")


def _parse_ascii(data: bytes) -> np.ndarray:
    verts = []
    in_loop = 0
    tokens = _TOKEN.finditer(data)
    for m in tokens:
        word = m.group().lower()
        if word == b"vertex":
            xyz = []
            for _ in range(3):
                nxt = next(tokens, None)
                if nxt is None:
                    raise StlParseError("unexpected end of file inside vertex", offset=m.start())
                try:
                    xyz.append(float(nxt.group()))
                except ValueError:
                    raise StlParseError(f"bad coordinate {nxt.group()!r}",
                                        offset=nxt.start()) from None
            verts.append(xyz)
            in_loop += 1
        elif word == b"outer":
            in_loop = 0
        elif word == b"endloop":
            if in_loop != 3:
                raise StlParseError(f"facet loop has {in_loop} vertices",
                                    offset=m.start(), record=len(verts) // 3)
    if len(verts) % 3:
        raise StlParseError("dangling vertices at end of file", offset=len(data))
    return np.array(verts, dtype=np.float64).reshape(-1, 3, 3)


def save_stl(mesh: TriangleMesh, path, ascii: bool = False, name: str = "part") -> Path:
    path = Path(path)
    corners = mesh.corners()
    normals = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = np.divide(normals, lengths, out=np.zeros_like(normals), where=lengths > 0)
    if ascii:
        lines = [f"solid {name}"]
        for n, tri in zip(normals, corners):
            lines.append(f"  facet normal {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}")
            lines.append("    outer loop")
            for p in tri:
                lines.append(f"      vertex {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}")
            lines.append("    endloop")
            lines.append("  endfacet")
        lines.append(f"endsolid {name}")
        path.write_text("\n".join(lines) + "\n")
    else:
        record = np.dtype([("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
        recs = np.zeros(len(corners), dtype=record)
        recs["normal"] = normals
        recs["v"] = corners
        header = name.encode("ascii", "replace")[:80].ljust(80, b" ")
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(struct.pack("<I", len(corners)))
            fh.write(recs.tobytes())
    return path


# -- primitives ---------------------------------------------------------------

def box_mesh(lo: Sequence[float], hi: Sequence[float]) -> TriangleMesh:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    v = np.array([[lo[0] if i & 1 == 0 else hi[0],
                   lo[1] if i & 2 == 0 else hi[1],
                   lo[2] if i & 4 == 0 else hi[2]] for i in range(8)])
    quads = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5)]
    tris = []
    for a, b, c, d in quads:
        tris += [(a, b, c), (a, c, d)]
    return TriangleMesh(v, tris)


def revolve_profile_mesh(profile: Sequence[Sequence[float]], segments: int = 64,
                         center: Optional[Sequence[float]] = None) -> TriangleMesh:
    """Closed solid of revolution about the z axis.

    ``profile`` is a polyline of ``(z, r)`` points that either starts and
    ends on the axis (``r == 0``) or is a closed loop (last point equal to
    the first) off the axis, which gives a solid with a through hole.
    Traverse the region counter-clockwise in ``(z, r)``, i.e. outward
    normals point away from it.  The region is swept a full turn using
    ``segments`` facets.
    """
    prof = np.asarray(profile, dtype=float)
    closed = len(prof) > 3 and np.array_equal(prof[0], prof[-1])
    if closed:
        if np.any(prof[:, 1] <= 0):
            raise ValueError("a closed profile must stay off the axis (r > 0)")
    elif prof[0, 1] != 0 or prof[-1, 1] != 0:
        raise ValueError("profile must start and end on the axis (r == 0) or be closed")
    ang = 2 * np.pi * np.arange(segments) / segments
    cos, sin = np.cos(ang), np.sin(ang)
    verts = []
    rings = []
    for z, r in prof:
        if r == 0:
            rings.append([len(verts)] * segments)
            verts.append((0.0, 0.0, z))
        else:
            rings.append(list(range(len(verts), len(verts) + segments)))
            verts.extend(zip(r * cos, r * sin, np.full(segments, z)))
    tris = []
    for ring_a, ring_b in zip(rings[:-1], rings[1:]):
        for k in range(segments):
            k1 = (k + 1) % segments
            a0, a1, b0, b1 = ring_a[k], ring_a[k1], ring_b[k], ring_b[k1]
            if a0 != a1:
                tris.append((a0, a1, b0))
            if b0 != b1:
                tris.append((a1, b1, b0))
    verts = np.array(verts)
    if center is not None:
        verts = verts + np.asarray(center, dtype=float)
    return TriangleMesh(verts, tris)


def annulus_mesh(r_inner: float, r_outer: float, z0: float, z1: float, segments: int = 128,
                 center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Thick-walled tube ``r_inner <= r <= r_outer`` over ``z0 <= z <= z1``."""
    if not 0 < r_inner < r_outer:
        raise ValueError("annulus needs 0 < r_inner < r_outer")
    loop = [(z0, r_inner), (z0, r_outer), (z1, r_outer), (z1, r_inner), (z0, r_inner)]
    return revolve_profile_mesh(loop, segments, center)


def cylinder_mesh(radius: float, z0: float, z1: float, segments: int = 64,
                  center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    return revolve_profile_mesh([(z0, 0), (z0, radius), (z1, radius), (z1, 0)],
                                segments, center)


def sphere_mesh(radius: float, segments: int = 64, rings: int = 32,
                center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    t = np.linspace(0, np.pi, rings + 1)
    profile = np.column_stack([-radius * np.cos(t), radius * np.sin(t)])
    profile[0, 1] = profile[-1, 1] = 0.0
    return revolve_profile_mesh(profile, segments, center)


def stepped_shaft_mesh(steps: Sequence[Sequence[float]], segments: int = 64) -> TriangleMesh:
    """Shaft made of coaxial cylinders; ``steps`` is a list of ``(length, radius)``."""
    profile = [(0.0, 0.0)]
    z = 0.0
    for length, radius in steps:
        profile.append((z, radius))
        z += length
        profile.append((z, radius))
    profile.append((z, 0.0))
    return revolve_profile_mesh(profile, segments)
