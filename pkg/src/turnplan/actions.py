"""Turning actions: tool-plane obstacles, free space and maximal turnable volumes.

Everything happens in the longitudinal tool plane ``(z, x)`` of the
machine frame, where ``x`` spans both sides of the spindle.  Scene rasters
(closures, envelope) live on the half-integer pixel lattice; tool rasters
live on the integer lattice with the cutting reference at ``(0, 0)``, so
placements and swept regions land back on the half-integer lattice.
"""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import FrameMismatchError
from .fixture import ChuckModel, FixtureConfig, chuck_section
from .revolve import (HalfSection, fold_plane, map_section_z, mirror_to_plane, tc_implicit,
                      union_sections)
from .solids.grid import Axis, VoxelGrid
from .solids.raster import (Raster2D, bounding_frame, dilate2d, raster_from_box, reflect2d,
                            union_all)

logger = logging.getLogger(__name__)


def rotate_quarter(r: Raster2D, turns: int) -> Raster2D:
    """Rotate a raster by ``turns * 90`` degrees about the world origin."""
    out = r
    for _ in range(turns % 4):
        # (u, v) -> (-v, u): old pixel (i, j) lands at (nv - 1 - j, i)
        nv = out.dims[1]
        origin = (-(out.origin[1] + (nv - 1) * out.pixel), out.origin[0])
        out = Raster2D(origin, out.pixel, out.data.T[::-1, :])
    return out


@dataclass(frozen=True, eq=False)
class ToolInsert:
    name: str
    profile: Raster2D

    def __post_init__(self):
        if self.profile.is_empty():
            raise ValueError(f"insert {self.name!r} has an empty profile")
        lo, hi = self.profile.bbox()
        if not (lo[0] <= 0 <= hi[0] and lo[1] <= 0 <= hi[1]):
            raise ValueError(f"insert {self.name!r}: reference point lies outside the profile box")


@dataclass(frozen=True, eq=False)
class ToolAssembly:
    """Insert plus holder silhouette at one fixed in-plane setup.

    ``orientation`` records the quarter turns already applied to both
    rasters; use :meth:`make` to build an assembly from unrotated shapes.
    """

    name: str
    insert: ToolInsert
    holder: Optional[Raster2D]
    setup: str
    orientation: int
    cost_rate: float
    feed_rate: float

    def __post_init__(self):
        if not (self.cost_rate > 0 and self.feed_rate > 0):
            raise ValueError(f"tool {self.name!r}: cost and feed rates must be positive")
        if self.holder is not None and not self.holder.is_empty():
            origin, dims = bounding_frame(self.holder, self.insert.profile)
            h = self.holder.reframe(origin, dims).data
            c = self.insert.profile.reframe(origin, dims).data
            if np.any(h & c):
                raise ValueError(f"tool {self.name!r}: holder overlaps the insert")

    @classmethod
    def make(cls, name, insert: ToolInsert, holder: Optional[Raster2D], setup: str = "",
             quarter_turns: int = 0, cost_rate: float = 1.0,
             feed_rate: float = 1.0) -> "ToolAssembly":
        if quarter_turns % 4:
            insert = ToolInsert(insert.name, rotate_quarter(insert.profile, quarter_turns))
            holder = None if holder is None else rotate_quarter(holder, quarter_turns)
        return cls(name, insert, holder, setup, quarter_turns % 4, cost_rate, feed_rate)

    @property
    def rate(self) -> float:
        """Cost per unit removed volume, ``c / f``."""
        return self.cost_rate / self.feed_rate

    def silhouette(self) -> Raster2D:
        if self.holder is None or self.holder.is_empty():
            return self.insert.profile
        return union_all(self.holder, self.insert.profile)


@dataclass(frozen=True, eq=False)
class MachineEnvelope:
    w: Raster2D

    def __post_init__(self):
        if self.w.is_empty():
            raise ValueError("machine envelope is empty")

    @classmethod
    def box(cls, z_range, x_range, pixel: float,
            exclusions: Sequence[Tuple[Sequence[float], Sequence[float]]] = ()) -> "MachineEnvelope":
        """Rectangle of reference translations minus rectangular exclusions.

        Pixels count when their centers lie in the half-open box.
        """
        k0 = int(math.floor(z_range[0] / pixel))
        k1 = int(math.ceil(z_range[1] / pixel))
        m0 = int(math.floor(x_range[0] / pixel))
        m1 = int(math.ceil(x_range[1] / pixel))
        origin = ((k0 + 0.5) * pixel, (m0 + 0.5) * pixel)
        dims = (k1 - k0, m1 - m0)
        w = raster_from_box(origin, pixel, dims, z_range, x_range)
        for zr, xr in exclusions:
            w = w.difference(raster_from_box(origin, pixel, dims, zr, xr))
        return cls(w)


@dataclass(frozen=True, eq=False)
class TurnAction:
    id: str
    fixture: FixtureConfig
    tool: ToolAssembly
    mtv: HalfSection
    mtv_fix: Optional[HalfSection] = field(default=None, repr=False)
    obstacle_closure: Optional[HalfSection] = field(default=None, repr=False)

    @property
    def cost_rate(self) -> float:
        return self.tool.cost_rate

    @property
    def feed_rate(self) -> float:
        return self.tool.feed_rate

    @property
    def rate(self) -> float:
        return self.tool.rate


def chuck_closure(part_fix: VoxelGrid, chuck: ChuckModel, pixel: float,
                  grip_radius: Optional[float] = None) -> HalfSection:
    """Closure of the fixtured part together with the chuck about the spindle.

    The revolution of a union is the union of the revolutions, so the
    part's closure is OR-ed with the chuck's own.
    """
    tc = tc_implicit(part_fix, Axis.z(), pixel)
    ch = chuck_section(chuck, pixel, grip_radius)
    return tc if ch is None else union_sections(tc, ch)


def _as_plane(p) -> Raster2D:
    return mirror_to_plane(p) if isinstance(p, HalfSection) else p


def c_obstacle(p_star2: Union[HalfSection, Raster2D], tool: ToolAssembly,
               method: str = "fft") -> Raster2D:
    """Reference placements at which the tool overlaps the stationary scene."""
    return dilate2d(_as_plane(p_star2), reflect2d(tool.silhouette()), method)


def free_space(obs: Raster2D, env: MachineEnvelope) -> Raster2D:
    """Envelope placements outside the obstacle.

    The obstacle is cropped onto the envelope's frame first; both must sit
    on the same pixel lattice.
    """
    return env.w.difference(obs.reframe_like(env.w))


def mtv(free: Raster2D, insert: ToolInsert, axis: Optional[Axis] = None,
        frame: Optional[Tuple[int, int, int]] = None, method: str = "fft") -> HalfSection:
    """Region swept by the insert over the free placements, revolved to a half-section."""
    axis = axis or Axis.z()
    swept = dilate2d(free, insert.profile, method)
    if frame is None:
        frame = _fold_frame(swept)
    return fold_plane(swept, axis, *frame)


def _fold_frame(plane: Raster2D) -> Tuple[int, int, int]:
    p = plane.pixel
    k = plane.origin[0] / p - 0.5
    if abs(k - round(k)) > 1e-6:
        raise FrameMismatchError("swept region is not on the half-integer lattice")
    z0 = int(round(k))
    v_lo = plane.origin[1] - 0.5 * p
    v_hi = v_lo + plane.dims[1] * p
    nr = int(math.ceil(max(abs(v_lo), abs(v_hi)) / p - 1e-9))
    return z0, plane.dims[0], max(nr, 1)


def fixture_closure(tc_init: HalfSection, fixture: FixtureConfig, chuck: ChuckModel,
                    pixel: float) -> HalfSection:
    """Chuck-augmented closure in the fixture frame from the init-frame closure.

    The grip moves the closure rigidly along the spindle (spin does not
    change a closure), so the fixtured closure is an exact relabelling.
    """
    flip, shift = fixture.grip.z_map()
    tc_fix = map_section_z(tc_init, flip, shift, Axis.z())
    r_grip = fixture.contact.grip_radius if fixture.contact is not None else None
    ch = chuck_section(chuck, pixel, r_grip)
    return tc_fix if ch is None else union_sections(tc_fix, ch)


def to_init_frame(s_fix: HalfSection, fixture: FixtureConfig, axis: Axis) -> HalfSection:
    """Undo the grip's motion along the spindle."""
    flip, shift = fixture.grip.z_map()
    return map_section_z(s_fix, flip, shift if flip else -shift, axis)


def generate_actions(fixtures: Sequence[FixtureConfig], tools: Sequence[ToolAssembly],
                     chuck: ChuckModel, env: MachineEnvelope, pixel: float,
                     tc_init: HalfSection, frame: Optional[Tuple[int, int, int]] = None,
                     workers: int = 1, method: str = "fft") -> List[TurnAction]:
    """One action per (fixture, tool) pair with a non-empty removable volume.

    MTVs are computed in each fixture's frame and returned in the init
    frame of ``tc_init``, cropped to ``frame`` when one is given.  Action
    ids follow the fixture-major product order, so they do not depend on
    which pairs are dropped.
    """
    closures = {f.id: fixture_closure(tc_init, f, chuck, pixel) for f in fixtures}
    planes = {fid: mirror_to_plane(s) for fid, s in closures.items()}
    pairs = list(itertools.product(fixtures, tools))

    def build(idx_pair):
        idx, (fx, tool) = idx_pair
        obs = c_obstacle(planes[fx.id], tool, method)
        free = free_space(obs, env)
        q_fix = mtv(free, tool.insert, Axis.z(), method=method)
        q = to_init_frame(q_fix, fx, tc_init.axis)
        if frame is not None:
            q = q.reframe(*frame)
        if q.is_empty():
            return None
        return TurnAction(f"a{idx:03d}", fx, tool, q, q_fix, closures[fx.id])

    if workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(workers) as pool:
            built = list(pool.map(build, enumerate(pairs)))
    else:
        built = [build(p) for p in enumerate(pairs)]
    actions = [a for a in built if a is not None]
    logger.info("%d actions from %d fixture/tool pairs", len(actions), len(pairs))
    return actions
