"""Workholding: spindle alignment, grip enumeration and jaw-contact checks.

Machine frame: the spindle runs along +z through the origin, the chuck
face sits at ``z = 0`` with the chuck body behind it (``z < 0``), and the
jaws clamp over ``0 <= z <= jaw_axial_length``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .revolve import HalfSection, annulus_section, tc_implicit, union_sections
from .solids.grid import Axis, RigidTransform, VoxelGrid, transform_solid

logger = logging.getLogger(__name__)

_Z = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True, eq=False)
class ChuckModel:
    jaw_count: int
    jaw_axial_length: float
    grip_radius_range: Tuple[float, float]
    min_contact_length: float
    min_angular_coverage: float
    body: Optional[VoxelGrid] = None
    jaw_height: float = 0.0

    def __post_init__(self):
        r_min, r_max = self.grip_radius_range
        if self.jaw_count < 2:
            raise ValueError("a chuck needs at least two jaws")
        if not r_min < r_max:
            raise ValueError("grip radius range must satisfy r_min < r_max")
        if self.min_contact_length > self.jaw_axial_length:
            raise ValueError("min_contact_length exceeds the jaw length")
        if self.jaw_height < 0:
            raise ValueError("jaw_height must be non-negative")


@dataclass(frozen=True)
class GripConfig:
    """Screw displacement along/about the spindle, optionally followed by a flip.

    The flip is a half turn about the x axis through the mid-plane
    ``z = pivot + z_offset`` of the screwed part, so along the spindle a
    flipped grip maps ``z -> 2*pivot + z_offset - z``.
    """

    z_offset: float
    spin: float
    flipped: bool
    pivot: float = 0.0

    def screw(self) -> RigidTransform:
        return (RigidTransform.translate([0.0, 0.0, self.z_offset])
                @ RigidTransform.about_axis(np.zeros(3), _Z, self.spin))

    def transform(self) -> RigidTransform:
        s = self.screw()
        if not self.flipped:
            return s
        return flip_transform(self.pivot + self.z_offset) @ s

    def z_map(self) -> Tuple[bool, float]:
        """``(flip, shift)`` with ``z_fix = (-z if flip else z) + shift``."""
        if self.flipped:
            return True, 2 * self.pivot + self.z_offset
        return False, self.z_offset

    def to_json(self):
        return {"z_offset": _r(self.z_offset), "spin": _r(self.spin),
                "flipped": self.flipped, "pivot": _r(self.pivot)}


def flip_transform(pivot_z: float) -> RigidTransform:
    """Half turn about the x-parallel line through ``(0, 0, pivot_z)``."""
    return RigidTransform.about_axis([0.0, 0.0, pivot_z], [1.0, 0.0, 0.0], math.pi)


@dataclass(frozen=True)
class JawContact:
    angle: float
    radius: Optional[float]
    length: float
    coverage: float
    segments: List[Tuple[float, float]]
    passed: bool

    def to_json(self):
        return {"angle": _r(self.angle),
                "radius": None if self.radius is None else _r(self.radius),
                "length": _r(self.length), "coverage": _r(self.coverage),
                "segments": [[_r(a), _r(b)] for a, b in self.segments],
                "passed": self.passed}


@dataclass(frozen=True)
class ContactReport:
    passed: bool
    jaws: List[JawContact]

    @property
    def grip_radius(self) -> Optional[float]:
        radii = [j.radius for j in self.jaws if j.radius is not None]
        return min(radii) if radii else None

    def to_json(self):
        return {"passed": self.passed, "jaws": [j.to_json() for j in self.jaws]}


@dataclass(frozen=True, eq=False)
class FixtureConfig:
    id: str
    init: RigidTransform
    grip: GripConfig
    fix: RigidTransform
    contact: Optional[ContactReport] = field(default=None)

    @classmethod
    def compose(cls, id: str, init: RigidTransform, grip: GripConfig,
                contact: Optional[ContactReport] = None) -> "FixtureConfig":
        return cls(id, init, grip, grip.transform() @ init, contact)

    def to_json(self):
        out = {"id": self.id, "grip": self.grip.to_json(), "init": self.init.to_json(),
               "fix": self.fix.to_json()}
        if self.contact is not None:
            out["contact"] = self.contact.to_json()
        return out


def _r(x: float) -> float:
    return float(f"{x:.9g}")


def spindle_transform(axis: Axis) -> RigidTransform:
    """``p -> R (p - axis.point)`` with ``R`` taking the axis direction onto +z."""
    rot = RigidTransform.aligning(axis.direction, _Z)
    return rot @ RigidTransform.translate(-axis.point)


def align_to_spindle(part: VoxelGrid, axis: Axis) -> Tuple[VoxelGrid, RigidTransform]:
    t = spindle_transform(axis)
    if t.is_identity(0.0):
        return part, t
    return transform_solid(part, t), t


def _z_extent(part: VoxelGrid, pixel: float) -> Tuple[float, float]:
    lo, hi = part.occupied_bounds()
    return math.floor(lo[2] / pixel + 1e-9) * pixel, math.ceil(hi[2] / pixel - 1e-9) * pixel


def radius_profile(part: VoxelGrid) -> np.ndarray:
    """Largest occupied cell-center radius about the z axis per z layer (NaN if empty)."""
    idx = np.argwhere(part.data)
    pts = part.origin + idx * part.spacing
    r = np.hypot(pts[:, 0], pts[:, 1])
    out = np.full(part.dims[2], np.nan)
    np.fmax.at(out, idx[:, 2], r)
    return out


def enumerate_grips(part_init: VoxelGrid, chuck: ChuckModel, z_step: float, phi_step: float,
                    pixel: Optional[float] = None, spin_invariant: Optional[bool] = None,
                    spin_tol: float = 0.02) -> List[GripConfig]:
    """Unvalidated lattice of grips placing the part in the jaw window.

    Offsets are chosen so the part's lowest point lands on
    ``0, z_step, 2*z_step, ...`` below ``jaw_axial_length`` (never inside the
    chuck face).  Spins cover one jaw period in ``phi_step`` increments and
    collapse to ``0`` for spin-invariant parts.
    """
    if not (z_step > 0 and phi_step > 0):
        raise ValueError("grip lattice steps must be positive")
    if part_init.is_empty():
        return []
    pixel = pixel or part_init.spacing
    r_prof = radius_profile(part_init)
    r_min, r_max = chuck.grip_radius_range
    outer = r_prof[~np.isnan(r_prof)]
    if outer.min() - part_init.spacing > r_max or outer.max() + part_init.spacing < r_min:
        return []
    if spin_invariant is None:
        rep_gamma = _spin_gamma(part_init, pixel)
        spin_invariant = rep_gamma >= 1.0 - spin_tol
    step = max(1, int(round(z_step / pixel))) * pixel
    zlo, zhi = _z_extent(part_init, pixel)
    pivot = 0.5 * (zlo + zhi)
    if spin_invariant:
        spins = [0.0]
    else:
        period = 2 * math.pi / chuck.jaw_count
        spins = [k * phi_step for k in range(int(math.ceil(period / phi_step - 1e-9)))]
    grips = []
    for flipped in (False, True):
        m = 0
        while m * step < chuck.jaw_axial_length - 1e-9:
            z_off = m * step - zlo
            for phi in spins:
                grips.append(GripConfig(_snap(z_off, pixel), phi, flipped, pivot))
            m += 1
    return grips


def _snap(x, pixel):
    return round(x / pixel) * pixel


def _spin_gamma(part: VoxelGrid, pixel: float) -> float:
    tc = tc_implicit(part, Axis.z(), pixel)
    return part.volume() / tc.volume()


def validate_grip(part_fix: VoxelGrid, chuck: ChuckModel,
                  grip: Optional[GripConfig] = None) -> ContactReport:
    """Check every jaw for a long and wide enough constant-radius patch.

    ``part_fix`` must already be in its fixtured pose.  Jaw ``k`` owns the
    angular sector of half-width ``pi / jaw_count`` around ``2*pi*k/jaw_count``.
    Within the jaw's axial window it grips at the largest boundary radius
    in its sector; boundary cells within one voxel of that radius form the
    contact.  Contact length is the total extent of occupied z layers and
    coverage the total angle of occupied arc bins, so the patch may be
    split into several pieces.
    """
    spacing = part_fix.spacing
    pts = part_fix.origin + np.argwhere(part_fix.boundary_mask()) * spacing
    z = pts[:, 2]
    win = (z >= -1e-9) & (z <= chuck.jaw_axial_length + 1e-9)
    pts = pts[win]
    z = z[win]
    r = np.hypot(pts[:, 0], pts[:, 1])
    theta = np.arctan2(pts[:, 1], pts[:, 0])
    r_min, r_max = chuck.grip_radius_range
    half = math.pi / chuck.jaw_count
    jaws = []
    for k in range(chuck.jaw_count):
        alpha = 2 * math.pi * k / chuck.jaw_count
        dtheta = (theta - alpha + math.pi) % (2 * math.pi) - math.pi
        # cells on a sector edge belong to both neighbours
        sector = np.abs(dtheta) <= half + 1e-9
        if not sector.any():
            jaws.append(JawContact(alpha, None, 0.0, 0.0, [], False))
            continue
        r_grip = float(r[sector].max())
        touch = sector & (r >= r_grip - spacing)
        layers = np.unique(np.floor(z[touch] / spacing).astype(np.int64))
        length = len(layers) * spacing
        segments = _runs(layers, spacing)
        bin_width = spacing / max(r_grip, spacing)
        # nudge so cells exactly on a bin edge land alike for every jaw
        arcs = np.unique(np.floor(dtheta[touch] / bin_width + 1e-6).astype(np.int64))
        coverage = min(len(arcs) * bin_width, 2 * half)
        in_range = r_min - spacing <= r_grip <= r_max + spacing
        ok = (in_range and length >= chuck.min_contact_length - 1e-9
              and coverage >= chuck.min_angular_coverage - 1e-12)
        jaws.append(JawContact(alpha, r_grip, length, coverage, segments, ok))
    return ContactReport(all(j.passed for j in jaws), jaws)


def _runs(layers: np.ndarray, spacing: float) -> List[Tuple[float, float]]:
    if len(layers) == 0:
        return []
    breaks = np.flatnonzero(np.diff(layers) > 1)
    starts = np.concatenate([[layers[0]], layers[breaks + 1]])
    ends = np.concatenate([layers[breaks], [layers[-1]]])
    return [(float(s * spacing), float((e + 1) * spacing)) for s, e in zip(starts, ends)]


def fixture_configs(part: VoxelGrid, axis: Axis, chuck: ChuckModel, z_step: float,
                    phi_step: float, pixel: Optional[float] = None,
                    limit: Optional[int] = None) -> List[FixtureConfig]:
    """Validated fixtures for one candidate axis, in lattice order.

    Each fixtured pose is resampled in one shot from the input part so
    only one nearest-cell resampling error enters the contact check.
    """
    pixel = pixel or part.spacing
    part_init, init = align_to_spindle(part, axis)
    grips = enumerate_grips(part_init, chuck, z_step, phi_step, pixel)
    out = []
    for grip in grips:
        fix = grip.transform() @ init
        part_fix = transform_solid(part, fix)
        report = validate_grip(part_fix, chuck, grip)
        if report.passed:
            out.append(FixtureConfig(f"f{len(out):03d}", init, grip, fix, report))
            if limit is not None and len(out) >= limit:
                break
    logger.info("%d of %d grips pass the jaw-contact check", len(out), len(grips))
    return out


def chuck_section(chuck: ChuckModel, pixel: float, grip_radius: Optional[float] = None,
                  frame=None) -> Optional[HalfSection]:
    """Revolved chuck: body plus the jaws closed onto ``grip_radius``.

    The jaws become an annulus from the gripped surface outwards by
    ``jaw_height`` over the jaw window.  Returns None when the chuck has no
    solid at all.
    """
    parts = []
    if chuck.body is not None and not chuck.body.is_empty():
        parts.append(tc_implicit(chuck.body, Axis.z(), pixel))
    if grip_radius is not None and chuck.jaw_height > 0:
        r0 = grip_radius + 0.5 * pixel
        parts.append(annulus_section(Axis.z(), pixel, (0.0, chuck.jaw_axial_length),
                                     (r0, r0 + chuck.jaw_height)))
    if not parts:
        return None
    out = union_sections(*parts)
    if frame is not None:
        out = out.reframe(*frame)
    return out
