"""Turning-axis candidates: principal axes, sampling, ranking and refinement."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy import optimize

from .revolve import TurnabilityReport, turnability_ratio
from .solids.grid import Axis, VoxelGrid

logger = logging.getLogger(__name__)

PROVENANCES = ("principal", "sampled", "refined", "user")
_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class AxisCandidate:
    axis: Axis
    gamma: float
    provenance: str
    report: Optional[TurnabilityReport] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")


@dataclass(frozen=True)
class PrincipalAxes:
    axes: List[Axis]
    eigenvalues: np.ndarray
    centroid: np.ndarray
    degenerate: bool
    near_equal_pairs: List[tuple]

    def unique_index(self) -> Optional[int]:
        """Index of the eigenvalue farthest from the other two, None if isotropic."""
        if self.degenerate:
            return None
        ev = self.eigenvalues
        gaps = [min(abs(ev[i] - ev[j]) for j in range(3) if j != i) for i in range(3)]
        return int(np.argmax(gaps))


def centroid(part: VoxelGrid) -> np.ndarray:
    return part.occupied_centers().mean(axis=0)


def principal_axes(part: VoxelGrid, rel_tol: float = 1e-6) -> PrincipalAxes:
    """Eigen-decomposition of the voxel inertia tensor about the centroid.

    Axes come back ordered by ascending moment of inertia; for a long
    block the first axis runs along its longest edge.
    """
    if part.is_empty():
        raise ValueError("principal axes of an empty grid are undefined")
    pts = part.occupied_centers()
    c = pts.mean(axis=0)
    rel = pts - c
    cell = part.spacing ** 3
    second = rel.T @ rel * cell
    # every cube cell adds its own isotropic moment spacing^2 / 12 per axis
    second += np.eye(3) * len(pts) * cell * part.spacing ** 2 / 12.0
    inertia = np.trace(second) * np.eye(3) - second
    vals, vecs = np.linalg.eigh(inertia)
    scale = max(abs(vals).max(), 1e-300)
    pairs = [(i, j) for i in range(3) for j in range(i + 1, 3)
             if abs(vals[i] - vals[j]) <= rel_tol * scale]
    degenerate = len(pairs) == 3
    axes = [Axis.make(c, vecs[:, k]).canonical() for k in range(3)]
    return PrincipalAxes(axes, vals, c, degenerate, pairs)


def sphere_directions(n: int, seed: int = 0) -> np.ndarray:
    """Golden-spiral directions on the upper hemisphere (one per line)."""
    i = np.arange(n)
    z = 1.0 - (i + 0.5) / n
    phase = (seed * 0.6180339887498949) % 1.0 * 2 * math.pi
    phi = i * _GOLDEN_ANGLE + phase
    s = np.sqrt(np.clip(1 - z * z, 0, None))
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), z])


def sample_axes(part: VoxelGrid, n_dirs: int, n_offsets: int = 1, seed: int = 0) -> List[Axis]:
    """Sampled candidate axes.

    ``n_dirs`` hemisphere directions times ``n_offsets`` points on a square
    lattice across the part's cross-section perpendicular to each
    direction, nearest-to-centroid first.  Lines that coincide up to
    direction sign are kept once.
    """
    if n_dirs < 1:
        raise ValueError("n_dirs must be at least 1")
    if part.is_empty():
        return []
    c = centroid(part)
    corners = part.occupied_corners()
    dirs = sphere_directions(n_dirs, seed)
    out: List[Axis] = []
    for d in dirs:
        base = Axis.make(c, d).canonical()
        for p in _offset_points(base, corners, n_offsets):
            cand = Axis(p, base.direction)
            if not any(_same_line(cand, o) for o in out):
                out.append(cand)
    return out


def _offset_points(axis: Axis, corners: np.ndarray, n: int) -> List[np.ndarray]:
    if n <= 1:
        return [axis.point]
    e1, e2 = axis.basis()
    rel = corners - axis.point
    ext1 = np.abs(rel @ e1).max()
    ext2 = np.abs(rel @ e2).max()
    side = int(math.ceil(math.sqrt(n)))
    if side % 2 == 0:
        side += 1
    half = side // 2
    grid = [(a, b) for a in range(-half, half + 1) for b in range(-half, half + 1)]
    grid.sort(key=lambda ab: (ab[0] ** 2 + ab[1] ** 2, ab))
    step1 = ext1 / (half + 1)
    step2 = ext2 / (half + 1)
    return [axis.point + a * step1 * e1 + b * step2 * e2 for a, b in grid[:n]]


def _same_line(a: Axis, b: Axis, ang_tol: float = 1e-9, dist_tol: float = 1e-9) -> bool:
    if a.angle_to(b) > ang_tol:
        return False
    rel = b.point - a.point
    perp = rel - (rel @ a.direction) * a.direction
    return float(np.linalg.norm(perp)) <= dist_tol * max(1.0, float(np.linalg.norm(rel)))


def angular_distance(axis: Axis, principal: Sequence[Axis]) -> float:
    return min(axis.angle_to(p) for p in principal)


def rank_candidates(cands: Sequence, principal: Sequence[Axis], k: int) -> list:
    """Shortlist of the ``k`` candidates closest in direction to a principal axis.

    Accepts :class:`Axis` or :class:`AxisCandidate` items; the sort is stable.
    """
    if k < 1:
        raise ValueError("k must be at least 1")

    def key(item):
        ax = item.axis if isinstance(item, AxisCandidate) else item
        return angular_distance(ax, principal)

    return sorted(cands, key=key)[:k]


def evaluate_axes(part: VoxelGrid, axes: Iterable[Axis], pixel: float, provenance: str,
                  workers: int = 1) -> List[AxisCandidate]:
    axes = list(axes)

    def one(ax):
        rep = turnability_ratio(part, ax, pixel)
        return AxisCandidate(ax, rep.gamma, provenance, rep)

    if workers > 1 and len(axes) > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, axes))
    return [one(ax) for ax in axes]


def refine_axis(part: VoxelGrid, seed: Axis, budget: int, pixel: Optional[float] = None,
                step_angle: float = 0.1, step_offset: Optional[float] = None) -> AxisCandidate:
    """Nelder-Mead search around ``seed`` maximising the turnability ratio.

    Parameters are two tilts of the direction and two offsets of the axis
    point inside the plane through the centroid perpendicular to the seed.
    At most ``budget`` ratio evaluations are spent, the first on the seed
    itself; the best axis seen is returned, so the result is never worse
    than the seed.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    pixel = pixel or part.spacing
    step_offset = step_offset if step_offset is not None else 2 * part.spacing
    c = centroid(part)
    d0 = seed.direction
    e1, e2 = seed.basis()
    p0 = seed.point + ((c - seed.point) @ d0) * d0

    def make(x):
        d = d0 + x[0] * e1 + x[1] * e2
        return Axis.make(p0 + x[2] * e1 + x[3] * e2, d)

    evals = {"n": 0}
    best = {"gamma": -np.inf, "axis": seed, "report": None}

    def objective(x):
        if evals["n"] >= budget:
            return -best["gamma"] + 1.0
        evals["n"] += 1
        ax = seed if not np.any(x) else make(x)
        rep = turnability_ratio(part, ax, pixel)
        if rep.gamma_raw > best["gamma"]:
            best.update(gamma=rep.gamma_raw, axis=ax, report=rep)
        return -rep.gamma_raw

    x0 = np.zeros(4)
    objective(x0)
    if budget > 1:
        simplex = np.vstack([x0, np.diag([step_angle, step_angle, step_offset, step_offset])])
        optimize.minimize(objective, x0, method="Nelder-Mead",
                          options={"maxfev": budget - 1, "initial_simplex": simplex,
                                   "xatol": 1e-4, "fatol": 1e-6})
    rep = best["report"]
    logger.debug("refined axis after %d evaluations: gamma %.4f", evals["n"], rep.gamma)
    return AxisCandidate(best["axis"], rep.gamma, "refined", rep)


def find_axes(part: VoxelGrid, pixel: float, n_dirs: int = 20, n_offsets: int = 1, top_k: int = 3,
              refine_budget: int = 0, user_axes: Sequence[Axis] = (), seed: int = 0,
              workers: int = 1) -> List[AxisCandidate]:
    """Candidate pipeline: principal + sampled axes, shortlisted, evaluated and refined.

    Returns every evaluated candidate sorted by decreasing ratio (ties keep
    generation order).
    """
    pa = principal_axes(part)
    sampled = sample_axes(part, n_dirs, n_offsets, seed)
    shortlist = rank_candidates(sampled, pa.axes, top_k)
    cands = evaluate_axes(part, pa.axes, pixel, "principal", workers)
    cands += evaluate_axes(part, shortlist, pixel, "sampled", workers)
    cands += evaluate_axes(part, user_axes, pixel, "user", workers)
    if refine_budget > 0:
        seeds = sorted(cands, key=lambda c: -c.gamma)[:top_k]
        cands += [refine_axis(part, s.axis, refine_budget, pixel) for s in seeds]
    order = sorted(range(len(cands)), key=lambda i: (-round(cands[i].gamma, 12), i))
    return [cands[i] for i in order]
