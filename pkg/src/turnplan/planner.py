"""Stock, as-turned shapes, plan costs and A* plan search.

Volumes of half-sections are tracked exactly as integer annulus units:
pixel column ``j`` weighs ``2*j + 1`` and one unit is ``pi * pixel**3``.
Equal volumes therefore compare equal regardless of summation order.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .actions import TurnAction
from .errors import FrameMismatchError, InfeasibleError, IntegrityError
from .revolve import HalfSection, annulus_section
from .solids.raster import erode_band

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class StockModel:
    radius: float
    z_range: Tuple[float, float]
    section: HalfSection

    def to_json(self):
        return {"radius": round(self.radius, 9),
                "z_range": [round(self.z_range[0], 9), round(self.z_range[1], 9)]}


@dataclass(frozen=True, eq=False)
class PlanState:
    mask: int
    workpiece: HalfSection
    cost: float


@dataclass(frozen=True)
class Plan:
    action_ids: Tuple[str, ...]
    step_volumes: Tuple[float, ...]
    step_costs: Tuple[float, ...]
    setup_costs: Tuple[float, ...]
    total_cost: float
    fixture_changes: int
    residual: float
    fixtures: Tuple[str, ...] = field(default=())

    def to_json(self, actions: Optional[Dict[str, TurnAction]] = None):
        steps = []
        for i, aid in enumerate(self.action_ids):
            step = {"id": aid, "step_volume_mm3": _r(self.step_volumes[i]),
                    "step_cost": _r(self.step_costs[i])}
            if actions is not None:
                step["tool"] = actions[aid].tool.name
                step["fixture"] = actions[aid].fixture.id
            steps.append(step)
        return {"actions": steps, "total_cost": _r(self.total_cost),
                "residual_mm3": _r(self.residual), "fixture_changes": self.fixture_changes}


def _r(x: float) -> float:
    return float(f"{x:.9g}")


def infer_stock(tc: HalfSection, radial_allowance: float = 0.0,
                axial_allowance: float = 0.0, margin: int = 1) -> StockModel:
    """Smallest bar around the closure's pixel extents, grown by the allowances."""
    if radial_allowance < 0 or axial_allowance < 0:
        raise ValueError("stock allowances must be non-negative")
    if tc.is_empty():
        raise ValueError("cannot infer stock for an empty closure")
    p = tc.pixel
    idx = np.argwhere(tc.data)
    z_lo = (tc.z0_index + idx[:, 0].min()) * p - axial_allowance
    z_hi = (tc.z0_index + idx[:, 0].max() + 1) * p + axial_allowance
    radius = (idx[:, 1].max() + 1) * p + radial_allowance
    k0 = int(math.floor(z_lo / p + 1e-9)) - margin
    k1 = int(math.ceil(z_hi / p - 1e-9)) + margin
    nr = int(math.ceil(radius / p - 1e-9)) + margin
    section = annulus_section(tc.axis, p, (z_lo, z_hi), (0.0, radius), frame=(k0, k1 - k0, nr))
    return StockModel(radius, (z_lo, z_hi), section)


def _section(stock) -> HalfSection:
    return stock.section if isinstance(stock, StockModel) else stock


def as_turned(stock, actions: Sequence[TurnAction]) -> HalfSection:
    """Stock minus the union of the actions' MTVs (order does not matter)."""
    s = _section(stock)
    removed = np.zeros(s.dims, dtype=bool)
    for a in actions:
        if not a.mtv.same_frame(s):
            raise FrameMismatchError(f"action {a.id}: MTV frame differs from the stock frame")
        removed |= a.mtv.data
    return s.with_data(s.data & ~removed)


@dataclass(frozen=True)
class TurnabilityResult:
    passed: bool
    residual: float


def turnability_test(p_dagger: HalfSection, tc: HalfSection, tol: float) -> TurnabilityResult:
    """Residual volume of ``p_dagger - tc`` against ``tol``.

    Raises :class:`IntegrityError` when ``tc`` pokes out of ``p_dagger``
    anywhere deeper than its one-pixel boundary band.
    """
    if not p_dagger.same_frame(tc):
        raise FrameMismatchError("as-turned shape and closure use different frames")
    missing = tc.data & ~p_dagger.data
    if np.any(missing & erode_band(tc.raster).data):
        raise IntegrityError("as-turned shape cuts into the turnable closure")
    residual = p_dagger.difference(tc).volume()
    return TurnabilityResult(residual <= tol + 1e-9 * max(1.0, tol), residual)


def step_removed_volume(state: PlanState, action: TurnAction, index: Optional[int] = None) -> float:
    """Volume an action actually cuts from the current workpiece."""
    if index is not None and state.mask >> index & 1:
        raise ValueError(f"action {action.id} is already applied")
    return state.workpiece.intersect(action.mtv).volume()


def plan_cost(order: Sequence[TurnAction], stock, setup_cost: float = 0.0,
              tc: Optional[HalfSection] = None, tol: Optional[float] = None) -> Plan:
    """Evaluate an ordered action list.

    Each step costs ``c/f`` times the volume it removes from the
    workpiece left by earlier steps; every change of fixture between
    consecutive steps adds ``setup_cost``.  With ``tc`` and ``tol`` given,
    a plan whose final shape fails the turnability test raises
    :class:`InfeasibleError`.
    """
    s = _section(stock)
    ev = _Evaluator(s, list(order))
    work = ev.stock_bits.copy()
    vols, costs, setups = [], [], []
    prev = None
    for i, a in enumerate(order):
        units = int(ev.units(work, i))
        work &= ~ev.q[i]
        vols.append(units * ev.unit)
        costs.append(a.rate * units * ev.unit)
        change = prev is not None and a.fixture.id != prev
        setups.append(setup_cost if change else 0.0)
        prev = a.fixture.id
    residual = 0.0
    if tc is not None:
        res = turnability_test(s.with_data(work.reshape(s.dims)), tc, tol or 0.0)
        residual = res.residual
        if tol is not None and not res.passed:
            raise InfeasibleError(f"plan leaves {residual:.6g} mm^3 above tolerance",
                                  residual_mm3=residual)
    total = math.fsum(costs) + math.fsum(setups)
    return Plan(tuple(a.id for a in order), tuple(vols), tuple(costs), tuple(setups), total,
                _changes(order), residual, tuple(a.fixture.id for a in order))


def _changes(order: Sequence[TurnAction]) -> int:
    return sum(1 for a, b in zip(order, order[1:]) if a.fixture.id != b.fixture.id)


class _Evaluator:
    """Flattened MTV masks and annulus weights for fast unit volumes."""

    def __init__(self, stock: HalfSection, actions: List[TurnAction]):
        for a in actions:
            if not a.mtv.same_frame(stock):
                raise FrameMismatchError(f"action {a.id}: MTV frame differs from the stock frame")
        nz, nr = stock.dims
        self.unit = math.pi * stock.pixel ** 3
        self.weights = np.tile(2 * np.arange(nr, dtype=np.int64) + 1, nz)
        self.stock_bits = stock.data.ravel().copy()
        self.q = [a.mtv.data.ravel() for a in actions]
        self.qw = np.array([q * self.weights for q in self.q]).reshape(len(actions), -1) \
            if actions else np.zeros((0, nz * nr), dtype=np.int64)

    def units(self, work: np.ndarray, i: int) -> int:
        return int(self.qw[i][work].sum())

    def all_units(self, work: np.ndarray) -> np.ndarray:
        return self.qw @ work.astype(np.int64)

    def volume_units(self, bits: np.ndarray) -> int:
        return int(self.weights[bits].sum())


def search_plans(actions: Sequence[TurnAction], stock, tc: HalfSection, tol: float,
                 k: int = 1, setup_cost: float = 0.0,
                 max_expansions: int = 1_000_000) -> List[Plan]:
    """Cheapest plans reaching a workpiece within ``tol`` of the closure.

    A* over sets of applied actions.  With a setup charge the last
    fixture is part of the state; when several plans are requested the
    whole fixture sequence is, so that plans differing only in fixture
    order are kept apart.  The heuristic charges the volume still to be
    removed above ``tol`` at the cheapest remaining rate; since no MTV
    reaches into the closure every removed unit lowers the residual, so
    it never overestimates.  Ties on cost go to the lexicographically
    smaller action-id sequence.

    Raises:
        InfeasibleError: even all actions together leave too much stock.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    s = _section(stock)
    if not tc.same_frame(s):
        raise FrameMismatchError("closure and stock use different frames")
    order = sorted(range(len(actions)), key=lambda i: actions[i].id)
    acts = [actions[i] for i in order]
    ev = _Evaluator(s, acts)
    outside = s.data.ravel() & ~tc.data.ravel()

    def residual_units(work):
        return ev.volume_units(work & outside)

    full = as_turned(s, acts)
    check = turnability_test(full, tc, tol)
    if not check.passed:
        left = full.difference(tc)
        raise InfeasibleError(
            f"no action subset turns the stock within tolerance: residual "
            f"{check.residual:.6g} mm^3 > {tol:.6g} mm^3",
            residual_mm3=check.residual, bbox=_zr_bbox(left))

    n = len(acts)
    rates = np.array([a.rate for a in acts])
    fids = [a.fixture.id for a in acts]
    tol_units = tol / ev.unit + 1e-9 * max(1.0, tol / ev.unit)

    def h(work, mask):
        need = residual_units(work) - tol_units
        if need <= 0:
            return 0.0
        free = [rates[i] for i in range(n) if not mask >> i & 1]
        return need * ev.unit * min(free) if free else math.inf

    def key(mask, seq):
        if k > 1:
            return mask, seq
        if setup_cost > 0:
            return mask, seq[-1] if seq else None
        return mask, None

    start = ev.stock_bits.copy()
    counter = itertools.count()
    heap = [(round(h(start, 0), 9), (), next(counter), 0.0, 0, start, (), ())]
    best_g = {key(0, ()): 0.0}
    closed = set()
    plans: List[Plan] = []
    expansions = 0
    while heap and len(plans) < k:
        f, ids, _, g, mask, work, path, fseq = heapq.heappop(heap)
        kk = key(mask, fseq)
        if kk in closed:
            continue
        closed.add(kk)
        if residual_units(work) <= tol_units:
            plans.append(plan_cost([acts[i] for i in path], s, setup_cost, tc, tol))
            continue
        expansions += 1
        if expansions > max_expansions:
            raise InfeasibleError(f"search exceeded {max_expansions} expansions")
        gains = ev.all_units(work)
        for i in range(n):
            if mask >> i & 1 or gains[i] == 0:
                continue
            step = rates[i] * gains[i] * ev.unit
            if path and fids[i] != fids[path[-1]]:
                step += setup_cost
            g2 = g + step
            mask2 = mask | 1 << i
            if not fseq or fseq[-1] != fids[i]:
                fseq2 = fseq + (fids[i],)
            else:
                fseq2 = fseq
            kk2 = key(mask2, fseq2)
            if kk2 in closed or best_g.get(kk2, math.inf) < g2 - 1e-12:
                continue
            best_g[kk2] = min(best_g.get(kk2, math.inf), g2)
            work2 = work & ~ev.q[i]
            path2 = path + (i,)
            heapq.heappush(heap, (round(g2 + h(work2, mask2), 9), tuple(acts[j].id for j in path2),
                                  next(counter), g2, mask2, work2, path2, fseq2))
    logger.info("plan search: %d expansions, %d plan(s)", expansions, len(plans))
    if not plans:
        raise InfeasibleError("no plan reaches the tolerance")
    return plans


def _zr_bbox(s: HalfSection):
    b = s.raster.bbox()
    if b is None:
        return None
    (z0, r0), (z1, r1) = b
    return {"z": [round(z0, 9), round(z1, 9)], "r": [round(r0, 9), round(r1, 9)]}

