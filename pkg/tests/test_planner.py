import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import section, synthetic_action, unit_pixel
from oracles import annulus_units, brute_force_plan
from turnplan.errors import FrameMismatchError, InfeasibleError, IntegrityError
from turnplan.planner import (PlanState, as_turned, infer_stock, plan_cost, search_plans,
                              step_removed_volume, turnability_test)
from turnplan.revolve import annulus_section, revolve_volume
from turnplan.solids import Axis

U = unit_pixel()


def column_mask(nz, nr, rows, col=0):
    m = np.zeros((nz, nr), bool)
    m[list(rows), col] = True
    return m


# -- stock -------------------------------------------------------------------

def test_infer_stock_allowances():
    tc = annulus_section(Axis.z(), 1.0, (0.0, 50.0), (0.0, 10.0))
    st_ = infer_stock(tc, 2.0, 5.0)
    assert st_.radius == 12.0
    assert st_.z_range == (-5.0, 55.0)
    assert revolve_volume(st_.section) == pytest.approx(math.pi * 144 * 60, rel=1e-12)
    assert not np.any(tc.reframe_like(st_.section).data & ~st_.section.data)


def test_infer_stock_tight():
    tc = annulus_section(Axis.z(), 0.5, (1.0, 4.0), (0.0, 2.0))
    st_ = infer_stock(tc)
    s = st_.section
    t = tc.reframe_like(s)
    assert not np.any(t.data & ~s.data)
    outer = s.data.any(axis=0).nonzero()[0].max()
    assert np.array_equal(s.data[:, outer], t.data[:, outer])


def test_infer_stock_fills_holes():
    tc = annulus_section(Axis.z(), 0.5, (0.0, 4.0), (0.0, 3.0))
    data = tc.data.copy()
    data[3:5, 2:4] = False
    st_ = infer_stock(tc.with_data(data))
    rows = st_.section.data[st_.section.data.any(axis=1)]
    assert rows.all(axis=0)[: int(3.0 / 0.5)].all()


def test_infer_stock_rejects():
    tc = annulus_section(Axis.z(), 1.0, (0.0, 2.0), (0.0, 1.0))
    with pytest.raises(ValueError):
        infer_stock(tc, -1.0, 0.0)
    with pytest.raises(ValueError):
        infer_stock(tc.with_data(np.zeros(tc.dims, bool)))


# -- as-turned shape and the turnability test ---------------------------------

def test_as_turned_cases():
    s = section(6, 4, U, data=np.ones((6, 4), bool))
    tc = s.with_data(column_mask(6, 4, range(6), 0))
    assert as_turned(s, []) == s
    perfect = synthetic_action("a", s, s.data & ~tc.data)
    assert as_turned(s, [perfect]) == tc


def test_as_turned_order_free():
    rng = np.random.default_rng(4)
    s = section(8, 5, U, data=np.ones((8, 5), bool))
    acts = [synthetic_action(f"a{i}", s, rng.random((8, 5)) < 0.3) for i in range(5)]
    ref = as_turned(s, acts)
    for _ in range(10):
        perm = list(rng.permutation(5))
        assert as_turned(s, [acts[i] for i in perm]) == ref


def test_as_turned_frame_mismatch():
    s = section(4, 4, U, data=np.ones((4, 4), bool))
    other = section(5, 4, U)
    with pytest.raises(FrameMismatchError):
        as_turned(s, [synthetic_action("a", other, np.ones((5, 4), bool))])


def test_turnability_exact():
    tc = annulus_section(Axis.z(), 0.1, (0.0, 1.0), (0.0, 10.0))
    res = turnability_test(tc, tc, 0.0)
    assert res.passed and res.residual == 0.0


def test_turnability_single_annular_pixel():
    d = 0.1
    tc = annulus_section(Axis.z(), d, (0.0, 1.0), (0.0, 10.0)).reframe(-1, 12, 102)
    extra = tc.data.copy()
    extra[5, 100] = True
    res = turnability_test(tc.with_data(extra), tc, 0.0)
    expected = 2 * math.pi * 10 * d * d
    assert res.residual == pytest.approx(expected, rel=0.01)
    assert res.residual == pytest.approx(math.pi * d ** 3 * 201, rel=1e-12)
    assert not res.passed
    assert turnability_test(tc.with_data(extra), tc, 0.64).passed
    assert not turnability_test(tc.with_data(extra), tc, 0.6).passed


def test_unreachable_groove_is_residual():
    stock = section(10, 5, U, data=np.ones((10, 5), bool))
    tc_data = stock.data.copy()
    tc_data[4:6, 2:4] = False
    tc = stock.with_data(tc_data)
    res = turnability_test(stock, tc, 1.0)
    groove = annulus_units(stock.data & ~tc_data)
    assert res.residual == pytest.approx(groove * math.pi * U ** 3, rel=1e-12)
    assert not res.passed


def test_gouged_closure_raises():
    tc = section(6, 6, U, data=np.ones((6, 6), bool))
    cut = tc.data.copy()
    cut[3, 2] = False
    with pytest.raises(IntegrityError):
        turnability_test(tc.with_data(cut), tc, 100.0)
    rim = tc.data.copy()
    rim[0, 5] = False
    turnability_test(tc.with_data(rim), tc, 100.0)


# -- per-step volumes ----------------------------------------------------------

def test_step_volumes():
    s = section(20, 4, U, data=np.ones((20, 4), bool))
    q1 = synthetic_action("a1", s, column_mask(20, 4, range(5)))
    q2 = synthetic_action("a2", s, column_mask(20, 4, range(10)))
    far = synthetic_action("a3", s, np.zeros((20, 4), bool))
    fresh = PlanState(0, s, 0.0)
    assert step_removed_volume(fresh, far) == 0.0
    assert step_removed_volume(fresh, q1) == pytest.approx(5.0)
    after2 = PlanState(0b10, as_turned(s, [q2]), 20.0)
    assert step_removed_volume(after2, q1, index=0) == 0.0
    with pytest.raises(ValueError):
        step_removed_volume(after2, q2, index=1)


# -- plan costs -----------------------------------------------------------------

def _nested():
    s = section(30, 2, U, data=np.ones((30, 2), bool))
    tc = s.with_data(column_mask(30, 2, range(30), 1))
    q1 = synthetic_action("a1", s, column_mask(30, 2, range(10)), rate=1.0)
    q2 = synthetic_action("a2", s, column_mask(30, 2, range(30)), rate=2.0)
    return s, tc, q1, q2


def test_single_action_cost():
    s = section(10, 2, U, data=np.ones((10, 2), bool))
    a = synthetic_action("a", s, column_mask(10, 2, range(10)))
    plan = plan_cost([a], s)
    assert plan.total_cost == pytest.approx(10.0)
    assert plan.step_volumes == pytest.approx((10.0,))


def test_nested_orders():
    s, tc, q1, q2 = _nested()
    assert plan_cost([q1, q2], s).total_cost == pytest.approx(50.0)
    assert plan_cost([q2, q1], s).total_cost == pytest.approx(60.0)
    best = search_plans([q1, q2], s, tc, 0.0)[0]
    assert best.action_ids == ("a1", "a2")
    assert best.total_cost == pytest.approx(50.0)


def test_equal_rates_order_free():
    rng = np.random.default_rng(9)
    s = section(6, 5, U, data=np.ones((6, 5), bool))
    acts = [synthetic_action(f"a{i}", s, rng.random((6, 5)) < 0.5, rate=1.5) for i in range(3)]
    costs = {round(plan_cost(list(p), s).total_cost, 9) for p in itertools.permutations(acts)}
    assert len(costs) == 1


def test_setup_cost_counts_changes():
    s = section(6, 2, U, data=np.ones((6, 2), bool))
    a = synthetic_action("a", s, column_mask(6, 2, [0]), fid="f0")
    b = synthetic_action("b", s, column_mask(6, 2, [1]), fid="f1")
    c = synthetic_action("c", s, column_mask(6, 2, [2]), fid="f0")
    plan = plan_cost([a, b, c], s, setup_cost=7.0)
    assert plan.fixture_changes == 2
    assert plan.total_cost == pytest.approx(3.0 + 14.0)
    assert plan.total_cost == pytest.approx(sum(plan.step_costs) + sum(plan.setup_costs))


def test_infeasible_subset_raises():
    s, tc, q1, _ = _nested()
    with pytest.raises(InfeasibleError):
        plan_cost([q1], s, tc=tc, tol=0.0)


# -- plan search ----------------------------------------------------------------

def test_forced_single_plan():
    s, tc, _, q2 = _nested()
    plans = search_plans([q2], s, tc, 0.0)
    assert len(plans) == 1 and plans[0].action_ids == ("a2",)
    assert plans[0].total_cost == pytest.approx(60.0)


def test_symmetric_tie_top_two():
    s, tc, _, q2 = _nested()
    twin = synthetic_action("a0", s, q2.mtv.data, rate=2.0)
    plans = search_plans([q2, twin], s, tc, 0.0, k=2)
    assert [p.action_ids for p in plans] == [("a0",), ("a2",)]
    assert plans[0].total_cost == plans[1].total_cost


def test_infeasible_reports_region():
    s, tc, q1, _ = _nested()
    with pytest.raises(InfeasibleError) as info:
        search_plans([q1], s, tc, 0.5)
    err = info.value
    assert err.residual_mm3 == pytest.approx(20.0)
    assert err.bbox["r"] == [0.0, pytest.approx(U)]
    assert err.bbox["z"] == [pytest.approx(10 * U), pytest.approx(30 * U)]


def test_bad_k():
    s, tc, q1, q2 = _nested()
    with pytest.raises(ValueError):
        search_plans([q1, q2], s, tc, 0.0, k=0)


def _instance(rng, n, nz=5, nr=4):
    """Random safe scene: MTVs never touch the closure."""
    stock = np.ones((nz, nr), bool)
    profile = rng.integers(1, nr, size=nz)
    tc = np.arange(nr)[None, :] < profile[:, None]
    outside = stock & ~tc
    masks = [outside & (rng.random((nz, nr)) < 0.55) for _ in range(n)]
    rates = [float(rng.choice([0.5, 1.0, 2.0, 3.0])) for _ in range(n)]
    fids = [str(rng.choice(["f0", "f1"])) for _ in range(n)]
    tol_units = int(rng.integers(0, 4))
    return stock, tc, masks, rates, fids, tol_units


def _actions(stock, masks, rates, fids):
    s = section(*stock.shape, U, data=stock)
    return s, [synthetic_action(f"a{i}", s, m, r, f) for i, (m, r, f) in
               enumerate(zip(masks, rates, fids))]


@pytest.mark.parametrize("seed", range(12))
@pytest.mark.parametrize("setup", [0.0, 2.5])
def test_search_matches_exhaustive(seed, setup):
    rng = np.random.default_rng(seed)
    stock, tc, masks, rates, fids, tol_units = _instance(rng, int(rng.integers(1, 6)))
    best, order = brute_force_plan(masks, rates, fids, stock, tc, tol_units, setup)
    s, acts = _actions(stock, masks, rates, fids)
    tcs = s.with_data(tc)
    if order is None:
        with pytest.raises(InfeasibleError):
            search_plans(acts, s, tcs, float(tol_units), setup_cost=setup)
        return
    plan = search_plans(acts, s, tcs, float(tol_units), setup_cost=setup)[0]
    assert plan.total_cost == pytest.approx(best, rel=1e-9, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_heuristic_never_overestimates(seed):
    rng = np.random.default_rng(seed)
    stock, tc, masks, rates, fids, tol_units = _instance(rng, int(rng.integers(2, 5)))
    n = len(masks)
    for applied in itertools.product([False, True], repeat=n):
        work = stock.copy()
        for m, on in zip(masks, applied):
            if on:
                work &= ~m
        rest = [i for i in range(n) if not applied[i]]
        opt, order = brute_force_plan([masks[i] for i in rest], [rates[i] for i in rest],
                                      ["f"] * len(rest), work, tc, tol_units, 0.0)
        need = max(0, annulus_units(work & ~tc) - tol_units)
        h = need * min(rates[i] for i in rest) if rest and need else (0.0 if not need else math.inf)
        assert h <= opt + 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_more_actions_never_cost_more(seed):
    rng = np.random.default_rng(seed)
    stock, tc, masks, rates, fids, tol_units = _instance(rng, 4)
    s, acts = _actions(stock, masks, rates, fids)
    tcs = s.with_data(tc)
    try:
        few = search_plans(acts[:3], s, tcs, float(tol_units), setup_cost=1.0)[0].total_cost
    except InfeasibleError:
        few = math.inf
    try:
        more = search_plans(acts, s, tcs, float(tol_units), setup_cost=1.0)[0].total_cost
    except InfeasibleError:
        assert few == math.inf
        return
    assert more <= few + 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_removed_volume_is_order_free(seed):
    rng = np.random.default_rng(seed)
    stock, tc, masks, rates, fids, _ = _instance(rng, 4)
    s, acts = _actions(stock, masks, rates, fids)
    target = revolve_volume(s.difference(as_turned(s, acts)))
    for _ in range(4):
        perm = [acts[i] for i in rng.permutation(4)]
        plan = plan_cost(perm, s)
        assert math.fsum(plan.step_volumes) == pytest.approx(target, rel=1e-12, abs=1e-12)
        assert all(v >= 0 for v in plan.step_volumes)


def test_top_k_distinct_and_sorted():
    rng = np.random.default_rng(5)
    stock, tc, masks, rates, fids, tol_units = _instance(rng, 5)
    s, acts = _actions(stock, masks, rates, fids)
    plans = search_plans(acts, s, s.with_data(tc), float(tol_units), k=4, setup_cost=1.0)
    assert len(plans) == 4
    costs = [p.total_cost for p in plans]
    assert costs == sorted(costs)
    # alternatives differ in their action set or fixture sequence, never by reordering alone
    keys = [(frozenset(p.action_ids), tuple(k for k, _ in itertools.groupby(p.fixtures)))
            for p in plans]
    assert len(set(keys)) == len(keys)
