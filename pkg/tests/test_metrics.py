import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import mc_hypervolume
from prodplan.instance import Cluster, ProblemInstance, Resource, Task
from prodplan.metrics import KpiPoint, compare_fronts, hypervolume, improvement_rate, kpis, pareto_filter, utility
from prodplan.qubo import Allocation, Batch
from prodplan.scheduler import Schedule


def P(f, l):
    return KpiPoint(f, l)


def _inst(weights, dues):
    tasks = tuple(Task(0, i, w, d) for i, (w, d) in enumerate(zip(weights, dues)))
    return ProblemInstance((Cluster(0, tasks),), (Resource(0, 20),), ((len(weights),),))


def test_kpis_single_batch():
    inst = _inst([10, 8], [10, 12])
    alloc = Allocation((Batch(0, 0, 0, (0, 1)),))
    k = kpis(alloc, Schedule({(0, 0, 0): 10.0}, {}, 2.0), inst)
    assert k.filling_ratio == 0.9 and k.lead_time == 2.0


def test_kpis_mean_over_used_batches():
    inst = _inst([10, 8, 6], [5, 5, 9])
    alloc = Allocation((Batch(0, 0, 0, (0, 1)), Batch(0, 0, 1, (2,))))
    sched = Schedule({(0, 0, 0): 5.0, (0, 0, 1): 9.0}, {}, 0.0)
    k = kpis(alloc, sched, inst)
    assert k.filling_ratio == pytest.approx(0.6) and k.lead_time == 0
    assert kpis(alloc, sched, inst, fill_aggregate="min").filling_ratio == pytest.approx(0.3)
    # relabeling batches changes nothing
    swapped = Allocation((Batch(0, 0, 1, (0, 1)), Batch(0, 0, 0, (2,))))
    sched2 = Schedule({(0, 0, 1): 5.0, (0, 0, 0): 9.0}, {}, 0.0)
    assert kpis(swapped, sched2, inst).coords() == k.coords()


def test_kpis_fill_is_exact():
    # 0.1 + 0.2 style float drift must not split equal fills
    inst = _inst([2, 4, 6], [1, 1, 1])
    one = Allocation((Batch(0, 0, 0, (0, 1)), Batch(0, 0, 1, (2,))))
    two = Allocation((Batch(0, 0, 0, (0, 2)), Batch(0, 0, 1, (1,))))
    s = Schedule({(0, 0, 0): 1.0, (0, 0, 1): 1.0}, {}, 0.0)
    assert kpis(one, s, inst).filling_ratio == kpis(two, s, inst).filling_ratio == 0.3


def test_kpis_errors():
    inst = _inst([3], [3])
    with pytest.raises(ValueError):
        kpis(Allocation(()), Schedule({}, {}, 0.0), inst)
    alloc = Allocation((Batch(0, 0, 0, (0,)),))
    with pytest.raises(ValueError):
        kpis(alloc, Schedule({(0, 0, 0): 3.0}, {}, 0.0), inst, fill_aggregate="max")


def test_pareto_filter_examples():
    assert pareto_filter([P(0.8, 5), P(0.9, 10)]) == [P(0.9, 10), P(0.8, 5)]
    # higher fill and lower lead: not a trade-off
    assert pareto_filter([P(0.9, 5), P(0.8, 10)]) == [P(0.9, 5)]
    assert pareto_filter([P(0.8, 5), P(0.9, 5)]) == [P(0.9, 5)]
    assert pareto_filter([P(0.5, 1), P(0.5, 1), P(0.5, 2)]) == [P(0.5, 1)]
    assert pareto_filter([]) == []


def quadratic_front(points):
    out = []
    for p in points:
        if not any(q.dominates(p) for q in points) and p.coords() not in [o.coords() for o in out]:
            out.append(p)
    return sorted(out, key=lambda p: -p.filling_ratio)


def test_pareto_filter_matches_quadratic_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        pts = [P(float(f), float(l)) for f, l in zip(rng.integers(0, 10, 100) / 10, rng.integers(0, 30, 100))]
        assert [p.coords() for p in pareto_filter(pts)] == [p.coords() for p in quadratic_front(pts)]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 50)), max_size=30))
def test_pareto_filter_is_an_antichain_covering_the_input(raw):
    pts = [P(f, l) for f, l in raw]
    front = pareto_filter(pts)
    assert not any(a.dominates(b) for a in front for b in front)
    for p in pts:
        assert any(q.dominates(p) or q.coords() == p.coords() for q in front)
    assert [p.filling_ratio for p in front] == sorted((p.filling_ratio for p in front), reverse=True)


def test_utility():
    assert utility(5, 10) == 0.5
    assert utility(0, 0) == 1.0
    with pytest.raises(ValueError):
        utility(1, 0)
    with pytest.raises(ValueError):
        utility(11, 10)


def test_hypervolume_examples():
    assert hypervolume([P(1.0, 0)], 7) == 1.0
    assert hypervolume([], 3) == 0.0
    assert hypervolume([P(0.9, 5), P(0.5, 1)], 10) == pytest.approx(0.65)
    p, se = mc_hypervolume([(0.9, 0.5), (0.5, 0.9)], 1_000_000, np.random.default_rng(1))
    assert abs(0.65 - p) <= 3 * se
    with pytest.raises(ValueError):
        hypervolume([P(0.5, 2)], 0)


def random_front(rng, size):
    return [P(float(rng.random()), float(rng.random() * 20)) for _ in range(size)]


def test_hypervolume_matches_monte_carlo():
    rng = np.random.default_rng(2)
    for _ in range(10):
        pts = random_front(rng, int(rng.integers(1, 21)))
        l_max = max(p.lead_time for p in pts)
        hv = hypervolume(pareto_filter(pts), l_max)
        est, se = mc_hypervolume([(p.filling_ratio, utility(p.lead_time, l_max)) for p in pts], 200_000, rng)
        assert abs(hv - est) <= 3 * se + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)), min_size=1, max_size=15),
       st.tuples(st.integers(0, 20), st.integers(0, 20)))
def test_hypervolume_monotonicity(raw, extra):
    # grid coordinates keep every added area far above rounding noise
    pts = [P(f / 20, float(l)) for f, l in raw]
    new = P(extra[0] / 20, float(extra[1]))
    l_max = 20.0
    before = hypervolume(pareto_filter(pts), l_max)
    after = hypervolume(pareto_filter(pts + [new]), l_max)
    assert 0 <= before <= 1 and 0 <= after <= 1
    covered = any(p.dominates(new) or p.coords() == new.coords() for p in pts)
    if covered:
        assert after == pytest.approx(before, abs=1e-12)
    else:
        # strictly larger unless the new point adds zero area (a coordinate at 0)
        assert after >= before - 1e-12
        if new.filling_ratio > 0 and new.lead_time < l_max:
            assert after > before


def test_hv_is_one_only_for_the_ideal_point():
    assert hypervolume([P(1.0, 0.0), P(0.4, 0.0)], 5) == 1.0
    assert hypervolume([P(0.999, 0.0)], 5) < 1.0


def test_improvement_rate():
    assert improvement_rate(0.28, 0.10) == pytest.approx(1.8)
    assert improvement_rate(0.5, 0.0) is None


def test_compare_fronts():
    a = [P(0.9, 5), P(0.5, 1)]
    same = compare_fronts({"sep": a, "base": list(a)}, "base")
    assert same.improvement == {"sep": 0.0} and same.improvement_percent("sep") == 0.0
    assert same.l_max == 5
    better = compare_fronts({"sep": [P(0.95, 4), P(0.6, 0.5)], "base": a}, "base")
    assert better.improvement["sep"] > 0
    assert better.l_max == max(p.lead_time for p in a)
    zero = compare_fronts({"sep": a, "base": [P(0.0, 5)]}, "base")
    assert zero.improvement["sep"] is None and zero.improvement_percent("sep") is None
    with pytest.raises(ValueError):
        compare_fronts({"sep": a}, "sep")
    with pytest.raises(ValueError):
        compare_fronts({"sep": a, "base": a}, "other")


def test_compare_fronts_headline_arithmetic():
    # HV 0.28 and 0.10 from single-point fronts under a shared L_max of 10
    cmp = compare_fronts({"sep": [P(0.4, 3)], "base": [P(0.2, 5), P(0.0, 10)]}, "base")
    assert cmp.hypervolumes["sep"] == pytest.approx(0.28)
    assert cmp.hypervolumes["base"] == pytest.approx(0.10)
    assert cmp.improvement_percent("sep") == pytest.approx(180.0)
