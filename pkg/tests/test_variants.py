import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import edgeless_k_min, edgeless_t_min
from prmimm.corpus import toy_graph, small_graphs
from prmimm.graph import empty_graph
from prmimm.paic import (ModelError, ScenarioConfig, SeedAllocation, ratio_via_iteration,
                         trajectory)
from prmimm.rng import RngStream
from prmimm.selection import ImmParams
from prmimm.variants import (InfeasibleError, MultiItemConfig, check_feasible,
                             compose_multi_item, fixed_allocator, lower_bound_condition,
                             minimize_rounds, minimize_seed_budget, multi_item_bounds,
                             multi_item_ratio, multi_item_trajectory, promo_ratio_bounds,
                             sandwich_select)

PARAMS = ImmParams(0.3, 1)


def test_already_ahead_needs_nothing():
    g = small_graphs()["diamond"]
    cfg = ScenarioConfig(8, 8, 1, 3)
    assert minimize_seed_budget(g, cfg, params=PARAMS, rng=0).value == 0
    assert minimize_rounds(g, cfg, 2, PARAMS, 0).value == 0


def test_toy_round_minimization():
    g = toy_graph()
    cfg = ScenarioConfig(2, 8, 5, 2)
    alloc = SeedAllocation([(g.id_of(1), 1), (g.id_of(5), 1), (g.id_of(9), 2)])
    res = minimize_rounds(g, cfg, 3, rng=0, allocator=fixed_allocator(alloc), t_max=4)
    assert res.value == 2 and res.achieved_ratio == 1.0
    assert [v for v, _ in res.probes()] == [1, 2]


def test_feasibility_probe():
    e = empty_graph(5)
    cfg = ScenarioConfig(1, 4, 1, 1)
    ok = check_feasible(e, cfg, SeedAllocation([(v, 1) for v in range(4)]), 0)
    assert ok.feasible and ok.se == 0
    bad = check_feasible(e, cfg, SeedAllocation([(0, 1)]), 0)
    assert not bad.feasible and bad.sims == 2000


@pytest.mark.parametrize("d0n, d0p, z, T", [(1, 4, 2, 2), (2, 9, 8, 3), (0, 3, 1, 1),
                                            (3, 7, 10, 2)])
def test_edgeless_minimization_matches_exact_search(d0n, d0p, z, T):
    n = 8
    g = empty_graph(n)
    cfg = ScenarioConfig(d0n, d0p, z, T)
    want_k = edgeless_k_min(d0n, d0p, z, T, n)
    if want_k is None:
        with pytest.raises(InfeasibleError):
            minimize_seed_budget(g, cfg, params=PARAMS, rng=RngStream(1))
    else:
        assert minimize_seed_budget(g, cfg, params=PARAMS, rng=RngStream(1)).value == want_k
    k = 4
    want_t = edgeless_t_min(d0n, d0p, z, k, 4)
    if want_t is None:
        with pytest.raises(InfeasibleError):
            minimize_rounds(g, cfg, k, PARAMS, RngStream(2), t_max=4)
    else:
        assert minimize_rounds(g, cfg, k, PARAMS, RngStream(2), t_max=4).value == want_t


def test_infeasible_reports_best_ratio():
    g = empty_graph(3)
    cfg = ScenarioConfig(0, 100, 1, 2)
    with pytest.raises(InfeasibleError) as err:
        minimize_seed_budget(g, cfg, params=PARAMS, rng=0)
    assert err.value.best_ratio <= ratio_via_iteration(cfg, [3, 0]) < 1


def test_minimize_rounds_vector_growth_caps_horizon():
    g = empty_graph(2)
    cfg = ScenarioConfig(0, 50, (1, 1, 1), 3)
    with pytest.raises(InfeasibleError, match="up to 3"):
        minimize_rounds(g, cfg, 2, PARAMS, 0, t_max=100)


def test_bounds_collapse_without_promotion():
    cfg = ScenarioConfig(3, 9, 2, 3, promo=(0, 0, 0))
    sig = [2.0, 1.0, 0.5]
    lo, hi = promo_ratio_bounds(cfg, sig)
    exact = ratio_via_iteration(cfg, sig)
    assert lo == pytest.approx(exact, rel=1e-12) and hi == pytest.approx(exact, rel=1e-12)


def test_bounds_bracket_iteration_example():
    cfg = ScenarioConfig(2, 10, 3, 3, promo=(1, 2, 0.5))
    sig = [3.0, 2.0, 1.0]
    assert lower_bound_condition(cfg, sig)
    lo, hi = promo_ratio_bounds(cfg, sig)
    assert lo <= ratio_via_iteration(cfg, sig) <= hi


def _main_text_lower(cfg, sig):
    """The lower-bound display that drops the extra promotion term from the denominator."""
    p = cfg.promo_vector()
    denom = cfg.d0 + np.cumsum(cfg.z_vector()) + np.concatenate([[0], np.cumsum(sig)[:-1]]) \
        + np.cumsum(p)
    return (cfg.r0 + 1) * np.prod(1 + (np.asarray(sig) - p) / denom) - 1


def test_denominator_without_extra_promotion_term_is_not_a_lower_bound():
    cfg = ScenarioConfig(9.9, 10, 0, 1, promo=(1,))
    sig = [5.0]
    assert lower_bound_condition(cfg, sig)
    actual = ratio_via_iteration(cfg, sig)
    assert _main_text_lower(cfg, sig) > actual
    assert promo_ratio_bounds(cfg, sig)[0] <= actual


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_bounds_property(seed):
    gen = np.random.default_rng(seed)
    T = int(gen.integers(1, 6))
    cfg = ScenarioConfig(gen.uniform(0, 10), gen.uniform(10, 40), tuple(gen.uniform(0, 10, T)), T,
                         promo=tuple(gen.uniform(0, 5, T)))
    sig = gen.uniform(0, 6, T)
    lo, hi = promo_ratio_bounds(cfg, sig)
    r = ratio_via_iteration(cfg, sig)
    assert r <= hi + 1e-9
    if lower_bound_condition(cfg, sig):
        assert lo <= r + 1e-9


def test_sandwich_select_runs():
    g = small_graphs()["rand7"]
    cfg = ScenarioConfig(2, 10, 2, 2, promo=(1, 1))
    res = sandwich_select(g, cfg, ImmParams(0.3, 1, 2), RngStream(3), sims=500)
    assert set(res.candidates) == {"sandwich_upper", "sandwich_lower"}
    assert res.ratio == max(v[1] for v in res.candidates.values())
    assert res.extra_factor >= 1
    with pytest.raises(ModelError):
        sandwich_select(g, ScenarioConfig(2, 10, 2, 2), ImmParams(0.3, 1, 2), 0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_multi_item_composite_identity(seed):
    gen = np.random.default_rng(seed)
    T, s = int(gen.integers(1, 6)), int(gen.integers(1, 5))
    promos = gen.uniform(0, 4, (s, T)) if gen.random() < 0.5 else None
    multi = MultiItemConfig(gen.uniform(0, 10), tuple(gen.uniform(0.5, 10, s)),
                            gen.uniform(0, 10), T, None if promos is None else promos.tolist())
    sig = gen.uniform(0, 5, T)
    traj = multi_item_trajectory(multi, sig)
    cfg, report = compose_multi_item(multi)
    assert report["exact_closed_form"] == (promos is None)
    for row, state in zip(traj, trajectory(cfg, sig)):
        assert abs(row[0] - state.dn) <= 1e-12 * max(1, state.dn)
        assert abs(row[1:].sum() - state.dp) <= 1e-12 * max(1, state.dp)
    assert multi_item_ratio(multi, sig) == pytest.approx(ratio_via_iteration(cfg, sig), rel=1e-12)


def test_multi_item_bounds_and_validation():
    multi = MultiItemConfig(1, (3, 4), 2, 2, ((1, 0), (0, 1)))
    lo, hi = multi_item_bounds(multi, [2, 2])
    assert lo <= multi_item_ratio(multi, [2, 2]) <= hi
    with pytest.raises(ModelError):
        MultiItemConfig(1, (), 2, 2)
    with pytest.raises(ModelError):
        MultiItemConfig(1, (3,), 2, 2, ((1,),))
