import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from piperoute import kernels
from piperoute.errors import InvalidPath, NoPath, ParseError
from piperoute.mdp import count_elbows
from piperoute.planner import (COST_SCALE, TABLE_CONSTRAINTS, ConstraintSet, check_path, edge_cost,
                               heuristic, parse_path, path_cost, path_cost_units, plan_astar, plan_dijkstra)
from piperoute.scene import Scene, SceneConfig, generate_scene

from conftest import box, empty_scene, tiny_scene
from oracles import expanded_graph_optimum, min_axis_distance

seeds = st.integers(min_value=0, max_value=2**64 - 1)


def test_constraint_set_parsing():
    assert ConstraintSet.parse("1,2").flags == {1, 2}
    assert ConstraintSet.parse("1, 2,3").label == "1,2,3"
    for bad in ("2", "1,4", "x"):
        with pytest.raises(ValueError):
            ConstraintSet.parse(bad)


def test_edge_cost_examples():
    s = empty_scene((7, 7, 7), start=(0, 3, 3))
    assert edge_cost(s, ConstraintSet({1}), 0, (1, 3, 3), 2) == 0.5
    assert edge_cost(s, ConstraintSet({1, 2}), 0, (1, 4, 3), 2) == 5.5
    assert s.min_distance[3, 3, 3] == 3
    assert edge_cost(s, ConstraintSet({1, 2, 3}), 0, (3, 3, 3), 0) == pytest.approx(0.95)
    assert edge_cost(s, ConstraintSet({1, 2}), None, (1, 3, 3), 0) == 0.5


def test_heuristic_examples():
    assert heuristic((2, 2, 2), (2, 2, 2)) == 0
    assert heuristic((0, 0, 0), (3, 4, 5)) == 6.0


def test_straight_corridor():
    s = Scene((6, 6, 6), (0, 0, 0), (5, 0, 0))
    for plan in (plan_dijkstra, plan_astar):
        p = plan(s, ConstraintSet({1}))
        assert p.cost == 2.5 and len(p.cells) - 1 == 5


def test_blocked_end_raises_no_path():
    s = Scene((5, 5, 5), (0, 2, 2), (4, 2, 2), (box("main_beam", (2, 0, 0), (3, 5, 5)),))
    for plan in (plan_dijkstra, plan_astar):
        with pytest.raises(NoPath):
            plan(s, ConstraintSet({1}))


def test_astar_expansion_on_empty_line():
    s = Scene((12, 12, 12), (0, 6, 6), (11, 6, 6))
    p = plan_astar(s, ConstraintSet({1}))
    # nodes on the line plus at most the ring of neighbours pushed beside it
    assert p.expanded_nodes <= 12 + 4 * 12
    assert p.expanded_nodes <= plan_dijkstra(s, ConstraintSet({1})).expanded_nodes


@settings(max_examples=15)
@given(seeds, st.sampled_from(TABLE_CONSTRAINTS))
def test_planners_match_exhaustive_optimum(seed, cs):
    s = tiny_scene(seed)
    expected = expanded_graph_optimum(s, cs.elbow, cs.install)
    for plan in (plan_dijkstra, plan_astar):
        p = plan(s, cs)
        assert round(p.cost * COST_SCALE) == expected
        assert path_cost_units(s, p.cells, cs) == expected
        check_path(s, p.cells)


@settings(max_examples=10)
@given(seeds, st.sampled_from(TABLE_CONSTRAINTS))
def test_astar_dominates_and_agrees(seed, cs):
    s = generate_scene(seed, SceneConfig.smoke())
    d, a = plan_dijkstra(s, cs), plan_astar(s, cs)
    assert a.cost == pytest.approx(d.cost, abs=1e-9)
    assert a.expanded_nodes <= d.expanded_nodes


@settings(max_examples=4)
@given(st.integers(0, 2**32))
def test_heuristic_is_admissible(seed):
    s = generate_scene(seed, SceneConfig.tiny((6, 6, 4), (6, 6, 4)))
    for cs in TABLE_CONSTRAINTS:
        _, togo = expanded_graph_optimum(s, cs.elbow, cs.install, goal_dists=True)
        for (cell, _), rest in togo.items():
            if rest < (1 << 62):
                assert heuristic(cell, s.end) * COST_SCALE <= rest


def test_install_field_matches_scan(fixture_scene):
    for cell in np.argwhere(fixture_scene.occupancy == 0)[::7]:
        cell = tuple(int(v) for v in cell)
        assert fixture_scene.min_distance[cell] == min_axis_distance(fixture_scene, cell)


@given(seeds)
def test_cost_duality_with_return(seed):
    s = tiny_scene(seed)
    p = plan_dijkstra(s, ConstraintSet({1, 2, 3}))
    n_steps = len(p.cells) - 1
    S = sum(int(s.min_distance[c]) for c in p.cells[1:])
    assert p.cost == pytest.approx(0.5 * n_steps + 5 * count_elbows(p.cells) + 0.15 * S, abs=1e-9)


@given(seeds)
def test_adding_elbow_constraint_never_adds_elbows(seed):
    s = tiny_scene(seed)
    e1 = count_elbows(plan_dijkstra(s, ConstraintSet({1})).cells)
    e12 = count_elbows(plan_dijkstra(s, ConstraintSet({1, 2})).cells)
    assert e12 <= e1


def test_deterministic_tie_breaking():
    s = generate_scene(5, SceneConfig.smoke())
    for plan in (plan_dijkstra, plan_astar):
        assert plan(s, ConstraintSet({1})).cells == plan(s, ConstraintSet({1})).cells


@pytest.mark.parametrize("cs", TABLE_CONSTRAINTS, ids=lambda c: c.label)
def test_backends_identical(cs):
    if len(kernels.available()) < 2:
        pytest.skip("compiled kernels not built")
    s = generate_scene(9, SceneConfig.smoke())
    for plan in (plan_dijkstra, plan_astar):
        a = plan(s, cs, backend=kernels.get("python"))
        b = plan(s, cs, backend=kernels.get("cython"))
        assert (a.cells, a.cost, a.expanded_nodes) == (b.cells, b.cost, b.expanded_nodes)


def test_check_path_errors(fixture_scene):
    s = fixture_scene
    with pytest.raises(InvalidPath):
        check_path(s, [s.start])
    with pytest.raises(InvalidPath):
        check_path(s, [s.start, (2, 1, 1), s.end])
    with pytest.raises(InvalidPath):
        check_path(s, [s.start, (0, 2, 1), (0, 3, 1), s.end])


def test_path_file_round_trip(fixture_scene):
    p = plan_astar(fixture_scene, ConstraintSet({1, 2}))
    obj = json.loads(p.to_json())
    assert list(obj) == ["version", "algorithm", "constraints", "cells", "cost", "expanded_nodes"]
    assert obj["constraints"] == [1, 2]
    q = parse_path(p.to_json())
    assert (q.cells, q.algorithm, q.constraints, q.cost, q.expanded_nodes) == \
        (p.cells, "astar", p.constraints, p.cost, p.expanded_nodes)
    with pytest.raises(ParseError) as err:
        parse_path(json.dumps({k: v for k, v in obj.items() if k != "cells"}))
    assert err.value.field == "cells"
    with pytest.raises(ParseError):
        parse_path(json.dumps(dict(obj, algorithm="rrt")))


def test_path_cost_matches_planner(fixture_scene):
    for cs in TABLE_CONSTRAINTS:
        p = plan_dijkstra(fixture_scene, cs)
        assert path_cost(fixture_scene, p.cells, cs) == p.cost
