import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(__file__)))

from services.errors import EmptyMaximizerSet, InsufficientLength, OriginNotPercolating
from services.lattice import (
    LEFT,
    RIGHT,
    UP,
    ExcessDistribution,
    Site,
    Window,
    field_from_openness,
    reflect_field,
    sample_field,
    transpose_field,
)
from services.percolation import level_table, perc_status
from services.qpath import (
    anti_stabilized_path,
    build_gamma_k,
    limit_path,
    reflect_table,
    select_step,
    stabilized_path,
)

MARGIN = 6


def _open_field(size=30):
    return sample_field(Window.from_origin(size, size), 1.0, ExcessDistribution.atom(2.0), seed=0)


@pytest.fixture(scope="module")
def random_setup():
    field = sample_field(Window.from_origin(80, 80), 0.7, ExcessDistribution.atom(2.0), seed=21)
    table = level_table(field, "forward")
    origins = [
        Site(x, t)
        for x in range(0, 20, 3)
        for t in range(0, 20, 3)
        if perc_status(table, (x, t), MARGIN).escapes
    ]
    assert origins
    return field, table, origins


def test_open_field_rightmost_and_leftmost():
    field = _open_field()
    right = stabilized_path(field, (0, 0), 1.0, escape_margin=3)
    assert right.censored
    assert right.stabilized_upto == 25
    assert all(b - a == RIGHT for a, b in zip(right.steps, right.steps[1:]))
    assert right.regeneration_times() == list(range(1, 26))
    assert np.all(right.durations() == 1)

    left = stabilized_path(field, (0, 0), 0.0, escape_margin=3)
    assert all(b - a == UP for a, b in zip(left.steps, left.steps[1:]))


def test_trace_invariants(random_setup):
    field, table, origins = random_setup
    for origin in origins:
        trace = stabilized_path(field, origin, 0.5, table, MARGIN)
        steps = trace.steps[: trace.stabilized_upto + 1]
        assert trace.durations().sum() == trace.stabilized_upto
        increments = trace.increments()
        assert np.all(np.abs(increments).sum(axis=1) <= trace.durations())
        assert Site(*increments.sum(axis=0)) == trace.tip - origin
        for reg in trace.regenerations:
            assert table.escapes(steps[reg.time])
        for a, b in zip(steps, steps[1:]):
            step = b - a
            assert step in (RIGHT, UP)
            assert field.weight(a, "right" if step == RIGHT else "up") == 1.0


def test_limit_path_matches_stabilized_prefix(random_setup):
    field, table, origins = random_setup
    for q in (0.0, 0.3, 1.0):
        for origin in origins:
            trace = stabilized_path(field, origin, q, table, MARGIN)
            path = limit_path(field, table, origin, q, trace.stabilized_upto, MARGIN)
            assert path == trace.steps[: trace.stabilized_upto + 1]


def test_transposed_field_transposes_paths(random_setup):
    field, table, origins = random_setup
    transposed = transpose_field(field)
    table_t = level_table(transposed, "forward")
    assert np.array_equal(table_t.l, table.l.T)
    for q in (0.3, 0.5, 1.0):
        for origin in origins:
            trace = stabilized_path(field, origin, q, table, MARGIN)
            mirror = stabilized_path(transposed, (origin.t, origin.x), 1.0 - q, table_t, MARGIN)
            assert mirror.steps == [Site(s.t, s.x) for s in trace.steps]
            assert mirror.stabilized_upto == trace.stabilized_upto
            path = limit_path(transposed, table_t, (origin.t, origin.x), 1.0 - q, 30, MARGIN)
            assert path == [Site(s.t, s.x) for s in limit_path(field, table, origin, q, 30, MARGIN)]


def test_frozen_prefix_survives_extension(random_setup):
    field, table, origins = random_setup
    origin = origins[0]
    trace = stabilized_path(field, origin, 0.5, table, MARGIN)
    checked = 0
    for frozen in trace.regeneration_times():
        if field.window.far_distance(trace.steps[frozen]) <= 12:
            continue
        gamma = build_gamma_k(field, origin, 0.5, frozen + 10, table)
        assert gamma[: frozen + 1] == trace.steps[: frozen + 1]
        checked += 1
    assert checked > 0


def test_paths_ordered_in_q(random_setup):
    field, table, origins = random_setup
    origin = origins[0]
    paths = [limit_path(field, table, origin, q, 40, MARGIN) for q in (0.0, 0.25, 0.5, 0.75, 1.0)]
    common = min(len(p) for p in paths)
    for n in range(common):
        xs = [p[n].x for p in paths]
        assert xs == sorted(xs)


def test_build_gamma_k_preconditions():
    window = Window.from_origin(5, 5)
    closed = np.zeros(window.shape, dtype=bool)
    field = field_from_openness(window, closed, closed)
    with pytest.raises(ValueError):
        build_gamma_k(field, (0, 0), 0.5, 0)
    with pytest.raises(InsufficientLength):
        build_gamma_k(field, (0, 0), 0.5, 2)
    with pytest.raises(EmptyMaximizerSet):
        select_step(field, level_table(field), (0, 0), 1, 0.5)


def test_select_step_tie_uses_uniform():
    window = Window.from_origin(3, 3)
    uniforms = np.full(window.shape, 0.4)
    field = field_from_openness(window, np.ones(window.shape, bool), np.ones(window.shape, bool), uniforms)
    table = level_table(field)
    assert select_step(field, table, (0, 0), 1, 0.5) == Site(1, 0)
    assert select_step(field, table, (0, 0), 1, 0.3) == Site(0, 1)


def test_origin_must_percolate():
    window = Window.from_origin(20, 20)
    closed = np.zeros(window.shape, dtype=bool)
    field = field_from_openness(window, closed, closed)
    with pytest.raises(OriginNotPercolating):
        stabilized_path(field, (0, 0), 0.5, escape_margin=3)
    with pytest.raises(OriginNotPercolating):
        limit_path(field, level_table(field), (0, 0), 0.5, 5, escape_margin=3)


def test_max_length_stops_early():
    trace = stabilized_path(_open_field(), (0, 0), 1.0, escape_margin=3, max_length=5)
    assert trace.stabilized_upto == 5
    assert not trace.censored


def test_anti_path_on_open_field():
    trace = anti_stabilized_path(_open_field(), (20, 20), 1.0, escape_margin=3)
    assert trace.orientation == "anti"
    assert trace.stabilized_upto == 16
    assert all(b - a == LEFT for a, b in zip(trace.steps, trace.steps[1:]))
    assert all(reg.increment == LEFT for reg in trace.regenerations)


def test_reflect_table_matches_reflected_field():
    field = sample_field(Window.from_origin(12, 9), 0.6, ExcessDistribution.atom(2.0), seed=8)
    anti = level_table(field, "anti")
    direct = level_table(reflect_field(field), "forward")
    assert np.array_equal(reflect_table(anti).l, direct.l)
