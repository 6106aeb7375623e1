import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(__file__)))

from services.errors import CensoredBeforeFound
from services.lattice import ExcessDistribution, Site, Window, field_from_openness, sample_field
from services.percolation import (
    ESCAPES,
    Verdict,
    bidirectional_mask,
    bidirectional_scan,
    bracket_threshold,
    edge_open,
    enumerate_longest_paths,
    escape_fraction,
    is_bidirectional,
    level_table,
    maximizer_set,
    nearest_bidirectional_on_antidiagonal,
    perc_status,
    truncated_length,
    write_level_snapshot,
)


def _closed(window):
    return np.zeros(window.shape, dtype=bool)


def _corner_field():
    """4×4: (0,0)→(1,0)→(1,1) y (0,0)→(0,1)→(1,1) abiertas, todo lo demás cerrado."""
    window = Window.from_origin(4, 4)
    open_h, open_v = _closed(window), _closed(window)
    open_h[0, 0] = True
    open_v[1, 0] = True
    open_v[0, 0] = True
    open_h[0, 1] = True
    return field_from_openness(window, open_h, open_v)


def test_boundary_sites_carry_sentinel():
    window = Window.from_origin(3, 3)
    table = level_table(field_from_openness(window, _closed(window), _closed(window)))
    assert table.l[2, 0] == ESCAPES
    assert table.l[0, 2] == ESCAPES
    assert table.l[0, 0] == 0
    assert table.l[1, 1] == 0


def test_hand_built_lengths():
    table = level_table(_corner_field())
    assert table.value((1, 1)) == 0
    assert table.value((1, 0)) == 1
    assert table.value((0, 1)) == 1
    assert table.value((0, 0)) == 2
    assert truncated_length(table, (0, 0), 1) == 1
    with pytest.raises(ValueError):
        truncated_length(table, (0, 0), -1)


def test_maximizer_set_orders_right_then_up():
    field = _corner_field()
    table = level_table(field)
    assert maximizer_set(field, table, (0, 0), 2) == (Site(1, 0), Site(0, 1))
    assert maximizer_set(field, table, (1, 0), 1) == (Site(1, 1),)
    assert maximizer_set(field, table, (1, 1), 1) == ()
    with pytest.raises(ValueError):
        maximizer_set(field, table, (0, 0), 0)


def test_edge_open_in_all_directions():
    field = _corner_field()
    assert edge_open(field, Site(0, 0), Site(1, 0))
    assert edge_open(field, Site(1, 0), Site(-1, 0))
    assert edge_open(field, Site(1, 1), Site(0, -1))
    assert not edge_open(field, Site(1, 1), Site(1, 0))


@pytest.mark.parametrize("orientation", ["forward", "anti"])
@pytest.mark.parametrize("size,patterns", [(4, 200), (6, 50), (8, 20)])
def test_level_table_matches_enumeration(orientation, size, patterns):
    rng = np.random.default_rng(5 + size)
    window = Window.from_origin(size, size)
    for _ in range(patterns):
        open_h = rng.random(window.shape) < 0.5
        open_v = rng.random(window.shape) < 0.5
        field = field_from_openness(window, open_h, open_v)
        expected = enumerate_longest_paths(field, orientation, max_sites=64)
        assert np.array_equal(level_table(field, orientation).l, expected)


def test_enumeration_refuses_large_windows():
    field = sample_field(Window.from_origin(7, 7), 0.5, ExcessDistribution.atom(2.0), seed=0)
    with pytest.raises(ValueError):
        enumerate_longest_paths(field)


@pytest.mark.parametrize("seed", range(5))
def test_lengths_grow_with_p(seed):
    window = Window.from_origin(60, 60)
    low = level_table(sample_field(window, 0.6, ExcessDistribution.atom(2.0), seed=seed))
    high = level_table(sample_field(window, 0.7, ExcessDistribution.atom(2.0), seed=seed))
    assert np.all(high.l >= low.l)
    assert high.l.max() == ESCAPES


@pytest.mark.parametrize("seed", range(5))
def test_finite_verdict_survives_enlarging_the_window(seed):
    excess = ExcessDistribution.atom(2.0)
    small_window, margin = Window.from_origin(60, 60), 4
    small = level_table(sample_field(small_window, 0.6, excess, seed=seed))
    large = level_table(sample_field(Window.from_origin(120, 120), 0.6, excess, seed=seed))
    finite = 0
    for i in range(small_window.shape[0]):
        for j in range(small_window.shape[1]):
            site = small_window.site_at(i, j)
            status = perc_status(small, site, margin)
            if status.verdict is Verdict.FINITE:
                finite += 1
                assert not large.escapes(site)
                assert large.value(site) == status.length
    assert finite > 0


def test_anti_table_on_open_field():
    field = sample_field(Window.from_origin(5, 5), 1.0, ExcessDistribution.atom(2.0), seed=0)
    anti = level_table(field, "anti")
    assert np.all(anti.l == ESCAPES)
    assert anti.boundary_distance((1, 3)) == 1


def test_perc_status_verdicts():
    window = Window.from_origin(3, 3)
    table = level_table(field_from_openness(window, _closed(window), _closed(window)))
    status = perc_status(table, (0, 0), escape_margin=1)
    assert status.verdict is Verdict.FINITE and status.length == 0
    assert perc_status(table, (2, 0), escape_margin=1).censored
    open_table = level_table(sample_field(window, 1.0, ExcessDistribution.atom(2.0), seed=0))
    assert perc_status(open_table, (0, 0), escape_margin=1).escapes


def test_bidirectional_mask_on_open_field():
    field = sample_field(Window.from_origin(5, 5), 1.0, ExcessDistribution.atom(2.0), seed=0)
    forward, anti = level_table(field, "forward"), level_table(field, "anti")
    mask, uncensored = bidirectional_mask(forward, anti, escape_margin=1)
    assert uncensored == 9
    assert mask.sum() == 9
    assert len(bidirectional_scan(field, forward, anti, escape_margin=1)) == 9
    assert is_bidirectional(forward, anti, Site(2, 2), escape_margin=1)
    assert not is_bidirectional(forward, anti, Site(0, 2), escape_margin=1)


def test_escape_fraction_counts_uncensored_sites():
    table = level_table(sample_field(Window.from_origin(6, 6), 1.0, ExcessDistribution.atom(2.0), seed=0))
    assert escape_fraction(table, escape_margin=2) == (16, 16)


def test_nearest_bidirectional_on_open_field():
    field = sample_field(Window.from_origin(9, 9), 1.0, ExcessDistribution.atom(2.0), seed=0)
    assert nearest_bidirectional_on_antidiagonal(field, (4, 4), escape_margin=2) == (1, -1)


def test_nearest_bidirectional_hits_censored_zone():
    window = Window.from_origin(9, 9)
    field = field_from_openness(window, _closed(window), _closed(window))
    with pytest.raises(CensoredBeforeFound):
        nearest_bidirectional_on_antidiagonal(field, (4, 4), escape_margin=2)


def test_bracket_threshold_narrows_band():
    lo, hi = bracket_threshold(Window.from_origin(60, 60), seed=1, iterations=3, escape_margin=5)
    assert 0.5 <= lo < hi <= 0.9
    assert hi - lo == pytest.approx(0.05)


def test_level_snapshot_uses_inf(tmp_path):
    field = _corner_field()
    path = tmp_path / "levels.txt"
    write_level_snapshot(level_table(field, "forward"), level_table(field, "anti"), str(path))
    lines = path.read_text().splitlines()
    assert len(lines) == 16
    assert lines[0] == "0 0 2 inf"
