"""Exact passage times on a window and the geodesics built from q-paths."""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field as dc_field
from typing import FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from config import Config
from services.errors import Disconnected, NotBidirectional, NotOrientedOpen, WindowExhausted
from services.lattice import DOWN, LEFT, RIGHT, UP, PassageField, Site, Window
from services.percolation import (
    LevelTable,
    is_bidirectional,
    level_table,
    nearest_bidirectional_on_antidiagonal,
    perc_status,
)
from services.qpath import Regeneration, anti_stabilized_path, stabilized_path

logger = logging.getLogger(__name__)

# Predecessor preference when several shortest paths tie: the step that
# enters the current site is tried right, up, left, down.
TIE_ORDER = (RIGHT, UP, LEFT, DOWN)
_TOLERANCE = 1e-9


@dataclass
class GeodesicPath:
    sites: List[Site]
    total_time: float
    checked: int = 0
    failures: int = 0

    @property
    def length(self) -> int:
        return len(self.sites) - 1

    def as_dict(self) -> dict:
        return {
            "sites": [list(site) for site in self.sites],
            "total_time": self.total_time,
            "checked": self.checked,
            "failures": self.failures,
        }


def edge_weight(field: PassageField, a: Site, b: Site) -> float:
    """Weight of the undirected edge {a, b}; both ends must lie in the window."""
    step = Site(b[0] - a[0], b[1] - a[1])
    window = field.window
    if step == RIGHT:
        i, j = window.index(a)
        window.index(b)
        return float(field.weights_h[i, j])
    if step == UP:
        i, j = window.index(a)
        window.index(b)
        return float(field.weights_v[i, j])
    if step in (LEFT, DOWN):
        return edge_weight(field, b, a)
    raise ValueError(f"{tuple(a)} and {tuple(b)} are not neighbours")


def path_time(field: PassageField, sites: Sequence[Site]) -> float:
    return float(sum(edge_weight(field, a, b) for a, b in zip(sites, sites[1:])))


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= _TOLERANCE * max(1.0, abs(b))


def _shortest(
    field: PassageField,
    source: Site,
    target: Site,
    region: Window,
    allowed: Optional[np.ndarray] = None,
) -> Tuple[float, List[Site]]:
    """Dijkstra on the undirected 4-neighbour graph inside ``region``."""

    if not (region.contains(source) and region.contains(target)):
        raise ValueError(f"{tuple(source)} or {tuple(target)} outside {region}")
    nx, nt = region.shape
    oi, oj = field.window.index((region.x_min, region.t_min))
    wh = field.weights_h[oi : oi + nx, oj : oj + nt]
    wv = field.weights_v[oi : oi + nx, oj : oj + nt]

    def weight(i, j, ni, nj):
        if ni == i + 1:
            return wh[i, j]
        if ni == i - 1:
            return wh[ni, nj]
        if nj == j + 1:
            return wv[i, j]
        return wv[ni, nj]

    si, sj = region.index(source)
    ti, tj = region.index(target)
    dist = np.full((nx, nt), np.inf)
    dist[si, sj] = 0.0
    heap = [(0.0, si, sj)]
    while heap:
        d, i, j = heapq.heappop(heap)
        if d > dist[i, j]:
            continue
        if (i, j) == (ti, tj):
            break
        for di, dj in TIE_ORDER:
            ni, nj = i + di, j + dj
            if not (0 <= ni < nx and 0 <= nj < nt):
                continue
            if allowed is not None and not allowed[ni, nj]:
                continue
            nd = d + weight(i, j, ni, nj)
            if nd < dist[ni, nj]:
                dist[ni, nj] = nd
                heapq.heappush(heap, (nd, ni, nj))

    if not np.isfinite(dist[ti, tj]):
        raise Disconnected(f"no path from {tuple(source)} to {tuple(target)} inside {region}")

    # Predecessors on shortest paths carry strictly smaller, settled distances.
    path = [(ti, tj)]
    i, j = ti, tj
    while (i, j) != (si, sj):
        for di, dj in TIE_ORDER:
            pi, pj = i - di, j - dj
            if not (0 <= pi < nx and 0 <= pj < nt):
                continue
            if allowed is not None and not allowed[pi, pj]:
                continue
            if _close(dist[pi, pj] + weight(pi, pj, i, j), dist[i, j]):
                i, j = pi, pj
                break
        else:
            raise RuntimeError("shortest-path reconstruction lost its predecessor")
        path.append((i, j))
    path.reverse()
    return float(dist[ti, tj]), [region.site_at(a, b) for a, b in path]


def exact_region(field: PassageField, x: Site, y: Site, budget: float) -> Window:
    """Box holding every path from x to y of time ≤ ``budget`` (clipped to the window)."""
    slack = max(0.0, budget - (x - y).l1)
    return field.window.bounding([x, y], margin=int(math.floor(slack / 2)) + 1)


def passage_time(
    field: PassageField,
    x: Iterable[int],
    y: Iterable[int],
    region: Optional[Window] = None,
) -> Tuple[float, GeodesicPath]:
    """τ(x, y) restricted to ``region`` (the whole window by default) and one geodesic."""
    x, y = Site(*x), Site(*y)
    field.window.index(x)
    field.window.index(y)
    if x == y:
        return 0.0, GeodesicPath([x], 0.0)
    time, sites = _shortest(field, x, y, region or field.window)
    return time, GeodesicPath(sites, time)


def enumerate_passage_time(
    field: PassageField,
    x: Iterable[int],
    y: Iterable[int],
    max_sites: int = 25,
) -> float:
    """Minimum over every simple 4-neighbour path in the window; small windows only."""

    x, y = Site(*x), Site(*y)
    window = field.window
    if window.size > max_sites:
        raise ValueError(f"enumeration limited to {max_sites} sites, window has {window.size}")
    window.index(x)
    window.index(y)
    best = math.inf
    visited = {x}

    def walk(site: Site, elapsed: float) -> None:
        nonlocal best
        if elapsed >= best:
            return
        if site == y:
            best = elapsed
            return
        for step in TIE_ORDER:
            nxt = site + step
            if nxt in visited or not window.contains(nxt):
                continue
            visited.add(nxt)
            walk(nxt, elapsed + edge_weight(field, site, nxt))
            visited.remove(nxt)

    walk(x, 0.0)
    return best


def verify_oriented_geodesic(field: PassageField, path: Sequence[Iterable[int]]) -> bool:
    """True iff the oracle time between the endpoints equals the path length."""

    sites = [Site(*s) for s in path]
    for a, b in zip(sites, sites[1:]):
        step = b - a
        if step not in (RIGHT, UP):
            raise NotOrientedOpen(f"step {tuple(a)}->{tuple(b)} is not oriented")
        if edge_weight(field, a, b) != 1.0:
            raise NotOrientedOpen(f"edge {tuple(a)}->{tuple(b)} is closed")
    length = len(sites) - 1
    if length == 0:
        return True
    # Paths of time ≤ the L1 distance are monotone, so the bounding box is exact.
    time, _ = passage_time(field, sites[0], sites[-1], field.window.bounding([sites[0], sites[-1]]))
    return _close(time, float(length)) and (sites[-1] - sites[0]).l1 == length


def verify_subpaths(
    field: PassageField,
    path: Sequence[Site],
    checks: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    max_span: int = 64,
) -> Tuple[int, int]:
    """(checked, failures) over randomly sampled contiguous subpaths."""

    checks = Config.SUBPATH_CHECKS if checks is None else checks
    rng = rng or np.random.default_rng(0)
    sites = [Site(*s) for s in path]
    if len(sites) < 2 or checks <= 0:
        return 0, 0
    failures = 0
    for _ in range(checks):
        span = int(rng.integers(1, min(max_span, len(sites) - 1) + 1))
        start = int(rng.integers(0, len(sites) - span))
        sub = sites[start : start + span + 1]
        own = path_time(field, sub)
        best, _ = passage_time(field, sub[0], sub[-1], exact_region(field, sub[0], sub[-1], own))
        if best < own and not _close(best, own):
            failures += 1
            logger.warning(
                "Subpath %s->%s takes %.6f, oracle finds %.6f", sub[0], sub[-1], own, best
            )
    return checks, failures


def _allowed_mask(region: Window, allowed: Union[np.ndarray, Iterable[Site]]) -> np.ndarray:
    mask = np.zeros(region.shape, dtype=bool)
    for site in allowed:
        if region.contains(site):
            mask[region.index(site)] = True
    return mask


def constrained_geodesic(
    field: PassageField,
    x: Iterable[int],
    y: Iterable[int],
    allowed: Iterable[Iterable[int]],
) -> GeodesicPath:
    """Shortest path from x to y using only sites of ``allowed``."""

    x, y = Site(*x), Site(*y)
    allowed = {Site(*s) for s in allowed}
    if x not in allowed or y not in allowed:
        raise Disconnected(f"{tuple(x)} or {tuple(y)} not in the allowed set")
    if x == y:
        return GeodesicPath([x], 0.0)
    region = field.window.bounding(allowed)
    time, sites = _shortest(field, x, y, region, _allowed_mask(region, allowed))
    return GeodesicPath(sites, time)


@dataclass
class SandwichRegion:
    origin: Site
    j_r: int
    j_l: int
    right_path: List[Site]
    left_path: List[Site]
    right_anti: List[Site]
    left_anti: List[Site]
    n0: int
    n0_anti: int
    delta_sites: FrozenSet[Site]
    right_regenerations: List[Regeneration] = dc_field(default_factory=list)

    @property
    def meeting_point(self) -> Site:
        return self.right_path[self.n0]


def _meeting_index(a: Sequence[Site], b: Sequence[Site]) -> Optional[int]:
    for n in range(min(len(a), len(b))):
        if a[n] == b[n]:
            return n
    return None


def _rasterize(left: Sequence[Site], right: Sequence[Site], upto: int, sites: Set[Site]) -> None:
    for n in range(upto + 1):
        level = left[n].level
        for x in range(left[n].x, right[n].x + 1):
            sites.add(Site(x, level - x))


def build_sandwich_region(
    field: PassageField,
    origin: Iterable[int],
    q: float,
    forward: Optional[LevelTable] = None,
    anti: Optional[LevelTable] = None,
    escape_margin: Optional[int] = None,
) -> SandwichRegion:
    """Δ: the lattice points enclosed by two coalescing q-paths and two coalescing anti q-paths."""

    origin = Site(*origin)
    forward = forward or level_table(field, "forward")
    anti = anti or level_table(field, "anti")
    j_r, j_l = nearest_bidirectional_on_antidiagonal(field, origin, forward, anti, escape_margin)
    right_site = origin + Site(j_r, -j_r)
    left_site = origin + Site(j_l, -j_l)

    right = stabilized_path(field, right_site, q, forward, escape_margin)
    left = stabilized_path(field, left_site, q, forward, escape_margin)
    n0 = _meeting_index(
        right.steps[: right.stabilized_upto + 1], left.steps[: left.stabilized_upto + 1]
    )
    right_anti = anti_stabilized_path(field, right_site, q, anti, escape_margin)
    left_anti = anti_stabilized_path(field, left_site, q, anti, escape_margin)
    n0_anti = _meeting_index(
        right_anti.steps[: right_anti.stabilized_upto + 1],
        left_anti.steps[: left_anti.stabilized_upto + 1],
    )
    if n0 is None or n0_anti is None:
        raise WindowExhausted(f"the enclosing paths of {tuple(origin)} do not meet inside the window")

    delta: Set[Site] = set()
    _rasterize(left.steps, right.steps, n0, delta)
    _rasterize(left_anti.steps, right_anti.steps, n0_anti, delta)
    return SandwichRegion(
        origin=origin,
        j_r=j_r,
        j_l=j_l,
        right_path=right.steps[: right.stabilized_upto + 1],
        left_path=left.steps[: left.stabilized_upto + 1],
        right_anti=right_anti.steps[: right_anti.stabilized_upto + 1],
        left_anti=left_anti.steps[: left_anti.stabilized_upto + 1],
        n0=n0,
        n0_anti=n0_anti,
        delta_sites=frozenset(delta),
        right_regenerations=list(right.regenerations),
    )


def sandwich_geodesic(
    field: PassageField,
    origin: Iterable[int],
    q: float,
    forward: Optional[LevelTable] = None,
    anti: Optional[LevelTable] = None,
    escape_margin: Optional[int] = None,
    region: Optional[SandwichRegion] = None,
    checks: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GeodesicPath:
    """Semi-infinite geodesic from any origin: Δ-restricted head plus the q-path tail."""

    origin = Site(*origin)
    forward = forward or level_table(field, "forward")
    if perc_status(forward, origin, escape_margin).escapes:
        trace = stabilized_path(field, origin, q, forward, escape_margin)
        sites = trace.steps[: trace.stabilized_upto + 1]
        result = GeodesicPath(sites, float(len(sites) - 1))
    else:
        region = region or build_sandwich_region(field, origin, q, forward, anti, escape_margin)
        head = constrained_geodesic(field, origin, region.meeting_point, region.delta_sites)
        tail = region.right_path[region.n0 + 1 :]
        result = GeodesicPath(head.sites + tail, head.total_time + len(tail))
    result.checked, result.failures = verify_subpaths(field, result.sites, checks, rng)
    return result


def bi_infinite_geodesic(
    field: PassageField,
    site: Iterable[int],
    q: float,
    forward: Optional[LevelTable] = None,
    anti: Optional[LevelTable] = None,
    escape_margin: Optional[int] = None,
    checks: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GeodesicPath:
    """Reversed anti q-path followed by the forward q-path through a bi-directional site."""

    site = Site(*site)
    forward = forward or level_table(field, "forward")
    anti = anti or level_table(field, "anti")
    if not is_bidirectional(forward, anti, site, escape_margin):
        raise NotBidirectional(f"{tuple(site)} is not an uncensored bi-directional point")
    ahead = stabilized_path(field, site, q, forward, escape_margin)
    behind = anti_stabilized_path(field, site, q, anti, escape_margin)
    sites = list(reversed(behind.steps[: behind.stabilized_upto + 1]))
    sites += ahead.steps[1 : ahead.stabilized_upto + 1]
    result = GeodesicPath(sites, float(len(sites) - 1))
    result.checked, result.failures = verify_subpaths(field, result.sites, checks, rng)
    return result
