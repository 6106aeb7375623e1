"""Longest oriented open paths, percolation proxies and bi-directional points."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

import numpy as np

from config import Config
from services.errors import CensoredBeforeFound, WindowBoundsError
from services.lattice import (
    DOWN,
    LEFT,
    RIGHT,
    UP,
    ExcessDistribution,
    PassageField,
    Site,
    Window,
    sample_field,
)

logger = logging.getLogger(__name__)

# l value of a site whose longest oriented open path reaches the window's far boundary.
ESCAPES = np.int64(2 ** 62)

ORIENTATIONS = ("forward", "anti")


@dataclass(frozen=True, eq=False)
class LevelTable:
    window: Window
    l: np.ndarray
    orientation: str

    def __post_init__(self) -> None:
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"unknown orientation: {self.orientation!r}")
        self.l.setflags(write=False)

    def value(self, site: Iterable[int]) -> int:
        i, j = self.window.index(site)
        return int(self.l[i, j])

    def escapes(self, site: Iterable[int]) -> bool:
        return self.value(site) == ESCAPES

    def boundary_distance(self, site: Iterable[int]) -> int:
        """Distance to the boundary that oriented (resp. anti) paths run into."""
        if self.orientation == "forward":
            return self.window.far_distance(site)
        return self.window.near_distance(site)

    @property
    def steps(self) -> Tuple[Site, Site]:
        return (RIGHT, UP) if self.orientation == "forward" else (LEFT, DOWN)


class Verdict(enum.Enum):
    ESCAPES = "escapes"
    FINITE = "finite"
    CENSORED = "censored"


@dataclass(frozen=True)
class PercStatus:
    verdict: Verdict
    length: Optional[int] = None

    @property
    def escapes(self) -> bool:
        return self.verdict is Verdict.ESCAPES

    @property
    def censored(self) -> bool:
        return self.verdict is Verdict.CENSORED


def _forward_lengths(open_h: np.ndarray, open_v: np.ndarray) -> np.ndarray:
    nx, nt = open_h.shape
    l = np.zeros((nx, nt), dtype=np.int64)
    l[-1, :] = ESCAPES
    l[:, -1] = ESCAPES
    # Interior anti-diagonals i + j = c, from the far corner inward.
    for c in range(nx + nt - 4, -1, -1):
        i = np.arange(max(0, c - (nt - 2)), min(c, nx - 2) + 1)
        if i.size == 0:
            continue
        j = c - i
        right = np.where(open_h[i, j], np.minimum(l[i + 1, j] + 1, ESCAPES), 0)
        up = np.where(open_v[i, j], np.minimum(l[i, j + 1] + 1, ESCAPES), 0)
        l[i, j] = np.maximum(right, up)
    return l


def _anti_lengths(open_h: np.ndarray, open_v: np.ndarray) -> np.ndarray:
    nx, nt = open_h.shape
    l = np.zeros((nx, nt), dtype=np.int64)
    l[0, :] = ESCAPES
    l[:, 0] = ESCAPES
    for c in range(2, nx + nt - 1):
        i = np.arange(max(1, c - (nt - 1)), min(c - 1, nx - 1) + 1)
        if i.size == 0:
            continue
        j = c - i
        # (x,t)→(x−1,t) is anti-open when the oriented edge (x−1,t)→(x,t) is open.
        left = np.where(open_h[i - 1, j], np.minimum(l[i - 1, j] + 1, ESCAPES), 0)
        down = np.where(open_v[i, j - 1], np.minimum(l[i, j - 1] + 1, ESCAPES), 0)
        l[i, j] = np.maximum(left, down)
    return l


def level_table(field: PassageField, orientation: str = "forward") -> LevelTable:
    """Longest oriented (or anti-oriented) open path length of every site.

    Sites on the boundary the paths run into carry the ``ESCAPES`` sentinel,
    and so does every site with an open path reaching them.
    """

    if orientation == "forward":
        l = _forward_lengths(field.open_h, field.open_v)
    elif orientation == "anti":
        l = _anti_lengths(field.open_h, field.open_v)
    else:
        raise ValueError(f"unknown orientation: {orientation!r}")
    return LevelTable(field.window, l, orientation)


def truncated_length(table: LevelTable, site: Iterable[int], k: int) -> int:
    """l_k(site) = l(site) ∧ k."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    return min(table.value(site), k)


def edge_open(field: PassageField, site: Site, step: Site) -> bool:
    """Openness of the edge between ``site`` and ``site + step`` (any of the four steps)."""
    target = site + step
    if not field.window.contains(target):
        raise WindowBoundsError(f"edge {site}->{target} leaves {field.window}")
    if step == RIGHT:
        i, j = field.window.index(site)
        return bool(field.open_h[i, j])
    if step == UP:
        i, j = field.window.index(site)
        return bool(field.open_v[i, j])
    if step == LEFT:
        i, j = field.window.index(target)
        return bool(field.open_h[i, j])
    if step == DOWN:
        i, j = field.window.index(target)
        return bool(field.open_v[i, j])
    raise ValueError(f"not a lattice step: {step}")


def maximizer_set(
    field: PassageField,
    table: LevelTable,
    site: Iterable[int],
    k: int,
) -> Tuple[Site, ...]:
    """M_k(site): open oriented neighbours with l_{k−1}(neighbour) + 1 = l_k(site)."""

    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    site = Site(*site)
    target = truncated_length(table, site, k)
    members = []
    for step in table.steps:
        if not edge_open(field, site, step):
            continue
        neighbour = site + step
        if truncated_length(table, neighbour, k - 1) + 1 == target:
            members.append(neighbour)
    return tuple(members)


def perc_status(
    table: LevelTable,
    site: Iterable[int],
    escape_margin: Optional[int] = None,
) -> PercStatus:
    margin = Config.ESCAPE_MARGIN if escape_margin is None else escape_margin
    if margin < 1:
        raise ValueError(f"escape_margin must be >= 1, got {margin}")
    if table.boundary_distance(site) < margin:
        return PercStatus(Verdict.CENSORED)
    value = table.value(site)
    if value == ESCAPES:
        return PercStatus(Verdict.ESCAPES)
    return PercStatus(Verdict.FINITE, value)


def uncensored_mask(window: Window, orientation: str, escape_margin: int) -> np.ndarray:
    nx, nt = window.shape
    i = np.arange(nx)[:, None]
    j = np.arange(nt)[None, :]
    if orientation == "forward":
        distance = np.minimum(nx - 1 - i, nt - 1 - j)
    else:
        distance = np.minimum(i, j)
    return distance >= escape_margin


def escape_fraction(table: LevelTable, escape_margin: Optional[int] = None) -> Tuple[int, int]:
    """(escaping, uncensored) site counts of one table."""
    margin = Config.ESCAPE_MARGIN if escape_margin is None else escape_margin
    mask = uncensored_mask(table.window, table.orientation, margin)
    return int((table.l[mask] == ESCAPES).sum()), int(mask.sum())


def bidirectional_mask(
    forward: LevelTable,
    anti: LevelTable,
    escape_margin: Optional[int] = None,
) -> Tuple[np.ndarray, int]:
    """Mask of uncensored bi-directional sites and the number of sites uncensored both ways."""
    margin = Config.ESCAPE_MARGIN if escape_margin is None else escape_margin
    uncensored = uncensored_mask(forward.window, "forward", margin) & uncensored_mask(
        anti.window, "anti", margin
    )
    mask = uncensored & (forward.l == ESCAPES) & (anti.l == ESCAPES)
    return mask, int(uncensored.sum())


def bidirectional_scan(
    field: PassageField,
    forward: Optional[LevelTable] = None,
    anti: Optional[LevelTable] = None,
    escape_margin: Optional[int] = None,
) -> List[Site]:
    forward = forward or level_table(field, "forward")
    anti = anti or level_table(field, "anti")
    mask, _ = bidirectional_mask(forward, anti, escape_margin)
    return [field.window.site_at(i, j) for i, j in zip(*np.nonzero(mask))]


def is_bidirectional(
    forward: LevelTable,
    anti: LevelTable,
    site: Site,
    escape_margin: Optional[int] = None,
) -> bool:
    return perc_status(forward, site, escape_margin).escapes and perc_status(
        anti, site, escape_margin
    ).escapes


def nearest_bidirectional_on_antidiagonal(
    field: PassageField,
    origin: Iterable[int],
    forward: Optional[LevelTable] = None,
    anti: Optional[LevelTable] = None,
    escape_margin: Optional[int] = None,
) -> Tuple[int, int]:
    """(j_r, j_l): nearest bi-directional points origin + (j, −j) with j > 0 and j < 0."""

    origin = Site(*origin)
    forward = forward or level_table(field, "forward")
    anti = anti or level_table(field, "anti")
    found = []
    for sign in (1, -1):
        j = sign
        while True:
            site = origin + Site(j, -j)
            if not field.window.contains(site):
                raise CensoredBeforeFound(f"scan from {origin} left the window at j={j}")
            fwd = perc_status(forward, site, escape_margin)
            back = perc_status(anti, site, escape_margin)
            if fwd.censored or back.censored:
                raise CensoredBeforeFound(f"scan from {origin} hit the censored zone at j={j}")
            if fwd.escapes and back.escapes:
                found.append(j)
                break
            j += sign
    return found[0], found[1]


def bracket_threshold(
    window: Window,
    seed: int,
    lo: float = 0.5,
    hi: float = 0.9,
    iterations: int = 6,
    floor: Optional[float] = None,
    excess: Optional[ExcessDistribution] = None,
    escape_margin: Optional[int] = None,
) -> Tuple[float, float]:
    """Coarse bisection on the escape fraction; a sanity band, not an estimate of p_c."""

    floor = Config.ESCAPE_RATE_FLOOR if floor is None else floor
    excess = excess or ExcessDistribution.atom(2.0)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        table = level_table(sample_field(window, mid, excess, seed), "forward")
        escaping, uncensored = escape_fraction(table, escape_margin)
        rate = escaping / uncensored if uncensored else 0.0
        logger.info("Threshold bracket p=%.4f escape rate=%.4f", mid, rate)
        if rate > floor:
            hi = mid
        else:
            lo = mid
    return lo, hi


def write_level_snapshot(forward: LevelTable, anti: LevelTable, path: str) -> None:
    """One ``x t l_fwd l_anti`` line per site, ``inf`` for the sentinel."""

    def _fmt(value: int) -> str:
        return "inf" if value == ESCAPES else str(int(value))

    nx, nt = forward.window.shape
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(nx):
            for j in range(nt):
                site = forward.window.site_at(i, j)
                fh.write(f"{site.x} {site.t} {_fmt(forward.l[i, j])} {_fmt(anti.l[i, j])}\n")


def enumerate_longest_paths(field: PassageField, orientation: str = "forward", max_sites: int = 36) -> np.ndarray:
    """l by exhaustive enumeration of oriented open paths; windows of at most ``max_sites`` sites.

    A path touching the boundary it runs into counts as escaping.
    """

    window = field.window
    if window.size > max_sites:
        raise ValueError(f"enumeration limited to {max_sites} sites, window has {window.size}")
    steps = (RIGHT, UP) if orientation == "forward" else (LEFT, DOWN)
    far = (lambda s: s.x == window.x_max or s.t == window.t_max) if orientation == "forward" else (
        lambda s: s.x == window.x_min or s.t == window.t_min
    )
    out = np.zeros(window.shape, dtype=np.int64)
    for i in range(window.shape[0]):
        for j in range(window.shape[1]):
            start = window.site_at(i, j)
            best = 0
            stack = [(start, 0)]
            while stack:
                site, length = stack.pop()
                if far(site):
                    best = ESCAPES
                    break
                best = max(best, length)
                for step in steps:
                    if window.contains(site + step) and edge_open(field, site, step):
                        stack.append((site + step, length + 1))
            out[i, j] = best
    return out
