"""Randomized q-paths on the oriented percolation cluster and their regenerations."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field
from typing import Iterable, List, NamedTuple, Optional

import numpy as np

from config import Config
from services.errors import EmptyMaximizerSet, InsufficientLength, OriginNotPercolating
from services.lattice import PassageField, Site, reflect_field
from services.percolation import (
    ESCAPES,
    LevelTable,
    level_table,
    maximizer_set,
    perc_status,
    truncated_length,
)

logger = logging.getLogger(__name__)


class Regeneration(NamedTuple):
    """Regeneration time T_j and increment Y_j = γ(T_j) − γ(T_{j−1})."""

    time: int
    increment: Site


@dataclass
class QPathTrace:
    origin: Site
    q: float
    steps: List[Site]
    stabilized_upto: int
    regenerations: List[Regeneration] = dc_field(default_factory=list)
    censored: bool = False
    orientation: str = "forward"

    @property
    def tip(self) -> Site:
        return self.steps[self.stabilized_upto]

    def durations(self) -> np.ndarray:
        """T_j − T_{j−1} for every recorded regeneration."""
        times = np.array([0] + [reg.time for reg in self.regenerations], dtype=np.int64)
        return np.diff(times)

    def increments(self) -> np.ndarray:
        if not self.regenerations:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array([tuple(reg.increment) for reg in self.regenerations], dtype=np.int64)

    def regeneration_times(self) -> List[int]:
        return [reg.time for reg in self.regenerations]


def select_step(
    field: PassageField,
    table: LevelTable,
    site: Iterable[int],
    k: int,
    q: float,
) -> Site:
    """m^q_k(site): the unique maximizer, or the tie broken by U_site ≤ q."""

    site = Site(*site)
    members = maximizer_set(field, table, site, k)
    if not members:
        raise EmptyMaximizerSet(f"M_{k}{tuple(site)} is empty")
    if len(members) == 1:
        return members[0]
    # members follow table.steps: the first one is the "right" step of the orientation.
    return members[0] if field.uniform(site) <= q else members[1]


def build_gamma_k(
    field: PassageField,
    origin: Iterable[int],
    q: float,
    k: int,
    table: Optional[LevelTable] = None,
) -> List[Site]:
    """γ_k: k steps from ``origin``, step j+1 chosen at truncation level k − j."""

    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    origin = Site(*origin)
    table = table or level_table(field, "forward")
    if truncated_length(table, origin, k) < k:
        raise InsufficientLength(f"l{tuple(origin)} = {table.value(origin)} < {k}")
    path = [origin]
    for j in range(k):
        path.append(select_step(field, table, path[-1], k - j, q))
    return path


class _Walker:
    """Index-level q-path stepping on the raw arrays of a forward table."""

    def __init__(self, field: PassageField, table: LevelTable, q: float, escape_margin: int) -> None:
        if table.orientation != "forward":
            raise ValueError("the walker runs on forward tables; reflect the field for anti paths")
        self.l = table.l
        self.open_h = field.open_h
        self.open_v = field.open_v
        self.uniforms = field.uniforms
        self.q = q
        nx, nt = field.window.shape
        # Steps are taken only from sites strictly farther than the margin from
        # the far boundary, so every l value read is itself uncensored.
        self.safe_i = nx - 1 - escape_margin
        self.safe_j = nt - 1 - escape_margin

    def safe(self, i: int, j: int) -> bool:
        return i < self.safe_i and j < self.safe_j

    def step(self, i: int, j: int, level: int):
        l = self.l
        target = min(l[i, j], level)
        right = self.open_h[i, j] and min(l[i + 1, j], level - 1) + 1 == target
        up = self.open_v[i, j] and min(l[i, j + 1], level - 1) + 1 == target
        if right and up:
            return (i + 1, j) if self.uniforms[i, j] <= self.q else (i, j + 1)
        if right:
            return (i + 1, j)
        if up:
            return (i, j + 1)
        raise EmptyMaximizerSet(f"M_{level} empty at index ({i},{j})")

    def extend(self, i: int, j: int, k: int):
        """γ_k from (i, j) as index pairs, or None when it would leave the safe zone."""
        path = []
        for s in range(k):
            if not self.safe(i, j):
                return None
            i, j = self.step(i, j, k - s)
            path.append((i, j))
        if not self.safe(i, j):
            return None
        return path


def stabilized_path(
    field: PassageField,
    origin: Iterable[int],
    q: float,
    table: Optional[LevelTable] = None,
    escape_margin: Optional[int] = None,
    max_length: Optional[int] = None,
) -> QPathTrace:
    """Frozen prefix of the q-path from a percolating origin.

    After a regeneration at T the prefix γ[0..T] never changes and the
    continuation is the q-path of the tip itself, so the search for the next
    regeneration restarts from the tip with k = 1, 2, ... until γ_k(k) escapes.
    """

    origin = Site(*origin)
    margin = Config.ESCAPE_MARGIN if escape_margin is None else escape_margin
    table = table or level_table(field, "forward")
    if not perc_status(table, origin, margin).escapes:
        raise OriginNotPercolating(f"{tuple(origin)} does not escape the window")

    walker = _Walker(field, table, q, margin)
    window = field.window
    i, j = window.index(origin)
    steps = [origin]
    regenerations: List[Regeneration] = []
    elapsed = 0
    censored = False

    while max_length is None or elapsed < max_length:
        k = 1
        while True:
            candidate = walker.extend(i, j, k)
            if candidate is None:
                censored = True
                break
            if walker.l[candidate[-1]] == ESCAPES:
                break
            k += 1
        if censored:
            break
        ti, tj = candidate[-1]
        steps.extend(window.site_at(a, b) for a, b in candidate)
        elapsed += k
        regenerations.append(Regeneration(elapsed, Site(ti - i, tj - j)))
        i, j = ti, tj

    return QPathTrace(
        origin=origin,
        q=q,
        steps=steps,
        stabilized_upto=elapsed,
        regenerations=regenerations,
        censored=censored,
    )


def reflect_table(table: LevelTable) -> LevelTable:
    """Level table of the point-reflected field, read off an existing table."""
    orientation = "forward" if table.orientation == "anti" else "anti"
    return LevelTable(table.window.reflected(), table.l[::-1, ::-1].copy(), orientation)


def anti_stabilized_path(
    field: PassageField,
    origin: Iterable[int],
    q: float,
    anti_table: Optional[LevelTable] = None,
    escape_margin: Optional[int] = None,
    max_length: Optional[int] = None,
) -> QPathTrace:
    """Anti-oriented q-path: the q-path of the point-reflected field, mapped back."""

    origin = Site(*origin)
    anti_table = anti_table or level_table(field, "anti")
    reflected = stabilized_path(
        reflect_field(field),
        -origin,
        q,
        table=reflect_table(anti_table),
        escape_margin=escape_margin,
        max_length=max_length,
    )
    return QPathTrace(
        origin=origin,
        q=q,
        steps=[-site for site in reflected.steps],
        stabilized_upto=reflected.stabilized_upto,
        regenerations=[Regeneration(reg.time, -reg.increment) for reg in reflected.regenerations],
        censored=reflected.censored,
        orientation="anti",
    )


def limit_path(
    field: PassageField,
    table: LevelTable,
    origin: Iterable[int],
    q: float,
    length: int,
    escape_margin: Optional[int] = None,
) -> List[Site]:
    """lim_k γ_k: walk on escaping sites, ties between two escaping neighbours by U ≤ q.

    Stops early when the walk would leave the safe zone.
    """

    origin = Site(*origin)
    margin = Config.ESCAPE_MARGIN if escape_margin is None else escape_margin
    if not perc_status(table, origin, margin).escapes:
        raise OriginNotPercolating(f"{tuple(origin)} does not escape the window")
    walker = _Walker(field, table, q, margin)
    window = field.window
    i, j = window.index(origin)
    path = [origin]
    for _ in range(length):
        if not walker.safe(i, j):
            break
        right = walker.open_h[i, j] and walker.l[i + 1, j] == ESCAPES
        up = walker.open_v[i, j] and walker.l[i, j + 1] == ESCAPES
        if right and (not up or walker.uniforms[i, j] <= q):
            i += 1
        elif up:
            j += 1
        else:
            raise EmptyMaximizerSet(f"no escaping neighbour at {window.site_at(i, j)}")
        path.append(window.site_at(i, j))
    return path
