"""Joint regenerations of two q-paths, the distance chain Z and its log drift."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from config import Config
from services.errors import InsufficientLength, PreconditionDiagonal
from services.lattice import PassageField, Site
from services.percolation import LevelTable, level_table
from services.qpath import QPathTrace, stabilized_path
from services.regeneration import TailFit, fit_regeneration_tail

logger = logging.getLogger(__name__)


@dataclass
class CoalescenceTrace:
    origins: Tuple[Site, Site]
    q: float
    taus: List[int]
    zs: List[int]
    n0: Optional[int] = None
    censored: bool = False
    # x-coordinate of γ^x − γ^y at each τ_j; the sign flips when the origins are swapped.
    separations: List[int] = dc_field(default_factory=list)

    @property
    def coalesced(self) -> bool:
        return self.n0 is not None

    def transitions(self) -> List[Tuple[int, int, int]]:
        """(Z_j, Z_{j+1}, τ_{j+1} − τ_j) for every consecutive pair."""
        return [
            (self.zs[j], self.zs[j + 1], self.taus[j + 1] - self.taus[j])
            for j in range(len(self.zs) - 1)
        ]

    def joint_gaps(self) -> List[int]:
        return [b - a for a, b in zip(self.taus, self.taus[1:])]

    def increment_bound_holds(self) -> bool:
        return all(abs(b - a) <= 2 * dt for a, b, dt in self.transitions())

    def parity_conserved(self) -> bool:
        return len({z % 2 for z in self.zs}) <= 1

    def absorption_permanent(self) -> bool:
        seen_zero = False
        for z in self.zs:
            if seen_zero and z != 0:
                return False
            seen_zero = seen_zero or z == 0
        return True


def joint_trace(
    field: PassageField,
    origin_x: Iterable[int],
    origin_y: Iterable[int],
    q: float,
    table: Optional[LevelTable] = None,
    escape_margin: Optional[int] = None,
    max_length: Optional[int] = None,
) -> CoalescenceTrace:
    """Both q-paths on one field and one U stream; τ_j = common regeneration times.

    Every site on a stabilized prefix escapes, so τ_j is exactly the set of
    lengths where both finite constructions regenerate.
    """

    x, y = Site(*origin_x), Site(*origin_y)
    if x.level != y.level:
        raise PreconditionDiagonal(f"{tuple(x)} y {tuple(y)} no comparten antidiagonal")
    table = table or level_table(field, "forward")
    trace_x = stabilized_path(field, x, q, table, escape_margin, max_length)
    trace_y = trace_x if x == y else stabilized_path(field, y, q, table, escape_margin, max_length)
    return combine_traces(trace_x, trace_y, q)


def combine_traces(trace_x: QPathTrace, trace_y: QPathTrace, q: float) -> CoalescenceTrace:
    horizon = min(trace_x.stabilized_upto, trace_y.stabilized_upto)
    common = set(trace_x.regeneration_times()) & set(trace_y.regeneration_times())
    taus = [0] + sorted(t for t in common if t <= horizon)

    zs, separations = [], []
    for tau in taus:
        diff = trace_x.steps[tau] - trace_y.steps[tau]
        zs.append(diff.l1)
        separations.append(diff.x)

    n0 = next(
        (n for n in range(horizon + 1) if trace_x.steps[n] == trace_y.steps[n]),
        None,
    )
    return CoalescenceTrace(
        origins=(trace_x.origin, trace_y.origin),
        q=q,
        taus=taus,
        zs=zs,
        n0=n0,
        censored=trace_x.censored or trace_y.censored,
        separations=separations,
    )


def level_shifted_trace(
    field: PassageField,
    origin_x: Iterable[int],
    origin_y: Iterable[int],
    q: float,
    table: Optional[LevelTable] = None,
    escape_margin: Optional[int] = None,
    max_length: Optional[int] = None,
) -> CoalescenceTrace:
    """Joint trace for origins on different anti-diagonals.

    The lower origin's q-path is advanced by the level difference; its
    continuation from there is the q-path of the reached site.
    """

    x, y = Site(*origin_x), Site(*origin_y)
    table = table or level_table(field, "forward")
    if x.level < y.level:
        trace = level_shifted_trace(field, y, x, q, table, escape_margin, max_length)
        trace.origins = (trace.origins[1], trace.origins[0])
        trace.separations = [-s for s in trace.separations]
        return trace
    shift = x.level - y.level
    if shift:
        lower = stabilized_path(field, y, q, table, escape_margin, max_length=shift)
        if lower.stabilized_upto < shift:
            raise InsufficientLength(f"el camino desde {tuple(y)} no alcanza el nivel {x.level}")
        y = lower.steps[shift]
    return joint_trace(field, x, y, q, table, escape_margin, max_length)


def fit_joint_tail(samples: Iterable[int], **kwargs) -> TailFit:
    """(Ĉ3, Ĉ4) sobre τ_{j+1} − τ_j; mismo estimador que la cola marginal."""
    return fit_regeneration_tail(samples, **kwargs)


@dataclass(frozen=True)
class DriftEstimate:
    m: int
    drift: float
    stderr: float
    n: int
    absorptions: int = 0

    @property
    def absorption_probability(self) -> float:
        total = self.n + self.absorptions
        return self.absorptions / total if total else float("nan")

    @property
    def upper(self) -> float:
        return self.drift + 2 * self.stderr


@dataclass
class DriftProfile:
    estimates: List[DriftEstimate]
    absorptions: Dict[int, int]
    omitted: List[int]

    def as_dict(self) -> dict:
        return {
            "estimates": [
                {
                    "m": e.m,
                    "drift": e.drift,
                    "stderr": e.stderr,
                    "n": e.n,
                    "absorptions": e.absorptions,
                    "absorption_probability": e.absorption_probability,
                }
                for e in self.estimates
            ],
            "absorptions": {str(m): c for m, c in sorted(self.absorptions.items())},
            "omitted": self.omitted,
        }


def drift_profile(
    traces: Sequence[CoalescenceTrace],
    buckets: Sequence[int],
    tolerance: int = 0,
    min_transitions: Optional[int] = None,
) -> DriftProfile:
    """Media de log Z_{j+1} − log Z_j por cubeta |Z_j − m| ≤ tolerance.

    Las transiciones a Z = 0 no entran en la media; se cuentan como absorciones.
    """

    minimum = Config.DRIFT_MIN_TRANSITIONS if min_transitions is None else min_transitions
    transitions = [t for trace in traces for t in trace.transitions() if t[0] > 0]
    z_now = np.array([t[0] for t in transitions], dtype=float)
    z_next = np.array([t[1] for t in transitions], dtype=float)

    estimates, absorptions, omitted = [], {}, []
    for m in buckets:
        in_bucket = np.abs(z_now - m) <= tolerance
        absorbed = in_bucket & (z_next == 0)
        moving = in_bucket & (z_next > 0)
        absorptions[m] = int(absorbed.sum())
        n = int(moving.sum())
        if in_bucket.sum() < minimum or n == 0:
            logger.info(
                "Cubeta m=%s omitida: %s transiciones (%s absorbentes)",
                m,
                int(in_bucket.sum()),
                absorptions[m],
            )
            omitted.append(m)
            continue
        diffs = np.log(z_next[moving]) - np.log(z_now[moving])
        stderr = float(diffs.std(ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
        estimates.append(DriftEstimate(m, float(diffs.mean()), stderr, n, absorptions[m]))
    return DriftProfile(estimates, absorptions, omitted)


def choose_m0(profile: DriftProfile) -> Optional[int]:
    """Menor cubeta par a partir de la cual toda deriva + 2·stderr ≤ 0."""
    ordered = sorted(profile.estimates, key=lambda e: e.m)
    for position, estimate in enumerate(ordered):
        if estimate.m % 2:
            continue
        if all(e.upper <= 0 for e in ordered[position:]):
            return estimate.m
    return None


def increment_sign_test(traces: Sequence[CoalescenceTrace]) -> Tuple[float, int]:
    """Prueba de signos bilateral sobre Z_{j+1} − Z_j cuando τ_{j+1} − τ_j < Z_j / 2."""
    ups = downs = 0
    for trace in traces:
        for z, z_next, dt in trace.transitions():
            if z <= 0 or not dt < z / 2:
                continue
            if z_next > z:
                ups += 1
            elif z_next < z:
                downs += 1
    n = ups + downs
    if n == 0:
        return float("nan"), 0
    return float(stats.binomtest(ups, n, 0.5).pvalue), n
