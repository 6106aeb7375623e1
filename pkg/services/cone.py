"""Cono de percolación: velocidad del camino más a la derecha y curva θ(q)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import Config
from services.errors import InsufficientSamples, OriginNotPercolating, SubcriticalSuspected
from services.job_queue import replica_seed, run_replicas
from services.lattice import ExcessDistribution, Site, Window, sample_field
from services.percolation import level_table, perc_status
from services.qpath import stabilized_path
from services.regeneration import (
    DirectionEstimate,
    bootstrap_replicates,
    estimate_direction,
)

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
ALPHA_MAX = 1.0 / SQRT2


@dataclass(frozen=True)
class ConeEstimate:
    p: float
    alpha_hat: float
    M: Tuple[float, float]
    N: Tuple[float, float]
    theta_minus: float
    theta_plus: float
    ci: Dict[str, float] = dc_field(default_factory=dict)
    n_regenerations: int = 0
    escape_rate: float = float("nan")

    def as_dict(self) -> dict:
        return {
            "p": self.p,
            "alpha_hat": self.alpha_hat,
            "M": list(self.M),
            "N": list(self.N),
            "theta_minus": self.theta_minus,
            "theta_plus": self.theta_plus,
            "ci": dict(self.ci),
            "n_regenerations": self.n_regenerations,
            "escape_rate": self.escape_rate,
        }


def cone_from_alpha(p: float, alpha: float, alpha_ci: float = float("nan")) -> ConeEstimate:
    """M = (1/2 + α/√2, 1/2 − α/√2), N su simétrico; ángulos como arctan de cocientes."""

    if not (-1e-12 <= alpha <= ALPHA_MAX + 1e-12):
        raise ValueError(f"alpha fuera de [0, 1/√2]: {alpha}")
    alpha = min(max(alpha, 0.0), ALPHA_MAX)
    m = (0.5 + alpha / SQRT2, 0.5 - alpha / SQRT2)
    n = (m[1], m[0])
    theta_minus = math.atan2(m[1], m[0])
    theta_plus = math.atan2(n[1], n[0])
    # dθ/dα en M: las coordenadas suman 1, así que |M|² aparece en el denominador.
    angle_ci = alpha_ci * (1.0 / SQRT2) / (m[0] ** 2 + m[1] ** 2) if math.isfinite(alpha_ci) else alpha_ci
    return ConeEstimate(
        p=p,
        alpha_hat=alpha,
        M=m,
        N=n,
        theta_minus=theta_minus,
        theta_plus=theta_plus,
        ci={"alpha": alpha_ci, "theta_minus": angle_ci, "theta_plus": angle_ci},
    )


def alpha_from_means(mean_y: Sequence[float]) -> float:
    """Componente de la velocidad sobre (1,−1)/√2 con la normalización x + t = 1."""
    total = mean_y[0] + mean_y[1]
    return (mean_y[0] - mean_y[1]) / (SQRT2 * total)


def default_origin(window: Window) -> Site:
    return window.site_at(0, 0)


def _path_replica(payload: dict) -> dict:
    """Trayectorias q de un origen fijo sobre un campo; q comparte U y pesos."""

    window = Window(**payload["window"])
    margin = payload["escape_margin"]
    field = sample_field(
        window, payload["p"], ExcessDistribution.parse(payload["excess"]), payload["seed"]
    )
    table = level_table(field, "forward")
    origin = Site(*payload["origin"])
    result = {"replica": payload["replica"], "escaped": False, "paths": []}
    if not perc_status(table, origin, margin).escapes:
        return result
    result["escaped"] = True
    for q in payload["q_grid"]:
        try:
            trace = stabilized_path(field, origin, q, table, margin)
        except OriginNotPercolating:
            logging.warning("Réplica %s: origen sin percolación para q=%s", payload["replica"], q)
            continue
        result["paths"].append(
            {
                "q": q,
                "durations": trace.durations().tolist(),
                "increments": trace.increments().tolist(),
                "censored": trace.censored,
                "steps": trace.steps[: trace.stabilized_upto + 1],
            }
        )
    # Ángulos acoplados a la longitud común de todas las q de la réplica.
    paths = result["paths"]
    if paths and len(paths) == len(payload["q_grid"]):
        common = min(len(path["steps"]) for path in paths) - 1
        if common >= 1:
            result["angles"] = [(path["steps"][common] - origin).arg() for path in paths]
    for path in paths:
        del path["steps"]
    return result


def simulate_paths(
    p: float,
    q_grid: Sequence[float],
    replicas: int,
    window: Window,
    seed: int,
    excess: Optional[ExcessDistribution] = None,
    escape_margin: Optional[int] = None,
    origin: Optional[Site] = None,
    workers: Optional[int] = None,
) -> List[dict]:
    excess = excess or ExcessDistribution.parse(Config.DEFAULT_EXCESS)
    margin = Config.ESCAPE_MARGIN if escape_margin is None else escape_margin
    origin = origin or default_origin(window)
    payloads = [
        {
            "replica": r,
            "window": window.as_dict(),
            "p": p,
            "excess": str(excess),
            "seed": replica_seed(seed, r),
            "escape_margin": margin,
            "origin": tuple(origin),
            "q_grid": list(q_grid),
        }
        for r in range(replicas)
    ]
    return run_replicas(_path_replica, payloads, workers)


def _escape_rate(results: Sequence[dict], p: float) -> float:
    rate = sum(r["escaped"] for r in results) / max(len(results), 1)
    if rate < Config.ESCAPE_RATE_FLOOR:
        raise SubcriticalSuspected(
            f"p={p}: solo {rate:.3f} de los orígenes percolan (mínimo {Config.ESCAPE_RATE_FLOOR})"
        )
    return rate


def _pooled(results: Sequence[dict], q: float) -> Tuple[np.ndarray, np.ndarray]:
    durations, increments = [], []
    for result in results:
        for path in result["paths"]:
            if path["q"] == q:
                durations.extend(path["durations"])
                increments.extend(path["increments"])
    return np.asarray(durations, dtype=float), np.asarray(increments, dtype=float).reshape(-1, 2)


def estimate_alpha(
    p: float,
    replicas: int,
    window: Window,
    seed: int,
    excess: Optional[ExcessDistribution] = None,
    escape_margin: Optional[int] = None,
    origin: Optional[Site] = None,
    workers: Optional[int] = None,
    n_bootstrap: Optional[int] = None,
    min_samples: Optional[int] = None,
) -> ConeEstimate:
    """α̂ a partir de las regeneraciones del camino q = 1 (el más a la derecha)."""

    results = simulate_paths(p, [1.0], replicas, window, seed, excess, escape_margin, origin, workers)
    rate = _escape_rate(results, p)
    durations, increments = _pooled(results, 1.0)
    minimum = Config.DIRECTION_MIN_SAMPLES if min_samples is None else min_samples
    if durations.size < max(minimum, 1):
        raise InsufficientSamples(f"{durations.size} regeneraciones para α, se requieren {minimum}")

    alpha = alpha_from_means(increments.mean(axis=0))
    resamples = Config.BOOTSTRAP_RESAMPLES if n_bootstrap is None else n_bootstrap
    boot = bootstrap_replicates(
        durations.size,
        lambda idx: alpha_from_means(increments[idx].mean(axis=0)),
        resamples,
        seed,
    )
    tail = 100 * (1 - Config.CI_LEVEL) / 2
    lo, hi = np.percentile(boot, [tail, 100 - tail])
    estimate = cone_from_alpha(p, alpha, float(hi - lo) / 2)
    logger.info("α̂(p=%s) = %.5f ± %.5f sobre %s regeneraciones", p, alpha, (hi - lo) / 2, durations.size)
    return replace(estimate, n_regenerations=int(durations.size), escape_rate=rate)


@dataclass
class ThetaCurve:
    p: float
    q_grid: List[float]
    estimates: List[DirectionEstimate]
    # Ángulo de γ_q(L) − origen por réplica, con L común a todas las q de la réplica.
    replica_angles: List[List[float]]
    mean_T1: List[float]
    censored: int = 0
    skipped: int = 0
    escape_rate: float = float("nan")

    @property
    def monotone(self) -> bool:
        return all(
            all(b <= a for a, b in zip(row, row[1:])) for row in self.replica_angles
        )

    def as_dict(self) -> dict:
        return {
            "p": self.p,
            "curve": [e.as_dict() for e in self.estimates],
            "mean_T1": self.mean_T1,
            "monotone": self.monotone,
            "censored": self.censored,
            "skipped": self.skipped,
            "escape_rate": self.escape_rate,
        }


def theta_curve_from_results(
    p: float,
    q_grid: Sequence[float],
    results: Sequence[dict],
    seed: int = 0,
    method: Optional[str] = None,
    n_bootstrap: Optional[int] = None,
    min_samples: Optional[int] = None,
) -> ThetaCurve:
    rate = _escape_rate(results, p)
    estimates, mean_t1 = [], []
    for position, q in enumerate(q_grid):
        durations, increments = _pooled(results, q)
        estimates.append(
            estimate_direction(
                durations,
                increments,
                q=q,
                method=method,
                n_bootstrap=n_bootstrap,
                seed=seed + position,
                min_samples=min_samples,
            )
        )
        firsts = [
            path["durations"][0]
            for result in results
            for path in result["paths"]
            if path["q"] == q and path["durations"]
        ]
        mean_t1.append(float(np.mean(firsts)) if firsts else float("nan"))

    angles, censored, skipped = [], 0, 0
    for result in results:
        if not result["escaped"] or len(result["paths"]) != len(q_grid):
            skipped += 1
            continue
        censored += sum(path["censored"] for path in result["paths"])
        if "angles" in result:
            angles.append(result["angles"])

    return ThetaCurve(
        p=p,
        q_grid=list(q_grid),
        estimates=estimates,
        replica_angles=angles,
        mean_T1=mean_t1,
        censored=censored,
        skipped=skipped,
        escape_rate=rate,
    )


def theta_curve(
    p: float,
    q_grid: Sequence[float],
    replicas: int,
    window: Window,
    seed: int,
    excess: Optional[ExcessDistribution] = None,
    escape_margin: Optional[int] = None,
    origin: Optional[Site] = None,
    workers: Optional[int] = None,
    method: Optional[str] = None,
    n_bootstrap: Optional[int] = None,
    min_samples: Optional[int] = None,
) -> ThetaCurve:
    """θ̂(q) sobre la rejilla con campos y flujos U compartidos entre valores de q."""

    q_grid = [float(q) for q in q_grid]
    if any(not 0 <= q <= 1 for q in q_grid) or q_grid != sorted(q_grid):
        raise ValueError(f"q_grid debe estar ordenada dentro de [0, 1]: {q_grid}")
    results = simulate_paths(p, q_grid, replicas, window, seed, excess, escape_margin, origin, workers)
    return theta_curve_from_results(p, q_grid, results, seed, method, n_bootstrap, min_samples)
