"""Estadísticas de regeneración: colas exponenciales y dirección asintótica."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from config import Config
from services.errors import InsufficientSamples

logger = logging.getLogger(__name__)

CI_METHODS = ("bootstrap", "delta")


@dataclass(frozen=True)
class TailFit:
    """Ajuste log-lineal de la supervivencia empírica P(T ≥ n) ≈ C1·exp(−C2·n)."""

    rate: float
    prefactor: float
    sample_size: int
    goodness: float
    rate_stderr: float = float("nan")
    rate_ci: Tuple[float, float] = (float("nan"), float("nan"))
    degenerate: bool = False

    @property
    def accepted(self) -> bool:
        return not self.degenerate and self.rate > 0

    def as_dict(self) -> dict:
        return {
            "rate": self.rate,
            "prefactor": self.prefactor,
            "sample_size": self.sample_size,
            "goodness": self.goodness,
            "rate_stderr": self.rate_stderr,
            "rate_ci": list(self.rate_ci),
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class DirectionEstimate:
    q: float
    theta_hat: float
    mean_T: float
    mean_Y: Tuple[float, float]
    ci_halfwidth: float
    n_regenerations: int
    method: str = "bootstrap"

    @property
    def velocity(self) -> Tuple[float, float]:
        return (self.mean_Y[0] / self.mean_T, self.mean_Y[1] / self.mean_T)

    def as_dict(self) -> dict:
        return {
            "q": self.q,
            "theta_hat": self.theta_hat,
            "ci": self.ci_halfwidth,
            "mean_T": self.mean_T,
            "mean_Y": list(self.mean_Y),
            "n_regenerations": self.n_regenerations,
            "method": self.method,
        }


def bootstrap_replicates(
    n: int,
    statistic: Callable[[np.ndarray], float],
    n_resamples: int,
    seed: int,
) -> np.ndarray:
    """Evalúa ``statistic`` sobre ``n_resamples`` vectores de índices remuestreados."""
    rng = np.random.default_rng(seed)
    out = np.empty(n_resamples, dtype=float)
    for b in range(n_resamples):
        out[b] = statistic(rng.integers(0, n, size=n))
    return out


def _survival(samples: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(n, P̂(T ≥ n)) para n = 1 .. max+1."""
    counts = np.bincount(samples, minlength=int(samples.max()) + 2)
    at_least = counts[::-1].cumsum()[::-1]
    ns = np.arange(1, counts.size)
    return ns, at_least[1:] / samples.size


def _fit_range(samples: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    ns, survival = _survival(samples)
    keep = survival >= 10.0 / samples.size
    return ns[keep], np.log(survival[keep])


def _slope(samples: np.ndarray) -> float:
    xs, ys = _fit_range(samples)
    if xs.size < 2 or np.ptp(ys) == 0:
        return float("nan")
    return stats.linregress(xs, ys).slope


def _goodness(samples: np.ndarray, xs: np.ndarray, rate: float, prefactor: float) -> float:
    """p-valor chi-cuadrado del histograma frente a la ley geométrica ajustada."""
    lo, hi = int(xs[0]), int(xs[-1])
    observed = np.array([(samples == n).sum() for n in range(lo, hi)] + [(samples >= hi).sum()], float)
    fitted = prefactor * np.exp(-rate * np.arange(lo, hi + 2))
    expected = np.append(fitted[:-2] - fitted[1:-1], fitted[-2])
    expected = np.clip(expected, 1e-12, None)
    expected *= observed.sum() / expected.sum()
    # Agrupa la cola hasta que cada celda espere al menos 5 observaciones.
    while expected.size > 2 and expected[-1] < 5:
        expected[-2] += expected[-1]
        observed[-2] += observed[-1]
        expected, observed = expected[:-1], observed[:-1]
    if expected.size < 4:
        return float("nan")
    return float(stats.chisquare(observed, expected, ddof=2).pvalue)


def fit_regeneration_tail(
    samples: Iterable[int],
    min_samples: Optional[int] = None,
    n_bootstrap: int = 0,
    seed: int = 0,
    ci_level: Optional[float] = None,
) -> TailFit:
    """Mínimos cuadrados sobre log P̂(T ≥ n) donde P̂ ≥ 10/N."""

    samples = np.asarray(list(samples), dtype=np.int64)
    min_samples = Config.TAIL_MIN_SAMPLES if min_samples is None else min_samples
    if samples.size < min_samples:
        raise InsufficientSamples(f"{samples.size} muestras, se requieren {min_samples}")
    if samples.size and samples.min() < 1:
        raise ValueError("los tiempos de regeneración son enteros >= 1")

    xs, ys = _fit_range(samples)
    if xs.size < 3 or np.ptp(ys) == 0:
        logger.warning("Ajuste de cola degenerado: soporte %s", np.unique(samples)[:5])
        return TailFit(
            rate=float("nan"),
            prefactor=float("nan"),
            sample_size=int(samples.size),
            goodness=float("nan"),
            degenerate=True,
        )

    fit = stats.linregress(xs, ys)
    rate = -float(fit.slope)
    prefactor = float(math.exp(fit.intercept))
    goodness = _goodness(samples, xs, rate, prefactor)

    rate_ci = (float("nan"), float("nan"))
    if n_bootstrap > 0:
        level = Config.CI_LEVEL if ci_level is None else ci_level
        slopes = bootstrap_replicates(
            samples.size, lambda idx: _slope(samples[idx]), n_bootstrap, seed
        )
        slopes = slopes[np.isfinite(slopes)]
        if slopes.size:
            tail = 100 * (1 - level) / 2
            lo, hi = np.percentile(-slopes, [tail, 100 - tail])
            rate_ci = (float(lo), float(hi))

    return TailFit(
        rate=rate,
        prefactor=prefactor,
        sample_size=int(samples.size),
        goodness=goodness,
        rate_stderr=float(fit.stderr),
        rate_ci=rate_ci,
    )


def _angle(mean_y: np.ndarray) -> float:
    return math.atan2(float(mean_y[1]), float(mean_y[0]))


def estimate_direction(
    durations: Sequence[int],
    increments: Sequence[Sequence[int]],
    q: float = float("nan"),
    method: Optional[str] = None,
    n_bootstrap: Optional[int] = None,
    seed: int = 0,
    min_samples: Optional[int] = None,
    ci_level: Optional[float] = None,
) -> DirectionEstimate:
    """θ̂ = arg(media de Y) a partir de pares i.i.d. (T_j − T_{j−1}, Y_j)."""

    durations = np.asarray(durations, dtype=float)
    increments = np.asarray(increments, dtype=float).reshape(-1, 2)
    if durations.size != increments.shape[0]:
        raise ValueError("durations e increments deben tener la misma longitud")
    n = durations.size
    min_samples = Config.DIRECTION_MIN_SAMPLES if min_samples is None else min_samples
    if n < max(min_samples, 1):
        raise InsufficientSamples(f"{n} regeneraciones, se requieren {min_samples}")

    method = (method or Config.CI_METHOD).lower()
    if method not in CI_METHODS:
        raise ValueError(f"método de IC desconocido: {method!r}")
    level = Config.CI_LEVEL if ci_level is None else ci_level

    mean_y = increments.mean(axis=0)
    theta = _angle(mean_y)

    if method == "bootstrap":
        resamples = Config.BOOTSTRAP_RESAMPLES if n_bootstrap is None else n_bootstrap
        angles = bootstrap_replicates(
            n, lambda idx: _angle(increments[idx].mean(axis=0)), resamples, seed
        )
        tail = 100 * (1 - level) / 2
        lo, hi = np.percentile(angles, [tail, 100 - tail])
        halfwidth = float(hi - lo) / 2
    else:
        # Método delta sobre θ = atan2(ȳ_t, ȳ_x).
        norm2 = float(mean_y @ mean_y)
        grad = np.array([-mean_y[1], mean_y[0]]) / norm2
        cov = np.cov(increments, rowvar=False) if n > 1 else np.zeros((2, 2))
        z = stats.norm.ppf(0.5 + level / 2)
        halfwidth = float(z * math.sqrt(max(grad @ cov @ grad, 0.0) / n))

    return DirectionEstimate(
        q=q,
        theta_hat=theta,
        mean_T=float(durations.mean()),
        mean_Y=(float(mean_y[0]), float(mean_y[1])),
        ci_halfwidth=halfwidth,
        n_regenerations=int(n),
        method=method,
    )


def within_joint_ci(a: float, ci_a: float, b: float, ci_b: float) -> bool:
    """|a − b| ≤ sqrt(ci_a² + ci_b²)."""
    return abs(a - b) <= math.hypot(ci_a, ci_b)
