"""Ventana finita de Z², campo de tiempos de paso y campo uniforme auxiliar."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, Iterable, NamedTuple, Optional, Tuple

import numpy as np

from services.errors import ConfigError, WindowBoundsError

logger = logging.getLogger(__name__)

DIRECTIONS = ("right", "up")


class Site(NamedTuple):
    """Punto (x, t) de la red."""

    x: int
    t: int

    def __add__(self, other: "Site") -> "Site":  # type: ignore[override]
        return Site(self.x + other[0], self.t + other[1])

    def __sub__(self, other: "Site") -> "Site":
        return Site(self.x - other[0], self.t - other[1])

    def __neg__(self) -> "Site":
        return Site(-self.x, -self.t)

    @property
    def l1(self) -> int:
        return abs(self.x) + abs(self.t)

    @property
    def level(self) -> int:
        """Índice de la antidiagonal x + t."""
        return self.x + self.t

    def arg(self) -> float:
        return math.atan2(self.t, self.x)


RIGHT = Site(1, 0)
UP = Site(0, 1)
LEFT = Site(-1, 0)
DOWN = Site(0, -1)


@dataclass(frozen=True)
class Window:
    x_min: int
    x_max: int
    t_min: int
    t_max: int

    def __post_init__(self) -> None:
        if self.x_min > self.x_max or self.t_min > self.t_max:
            raise ConfigError(
                f"ventana degenerada: x∈[{self.x_min},{self.x_max}] t∈[{self.t_min},{self.t_max}]"
            )

    @classmethod
    def from_origin(cls, width: int, depth: int, x0: int = 0, t0: int = 0) -> "Window":
        """Ventana de ``width`` × ``depth`` sitios con esquina inferior en (x0, t0)."""
        if width < 1 or depth < 1:
            raise ConfigError(f"dimensiones inválidas: {width}×{depth}")
        return cls(x0, x0 + width - 1, t0, t0 + depth - 1)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.x_max - self.x_min + 1, self.t_max - self.t_min + 1)

    @property
    def size(self) -> int:
        nx, nt = self.shape
        return nx * nt

    def contains(self, site: Iterable[int]) -> bool:
        x, t = site
        return self.x_min <= x <= self.x_max and self.t_min <= t <= self.t_max

    def index(self, site: Iterable[int]) -> Tuple[int, int]:
        x, t = site
        if not (self.x_min <= x <= self.x_max and self.t_min <= t <= self.t_max):
            raise WindowBoundsError(f"sitio ({x},{t}) fuera de {self}")
        return x - self.x_min, t - self.t_min

    def site_at(self, i: int, j: int) -> Site:
        return Site(self.x_min + int(i), self.t_min + int(j))

    def far_distance(self, site: Iterable[int]) -> int:
        """Distancia al borde lejano (x = x_max o t = t_max)."""
        x, t = site
        return min(self.x_max - x, self.t_max - t)

    def near_distance(self, site: Iterable[int]) -> int:
        """Distancia al borde cercano (x = x_min o t = t_min)."""
        x, t = site
        return min(x - self.x_min, t - self.t_min)

    def reflected(self) -> "Window":
        return Window(-self.x_max, -self.x_min, -self.t_max, -self.t_min)

    def transposed(self) -> "Window":
        return Window(self.t_min, self.t_max, self.x_min, self.x_max)

    def intersect(self, other: "Window") -> "Window":
        return Window(
            max(self.x_min, other.x_min),
            min(self.x_max, other.x_max),
            max(self.t_min, other.t_min),
            min(self.t_max, other.t_max),
        )

    def bounding(self, sites: Iterable[Iterable[int]], margin: int = 0) -> "Window":
        """Caja mínima que contiene ``sites`` ampliada por ``margin`` y recortada a esta ventana."""
        xs, ts = zip(*[tuple(s) for s in sites])
        box = Window(min(xs) - margin, max(xs) + margin, min(ts) - margin, max(ts) + margin)
        return self.intersect(box)

    def as_dict(self) -> Dict[str, int]:
        return {
            "x_min": self.x_min,
            "x_max": self.x_max,
            "t_min": self.t_min,
            "t_max": self.t_max,
        }


@dataclass(frozen=True)
class ExcessDistribution:
    """Ley de los tiempos de paso cerrados; toda muestra es estrictamente mayor que 1."""

    kind: str
    value: float = 2.0
    rate: float = 1.0
    lo: float = 1.5
    hi: float = 2.5

    KINDS = ("atom", "shifted_exponential", "shifted_uniform")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ConfigError(f"ley de exceso desconocida: {self.kind!r}")
        if self.kind == "atom" and not self.value > 1:
            raise ConfigError(f"el átomo debe ser > 1, recibido {self.value}")
        if self.kind == "shifted_exponential" and not self.rate > 0:
            raise ConfigError(f"la tasa debe ser > 0, recibido {self.rate}")
        if self.kind == "shifted_uniform" and not (1 < self.lo < self.hi):
            raise ConfigError(f"se requiere 1 < lo < hi, recibido ({self.lo}, {self.hi})")

    @classmethod
    def atom(cls, value: float = 2.0) -> "ExcessDistribution":
        return cls("atom", value=float(value))

    @classmethod
    def shifted_exponential(cls, rate: float) -> "ExcessDistribution":
        return cls("shifted_exponential", rate=float(rate))

    @classmethod
    def shifted_uniform(cls, lo: float, hi: float) -> "ExcessDistribution":
        return cls("shifted_uniform", lo=float(lo), hi=float(hi))

    @classmethod
    def parse(cls, text: str) -> "ExcessDistribution":
        """Interpreta ``atom:A``, ``exp:RATE`` o ``uniform:LO:HI``."""
        parts = [part.strip() for part in (text or "").strip().split(":")]
        name = parts[0].lower()
        try:
            if name == "atom" and len(parts) == 2:
                return cls.atom(float(parts[1]))
            if name in {"exp", "exponential"} and len(parts) == 2:
                return cls.shifted_exponential(float(parts[1]))
            if name == "uniform" and len(parts) == 3:
                return cls.shifted_uniform(float(parts[1]), float(parts[2]))
        except ValueError as exc:
            raise ConfigError(f"ley de exceso inválida {text!r}: {exc}") from exc
        raise ConfigError(f"ley de exceso inválida {text!r}; use atom:A, exp:RATE o uniform:LO:HI")

    @property
    def min_gap(self) -> float:
        if self.kind == "atom":
            return self.value - 1.0
        if self.kind == "shifted_uniform":
            return self.lo - 1.0
        return float(np.nextafter(1.0, 2.0) - 1.0)

    def sample(self, rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
        if self.kind == "atom":
            return np.full(shape, self.value, dtype=np.float64)
        if self.kind == "shifted_uniform":
            return rng.uniform(self.lo, self.hi, size=shape)
        values = 1.0 + rng.exponential(1.0 / self.rate, size=shape)
        # 1 + 0.0 caería en el átomo abierto.
        return np.maximum(values, np.nextafter(1.0, 2.0))

    def __str__(self) -> str:
        if self.kind == "atom":
            return f"atom:{self.value:g}"
        if self.kind == "shifted_exponential":
            return f"exp:{self.rate:g}"
        return f"uniform:{self.lo:g}:{self.hi:g}"


@dataclass(frozen=True, eq=False)
class PassageField:
    """Tiempos de paso de las aristas orientadas de cada sitio de la ventana.

    ``weights_h[i, j]`` es el peso de la arista (x,t)→(x+1,t) y ``weights_v[i, j]``
    el de (x,t)→(x,t+1), con (x,t) = ``window.site_at(i, j)``. Una arista está
    abierta exactamente cuando su peso vale 1.
    """

    window: Window
    p: float
    weights_h: np.ndarray
    weights_v: np.ndarray
    uniforms: np.ndarray
    seed: int = 0
    excess: Optional[ExcessDistribution] = None

    def __post_init__(self) -> None:
        shape = self.window.shape
        for name in ("weights_h", "weights_v", "uniforms"):
            array = getattr(self, name)
            if array.shape != shape:
                raise ConfigError(f"{name} tiene forma {array.shape}, se esperaba {shape}")
            array.setflags(write=False)
        if np.any(self.weights_h < 1) or np.any(self.weights_v < 1):
            raise ConfigError("todos los tiempos de paso deben ser >= 1")

    @cached_property
    def open_h(self) -> np.ndarray:
        mask = self.weights_h == 1.0
        mask.setflags(write=False)
        return mask

    @cached_property
    def open_v(self) -> np.ndarray:
        mask = self.weights_v == 1.0
        mask.setflags(write=False)
        return mask

    def weight(self, site: Iterable[int], direction: str) -> float:
        i, j = self.window.index(site)
        if direction == "right":
            return float(self.weights_h[i, j])
        if direction == "up":
            return float(self.weights_v[i, j])
        raise ValueError(f"dirección desconocida: {direction!r}")

    def uniform(self, site: Iterable[int]) -> float:
        i, j = self.window.index(site)
        return float(self.uniforms[i, j])

    def open_fraction(self) -> float:
        total = self.open_h.size + self.open_v.size
        return float(self.open_h.sum() + self.open_v.sum()) / total

    def header(self) -> Dict[str, object]:
        return {
            "window": self.window.as_dict(),
            "p": self.p,
            "excess": str(self.excess) if self.excess else None,
            "seed": int(self.seed),
        }


# Lado de los bloques absolutos en que se sortean los flujos.
TILE = 64

_STREAM_IDS = {"gate": 0, "excess": 1, "uniform": 2}


def _zigzag(n: int) -> int:
    return 2 * n if n >= 0 else -2 * n - 1


def _tile_generator(seed: int, stream: str, bx: int, bt: int) -> np.random.Generator:
    entropy = [int(seed), _STREAM_IDS[stream], _zigzag(bx), _zigzag(bt)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _site_draws(
    window: Window,
    seed: int,
    stream: str,
    draw: Callable[[np.random.Generator, Tuple[int, ...]], np.ndarray],
    layers: int,
) -> np.ndarray:
    """Arreglo (layers, nx, nt) cuyo valor en cada sitio depende solo de (seed, stream, x, t).

    El plano se parte en bloques absolutos de ``TILE``×``TILE``; cada bloque tiene su
    propio flujo Philox y la ventana copia la parte que le toca de cada uno.
    """

    out = np.empty((layers,) + window.shape, dtype=np.float64)
    for bx in range(window.x_min // TILE, window.x_max // TILE + 1):
        x0, x1 = max(window.x_min, bx * TILE), min(window.x_max, bx * TILE + TILE - 1)
        for bt in range(window.t_min // TILE, window.t_max // TILE + 1):
            t0, t1 = max(window.t_min, bt * TILE), min(window.t_max, bt * TILE + TILE - 1)
            block = draw(_tile_generator(seed, stream, bx, bt), (layers, TILE, TILE))
            out[:, x0 - window.x_min:x1 - window.x_min + 1, t0 - window.t_min:t1 - window.t_min + 1] = block[
                :, x0 - bx * TILE:x1 - bx * TILE + 1, t0 - bt * TILE:t1 - bt * TILE + 1
            ]
    return out


def sample_field(
    window: Window,
    p: float,
    excess: ExcessDistribution,
    seed: int,
) -> PassageField:
    """Muestrea un campo de tiempos de paso sobre ``window``.

    Cada arista tiene peso 1 con probabilidad ``p`` y, si no, una muestra de
    ``excess``. Compuerta, exceso y U salen de flujos Philox separados, indexados
    por sitio absoluto: con la misma semilla una ventana mayor restringida a una
    menor reproduce exactamente sus valores. La compuerta no depende de ``p``, de
    modo que subir ``p`` solo abre aristas (acoplamiento monótono).
    """

    if not (0 < p <= 1):
        raise ConfigError(f"p debe estar en (0, 1], recibido {p}")
    if seed < 0:
        raise ConfigError(f"la semilla debe ser no negativa, recibido {seed}")

    gate = _site_draws(window, seed, "gate", lambda rng, shape: rng.random(shape), 2)
    weights = _site_draws(window, seed, "excess", excess.sample, 2)
    weights[gate < p] = 1.0
    del gate

    uniforms = _site_draws(window, seed, "uniform", lambda rng, shape: rng.random(shape), 1)[0]
    logger.debug("Campo muestreado %s p=%s semilla=%s", window, p, seed)
    return PassageField(
        window=window,
        p=float(p),
        weights_h=weights[0],
        weights_v=weights[1],
        uniforms=uniforms,
        seed=int(seed),
        excess=excess,
    )


def is_open(field: PassageField, site: Iterable[int], direction: str) -> bool:
    """True si la arista orientada que sale de ``site`` hacia ``direction`` está abierta."""

    site = Site(*site)
    step = RIGHT if direction == "right" else UP
    if direction not in DIRECTIONS:
        raise ValueError(f"dirección desconocida: {direction!r}")
    if not field.window.contains(site + step):
        raise WindowBoundsError(f"la arista {site}→{site + step} sale de la ventana")
    return field.weight(site, direction) == 1.0


def field_from_arrays(
    window: Window,
    weights_h: np.ndarray,
    weights_v: np.ndarray,
    uniforms: Optional[np.ndarray] = None,
    p: Optional[float] = None,
    seed: int = 0,
    excess: Optional[ExcessDistribution] = None,
) -> PassageField:
    """Construye un campo a partir de arreglos explícitos."""

    weights_h = np.array(weights_h, dtype=np.float64)
    weights_v = np.array(weights_v, dtype=np.float64)
    if uniforms is None:
        uniforms = np.full(window.shape, 0.5)
    uniforms = np.array(uniforms, dtype=np.float64)
    if p is None:
        total = weights_h.size + weights_v.size
        p = float((weights_h == 1).sum() + (weights_v == 1).sum()) / total if total else 1.0
    return PassageField(window, p, weights_h, weights_v, uniforms, seed, excess)


def field_from_openness(
    window: Window,
    open_h: np.ndarray,
    open_v: np.ndarray,
    uniforms: Optional[np.ndarray] = None,
    closed_weight: float = 2.0,
) -> PassageField:
    """Campo con aristas abiertas donde ``open_*`` es verdadero y ``closed_weight`` en el resto."""

    weights_h = np.where(np.asarray(open_h, dtype=bool), 1.0, closed_weight)
    weights_v = np.where(np.asarray(open_v, dtype=bool), 1.0, closed_weight)
    return field_from_arrays(window, weights_h, weights_v, uniforms)


def reflect_field(field: PassageField) -> PassageField:
    """Reflexión puntual (x,t) → (−x,−t).

    La arista orientada (x,t)→(x+1,t) pasa a ser la arista orientada
    (−x−1,−t)→(−x,−t) del campo reflejado. Las aristas que salen del borde
    lejano reflejado no existen en el campo original y quedan cerradas (inf).
    """

    weights_h = np.full(field.window.shape, np.inf)
    weights_v = np.full(field.window.shape, np.inf)
    weights_h[:-1, :] = field.weights_h[::-1, ::-1][1:, :]
    weights_v[:, :-1] = field.weights_v[::-1, ::-1][:, 1:]
    return PassageField(
        window=field.window.reflected(),
        p=field.p,
        weights_h=weights_h,
        weights_v=weights_v,
        uniforms=field.uniforms[::-1, ::-1].copy(),
        seed=field.seed,
        excess=field.excess,
    )


def transpose_field(field: PassageField) -> PassageField:
    """Reflexión diagonal (x,t) → (t,x) con U → 1 − U."""

    return PassageField(
        window=field.window.transposed(),
        p=field.p,
        weights_h=field.weights_v.T.copy(),
        weights_v=field.weights_h.T.copy(),
        uniforms=1.0 - field.uniforms.T,
        seed=field.seed,
        excess=field.excess,
    )


def write_field_snapshot(field: PassageField, path: str) -> None:
    """Escribe ``# {cabecera JSON}`` seguido de una línea ``x t w_right w_up u`` por sitio."""

    nx, nt = field.window.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + json.dumps(field.header(), sort_keys=True) + "\n")
        for i in range(nx):
            for j in range(nt):
                site = field.window.site_at(i, j)
                fh.write(
                    f"{site.x} {site.t} {float(field.weights_h[i, j])!r} "
                    f"{float(field.weights_v[i, j])!r} {float(field.uniforms[i, j])!r}\n"
                )


def read_field_snapshot(path: str) -> PassageField:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ConfigError(f"{path}: falta la cabecera JSON")
        header = json.loads(first[2:])
        window = Window(**header["window"])
        weights_h = np.empty(window.shape)
        weights_v = np.empty(window.shape)
        uniforms = np.empty(window.shape)
        for line_number, line in enumerate(fh, start=2):
            parts = line.split()
            if len(parts) != 5:
                raise ConfigError(f"{path}: línea {line_number} mal formada")
            i, j = window.index((int(parts[0]), int(parts[1])))
            weights_h[i, j] = float(parts[2])
            weights_v[i, j] = float(parts[3])
            uniforms[i, j] = float(parts[4])

    excess = ExcessDistribution.parse(header["excess"]) if header.get("excess") else None
    return PassageField(window, header["p"], weights_h, weights_v, uniforms, header["seed"], excess)
