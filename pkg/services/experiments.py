"""Experimentos reproducibles: configuración, réplicas, agregación y artefactos."""

from __future__ import annotations

import configparser
import logging
import math
import os
import re
from dataclasses import asdict, dataclass, field as dc_field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from config import Config
from services import artifacts
from services.cone import (
    ALPHA_MAX,
    cone_from_alpha,
    estimate_alpha,
    simulate_paths,
    theta_curve_from_results,
)
from services.coalescence import (
    choose_m0,
    combine_traces,
    drift_profile,
    fit_joint_tail,
    increment_sign_test,
)
from services.errors import (
    CensoredBeforeFound,
    ConfigError,
    Disconnected,
    InsufficientSamples,
    OriginNotPercolating,
    WindowBoundsError,
    WindowExhausted,
)
from services.geodesic import (
    build_sandwich_region,
    constrained_geodesic,
    enumerate_passage_time,
    exact_region,
    bi_infinite_geodesic,
    passage_time,
    path_time,
    sandwich_geodesic,
    verify_oriented_geodesic,
)
from services.job_queue import replica_seed, run_replicas
from services.lattice import (
    ExcessDistribution,
    Site,
    Window,
    field_from_openness,
    sample_field,
)
from services.percolation import (
    bidirectional_mask,
    bracket_threshold,
    enumerate_longest_paths,
    escape_fraction,
    level_table,
    perc_status,
)
from services.qpath import build_gamma_k, limit_path, stabilized_path
from services.regeneration import (
    estimate_direction,
    fit_regeneration_tail,
    within_joint_ci,
)

logger = logging.getLogger(__name__)

EXPERIMENTS = (
    "direction-curve",
    "coalescence",
    "sandwich",
    "bigeodesic",
    "cone",
    "oracle-sweep",
    "regeneration-tail",
    "bidirectional-density",
    "threshold",
)

# Valores por experimento cuando ni el archivo ni la línea de comandos los fijan.
# Un camino orientado en una ventana de 2000×2000 cruza los niveles x + t hasta ~4000;
# para alejar también el borde lateral basta con --width 4000 --depth 4000.
EXPERIMENT_DEFAULTS: Dict[str, Dict[str, object]] = {
    "direction-curve": {"width": 2000, "depth": 2000, "replicas": 200},
    "coalescence": {"width": 2000, "depth": 2000, "replicas": 1000},
    "sandwich": {"width": 400, "depth": 400, "replicas": 200, "sites_per_replica": 5},
    "bigeodesic": {"width": 400, "depth": 400, "replicas": 200, "sites_per_replica": 5},
    "cone": {"width": 2000, "depth": 2000, "replicas": 200},
    "oracle-sweep": {"width": 5, "depth": 5, "replicas": 500},
    "regeneration-tail": {"width": 512, "depth": 512, "replicas": 10000},
    "bidirectional-density": {"width": 600, "depth": 600, "replicas": 10},
    "threshold": {"width": 400, "depth": 400, "replicas": 1},
}

_GRID_11 = [round(0.1 * k, 10) for k in range(11)]


@dataclass
class ExperimentConfig:
    experiment: str
    p: float = dc_field(default_factory=lambda: Config.DEFAULT_P)
    q: float = 0.5
    q_grid: List[float] = dc_field(default_factory=lambda: list(_GRID_11))
    excess: str = dc_field(default_factory=lambda: Config.DEFAULT_EXCESS)
    width: Optional[int] = None
    depth: Optional[int] = None
    escape_margin: int = dc_field(default_factory=lambda: Config.ESCAPE_MARGIN)
    replicas: Optional[int] = None
    seed: int = 0
    separations: List[int] = dc_field(default_factory=lambda: [2, 10, 50])
    buckets: List[int] = dc_field(default_factory=lambda: [20, 40, 80])
    bucket_tolerance: int = 2
    subpath_checks: int = dc_field(default_factory=lambda: Config.SUBPATH_CHECKS)
    sites_per_replica: Optional[int] = None
    p_compare: Optional[float] = None
    iterations: int = 6
    ci_method: str = dc_field(default_factory=lambda: Config.CI_METHOD)
    out_dir: str = dc_field(default_factory=lambda: Config.OUTPUT_DIR)
    render: bool = dc_field(default_factory=lambda: Config.RENDER_SVG)
    workers: int = dc_field(default_factory=lambda: Config.WORKERS)
    check: bool = False

    @property
    def window(self) -> Window:
        return Window.from_origin(self.width, self.depth)

    @property
    def excess_law(self) -> ExcessDistribution:
        return ExcessDistribution.parse(self.excess)

    def scientific(self) -> Dict[str, object]:
        """Parámetros que determinan los resultados; excluye rutas y paralelismo."""
        data = asdict(self)
        for key in ("out_dir", "workers", "check"):
            data.pop(key)
        return data


def _floats(text: str) -> List[float]:
    return [float(v) for v in re.split(r"[,\s]+", text.strip()) if v]


def _ints(text: str) -> List[int]:
    return [int(v) for v in re.split(r"[,\s]+", text.strip()) if v]


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in {"1", "true", "yes", "on"}:
        return True
    if value in {"0", "false", "no", "off"}:
        return False
    raise ValueError(f"booleano inválido {text!r}")


# sección -> clave del archivo -> (atributo, conversor)
SCHEMA: Dict[str, Dict[str, Tuple[str, Callable[[str], object]]]] = {
    "experiment": {
        "name": ("experiment", str),
        "p": ("p", float),
        "q": ("q", float),
        "q_grid": ("q_grid", _floats),
        "replicas": ("replicas", int),
        "seed": ("seed", int),
        "separations": ("separations", _ints),
        "buckets": ("buckets", _ints),
        "bucket_tolerance": ("bucket_tolerance", int),
        "subpath_checks": ("subpath_checks", int),
        "sites_per_replica": ("sites_per_replica", int),
        "p_compare": ("p_compare", float),
        "iterations": ("iterations", int),
        "ci_method": ("ci_method", str),
    },
    "field": {
        "excess": ("excess", str),
        "escape_margin": ("escape_margin", int),
    },
    "window": {
        "width": ("width", int),
        "depth": ("depth", int),
    },
    "output": {
        "out_dir": ("out_dir", str),
        "render": ("render", _bool),
        "workers": ("workers", int),
    },
}

_ATTRIBUTE_SECTION = {attr: (section, key) for section, keys in SCHEMA.items() for key, (attr, _) in keys.items()}


def _line_numbers(text: str) -> Dict[Tuple[str, Optional[str]], int]:
    """Número de línea de cada sección y clave del archivo INI."""
    lines: Dict[Tuple[str, Optional[str]], int] = {}
    section = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        header = re.match(r"^\[([^\]]+)\]$", line)
        if header:
            section = header.group(1).strip()
            lines[(section, None)] = number
            continue
        key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
        if section is not None:
            lines.setdefault((section, key), number)
    return lines


def parse_config_text(text: str) -> Dict[str, object]:
    """Convierte un archivo INI en un diccionario de atributos de ExperimentConfig."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"archivo de configuración ilegible: {exc}") from exc
    lines = _line_numbers(text)
    values: Dict[str, object] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError("sección desconocida", section=section, line=lines.get((section, None)))
        for key, raw in parser.items(section):
            line = lines.get((section, key))
            if key not in SCHEMA[section]:
                raise ConfigError("clave desconocida", section=section, key=key, line=line)
            attr, convert = SCHEMA[section][key]
            try:
                values[attr] = convert(raw)
            except ValueError as exc:
                raise ConfigError(f"valor inválido {raw!r}: {exc}", section=section, key=key, line=line) from exc
            values.setdefault("_lines", {})[attr] = line
    return values


def _fail(attr: str, message: str, lines: Dict[str, int]) -> None:
    section, key = _ATTRIBUTE_SECTION.get(attr, (None, attr))
    raise ConfigError(message, section=section, key=key, line=lines.get(attr))


def validate(config: ExperimentConfig, lines: Optional[Dict[str, int]] = None) -> ExperimentConfig:
    lines = lines or {}
    if config.experiment not in EXPERIMENTS:
        _fail("experiment", f"experimento desconocido {config.experiment!r}; opciones: {', '.join(EXPERIMENTS)}", lines)
    if not 0 < config.p <= 1:
        _fail("p", f"p debe estar en (0, 1], recibido {config.p}", lines)
    if config.p_compare is not None and not 0 < config.p_compare <= 1:
        _fail("p_compare", f"p_compare debe estar en (0, 1], recibido {config.p_compare}", lines)
    if not 0 <= config.q <= 1:
        _fail("q", f"q debe estar en [0, 1], recibido {config.q}", lines)
    if not config.q_grid or any(not 0 <= q <= 1 for q in config.q_grid) or config.q_grid != sorted(config.q_grid):
        _fail("q_grid", "q_grid debe ser una lista ordenada dentro de [0, 1]", lines)
    try:
        config.excess_law
    except ConfigError as exc:
        _fail("excess", str(exc), lines)
    for attr in ("width", "depth", "replicas"):
        if getattr(config, attr) < 1:
            _fail(attr, f"{attr} debe ser >= 1", lines)
    if config.escape_margin < 1:
        _fail("escape_margin", "escape_margin debe ser >= 1", lines)
    if config.seed < 0:
        _fail("seed", "la semilla debe ser no negativa", lines)
    if any(s < 0 or s % 2 for s in config.separations):
        _fail("separations", "las separaciones L1 sobre una antidiagonal son pares y no negativas", lines)
    if any(m <= 0 for m in config.buckets) or config.bucket_tolerance < 0:
        _fail("buckets", "las cubetas deben ser positivas y la tolerancia no negativa", lines)
    if config.subpath_checks < 0:
        _fail("subpath_checks", "subpath_checks debe ser >= 0", lines)
    if config.iterations < 1:
        _fail("iterations", "iterations debe ser >= 1", lines)
    if config.ci_method not in ("bootstrap", "delta"):
        _fail("ci_method", f"método de IC desconocido {config.ci_method!r}", lines)
    if config.workers < 1:
        _fail("workers", "workers debe ser >= 1", lines)
    if config.experiment == "oracle-sweep":
        if config.width * config.depth > 25:
            _fail("width", "la enumeración exhaustiva admite ventanas de a lo sumo 25 sitios", lines)
    elif min(config.width, config.depth) <= 2 * config.escape_margin:
        _fail("width", f"la ventana {config.width}×{config.depth} no deja zona sin censura con margen {config.escape_margin}", lines)
    if config.experiment in ("sandwich", "bigeodesic") and config.sites_per_replica < 1:
        _fail("sites_per_replica", "sites_per_replica debe ser >= 1", lines)
    return config


def load_config(
    path: Optional[str] = None,
    experiment: Optional[str] = None,
    overrides: Optional[Dict[str, object]] = None,
) -> ExperimentConfig:
    """Archivo INI (opcional) + opciones de línea de comandos + valores por experimento."""
    values: Dict[str, object] = {}
    if path:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                values = parse_config_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"no se puede leer {path}: {exc}") from exc
    lines = values.pop("_lines", {})
    if experiment:
        if values.get("experiment", experiment) != experiment:
            _fail("experiment", f"el archivo es para {values['experiment']!r}, no {experiment!r}", lines)
        values["experiment"] = experiment
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
            lines.pop(key, None)
    if "experiment" not in values:
        raise ConfigError("falta el nombre del experimento", section="experiment", key="name")
    name = values["experiment"]
    for key, value in EXPERIMENT_DEFAULTS.get(name, {}).items():
        values.setdefault(key, value)
    config = ExperimentConfig(**values)
    return validate(config, lines)


@dataclass
class RunResult:
    manifest: Dict[str, object]
    manifest_path: str

    @property
    def passed(self) -> bool:
        return bool(self.manifest["passed"])


@dataclass
class _Outcome:
    summary: Dict[str, object]
    checks: Dict[str, bool]
    censoring: Dict[str, int]
    files: List[str] = dc_field(default_factory=list)


def _payloads(config: ExperimentConfig, seed: Optional[int] = None, **extra) -> List[dict]:
    base_seed = config.seed if seed is None else seed
    return [
        {
            "replica": r,
            "seed": replica_seed(base_seed, r),
            "window": config.window.as_dict(),
            "p": config.p,
            "q": config.q,
            "excess": config.excess,
            "escape_margin": config.escape_margin,
            **extra,
        }
        for r in range(config.replicas)
    ]


def _replica_field(payload: dict):
    window = Window(**payload["window"])
    field = sample_field(window, payload["p"], ExcessDistribution.parse(payload["excess"]), payload["seed"])
    return field, level_table(field, "forward")


# ---------------------------------------------------------------- direction-curve


def _regeneration_rows(results: List[dict]) -> List[list]:
    rows = []
    for result in results:
        for path in result["paths"]:
            elapsed = 0
            for j, (duration, (yx, yt)) in enumerate(zip(path["durations"], path["increments"]), start=1):
                elapsed += duration
                rows.append([result["replica"], path["q"], j, elapsed, yx, yt, path["censored"]])
    return rows


def run_direction_curve(config: ExperimentConfig) -> _Outcome:
    results = simulate_paths(
        config.p, config.q_grid, config.replicas, config.window, config.seed,
        config.excess_law, config.escape_margin, workers=config.workers,
    )
    curve = theta_curve_from_results(config.p, config.q_grid, results, config.seed, config.ci_method)
    cone = estimate_alpha(
        config.p, config.replicas, config.window, config.seed + 1, config.excess_law,
        config.escape_margin, workers=config.workers,
    )
    by_q = {e.q: e for e in curve.estimates}
    checks = {"monotone": curve.monotone}
    if 1.0 in by_q:
        e = by_q[1.0]
        checks["endpoint_theta_minus"] = within_joint_ci(e.theta_hat, e.ci_halfwidth, cone.theta_minus, cone.ci["theta_minus"])
    if 0.0 in by_q:
        e = by_q[0.0]
        checks["endpoint_theta_plus"] = within_joint_ci(e.theta_hat, e.ci_halfwidth, cone.theta_plus, cone.ci["theta_plus"])
    symmetric = []
    for q, e in by_q.items():
        mirror = by_q.get(round(1.0 - q, 10))
        if mirror is None or q > mirror.q:
            continue
        # θ(q) + θ(1 − q) = π/2; en q = 1/2 ambos términos son el mismo estimador.
        halfwidth = 2 * e.ci_halfwidth if mirror is e else math.hypot(e.ci_halfwidth, mirror.ci_halfwidth)
        symmetric.append(abs(e.theta_hat + mirror.theta_hat - math.pi / 2) <= halfwidth)
    checks["axis_symmetry"] = all(symmetric)

    os.makedirs(config.out_dir, exist_ok=True)
    files = [
        artifacts.write_csv(os.path.join(config.out_dir, "regenerations.csv"), artifacts.REGENERATION_COLUMNS, _regeneration_rows(results)),
        artifacts.write_json(
            os.path.join(config.out_dir, "curve.json"),
            {**curve.as_dict(), "alpha_hat": cone.alpha_hat, "ci": cone.ci, "theta_minus": cone.theta_minus, "theta_plus": cone.theta_plus},
        ),
    ]
    summary = {
        "curve": [[e.q, e.theta_hat, e.ci_halfwidth] for e in curve.estimates],
        "mean_T1": curve.mean_T1,
        "theta_minus": cone.theta_minus,
        "theta_plus": cone.theta_plus,
        "escape_rate": curve.escape_rate,
    }
    censoring = {"non_percolating_origins": curve.skipped, "censored_traces": curve.censored}
    return _Outcome(summary, checks, censoring, files)


# ---------------------------------------------------------------- regeneration-tail


def _tail_replica(payload: dict) -> dict:
    field, table = _replica_field(payload)
    origin = Site(*payload["origin"])
    out = {"replica": payload["replica"], "escaped": False, "censored": False, "durations": [], "increments": [],
           "stabilization_checks": 0, "stabilization_mismatches": 0, "bound_violations": 0}
    if not perc_status(table, origin, payload["escape_margin"]).escapes:
        return out
    out["escaped"] = True
    trace = stabilized_path(field, origin, payload["q"], table, payload["escape_margin"])
    out["censored"] = trace.censored
    durations = trace.durations()
    increments = trace.increments()
    out["durations"] = durations.tolist()
    out["increments"] = increments.tolist()
    out["bound_violations"] = int((np.abs(increments).sum(axis=1) > durations).sum()) if durations.size else 0

    # Extensiones γ_m, m ∈ (T, T + lookahead], deben conservar el prefijo congelado.
    rng = np.random.default_rng(payload["seed"])
    lookahead = payload["lookahead"]
    window = field.window
    candidates = [reg.time for reg in trace.regenerations if window.far_distance(trace.steps[reg.time]) > lookahead + 1]
    for frozen in rng.permutation(candidates)[: payload["stabilization_checks"]]:
        frozen = int(frozen)
        m = frozen + int(rng.integers(1, lookahead + 1))
        out["stabilization_checks"] += 1
        try:
            gamma = build_gamma_k(field, origin, payload["q"], m, table)
        except WindowBoundsError:
            gamma = []
        if gamma[: frozen + 1] != trace.steps[: frozen + 1]:
            out["stabilization_mismatches"] += 1
            logging.warning("Réplica %s: el prefijo hasta %s cambió en γ_%s", payload["replica"], frozen, m)
    return out


def run_regeneration_tail(config: ExperimentConfig) -> _Outcome:
    origin = config.window.site_at(0, 0)
    payloads = _payloads(
        config, origin=tuple(origin), lookahead=Config.STABILIZATION_LOOKAHEAD, stabilization_checks=1,
    )
    results = run_replicas(_tail_replica, payloads, config.workers)
    firsts = [r["durations"][0] for r in results if r["durations"]]
    try:
        fit = fit_regeneration_tail(firsts, n_bootstrap=min(Config.BOOTSTRAP_RESAMPLES, 500), seed=config.seed)
    except InsufficientSamples as exc:
        logger.warning("Ajuste de la cola de T_1 omitido: %s", exc)
        fit = None
    checks = {
        "tail_rate_positive": fit is not None and fit.accepted and fit.rate_ci[0] > 0,
        "stabilization": sum(r["stabilization_mismatches"] for r in results) == 0,
        "increment_bound": sum(r["bound_violations"] for r in results) == 0,
    }
    os.makedirs(config.out_dir, exist_ok=True)
    rows = [
        [r["replica"], config.q, j, t, y[0], y[1], r["censored"]]
        for r in results
        for j, (t, y) in enumerate(zip(np.cumsum(r["durations"], dtype=np.int64).tolist(), r["increments"]), start=1)
    ]
    fit_report = fit.as_dict() if fit is not None else None
    files = [
        artifacts.write_csv(os.path.join(config.out_dir, "regenerations.csv"), artifacts.REGENERATION_COLUMNS, rows),
        artifacts.write_json(os.path.join(config.out_dir, "tail_fit.json"), {"tail_fit": fit_report, "samples": len(firsts)}),
    ]
    summary = {
        "tail_fit": fit_report,
        "mean_T1": float(np.mean(firsts)) if firsts else None,
        "stabilization_checks": sum(r["stabilization_checks"] for r in results),
    }
    censoring = {
        "non_percolating_origins": sum(not r["escaped"] for r in results),
        "censored_traces": sum(r["censored"] for r in results),
    }
    return _Outcome(summary, checks, censoring, files)


# ---------------------------------------------------------------- coalescence


def _coalescence_replica(payload: dict) -> dict:
    field, table = _replica_field(payload)
    margin, q = payload["escape_margin"], payload["q"]
    base = Site(*payload["base"])
    out = {"replica": payload["replica"], "runs": [], "marginal": []}
    if not perc_status(table, base, margin).escapes:
        out["runs"] = [{"separation": s, "trace": None} for s in payload["separations"]]
        return out
    trace_y = stabilized_path(field, base, q, table, margin)
    out["marginal"] = trace_y.durations().tolist()
    for separation in payload["separations"]:
        x = base + Site(separation // 2, -(separation // 2))
        if not perc_status(table, x, margin).escapes:
            out["runs"].append({"separation": separation, "trace": None})
            continue
        trace_x = trace_y if x == base else stabilized_path(field, x, q, table, margin)
        out["runs"].append({"separation": separation, "trace": combine_traces(trace_x, trace_y, q)})
    return out


def run_coalescence(config: ExperimentConfig) -> _Outcome:
    base = config.window.site_at(0, max(config.separations) // 2)
    payloads = _payloads(config, base=tuple(base), separations=list(config.separations))
    results = run_replicas(_coalescence_replica, payloads, config.workers)

    os.makedirs(config.out_dir, exist_ok=True)
    files, traces = [], []
    summary: Dict[str, object] = {"separations": {}}
    checks: Dict[str, bool] = {}
    censoring: Dict[str, int] = {}
    for separation in config.separations:
        runs = [(r["replica"], run) for r in results for run in r["runs"] if run["separation"] == separation]
        valid = [(replica, run["trace"]) for replica, run in runs if run["trace"] is not None]
        # Una traza que llega al borde sin coalescer es ventana agotada: cuenta como fallo.
        coalesced = sum(trace.coalesced for _, trace in valid)
        rate = coalesced / len(valid) if valid else float("nan")
        summary["separations"][str(separation)] = {"runs": len(valid), "coalesced": coalesced, "rate": rate}
        censoring[f"non_percolating_{separation}"] = len(runs) - len(valid)
        censoring[f"exhausted_{separation}"] = len(valid) - coalesced
        checks[f"coalescence_{separation}"] = bool(valid) and rate >= 0.99
        traces.extend(trace for _, trace in valid)
        rows = [
            [replica, config.q, j, tau, z, z == 0]
            for replica, trace in valid
            for j, (tau, z) in enumerate(zip(trace.taus, trace.zs))
        ]
        files.append(artifacts.write_csv(
            os.path.join(config.out_dir, f"coalescence_sep{separation}.csv"), artifacts.COALESCENCE_COLUMNS, rows,
        ))

    marginal = [d for r in results for d in r["marginal"]]
    checks["increment_bound"] = all(t.increment_bound_holds() for t in traces)
    checks["parity"] = all(t.parity_conserved() for t in traces)
    checks["absorption"] = all(t.absorption_permanent() for t in traces)

    profile = drift_profile(traces, config.buckets, config.bucket_tolerance)
    m0 = choose_m0(profile)
    checks["drift_m0_found"] = m0 is not None
    p_value, n_sign = increment_sign_test(traces)
    checks["sign_symmetry"] = not (n_sign and p_value < 0.01)

    gaps = [g for t in traces for g in t.joint_gaps()]
    try:
        joint = fit_joint_tail(gaps, min_samples=Config.TAIL_MIN_SAMPLES, seed=config.seed)
        single = fit_regeneration_tail(marginal, min_samples=Config.TAIL_MIN_SAMPLES, seed=config.seed)
        summary["joint_tail"], summary["marginal_tail"] = joint.as_dict(), single.as_dict()
        if joint.accepted and single.accepted:
            checks["joint_dominates_marginal"] = joint.rate <= single.rate + 2 * single.rate_stderr
    except InsufficientSamples as exc:
        logger.warning("Ajuste de colas conjunto omitido: %s", exc)
        summary["joint_tail"] = None

    summary.update({"m0": m0, "sign_test": {"p_value": p_value, "n": n_sign}, "drift": profile.as_dict()})
    files.append(artifacts.write_json(os.path.join(config.out_dir, "drift_profile.json"), {**profile.as_dict(), "m0": m0}))
    return _Outcome(summary, checks, censoring, files)


# ---------------------------------------------------------------- sandwich


def _sandwich_replica(payload: dict) -> dict:
    field, forward = _replica_field(payload)
    anti = level_table(field, "anti")
    margin, q = payload["escape_margin"], payload["q"]
    rng = np.random.default_rng(payload["seed"])
    nx, nt = field.window.shape
    out = {"replica": payload["replica"], "percolating": [], "tails": [], "origins": 0, "censored": 0,
           "restricted_equal": 0, "restricted_unequal": 0, "checked": 0, "failures": 0, "figure": None}
    for _ in range(payload["sites_per_replica"]):
        origin = field.window.site_at(int(rng.integers(nx // 4, nx // 2)), int(rng.integers(nt // 4, nt // 2)))
        if perc_status(forward, origin, margin).escapes:
            trace = stabilized_path(field, origin, q, forward, margin)
            out["percolating"].append((trace.durations().tolist(), trace.increments().tolist()))
            continue
        out["origins"] += 1
        try:
            region = build_sandwich_region(field, origin, q, forward, anti, margin)
            head = constrained_geodesic(field, origin, region.meeting_point, region.delta_sites)
        except (CensoredBeforeFound, WindowExhausted, OriginNotPercolating, Disconnected) as exc:
            logging.warning("Réplica %s: sándwich censurado en %s: %s", payload["replica"], tuple(origin), exc)
            out["censored"] += 1
            continue
        free, _ = passage_time(field, origin, region.meeting_point,
                               exact_region(field, origin, region.meeting_point, head.total_time))
        if math.isclose(free, head.total_time, rel_tol=1e-9, abs_tol=1e-9):
            out["restricted_equal"] += 1
        else:
            out["restricted_unequal"] += 1
        path = sandwich_geodesic(field, origin, q, forward, anti, margin, region=region,
                                 checks=payload["subpath_checks"], rng=rng)
        out["checked"] += path.checked
        out["failures"] += path.failures
        out["tails"].append((
            [reg.time - prev for reg, prev in zip(region.right_regenerations, [0] + [r.time for r in region.right_regenerations])],
            [tuple(reg.increment) for reg in region.right_regenerations],
        ))
        if out["figure"] is None:
            out["figure"] = {"origin": tuple(origin), "paths": [path.sites, region.left_path, region.right_anti, region.left_anti],
                             "delta": sorted(region.delta_sites)}
    return out


def _pool(pairs) -> Tuple[List[int], List[Tuple[int, int]]]:
    durations, increments = [], []
    for d, y in pairs:
        durations.extend(d)
        increments.extend(y)
    return durations, increments


def run_sandwich(config: ExperimentConfig) -> _Outcome:
    payloads = _payloads(config, sites_per_replica=config.sites_per_replica, subpath_checks=config.subpath_checks)
    results = run_replicas(_sandwich_replica, payloads, config.workers)
    summary: Dict[str, object] = {
        key: sum(r[key] for r in results)
        for key in ("origins", "censored", "restricted_equal", "restricted_unequal", "checked", "failures")
    }
    checks = {
        "restricted_equals_unrestricted": summary["restricted_unequal"] == 0 and summary["restricted_equal"] > 0,
        "subpaths": summary["failures"] == 0,
    }
    try:
        d_tail, y_tail = _pool(t for r in results for t in r["tails"])
        d_perc, y_perc = _pool(t for r in results for t in r["percolating"])
        tail = estimate_direction(d_tail, y_tail, q=config.q, method=config.ci_method, seed=config.seed)
        perc = estimate_direction(d_perc, y_perc, q=config.q, method=config.ci_method, seed=config.seed + 1)
        summary["direction"] = {"sandwich": tail.as_dict(), "percolating": perc.as_dict()}
        checks["direction_matches"] = within_joint_ci(tail.theta_hat, tail.ci_halfwidth, perc.theta_hat, perc.ci_halfwidth)
    except InsufficientSamples as exc:
        logger.warning("Comparación de direcciones omitida: %s", exc)
    os.makedirs(config.out_dir, exist_ok=True)
    files = [artifacts.write_json(os.path.join(config.out_dir, "sandwich.json"), summary)]
    position = next((k for k, r in enumerate(results) if r["figure"]), None)
    if config.render and position is not None:
        figure = results[position]["figure"]
        field, _ = _replica_field(payloads[position])
        box = field.window.bounding(figure["delta"] + [Site(*figure["origin"])], margin=10)
        files.append(artifacts.render_svg(field, figure["paths"], os.path.join(config.out_dir, "sandwich.svg"),
                                          region=box, highlight=figure["delta"]))
    return _Outcome(summary, checks, {"censored_origins": summary["censored"]}, files)


# ---------------------------------------------------------------- bigeodesic


def _bigeodesic_replica(payload: dict) -> dict:
    field, forward = _replica_field(payload)
    anti = level_table(field, "anti")
    margin = payload["escape_margin"]
    rng = np.random.default_rng(payload["seed"])
    mask, _ = bidirectional_mask(forward, anti, margin)
    candidates = np.argwhere(mask)
    out = {"replica": payload["replica"], "sites": 0, "checked": 0, "failures": 0, "centered_failures": 0, "path": None}
    if candidates.size == 0:
        return out
    chosen = rng.choice(len(candidates), size=min(payload["sites_per_replica"], len(candidates)), replace=False)
    for row in sorted(chosen.tolist()):
        site = field.window.site_at(*candidates[row])
        path = bi_infinite_geodesic(field, site, payload["q"], forward, anti, margin,
                                    checks=payload["subpath_checks"], rng=rng)
        out["sites"] += 1
        out["checked"] += path.checked
        out["failures"] += path.failures
        centre = path.sites.index(site)
        if 0 < centre < len(path.sites) - 1:
            piece = path.sites[centre - 1 : centre + 2]
            best, _ = passage_time(field, piece[0], piece[-1], field.window.bounding(piece, margin=2))
            out["checked"] += 1
            if not (path_time(field, piece) == 2.0 and best == 2.0):
                out["centered_failures"] += 1
        if out["path"] is None:
            out["path"] = path.sites
    return out


def run_bigeodesic(config: ExperimentConfig) -> _Outcome:
    payloads = _payloads(config, sites_per_replica=config.sites_per_replica, subpath_checks=config.subpath_checks)
    results = run_replicas(_bigeodesic_replica, payloads, config.workers)
    summary = {key: sum(r[key] for r in results) for key in ("sites", "checked", "failures", "centered_failures")}
    checks = {"subpaths": summary["failures"] == 0 and summary["centered_failures"] == 0 and summary["sites"] > 0}
    os.makedirs(config.out_dir, exist_ok=True)
    files = [artifacts.write_json(os.path.join(config.out_dir, "bigeodesic.json"), summary)]
    if config.render:
        position = next((k for k, r in enumerate(results) if r["path"]), None)
        if position is not None:
            field, _ = _replica_field(payloads[position])
            files.append(artifacts.render_svg(field, [results[position]["path"]], os.path.join(config.out_dir, "bigeodesic.svg")))
    censoring = {"replicas_without_sites": sum(r["sites"] == 0 for r in results)}
    return _Outcome(summary, checks, censoring, files)


# ---------------------------------------------------------------- cone


def run_cone(config: ExperimentConfig) -> _Outcome:
    cone = estimate_alpha(config.p, config.replicas, config.window, config.seed, config.excess_law,
                          config.escape_margin, workers=config.workers, n_bootstrap=None)
    check_cone = cone_from_alpha(cone.p, cone.alpha_hat)
    checks = {
        "alpha_in_range": 0 <= cone.alpha_hat <= ALPHA_MAX,
        "cone_algebra": math.isclose(check_cone.theta_minus + check_cone.theta_plus, math.pi / 2)
        and math.isclose(sum(cone.M), 1.0),
    }
    report = {**cone.as_dict(), "curve": []}
    if config.p_compare is not None:
        # Misma semilla: el acoplamiento monótono en p solo abre aristas.
        other = estimate_alpha(config.p_compare, config.replicas, config.window, config.seed, config.excess_law,
                               config.escape_margin, workers=config.workers)
        lo, hi = sorted([cone, other], key=lambda c: c.p)
        sigma = math.hypot(lo.ci["alpha"], hi.ci["alpha"]) / 1.96
        checks["alpha_increases_with_p"] = hi.alpha_hat - lo.alpha_hat > 2 * sigma
        report["compare"] = other.as_dict()
    os.makedirs(config.out_dir, exist_ok=True)
    files = [artifacts.write_json(os.path.join(config.out_dir, "cone.json"), report)]
    censoring = {"non_percolating_origins": int(round((1 - cone.escape_rate) * config.replicas))}
    return _Outcome(report, checks, censoring, files)


# ---------------------------------------------------------------- oracle-sweep


def _prefix_replica(payload: dict) -> dict:
    field, table = _replica_field(payload)
    rng = np.random.default_rng(payload["seed"])
    margin = payload["escape_margin"]
    window = field.window
    out = {"checked": 0, "failures": 0, "origins_tried": 0}
    nx, nt = window.shape
    while out["checked"] < payload["prefixes"] and out["origins_tried"] < 50 * payload["prefixes"]:
        out["origins_tried"] += 1
        origin = window.site_at(int(rng.integers(0, nx - margin)), int(rng.integers(0, nt - margin)))
        if not perc_status(table, origin, margin).escapes:
            continue
        path = limit_path(field, table, origin, float(rng.random()), int(rng.integers(1, 60)), margin)
        if len(path) < 2:
            continue
        out["checked"] += 1
        if not verify_oriented_geodesic(field, path):
            out["failures"] += 1
    return out


def run_oracle_sweep(config: ExperimentConfig) -> _Outcome:
    rng = np.random.default_rng(config.seed)
    window = Window.from_origin(config.width, config.depth)
    mismatches = 0
    excess = config.excess_law
    for k in range(config.replicas):
        p = (0.3, 0.7, 1.0)[k % 3]
        field = sample_field(window, p, excess, replica_seed(config.seed, k))
        for _ in range(3):
            x = window.site_at(int(rng.integers(0, config.width)), int(rng.integers(0, config.depth)))
            y = window.site_at(int(rng.integers(0, config.width)), int(rng.integers(0, config.depth)))
            fast, _ = passage_time(field, x, y)
            if not math.isclose(fast, enumerate_passage_time(field, x, y), rel_tol=1e-12, abs_tol=1e-12):
                mismatches += 1

    small = Window.from_origin(4, 4)
    patterns = 20 * config.replicas
    level_mismatches = 0
    for _ in range(patterns):
        bits = rng.random((2,) + small.shape) < 0.5
        field = field_from_openness(small, bits[0], bits[1])
        for orientation in ("forward", "anti"):
            if not np.array_equal(level_table(field, orientation).l, enumerate_longest_paths(field, orientation)):
                level_mismatches += 1

    prefix_config = ExperimentConfig(experiment="oracle-sweep", p=config.p, excess=config.excess,
                                     width=200, depth=200, escape_margin=min(config.escape_margin, 64),
                                     replicas=max(1, config.replicas // 5), seed=config.seed)
    prefix_results = run_replicas(_prefix_replica, _payloads(prefix_config, prefixes=100), config.workers)
    checked = sum(r["checked"] for r in prefix_results)
    failures = sum(r["failures"] for r in prefix_results)

    summary = {
        "passage_pairs": 3 * config.replicas,
        "passage_mismatches": mismatches,
        "level_patterns": patterns,
        "level_mismatches": level_mismatches,
        "prefixes_checked": checked,
        "prefix_failures": failures,
    }
    checks = {"passage_oracle": mismatches == 0, "level_tables": level_mismatches == 0, "oriented_prefixes": failures == 0}
    os.makedirs(config.out_dir, exist_ok=True)
    files = [artifacts.write_json(os.path.join(config.out_dir, "oracle_sweep.json"), summary)]
    return _Outcome(summary, checks, {}, files)


# ---------------------------------------------------------------- bidirectional-density


def _density_replica(payload: dict) -> dict:
    field, forward = _replica_field(payload)
    anti = level_table(field, "anti")
    margin = payload["escape_margin"]
    mask, interior = bidirectional_mask(forward, anti, margin)
    escaping, uncensored = escape_fraction(forward, margin)
    return {"bidirectional": int(mask.sum()), "interior": interior, "escaping": escaping, "uncensored": uncensored}


def run_bidirectional_density(config: ExperimentConfig) -> _Outcome:
    results = run_replicas(_density_replica, _payloads(config), config.workers)
    density = np.array([r["bidirectional"] / r["interior"] for r in results])
    escape = np.array([r["escaping"] / r["uncensored"] for r in results])
    d_hat = sum(r["bidirectional"] for r in results) / sum(r["interior"] for r in results)
    e_hat = sum(r["escaping"] for r in results) / sum(r["uncensored"] for r in results)
    n = len(results)
    variance = (density.var(ddof=1) + (2 * e_hat) ** 2 * escape.var(ddof=1)) / n if n > 1 else float("inf")
    sigma = math.sqrt(variance)
    summary = {
        "density": d_hat,
        "escape_probability": e_hat,
        "escape_squared": e_hat ** 2,
        "sigma": sigma,
        "interior_sites": sum(r["interior"] for r in results),
    }
    checks = {"density_matches_square": abs(d_hat - e_hat ** 2) <= 3 * sigma}
    os.makedirs(config.out_dir, exist_ok=True)
    files = [artifacts.write_json(os.path.join(config.out_dir, "bidirectional_density.json"), summary)]
    return _Outcome(summary, checks, {}, files)


# ---------------------------------------------------------------- threshold


def run_threshold(config: ExperimentConfig) -> _Outcome:
    lo, hi = bracket_threshold(config.window, config.seed, iterations=config.iterations,
                               excess=config.excess_law, escape_margin=config.escape_margin)
    summary = {"band": [lo, hi], "p": config.p}
    checks = {"p_above_band": config.p >= hi}
    os.makedirs(config.out_dir, exist_ok=True)
    files = [artifacts.write_json(os.path.join(config.out_dir, "threshold.json"), summary)]
    return _Outcome(summary, checks, {}, files)


RUNNERS: Dict[str, Callable[[ExperimentConfig], _Outcome]] = {
    "direction-curve": run_direction_curve,
    "coalescence": run_coalescence,
    "sandwich": run_sandwich,
    "bigeodesic": run_bigeodesic,
    "cone": run_cone,
    "oracle-sweep": run_oracle_sweep,
    "regeneration-tail": run_regeneration_tail,
    "bidirectional-density": run_bidirectional_density,
    "threshold": run_threshold,
}


def run(config: ExperimentConfig) -> RunResult:
    """Ejecuta el experimento, escribe sus artefactos y el manifiesto."""
    logger.info("Iniciando %s: p=%s réplicas=%s semilla=%s", config.experiment, config.p, config.replicas, config.seed)
    outcome = RUNNERS[config.experiment](config)
    manifest = artifacts.build_manifest(
        config.experiment,
        config.scientific(),
        config.out_dir,
        outcome.files,
        outcome.censoring,
        outcome.summary,
        outcome.checks,
    )
    manifest_path = artifacts.write_json(os.path.join(config.out_dir, "manifest.json"), manifest)
    for name, ok in sorted(outcome.checks.items()):
        (logger.info if ok else logger.warning)("Comprobación %s: %s", name, "OK" if ok else "FALLA")
    return RunResult(manifest=artifacts._clean(manifest), manifest_path=manifest_path)
