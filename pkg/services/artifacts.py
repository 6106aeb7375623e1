"""Escritura de artefactos: CSV, JSON, SVG y manifiesto con hashes."""

import csv
import hashlib
import json
import logging
import math
import os
import xml.etree.ElementTree as ET
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from services.lattice import PassageField, Site, Window

REGENERATION_COLUMNS = ["replica", "q", "j", "T_j", "Y_j_x", "Y_j_t", "censored"]
COALESCENCE_COLUMNS = ["replica", "q", "j", "tau_j", "Z_j", "absorbed"]

PATH_COLORS = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _clean(value):
    """Convierte tipos numpy y NaN/inf a valores JSON estándar."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def canonical_json(data) -> str:
    return json.dumps(_clean(data), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def compute_hash(content: bytes) -> str:
    return hashlib.sha256(content).hexdigest()


def file_hash(path: str) -> str:
    with open(path, "rb") as fh:
        return compute_hash(fh.read())


def write_json(path: str, data) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(data))
    return path


def write_csv(path: str, headers: Sequence[str], rows: Iterable[Sequence]) -> str:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(headers)
        for row in rows:
            writer.writerow([_format_cell(value) for value in row])
    return path


def _format_cell(value):
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def read_csv(path: str) -> List[Dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def build_manifest(
    experiment: str,
    config: Dict[str, object],
    out_dir: str,
    files: Sequence[str],
    censoring: Dict[str, int],
    summary: Dict[str, object],
    checks: Dict[str, bool],
) -> Dict[str, object]:
    """Manifiesto sin marcas de tiempo: misma configuración y semilla, mismos bytes."""
    config_hash = compute_hash(json.dumps(_clean(config), sort_keys=True).encode("utf-8"))
    return {
        "experiment": experiment,
        "config": config,
        "config_hash": config_hash,
        "censoring": censoring,
        "summary": summary,
        "checks": checks,
        "passed": all(checks.values()),
        "files": [
            {"path": os.path.relpath(path, out_dir), "sha256": file_hash(path)}
            for path in sorted(files)
        ],
    }


def svg_root(width: float, height: float) -> ET.Element:
    return ET.Element(
        "svg",
        xmlns="http://www.w3.org/2000/svg",
        version="1.1",
        width=f"{width:g}px",
        height=f"{height:g}px",
        viewBox=f"0 0 {width:g} {height:g}",
    )


def svg_polyline(parent: ET.Element, points: Sequence[Sequence[float]], **attrs) -> Optional[ET.Element]:
    if not points:
        return None
    d = "M{:g} {:g}".format(*points[0]) + "".join("L{:g} {:g}".format(*pt) for pt in points[1:])
    return ET.SubElement(parent, "path", d=d, fill="none", **attrs)


def render_svg(
    field: PassageField,
    paths: Sequence[Sequence[Site]],
    path: str,
    region: Optional[Window] = None,
    cell: float = 6.0,
    highlight: Iterable[Site] = (),
) -> str:
    """Dibuja las aristas abiertas de ``region`` y los caminos como polilíneas (t hacia arriba)."""

    region = region or field.window
    nx, nt = region.shape
    width, height = cell * (nx + 1), cell * (nt + 1)

    def to_px(site) -> tuple:
        return (cell * (site[0] - region.x_min + 0.5), height - cell * (site[1] - region.t_min + 0.5))

    root = svg_root(width, height)
    ET.SubElement(root, "rect", x="0", y="0", width=f"{width:g}", height=f"{height:g}", fill="white")
    edges = ET.SubElement(root, "g", stroke="#bbbbbb", attrib={"stroke-width": f"{cell / 6:g}"})
    oi, oj = field.window.index((region.x_min, region.t_min))
    for i in range(nx):
        for j in range(nt):
            site = region.site_at(i, j)
            a = to_px(site)
            if i + 1 < nx and field.open_h[oi + i, oj + j]:
                b = to_px(site + Site(1, 0))
                ET.SubElement(edges, "line", x1=f"{a[0]:g}", y1=f"{a[1]:g}", x2=f"{b[0]:g}", y2=f"{b[1]:g}")
            if j + 1 < nt and field.open_v[oi + i, oj + j]:
                b = to_px(site + Site(0, 1))
                ET.SubElement(edges, "line", x1=f"{a[0]:g}", y1=f"{a[1]:g}", x2=f"{b[0]:g}", y2=f"{b[1]:g}")

    marks = ET.SubElement(root, "g", fill="#ffbf00", attrib={"fill-opacity": "0.5"})
    for site in highlight:
        if region.contains(site):
            x, y = to_px(site)
            ET.SubElement(
                marks, "rect", x=f"{x - cell / 2:g}", y=f"{y - cell / 2:g}", width=f"{cell:g}", height=f"{cell:g}"
            )

    for number, sites in enumerate(paths):
        points = [to_px(s) for s in sites if region.contains(s)]
        svg_polyline(
            root,
            points,
            stroke=PATH_COLORS[number % len(PATH_COLORS)],
            attrib={"stroke-width": f"{cell / 3:g}"},
        )

    ET.ElementTree(root).write(path, encoding="utf-8", xml_declaration=True)
    logging.info("SVG escrito en %s (%sx%s sitios, %s caminos)", path, nx, nt, len(paths))
    return path
