import logging
import os

import click

from config import Config
from services.artifacts import render_svg, write_json
from services.errors import ConfigError
from services.lattice import ExcessDistribution, Window, sample_field, write_field_snapshot
from services.percolation import bidirectional_scan, level_table, write_level_snapshot

export_cli = click.Group("export", help="Exporta campos y tablas para figuras.")


@export_cli.command("snapshot")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--p", "p", type=float, default=Config.DEFAULT_P, show_default=True)
@click.option("--width", type=int, default=40, show_default=True)
@click.option("--depth", type=int, default=40, show_default=True)
@click.option("--excess", default=Config.DEFAULT_EXCESS, show_default=True)
@click.option("--escape-margin", type=int, default=4, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default=Config.OUTPUT_DIR, show_default=True)
@click.option("--render", is_flag=True, help="Agrega un SVG con las aristas abiertas.")
def snapshot(seed, p, width, depth, excess, escape_margin, out_dir, render):
    """Campo (x t w_right w_up u), tablas de niveles (x t l_fwd l_anti) y puntos bidireccionales."""
    try:
        window = Window.from_origin(width, depth)
        field = sample_field(window, p, ExcessDistribution.parse(excess), seed)
    except ConfigError as exc:
        raise click.UsageError(str(exc))

    os.makedirs(out_dir, exist_ok=True)
    forward = level_table(field, "forward")
    anti = level_table(field, "anti")
    field_path = os.path.join(out_dir, f"field_{seed}.txt")
    levels_path = os.path.join(out_dir, f"levels_{seed}.txt")
    write_field_snapshot(field, field_path)
    write_level_snapshot(forward, anti, levels_path)
    bidirectional = bidirectional_scan(field, forward, anti, escape_margin)
    write_json(
        os.path.join(out_dir, f"bidirectional_{seed}.json"),
        {"header": field.header(), "escape_margin": escape_margin, "sites": [list(s) for s in bidirectional]},
    )
    if render:
        render_svg(field, [], os.path.join(out_dir, f"field_{seed}.svg"), highlight=bidirectional)
    logging.info("Snapshot de %s×%s (p=%s, semilla=%s) escrito en %s", width, depth, p, seed, out_dir)
    click.echo(field_path)
