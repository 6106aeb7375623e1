import logging

import click

from services.artifacts import COALESCENCE_COLUMNS, REGENERATION_COLUMNS
from services.errors import ConfigError, PercolationError
from services.experiments import EXPERIMENTS, load_config, run

experiment_cli = click.Group("experiments", help="Experimentos Monte Carlo reproducibles.")

HELP = {
    "direction-curve": "Curva θ̂(q) con flujos compartidos, chequeo de extremos contra el cono y simetría q ↔ 1 − q.",
    "coalescence": "Coalescencia de dos q-caminos por separación inicial, perfil de deriva de log Z y prueba de signos.",
    "sandwich": "Geodésicas semi-infinitas desde orígenes sin percolación (región Δ) con verificación por oráculo.",
    "bigeodesic": "Geodésicas bi-infinitas por puntos bidireccionales con verificación de subcaminos.",
    "cone": "Velocidad α̂ del camino más a la derecha y ángulos del cono de percolación.",
    "oracle-sweep": "Dijkstra contra enumeración exhaustiva, tablas de niveles y prefijos de q-caminos.",
    "regeneration-tail": "Cola exponencial de T_1 y estabilidad de los prefijos congelados.",
    "bidirectional-density": "Densidad de puntos bidireccionales contra el cuadrado de la probabilidad de escape.",
    "threshold": "Banda gruesa del umbral de percolación orientada por bisección.",
}

CSV_HELP = {
    "direction-curve": "regenerations.csv: " + ", ".join(REGENERATION_COLUMNS),
    "regeneration-tail": "regenerations.csv: " + ", ".join(REGENERATION_COLUMNS),
    "coalescence": "coalescence_sep<S>.csv: " + ", ".join(COALESCENCE_COLUMNS),
}


def _experiment_command(name: str) -> click.Command:
    help_text = HELP[name]
    if name in CSV_HELP:
        help_text += f"\n\nColumnas CSV: {CSV_HELP[name]}"
    help_text += "\n\nSiempre se escribe manifest.json con el hash de la configuración y de cada archivo."

    @click.command(name, help=help_text)
    @click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Archivo INI del experimento.")
    @click.option("--seed", type=int, help="Semilla del experimento.")
    @click.option("--replicas", type=int, help="Número de réplicas.")
    @click.option("--out-dir", type=click.Path(file_okay=False), help="Directorio de salida.")
    @click.option("--check", is_flag=True, help="Sale con estado 1 si falla algún criterio de aceptación.")
    @click.option("--workers", type=int, help="Procesos en paralelo (1 = en línea).")
    @click.option("--render", is_flag=True, help="Escribe figuras SVG cuando el experimento las tiene.")
    @click.option("--p", "p", type=float, help="Probabilidad de arista abierta.")
    @click.option("--q", "q", type=float, help="Sesgo de desempate en [0, 1].")
    @click.option("--width", type=int, help="Ancho de la ventana.")
    @click.option("--depth", type=int, help="Profundidad de la ventana.")
    @click.option("--excess", help="Ley del exceso: atom:A, exp:RATE o uniform:LO:HI.")
    @click.option("--escape-margin", type=int, help="Margen de censura en sitios.")
    @click.pass_context
    def command(ctx, config_path, check, render, **options):
        options["render"] = True if render else None
        try:
            config = load_config(config_path, name, options)
        except ConfigError as exc:
            raise click.UsageError(str(exc))
        config.check = check
        try:
            result = run(config)
        except PercolationError as exc:
            logging.exception("El experimento %s no pudo completarse", name)
            raise click.ClickException(str(exc))
        click.echo(result.manifest_path)
        if check and not result.passed:
            failed = sorted(k for k, ok in result.manifest["checks"].items() if not ok)
            click.echo(f"Criterios fallidos: {', '.join(failed)}", err=True)
            ctx.exit(1)

    return command


for _name in EXPERIMENTS:
    experiment_cli.add_command(_experiment_command(_name))
