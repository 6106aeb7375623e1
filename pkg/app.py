# app.py
from dotenv import load_dotenv
import logging
import sys

import click

from config import Config
from commands.experiment_commands import experiment_cli
from commands.export_commands import export_cli

load_dotenv()


def create_cli():
    cli = click.Group("fpp-lab", help="Laboratorio Monte Carlo de geodésicas dirigidas en percolación de primera pasada.")

    log_format = '%(asctime)s [%(levelname)s] %(name)s: %(message)s'
    logging.basicConfig(
        level=logging.INFO,
        format=log_format,
        handlers=[
            logging.FileHandler(Config.LOG_FILE),
            logging.StreamHandler(sys.stdout)
        ]
    )

    # Registra grupos de comandos
    for command in experiment_cli.commands.values():
        cli.add_command(command)
    cli.add_command(export_cli.commands["snapshot"])

    return cli


cli = create_cli()

if __name__ == '__main__':
    cli()
