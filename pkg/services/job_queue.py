import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

import numpy as np

from config import Config

T = TypeVar("T")
R = TypeVar("R")


def replica_seed(seed: int, replica: int) -> int:
    """Semilla de la réplica derivada de SeedSequence([seed, replica])."""
    return int(np.random.SeedSequence([int(seed), int(replica)]).generate_state(1, np.uint64)[0] >> 1)


def run_replicas(
    job: Callable[[T], R],
    payloads: Sequence[T],
    workers: Optional[int] = None,
) -> List[R]:
    """Ejecuta ``job`` sobre cada payload y devuelve los resultados en orden de réplica.

    Con un solo worker se ejecuta en línea; si no, en un pool de procesos.
    ``job`` debe ser una función de nivel de módulo para poder serializarse.
    """
    workers = Config.WORKERS if workers is None else max(int(workers), 1)
    if workers == 1 or len(payloads) <= 1:
        return [job(payload) for payload in payloads]

    chunksize = max(1, len(payloads) // (workers * 4))
    try:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(job, payloads, chunksize=chunksize))
    except Exception as exc:
        logging.error("Error ejecutando %s réplicas con %s workers: %s", len(payloads), workers, exc)
        raise
