"""Errores del laboratorio de percolación."""


class PercolationError(Exception):
    """Base de todos los errores del dominio."""


class ConfigError(PercolationError, ValueError):
    """Configuración inválida (parámetros fuera de rango, claves desconocidas)."""

    def __init__(self, message: str, *, section: str = None, key: str = None, line: int = None):
        self.section = section
        self.key = key
        self.line = line
        location = []
        if line is not None:
            location.append(f"línea {line}")
        if section:
            location.append(f"[{section}]")
        if key:
            location.append(key)
        prefix = " ".join(location)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class WindowBoundsError(PercolationError, IndexError):
    """Se consultó un sitio o una arista fuera de la ventana."""


class EmptyMaximizerSet(PercolationError):
    """m^q_k solo está definido cuando M_k(x,t) no es vacío."""


class InsufficientLength(PercolationError):
    """El origen no tiene un camino orientado abierto de la longitud pedida."""


class OriginNotPercolating(PercolationError):
    """El origen no tiene estado Escapes."""


class CensoredBeforeFound(PercolationError):
    """El barrido alcanzó la zona censurada antes de encontrar un punto."""


class InsufficientSamples(PercolationError):
    """No hay suficientes muestras para el estimador."""


class PreconditionDiagonal(PercolationError):
    """Los orígenes no están en la misma antidiagonal."""


class NotOrientedOpen(PercolationError):
    """El camino contiene un paso cerrado o no orientado."""


class Disconnected(PercolationError):
    """No existe camino dentro del conjunto permitido."""


class WindowExhausted(PercolationError):
    """La construcción necesitó salir de la zona segura de la ventana."""


class NotBidirectional(PercolationError):
    """El sitio no es un punto de percolación bidireccional sin censura."""


class SubcriticalSuspected(PercolationError):
    """Demasiado pocos orígenes percolan para el p dado."""
