"""
Excepciones del códec de atributos.

La CLI traduce estas clases a códigos de salida: ``InputError`` y sus
derivadas terminan con 1, ``IntegrityError`` y sus derivadas con 2.
"""


class CodecError(Exception):
    """Error base del códec."""


class InputError(CodecError, ValueError):
    """Entrada inválida: PLY mal formado, atributos fuera de rango, etc."""


class ConfigError(InputError):
    """Configuración inválida o incompatible."""


class IntegrityError(CodecError):
    """Flujo de bits corrupto, truncado o inconsistente con la geometría."""


class ModelMismatchError(IntegrityError):
    """El modelo entregado no coincide con el usado al codificar."""


class PipelineOrderError(CodecError):
    """Se pidió el atributo de un vecino que aún no fue reconstruido."""


class TrainingError(CodecError):
    """El entrenamiento produjo una pérdida no finita."""
