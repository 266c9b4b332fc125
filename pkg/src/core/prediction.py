"""
Predicción IDW de atributos y formación de residuos.

La predicción es la media ponderada por 1/d² de los atributos de los
vecinos, redondeada a la mitad lejos de cero. Se calcula en doble
precisión; las filas que quedan a menos de 1e-9 de un .5 se recalculan con
aritmética racional exacta para que encoder y decoder coincidan siempre.
"""

import logging
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from core.errors import InputError, IntegrityError, PipelineOrderError
from core.lod_builder import LodStructure

logger = logging.getLogger(__name__)

TIE_EPS = 1e-9


def _round_half_away(value: Fraction) -> int:
    magnitude = abs(value)
    rounded = int(magnitude + Fraction(1, 2))
    return rounded if value >= 0 else -rounded


def idw_predict_exact(neighbor_attrs: Sequence[int], neighbor_dists: Sequence[int]) -> int:
    """Predicción IDW con aritmética racional exacta (referencia)."""
    if len(neighbor_attrs) == 0 or len(neighbor_attrs) != len(neighbor_dists):
        raise InputError("La lista de vecinos está vacía o no coincide con las distancias")
    num = Fraction(0)
    den = Fraction(0)
    for a, d in zip(neighbor_attrs, neighbor_dists):
        if int(d) < 1:
            raise InputError(f"Distancia de vecino inválida: {d}")
        w = Fraction(1, int(d) * int(d))
        num += w * int(a)
        den += w
    return _round_half_away(num / den)


def idw_predict(neighbor_attrs: Sequence[int], neighbor_dists: Sequence[int]) -> int:
    """
    Predice un atributo por interpolación inversa a la distancia.

    Args:
        neighbor_attrs: Atributos reconstruidos de los vecinos
        neighbor_dists: Distancias Manhattan (>= 1)

    Returns:
        int: Predicción redondeada a la mitad lejos de cero

    Example:
        ``idw_predict([8, 16], [1, 2])`` -> 10
    """
    if len(neighbor_attrs) == 0 or len(neighbor_attrs) != len(neighbor_dists):
        raise InputError("La lista de vecinos está vacía o no coincide con las distancias")
    attrs = np.asarray(neighbor_attrs, dtype=np.int64)[None, :]
    dists = np.asarray(neighbor_dists, dtype=np.int64)[None, :]
    return int(idw_predict_batch(attrs, dists)[0])


def idw_predict_batch(neighbor_attrs: np.ndarray, neighbor_dists: np.ndarray) -> np.ndarray:
    """
    Versión vectorizada: una predicción por fila.

    Args:
        neighbor_attrs: (m, k) enteros
        neighbor_dists: (m, k) enteros >= 1

    Returns:
        np.ndarray: (m,) int64
    """
    attrs = np.asarray(neighbor_attrs, dtype=np.int64)
    dists = np.asarray(neighbor_dists, dtype=np.int64)
    if attrs.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    if np.any(dists < 1):
        raise InputError("Distancias de vecino < 1")
    weights = 1.0 / (dists.astype(np.float64) ** 2)
    value = (weights * attrs).sum(axis=1) / weights.sum(axis=1)
    magnitude = np.abs(value)
    predicted = (np.sign(value) * np.floor(magnitude + 0.5)).astype(np.int64)

    near_tie = np.abs(magnitude - np.floor(magnitude) - 0.5) < TIE_EPS
    for row in np.flatnonzero(near_tie):
        predicted[row] = idw_predict_exact(attrs[row].tolist(), dists[row].tolist())
    return predicted


def residuals_for_layer(attributes: np.ndarray, lod: LodStructure, layer_index: int,
                        channel: int = 0, available: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Residuos r = a - â de los puntos de una capa de inferencia.

    Args:
        attributes: (n, canales) atributos (reales o reconstruidos)
        lod: Estructura LoD
        layer_index: Índice de capa (0-based)
        channel: Columna del atributo
        available: Máscara de puntos ya reconstruidos; si se da, se verifica
            que todos los vecinos lo estén

    Returns:
        np.ndarray: Residuos de la capa en su orden
    """
    points = lod.layers[layer_index]
    predicted = predict_points(attributes[:, channel], lod, points, available)
    return attributes[points, channel] - predicted


def predict_points(values: np.ndarray, lod: LodStructure, points: np.ndarray,
                   available: Optional[np.ndarray] = None) -> np.ndarray:
    """Predicción IDW de un conjunto de puntos cuyos vecinos ya se conocen."""
    neighbors = lod.neighbors[points]
    if np.any(neighbors < 0):
        raise PipelineOrderError("Hay puntos sin contexto de predicción en esta capa")
    if available is not None and not np.all(available[neighbors]):
        raise PipelineOrderError("Se usó el atributo de un vecino aún no reconstruido")
    return idw_predict_batch(values[neighbors], lod.distances[points])


def reconstruct(predicted, residual, low: int = 0, high: int = 255):
    """
    Reconstruye a = â + r verificando el rango del canal.

    Raises:
        IntegrityError: Si el resultado cae fuera de [low, high] (flujo corrupto)
    """
    value = np.asarray(predicted, dtype=np.int64) + np.asarray(residual, dtype=np.int64)
    if np.any(value < low) or np.any(value > high):
        raise IntegrityError(f"Atributo reconstruido fuera de [{low}, {high}]")
    return int(value) if value.ndim == 0 else value
