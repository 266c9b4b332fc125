"""
Métricas de densidad y entropía.

NN es el promedio, sobre los puntos, de cuántos puntos (incluido el
propio) caen en la ventana cúbica de lado 2·radio + 1 centrada en cada uno.
"""

import logging
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.neighbors import KDTree

from core.cloud_io import PointCloud
from core.descriptor import DaldConfig, axis_labels, batch_mean_axis_distance, combine_label
from core.errors import InputError
from core.lod_builder import LodStructure

logger = logging.getLogger(__name__)

DEFAULT_RATIOS = (1.0, 0.5, 0.25, 0.1, 0.05, 0.01)


def nn_density(positions, kernel_radius: int = 2) -> float:
    """
    Métrica NN de densidad.

    Args:
        positions: Nube o arreglo (n, 3)
        kernel_radius: Radio de Chebyshev (2 -> ventana 5×5×5)

    Returns:
        float: Media de puntos por ventana, siempre >= 1
    """
    if isinstance(positions, PointCloud):
        positions = positions.positions
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if positions.shape[0] == 0:
        raise InputError("No se puede medir la densidad de una nube vacía")
    tree = KDTree(positions, metric='chebyshev')
    counts = tree.query_radius(positions, r=kernel_radius + 0.5, count_only=True)
    return float(np.mean(counts))


def empirical_entropy(symbols) -> float:
    """Entropía empírica de orden 0 en bits por símbolo."""
    symbols = np.asarray(symbols).reshape(-1)
    if symbols.size == 0:
        raise InputError("Flujo de símbolos vacío")
    _, counts = np.unique(symbols, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum() + 0.0)


def sampled_density_curve(positions, ratios: Sequence[float] = DEFAULT_RATIOS, seed: int = 0,
                          kernel_radius: int = 2) -> pd.DataFrame:
    """
    NN bajo submuestreo uniforme sembrado.

    Las submuestras están anidadas: todas son prefijos de una misma
    permutación, de modo que una razón menor nunca agrega puntos.

    Returns:
        pd.DataFrame: Columnas ratio, nn, points
    """
    if isinstance(positions, PointCloud):
        positions = positions.positions
    positions = np.asarray(positions, dtype=np.int64).reshape(-1, 3)
    n = positions.shape[0]
    if n == 0:
        raise InputError("No se puede medir la densidad de una nube vacía")
    permutation = np.random.default_rng(seed).permutation(n)
    rows = []
    for ratio in ratios:
        if not 0.0 < ratio <= 1.0:
            raise InputError(f"Razón de muestreo fuera de (0, 1]: {ratio}")
        count = max(1, int(round(ratio * n)))
        subset = positions[np.sort(permutation[:count])]
        rows.append({'ratio': float(ratio), 'nn': nn_density(subset, kernel_radius), 'points': count})
    logger.debug(f"Curva de densidad con semilla {seed}: {len(rows)} razones")
    return pd.DataFrame(rows, columns=['ratio', 'nn', 'points'])


def label_histogram(labels, alphabet: int) -> np.ndarray:
    """Conteo de uso de cada etiqueta de posición relativa."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size and (labels.min() < 0 or labels.max() >= alphabet):
        raise InputError(f"Etiqueta fuera del alfabeto de {alphabet}")
    return np.bincount(labels, minlength=alphabet)


def cloud_label_histogram(positions: np.ndarray, lod: LodStructure, config: DaldConfig,
                          points: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Histograma de etiquetas de los puntos de inferencia de una nube, con la
    distancia media calculada sobre todos ellos como un único lote.
    """
    if points is None:
        points = (np.concatenate(lod.inference_layers) if lod.inference_layers
                  else np.zeros(0, dtype=np.int64))
    if points.size == 0:
        return np.zeros(config.label_alphabet, dtype=np.int64)
    neighbors = lod.neighbors[points][:, :config.k]
    center = positions[points]
    mean_distance = batch_mean_axis_distance(center, positions[neighbors[:, 0]])
    deltas = positions[neighbors] - center[:, None, :]
    per_axis = [axis_labels(deltas[..., a], mean_distance[a], config.thresholds[a], config.n) for a in range(3)]
    return label_histogram(combine_label(*per_axis, config.n), config.label_alphabet)
