"""
Partición en bloques guiada por la capa base
============================================

1. Se suavizan los atributos reconstruidos de la capa base (media sobre los
   50 puntos base más cercanos, incluido el propio).
2. K-means determinista sobre concat[ã, α·p̃] asigna un bloque a cada punto
   base.
3. Cada punto de inferencia hereda el bloque de su punto base más cercano
   (euclídeo, empate al menor índice de Morton).
4. Por capa y por bloque, los puntos se toman de a N en orden de Morton; el
   último lote se rellena repitiendo su último punto real.

El decodificador repite todo con la capa base decodificada y la semilla
del encabezado.
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from sklearn.cluster import kmeans_plusplus
from sklearn.neighbors import KDTree

from core.errors import InputError
from core.lod_builder import knn_for_layer

logger = logging.getLogger(__name__)

_DIST_CHUNK = 4096


@dataclass
class PartitionConfig:
    """Parámetros de partición y agrupación en lotes."""

    batch_size: int = 256
    batches_per_block: int = 32
    smoothing_neighbors: int = 50
    alpha: float = 255.0
    kmeans_max_iter: int = 20
    seed: int = 0

    def validate(self) -> Tuple[bool, List[str]]:
        """
        Returns:
            Tuple[bool, List[str]]: (es_válida, errores)
        """
        errors = []
        if self.batch_size < 1:
            errors.append("N (tamaño de lote) debe ser >= 1")
        if self.batches_per_block < 1:
            errors.append("Los lotes por bloque deben ser >= 1")
        if self.smoothing_neighbors < 1:
            errors.append("Los vecinos de suavizado deben ser >= 1")
        if self.alpha < 0:
            errors.append("alpha debe ser >= 0")
        if self.kmeans_max_iter < 1:
            errors.append("Las iteraciones de k-means deben ser >= 1")
        if not 0 <= self.seed < (1 << 64):
            errors.append("La semilla debe caber en 64 bits")
        return len(errors) == 0, errors


@dataclass
class Batch:
    """Lote de N índices de punto; los últimos ``N - real_count`` son relleno."""

    block: int
    points: np.ndarray
    real_count: int

    @property
    def padded_count(self) -> int:
        return int(self.points.shape[0]) - self.real_count

    @property
    def real_points(self) -> np.ndarray:
        return self.points[:self.real_count]


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia_history: List[float] = field(default_factory=list)


@dataclass
class BlockAssignment:
    """Bloque de cada punto y lotes de cada capa de inferencia."""

    base_points: np.ndarray
    base_bkids: np.ndarray
    inference_points: np.ndarray
    inference_bkids: np.ndarray
    num_clusters: int
    layer_batches: List[List[Batch]]

    def digest(self) -> bytes:
        """Resumen de 8 bytes de bloques y lotes."""
        h = hashlib.sha256()
        h.update(np.int64(self.num_clusters).tobytes())
        for array in (self.base_points, self.base_bkids, self.inference_points, self.inference_bkids):
            h.update(np.ascontiguousarray(array, dtype='<i8').tobytes())
        for batches in self.layer_batches:
            h.update(np.int64(len(batches)).tobytes())
            for batch in batches:
                h.update(np.asarray([batch.block, batch.real_count], dtype='<i8').tobytes())
                h.update(np.ascontiguousarray(batch.points, dtype='<i8').tobytes())
        return h.digest()[:8]


def smooth_base_attributes(positions: np.ndarray, values: np.ndarray, neighbors: int = 50) -> np.ndarray:
    """
    Media de cada canal sobre los ``neighbors`` puntos base más cercanos.

    Args:
        positions: (m, 3) posiciones base en orden de Morton
        values: (m, C) atributos reconstruidos

    Returns:
        np.ndarray: (m, C) float64
    """
    positions = np.asarray(positions, dtype=np.int64).reshape(-1, 3)
    values = np.asarray(values, dtype=np.float64).reshape(positions.shape[0], -1)
    m = positions.shape[0]
    if m == 0:
        return values.copy()
    count = min(neighbors, m)
    ids, _ = knn_for_layer(positions, positions, count)
    return values[ids].mean(axis=1)


def partition_features(smoothed: np.ndarray, positions: np.ndarray, alpha: float = 255.0) -> np.ndarray:
    """concat[ã, α·p̃] con p̃ normalizada min-max (rango nulo -> 0)."""
    positions = np.asarray(positions, dtype=np.float64)
    low = positions.min(axis=0)
    span = positions.max(axis=0) - low
    normalized = np.where(span > 0, (positions - low) / np.where(span > 0, span, 1.0), 0.0)
    return np.concatenate([np.asarray(smoothed, dtype=np.float64), alpha * normalized], axis=1)


def _squared_distances(features: np.ndarray, centers: np.ndarray) -> np.ndarray:
    out = np.empty((features.shape[0], centers.shape[0]), dtype=np.float64)
    for start in range(0, features.shape[0], _DIST_CHUNK):
        block = features[start:start + _DIST_CHUNK]
        out[start:start + _DIST_CHUNK] = ((block[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return out


def kmeans_base(features: np.ndarray, num_clusters: int, seed: int = 0, max_iter: int = 20) -> KMeansResult:
    """
    K-means determinista.

    Inicialización k-means++ sembrada, iteraciones de Lloyd hasta que las
    asignaciones no cambian o ``max_iter``; empates al cluster de menor
    índice; un cluster vacío se resiembra con el punto más alejado de su
    centroide.

    Args:
        features: (m, F) características
        num_clusters: Número de clusters (<= m)
        seed: Semilla de la inicialización

    Returns:
        KMeansResult: Etiquetas, centros e historial de inercia
    """
    features = np.asarray(features, dtype=np.float64)
    m = features.shape[0]
    if num_clusters < 1:
        raise InputError("num_clusters debe ser >= 1")
    if num_clusters > m:
        raise InputError(f"num_clusters ({num_clusters}) excede la cantidad de puntos ({m})")
    if num_clusters == 1:
        center = features.mean(axis=0, keepdims=True)
        inertia = float(((features - center) ** 2).sum())
        return KMeansResult(np.zeros(m, dtype=np.int64), center, [inertia])

    centers, _ = kmeans_plusplus(features, n_clusters=num_clusters, random_state=seed % (1 << 32))
    centers = np.asarray(centers, dtype=np.float64)
    labels = None
    history = []
    for iteration in range(max_iter):
        dist = _squared_distances(features, centers)
        new_labels = np.argmin(dist, axis=1)
        closest = dist[np.arange(m), new_labels]
        history.append(float(closest.sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels

        working = labels.copy()
        counts = np.bincount(working, minlength=num_clusters)
        taken = set()
        for cluster in np.flatnonzero(counts == 0):
            order = np.lexsort((np.arange(m), -closest))
            donor = next(int(i) for i in order if int(i) not in taken)
            taken.add(donor)
            working[donor] = cluster
        counts = np.bincount(working, minlength=num_clusters)
        sums = np.zeros_like(centers)
        np.add.at(sums, working, features)
        centers = sums / counts[:, None]
        logger.debug(f"k-means iteración {iteration}: inercia={history[-1]:.3f}")
    else:
        # Sin convergencia: las etiquetas finales salen de los últimos centros
        dist = _squared_distances(features, centers)
        labels = np.argmin(dist, axis=1)
        history.append(float(dist[np.arange(m), labels].sum()))
    return KMeansResult(labels, centers, history)


def num_clusters_for(inference_count: int, batch_size: int, batches_per_block: int, base_count: int) -> int:
    """ceil(puntos de inferencia / (lotes_por_bloque·N)), acotado a [1, puntos base]."""
    wanted = math.ceil(inference_count / (batches_per_block * batch_size)) if inference_count else 1
    return max(1, min(wanted, max(1, base_count)))


def assign_inference_blocks(inference_positions: np.ndarray, base_positions: np.ndarray,
                            base_bkids: np.ndarray) -> np.ndarray:
    """
    Cada punto de inferencia hereda el bloque del punto base más cercano.

    Args:
        inference_positions: (q, 3)
        base_positions: (m, 3) en orden de Morton
        base_bkids: (m,) bloques de la capa base

    Returns:
        np.ndarray: (q,) bloques
    """
    base_positions = np.asarray(base_positions, dtype=np.int64).reshape(-1, 3)
    inference_positions = np.asarray(inference_positions, dtype=np.int64).reshape(-1, 3)
    m = base_positions.shape[0]
    if m == 0:
        raise InputError("La capa base está vacía")
    if inference_positions.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    tree = KDTree(base_positions.astype(np.float64), metric='euclidean')
    probe = min(m, 8)
    _, idx = tree.query(inference_positions.astype(np.float64), k=probe)
    # Distancias cuadradas exactas en enteros para resolver empates
    sq = ((base_positions[idx] - inference_positions[:, None, :]) ** 2).sum(axis=2)
    order = np.lexsort((idx, sq), axis=-1)
    idx = np.take_along_axis(idx, order, axis=1)
    sq = np.take_along_axis(sq, order, axis=1)
    donors = idx[:, 0].copy()
    if probe < m:
        rows = np.flatnonzero(sq[:, 0] == sq[:, probe - 1])
        if rows.size:
            radius = np.sqrt(sq[rows, 0].astype(np.float64)) + 1e-6
            found = tree.query_radius(inference_positions[rows].astype(np.float64), r=radius)
            for row, f_idx in zip(rows, found):
                f_sq = ((base_positions[f_idx] - inference_positions[row]) ** 2).sum(axis=1)
                donors[row] = f_idx[np.lexsort((f_idx, f_sq))[0]]
    return np.asarray(base_bkids, dtype=np.int64)[donors]


def batch_blocks(block_points: np.ndarray, batch_size: int, block: int = 0) -> List[Batch]:
    """
    Agrupa los puntos de un bloque (una capa, orden de Morton) en lotes de N.

    Example:
        2050 puntos con N=1024 -> tres lotes; el último con 1022 de relleno
    """
    block_points = np.asarray(block_points, dtype=np.int64)
    batches = []
    for start in range(0, block_points.shape[0], batch_size):
        chunk = block_points[start:start + batch_size]
        real = chunk.shape[0]
        if real < batch_size:
            chunk = np.concatenate([chunk, np.full(batch_size - real, chunk[-1], dtype=np.int64)])
        batches.append(Batch(block=block, points=chunk, real_count=real))
    return batches


def partition_cloud(positions: np.ndarray, base_points: np.ndarray, base_values: np.ndarray,
                    inference_layers: List[np.ndarray], config: PartitionConfig) -> BlockAssignment:
    """
    Partición completa de la capa de inferencia.

    Args:
        positions: (n, 3) posiciones de la nube
        base_points: Índices de la capa base (orden de Morton)
        base_values: (m, C) atributos reconstruidos de la capa base, alineados
        inference_layers: Índices de cada capa de inferencia
        config: Parámetros de partición

    Returns:
        BlockAssignment: Bloques y lotes por capa
    """
    base_points = np.asarray(base_points, dtype=np.int64)
    order = np.argsort(base_points, kind='stable')
    base_points = base_points[order]
    base_values = np.asarray(base_values).reshape(base_points.shape[0], -1)[order]
    inference_points = (np.sort(np.concatenate(inference_layers)) if inference_layers
                        else np.zeros(0, dtype=np.int64))
    num_clusters = num_clusters_for(inference_points.shape[0], config.batch_size,
                                    config.batches_per_block, base_points.shape[0])

    base_positions = positions[base_points]
    if inference_points.shape[0] == 0 or num_clusters == 1:
        base_bkids = np.zeros(base_points.shape[0], dtype=np.int64)
    else:
        smoothed = smooth_base_attributes(base_positions, base_values, config.smoothing_neighbors)
        features = partition_features(smoothed, base_positions, config.alpha)
        base_bkids = kmeans_base(features, num_clusters, config.seed, config.kmeans_max_iter).labels

    inference_bkids = (assign_inference_blocks(positions[inference_points], base_positions, base_bkids)
                       if num_clusters > 1 else np.zeros(inference_points.shape[0], dtype=np.int64))
    bkid_of = dict(zip(inference_points.tolist(), inference_bkids.tolist()))

    layer_batches = []
    for layer in inference_layers:
        layer_bkids = np.asarray([bkid_of[p] for p in layer.tolist()], dtype=np.int64)
        batches = []
        for block in np.unique(layer_bkids):
            batches.extend(batch_blocks(layer[layer_bkids == block], config.batch_size, int(block)))
        layer_batches.append(batches)

    logger.info(f"Partición: {num_clusters} bloques, "
                f"{sum(len(b) for b in layer_batches)} lotes de N={config.batch_size}")
    return BlockAssignment(
        base_points=base_points,
        base_bkids=base_bkids,
        inference_points=inference_points,
        inference_bkids=inference_bkids,
        num_clusters=num_clusters,
        layer_batches=layer_batches,
    )


def kdtree_partition(positions: np.ndarray, num_blocks: int) -> np.ndarray:
    """
    Partición de referencia por árbol KD: corte en la mediana con ejes
    cíclicos, dividiendo siempre el bloque más grande.

    Returns:
        np.ndarray: Bloque de cada punto
    """
    positions = np.asarray(positions, dtype=np.int64).reshape(-1, 3)
    n = positions.shape[0]
    if num_blocks < 1:
        raise InputError("num_blocks debe ser >= 1")
    blocks = [(np.arange(n, dtype=np.int64), 0)]
    while len(blocks) < num_blocks:
        sizes = [members.shape[0] for members, _ in blocks]
        target = int(np.argmax(sizes))
        members, depth = blocks[target]
        if members.shape[0] < 2:
            break
        axis = depth % 3
        order = members[np.lexsort((members, positions[members, axis]))]
        half = order.shape[0] // 2
        blocks[target] = (np.sort(order[:half]), depth + 1)
        blocks.append((np.sort(order[half:]), depth + 1))
    labels = np.empty(n, dtype=np.int64)
    for block, (members, _) in enumerate(blocks):
        labels[members] = block
    return labels


def mean_block_attribute_std(attributes: np.ndarray, bkids: np.ndarray) -> float:
    """Media, sobre bloques no vacíos, de la desviación estándar del atributo (promedio de canales)."""
    attributes = np.asarray(attributes, dtype=np.float64)
    attributes = attributes.reshape(attributes.shape[0], -1)
    bkids = np.asarray(bkids, dtype=np.int64)
    stds = [attributes[bkids == block].std(axis=0).mean() for block in np.unique(bkids)]
    return float(np.mean(stds)) if stds else 0.0
