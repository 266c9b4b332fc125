"""
Niveles de detalle híbridos
===========================

Construye las capas de refinamiento R_1..R_L a partir de la geometría:

- Capa base (R_1..R_T): submuestreo voraz por distancia Manhattan en orden
  de Morton, con umbrales no crecientes por nivel.
- Capa de inferencia (R_{T+1}..R_L): el resto se reparte con muestreo
  uniforme (el punto i del resto va a la capa T+1+(i mod (L-T))).

Para cada punto se guardan sus k vecinos más cercanos (Manhattan, empates
al menor índice de Morton) entre los puntos ya disponibles: en la capa
base los de capas previas y los anteriores de la misma capa; en la de
inferencia solo los de capas previas.

Autor: Equipo de Desarrollo
Fecha: 2024
Versión: 1.0
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from sklearn.neighbors import KDTree

from core.errors import ConfigError, InputError

logger = logging.getLogger(__name__)

TIE_MARGIN = 8
NO_NEIGHBOR = -1
_FAR = np.iinfo(np.int64).max // 4


@dataclass
class LodConfig:
    """Parámetros de construcción de los niveles de detalle."""

    T: int = 8
    L: int = 24
    k: int = 7
    base_distance_schedule: Optional[Tuple[int, ...]] = None
    base_fraction: float = 0.05

    def validate(self) -> Tuple[bool, List[str]]:
        """
        Returns:
            Tuple[bool, List[str]]: (es_válida, errores)
        """
        errors = []
        if not 1 <= self.T < self.L:
            errors.append(f"Se requiere 1 <= T < L (T={self.T}, L={self.L})")
        if self.k < 1:
            errors.append("k debe ser >= 1")
        if not 0.0 < self.base_fraction <= 1.0:
            errors.append("La fracción de la capa base debe estar en (0, 1]")
        if self.base_distance_schedule is not None:
            errors.extend(validate_schedule(self.base_distance_schedule, self.T))
        return len(errors) == 0, errors


def validate_schedule(schedule: Sequence[int], T: int) -> List[str]:
    errors = []
    if len(schedule) != T:
        errors.append(f"El calendario de distancias tiene {len(schedule)} niveles y T={T}")
    if any(int(d) < 0 for d in schedule):
        errors.append("Las distancias del calendario deben ser >= 0")
    # Solo el 0 (aceptar todo) puede repetirse
    if any(int(b) >= int(a) and int(b) > 0 for a, b in zip(schedule, schedule[1:])):
        errors.append("El calendario de distancias debe ser estrictamente decreciente")
    return errors


@dataclass
class LodStructure:
    """Capas de refinamiento y contexto de vecinos de cada punto."""

    layers: List[np.ndarray]
    base_layer_count: int
    neighbors: np.ndarray
    distances: np.ndarray
    layer_of_point: np.ndarray
    schedule: Tuple[int, ...] = field(default_factory=tuple)

    @property
    def num_points(self) -> int:
        return int(self.layer_of_point.shape[0])

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def k(self) -> int:
        return int(self.neighbors.shape[1])

    @property
    def base_order(self) -> np.ndarray:
        """Índices de la capa base en orden de codificación (capa, luego Morton)."""
        base = self.layers[:self.base_layer_count]
        return np.concatenate(base) if base else np.zeros(0, dtype=np.int64)

    @property
    def inference_layers(self) -> List[np.ndarray]:
        return self.layers[self.base_layer_count:]

    def digest(self) -> bytes:
        """Resumen de 8 bytes de capas y vecinos (depuración encoder/decoder)."""
        h = hashlib.sha256()
        for layer in self.layers:
            h.update(np.int64(layer.shape[0]).tobytes())
            h.update(np.ascontiguousarray(layer, dtype='<i8').tobytes())
        h.update(np.ascontiguousarray(self.neighbors, dtype='<i8').tobytes())
        h.update(np.ascontiguousarray(self.distances, dtype='<i8').tobytes())
        return h.digest()[:8]


def manhattan(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(np.asarray(a, dtype=np.int64) - np.asarray(b, dtype=np.int64)).sum(axis=-1)


def _occupied_cells(positions: np.ndarray, cell: int) -> int:
    return int(np.unique(positions // cell, axis=0).shape[0])


def default_schedule(positions: np.ndarray, T: int, base_fraction: float = 0.05) -> Tuple[int, ...]:
    """
    Calendario geométrico 2^(T-1-t)·d_min.

    ``d_min`` es el menor entero cuyo mallado de celdas (d_min + 1)^3 ocupa a
    lo sumo ``base_fraction`` de los puntos; se busca duplicando y luego por
    bisección.
    """
    positions = np.asarray(positions, dtype=np.int64)
    n = positions.shape[0]
    target = max(1, int(round(base_fraction * n)))
    if n <= target:
        return tuple([0] * T)
    high = 1
    while _occupied_cells(positions, high + 1) > target:
        high *= 2
    low = high // 2
    # Invariante: occupied(low) > target (o low == 0), occupied(high) <= target
    while high - low > 1:
        mid = (low + high) // 2
        if _occupied_cells(positions, mid + 1) > target:
            low = mid
        else:
            high = mid
    d_min = high
    return tuple(d_min << (T - 1 - t) for t in range(T))


def _greedy_select(positions: np.ndarray, candidates: np.ndarray, threshold: int) -> np.ndarray:
    """Acepta candidatos en orden si distan más de ``threshold`` de los ya aceptados."""
    grid = {}
    selected = []
    cell = threshold
    offsets = [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)]
    for index, (x, y, z) in zip(candidates.tolist(), positions[candidates].tolist()):
        cx, cy, cz = x // cell, y // cell, z // cell
        accepted = True
        for dx, dy, dz in offsets:
            bucket = grid.get((cx + dx, cy + dy, cz + dz))
            if not bucket:
                continue
            for px, py, pz in bucket:
                if abs(px - x) + abs(py - y) + abs(pz - z) <= threshold:
                    accepted = False
                    break
            if not accepted:
                break
        if accepted:
            selected.append(index)
            grid.setdefault((cx, cy, cz), []).append((x, y, z))
    return np.asarray(selected, dtype=np.int64)


def build_base_layers(positions: np.ndarray, T: int,
                      schedule: Sequence[int]) -> Tuple[List[np.ndarray], np.ndarray]:
    """
    Submuestreo voraz por distancia de la capa base.

    Args:
        positions: Posiciones canónicas (n, 3) en orden de Morton
        T: Número de capas base
        schedule: Umbral de distancia Manhattan por nivel

    Returns:
        Tuple[List[np.ndarray], np.ndarray]: (capas R_1..R_T, resto)
    """
    positions = np.asarray(positions, dtype=np.int64)
    n = positions.shape[0]
    if n == 0:
        raise InputError("No se puede construir el LoD de una nube vacía")
    errors = validate_schedule(schedule, T)
    if errors:
        raise ConfigError("; ".join(errors))

    accepted = np.zeros(n, dtype=bool)
    layers = []
    for threshold in (int(d) for d in schedule):
        remaining = np.flatnonzero(~accepted)
        if remaining.size == 0:
            layers.append(np.zeros(0, dtype=np.int64))
            continue
        if threshold == 0:
            new = remaining
        else:
            candidates = remaining
            if accepted.any():
                tree = KDTree(positions[accepted].astype(np.float64), metric='manhattan')
                dist, _ = tree.query(positions[remaining].astype(np.float64), k=1)
                candidates = remaining[dist[:, 0] > threshold + 0.5]
            new = _greedy_select(positions, candidates, threshold)
        accepted[new] = True
        layers.append(new)
    return layers, np.flatnonzero(~accepted)


def build_inference_layers(remainder: np.ndarray, count: int) -> List[np.ndarray]:
    """
    Reparte el resto en ``count`` capas por muestreo uniforme.

    Example:
        índices 0..5 con count=3 -> {0,3}, {1,4}, {2,5}
    """
    if count < 1:
        raise ConfigError("La capa de inferencia necesita al menos una capa (L - T >= 1)")
    remainder = np.asarray(remainder, dtype=np.int64)
    return [remainder[j::count] for j in range(count)]


def _exact_topk(tree: KDTree, candidate_ids: np.ndarray, queries: np.ndarray,
                k: int) -> Tuple[np.ndarray, np.ndarray]:
    """k vecinos exactos con empates resueltos por identificador menor."""
    n_cand = candidate_ids.shape[0]
    kk = min(k, n_cand)
    probe = min(k + TIE_MARGIN, n_cand)
    dist, idx = tree.query(queries, k=probe)
    dist = np.rint(dist).astype(np.int64)
    ids = candidate_ids[idx]
    order = np.lexsort((ids, dist), axis=-1)
    dist = np.take_along_axis(dist, order, axis=1)
    ids = np.take_along_axis(ids, order, axis=1)
    out_d = dist[:, :kk].copy()
    out_i = ids[:, :kk].copy()
    if probe < n_cand:
        # Empate en la frontera: puede haber candidatos equidistantes sin recuperar
        rows = np.flatnonzero(dist[:, kk - 1] == dist[:, probe - 1])
        if rows.size:
            found, found_dist = tree.query_radius(queries[rows], r=out_d[rows, kk - 1] + 0.5,
                                                  return_distance=True)
            for row, f_idx, f_dist in zip(rows, found, found_dist):
                f_ids = candidate_ids[f_idx]
                f_d = np.rint(f_dist).astype(np.int64)
                best = np.lexsort((f_ids, f_d))[:kk]
                out_d[row] = f_d[best]
                out_i[row] = f_ids[best]
    return out_d, out_i


def _pad_neighbors(dists: np.ndarray, ids: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Completa hasta k columnas repitiendo el vecino más cercano."""
    width = ids.shape[1]
    if width >= k:
        return dists[:, :k], ids[:, :k]
    reps = k - width
    return (np.concatenate([dists, np.repeat(dists[:, :1], reps, axis=1)], axis=1),
            np.concatenate([ids, np.repeat(ids[:, :1], reps, axis=1)], axis=1))


def knn_for_layer(query_positions: np.ndarray, candidate_positions: np.ndarray, k: int,
                  candidate_ids: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    k vecinos Manhattan de cada consulta entre un conjunto de candidatos.

    Args:
        query_positions: Posiciones (q, 3)
        candidate_positions: Posiciones (c, 3), c >= 1
        k: Número de vecinos
        candidate_ids: Identificadores (índices de Morton) de los candidatos

    Returns:
        Tuple[np.ndarray, np.ndarray]: (ids (q, k), distancias (q, k)) ordenados
        por (distancia, id); si c < k se repite el más cercano
    """
    candidate_positions = np.asarray(candidate_positions, dtype=np.int64).reshape(-1, 3)
    query_positions = np.asarray(query_positions, dtype=np.int64).reshape(-1, 3)
    if candidate_ids is None:
        candidate_ids = np.arange(candidate_positions.shape[0], dtype=np.int64)
    if candidate_positions.shape[0] == 0:
        raise InputError("knn_for_layer necesita al menos un candidato")
    if query_positions.shape[0] == 0:
        return np.zeros((0, k), dtype=np.int64), np.zeros((0, k), dtype=np.int64)
    tree = KDTree(candidate_positions.astype(np.float64), metric='manhattan')
    dists, ids = _exact_topk(tree, np.asarray(candidate_ids, dtype=np.int64),
                             query_positions.astype(np.float64), k)
    dists, ids = _pad_neighbors(dists, ids, k)
    return ids, dists


def knn_base_layers(positions: np.ndarray, base_order: np.ndarray, k: int,
                    chunk_size: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vecinos causales de la capa base: cada punto ve solo a sus predecesores
    en orden de codificación.

    Se procesa por trozos: un KD-tree sobre el prefijo anterior al trozo y
    fuerza bruta dentro del trozo.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (ids (m, k), distancias (m, k)) alineados
        con ``base_order``; el primer punto no tiene vecinos (ids -1)
    """
    positions = np.asarray(positions, dtype=np.int64)
    base_order = np.asarray(base_order, dtype=np.int64)
    m = base_order.shape[0]
    out_ids = np.full((m, k), NO_NEIGHBOR, dtype=np.int64)
    out_d = np.zeros((m, k), dtype=np.int64)
    if m == 0:
        return out_ids, out_d
    chunk = chunk_size or max(256, m // 64)
    base_pos = positions[base_order]

    for start in range(0, m, chunk):
        end = min(m, start + chunk)
        c = end - start
        query = base_pos[start:end]
        ids_chunk = base_order[start:end]

        # Pares dentro del trozo: solo j < i
        intra_d = np.abs(query[:, None, :] - query[None, :, :]).sum(axis=2)
        intra_d[np.triu_indices(c)] = _FAR
        intra_ids = np.broadcast_to(ids_chunk, (c, c)).copy()
        cand_d, cand_i = intra_d, intra_ids

        if start > 0:
            tree = KDTree(base_pos[:start].astype(np.float64), metric='manhattan')
            tree_d, tree_i = _exact_topk(tree, base_order[:start], query.astype(np.float64), k)
            cand_d = np.concatenate([tree_d, intra_d], axis=1)
            cand_i = np.concatenate([tree_i, intra_ids], axis=1)
        if cand_d.shape[1] < k:
            missing = k - cand_d.shape[1]
            cand_d = np.concatenate([cand_d, np.full((c, missing), _FAR, dtype=np.int64)], axis=1)
            cand_i = np.concatenate([cand_i, np.repeat(cand_i[:, :1], missing, axis=1)], axis=1)

        order = np.lexsort((cand_i, cand_d), axis=-1)[:, :k]
        top_d = np.take_along_axis(cand_d, order, axis=1)
        top_i = np.take_along_axis(cand_i, order, axis=1)
        valid = top_d < _FAR
        top_i = np.where(valid, top_i, top_i[:, :1])
        top_d = np.where(valid, top_d, top_d[:, :1])
        has_any = valid[:, 0]
        out_ids[start:end][has_any] = top_i[has_any]
        out_d[start:end][has_any] = top_d[has_any]
    return out_ids, out_d


def build_lod(positions: np.ndarray, config: LodConfig,
              schedule: Optional[Sequence[int]] = None) -> LodStructure:
    """
    Construye la estructura LoD completa; encoder y decoder la reproducen
    idéntica a partir de la geometría y el calendario del encabezado.

    Args:
        positions: Posiciones canónicas (n, 3)
        config: Parámetros T, L, k
        schedule: Calendario ya realizado (p. ej. leído del encabezado)

    Returns:
        LodStructure: Capas y vecinos
    """
    is_valid, errors = config.validate()
    if not is_valid:
        raise ConfigError("; ".join(errors))
    positions = np.asarray(positions, dtype=np.int64)
    n = positions.shape[0]
    if schedule is None:
        schedule = config.base_distance_schedule or default_schedule(positions, config.T, config.base_fraction)
    schedule = tuple(int(d) for d in schedule)

    base_layers, remainder = build_base_layers(positions, config.T, schedule)
    inference_layers = build_inference_layers(remainder, config.L - config.T)
    layers = base_layers + inference_layers

    layer_of_point = np.empty(n, dtype=np.int64)
    for t, layer in enumerate(layers):
        layer_of_point[layer] = t

    neighbors = np.full((n, config.k), NO_NEIGHBOR, dtype=np.int64)
    distances = np.zeros((n, config.k), dtype=np.int64)

    base_order = np.concatenate(base_layers)
    ids, dists = knn_base_layers(positions, base_order, config.k)
    neighbors[base_order] = ids
    distances[base_order] = dists

    available = np.sort(base_order)
    for layer in inference_layers:
        if layer.size:
            ids, dists = knn_for_layer(positions[layer], positions[available], config.k,
                                       candidate_ids=available)
            neighbors[layer] = ids
            distances[layer] = dists
            available = np.union1d(available, layer)

    logger.info(f"LoD construido: {n} puntos, base={base_order.shape[0]}, "
                f"inferencia={remainder.shape[0]}, calendario={schedule}")
    return LodStructure(
        layers=layers,
        base_layer_count=config.T,
        neighbors=neighbors,
        distances=distances,
        layer_of_point=layer_of_point,
        schedule=schedule,
    )
