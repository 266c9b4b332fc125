"""
Descriptor adaptativo a la densidad
===================================

Construye la entrada del modelo de entropía para cada punto de un lote:

    g_i = concat[f_i, f'_j1, ..., f'_jk]
    f_i   = concat[posición normalizada (3), E_a(â_i)]
    f'_j  = concat[E_l(l_j), E_a(a_j), E_r(a_j - â_i)]

La etiqueta de posición relativa l_j combina, por eje, el desplazamiento
al vecino dividido por la distancia media al vecino más cercano del lote
y clasificado con umbrales crecientes en 2n+1 clases.

En modo color las tablas E_a y E_r son propias de cada canal (Y, Co, Cg)
y sus embeddings se suman en el mismo hueco, de modo que la dimensión no
depende del número de canales.

Autor: Equipo de Desarrollo
Fecha: 2024
Versión: 1.0
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from core.cloud_io import AttributeMode
from core.errors import ConfigError, InputError
from core.lod_builder import LodStructure

logger = logging.getLogger(__name__)

MIN_MEAN_DISTANCE = 1e-3


@dataclass(frozen=True)
class ChannelTable:
    """Tamaños y desplazamientos de las tablas de embedding de un canal."""

    attr_size: int
    rel_size: int
    attr_offset: int
    rel_offset: int


LUMA_TABLE = ChannelTable(attr_size=256, rel_size=511, attr_offset=0, rel_offset=255)
CHROMA_TABLE = ChannelTable(attr_size=512, rel_size=1023, attr_offset=255, rel_offset=510)


def channel_tables(mode: AttributeMode) -> List[ChannelTable]:
    """Tablas por canal: (Y,) o (Y, Co, Cg)."""
    if mode == AttributeMode.RGB:
        return [LUMA_TABLE, CHROMA_TABLE, CHROMA_TABLE]
    return [LUMA_TABLE]


@dataclass(frozen=True)
class DaldConfig:
    """Parámetros del descriptor."""

    n: int = 3
    thresholds_x: Tuple[float, ...] = (0.0, 1.0, 3.0, math.inf)
    thresholds_y: Tuple[float, ...] = (0.0, 1.0, 3.0, math.inf)
    thresholds_z: Tuple[float, ...] = (0.0, 1.0, 3.0, math.inf)
    k: int = 7
    n_el: int = 6
    n_ea: int = 3
    n_er: int = 6

    @property
    def label_alphabet(self) -> int:
        return (2 * self.n + 1) ** 3

    @property
    def descriptor_dim(self) -> int:
        return self.k * (self.n_el + self.n_ea + self.n_er) + 3 + self.n_ea

    @property
    def thresholds(self) -> Tuple[Tuple[float, ...], ...]:
        return self.thresholds_x, self.thresholds_y, self.thresholds_z

    def validate(self) -> Tuple[bool, List[str]]:
        """
        Returns:
            Tuple[bool, List[str]]: (es_válida, errores)
        """
        errors = []
        if self.n < 1:
            errors.append("n debe ser >= 1")
        if self.k < 1:
            errors.append("k debe ser >= 1")
        if min(self.n_el, self.n_ea, self.n_er) < 1:
            errors.append("Las dimensiones de embedding deben ser >= 1")
        for axis, values in zip('xyz', self.thresholds):
            if len(values) != self.n + 1:
                errors.append(f"Umbrales {axis}: se esperaban {self.n + 1} valores y hay {len(values)}")
                continue
            if not math.isinf(values[-1]) or values[-1] < 0:
                errors.append(f"Umbrales {axis}: el último debe ser +inf")
            if values[0] < 0:
                errors.append(f"Umbrales {axis}: deben ser >= 0")
            if any(b <= a for a, b in zip(values, values[1:])):
                errors.append(f"Umbrales {axis}: deben ser estrictamente crecientes")
        return len(errors) == 0, errors


def batch_mean_axis_distance(center_positions: np.ndarray, nearest_positions: np.ndarray) -> np.ndarray:
    """
    Distancia media por eje entre cada punto y su vecino más cercano.

    Args:
        center_positions: (N, 3) posiciones de los puntos reales del lote
        nearest_positions: (N, 3) posición del primer vecino de cada punto

    Returns:
        np.ndarray: (d̄_x, d̄_y, d̄_z), con piso 1e-3
    """
    center_positions = np.asarray(center_positions, dtype=np.int64).reshape(-1, 3)
    if center_positions.shape[0] == 0:
        raise InputError("Lote vacío")
    offsets = np.abs(np.asarray(nearest_positions, dtype=np.int64).reshape(-1, 3) - center_positions)
    return np.maximum(offsets.mean(axis=0), MIN_MEAN_DISTANCE)


def axis_labels(deltas: np.ndarray, mean_distance: float, thresholds: Sequence[float], n: int) -> np.ndarray:
    """Versión vectorizada de :func:`axis_label`."""
    deltas = np.asarray(deltas, dtype=np.int64)
    ratio = np.abs(deltas) / float(mean_distance)
    # Menor k con ratio <= t_k
    bins = np.searchsorted(np.asarray(thresholds, dtype=np.float64), ratio, side='left')
    bins = np.minimum(bins, n)
    return np.sign(deltas) * bins + n


def axis_label(delta: int, mean_distance: float, thresholds: Sequence[float], n: int) -> int:
    """
    Etiqueta de un eje: sign(delta)·k + n con t_{k-1} < |delta|/d̄ <= t_k.

    Example:
        n=3, umbrales {0,1,3,inf}, d̄=1: delta=2 -> 5, delta=-2 -> 1
    """
    return int(axis_labels(np.asarray([delta]), mean_distance, thresholds, n)[0])


def combine_label(l_x, l_y, l_z, n: int):
    """l = l_x + l_y·(2n+1) + l_z·(2n+1)²."""
    base = 2 * n + 1
    return l_x + l_y * base + l_z * base * base


@dataclass
class DescriptorInputs:
    """
    Índices y coordenadas de un grupo de lotes, listos para embeber.

    Formas: B lotes de N puntos, k vecinos, C canales.
    """

    positions: np.ndarray        # (B, N, 3) float64 en [0, 1]
    center_index: np.ndarray     # (B, N, C)
    labels: np.ndarray           # (B, N, k)
    neighbor_index: np.ndarray   # (B, N, k, C)
    relative_index: np.ndarray   # (B, N, k, C)
    real_mask: np.ndarray        # (B, N) True en puntos no rellenados

    @property
    def batch_count(self) -> int:
        return int(self.positions.shape[0])

    def subset(self, rows) -> 'DescriptorInputs':
        return DescriptorInputs(*(getattr(self, name)[rows] for name in (
            'positions', 'center_index', 'labels', 'neighbor_index', 'relative_index', 'real_mask')))


def stack_inputs(items: Sequence[DescriptorInputs]) -> DescriptorInputs:
    """Apila varios grupos de lotes con el mismo N."""
    return DescriptorInputs(*(np.concatenate([getattr(item, name) for item in items], axis=0) for name in (
        'positions', 'center_index', 'labels', 'neighbor_index', 'relative_index', 'real_mask')))


def normalize_positions(positions: np.ndarray) -> np.ndarray:
    """Min-max a [0, 1] por eje; un eje de rango nulo queda en 0."""
    positions = np.asarray(positions, dtype=np.float64)
    low = positions.min(axis=0)
    span = positions.max(axis=0) - low
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (positions - low) / safe, 0.0)


def build_descriptor_inputs(positions: np.ndarray, values: np.ndarray, predicted: np.ndarray,
                            batch_points: np.ndarray, real_count: int, lod: LodStructure,
                            config: DaldConfig, mode: AttributeMode) -> DescriptorInputs:
    """
    Índices de descriptor de un lote.

    Args:
        positions: (n, 3) posiciones de la nube
        values: (n, C) atributos reconstruidos (los vecinos deben estarlo)
        predicted: (N, C) predicciones IDW de los puntos del lote
        batch_points: (N,) índices del lote, con relleno al final
        real_count: Cantidad de puntos reales del lote
        lod: Estructura LoD (vecinos)
        config: Parámetros del descriptor
        mode: Modo de atributos

    Returns:
        DescriptorInputs: Con B = 1
    """
    tables = channel_tables(mode)
    values = np.asarray(values, dtype=np.int64).reshape(values.shape[0], -1)
    predicted = np.asarray(predicted, dtype=np.int64).reshape(batch_points.shape[0], -1)
    if values.shape[1] != len(tables):
        raise ConfigError(f"Se esperaban {len(tables)} canales y hay {values.shape[1]}")
    neighbors = lod.neighbors[batch_points][:, :config.k]
    if neighbors.shape[1] != config.k:
        raise ConfigError(f"El LoD tiene {lod.k} vecinos y el descriptor pide {config.k}")

    center = positions[batch_points]
    real = center[:real_count]
    mean_distance = batch_mean_axis_distance(real, positions[neighbors[:real_count, 0]])
    deltas = positions[neighbors] - center[:, None, :]
    per_axis = [axis_labels(deltas[..., axis], mean_distance[axis], config.thresholds[axis], config.n)
                for axis in range(3)]
    labels = combine_label(per_axis[0], per_axis[1], per_axis[2], config.n)

    neighbor_values = values[neighbors]                        # (N, k, C)
    relative = neighbor_values - predicted[:, None, :]
    attr_offsets = np.asarray([t.attr_offset for t in tables], dtype=np.int64)
    rel_offsets = np.asarray([t.rel_offset for t in tables], dtype=np.int64)
    center_index = predicted + attr_offsets
    neighbor_index = neighbor_values + attr_offsets
    relative_index = relative + rel_offsets

    for c, table in enumerate(tables):
        for name, index, size in (('atributo', neighbor_index[..., c], table.attr_size),
                                  ('central', center_index[..., c], table.attr_size),
                                  ('relativo', relative_index[..., c], table.rel_size)):
            if index.size and (index.min() < 0 or index.max() >= size):
                raise ConfigError(f"Índice {name} fuera de la tabla del canal {c} (tamaño {size})")

    real_mask = np.zeros(batch_points.shape[0], dtype=bool)
    real_mask[:real_count] = True
    return DescriptorInputs(
        positions=normalize_positions(center)[None],
        center_index=center_index[None],
        labels=labels[None],
        neighbor_index=neighbor_index[None],
        relative_index=relative_index[None],
        real_mask=real_mask[None],
    )


class DescriptorEmbeddings(nn.Module):
    """Tablas E_l, E_a y E_r; ensambla g_i a partir de :class:`DescriptorInputs`."""

    def __init__(self, config: DaldConfig, mode: AttributeMode):
        super().__init__()
        self.config = config
        self.tables = channel_tables(mode)
        self.label = nn.Embedding(config.label_alphabet, config.n_el)
        self.attr = nn.ModuleList([nn.Embedding(t.attr_size, config.n_ea) for t in self.tables])
        self.rel = nn.ModuleList([nn.Embedding(t.rel_size, config.n_er) for t in self.tables])

    @property
    def dim(self) -> int:
        return self.config.descriptor_dim

    def forward(self, inputs: DescriptorInputs) -> torch.Tensor:
        return build_descriptors(inputs, self)


def build_descriptors(inputs: DescriptorInputs, embeddings: DescriptorEmbeddings) -> torch.Tensor:
    """
    Ensambla los descriptores g_i.

    Returns:
        torch.Tensor: (B, N, d) con d = k·(N_El+N_Ea+N_Er) + 3 + N_Ea
    """
    device = embeddings.label.weight.device
    dtype = embeddings.label.weight.dtype

    def as_long(array):
        return torch.as_tensor(np.ascontiguousarray(array), dtype=torch.long, device=device)

    center_index = as_long(inputs.center_index)
    neighbor_index = as_long(inputs.neighbor_index)
    relative_index = as_long(inputs.relative_index)

    center_attr = sum(table(center_index[..., c]) for c, table in enumerate(embeddings.attr))
    neighbor_attr = sum(table(neighbor_index[..., c]) for c, table in enumerate(embeddings.attr))
    neighbor_rel = sum(table(relative_index[..., c]) for c, table in enumerate(embeddings.rel))
    label = embeddings.label(as_long(inputs.labels))

    neighbor = torch.cat([label, neighbor_attr, neighbor_rel], dim=-1)   # (B, N, k, N_El+N_Ea+N_Er)
    batch, points = neighbor.shape[:2]
    positions = torch.as_tensor(inputs.positions, dtype=dtype, device=device)
    return torch.cat([positions, center_attr, neighbor.reshape(batch, points, -1)], dim=-1)
