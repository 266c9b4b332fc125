"""
Lectura y escritura de nubes de puntos
======================================

Carga, canonicaliza y guarda nubes de puntos en formato PLY. La
canonicalización elimina posiciones duplicadas (se conserva la primera
aparición) y ordena los puntos por código de Morton; el resto de módulos
depende de ese orden determinista.

Autor: Equipo de Desarrollo
Fecha: 2024
Versión: 1.0
"""

import io
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from plyfile import PlyData, PlyElement

from core.errors import InputError

logger = logging.getLogger(__name__)

MORTON_COORD_BITS = 21
RGB_CHANNELS = ('red', 'green', 'blue')
SCALAR_NAMES = ('reflectance', 'intensity', 'refc', 'scalar')
BIT_DEPTH_COMMENT = 'bit_depth_geometry'


class AttributeMode(Enum):
    """Modos de atributo soportados."""
    SINGLE = "single-channel"
    RGB = "rgb-color"


@dataclass(frozen=True)
class AttributeConfig:
    """Descripción de los canales de atributo de una nube."""

    mode: AttributeMode
    channel_names: Tuple[str, ...]
    bit_depths: Tuple[int, ...]

    def validate(self) -> Tuple[bool, List[str]]:
        """
        Valida la combinación de modo, canales y profundidades.

        Returns:
            Tuple[bool, List[str]]: (es_válida, errores)
        """
        errors = []
        if len(self.channel_names) != len(self.bit_depths):
            errors.append("Cada canal necesita una profundidad de bits")
        if self.mode == AttributeMode.RGB:
            if len(self.channel_names) != 3 or any(d != 8 for d in self.bit_depths):
                errors.append("El modo rgb-color requiere exactamente tres canales de 8 bits")
        elif len(self.channel_names) != 1:
            errors.append("El modo single-channel requiere exactamente un canal")
        return len(errors) == 0, errors

    @classmethod
    def rgb(cls) -> 'AttributeConfig':
        return cls(AttributeMode.RGB, RGB_CHANNELS, (8, 8, 8))

    @classmethod
    def single(cls, name: str = 'reflectance') -> 'AttributeConfig':
        return cls(AttributeMode.SINGLE, (name,), (8,))


@dataclass(eq=False)
class PointCloud:
    """
    Nube de puntos voxelizada con atributos enteros.

    ``positions`` es un arreglo (n, 3) de enteros no negativos y
    ``channels`` un diccionario ordenado nombre -> arreglo (n,).
    """

    positions: np.ndarray
    channels: Dict[str, np.ndarray]
    bit_depth_geometry: int
    attribute_config: AttributeConfig = field(default_factory=AttributeConfig.rgb)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.int64).reshape(-1, 3)
        self.channels = {name: np.asarray(values, dtype=np.int64).reshape(-1)
                         for name, values in self.channels.items()}

    @property
    def num_points(self) -> int:
        return int(self.positions.shape[0])

    @property
    def mode(self) -> AttributeMode:
        return self.attribute_config.mode

    def attribute_matrix(self) -> np.ndarray:
        """Atributos como matriz (n, canales) en el orden declarado."""
        if not self.channels:
            return np.zeros((self.num_points, 0), dtype=np.int64)
        return np.stack([self.channels[name] for name in self.attribute_config.channel_names], axis=1)

    def validate(self) -> Tuple[bool, List[str]]:
        """
        Verifica las invariantes de una nube canónica.

        Returns:
            Tuple[bool, List[str]]: (es_válida, errores)
        """
        _, errors = self.attribute_config.validate()
        n = self.num_points
        if n and self.positions.min() < 0:
            errors.append("Coordenadas negativas")
        if n and self.positions.max() >= (1 << self.bit_depth_geometry):
            errors.append(f"Coordenada fuera de la profundidad de geometría {self.bit_depth_geometry}")
        for name, depth in zip(self.attribute_config.channel_names, self.attribute_config.bit_depths):
            values = self.channels.get(name)
            if values is None:
                errors.append(f"Canal faltante: {name}")
                continue
            if values.shape[0] != n:
                errors.append(f"El canal {name} tiene {values.shape[0]} valores para {n} puntos")
            elif n and (values.min() < 0 or values.max() >= (1 << depth)):
                errors.append(f"Valores del canal {name} fuera de {depth} bits")
        if n > 1:
            codes = morton_codes(self.positions)
            if np.any(codes[1:] <= codes[:-1]):
                errors.append("Los puntos no están en orden de Morton estricto")
        return len(errors) == 0, errors

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        return (self.bit_depth_geometry == other.bit_depth_geometry
                and self.attribute_config == other.attribute_config
                and np.array_equal(self.positions, other.positions)
                and list(self.channels) == list(other.channels)
                and all(np.array_equal(self.channels[k], other.channels[k]) for k in self.channels))


def _part1by2(values: np.ndarray) -> np.ndarray:
    """Separa los 21 bits bajos con dos ceros entre cada bit."""
    v = values.astype(np.uint64) & np.uint64(0x1FFFFF)
    v = (v | (v << np.uint64(32))) & np.uint64(0x1F00000000FFFF)
    v = (v | (v << np.uint64(16))) & np.uint64(0x1F0000FF0000FF)
    v = (v | (v << np.uint64(8))) & np.uint64(0x100F00F00F00F00F)
    v = (v | (v << np.uint64(4))) & np.uint64(0x10C30C30C30C30C3)
    v = (v | (v << np.uint64(2))) & np.uint64(0x1249249249249249)
    return v


def morton_codes(positions: np.ndarray) -> np.ndarray:
    """
    Códigos de Morton (orden z) de un arreglo de posiciones.

    Args:
        positions: Arreglo (n, 3) de enteros en [0, 2^21)

    Returns:
        np.ndarray: Códigos uint64; x ocupa el carril más bajo, luego y, luego z
    """
    positions = np.asarray(positions, dtype=np.int64).reshape(-1, 3)
    if positions.size and (positions.min() < 0 or positions.max() >= (1 << MORTON_COORD_BITS)):
        raise InputError(f"Coordenada fuera del rango de Morton [0, 2^{MORTON_COORD_BITS})")
    return (_part1by2(positions[:, 0])
            | (_part1by2(positions[:, 1]) << np.uint64(1))
            | (_part1by2(positions[:, 2]) << np.uint64(2)))


def _compact1by2(values: np.ndarray) -> np.ndarray:
    v = values.astype(np.uint64) & np.uint64(0x1249249249249249)
    v = (v | (v >> np.uint64(2))) & np.uint64(0x10C30C30C30C30C3)
    v = (v | (v >> np.uint64(4))) & np.uint64(0x100F00F00F00F00F)
    v = (v | (v >> np.uint64(8))) & np.uint64(0x1F0000FF0000FF)
    v = (v | (v >> np.uint64(16))) & np.uint64(0x1F00000000FFFF)
    v = (v | (v >> np.uint64(32))) & np.uint64(0x1FFFFF)
    return v


def morton_decode(codes: np.ndarray) -> np.ndarray:
    """Inversa de :func:`morton_codes`: (n,) uint64 -> (n, 3) int64."""
    codes = np.asarray(codes, dtype=np.uint64).reshape(-1)
    return np.stack([_compact1by2(codes >> np.uint64(shift)) for shift in (0, 1, 2)],
                    axis=1).astype(np.int64)


def morton_code(position) -> int:
    """Código de Morton de una sola posición (x, y, z)."""
    return int(morton_codes(np.asarray(position).reshape(1, 3))[0])


def infer_bit_depth(positions: np.ndarray) -> int:
    """Menor profundidad que cubre la coordenada máxima."""
    if positions.size == 0:
        return 1
    return max(1, int(positions.max()).bit_length())


def canonicalize(cloud: PointCloud) -> PointCloud:
    """
    Elimina duplicados (conservando la primera aparición) y ordena por Morton.

    Args:
        cloud: Nube en cualquier orden

    Returns:
        PointCloud: Nube canónica
    """
    codes = morton_codes(cloud.positions)
    # np.unique devuelve el índice de la primera aparición de cada código
    _, first_index = np.unique(codes, return_index=True)
    dropped = cloud.num_points - first_index.shape[0]
    if dropped:
        logger.info(f"Se eliminaron {dropped} posiciones duplicadas")
    return PointCloud(
        positions=cloud.positions[first_index],
        channels={name: values[first_index] for name, values in cloud.channels.items()},
        bit_depth_geometry=cloud.bit_depth_geometry,
        attribute_config=cloud.attribute_config,
    )


def _integral_column(column: np.ndarray, name: str) -> np.ndarray:
    column = np.asarray(column)
    if np.issubdtype(column.dtype, np.floating):
        if not np.all(np.isfinite(column)) or not np.all(column == np.round(column)):
            raise InputError(f"La propiedad '{name}' tiene valores no enteros")
    return column.astype(np.int64)


def _read_vertex(data: bytes):
    try:
        ply = PlyData.read(io.BytesIO(data))
    except Exception as e:
        raise InputError(f"PLY mal formado: {e}") from e

    if 'vertex' not in [element.name for element in ply.elements]:
        raise InputError("El PLY no tiene elemento 'vertex'")
    vertex = ply['vertex']
    names = [prop.name for prop in vertex.properties]
    for axis in ('x', 'y', 'z'):
        if axis not in names:
            raise InputError(f"Falta la propiedad de coordenada '{axis}'")
    return ply, vertex, names


def _read_positions(ply, vertex, bit_depth: Optional[int]) -> Tuple[np.ndarray, int]:
    try:
        positions = np.stack([_integral_column(vertex[axis], axis) for axis in ('x', 'y', 'z')], axis=1) \
            if vertex.count else np.zeros((0, 3), dtype=np.int64)
    except InputError:
        raise
    except Exception as e:
        raise InputError(f"No se pudieron leer los datos de vértices: {e}") from e
    if positions.size and positions.min() < 0:
        raise InputError("Coordenadas negativas en el PLY")

    if bit_depth is None:
        for comment in ply.comments:
            parts = comment.split()
            if len(parts) == 2 and parts[0] == BIT_DEPTH_COMMENT:
                bit_depth = int(parts[1])
    if bit_depth is None:
        bit_depth = infer_bit_depth(positions)
    if bit_depth < 1 or bit_depth > MORTON_COORD_BITS:
        raise InputError(f"Profundidad de geometría no soportada: {bit_depth}")
    if positions.size and positions.max() >= (1 << bit_depth):
        raise InputError(f"Coordenada {int(positions.max())} excede la profundidad de {bit_depth} bits")
    return positions, bit_depth


def load_ply(data: bytes, bit_depth: Optional[int] = None) -> PointCloud:
    """
    Carga una nube desde bytes PLY (ASCII o binario little-endian).

    Args:
        data: Contenido del archivo PLY
        bit_depth: Profundidad de geometría; si es None se toma del comentario
            del encabezado o se infiere de la coordenada máxima

    Returns:
        PointCloud: Nube canonicalizada

    Raises:
        InputError: Encabezado mal formado, propiedades faltantes, coordenadas
            no enteras o fuera de la profundidad declarada
    """
    ply, vertex, names = _read_vertex(data)

    if all(channel in names for channel in RGB_CHANNELS):
        attribute_config = AttributeConfig.rgb()
    else:
        scalar = [name for name in SCALAR_NAMES if name in names]
        extra = [name for name in names if name not in ('x', 'y', 'z')]
        if scalar:
            attribute_config = AttributeConfig.single(scalar[0])
        elif len(extra) == 1:
            attribute_config = AttributeConfig.single(extra[0])
        else:
            raise InputError("Faltan propiedades de atributo (red/green/blue o un escalar)")

    used = set(('x', 'y', 'z')) | set(attribute_config.channel_names)
    ignored = [name for name in names if name not in used]
    if ignored:
        logger.warning(f"⚠️ Propiedades PLY ignoradas: {', '.join(ignored)}")

    positions, bit_depth = _read_positions(ply, vertex, bit_depth)
    try:
        channels = {name: _integral_column(vertex[name], name) if vertex.count else np.zeros(0, dtype=np.int64)
                    for name in attribute_config.channel_names}
    except InputError:
        raise
    except Exception as e:
        raise InputError(f"No se pudieron leer los datos de vértices: {e}") from e
    for name, values in channels.items():
        if values.size and (values.min() < 0 or values.max() > 255):
            raise InputError(f"El atributo '{name}' está fuera del rango de 8 bits")

    cloud = PointCloud(positions, channels, bit_depth, attribute_config)
    return canonicalize(cloud)


def load_ply_geometry(data: bytes, bit_depth: Optional[int] = None) -> np.ndarray:
    """
    Carga solo las posiciones de un PLY, sin duplicados y en orden de Morton.

    Cualquier propiedad distinta de x/y/z se ignora; sirve para el archivo
    de geometría del decodificador.
    """
    ply, vertex, _ = _read_vertex(data)
    positions, _ = _read_positions(ply, vertex, bit_depth)
    _, first_index = np.unique(morton_codes(positions), return_index=True)
    return positions[first_index]


def save_ply(cloud: PointCloud) -> bytes:
    """
    Serializa una nube como PLY binario little-endian.

    Args:
        cloud: Nube válida

    Returns:
        bytes: Contenido PLY; ``load_ply(save_ply(c)) == c``
    """
    dtype = [('x', '<i4'), ('y', '<i4'), ('z', '<i4')]
    dtype += [(name, 'u1') for name in cloud.attribute_config.channel_names]
    vertices = np.empty(cloud.num_points, dtype=dtype)
    for i, axis in enumerate(('x', 'y', 'z')):
        vertices[axis] = cloud.positions[:, i]
    for name in cloud.attribute_config.channel_names:
        vertices[name] = cloud.channels[name]
    element = PlyElement.describe(vertices, 'vertex')
    ply = PlyData([element], text=False, byte_order='<',
                  comments=[f'{BIT_DEPTH_COMMENT} {cloud.bit_depth_geometry}'])
    buffer = io.BytesIO()
    ply.write(buffer)
    return buffer.getvalue()


def read_ply_file(path, bit_depth: Optional[int] = None) -> PointCloud:
    """Carga una nube desde un archivo PLY en disco."""
    with open(path, 'rb') as f:
        return load_ply(f.read(), bit_depth=bit_depth)


def write_ply_file(cloud: PointCloud, path) -> None:
    """Guarda una nube en un archivo PLY en disco."""
    with open(path, 'wb') as f:
        f.write(save_ply(cloud))
    logger.info(f"Nube guardada: {path} ({cloud.num_points} puntos)")


def read_ply_geometry(path, bit_depth: Optional[int] = None) -> np.ndarray:
    """Carga las posiciones canónicas de un archivo PLY en disco."""
    with open(path, 'rb') as f:
        return load_ply_geometry(f.read(), bit_depth=bit_depth)
