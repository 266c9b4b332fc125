"""
Generadores de nubes sintéticas con semilla.

Todas las funciones devuelven nubes canónicas (sin duplicados, orden de
Morton) listas para codificar o para entrenar.
"""

import logging
from typing import Callable, Dict

import numpy as np

from core.cloud_io import AttributeConfig, PointCloud, canonicalize

logger = logging.getLogger(__name__)


def _unique_positions(rng: np.random.Generator, count: int, extent: int) -> np.ndarray:
    """``count`` posiciones distintas dentro de un cubo de lado ``extent``."""
    total = extent ** 3
    count = min(count, total)
    flat = rng.choice(total, size=count, replace=False)
    return np.stack([flat % extent, (flat // extent) % extent, flat // (extent * extent)], axis=1)


def _rgb_cloud(positions: np.ndarray, rgb: np.ndarray, bit_depth: int) -> PointCloud:
    rgb = np.clip(np.rint(rgb), 0, 255).astype(np.int64)
    channels = {'red': rgb[:, 0], 'green': rgb[:, 1], 'blue': rgb[:, 2]}
    return canonicalize(PointCloud(positions, channels, bit_depth, AttributeConfig.rgb()))


def _single_cloud(positions: np.ndarray, values: np.ndarray, bit_depth: int,
                  name: str = 'reflectance') -> PointCloud:
    values = np.clip(np.rint(values), 0, 255).astype(np.int64)
    return canonicalize(PointCloud(positions, {name: values}, bit_depth, AttributeConfig.single(name)))


def gradient_cloud(count: int = 2000, extent: int = 64, seed: int = 0, single: bool = False) -> PointCloud:
    """Atributo suave: función lineal cuantizada de la posición."""
    rng = np.random.default_rng(seed)
    positions = _unique_positions(rng, count, extent)
    scaled = positions / max(extent - 1, 1)
    bit_depth = max(1, int(extent - 1).bit_length())
    if single:
        return _single_cloud(positions, 255.0 * scaled.mean(axis=1), bit_depth)
    rgb = 255.0 * np.stack([scaled[:, 0], scaled[:, 1], 0.5 * (scaled[:, 2] + scaled[:, 0])], axis=1)
    return _rgb_cloud(positions, rgb, bit_depth)


def quadrant_cloud(count: int = 2000, extent: int = 64, seed: int = 0) -> PointCloud:
    """Cuatro cuadrantes espaciales (x, y) con colores constantes por tramos."""
    rng = np.random.default_rng(seed)
    positions = _unique_positions(rng, count, extent)
    palette = np.array([[230, 30, 30], [30, 200, 40], [20, 40, 220], [240, 220, 20]])
    half = extent // 2
    quadrant = (positions[:, 0] >= half).astype(np.int64) + 2 * (positions[:, 1] >= half).astype(np.int64)
    return _rgb_cloud(positions, palette[quadrant], max(1, int(extent - 1).bit_length()))


def noise_cloud(count: int = 2000, extent: int = 64, seed: int = 0, single: bool = False) -> PointCloud:
    """Atributos uniformes independientes de la posición."""
    rng = np.random.default_rng(seed)
    positions = _unique_positions(rng, count, extent)
    bit_depth = max(1, int(extent - 1).bit_length())
    if single:
        return _single_cloud(positions, rng.integers(0, 256, size=positions.shape[0]), bit_depth)
    return _rgb_cloud(positions, rng.integers(0, 256, size=(positions.shape[0], 3)), bit_depth)


def sphere_cloud(count: int = 4000, radius: int = 40, seed: int = 0) -> PointCloud:
    """
    Superficie esférica muestreada al azar y voxelizada, con textura suave
    en función de la dirección normal.
    """
    rng = np.random.default_rng(seed)
    directions = rng.normal(size=(count, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    positions = np.rint(directions * radius + radius).astype(np.int64)
    rgb = 127.5 * (directions + 1.0)
    rgb[:, 1] = 127.5 * (1.0 + np.sin(3.0 * directions[:, 2]))
    return _rgb_cloud(positions, rgb, max(1, int(2 * radius).bit_length()))


def constant_cloud(count: int = 10000, extent: int = 32, color=(120, 80, 200), seed: int = 0) -> PointCloud:
    rng = np.random.default_rng(seed)
    positions = _unique_positions(rng, count, extent)
    rgb = np.tile(np.asarray(color, dtype=np.float64), (positions.shape[0], 1))
    return _rgb_cloud(positions, rgb, max(1, int(extent - 1).bit_length()))


def solid_cube(extent: int = 16, seed: int = 0) -> PointCloud:
    """Cubo completamente ocupado con color suave (nube muy densa)."""
    grid = np.arange(extent)
    positions = np.stack(np.meshgrid(grid, grid, grid, indexing='ij'), axis=-1).reshape(-1, 3)
    rng = np.random.default_rng(seed)
    scaled = positions / max(extent - 1, 1)
    rgb = 200.0 * scaled + rng.integers(0, 8, size=positions.shape)
    return _rgb_cloud(positions, rgb, max(1, int(extent - 1).bit_length()))


def isolated_cloud(count: int = 200, spacing: int = 6, seed: int = 0) -> PointCloud:
    """Puntos en una rejilla con separación > 2: ninguna ventana 5×5×5 comparte puntos."""
    rng = np.random.default_rng(seed)
    side = int(np.ceil(count ** (1.0 / 3.0)))
    cells = _unique_positions(rng, count, side)
    positions = cells * spacing
    values = rng.integers(0, 256, size=positions.shape[0])
    return _single_cloud(positions, values, max(1, int(positions.max()).bit_length()))


def lidar_cloud(rings: int = 16, points_per_ring: int = 512, radius: float = 200.0,
                seed: int = 0) -> PointCloud:
    """Anillos concéntricos dispersos con reflectancia dependiente de la distancia."""
    rng = np.random.default_rng(seed)
    angles = np.linspace(0.0, 2.0 * np.pi, points_per_ring, endpoint=False)
    rows = []
    for ring in range(rings):
        r = radius * (0.2 + 0.8 * (ring + 1) / rings)
        jitter = rng.normal(scale=0.5, size=points_per_ring)
        x = (r + jitter) * np.cos(angles) + radius
        y = (r + jitter) * np.sin(angles) + radius
        z = np.full(points_per_ring, 4.0 * ring) + rng.normal(scale=0.3, size=points_per_ring)
        rows.append(np.stack([x, y, z], axis=1))
    positions = np.clip(np.rint(np.concatenate(rows)), 0, None).astype(np.int64)
    distance = np.linalg.norm(positions[:, :2] - radius, axis=1)
    reflectance = 255.0 * (1.0 - distance / (distance.max() + 1.0)) + rng.normal(scale=4.0, size=distance.shape)
    return _single_cloud(positions, reflectance, max(1, int(positions.max()).bit_length()))


GENERATORS: Dict[str, Callable[..., PointCloud]] = {
    'gradient': gradient_cloud,
    'quadrants': quadrant_cloud,
    'noise': noise_cloud,
    'sphere': sphere_cloud,
    'constant': constant_cloud,
    'cube': solid_cube,
    'isolated': isolated_cloud,
    'lidar': lidar_cloud,
}


def training_corpus(count: int = 8, seed: int = 0) -> Dict[str, PointCloud]:
    """
    Corpus RGB de texturas suaves (gradientes y esferas) para entrenar.

    Returns:
        Dict[str, PointCloud]: nombre -> nube
    """
    corpus = {}
    for i in range(count):
        if i % 2 == 0:
            corpus[f'gradient_{i:03d}'] = gradient_cloud(count=3000, extent=48, seed=seed + i)
        else:
            corpus[f'sphere_{i:03d}'] = sphere_cloud(count=4000, radius=30, seed=seed + i)
    logger.info(f"📊 Corpus sintético de {len(corpus)} nubes (semilla {seed})")
    return corpus
