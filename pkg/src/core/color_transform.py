"""
Transformación de color reversible RGB <-> Y-CoCg-R.

Y queda en 8 bits sin signo; Co y Cg en enteros con signo de 9 bits
([-255, 255]). Los desplazamientos a la derecha son aritméticos (piso),
tanto en Python como en numpy, lo que hace la transformación exactamente
invertible.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from core.errors import InputError


@dataclass(frozen=True)
class YCoCgTriple:
    """Color en Y-CoCg-R."""

    y: int
    co: int
    cg: int


def rgb_to_ycocgr(r: int, g: int, b: int) -> YCoCgTriple:
    """
    Convierte un color RGB de 8 bits a Y-CoCg-R.

    Args:
        r, g, b: Componentes en [0, 255]

    Returns:
        YCoCgTriple: Color transformado
    """
    for value in (r, g, b):
        if not 0 <= int(value) <= 255:
            raise InputError(f"Componente RGB fuera de rango: {value}")
    co = int(r) - int(b)
    t = int(b) + (co >> 1)
    cg = int(g) - t
    y = t + (cg >> 1)
    return YCoCgTriple(y, co, cg)


def ycocgr_to_rgb(triple: YCoCgTriple) -> Tuple[int, int, int]:
    """
    Inversa exacta de :func:`rgb_to_ycocgr`.

    El verde se recupera como ``Cg + t``; es la única inversa compatible con
    las reglas directas.
    """
    t = triple.y - (triple.cg >> 1)
    g = triple.cg + t
    b = t - (triple.co >> 1)
    r = b + triple.co
    return r, g, b


def rgb_to_ycocgr_array(rgb: np.ndarray) -> np.ndarray:
    """
    Versión vectorizada sobre un arreglo (n, 3) de RGB.

    Returns:
        np.ndarray: Arreglo (n, 3) int64 con columnas (Y, Co, Cg)
    """
    rgb = np.asarray(rgb, dtype=np.int64).reshape(-1, 3)
    if rgb.size and (rgb.min() < 0 or rgb.max() > 255):
        raise InputError("Componentes RGB fuera de [0, 255]")
    r, g, b = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    co = r - b
    t = b + (co >> 1)
    cg = g - t
    y = t + (cg >> 1)
    return np.stack([y, co, cg], axis=1)


def ycocgr_to_rgb_array(ycocg: np.ndarray) -> np.ndarray:
    """Inversa vectorizada; devuelve (n, 3) int64 con columnas (R, G, B)."""
    ycocg = np.asarray(ycocg, dtype=np.int64).reshape(-1, 3)
    y, co, cg = ycocg[:, 0], ycocg[:, 1], ycocg[:, 2]
    t = y - (cg >> 1)
    g = cg + t
    b = t - (co >> 1)
    r = b + co
    return np.stack([r, g, b], axis=1)
