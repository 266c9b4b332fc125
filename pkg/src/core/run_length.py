"""
Codificación por longitud de corridas
=====================================

Los residuos con signo se mapean a enteros sin signo con zigzag
(0->0, -1->1, 1->2, ...) y se agrupan en tokens ``(corrida_de_ceros, valor)``.
El token con valor 0 es el terminador y lleva la corrida final de ceros.

Cada componente de un token se codifica con el codificador de rango en dos
partes: su longitud en bits (modelo adaptativo de 65 símbolos, uno para
corridas y otro para valores) y los bits de mantisa bajo el 1 inicial,
crudos, en trozos de hasta 16 bits.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from core.errors import IntegrityError
from core.range_coder import AdaptiveFrequencyModel, RangeDecoder, RangeEncoder

logger = logging.getLogger(__name__)

LENGTH_ALPHABET = 65
CHUNK_BITS = 16
OVERFLOW_LIMIT = 255


def zigzag(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64)
    return np.where(values >= 0, 2 * values, -2 * values - 1)


def unzigzag(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64)
    return np.where(values % 2 == 0, values // 2, -(values + 1) // 2)


def tokenize(values: np.ndarray, signed: bool = True) -> List[Tuple[int, int]]:
    """
    Convierte un flujo con signo en tokens ``(corrida, valor_zigzag)``.
    Con ``signed=False`` los valores (no negativos) se usan sin zigzag.

    Example:
        ``[0, 0, 5, -1]`` -> ``[(2, 10), (0, 1), (0, 0)]``
    """
    mapped = zigzag(values) if signed else np.asarray(values, dtype=np.int64)
    tokens = []
    nonzero = np.flatnonzero(mapped)
    previous = -1
    for index in nonzero:
        tokens.append((int(index - previous - 1), int(mapped[index])))
        previous = index
    tokens.append((int(mapped.shape[0] - previous - 1), 0))
    return tokens


def detokenize(tokens: List[Tuple[int, int]], signed: bool = True) -> np.ndarray:
    """Inversa de :func:`tokenize`."""
    out = []
    for run, value in tokens:
        out.extend([0] * run)
        if value:
            out.append(value)
    out = np.asarray(out, dtype=np.int64)
    return unzigzag(out) if signed else out


@dataclass
class TokenModels:
    """Modelos adaptativos independientes para corridas y valores."""

    runs: AdaptiveFrequencyModel = field(default_factory=lambda: AdaptiveFrequencyModel(LENGTH_ALPHABET))
    values: AdaptiveFrequencyModel = field(default_factory=lambda: AdaptiveFrequencyModel(LENGTH_ALPHABET))


def _encode_integer(encoder: RangeEncoder, model: AdaptiveFrequencyModel, value: int) -> None:
    nbits = value.bit_length()
    encoder.encode_adaptive(model, nbits)
    remaining = nbits - 1
    while remaining > 0:
        chunk = min(CHUNK_BITS, remaining)
        remaining -= chunk
        encoder.encode_bits((value >> remaining) & ((1 << chunk) - 1), chunk)


def _decode_integer(decoder: RangeDecoder, model: AdaptiveFrequencyModel) -> int:
    nbits = decoder.decode_adaptive(model)
    if nbits == 0:
        return 0
    value = 1
    remaining = nbits - 1
    while remaining > 0:
        chunk = min(CHUNK_BITS, remaining)
        remaining -= chunk
        value = (value << chunk) | decoder.decode_bits(chunk)
    return value


def encode_run_length(encoder: RangeEncoder, values: np.ndarray,
                      models: Optional[TokenModels] = None, signed: bool = True) -> int:
    """
    Escribe un flujo de residuos en un encoder de rango ya abierto.

    Returns:
        int: Número de tokens emitidos (terminador incluido)
    """
    models = models or TokenModels()
    tokens = tokenize(values, signed)
    for run, value in tokens:
        _encode_integer(encoder, models.runs, run)
        _encode_integer(encoder, models.values, value)
    return len(tokens)


def decode_run_length(decoder: RangeDecoder, max_count: int,
                      models: Optional[TokenModels] = None, signed: bool = True) -> np.ndarray:
    """
    Lee un flujo de residuos hasta su terminador.

    Args:
        decoder: Decodificador posicionado al inicio del flujo
        max_count: Cota de longitud; superarla indica un flujo corrupto

    Returns:
        np.ndarray: Residuos con signo
    """
    models = models or TokenModels()
    tokens = []
    total = 0
    while True:
        run = _decode_integer(decoder, models.runs)
        value = _decode_integer(decoder, models.values)
        if value >= 1 << 63:
            raise IntegrityError("Valor RLE fuera del rango de 64 bits con signo")
        total += run + (1 if value else 0)
        if total > max_count:
            raise IntegrityError(f"Flujo RLE excede la longitud esperada ({max_count})")
        tokens.append((run, value))
        if value == 0:
            break
    return detokenize(tokens, signed)


def run_length_encode(values: np.ndarray) -> bytes:
    """Codifica un flujo de residuos con signo en un flujo de rango propio."""
    encoder = RangeEncoder()
    count = encode_run_length(encoder, np.asarray(values, dtype=np.int64))
    data = encoder.finish()
    logger.debug(f"RLE: {len(values)} valores -> {count} tokens, {len(data)} bytes")
    return data


def run_length_decode(data: bytes, max_count: int = 1 << 40) -> np.ndarray:
    """Inversa de :func:`run_length_encode`."""
    return decode_run_length(RangeDecoder(data), max_count)


def encode_overflow(residuals: np.ndarray, limit: int = OVERFLOW_LIMIT) -> Tuple[np.ndarray, np.ndarray]:
    """
    Separa los residuos de crominancia que exceden [-limit, limit].

    Args:
        residuals: Residuos en [-510, 510]

    Returns:
        Tuple[np.ndarray, np.ndarray]: (residuos recortados a ±limit,
        flujo lateral con el valor exacto donde |r| > limit y 0 en el resto)
    """
    residuals = np.asarray(residuals, dtype=np.int64)
    escaped = np.abs(residuals) > limit
    clamped = np.clip(residuals, -limit, limit)
    side = np.where(escaped, residuals, 0)
    return clamped, side


def restore_overflow(clamped: np.ndarray, side: np.ndarray, limit: int = OVERFLOW_LIMIT) -> np.ndarray:
    """Recupera los residuos exactos a partir del flujo principal y el lateral."""
    clamped = np.asarray(clamped, dtype=np.int64)
    side = np.asarray(side, dtype=np.int64)
    if side.shape != clamped.shape:
        raise IntegrityError("El flujo de desborde no coincide con la cantidad de puntos")
    escaped = side != 0
    if np.any(np.abs(side[escaped]) <= limit) or np.any(np.abs(clamped[escaped]) != limit):
        raise IntegrityError("Flujo de desborde inconsistente con los símbolos de escape")
    if np.any(np.sign(side[escaped]) != np.sign(clamped[escaped])):
        raise IntegrityError("Signo del desborde distinto del símbolo de escape")
    return np.where(escaped, side, clamped)
