"""
Codificador de rango
====================

Codificador de rango de 32 bits con renormalización por bytes y
propagación de acarreo (variante con ``cache``), CDFs cuantizadas a un
total de 2^16 y modelos adaptativos de orden 0.

Formato del flujo:
    - El encoder arranca con low=0, range=0xFFFFFFFF.
    - Tras cada símbolo, mientras range < 2^24 se emite un byte (con
      acarreo diferido) y range se desplaza 8 bits.
    - El cierre empuja los 4 bytes de low (cola fija de 4 bytes); un flujo
      sin símbolos ocupa exactamente 4 bytes.
    - El decodificador lee 4 bytes al inicio y uno por renormalización; un
      flujo válido nunca pide bytes más allá de su final.

Autor: Equipo de Desarrollo
Fecha: 2024
Versión: 1.0
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import IntegrityError, InputError

logger = logging.getLogger(__name__)

PROB_BITS = 16
CDF_TOTAL = 1 << PROB_BITS
TOP = 1 << 24
MASK32 = 0xFFFFFFFF
RESIDUAL_ALPHABET = 511


@dataclass(frozen=True)
class QuantizedCdf:
    """CDF entera sobre un alfabeto; el último valor es 65536."""

    cumulative: Tuple[int, ...]

    @property
    def alphabet_size(self) -> int:
        return len(self.cumulative) - 1

    def validate(self) -> Tuple[bool, List[str]]:
        """
        Verifica monotonía estricta, origen en 0 y total 2^16.

        Returns:
            Tuple[bool, List[str]]: (es_válida, errores)
        """
        errors = []
        cdf = np.asarray(self.cumulative, dtype=np.int64)
        if cdf[0] != 0:
            errors.append("La CDF debe comenzar en 0")
        if cdf[-1] != CDF_TOTAL:
            errors.append(f"La CDF debe terminar en {CDF_TOTAL}")
        if np.any(np.diff(cdf) < 1):
            errors.append("Cada símbolo necesita frecuencia >= 1")
        return len(errors) == 0, errors

    @classmethod
    def from_probabilities(cls, probs: Sequence[float]) -> 'QuantizedCdf':
        return cls(tuple(int(v) for v in quantize_probabilities(np.asarray(probs)[None, :])[0]))


def quantize_probabilities(probs: np.ndarray, total: int = CDF_TOTAL) -> np.ndarray:
    """
    Cuantiza filas de probabilidades en CDFs enteras deterministas.

    Método del mayor resto (empates al índice menor), piso de 1 por símbolo y
    el exceso descontado del bucket más grande. Solo aritmética entera a
    partir del escalado, por lo que el resultado es reproducible.

    Args:
        probs: Arreglo (filas, A) de probabilidades no negativas
        total: Total de la CDF

    Returns:
        np.ndarray: Arreglo (filas, A + 1) int64 de CDFs acumuladas
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim == 1:
        probs = probs[None, :]
    rows, alphabet = probs.shape
    if alphabet > total:
        raise InputError("El alfabeto excede el total de la CDF")
    if not np.all(np.isfinite(probs)) or np.any(probs < 0):
        raise InputError("Probabilidades no finitas o negativas")
    sums = probs.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        raise InputError("Fila de probabilidades con suma nula")
    probs = probs / sums

    scaled = probs * total
    counts = np.floor(scaled).astype(np.int64)
    remainder = np.clip(total - counts.sum(axis=1), 0, alphabet)
    frac = scaled - counts
    order = np.argsort(-frac, axis=1, kind='stable')
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.broadcast_to(np.arange(alphabet), (rows, alphabet)).copy(), axis=1)
    counts += (ranks < remainder[:, None]).astype(np.int64)

    counts[counts == 0] = 1
    excess = counts.sum(axis=1) - total
    largest = np.argmax(counts, axis=1)
    counts[np.arange(rows), largest] -= excess

    cdf = np.zeros((rows, alphabet + 1), dtype=np.int64)
    np.cumsum(counts, axis=1, out=cdf[:, 1:])
    return cdf


class AdaptiveFrequencyModel:
    """
    Modelo adaptativo de orden 0 con árbol de Fenwick.

    Cuentas iniciales en 1; cada símbolo codificado suma ``increment``; si el
    total supera ``limit`` todas las cuentas se dividen a la mitad
    (redondeando hacia arriba, nunca bajan de 1). Encoder y decoder aplican
    la misma actualización en el mismo orden.
    """

    def __init__(self, alphabet_size: int, increment: int = 32, limit: int = CDF_TOTAL - 32):
        if alphabet_size < 1:
            raise InputError("El alfabeto debe tener al menos un símbolo")
        self.alphabet_size = alphabet_size
        self.increment = increment
        self.limit = limit
        self.counts = [1] * alphabet_size
        self.total = alphabet_size
        self._top_step = 1 << (alphabet_size.bit_length() - 1)
        self._rebuild()

    def _rebuild(self) -> None:
        tree = [0] * (self.alphabet_size + 1)
        for i, count in enumerate(self.counts, start=1):
            tree[i] += count
            parent = i + (i & -i)
            if parent <= self.alphabet_size:
                tree[parent] += tree[i]
        self._tree = tree

    def _prefix(self, symbol: int) -> int:
        """Suma de las cuentas de los símbolos < symbol."""
        total = 0
        i = symbol
        tree = self._tree
        while i > 0:
            total += tree[i]
            i -= i & -i
        return total

    def frequency_range(self, symbol: int) -> Tuple[int, int, int]:
        """(inicio, tamaño, total) del símbolo."""
        if not 0 <= symbol < self.alphabet_size:
            raise InputError(f"Símbolo {symbol} fuera del alfabeto de {self.alphabet_size}")
        return self._prefix(symbol), self.counts[symbol], self.total

    def find(self, target: int) -> Tuple[int, int, int]:
        """Símbolo cuyo intervalo contiene ``target``: (símbolo, inicio, tamaño)."""
        pos = 0
        remaining = target
        step = self._top_step
        tree = self._tree
        while step:
            nxt = pos + step
            if nxt <= self.alphabet_size and tree[nxt] <= remaining:
                pos = nxt
                remaining -= tree[nxt]
            step >>= 1
        return pos, target - remaining, self.counts[pos]

    def update(self, symbol: int) -> None:
        self.counts[symbol] += self.increment
        self.total += self.increment
        i = symbol + 1
        tree = self._tree
        while i <= self.alphabet_size:
            tree[i] += self.increment
            i += i & -i
        if self.total > self.limit:
            self.counts = [(count + 1) // 2 for count in self.counts]
            self.total = sum(self.counts)
            self._rebuild()

    def probabilities(self) -> np.ndarray:
        counts = np.asarray(self.counts, dtype=np.float64)
        return counts / counts.sum()


def baseline_adaptive_model(alphabet_size: int = RESIDUAL_ALPHABET) -> AdaptiveFrequencyModel:
    """Modelo base sin entrenamiento: cuentas en 1 que suben de a 1 por símbolo."""
    return AdaptiveFrequencyModel(alphabet_size, increment=1, limit=CDF_TOTAL - 32)


class RangeEncoder:
    """Encoder de rango de 32 bits con acarreo diferido."""

    def __init__(self):
        self.low = 0
        self.range = MASK32
        self.cache = 0
        self.cache_size = 1
        self._skip_first = True
        self._out = bytearray()
        self.finished = False

    def _emit(self, byte: int) -> None:
        # El primer byte es siempre el cache inicial (0) y no se transmite
        if self._skip_first:
            self._skip_first = False
            return
        self._out.append(byte)

    def _shift_low(self) -> None:
        if self.low < 0xFF000000 or self.low > MASK32:
            carry = self.low >> 32
            temp = self.cache
            while True:
                self._emit((temp + carry) & 0xFF)
                temp = 0xFF
                self.cache_size -= 1
                if self.cache_size == 0:
                    break
            self.cache = (self.low >> 24) & 0xFF
        self.cache_size += 1
        self.low = (self.low << 8) & MASK32

    def encode(self, start: int, size: int, total: int) -> None:
        """Codifica el intervalo [start, start + size) de un total."""
        r = self.range // total
        self.low += start * r
        self.range = r * size
        while self.range < TOP:
            self.range <<= 8
            self._shift_low()

    def encode_bits(self, value: int, nbits: int) -> None:
        """Codifica ``nbits`` (<= 16) bits crudos equiprobables."""
        if nbits:
            self.encode(value, 1, 1 << nbits)

    def encode_symbol(self, cdf, symbol: int) -> None:
        """Codifica un símbolo con una CDF acumulada (secuencia de enteros)."""
        start = int(cdf[symbol])
        self.encode(start, int(cdf[symbol + 1]) - start, int(cdf[-1]))

    def encode_adaptive(self, model: AdaptiveFrequencyModel, symbol: int) -> None:
        start, size, total = model.frequency_range(symbol)
        self.encode(start, size, total)
        model.update(symbol)

    def finish(self) -> bytes:
        if not self.finished:
            for _ in range(5):
                self._shift_low()
            self.finished = True
        return bytes(self._out)


class RangeDecoder:
    """Decodificador simétrico de :class:`RangeEncoder`."""

    def __init__(self, data: bytes, start: int = 0, end: Optional[int] = None):
        self.data = data
        self.pos = start
        self.end = len(data) if end is None else end
        self.range = MASK32
        self.code = 0
        self._r = 1
        for _ in range(4):
            self.code = (self.code << 8) | self._next_byte()

    def _next_byte(self) -> int:
        if self.pos >= self.end:
            raise IntegrityError("Flujo de rango truncado: se leyó más allá del final")
        byte = self.data[self.pos]
        self.pos += 1
        return byte

    def get_freq(self, total: int) -> int:
        self._r = self.range // total
        value = self.code // self._r
        if value >= total:
            raise IntegrityError("Valor decodificado fuera de la tabla de frecuencias")
        return value

    def consume(self, start: int, size: int) -> None:
        self.code -= start * self._r
        self.range = self._r * size
        while self.range < TOP:
            self.code = ((self.code << 8) | self._next_byte()) & MASK32
            self.range <<= 8

    def decode_bits(self, nbits: int) -> int:
        if not nbits:
            return 0
        value = self.get_freq(1 << nbits)
        self.consume(value, 1)
        return value

    def decode_symbol(self, cdf) -> int:
        """Decodifica un símbolo con una CDF acumulada (arreglo numpy o lista)."""
        target = self.get_freq(int(cdf[-1]))
        symbol = int(np.searchsorted(cdf, target, side='right')) - 1
        start = int(cdf[symbol])
        self.consume(start, int(cdf[symbol + 1]) - start)
        return symbol

    def decode_adaptive(self, model: AdaptiveFrequencyModel) -> int:
        target = self.get_freq(model.total)
        symbol, start, size = model.find(target)
        self.consume(start, size)
        model.update(symbol)
        return symbol


class StaticCdfProvider:
    """Proveedor de CDFs fijas: una fila por símbolo o una fila compartida."""

    def __init__(self, cdfs: np.ndarray):
        self.cdfs = np.asarray(cdfs, dtype=np.int64)

    def cdf(self, index: int) -> np.ndarray:
        return self.cdfs if self.cdfs.ndim == 1 else self.cdfs[index]

    def update(self, index: int, symbol: int) -> None:
        pass


class AdaptiveCdfProvider:
    """Proveedor respaldado por un :class:`AdaptiveFrequencyModel`."""

    def __init__(self, model: AdaptiveFrequencyModel):
        self.model = model

    def cdf(self, index: int) -> np.ndarray:
        cdf = np.zeros(self.model.alphabet_size + 1, dtype=np.int64)
        np.cumsum(self.model.counts, out=cdf[1:])
        return cdf

    def update(self, index: int, symbol: int) -> None:
        self.model.update(symbol)


def range_encode(symbols: Iterable[int], cdf_provider) -> bytes:
    """
    Codifica una secuencia de símbolos.

    Args:
        symbols: Símbolos enteros
        cdf_provider: Objeto con ``cdf(i)`` y ``update(i, símbolo)``; debe
            producir la misma CDF para el i-ésimo símbolo al decodificar

    Returns:
        bytes: Flujo autodelimitado dada la cantidad de símbolos
    """
    encoder = RangeEncoder()
    for i, symbol in enumerate(symbols):
        encoder.encode_symbol(cdf_provider.cdf(i), int(symbol))
        cdf_provider.update(i, int(symbol))
    return encoder.finish()


def range_decode(data: bytes, cdf_provider, count: int) -> List[int]:
    """Inversa de :func:`range_encode` para ``count`` símbolos."""
    decoder = RangeDecoder(data)
    symbols = []
    for i in range(count):
        symbol = decoder.decode_symbol(cdf_provider.cdf(i))
        cdf_provider.update(i, symbol)
        symbols.append(symbol)
    return symbols


def ideal_code_length(cdfs: np.ndarray, symbols: Sequence[int]) -> float:
    """Suma de -log2 p(símbolo) con las probabilidades cuantizadas, en bits."""
    cdfs = np.asarray(cdfs, dtype=np.int64)
    symbols = np.asarray(symbols, dtype=np.int64)
    if cdfs.ndim == 1:
        cdfs = np.broadcast_to(cdfs, (symbols.shape[0], cdfs.shape[0]))
    rows = np.arange(symbols.shape[0])
    sizes = cdfs[rows, symbols + 1] - cdfs[rows, symbols]
    return float(-np.log2(sizes / cdfs[rows, -1]).sum())
