"""
Contenedor del flujo de bits
============================

Encabezado con campos tipados little-endian, tabla de secciones
(id, longitud, CRC-32) y CRC del encabezado, seguido de las secciones en
el orden de la tabla. La disposición exacta está documentada en
BITSTREAM.md.

Autor: Equipo de Desarrollo
Fecha: 2024
Versión: 1.0
"""

import logging
import struct
import zlib
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, List, Tuple

import numpy as np

from core.cloud_io import MORTON_COORD_BITS, AttributeMode, morton_codes, morton_decode
from core.errors import InputError, IntegrityError
from core.range_coder import RangeDecoder, RangeEncoder
from core.run_length import decode_run_length, encode_run_length

logger = logging.getLogger(__name__)

MAGIC = b'DPCC'
VERSION = 1
GEOMETRY_MAX_BITS = MORTON_COORD_BITS

FLAG_EMBED_GEOMETRY = 0x01
FLAG_LEARNED = 0x02
FLAG_DEBUG = 0x04

_MODE_CODES = {AttributeMode.SINGLE: 0, AttributeMode.RGB: 1}
_MODES = {code: mode for mode, code in _MODE_CODES.items()}


class SectionId(IntEnum):
    GEOMETRY = 1
    BASE = 2
    INFERENCE = 3
    OVERFLOW = 4


@dataclass
class BitstreamHeader:
    """Campos necesarios para que el decodificador repita LoD, partición y lotes."""

    point_count: int
    bit_depth_geometry: int
    mode: AttributeMode
    channel_name: str
    T: int
    L: int
    k: int
    schedule: Tuple[int, ...]
    n: int
    thresholds: Tuple[Tuple[float, ...], ...]
    seed: int
    num_clusters: int
    batch_size: int
    batches_per_block: int
    smoothing_neighbors: int
    alpha: float
    kmeans_max_iter: int
    embed_geometry: bool = False
    learned: bool = False
    debug: bool = False
    model_hash: bytes = bytes(8)
    structure_digest: bytes = bytes(8)
    version: int = VERSION

    @property
    def flags(self) -> int:
        return ((FLAG_EMBED_GEOMETRY if self.embed_geometry else 0)
                | (FLAG_LEARNED if self.learned else 0)
                | (FLAG_DEBUG if self.debug else 0))

    def pack_fields(self) -> bytes:
        name = self.channel_name.encode('utf-8')
        out = bytearray()
        out += MAGIC
        out += struct.pack('<HIBBB', self.version, self.point_count, self.bit_depth_geometry,
                           _MODE_CODES[self.mode], len(name))
        out += name
        out += struct.pack('<BHHH', self.flags, self.T, self.L, self.k)
        out += struct.pack(f'<{self.T}I', *self.schedule)
        out += struct.pack('<B', self.n)
        for values in self.thresholds:
            out += struct.pack(f'<{self.n + 1}d', *values)
        out += struct.pack('<QIIHHdH', self.seed, self.num_clusters, self.batch_size,
                           self.batches_per_block, self.smoothing_neighbors, self.alpha,
                           self.kmeans_max_iter)
        out += self.model_hash + self.structure_digest
        return bytes(out)

    @classmethod
    def unpack_fields(cls, data: bytes, offset: int = 0) -> Tuple['BitstreamHeader', int]:
        if data[offset:offset + 4] != MAGIC:
            raise IntegrityError("Flujo sin la firma DPCC")
        offset += 4
        version, count, depth, mode_code, name_len = struct.unpack_from('<HIBBB', data, offset)
        offset += struct.calcsize('<HIBBB')
        if version != VERSION:
            raise IntegrityError(f"Versión de flujo no soportada: {version}")
        if mode_code not in _MODES:
            raise IntegrityError(f"Modo de atributos desconocido: {mode_code}")
        name = data[offset:offset + name_len].decode('utf-8')
        offset += name_len
        flags, T, L, k = struct.unpack_from('<BHHH', data, offset)
        offset += struct.calcsize('<BHHH')
        schedule = struct.unpack_from(f'<{T}I', data, offset)
        offset += 4 * T
        (n,) = struct.unpack_from('<B', data, offset)
        offset += 1
        thresholds = []
        for _ in range(3):
            thresholds.append(tuple(struct.unpack_from(f'<{n + 1}d', data, offset)))
            offset += 8 * (n + 1)
        seed, clusters, batch, per_block, smoothing, alpha, iters = struct.unpack_from('<QIIHHdH', data, offset)
        offset += struct.calcsize('<QIIHHdH')
        model_hash = bytes(data[offset:offset + 8])
        digest = bytes(data[offset + 8:offset + 16])
        offset += 16
        header = cls(
            point_count=count, bit_depth_geometry=depth, mode=_MODES[mode_code], channel_name=name,
            T=T, L=L, k=k, schedule=tuple(schedule), n=n, thresholds=tuple(thresholds),
            seed=seed, num_clusters=clusters, batch_size=batch, batches_per_block=per_block,
            smoothing_neighbors=smoothing, alpha=alpha, kmeans_max_iter=iters,
            embed_geometry=bool(flags & FLAG_EMBED_GEOMETRY), learned=bool(flags & FLAG_LEARNED),
            debug=bool(flags & FLAG_DEBUG), model_hash=model_hash, structure_digest=digest,
            version=version,
        )
        return header, offset


@dataclass
class Bitstream:
    """Encabezado más secciones codificadas."""

    header: BitstreamHeader
    sections: Dict[SectionId, bytes] = field(default_factory=dict)

    def header_bytes(self) -> bytes:
        out = bytearray(self.header.pack_fields())
        out += struct.pack('<B', len(self.sections))
        for section_id, payload in self.sections.items():
            out += struct.pack('<BII', int(section_id), len(payload), zlib.crc32(payload) & 0xFFFFFFFF)
        out += struct.pack('<I', zlib.crc32(bytes(out)) & 0xFFFFFFFF)
        return bytes(out)

    def to_bytes(self) -> bytes:
        return self.header_bytes() + b''.join(self.sections.values())

    @classmethod
    def from_bytes(cls, data: bytes) -> 'Bitstream':
        """
        Parsea y verifica un flujo.

        Raises:
            IntegrityError: Firma, CRC o longitudes inválidas
        """
        data = bytes(data)
        try:
            header, offset = BitstreamHeader.unpack_fields(data)
            (count,) = struct.unpack_from('<B', data, offset)
            offset += 1
            table = []
            for _ in range(count):
                table.append(struct.unpack_from('<BII', data, offset))
                offset += struct.calcsize('<BII')
            (header_crc,) = struct.unpack_from('<I', data, offset)
        except struct.error as e:
            raise IntegrityError(f"Encabezado truncado: {e}") from e
        except UnicodeDecodeError as e:
            raise IntegrityError(f"Nombre de canal corrupto: {e}") from e
        if zlib.crc32(data[:offset]) & 0xFFFFFFFF != header_crc:
            raise IntegrityError("CRC del encabezado inválido")
        offset += 4

        sections = {}
        for section_code, length, crc in table:
            try:
                section_id = SectionId(section_code)
            except ValueError as e:
                raise IntegrityError(f"Sección desconocida: {section_code}") from e
            payload = data[offset:offset + length]
            if len(payload) != length:
                raise IntegrityError(f"Sección {section_id.name} truncada")
            if zlib.crc32(payload) & 0xFFFFFFFF != crc:
                raise IntegrityError(f"CRC de la sección {section_id.name} inválido")
            sections[section_id] = payload
            offset += length
        if offset != len(data):
            raise IntegrityError(f"{len(data) - offset} bytes sobrantes tras las secciones")
        return cls(header, sections)


def encode_varint(value: int) -> bytes:
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def decode_varint(data: bytes, offset: int) -> Tuple[int, int]:
    value = 0
    shift = 0
    while True:
        if offset >= len(data):
            raise IntegrityError("Varint truncado")
        byte = data[offset]
        offset += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, offset
        shift += 7
        if shift > 63:
            raise IntegrityError("Varint demasiado largo")


def pack_inference_section(layer_streams: List[List[bytes]], batch_crcs: List[List[int]] = None) -> bytes:
    """
    Tabla de longitudes (varints) seguida de los flujos y, en modo de
    depuración, un CRC u32 por lote.
    """
    table = bytearray(encode_varint(len(layer_streams)))
    for streams in layer_streams:
        table += encode_varint(len(streams))
        for stream in streams:
            table += encode_varint(len(stream))
    body = b''.join(stream for streams in layer_streams for stream in streams)
    crcs = b''
    if batch_crcs is not None:
        crcs = b''.join(struct.pack('<I', crc) for crcs_layer in batch_crcs for crc in crcs_layer)
    return bytes(table) + body + crcs


def unpack_inference_section(data: bytes, debug: bool = False) -> Tuple[List[List[bytes]], List[List[int]], int]:
    """
    Inversa de :func:`pack_inference_section`.

    Returns:
        Tuple: (flujos por capa, CRCs por capa, bytes de la tabla)
    """
    layers, offset = decode_varint(data, 0)
    lengths = []
    for _ in range(layers):
        count, offset = decode_varint(data, offset)
        layer = []
        for _ in range(count):
            length, offset = decode_varint(data, offset)
            layer.append(length)
        lengths.append(layer)
    table_size = offset
    streams = []
    for layer in lengths:
        current = []
        for length in layer:
            if offset + length > len(data):
                raise IntegrityError("Flujo de inferencia truncado")
            current.append(data[offset:offset + length])
            offset += length
        streams.append(current)
    crcs = []
    if debug:
        for layer in lengths:
            current = []
            for _ in layer:
                if offset + 4 > len(data):
                    raise IntegrityError("CRCs de depuración truncados")
                current.append(struct.unpack_from('<I', data, offset)[0])
                offset += 4
            crcs.append(current)
    if offset != len(data):
        raise IntegrityError("Sección de inferencia con bytes sobrantes")
    return streams, crcs, table_size


def encode_geometry(positions: np.ndarray) -> bytes:
    """Geometría como deltas de Morton (delta - 1) codificados por corridas."""
    positions = np.asarray(positions, dtype=np.int64).reshape(-1, 3)
    if positions.size and positions.max() >= (1 << GEOMETRY_MAX_BITS):
        raise InputError(f"La geometría embebida admite hasta {GEOMETRY_MAX_BITS} bits por coordenada")
    codes = morton_codes(positions).astype(np.int64)
    deltas = np.diff(codes) - 1 if codes.shape[0] else codes
    values = np.concatenate([codes[:1], deltas])
    if np.any(values < 0):
        raise InputError("La geometría embebida requiere posiciones únicas en orden de Morton")
    encoder = RangeEncoder()
    encode_run_length(encoder, values, signed=False)
    return encoder.finish()


def decode_geometry(data: bytes, count: int) -> np.ndarray:
    decoder = RangeDecoder(data)
    values = decode_run_length(decoder, count, signed=False)
    if values.shape[0] != count:
        raise IntegrityError(f"La geometría embebida tiene {values.shape[0]} puntos y se esperaban {count}")
    if count == 0:
        return np.zeros((0, 3), dtype=np.int64)
    if np.any(values < 0):
        raise IntegrityError("Deltas de Morton negativos en la geometría embebida")
    deltas = values.copy()
    deltas[1:] += 1
    return morton_decode(np.cumsum(deltas).astype(np.uint64))
