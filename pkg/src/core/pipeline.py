"""
Pipeline de codificación y decodificación
=========================================

Orquesta el flujo completo:

1. Transformación de color (modo RGB -> Y-CoCg-R).
2. Construcción del LoD híbrido.
3. Capa base: predicción IDW con contexto inter + intra, residuos por canal
   codificados por corridas.
4. Partición en bloques guiada por la capa base y agrupación en lotes.
5. Capas de inferencia en orden: descriptores, modelo de entropía y
   codificador de rango por lote (Y, luego Co, luego Cg); los residuos de
   crominancia fuera de [-255, 255] van a la sección de desborde.
6. Ensamblado del contenedor.

Sin modelo (modo base) cada capa de inferencia es un solo flujo: modelos
adaptativos de orden 0 por canal que persisten entre capas, o corridas
cuando eso resulta más corto.

Autor: Equipo de Desarrollo
Fecha: 2024
Versión: 1.0
"""

import copy
import hashlib
import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import torch

from core.bitstream import (Bitstream, BitstreamHeader, SectionId, decode_geometry, encode_geometry,
                            pack_inference_section, unpack_inference_section)
from core.cloud_io import AttributeConfig, AttributeMode, PointCloud, canonicalize
from core.color_transform import rgb_to_ycocgr_array, ycocgr_to_rgb_array
from core.config import CodecConfig, CodecSettings
from core.descriptor import DaldConfig, build_descriptor_inputs, stack_inputs
from core.entropy_model import (RESIDUAL_OFFSET, EntropyModel, TrainingData, logits_to_cdfs,
                                model_hash, model_to_bytes)
from core.errors import ConfigError, InputError, IntegrityError, ModelMismatchError
from core.lod_builder import LodConfig, LodStructure, build_lod
from core.partition import BlockAssignment, PartitionConfig, partition_cloud
from core.prediction import idw_predict_batch, reconstruct
from core.range_coder import RangeDecoder, RangeEncoder, baseline_adaptive_model
from core.run_length import (OVERFLOW_LIMIT, TokenModels, decode_run_length, encode_overflow,
                             encode_run_length, restore_overflow)

logger = logging.getLogger(__name__)

FORWARD_GROUP = 8
LAYER_ADAPTIVE = 0
LAYER_RUN_LENGTH = 1


# --- Utilidades de canales ------------------------------------------------

def channel_ranges(mode: AttributeMode) -> List[Tuple[int, int]]:
    """Rango de valores de cada canal codificado."""
    if mode == AttributeMode.RGB:
        return [(0, 255), (-255, 255), (-255, 255)]
    return [(0, 255)]


def _literal_bits(low: int, high: int) -> int:
    return int(high - low).bit_length()


def cloud_values(cloud: PointCloud) -> np.ndarray:
    """Atributos codificados (n, C): Y-CoCg-R en modo RGB."""
    matrix = cloud.attribute_matrix()
    if cloud.mode == AttributeMode.RGB:
        return rgb_to_ycocgr_array(matrix)
    return matrix.astype(np.int64)


def values_to_cloud(positions: np.ndarray, values: np.ndarray, header: BitstreamHeader) -> PointCloud:
    if header.mode == AttributeMode.RGB:
        rgb = ycocgr_to_rgb_array(values)
        config = AttributeConfig.rgb()
        channels = {name: rgb[:, i] for i, name in enumerate(config.channel_names)}
    else:
        config = AttributeConfig.single(header.channel_name)
        channels = {header.channel_name: values[:, 0]}
    return PointCloud(positions, channels, header.bit_depth_geometry, config)


def _predict(values: np.ndarray, lod: LodStructure, points: np.ndarray) -> np.ndarray:
    neighbors = lod.neighbors[points]
    distances = lod.distances[points]
    return np.stack([idw_predict_batch(values[neighbors, c], distances)
                     for c in range(values.shape[1])], axis=1)


def _structure_digest(lod: LodStructure, assignment: BlockAssignment) -> bytes:
    return hashlib.sha256(lod.digest() + assignment.digest()).digest()[:8]


def _clamp_symbols(residuals: np.ndarray) -> np.ndarray:
    return np.clip(residuals, -OVERFLOW_LIMIT, OVERFLOW_LIMIT)


# --- Capa base --------------------------------------------------------------

def _encode_base(values: np.ndarray, lod: LodStructure, ranges: List[Tuple[int, int]]) -> bytes:
    order = lod.base_order
    encoder = RangeEncoder()
    first = values[order[0]]
    for c, (low, high) in enumerate(ranges):
        encoder.encode_bits(int(first[c]) - low, _literal_bits(low, high))
    rest = order[1:]
    predicted = _predict(values, lod, rest) if rest.size else np.zeros((0, len(ranges)), dtype=np.int64)
    for c in range(len(ranges)):
        encode_run_length(encoder, values[rest, c] - predicted[:, c], TokenModels())
    return encoder.finish()


def _dependency_levels(lod: LodStructure, order: np.ndarray) -> np.ndarray:
    """Nivel de cada punto base: 1 + máximo nivel de sus vecinos (causales)."""
    position = np.full(lod.num_points, -1, dtype=np.int64)
    position[order] = np.arange(order.shape[0])
    neighbor_pos = position[lod.neighbors[order]].tolist()
    levels = [0] * order.shape[0]
    for i in range(1, order.shape[0]):
        levels[i] = 1 + max(levels[p] for p in neighbor_pos[i])
    return np.asarray(levels, dtype=np.int64)


def _decode_base(data: bytes, values: np.ndarray, available: np.ndarray, lod: LodStructure,
                 ranges: List[Tuple[int, int]]) -> None:
    order = lod.base_order
    decoder = RangeDecoder(data)
    first = [decoder.decode_bits(_literal_bits(low, high)) + low for low, high in ranges]
    values[order[0]] = first
    available[order[0]] = True
    rest = order[1:]
    residuals = []
    for _ in ranges:
        decoded = decode_run_length(decoder, rest.shape[0], TokenModels())
        if decoded.shape[0] != rest.shape[0]:
            raise IntegrityError(f"La capa base tiene {decoded.shape[0]} residuos y se esperaban {rest.shape[0]}")
        residuals.append(decoded)
    if not rest.size:
        return
    residuals = np.stack(residuals, axis=1)
    levels = _dependency_levels(lod, order)[1:]
    for level in np.unique(levels):
        rows = np.flatnonzero(levels == level)
        points = rest[rows]
        if not np.all(available[lod.neighbors[points]]):
            raise IntegrityError("Orden de la capa base inconsistente")
        predicted = _predict(values, lod, points)
        for c, (low, high) in enumerate(ranges):
            values[points, c] = reconstruct(predicted[:, c], residuals[rows, c], low, high)
        available[points] = True


# --- Capas de inferencia: modo base ---------------------------------------

def _encode_layer_baseline(symbols: np.ndarray, models: list) -> Tuple[bytes, list]:
    """Un flujo por capa; elige el menor entre modelos adaptativos y corridas."""
    trial_models = copy.deepcopy(models)
    adaptive = RangeEncoder()
    adaptive.encode_bits(LAYER_ADAPTIVE, 1)
    for row in (symbols + RESIDUAL_OFFSET).tolist():
        for c, symbol in enumerate(row):
            adaptive.encode_adaptive(trial_models[c], symbol)
    adaptive_bytes = adaptive.finish()

    runs = RangeEncoder()
    runs.encode_bits(LAYER_RUN_LENGTH, 1)
    for c in range(symbols.shape[1]):
        encode_run_length(runs, symbols[:, c], TokenModels())
    run_bytes = runs.finish()

    if len(run_bytes) < len(adaptive_bytes):
        return run_bytes, models
    return adaptive_bytes, trial_models


def _decode_layer_baseline(data: bytes, count: int, channels: int, models: list) -> np.ndarray:
    decoder = RangeDecoder(data)
    if decoder.decode_bits(1) == LAYER_RUN_LENGTH:
        columns = []
        for _ in range(channels):
            decoded = decode_run_length(decoder, count, TokenModels())
            if decoded.shape[0] != count:
                raise IntegrityError("Longitud de corridas distinta del tamaño de la capa")
            columns.append(decoded)
        return np.stack(columns, axis=1)
    out = np.empty((count, channels), dtype=np.int64)
    for i in range(count):
        for c in range(channels):
            out[i, c] = decoder.decode_adaptive(models[c]) - RESIDUAL_OFFSET
    return out


# --- Capas de inferencia: modelo aprendido -------------------------------

def _batch_crc(cdfs: List[np.ndarray], row: int, real: int) -> int:
    crc = 0
    for channel_cdfs in cdfs:
        crc = zlib.crc32(np.ascontiguousarray(channel_cdfs[row, :real], dtype='<i8').tobytes(), crc)
    return crc & 0xFFFFFFFF


def _group_inputs(positions, values, predicted_full, group, lod, dald, mode):
    return stack_inputs([
        build_descriptor_inputs(positions, values, predicted_full[batch.points], batch.points,
                                batch.real_count, lod, dald, mode)
        for batch in group
    ])


def _encode_group(model: EntropyModel, group, positions, values, predicted_full, symbols_full,
                  lod, dald, mode) -> Tuple[List[bytes], List[int]]:
    inputs = _group_inputs(positions, values, predicted_full, group, lod, dald, mode)
    points = np.stack([batch.points for batch in group])
    symbols = symbols_full[points]                               # (B, N, C)
    residuals = torch.as_tensor(symbols)
    with torch.no_grad():
        contexts = model.context_forward(model.descriptors(inputs))
        cdfs = []
        for c in range(symbols.shape[2]):
            logits = model.head_logits(c, contexts, [residuals[..., j] for j in range(c)])
            cdfs.append(logits_to_cdfs(logits).reshape(len(group), points.shape[1], -1))
    streams, crcs = [], []
    for row, batch in enumerate(group):
        encoder = RangeEncoder()
        for c in range(symbols.shape[2]):
            channel_cdfs = cdfs[c][row]
            for i, symbol in enumerate((symbols[row, :batch.real_count, c] + RESIDUAL_OFFSET).tolist()):
                encoder.encode_symbol(channel_cdfs[i], symbol)
        streams.append(encoder.finish())
        crcs.append(_batch_crc(cdfs, row, batch.real_count))
    return streams, crcs


def _decode_group(model: EntropyModel, group, streams, crcs, positions, values, predicted_full,
                  lod, dald, mode, channels) -> np.ndarray:
    inputs = _group_inputs(positions, values, predicted_full, group, lod, dald, mode)
    batch_size = group[0].points.shape[0]
    symbols = np.zeros((len(group), batch_size, channels), dtype=np.int64)
    decoders = [RangeDecoder(stream) for stream in streams]
    cdfs = []
    with torch.no_grad():
        contexts = model.context_forward(model.descriptors(inputs))
        for c in range(channels):
            conditions = [torch.as_tensor(symbols[..., j]) for j in range(c)]
            logits = model.head_logits(c, contexts, conditions)
            channel_cdfs = logits_to_cdfs(logits).reshape(len(group), batch_size, -1)
            cdfs.append(channel_cdfs)
            for row, batch in enumerate(group):
                real = batch.real_count
                for i in range(real):
                    symbols[row, i, c] = decoders[row].decode_symbol(channel_cdfs[row, i]) - RESIDUAL_OFFSET
                symbols[row, real:, c] = symbols[row, real - 1, c]
    if crcs is not None:
        for row, batch in enumerate(group):
            if _batch_crc(cdfs, row, batch.real_count) != crcs[row]:
                raise IntegrityError("CRC de CDF distinto: el modelo no reproduce las distribuciones del encoder")
    return symbols


def _groups(batches: list) -> List[list]:
    return [batches[i:i + FORWARD_GROUP] for i in range(0, len(batches), FORWARD_GROUP)]


# --- API ---------------------------------------------------------------------

def _validate_model(model: Optional[EntropyModel], config: CodecConfig, mode: AttributeMode) -> DaldConfig:
    if model is None:
        return config.dald
    if model.mode != mode:
        raise ConfigError(f"El modelo es para {model.mode.value} y la nube es {mode.value}")
    if model.config.dald.k != config.lod.k:
        raise ConfigError(f"El modelo usa k={model.config.dald.k} y el LoD k={config.lod.k}")
    return model.config.dald


def _header_for(cloud: PointCloud, config: CodecConfig, dald: DaldConfig, schedule, num_clusters: int,
                embed_geometry: bool, learned: bool, debug: bool, hash_bytes: bytes,
                digest: bytes) -> BitstreamHeader:
    partition = config.partition
    return BitstreamHeader(
        point_count=cloud.num_points,
        bit_depth_geometry=cloud.bit_depth_geometry,
        mode=cloud.mode,
        channel_name=cloud.attribute_config.channel_names[0] if cloud.mode == AttributeMode.SINGLE else '',
        T=config.lod.T, L=config.lod.L, k=config.lod.k,
        schedule=tuple(schedule),
        n=dald.n, thresholds=dald.thresholds,
        seed=partition.seed, num_clusters=num_clusters, batch_size=partition.batch_size,
        batches_per_block=partition.batches_per_block,
        smoothing_neighbors=partition.smoothing_neighbors, alpha=partition.alpha,
        kmeans_max_iter=partition.kmeans_max_iter,
        embed_geometry=embed_geometry, learned=learned, debug=debug,
        model_hash=hash_bytes, structure_digest=digest,
    )


def encode(cloud: PointCloud, config: CodecConfig, model: Optional[EntropyModel] = None,
           embed_geometry: bool = False, debug: bool = False, threads: Optional[int] = None) -> Bitstream:
    """
    Codifica los atributos de una nube canónica.

    Args:
        cloud: Nube canónica (sin duplicados, orden de Morton)
        config: Configuración del códec
        model: Modelo de entropía; None selecciona el modo base
        embed_geometry: Incluir la geometría en el flujo
        debug: Guardar resúmenes de estructura y CRCs de CDF
        threads: Hilos para el trabajo por lotes

    Returns:
        Bitstream: Flujo codificado
    """
    is_valid, errors = cloud.validate()
    if not is_valid:
        raise InputError("; ".join(errors))
    is_valid, errors = config.validate()
    if not is_valid:
        raise ConfigError("; ".join(errors))
    dald = _validate_model(model, config, cloud.mode)
    hash_bytes = model_hash(model_to_bytes(model)) if model is not None else bytes(8)
    threads = threads or CodecSettings.get_threads()
    ranges = channel_ranges(cloud.mode)
    n = cloud.num_points

    if n == 0:
        header = _header_for(cloud, config, dald, [0] * config.lod.T, 1, embed_geometry,
                             model is not None, debug, hash_bytes, bytes(8))
        return Bitstream(header, {})

    values = cloud_values(cloud)
    positions = cloud.positions
    lod = build_lod(positions, config.lod)
    base_section = _encode_base(values, lod, ranges)

    assignment = partition_cloud(positions, lod.base_order, values[lod.base_order],
                                 lod.inference_layers, config.partition)

    predicted_full = np.zeros_like(values)
    symbols_full = np.zeros_like(values)
    side_streams = [[] for _ in ranges]
    for layer in lod.inference_layers:
        if not layer.size:
            continue
        predicted = _predict(values, lod, layer)
        predicted_full[layer] = predicted
        residuals = values[layer] - predicted
        for c in range(len(ranges)):
            clamped, side = encode_overflow(residuals[:, c])
            symbols_full[layer, c] = clamped
            side_streams[c].append(side)

    layer_streams, layer_crcs = [], []
    if model is None:
        models = [baseline_adaptive_model() for _ in ranges]
        for layer in lod.inference_layers:
            if not layer.size:
                layer_streams.append([])
                continue
            stream, models = _encode_layer_baseline(symbols_full[layer], models)
            layer_streams.append([stream])
    else:
        model.eval()
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for batches in assignment.layer_batches:
                groups = _groups(batches)
                results = list(pool.map(
                    lambda group: _encode_group(model, group, positions, values, predicted_full,
                                                symbols_full, lod, dald, cloud.mode),
                    groups))
                layer_streams.append([s for streams, _ in results for s in streams])
                layer_crcs.append([crc for _, crcs in results for crc in crcs])

    sections = {}
    if embed_geometry:
        sections[SectionId.GEOMETRY] = encode_geometry(positions)
    sections[SectionId.BASE] = base_section
    sections[SectionId.INFERENCE] = pack_inference_section(
        layer_streams, layer_crcs if (debug and model is not None) else None)
    if cloud.mode == AttributeMode.RGB:
        encoder = RangeEncoder()
        for c in (1, 2):
            stream = np.concatenate(side_streams[c]) if side_streams[c] else np.zeros(0, dtype=np.int64)
            encode_run_length(encoder, stream, TokenModels())
        sections[SectionId.OVERFLOW] = encoder.finish()

    digest = _structure_digest(lod, assignment) if debug else bytes(8)
    header = _header_for(cloud, config, dald, lod.schedule, assignment.num_clusters, embed_geometry,
                         model is not None, debug, hash_bytes, digest)
    bitstream = Bitstream(header, sections)
    logger.info(f"✅ Codificados {n} puntos en {len(bitstream.to_bytes())} bytes")
    return bitstream


def _geometry_positions(bitstream: Bitstream, geometry) -> np.ndarray:
    header = bitstream.header
    if header.point_count == 0 and (header.embed_geometry or geometry is None):
        return np.zeros((0, 3), dtype=np.int64)
    if header.embed_geometry:
        if SectionId.GEOMETRY not in bitstream.sections:
            raise IntegrityError("El encabezado declara geometría embebida y falta la sección")
        return decode_geometry(bitstream.sections[SectionId.GEOMETRY], header.point_count)
    if geometry is None:
        raise InputError("El flujo no incluye geometría: se requiere el archivo de geometría")
    if isinstance(geometry, PointCloud):
        positions = canonicalize(geometry).positions
    else:
        positions = np.asarray(geometry, dtype=np.int64).reshape(-1, 3)
    if positions.shape[0] != header.point_count:
        raise IntegrityError(f"La geometría tiene {positions.shape[0]} puntos y el flujo {header.point_count}")
    if positions.size and positions.max() >= (1 << header.bit_depth_geometry):
        raise IntegrityError("La geometría excede la profundidad declarada en el encabezado")
    return positions


def decode(data: Union[bytes, Bitstream], geometry=None, model: Optional[EntropyModel] = None,
           threads: Optional[int] = None) -> PointCloud:
    """
    Decodifica un flujo.

    Args:
        data: Flujo (bytes o Bitstream)
        geometry: Nube o posiciones (n, 3) si la geometría no va embebida
        model: Modelo de entropía si el flujo lo usa
        threads: Hilos para el trabajo por lotes

    Returns:
        PointCloud: Nube con atributos idénticos a los del encoder

    Raises:
        IntegrityError: Checksum, truncamiento o geometría inconsistente
        ModelMismatchError: Modelo ausente o distinto del usado al codificar
    """
    bitstream = data if isinstance(data, Bitstream) else Bitstream.from_bytes(data)
    header = bitstream.header
    if header.learned:
        if model is None:
            raise ModelMismatchError("El flujo se codificó con un modelo aprendido: se requiere --model")
        if model_hash(model_to_bytes(model)) != header.model_hash:
            raise ModelMismatchError(f"El hash del modelo no coincide con el del flujo ({header.model_hash.hex()})")
        if model.mode != header.mode:
            raise ModelMismatchError("El modelo no corresponde al modo de atributos del flujo")
    threads = threads or CodecSettings.get_threads()
    ranges = channel_ranges(header.mode)
    channels = len(ranges)

    positions = _geometry_positions(bitstream, geometry)
    n = header.point_count
    if n == 0:
        return values_to_cloud(positions, np.zeros((0, channels), dtype=np.int64), header)

    lod_config = LodConfig(T=header.T, L=header.L, k=header.k, base_distance_schedule=header.schedule)
    dald = model.config.dald if header.learned else DaldConfig(
        n=header.n, thresholds_x=header.thresholds[0], thresholds_y=header.thresholds[1],
        thresholds_z=header.thresholds[2], k=header.k)
    partition_config = PartitionConfig(
        batch_size=header.batch_size, batches_per_block=header.batches_per_block,
        smoothing_neighbors=header.smoothing_neighbors, alpha=header.alpha,
        kmeans_max_iter=header.kmeans_max_iter, seed=header.seed)

    for section in (SectionId.BASE, SectionId.INFERENCE):
        if section not in bitstream.sections:
            raise IntegrityError(f"Falta la sección {section.name}")

    lod = build_lod(positions, lod_config, schedule=header.schedule)
    values = np.zeros((n, channels), dtype=np.int64)
    available = np.zeros(n, dtype=bool)
    _decode_base(bitstream.sections[SectionId.BASE], values, available, lod, ranges)

    assignment = partition_cloud(positions, lod.base_order, values[lod.base_order],
                                 lod.inference_layers, partition_config)
    if assignment.num_clusters != header.num_clusters:
        raise IntegrityError("La partición reproducida no coincide con el encabezado")
    if header.debug and _structure_digest(lod, assignment) != header.structure_digest:
        raise IntegrityError("El LoD o la partición reproducidos difieren de los del encoder")

    inference_count = int(sum(layer.shape[0] for layer in lod.inference_layers))
    side_full = np.zeros((n, channels), dtype=np.int64)
    if header.mode == AttributeMode.RGB:
        if SectionId.OVERFLOW not in bitstream.sections:
            raise IntegrityError("Falta la sección de desborde")
        decoder = RangeDecoder(bitstream.sections[SectionId.OVERFLOW])
        layer_points = (np.concatenate(lod.inference_layers) if lod.inference_layers
                        else np.zeros(0, dtype=np.int64))
        for c in (1, 2):
            side = decode_run_length(decoder, inference_count, TokenModels())
            if side.shape[0] != inference_count:
                raise IntegrityError("El flujo de desborde no cubre todos los puntos de inferencia")
            side_full[layer_points, c] = side

    streams, crcs, _ = unpack_inference_section(bitstream.sections[SectionId.INFERENCE],
                                                debug=header.debug and header.learned)
    if len(streams) != len(lod.inference_layers):
        raise IntegrityError("Cantidad de capas de inferencia distinta de la del encabezado")

    models = [baseline_adaptive_model() for _ in ranges]
    predicted_full = np.zeros_like(values)
    if header.learned:
        model.eval()
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for index, layer in enumerate(lod.inference_layers):
            if not layer.size:
                continue
            predicted_full[layer] = _predict(values, lod, layer)
            if header.learned:
                batches = assignment.layer_batches[index]
                if len(streams[index]) != len(batches):
                    raise IntegrityError(f"La capa {index} tiene {len(streams[index])} flujos para {len(batches)} lotes")
                groups = _groups(batches)
                starts = range(0, len(batches), FORWARD_GROUP)
                layer_crcs = crcs[index] if crcs else None
                results = list(pool.map(
                    lambda args: _decode_group(
                        model, args[0], streams[index][args[1]:args[1] + FORWARD_GROUP],
                        layer_crcs[args[1]:args[1] + FORWARD_GROUP] if layer_crcs else None,
                        positions, values, predicted_full, lod, dald, header.mode, channels),
                    zip(groups, starts)))
                points = np.concatenate([b.real_points for group in groups for b in group])
                symbols = np.concatenate([s[row, :b.real_count] for group, s in zip(groups, results)
                                          for row, b in enumerate(group)])
            else:
                if len(streams[index]) != 1:
                    raise IntegrityError(f"La capa {index} debe tener un único flujo")
                points = layer
                symbols = _decode_layer_baseline(streams[index][0], layer.shape[0], channels, models)
            for c, (low, high) in enumerate(ranges):
                residuals = restore_overflow(symbols[:, c], side_full[points, c])
                values[points, c] = reconstruct(predicted_full[points, c], residuals, low, high)
            available[points] = True
    if not available.all():
        raise IntegrityError("Quedaron puntos sin decodificar")

    cloud = values_to_cloud(positions, values, header)
    logger.info(f"✅ Decodificados {n} puntos")
    return cloud


# --- Informe de tasa ---------------------------------------------------------

@dataclass
class RateReport:
    """Contabilidad de bits por sección; la geometría no cuenta para bpp."""

    point_count: int
    header_bits: int
    base_bits: int
    layer_bits: List[int] = field(default_factory=list)
    overflow_bits: int = 0
    geometry_bits: int = 0

    @property
    def inference_bits(self) -> int:
        return int(sum(self.layer_bits))

    @property
    def total_bits(self) -> int:
        return self.header_bits + self.base_bits + self.inference_bits + self.overflow_bits

    @property
    def bpp(self) -> float:
        return self.total_bits / self.point_count if self.point_count else 0.0

    def percentages(self) -> Dict[str, float]:
        total = self.total_bits or 1
        return {
            'header': 100.0 * self.header_bits / total,
            'base': 100.0 * self.base_bits / total,
            'inference': 100.0 * self.inference_bits / total,
            'overflow': 100.0 * self.overflow_bits / total,
        }

    def to_dict(self) -> Dict:
        return {
            'points': self.point_count,
            'header_bits': self.header_bits,
            'base_bits': self.base_bits,
            'layer_bits': list(self.layer_bits),
            'inference_bits': self.inference_bits,
            'overflow_bits': self.overflow_bits,
            'geometry_bits': self.geometry_bits,
            'total_bits': self.total_bits,
            'bpp': self.bpp,
            'percentages': self.percentages(),
        }


def rate_report(data: Union[bytes, Bitstream]) -> RateReport:
    """
    Informe de tasa sin decodificar; la tabla de longitudes y los CRCs de
    depuración de la sección de inferencia se cuentan como encabezado.
    """
    bitstream = data if isinstance(data, Bitstream) else Bitstream.from_bytes(data)
    header = bitstream.header
    sections = bitstream.sections
    header_bits = 8 * len(bitstream.header_bytes())
    layer_bits = []
    if SectionId.INFERENCE in sections:
        payload = sections[SectionId.INFERENCE]
        streams, _, _ = unpack_inference_section(payload, debug=header.debug and header.learned)
        layer_bits = [8 * sum(len(s) for s in layer) for layer in streams]
        header_bits += 8 * len(payload) - sum(layer_bits)
    return RateReport(
        point_count=header.point_count,
        header_bits=header_bits,
        base_bits=8 * len(sections.get(SectionId.BASE, b'')),
        layer_bits=layer_bits,
        overflow_bits=8 * len(sections.get(SectionId.OVERFLOW, b'')),
        geometry_bits=8 * len(sections.get(SectionId.GEOMETRY, b'')),
    )


# --- Datos de entrenamiento -------------------------------------------------

def prepare_training_batches(cloud: PointCloud, config: CodecConfig,
                             dald: Optional[DaldConfig] = None) -> Optional[TrainingData]:
    """
    Análisis del lado del encoder para entrenar: lotes de las capas de
    inferencia con sus residuos recortados como objetivo.

    Returns:
        Optional[TrainingData]: None si la nube no tiene capa de inferencia
    """
    dald = dald or config.dald
    if cloud.num_points == 0:
        return None
    values = cloud_values(cloud)
    positions = cloud.positions
    lod = build_lod(positions, config.lod)
    assignment = partition_cloud(positions, lod.base_order, values[lod.base_order],
                                 lod.inference_layers, config.partition)
    predicted_full = np.zeros_like(values)
    symbols_full = np.zeros_like(values)
    for layer in lod.inference_layers:
        if layer.size:
            predicted_full[layer] = _predict(values, lod, layer)
            symbols_full[layer] = _clamp_symbols(values[layer] - predicted_full[layer])

    items, symbols = [], []
    for batches in assignment.layer_batches:
        for batch in batches:
            items.append(build_descriptor_inputs(positions, values, predicted_full[batch.points],
                                                 batch.points, batch.real_count, lod, dald, cloud.mode))
            symbols.append(symbols_full[batch.points] + RESIDUAL_OFFSET)
    if not items:
        return None
    return TrainingData(stack_inputs(items), np.stack(symbols))


def merge_training_data(parts: List[TrainingData]) -> Optional[TrainingData]:
    parts = [part for part in parts if part is not None]
    if not parts:
        return None
    return TrainingData(stack_inputs([p.inputs for p in parts]),
                        np.concatenate([p.symbols for p in parts], axis=0))
