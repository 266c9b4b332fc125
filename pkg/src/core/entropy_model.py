"""
Modelo de entropía aprendido
============================

Encoder de atención sin máscara (3 capas, pre-normalización, GELU) sobre
los descriptores de un lote, seguido de cabezas MLP de 511 salidas por
canal. En modo color la cabeza U recibe el residuo Y y la cabeza V los
residuos Y y U, como escalares divididos por 255.

Incluye la pérdida de entropía cruzada en bits, el bucle de entrenamiento
con Adam y puntos de control, y el formato binario del archivo de modelo.

Autor: Equipo de Desarrollo
Fecha: 2024
Versión: 1.0
"""

import hashlib
import io
import logging
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from core.cloud_io import AttributeMode
from core.descriptor import DaldConfig, DescriptorEmbeddings, DescriptorInputs, build_descriptors
from core.errors import ConfigError, IntegrityError, TrainingError
from core.range_coder import RESIDUAL_ALPHABET, quantize_probabilities

logger = logging.getLogger(__name__)

MODEL_MAGIC = b'DALD'
MODEL_VERSION = 1
RESIDUAL_OFFSET = 255
CONDITION_SCALE = 255.0


def _as_mode(mode: Union[str, AttributeMode]) -> AttributeMode:
    return mode if isinstance(mode, AttributeMode) else AttributeMode(mode)


@dataclass
class ModelConfig:
    """Arquitectura del modelo: descriptor, modo y encoder."""

    dald: DaldConfig
    mode: AttributeMode = AttributeMode.RGB
    num_layers: int = 3
    num_heads: int = 3
    ff_mult: int = 4
    alphabet: int = RESIDUAL_ALPHABET

    @classmethod
    def from_dald(cls, dald: DaldConfig, mode: Union[str, AttributeMode] = AttributeMode.RGB,
                  num_layers: int = 3, num_heads: int = 3, ff_mult: int = 4) -> 'ModelConfig':
        return cls(dald=dald, mode=_as_mode(mode), num_layers=num_layers,
                   num_heads=num_heads, ff_mult=ff_mult)

    @property
    def dim(self) -> int:
        return self.dald.descriptor_dim

    @property
    def channels(self) -> int:
        return 3 if self.mode == AttributeMode.RGB else 1

    def validate(self) -> Tuple[bool, List[str]]:
        """
        Returns:
            Tuple[bool, List[str]]: (es_válida, errores)
        """
        _, errors = self.dald.validate()
        if self.num_layers < 1 or self.num_heads < 1 or self.ff_mult < 1:
            errors.append("Capas, cabezas y multiplicador deben ser >= 1")
        elif self.dim % self.num_heads:
            errors.append(f"La dimensión {self.dim} no es divisible por {self.num_heads} cabezas")
        if self.alphabet != RESIDUAL_ALPHABET:
            errors.append(f"El alfabeto de residuos debe ser {RESIDUAL_ALPHABET}")
        return len(errors) == 0, errors


@dataclass
class TrainingConfig:
    """Hiperparámetros de entrenamiento."""

    lr: float = 1e-3
    epochs: int = 8
    batch_count: int = 32
    seed: int = 0


@dataclass
class TrainingData:
    """Lotes de entrenamiento: entradas de descriptor y símbolos objetivo (B, N, C)."""

    inputs: DescriptorInputs
    symbols: np.ndarray

    @property
    def batch_count(self) -> int:
        return self.inputs.batch_count


@dataclass
class TrainingResult:
    epoch_losses: List[float] = field(default_factory=list)
    epochs_completed: int = 0


class EntropyModel(nn.Module):
    """Embeddings + encoder de atención + cabezas de 511 salidas."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        is_valid, errors = config.validate()
        if not is_valid:
            raise ConfigError("; ".join(errors))
        self.config = config
        d = config.dim
        self.embeddings = DescriptorEmbeddings(config.dald, config.mode)
        layer = nn.TransformerEncoderLayer(
            d_model=d,
            nhead=config.num_heads,
            dim_feedforward=config.ff_mult * d,
            dropout=0.0,
            activation='gelu',
            batch_first=True,
            norm_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=config.num_layers, enable_nested_tensor=False)
        self.heads = nn.ModuleList([
            nn.Sequential(nn.Linear(d + c, d), nn.GELU(), nn.Linear(d, config.alphabet))
            for c in range(config.channels)
        ])

    @property
    def mode(self) -> AttributeMode:
        return self.config.mode

    def descriptors(self, inputs: DescriptorInputs) -> torch.Tensor:
        return build_descriptors(inputs, self.embeddings)

    def context_forward(self, descriptors: torch.Tensor) -> torch.Tensor:
        """
        Contextos C_1..C_N de cada lote, sin máscara de atención.

        Args:
            descriptors: (B, N, d) o (N, d)

        Returns:
            torch.Tensor: Misma forma que la entrada
        """
        squeeze = descriptors.dim() == 2
        if squeeze:
            descriptors = descriptors.unsqueeze(0)
        if descriptors.shape[-1] != self.config.dim:
            raise ConfigError(f"Dimensión del descriptor {descriptors.shape[-1]} != {self.config.dim}")
        contexts = self.encoder(descriptors)
        return contexts.squeeze(0) if squeeze else contexts

    def head_logits(self, channel: int, contexts: torch.Tensor,
                    conditions: Sequence[torch.Tensor] = ()) -> torch.Tensor:
        """Logits de la cabeza de un canal; ``conditions`` son residuos enteros previos."""
        if len(conditions) != channel:
            raise ConfigError(f"La cabeza {channel} necesita {channel} residuos de condición")
        parts = [contexts] + [(r.to(contexts.dtype) / CONDITION_SCALE).unsqueeze(-1) for r in conditions]
        return self.heads[channel](torch.cat(parts, dim=-1))

    def predict_y(self, contexts: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.head_logits(0, contexts), dim=-1)

    def predict_u(self, contexts: torch.Tensor, r_y: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.head_logits(1, contexts, [r_y]), dim=-1)

    def predict_v(self, contexts: torch.Tensor, r_y: torch.Tensor, r_u: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.head_logits(2, contexts, [r_y, r_u]), dim=-1)

    def forward(self, inputs: DescriptorInputs, residuals: torch.Tensor) -> List[torch.Tensor]:
        """
        Logits de todos los canales con los residuos verdaderos como condición.

        Args:
            inputs: Entradas de B lotes
            residuals: (B, N, C) residuos recortados a [-255, 255]
        """
        contexts = self.context_forward(self.descriptors(inputs))
        logits = []
        for channel in range(self.config.channels):
            conditions = [residuals[..., c] for c in range(channel)]
            logits.append(self.head_logits(channel, contexts, conditions))
        return logits


def cross_entropy_bits(logits: Sequence[torch.Tensor], symbols: torch.Tensor,
                       real_mask: torch.Tensor) -> torch.Tensor:
    """
    Entropía cruzada media en bits por punto real, sumando los canales.

    Args:
        logits: Lista por canal de (B, N, 511)
        symbols: (B, N, C) índices r + 255
        real_mask: (B, N) True en puntos reales

    Returns:
        torch.Tensor: Escalar; 0 si todos los puntos son relleno
    """
    real_mask = real_mask.to(torch.bool)
    count = int(real_mask.sum())
    if count == 0:
        logger.warning("⚠️ Lote sin puntos reales: la pérdida se define como 0")
        return logits[0].sum() * 0.0
    total = logits[0].new_zeros(())
    for channel, channel_logits in enumerate(logits):
        log_probs = F.log_softmax(channel_logits, dim=-1)
        picked = log_probs.gather(-1, symbols[..., channel].unsqueeze(-1)).squeeze(-1)
        total = total - picked[real_mask].sum()
    return total / (count * math.log(2.0))


def cross_entropy(probs: torch.Tensor, symbols: torch.Tensor, real_mask: torch.Tensor) -> float:
    """Entropía cruzada en bits de distribuciones ya normalizadas (un canal)."""
    real_mask = real_mask.to(torch.bool)
    if int(real_mask.sum()) == 0:
        logger.warning("⚠️ Lote sin puntos reales: la pérdida se define como 0")
        return 0.0
    picked = probs.gather(-1, symbols.unsqueeze(-1)).squeeze(-1)[real_mask]
    return float(-torch.log2(picked.double()).mean())


def logits_to_cdfs(logits: torch.Tensor) -> np.ndarray:
    """Softmax en doble precisión y cuantización a CDFs de total 2^16."""
    probs = torch.softmax(logits.detach().to(torch.float64), dim=-1).cpu().numpy()
    return quantize_probabilities(probs.reshape(-1, probs.shape[-1]))


def residual_tensor(symbols: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(np.asarray(symbols, dtype=np.int64) - RESIDUAL_OFFSET)


def create_model(config: ModelConfig, seed: int = 0) -> EntropyModel:
    """Modelo inicializado de forma determinista."""
    torch.manual_seed(seed)
    return EntropyModel(config)


def train(model: EntropyModel, data: TrainingData, config: TrainingConfig,
          checkpoint_path: Optional[Union[str, Path]] = None, resume: bool = False) -> TrainingResult:
    """
    Minimiza la entropía cruzada con Adam.

    El orden de los lotes en cada época sale de ``seed + época``; sin
    dropout, reanudar desde un punto de control reproduce la misma
    trayectoria que una corrida sin interrupciones.

    Args:
        model: Modelo a entrenar (se modifica en el lugar)
        data: Lotes de entrenamiento
        config: Hiperparámetros
        checkpoint_path: Archivo ``.ckpt`` escrito al final de cada época
        resume: Continuar desde ``checkpoint_path`` si existe

    Returns:
        TrainingResult: Pérdida media por época (bits por punto)
    """
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    result = TrainingResult()
    start_epoch = 0
    if resume and checkpoint_path and Path(checkpoint_path).exists():
        start_epoch, losses = load_checkpoint(checkpoint_path, model, optimizer)
        result.epoch_losses = list(losses)
        logger.info(f"Reanudando entrenamiento desde la época {start_epoch}")

    symbols_all = torch.as_tensor(np.asarray(data.symbols, dtype=np.int64))
    mask_all = torch.as_tensor(data.inputs.real_mask)
    dtype = next(model.parameters()).dtype
    model.train()
    for epoch in range(start_epoch, config.epochs):
        order = np.random.default_rng(config.seed + epoch).permutation(data.batch_count)
        total_bits = 0.0
        total_points = 0
        for step_start in range(0, order.shape[0], config.batch_count):
            rows = np.sort(order[step_start:step_start + config.batch_count])
            inputs = data.inputs.subset(rows)
            symbols = symbols_all[rows]
            mask = mask_all[rows]
            logits = model(inputs, (symbols - RESIDUAL_OFFSET).to(dtype))
            loss = cross_entropy_bits(logits, symbols, mask)
            if not torch.isfinite(loss):
                logger.error(f"❌ Pérdida no finita en la época {epoch + 1}, paso {step_start // config.batch_count}")
                raise TrainingError(f"Pérdida no finita ({float(loss)}) en la época {epoch + 1}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            points = int(mask.sum())
            total_bits += float(loss.detach()) * points
            total_points += points
        epoch_loss = total_bits / max(total_points, 1)
        result.epoch_losses.append(epoch_loss)
        logger.info(f"📊 Época {epoch + 1}/{config.epochs}: pérdida={epoch_loss:.4f} bits/punto")
        if checkpoint_path:
            save_checkpoint(checkpoint_path, model, optimizer, epoch + 1, result.epoch_losses)
    result.epochs_completed = config.epochs
    model.eval()
    return result


def save_checkpoint(path: Union[str, Path], model: EntropyModel, optimizer: torch.optim.Optimizer,
                    epoch: int, losses: Sequence[float]) -> None:
    torch.save({
        'model': model_to_bytes(model),
        'optimizer': optimizer.state_dict(),
        'epoch': epoch,
        'losses': list(losses),
    }, str(path))


def load_checkpoint(path: Union[str, Path], model: EntropyModel,
                    optimizer: torch.optim.Optimizer) -> Tuple[int, List[float]]:
    """Restaura modelo y optimizador; devuelve (épocas completadas, pérdidas)."""
    state = torch.load(str(path), weights_only=False)
    restored = model_from_bytes(state['model'])
    if restored.config != model.config:
        raise ConfigError("El punto de control corresponde a otra arquitectura")
    model.load_state_dict(restored.state_dict())
    optimizer.load_state_dict(state['optimizer'])
    return int(state['epoch']), list(state.get('losses', []))


# --- Archivo de modelo -----------------------------------------------------

_MODE_CODES = {AttributeMode.SINGLE: 0, AttributeMode.RGB: 1}


def _pack_config(config: ModelConfig) -> bytes:
    dald = config.dald
    out = struct.pack('<BBHHHHHHHH', _MODE_CODES[config.mode], dald.n, dald.k,
                      dald.n_el, dald.n_ea, dald.n_er,
                      config.num_layers, config.num_heads, config.ff_mult, config.alphabet)
    for values in dald.thresholds:
        out += struct.pack(f'<{len(values)}d', *values)
    return out


def _unpack_config(data: bytes, offset: int) -> Tuple[ModelConfig, int]:
    fields = struct.unpack_from('<BBHHHHHHHH', data, offset)
    offset += struct.calcsize('<BBHHHHHHHH')
    mode_code, n, k, n_el, n_ea, n_er, layers, heads, ff_mult, alphabet = fields
    thresholds = []
    for _ in range(3):
        thresholds.append(tuple(struct.unpack_from(f'<{n + 1}d', data, offset)))
        offset += 8 * (n + 1)
    modes = {code: mode for mode, code in _MODE_CODES.items()}
    if mode_code not in modes:
        raise IntegrityError(f"Modo de atributos desconocido en el modelo: {mode_code}")
    dald = DaldConfig(n=n, thresholds_x=thresholds[0], thresholds_y=thresholds[1],
                      thresholds_z=thresholds[2], k=k, n_el=n_el, n_ea=n_ea, n_er=n_er)
    config = ModelConfig(dald=dald, mode=modes[mode_code], num_layers=layers,
                         num_heads=heads, ff_mult=ff_mult, alphabet=alphabet)
    return config, offset


def model_to_bytes(model: EntropyModel) -> bytes:
    """
    Serializa el modelo: magia "DALD", versión u16, bloque de configuración,
    tensores float32 little-endian en el orden del state_dict y CRC-32 final.
    """
    out = io.BytesIO()
    out.write(MODEL_MAGIC)
    out.write(struct.pack('<H', MODEL_VERSION))
    out.write(_pack_config(model.config))
    state = model.state_dict()
    out.write(struct.pack('<I', len(state)))
    for name, tensor in state.items():
        encoded = name.encode('utf-8')
        array = tensor.detach().cpu().to(torch.float32).numpy()
        out.write(struct.pack('<H', len(encoded)))
        out.write(encoded)
        out.write(struct.pack('<B', array.ndim))
        out.write(struct.pack(f'<{array.ndim}I', *array.shape))
        out.write(np.ascontiguousarray(array, dtype='<f4').tobytes())
    body = out.getvalue()
    return body + struct.pack('<I', zlib.crc32(body) & 0xFFFFFFFF)


def model_from_bytes(data: bytes) -> EntropyModel:
    """Inversa de :func:`model_to_bytes`."""
    if len(data) < 10 or data[:4] != MODEL_MAGIC:
        raise IntegrityError("Archivo de modelo sin la firma DALD")
    body, (crc,) = data[:-4], struct.unpack('<I', data[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise IntegrityError("CRC del archivo de modelo inválido")
    (version,) = struct.unpack_from('<H', data, 4)
    if version != MODEL_VERSION:
        raise IntegrityError(f"Versión de modelo no soportada: {version}")
    config, offset = _unpack_config(data, 6)
    model = EntropyModel(config)
    (count,) = struct.unpack_from('<I', data, offset)
    offset += 4
    state = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from('<H', data, offset)
        offset += 2
        name = data[offset:offset + name_len].decode('utf-8')
        offset += name_len
        (ndim,) = struct.unpack_from('<B', data, offset)
        offset += 1
        shape = struct.unpack_from(f'<{ndim}I', data, offset)
        offset += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        array = np.frombuffer(data, dtype='<f4', count=size, offset=offset).reshape(shape)
        offset += 4 * size
        state[name] = torch.from_numpy(array.astype(np.float32))
    model.load_state_dict(state)
    model.eval()
    return model


def model_hash(data: bytes) -> bytes:
    """Identificador de 8 bytes del archivo de modelo."""
    return hashlib.sha256(data).digest()[:8]


def save_model(model: EntropyModel, path: Union[str, Path]) -> bytes:
    data = model_to_bytes(model)
    Path(path).write_bytes(data)
    logger.info(f"✅ Modelo guardado en {path} (hash {model_hash(data).hex()})")
    return data


def load_model(path: Union[str, Path]) -> Tuple[EntropyModel, bytes]:
    """Carga un modelo; devuelve (modelo, hash)."""
    data = Path(path).read_bytes()
    return model_from_bytes(data), model_hash(data)
