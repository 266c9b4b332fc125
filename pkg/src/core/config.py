"""
Configuración del códec de atributos de nubes de puntos.

Los valores por defecto corresponden al preset ``desk``; los presets
``object`` y ``lidar`` son los parámetros de escala completa para
objetos con color y para LiDAR con reflectancia. Los archivos de
configuración son texto ``clave = valor`` leídos con python-dotenv y
validados con cerberus.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from cerberus import Validator
from dotenv import dotenv_values, load_dotenv

from core.descriptor import DaldConfig
from core.entropy_model import ModelConfig, TrainingConfig
from core.errors import ConfigError
from core.lod_builder import LodConfig
from core.partition import PartitionConfig

# Cargar variables de entorno
load_dotenv('config.env')

logger = logging.getLogger(__name__)


def _to_float_list(value) -> List[float]:
    """Convierte ``"0,1,3,inf"`` en ``[0.0, 1.0, 3.0, inf]``."""
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(v) for v in str(value).replace(' ', '').split(',') if v]


def _to_int_list(value) -> List[int]:
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    return [int(v) for v in str(value).replace(' ', '').split(',') if v]


class CodecSettings:
    """Valores por defecto y overrides de entorno del códec."""

    DEFAULT_CONFIG = {
        'PRESET': 'desk',
        'LOD_T': 8,
        'LOD_L': 24,
        'LOD_BASE_FRACTION': 0.05,
        'NEIGHBORS_K': 7,
        'DALD_N': 3,
        'DALD_THRESHOLDS_X': '0,1,3,inf',
        'DALD_THRESHOLDS_Y': '0,1,3,inf',
        'DALD_THRESHOLDS_Z': '0,1,3,inf',
        'MODEL_EMBED_EL': 6,
        'MODEL_EMBED_EA': 3,
        'MODEL_EMBED_ER': 6,
        'MODEL_LAYERS': 3,
        'MODEL_HEADS': 3,
        'MODEL_FF_MULT': 4,
        'PARTITION_BATCH_N': 256,
        'PARTITION_BATCHES_PER_BLOCK': 32,
        'PARTITION_SMOOTH_NEIGHBORS': 50,
        'PARTITION_ALPHA': 255.0,
        'PARTITION_KMEANS_MAX_ITER': 20,
        'SEED': 0,
    }

    @classmethod
    def get_threads(cls) -> int:
        """
        Número de hilos para el trabajo por lotes.
        Prioriza la variable de entorno ``DPCC_THREADS``.

        Returns:
            int: Hilos a usar (al menos 1)
        """
        raw = os.getenv('DPCC_THREADS')
        if raw:
            try:
                return max(1, int(raw))
            except ValueError:
                logger.warning(f"⚠️ DPCC_THREADS inválido: {raw!r}; se usa el número de núcleos")
        return max(1, os.cpu_count() or 1)

    @classmethod
    def get_preset_name(cls) -> str:
        return os.getenv('DPCC_PRESET', cls.DEFAULT_CONFIG['PRESET'])


# Presets de parámetros (análogo a los entornos de despliegue)
PRESETS = {
    'desk': {},
    'object': {
        'NEIGHBORS_K': 11,
        'PARTITION_BATCH_N': 1024,
    },
    'lidar': {
        'LOD_L': 16,
        'NEIGHBORS_K': 9,
        'PARTITION_BATCH_N': 4096,
        'DALD_THRESHOLDS_X': '0.2,1,3,inf',
        'DALD_THRESHOLDS_Y': '0.2,1,3,inf',
        'DALD_THRESHOLDS_Z': '0.2,0.4,1,inf',
    },
}

CONFIG_SCHEMA = {
    'PRESET': {'type': 'string', 'allowed': list(PRESETS)},
    'LOD_T': {'type': 'integer', 'coerce': int, 'min': 1},
    'LOD_L': {'type': 'integer', 'coerce': int, 'min': 2},
    'LOD_BASE_FRACTION': {'type': 'float', 'coerce': float, 'min': 0.0, 'max': 1.0},
    'LOD_SCHEDULE': {'type': 'list', 'coerce': _to_int_list, 'schema': {'type': 'integer', 'min': 0}},
    'NEIGHBORS_K': {'type': 'integer', 'coerce': int, 'min': 1},
    'DALD_N': {'type': 'integer', 'coerce': int, 'min': 1, 'max': 7},
    'DALD_THRESHOLDS_X': {'type': 'list', 'coerce': _to_float_list, 'schema': {'type': 'float'}},
    'DALD_THRESHOLDS_Y': {'type': 'list', 'coerce': _to_float_list, 'schema': {'type': 'float'}},
    'DALD_THRESHOLDS_Z': {'type': 'list', 'coerce': _to_float_list, 'schema': {'type': 'float'}},
    'MODEL_EMBED_EL': {'type': 'integer', 'coerce': int, 'min': 1},
    'MODEL_EMBED_EA': {'type': 'integer', 'coerce': int, 'min': 1},
    'MODEL_EMBED_ER': {'type': 'integer', 'coerce': int, 'min': 1},
    'MODEL_LAYERS': {'type': 'integer', 'coerce': int, 'min': 1},
    'MODEL_HEADS': {'type': 'integer', 'coerce': int, 'min': 1},
    'MODEL_FF_MULT': {'type': 'integer', 'coerce': int, 'min': 1},
    'PARTITION_BATCH_N': {'type': 'integer', 'coerce': int, 'min': 1},
    'PARTITION_BATCHES_PER_BLOCK': {'type': 'integer', 'coerce': int, 'min': 1},
    'PARTITION_SMOOTH_NEIGHBORS': {'type': 'integer', 'coerce': int, 'min': 1},
    'PARTITION_ALPHA': {'type': 'float', 'coerce': float, 'min': 0.0},
    'PARTITION_KMEANS_MAX_ITER': {'type': 'integer', 'coerce': int, 'min': 1},
    'SEED': {'type': 'integer', 'coerce': int, 'min': 0},
}

TRAINING_SCHEMA = {
    'LR': {'type': 'float', 'coerce': float, 'min': 0.0},
    'EPOCHS': {'type': 'integer', 'coerce': int, 'min': 0},
    'BATCH_COUNT': {'type': 'integer', 'coerce': int, 'min': 1},
    'SEED': {'type': 'integer', 'coerce': int, 'min': 0},
}


@dataclass
class CodecConfig:
    """Configuración completa del códec (LoD, DALD, partición y modelo)."""

    lod: LodConfig
    dald: DaldConfig
    partition: PartitionConfig
    model_arch: Dict[str, int] = field(default_factory=dict)
    preset: str = 'desk'

    def model_config(self, mode: str) -> ModelConfig:
        """Arquitectura del modelo de entropía para un modo de atributos."""
        return ModelConfig.from_dald(self.dald, mode=mode, **self.model_arch)

    def validate(self) -> Tuple[bool, List[str]]:
        """
        Valida la coherencia entre las secciones de configuración.

        Returns:
            Tuple[bool, List[str]]: (es_válida, errores)
        """
        errors = []
        for section in (self.lod, self.dald, self.partition):
            _, section_errors = section.validate()
            errors.extend(section_errors)
        if self.lod.k != self.dald.k:
            errors.append(f"k del LoD ({self.lod.k}) distinto de k del descriptor ({self.dald.k})")
        dim = self.dald.descriptor_dim
        heads = self.model_arch.get('num_heads', 3)
        if dim % heads != 0:
            errors.append(f"La dimensión del descriptor ({dim}) no es divisible por {heads} cabezas")
        return len(errors) == 0, errors


def validate_values(values: Dict, schema: Dict) -> Dict:
    """
    Valida y convierte un diccionario de valores crudos con cerberus.

    Args:
        values: Valores leídos (cadenas o números)
        schema: Esquema cerberus

    Returns:
        Dict: Documento normalizado

    Raises:
        ConfigError: Si hay claves desconocidas o valores inválidos
    """
    validator = Validator(schema)
    clean = {key: value for key, value in values.items() if value is not None and value != ''}
    if not validator.validate(clean):
        raise ConfigError(f"Configuración inválida: {validator.errors}")
    return validator.document


def get_preset_config(name: str = 'desk') -> Dict:
    """
    Obtiene los valores planos de un preset.

    Args:
        name: Preset (desk, object, lidar)

    Returns:
        Dict: Valores del preset sobre los valores por defecto
    """
    if name not in PRESETS:
        raise ConfigError(f"Preset desconocido: {name}")
    values = dict(CodecSettings.DEFAULT_CONFIG)
    values.update(PRESETS[name])
    values['PRESET'] = name
    return values


def build_codec_config(values: Dict) -> CodecConfig:
    """Construye un ``CodecConfig`` a partir de valores planos ya validados."""
    doc = validate_values(values, CONFIG_SCHEMA)
    k = doc['NEIGHBORS_K']
    schedule = doc.get('LOD_SCHEDULE')
    lod = LodConfig(
        T=doc['LOD_T'],
        L=doc['LOD_L'],
        k=k,
        base_distance_schedule=tuple(schedule) if schedule else None,
        base_fraction=doc['LOD_BASE_FRACTION'],
    )
    dald = DaldConfig(
        n=doc['DALD_N'],
        thresholds_x=tuple(doc['DALD_THRESHOLDS_X']),
        thresholds_y=tuple(doc['DALD_THRESHOLDS_Y']),
        thresholds_z=tuple(doc['DALD_THRESHOLDS_Z']),
        k=k,
        n_el=doc['MODEL_EMBED_EL'],
        n_ea=doc['MODEL_EMBED_EA'],
        n_er=doc['MODEL_EMBED_ER'],
    )
    partition = PartitionConfig(
        batch_size=doc['PARTITION_BATCH_N'],
        batches_per_block=doc['PARTITION_BATCHES_PER_BLOCK'],
        smoothing_neighbors=doc['PARTITION_SMOOTH_NEIGHBORS'],
        alpha=doc['PARTITION_ALPHA'],
        kmeans_max_iter=doc['PARTITION_KMEANS_MAX_ITER'],
        seed=doc['SEED'],
    )
    config = CodecConfig(
        lod=lod,
        dald=dald,
        partition=partition,
        model_arch={
            'num_layers': doc['MODEL_LAYERS'],
            'num_heads': doc['MODEL_HEADS'],
            'ff_mult': doc['MODEL_FF_MULT'],
        },
        preset=doc.get('PRESET', 'desk'),
    )
    is_valid, errors = config.validate()
    if not is_valid:
        raise ConfigError("; ".join(errors))
    return config


def load_codec_config(path: Optional[str] = None, preset: Optional[str] = None,
                      overrides: Optional[Dict] = None) -> CodecConfig:
    """
    Carga la configuración del códec.

    El orden de prioridad es: overrides > archivo > preset > valores por defecto.

    Args:
        path: Archivo ``clave = valor`` opcional
        preset: Nombre del preset base
        overrides: Valores explícitos (por ejemplo desde la CLI)

    Returns:
        CodecConfig: Configuración validada
    """
    file_values = {}
    if path:
        file_path = Path(path)
        if not file_path.exists():
            raise ConfigError(f"Archivo de configuración no encontrado: {file_path}")
        file_values = {key.upper(): value for key, value in dotenv_values(file_path).items()
                       if key.upper() in CONFIG_SCHEMA or key.upper() not in TRAINING_SCHEMA}
        logger.info(f"Configuración cargada: {file_path}")

    name = preset or file_values.get('PRESET') or CodecSettings.get_preset_name()
    values = get_preset_config(name)
    values.update(file_values)
    values.update(overrides or {})
    return build_codec_config(values)


def load_training_config(path: Optional[str] = None, overrides: Optional[Dict] = None) -> TrainingConfig:
    """
    Carga la configuración de entrenamiento (LR, EPOCHS, BATCH_COUNT, SEED).

    Args:
        path: Archivo ``clave = valor`` opcional
        overrides: Valores explícitos

    Returns:
        TrainingConfig: Configuración de entrenamiento
    """
    values = {}
    if path:
        file_path = Path(path)
        if not file_path.exists():
            raise ConfigError(f"Archivo de configuración no encontrado: {file_path}")
        # Las claves del códec pueden convivir en el mismo archivo
        values = {key.upper(): value for key, value in dotenv_values(file_path).items()
                  if key.upper() in TRAINING_SCHEMA}
    values.update({key: value for key, value in (overrides or {}).items() if value is not None})
    doc = validate_values(values, TRAINING_SCHEMA)
    defaults = TrainingConfig()
    config = TrainingConfig(
        lr=doc.get('LR', defaults.lr),
        epochs=doc.get('EPOCHS', defaults.epochs),
        batch_count=doc.get('BATCH_COUNT', defaults.batch_count),
        seed=doc.get('SEED', defaults.seed),
    )
    if not math.isfinite(config.lr):
        raise ConfigError("LR debe ser finito")
    return config
