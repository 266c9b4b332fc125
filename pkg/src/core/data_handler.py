"""
Manejador de Datos
==================

Lectura de corpus de nubes PLY para entrenamiento y escritura de informes
(tasa en JSON, curvas de densidad en CSV).

Autor: Equipo de Desarrollo
Fecha: 2024
Versión: 1.0
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd

from core.cloud_io import PointCloud, read_ply_file, write_ply_file
from core.errors import CodecError

REPORT_FIELDS = ['points', 'header_bits', 'base_bits', 'layer_bits', 'inference_bits',
                 'overflow_bits', 'total_bits', 'bpp', 'percentages']
DENSITY_HEADERS = ['ratio', 'nn', 'points']


class DataValidator:
    """Clase para validar datos antes de procesarlos."""

    @staticmethod
    def validate_json_structure(data: Dict, required_fields: List[str]) -> Tuple[bool, List[str]]:
        """
        Valida que un diccionario tenga los campos requeridos.

        Args:
            data: Diccionario a validar
            required_fields: Lista de campos requeridos

        Returns:
            Tuple[bool, List[str]]: (es_válido, errores)
        """
        errors = []

        if not isinstance(data, dict):
            return False, ["Los datos deben ser un diccionario"]

        for field in required_fields:
            if field not in data:
                errors.append(f"Campo requerido faltante: {field}")
            elif data[field] is None or data[field] == "":
                errors.append(f"Campo vacío: {field}")

        return len(errors) == 0, errors

    @staticmethod
    def validate_csv_headers(headers: List[str], expected_headers: List[str]) -> Tuple[bool, List[str]]:
        """
        Valida que los headers de un CSV sean los esperados.

        Returns:
            Tuple[bool, List[str]]: (es_válido, errores)
        """
        errors = []

        missing_headers = [h for h in expected_headers if h not in headers]
        if missing_headers:
            errors.append(f"Headers faltantes: {', '.join(missing_headers)}")

        extra_headers = [h for h in headers if h not in expected_headers]
        if extra_headers:
            errors.append(f"Headers adicionales: {', '.join(extra_headers)}")

        return len(errors) == 0, errors


class CorpusLoader:
    """Carga de corpus de nubes de puntos desde un directorio."""

    def __init__(self, base_path: str = "data/corpus"):
        """
        Inicializa el cargador.

        Args:
            base_path: Directorio con archivos ``*.ply``
        """
        self.base_path = Path(base_path)
        self._setup_logging()

    def _setup_logging(self):
        """Configura el logging para el manejador."""
        self.logger = logging.getLogger(__name__)

    def list_files(self, pattern: str = "*.ply") -> List[Path]:
        """Archivos del corpus en orden alfabético (determinista)."""
        if not self.base_path.is_dir():
            self.logger.warning(f"Directorio de corpus no encontrado: {self.base_path}")
            return []
        return sorted(self.base_path.glob(pattern))

    def load_cloud(self, file_path: Path) -> Optional[PointCloud]:
        """
        Carga una nube; si falla se registra el error y se devuelve None.

        Args:
            file_path: Ruta al PLY

        Returns:
            PointCloud o None si hay error
        """
        try:
            cloud = read_ply_file(file_path)
            self.logger.info(f"Nube cargada: {file_path.name} ({cloud.num_points} puntos)")
            return cloud
        except (CodecError, OSError) as e:
            self.logger.error(f"❌ Error cargando {file_path.name}: {str(e)}")
            return None

    def load_corpus(self, pattern: str = "*.ply") -> List[Tuple[str, PointCloud]]:
        """
        Carga todas las nubes legibles del corpus.

        Returns:
            Lista de (nombre, nube); los archivos ilegibles se omiten
        """
        clouds = []
        for file_path in self.list_files(pattern):
            cloud = self.load_cloud(file_path)
            if cloud is not None:
                clouds.append((file_path.name, cloud))
        self.logger.info(f"📊 Corpus: {len(clouds)} nubes cargadas desde {self.base_path}")
        return clouds

    def save_corpus(self, clouds: Dict[str, PointCloud]) -> int:
        """Escribe un conjunto de nubes como ``<nombre>.ply``; devuelve cuántas se guardaron."""
        self.base_path.mkdir(parents=True, exist_ok=True)
        saved = 0
        for name, cloud in clouds.items():
            try:
                write_ply_file(cloud, self.base_path / f"{name}.ply")
                saved += 1
            except (CodecError, OSError) as e:
                self.logger.error(f"❌ Error guardando {name}: {str(e)}")
        return saved


class ReportWriter:
    """Escritura de informes de tasa y curvas de densidad."""

    def __init__(self):
        self.validator = DataValidator()
        self.logger = logging.getLogger(__name__)

    def report_json(self, report: Dict[str, Any]) -> str:
        """
        Serializa un informe de tasa como JSON.

        Raises:
            ValueError: Si faltan campos obligatorios
        """
        is_valid, errors = self.validator.validate_json_structure(report, REPORT_FIELDS)
        if not is_valid:
            raise ValueError("; ".join(errors))
        return json.dumps(report, indent=2, ensure_ascii=False, default=str)

    def report_text(self, report: Dict[str, Any]) -> str:
        """Resumen legible del informe de tasa."""
        lines = [
            f"Puntos:         {report['points']}",
            f"Encabezado:     {report['header_bits']} bits",
            f"Capa base:      {report['base_bits']} bits",
            f"Inferencia:     {report['inference_bits']} bits",
            f"Desborde:       {report['overflow_bits']} bits",
            f"Total:          {report['total_bits']} bits",
            f"bpp:            {report['bpp']:.4f}",
        ]
        for index, bits in enumerate(report['layer_bits']):
            lines.append(f"  capa {index + 1:>2}: {bits} bits")
        percentages = report['percentages']
        lines.append("Porcentajes:    " + ", ".join(f"{k}={v:.1f}%" for k, v in percentages.items()))
        return "\n".join(lines)

    def save_density_curve(self, df: pd.DataFrame, file_path: str) -> bool:
        """
        Guarda una curva de densidad como CSV.

        Returns:
            bool: True si se guardó exitosamente
        """
        try:
            is_valid, errors = self.validator.validate_csv_headers(list(df.columns), DENSITY_HEADERS)
            if not is_valid:
                self.logger.error(f"Curva de densidad inválida: {'; '.join(errors)}")
                return False
            path = Path(file_path)
            path.parent.mkdir(parents=True, exist_ok=True)
            df.to_csv(path, index=False, encoding='utf-8')
            self.logger.info(f"Curva de densidad guardada: {path}")
            return True
        except OSError as e:
            self.logger.error(f"Error guardando curva de densidad: {str(e)}")
            return False

    def load_density_curve(self, file_path: str) -> Optional[pd.DataFrame]:
        """Carga una curva de densidad o None si no existe."""
        path = Path(file_path)
        if not path.exists():
            self.logger.warning(f"Archivo no encontrado: {path}")
            return None
        return pd.read_csv(path, encoding='utf-8')

    def plot_density_curve(self, df: pd.DataFrame, file_path: str) -> bool:
        """Gráfico NN vs razón de muestreo (matplotlib, backend sin pantalla)."""
        try:
            import matplotlib
            matplotlib.use('Agg')
            import matplotlib.pyplot as plt
        except ImportError:
            self.logger.warning("⚠️ matplotlib no disponible: se omite el gráfico")
            return False
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(df['ratio'], df['nn'], marker='o')
        ax.set_xscale('log')
        ax.set_xlabel('Razón de muestreo')
        ax.set_ylabel('NN')
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(file_path)
        plt.close(fig)
        self.logger.info(f"Gráfico de densidad guardado: {file_path}")
        return True
