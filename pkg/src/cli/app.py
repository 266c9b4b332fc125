"""
Interfaz de línea de comandos del códec
Codifica, decodifica, entrena modelos, analiza densidad e informa la tasa
"""

import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional

import click

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from core.cloud_io import AttributeMode, read_ply_file, read_ply_geometry, write_ply_file  # noqa: E402
from core.config import CodecSettings, load_codec_config, load_training_config  # noqa: E402
from core.data_handler import CorpusLoader, ReportWriter  # noqa: E402
from core.entropy_model import create_model, load_model, model_hash, save_model, train  # noqa: E402
from core.errors import CodecError, InputError, IntegrityError  # noqa: E402
from core.lod_builder import build_lod  # noqa: E402
from core.metrics import DEFAULT_RATIOS, cloud_label_histogram, nn_density, sampled_density_curve  # noqa: E402
from core.pipeline import (decode, encode, merge_training_data, prepare_training_batches,  # noqa: E402
                           rate_report)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INTEGRITY = 2

logger = logging.getLogger('dpcc')


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )


def _overrides(seed: Optional[int]) -> dict:
    return {'SEED': seed} if seed is not None else {}


def _emit_report(report: dict, as_json: bool) -> None:
    writer = ReportWriter()
    click.echo(writer.report_json(report) if as_json else writer.report_text(report))


@click.group()
@click.option('--verbose', '-v', is_flag=True, help='Log detallado (DEBUG)')
@click.option('--threads', type=click.IntRange(min=1), default=None,
              help='Hilos para el trabajo por lotes (por defecto DPCC_THREADS o núcleos)')
@click.pass_context
def cli(ctx, verbose, threads):
    """Códec sin pérdidas de atributos de nubes de puntos."""
    _setup_logging(verbose)
    ctx.ensure_object(dict)
    ctx.obj['threads'] = threads or CodecSettings.get_threads()


@cli.command('encode')
@click.option('--input', 'input_path', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--output', 'output_path', required=True, type=click.Path(dir_okay=False))
@click.option('--model', 'model_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--baseline', is_flag=True, help='Modelos adaptativos de orden 0 en lugar del modelo aprendido')
@click.option('--config', 'config_path', type=click.Path(dir_okay=False))
@click.option('--preset', type=click.Choice(['desk', 'object', 'lidar']))
@click.option('--embed-geometry', is_flag=True)
@click.option('--debug-digests', is_flag=True, help='Guardar resúmenes de estructura y CRCs de CDF')
@click.option('--seed', type=click.IntRange(min=0), default=None)
@click.option('--json', 'as_json', is_flag=True)
@click.pass_context
def encode_command(ctx, input_path, output_path, model_path, baseline, config_path, preset,
                   embed_geometry, debug_digests, seed, as_json):
    """Codifica los atributos de un PLY."""
    if model_path is None and not baseline:
        raise InputError("Se requiere --model o --baseline")
    if model_path is not None and baseline:
        raise InputError("--model y --baseline son excluyentes")
    config = load_codec_config(config_path, preset, _overrides(seed))
    logger.info(f"Preset {config.preset}, semilla {config.partition.seed}")
    cloud = read_ply_file(input_path)
    model = None
    if model_path:
        model, hash_bytes = load_model(model_path)
        logger.info(f"Modelo {model_path} (hash {hash_bytes.hex()})")
    bitstream = encode(cloud, config, model=model, embed_geometry=embed_geometry,
                       debug=debug_digests, threads=ctx.obj['threads'])
    data = bitstream.to_bytes()
    Path(output_path).write_bytes(data)
    _emit_report(rate_report(bitstream).to_dict(), as_json)


@cli.command('decode')
@click.option('--input', 'input_path', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--output', 'output_path', required=True, type=click.Path(dir_okay=False))
@click.option('--geometry', 'geometry_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--model', 'model_path', type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def decode_command(ctx, input_path, output_path, geometry_path, model_path):
    """Decodifica un flujo a PLY."""
    geometry = read_ply_geometry(geometry_path) if geometry_path else None
    model = load_model(model_path)[0] if model_path else None
    cloud = decode(Path(input_path).read_bytes(), geometry=geometry, model=model,
                   threads=ctx.obj['threads'])
    write_ply_file(cloud, output_path)
    click.echo(f"{cloud.num_points} puntos -> {output_path}")


@cli.command('train')
@click.option('--corpus', 'corpus_dir', required=True, type=click.Path(file_okay=False))
@click.option('--out', 'out_path', required=True, type=click.Path(dir_okay=False))
@click.option('--config', 'config_path', type=click.Path(dir_okay=False))
@click.option('--preset', type=click.Choice(['desk', 'object', 'lidar']))
@click.option('--mode', type=click.Choice(['rgb', 'single']), default='rgb')
@click.option('--epochs', type=click.IntRange(min=0), default=None)
@click.option('--lr', type=float, default=None)
@click.option('--seed', type=click.IntRange(min=0), default=None)
@click.option('--checkpoint', 'checkpoint_path', type=click.Path(dir_okay=False), default=None,
              help='Punto de control (por defecto <out>.ckpt)')
@click.option('--resume', is_flag=True, help='Continuar desde el punto de control')
def train_command(corpus_dir, out_path, config_path, preset, mode, epochs, lr, seed,
                  checkpoint_path, resume):
    """Entrena un modelo de entropía sobre un corpus de PLY."""
    config = load_codec_config(config_path, preset, _overrides(seed))
    training = load_training_config(config_path, {'EPOCHS': epochs, 'LR': lr, 'SEED': seed})
    attribute_mode = AttributeMode.RGB if mode == 'rgb' else AttributeMode.SINGLE
    logger.info(f"Entrenamiento: {training.epochs} épocas, lr {training.lr}, semilla {training.seed}")

    clouds = [cloud for _, cloud in CorpusLoader(corpus_dir).load_corpus() if cloud.mode == attribute_mode]
    data = merge_training_data([prepare_training_batches(cloud, config) for cloud in clouds])
    model = create_model(config.model_config(attribute_mode), seed=training.seed)
    if data is None:
        if training.epochs > 0:
            raise InputError(f"El corpus {corpus_dir} no aporta lotes de entrenamiento en modo {mode}")
        logger.warning("⚠️ Sin datos de entrenamiento: se guarda el modelo inicializado")
    else:
        logger.info(f"📊 {data.batch_count} lotes de {len(clouds)} nubes")
        result = train(model, data, training, checkpoint_path=checkpoint_path or f"{out_path}.ckpt",
                       resume=resume)
        for epoch, loss in enumerate(result.epoch_losses, start=1):
            click.echo(f"época {epoch}: {loss:.4f} bits/punto")
    data_bytes = save_model(model, out_path)
    click.echo(f"Modelo guardado: {out_path} (hash {model_hash(data_bytes).hex()})")


@cli.command('analyze')
@click.option('--input', 'input_path', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--ratios', default=','.join(str(r) for r in DEFAULT_RATIOS), show_default=True)
@click.option('--csv', 'csv_path', type=click.Path(dir_okay=False), default=None)
@click.option('--plot', 'plot_path', type=click.Path(dir_okay=False), default=None)
@click.option('--config', 'config_path', type=click.Path(dir_okay=False))
@click.option('--preset', type=click.Choice(['desk', 'object', 'lidar']))
@click.option('--seed', type=click.IntRange(min=0), default=0, show_default=True)
@click.option('--json', 'as_json', is_flag=True)
def analyze_command(input_path, ratios, csv_path, plot_path, config_path, preset, seed, as_json):
    """Densidad NN, curva de muestreo y ocupación de etiquetas."""
    try:
        ratio_values = [float(r) for r in ratios.split(',') if r.strip()]
    except ValueError as e:
        raise InputError(f"--ratios inválido: {ratios}") from e
    cloud = read_ply_file(input_path)
    if cloud.num_points == 0:
        raise InputError("La nube está vacía")
    config = load_codec_config(config_path, preset)
    logger.info(f"Curva de densidad con semilla {seed}")
    curve = sampled_density_curve(cloud.positions, ratio_values, seed=seed)
    lod = build_lod(cloud.positions, config.lod)
    histogram = cloud_label_histogram(cloud.positions, lod, config.dald)

    writer = ReportWriter()
    if csv_path and not writer.save_density_curve(curve, csv_path):
        raise InputError(f"No se pudo escribir {csv_path}")
    if plot_path:
        writer.plot_density_curve(curve, plot_path)

    summary = {
        'points': cloud.num_points,
        'nn': nn_density(cloud.positions),
        'curve': curve.to_dict(orient='records'),
        'label_bins_used': int((histogram > 0).sum()),
        'label_alphabet': config.dald.label_alphabet,
    }
    if as_json:
        click.echo(json.dumps(summary, indent=2))
        return
    click.echo(f"NN: {summary['nn']:.4f}")
    click.echo(curve.to_string(index=False))
    click.echo(f"Etiquetas usadas: {summary['label_bins_used']} de {summary['label_alphabet']}")


@cli.command('report')
@click.option('--input', 'input_path', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--json', 'as_json', is_flag=True)
def report_command(input_path, as_json):
    """Informe de tasa de un flujo existente, sin decodificar."""
    _emit_report(rate_report(Path(input_path).read_bytes()).to_dict(), as_json)


def main(argv=None) -> int:
    """
    Ejecuta la CLI y traduce los errores a códigos de salida.

    Returns:
        int: 0 éxito, 1 error de uso/entrada/configuración, 2 error de integridad
    """
    try:
        cli.main(args=argv, prog_name='dpcc', standalone_mode=False)
    except click.exceptions.Abort:
        return EXIT_INPUT
    except click.ClickException as e:
        e.show()
        return EXIT_INPUT
    except IntegrityError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return EXIT_INTEGRITY
    except (CodecError, OSError) as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return EXIT_INPUT
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
