import json

import numpy as np
import pytest
from plyfile import PlyData, PlyElement

from cli.app import EXIT_INPUT, EXIT_INTEGRITY, EXIT_OK, main
from core.cloud_io import read_ply_file, write_ply_file
from core.synthetic import gradient_cloud


@pytest.fixture
def workspace(tmp_path):
    cloud = gradient_cloud(count=400, extent=16, seed=8)
    write_ply_file(cloud, tmp_path / 'in.ply')
    (tmp_path / 'small.env').write_text(
        'LOD_T=3\nLOD_L=6\nPARTITION_BATCH_N=32\nPARTITION_BATCHES_PER_BLOCK=2\n'
        'PARTITION_SMOOTH_NEIGHBORS=8\nEPOCHS=1\nBATCH_COUNT=4\n')
    return tmp_path, cloud


def test_encode_decode_baseline(workspace, capsys):
    path, cloud = workspace
    code = main(['encode', '--input', str(path / 'in.ply'), '--output', str(path / 'out.bin'),
                 '--baseline', '--config', str(path / 'small.env'), '--json'])
    assert code == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary['points'] == cloud.num_points

    assert main(['report', '--input', str(path / 'out.bin')]) == EXIT_OK
    assert 'bpp' in capsys.readouterr().out

    code = main(['decode', '--input', str(path / 'out.bin'), '--output', str(path / 'dec.ply'),
                 '--geometry', str(path / 'in.ply')])
    assert code == EXIT_OK
    assert read_ply_file(path / 'dec.ply') == cloud


def test_decode_with_geometry_only_file(workspace):
    path, cloud = workspace
    assert main(['encode', '--input', str(path / 'in.ply'), '--output', str(path / 'out.bin'),
                 '--baseline', '--config', str(path / 'small.env')]) == EXIT_OK
    positions = cloud.positions[::-1]
    vertex = np.zeros(len(positions), dtype=[('x', 'i4'), ('y', 'i4'), ('z', 'i4')])
    for i, axis in enumerate('xyz'):
        vertex[axis] = positions[:, i]
    PlyData([PlyElement.describe(vertex, 'vertex')]).write(str(path / 'geom.ply'))

    assert main(['decode', '--input', str(path / 'out.bin'), '--output', str(path / 'dec.ply'),
                 '--geometry', str(path / 'geom.ply')]) == EXIT_OK
    assert read_ply_file(path / 'dec.ply') == cloud


def test_train_then_learned_roundtrip(workspace, capsys):
    path, cloud = workspace
    corpus = path / 'corpus'
    corpus.mkdir()
    write_ply_file(cloud, corpus / 'one.ply')
    model = path / 'model.dald'
    assert main(['train', '--corpus', str(corpus), '--out', str(model), '--config', str(path / 'small.env'),
                 '--epochs', '1']) == EXIT_OK
    out = capsys.readouterr().out
    assert 'época 1' in out and 'Modelo guardado' in out
    assert (path / 'model.dald.ckpt').exists()

    assert main(['encode', '--input', str(path / 'in.ply'), '--output', str(path / 'out.bin'),
                 '--model', str(model), '--config', str(path / 'small.env'), '--embed-geometry',
                 '--debug-digests']) == EXIT_OK
    assert main(['decode', '--input', str(path / 'out.bin'), '--output', str(path / 'dec.ply'),
                 '--model', str(model)]) == EXIT_OK
    assert read_ply_file(path / 'dec.ply') == cloud

    # Without the model the stream cannot be decoded
    assert main(['decode', '--input', str(path / 'out.bin'), '--output', str(path / 'x.ply')]) == EXIT_INTEGRITY


def test_exit_codes(workspace):
    path, _ = workspace
    assert main(['encode', '--input', str(path / 'in.ply'), '--output', str(path / 'o.bin')]) == EXIT_INPUT
    assert main(['encode', '--input', str(path / 'missing.ply'), '--output', str(path / 'o.bin'),
                 '--baseline']) == EXIT_INPUT
    assert main(['encode', '--input', str(path / 'in.ply'), '--output', str(path / 'o.bin'),
                 '--baseline', '--preset', 'nope']) == EXIT_INPUT
    assert main(['bogus']) == EXIT_INPUT

    assert main(['encode', '--input', str(path / 'in.ply'), '--output', str(path / 'o.bin'), '--baseline',
                 '--config', str(path / 'small.env')]) == EXIT_OK
    data = bytearray((path / 'o.bin').read_bytes())
    data[-1] ^= 0xFF
    (path / 'bad.bin').write_bytes(bytes(data))
    assert main(['decode', '--input', str(path / 'bad.bin'), '--output', str(path / 'x.ply'),
                 '--geometry', str(path / 'in.ply')]) == EXIT_INTEGRITY
    assert main(['decode', '--input', str(path / 'o.bin'), '--output', str(path / 'x.ply')]) == EXIT_INPUT


def test_analyze(workspace, capsys):
    path, _ = workspace
    code = main(['analyze', '--input', str(path / 'in.ply'), '--ratios', '1,0.5', '--csv',
                 str(path / 'curve.csv'), '--config', str(path / 'small.env'), '--json'])
    assert code == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert [row['ratio'] for row in summary['curve']] == [1.0, 0.5]
    assert 0 < summary['label_bins_used'] <= summary['label_alphabet']
    assert (path / 'curve.csv').exists()
    assert main(['analyze', '--input', str(path / 'in.ply'), '--ratios', 'x']) == EXIT_INPUT
