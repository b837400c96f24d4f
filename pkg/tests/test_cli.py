"""
Define a suite a tests for the command line interface.
"""
import csv
import json

import numpy as np
import pytest

from spherebraid.cli import ExperimentManifest, CLIError
from spherebraid.cli import run, write_records, main
from spherebraid.cli import coarea_excess, held_out_envelope
from spherebraid.cli import VALIDATION_EXIT
from spherebraid.defaults import CACHE_ENV, CONVENTIONS
from spherebraid.flows import HamiltonianFlow, RadialProfile, RotationalFlow

HEIGHT = {'height_polynomial': [0, 1]}


@pytest.fixture(autouse=True)
def no_cache(monkeypatch):
    monkeypatch.delenv(CACHE_ENV, raising=False)


def test_manifest_validation():
    """All the ways a manifest can be rejected.
    """
    with pytest.raises(CLIError):
        ExperimentManifest('bake')
    with pytest.raises(CLIError):
        ExperimentManifest('estimate', invariant='writhe')
    with pytest.raises(CLIError):
        ExperimentManifest('estimate', format='xml')
    with pytest.raises(CLIError):
        ExperimentManifest('estimate', n=1)
    with pytest.raises(CLIError):
        ExperimentManifest('estimate', samples=0)
    with pytest.raises(CLIError):
        ExperimentManifest('estimate', seed=-1)
    with pytest.raises(CLIError):
        ExperimentManifest.from_dict({'command': 'estimate', 'colour': 'red'})
    with pytest.raises(CLIError):
        ExperimentManifest.from_dict({'flow': HEIGHT})


def test_manifest_file(tmp_path):
    flow = RotationalFlow(RadialProfile.bump(0.5, 1.5))
    (tmp_path / 'flow.json').write_text(flow.to_json())
    d = {'command': 'estimate', 'flow': 'flow.json', 'samples': 10, 'seed': 4}
    (tmp_path / 'manifest.json').write_text(json.dumps(d))

    manifest = ExperimentManifest.from_json_file(str(tmp_path / 'manifest.json'))
    assert manifest.flow == str(tmp_path / 'flow.json')
    assert manifest.load_flow() == flow
    assert manifest.as_dict()['samples'] == 10

    (tmp_path / 'bad.json').write_text("{command: ")
    with pytest.raises(CLIError):
        ExperimentManifest.from_json_file(str(tmp_path / 'bad.json'))


def test_manifest_flows():
    m = ExperimentManifest('estimate', flow={'random': 3})
    assert isinstance(m.load_flow(), HamiltonianFlow)

    m = ExperimentManifest('closed-form', flow=HEIGHT)
    assert m.height_function(0.5) == pytest.approx(0.5)
    assert isinstance(m.load_flow(), RotationalFlow)

    m = ExperimentManifest('braid', flow={'example': 'two-point-orbit'})
    assert not m.has_flow
    with pytest.raises(CLIError):
        m.load_flow()
    with pytest.raises(CLIError):
        ExperimentManifest('estimate').load_flow()


def test_digest():
    a = ExperimentManifest('closed-form', flow=HEIGHT, output='a.json', workers=1)
    b = ExperimentManifest('closed-form', flow=HEIGHT, output='b.json', workers=4)
    c = ExperimentManifest('closed-form', flow=HEIGHT, seed=1)
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()


def test_closed_form(capsys):
    manifest = ExperimentManifest('closed-form', flow=HEIGHT, n=4)
    code, records = run(manifest)
    assert code == 0
    assert len(records) == 1
    assert records[0]['mean'] == pytest.approx(-4 / 15)
    assert records[0]['twist_decomposition'] == pytest.approx(-4 / 15)
    assert records[0]['conventions']['samples'] > 0
    assert "Sign_4: -0.266667" in capsys.readouterr().out

    manifest = ExperimentManifest('closed-form', flow=HEIGHT, options={'ns': [2, 3], 't': 2})
    code, records = run(manifest)
    assert [r['mean'] for r in records] == pytest.approx([-8 / 15, -8 / 7])

    manifest = ExperimentManifest('closed-form', flow=HEIGHT, invariant='lk', n=6)
    code, records = run(manifest)
    assert code == 0
    assert records[0]['mean'] == pytest.approx(0, abs=1e-8)


def test_run_errors():
    code, records = run(ExperimentManifest('estimate'))
    assert code == VALIDATION_EXIT
    assert records == []

    code, _ = run(ExperimentManifest('closed-form', flow={'random': 1}))
    assert code == VALIDATION_EXIT

    code, _ = run(ExperimentManifest('braid', flow={'example': 'three-body'}))
    assert code == VALIDATION_EXIT


def test_result_cache(tmp_path, monkeypatch):
    monkeypatch.setenv(CACHE_ENV, str(tmp_path))
    manifest = ExperimentManifest('closed-form', flow=HEIGHT)
    _, first = run(manifest)
    assert len(list(tmp_path.glob('records-*.json'))) == 1
    _, second = run(manifest)
    assert second[0]['created'] == first[0]['created']


def test_conventions_scope(tmp_path):
    """A conventions file applies to its run only.
    """
    default = CONVENTIONS['samples']
    fname = tmp_path / 'conventions.json'
    fname.write_text(json.dumps({'samples': 123}))
    code, records = run(ExperimentManifest('closed-form', flow=HEIGHT, conventions=str(fname)))
    assert code == 0
    assert records[0]['conventions']['samples'] == 123
    assert CONVENTIONS['samples'] == default

    code, records = run(ExperimentManifest('closed-form', flow=HEIGHT, conventions={'samples': 7}))
    assert records[0]['conventions']['samples'] == 7
    assert CONVENTIONS['samples'] == default

    code, _ = run(ExperimentManifest('closed-form', flow=HEIGHT, conventions={'colour': 1}))
    assert code == VALIDATION_EXIT

    fname.write_text("[1, 2]")
    code, _ = run(ExperimentManifest('closed-form', flow=HEIGHT, conventions=str(fname)))
    assert code == VALIDATION_EXIT


def test_result_cache_conventions(tmp_path, monkeypatch):
    """Editing the conventions file misses the result cache.
    """
    cache = tmp_path / 'cache'
    monkeypatch.setenv(CACHE_ENV, str(cache))
    fname = tmp_path / 'conventions.json'
    fname.write_text(json.dumps({'samples': 123}))
    manifest = ExperimentManifest('closed-form', flow=HEIGHT, conventions=str(fname))
    before = manifest.digest()
    _, first = run(manifest)

    fname.write_text(json.dumps({'samples': 456}))
    assert manifest.digest() != before
    _, second = run(manifest)
    assert first[0]['conventions']['samples'] == 123
    assert second[0]['conventions']['samples'] == 456
    assert len(list(cache.glob('records-*.json'))) == 2


def test_braid_example(tmp_path, capsys):
    out = tmp_path / 'braid.json'
    code = main(['braid', '--example', 'two-point-orbit', '--out', str(out)])
    assert code == 0
    assert "2: 1 1" in capsys.readouterr().out
    record = json.loads(out.read_text().splitlines()[0])
    assert record['word'] == "2: 1 1"
    assert record['lk'] == 2
    assert record['flow'] == 'two-point-orbit'


def test_braid_flow_manifest(tmp_path, capsys):
    """The braid of one sampled configuration under a rotation flow.
    """
    flow = RotationalFlow(RadialProfile.bump(0.2, 2.0, height=1.5))
    (tmp_path / 'flow.json').write_text(flow.to_json())
    d = {'command': 'braid', 'flow': 'flow.json', 'n': 5, 'seed': 2}
    (tmp_path / 'manifest.json').write_text(json.dumps(d))
    out = tmp_path / 'braid.json'

    code = main(['braid', '--manifest', str(tmp_path / 'manifest.json'), '--out', str(out)])
    assert code == 0
    record = json.loads(out.read_text().splitlines()[0])
    assert record['word'].startswith("4:")
    assert record['word'] in capsys.readouterr().out
    assert record['flow'] == 'flow.json'


def test_write_records(tmp_path):
    manifest = ExperimentManifest('closed-form', flow=HEIGHT, options={'ns': [2, 3]})
    _, records = run(manifest)

    fname = tmp_path / 'out.json'
    write_records(records, str(fname))
    write_records(records, str(fname))
    assert len(fname.read_text().splitlines()) == 4

    fname = tmp_path / 'out.csv'
    write_records(records, str(fname), format='csv')
    with open(fname) as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 2
    assert len(rows[0]['conventions']) == 16
    assert float(rows[1]['half_points']) == 3


def test_main_validation(tmp_path):
    assert main(['estimate', '--manifest', str(tmp_path / 'missing.json')]) == VALIDATION_EXIT


def test_verify_subset(capsys):
    manifest = ExperimentManifest('verify', quick=True, options={'criteria': [8]})
    code, records = run(manifest)
    assert code == 0
    assert len(records) == 1
    assert records[0]['passed']
    assert "PASS" in capsys.readouterr().out


def test_coarea_excess():
    winding = np.array([[0, 10], [10, 0]])
    counts = np.array([[5, 10.1], [10.1, 5]])
    excess, relative = coarea_excess(counts, winding, 100)
    assert excess == pytest.approx(0.1 - 0.24)
    assert relative == pytest.approx(0.01)

    excess, _ = coarea_excess(np.array([[0, 10.5], [10.5, 0]]), winding, 100)
    assert excess > 0


def test_held_out_envelope():
    """The envelope is fitted early and must hold on the later points.
    """
    lengths = np.arange(1, 7, dtype=float)
    A, B, margin = held_out_envelope(lengths, 2 * lengths + 1, np.zeros(6))
    assert A == pytest.approx(2)
    assert B == pytest.approx(1)
    assert margin == pytest.approx(0, abs=1e-9)

    _, _, margin = held_out_envelope(lengths, lengths**2, np.zeros(6))
    assert margin < 0

    # Noise on the held-out points is forgiven up to three standard errors.
    _, _, margin = held_out_envelope(lengths, 2 * lengths + 1 + [0, 0, 0, 0.2, 0, 0], np.full(6, 0.1))
    assert margin == pytest.approx(0.1)

    with pytest.raises(CLIError):
        held_out_envelope(lengths[:3], lengths[:3], np.zeros(3))
