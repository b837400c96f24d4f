"""
Define a suite a tests for the configuration module.
"""
import pytest
import numpy as np

from spherebraid import ProjPoint, Mobius, RadialProfile, Configuration, Loop
from spherebraid import Conventions
from spherebraid.configuration import ConfigurationError, SamplerStuck, NegligibleSetHit
from spherebraid.configuration import basepoint, sample_configuration
from spherebraid.configuration import short_path, trace_loop, LoopCache
from spherebraid.defaults import CACHE_ENV
from spherebraid.flows import RotationalFlow, HamiltonianFlow
from spherebraid.sphere import antipode, chordal, min_separation


def rotation_flow():
    return RotationalFlow(RadialProfile.bump(0.3, 3.0, height=0.7))


def test_configuration():
    """All the tests...
    """
    x = Configuration([ProjPoint(0), ProjPoint(1), ProjPoint(1j), ProjPoint.infinity()])
    assert x.n == len(x) == 4
    assert x[1] == ProjPoint(1)
    assert x.points[2] == ProjPoint(1j)
    assert not x.in_chart_0
    assert x.__repr__() != ''
    assert x == Configuration(x.h)
    assert x != Configuration.from_chart([0, 1, 1j, 2])
    assert Configuration.from_chart([0, 1, 1j, 2]).in_chart_0

    r = Mobius.random_rotation(0)
    assert x.transformed(r).min_sep == pytest.approx(x.min_sep)

    with pytest.raises(ConfigurationError):
        Configuration.from_chart([0, 1, 1 + 1e-6])
    with pytest.raises(ConfigurationError):
        Configuration([ProjPoint(0)])


def test_basepoint():
    q = basepoint(6)
    assert q.n == 6
    assert q == basepoint(6)
    assert q.min_sep > 0.5


def test_sampler():
    a = sample_configuration(5, 11)
    b = sample_configuration(5, 11)
    assert a == b
    assert a != sample_configuration(5, 12)
    assert a.min_sep >= 1e-4

    with pytest.raises(ConfigurationError):
        sample_configuration(3, 0)
    with pytest.raises(SamplerStuck):
        sample_configuration(4, 0, eps=1.9, max_rejections=10)
    with pytest.raises(ConfigurationError):
        sample_configuration(4, 0, system='affine')


def test_short_paths():
    q = basepoint(4)
    x = sample_configuration(4, 5)
    for system in ('geodesic', 'affine'):
        path = short_path(system, q, x, samples=20)
        assert path.points.shape == (20, 4, 2)
        assert np.allclose(chordal(path.points[0], q.h), 0)
        assert np.allclose(chordal(path.points[-1], x.h), 0)
        assert np.min(min_separation(path.points)) > 0

    with pytest.raises(NegligibleSetHit):
        short_path('geodesic', q, Configuration(antipode(q.h)))

    # Swapping two chart points makes their segments meet halfway.
    q = Configuration.from_chart([0, 1, 1j, -2])
    x = Configuration.from_chart([1, 0, 1j, -2 + 1j])
    with pytest.raises(NegligibleSetHit):
        short_path('affine', q, x)

    with pytest.raises(ConfigurationError):
        short_path('straight', q, x)


def test_trace_loop():
    """The loop starts and ends at the basepoint and follows the flow in
    its middle third.
    """
    flow = rotation_flow()
    q = basepoint(4)
    x = sample_configuration(4, 1, system='geodesic', q=q)
    loop = trace_loop(flow, x, q)
    assert isinstance(loop, Loop)
    assert loop.closed
    assert loop.n == 4
    assert loop.refinable
    assert loop.min_sep > 0
    assert len(loop.samples) == len(loop)

    mid = loop.at(0.5)[0]
    assert np.allclose(chordal(mid, flow.advance(x.h, 0, 0.5)), 0, atol=1e-9)
    assert np.allclose(chordal(loop.at(1 / 3)[0], x.h), 0, atol=1e-9)

    finer = loop.refined([0.1, 0.5501234])
    assert len(finer) == len(loop) + 2
    assert finer.closed

    back = loop.reversed()
    assert np.allclose(back.h[0], loop.h[-1])
    assert np.allclose(chordal(back.at(0.5)[0], mid), 0)

    r = Mobius.random_rotation(2)
    moved = loop.transformed(r)
    assert moved.closed
    assert np.allclose(chordal(moved.h, r(loop.h)), 0)


def test_trace_loop_affine():
    flow = HamiltonianFlow.random(4)
    q = basepoint(4)
    x = sample_configuration(4, 2, system='affine', q=q)
    loop = trace_loop(flow, x, q, system='affine')
    assert loop.closed
    assert loop.path_system == 'affine'
    with pytest.raises(ConfigurationError):
        trace_loop(flow, x, q, system='straight')


def test_loop_checks():
    q = basepoint(4)
    h = np.stack([q.h, q.h])
    with pytest.raises(ConfigurationError):
        Loop([0.5, 0.1], h, q, 'geodesic')
    loop = Loop([0, 1], h, q, 'geodesic')
    with pytest.raises(ConfigurationError):
        loop.at(0.5)


def test_cache(tmp_path, monkeypatch):
    """A cached trajectory gives the same loop.
    """
    monkeypatch.delenv(CACHE_ENV, raising=False)
    assert LoopCache.from_env() is None
    with pytest.raises(ConfigurationError):
        LoopCache()

    cache = LoopCache(str(tmp_path))
    flow = rotation_flow()
    q = basepoint(4)
    x = sample_configuration(4, 3)
    cold = trace_loop(flow, x, q, cache=cache, seed=3)
    warm = trace_loop(flow, x, q, cache=cache, seed=3)
    assert cache.misses == 1
    assert cache.hits == 1
    assert np.array_equal(cold.h, warm.h)
    assert np.array_equal(cold.times, warm.times)

    monkeypatch.setenv(CACHE_ENV, str(tmp_path / 'other'))
    assert isinstance(LoopCache.from_env(), LoopCache)


def test_cache_conventions(tmp_path):
    """Entries written under other conventions are not reused.
    """
    flow = rotation_flow()
    key = LoopCache.key(flow, 3, 4, 1e-3, 'geodesic')
    with Conventions({'eps_conf': 2e-4}).applied():
        assert LoopCache.key(flow, 3, 4, 1e-3, 'geodesic') != key
    assert LoopCache.key(flow, 3, 4, 1e-3, 'geodesic') == key

    cache = LoopCache(str(tmp_path))
    with Conventions({'eps_conf': 2e-4}).applied():
        cache.store(key, flow_times=np.zeros(2))
    with pytest.warns(UserWarning):
        assert cache.load(key) is None
    cache.store(key, flow_times=np.zeros(2))
    assert np.array_equal(cache.load(key)['flow_times'], np.zeros(2))
