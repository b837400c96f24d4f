"""
Define a suite a tests for the sphere module.
"""
import pytest
import numpy as np
from scipy.integrate import quad

from spherebraid import ProjPoint, TangentVector, Mobius
from spherebraid.sphere import SphereError, DegenerateConfiguration, AntipodalPair
from spherebraid.sphere import from_chart, to_chart, to_vectors, from_vectors
from spherebraid.sphere import chordal, great_circle, min_separation
from spherebraid.sphere import random_points, cross_ratio, cross_ratio_array
from spherebraid.sphere import moduli_projection, moduli_array
from spherebraid.sphere import disk_measure, height, radius
from spherebraid.sphere import geodesic_path, chart_measure_density


def test_projpoint():
    """Charts, antipodes and distances.
    """
    p = ProjPoint.from_chart(2 + 1j)
    assert p.chart_0 == pytest.approx(2 + 1j)
    assert p.chart_inf == pytest.approx(1 / (2 + 1j))
    assert p.__repr__() != ''

    zero, inf = ProjPoint(0), ProjPoint.infinity()
    assert zero.antipode() == inf
    assert zero.swap() == inf
    assert zero.chordal(inf) == pytest.approx(2)
    assert zero.distance(inf) == pytest.approx(np.pi)
    assert np.allclose(zero.vector, [0, 0, 1])
    assert ProjPoint(3j, 3) == ProjPoint(1j)
    assert ProjPoint.from_chart(np.inf) == inf

    with pytest.raises(SphereError):
        inf.chart_0
    with pytest.raises(SphereError):
        ProjPoint(0, 0)


def test_vectors():
    h = random_points(0, 50)
    v = to_vectors(h)
    assert np.allclose(np.linalg.norm(v, axis=-1), 1)
    assert np.allclose(chordal(from_vectors(v), h), 0, atol=1e-12)
    assert np.allclose(chordal(h[:-1], h[1:]), np.linalg.norm(v[:-1] - v[1:], axis=-1))

    zeta = np.array([0, 1, -2j, np.inf])
    back = to_chart(from_chart(zeta))
    assert np.allclose(back[:3], zeta[:3])
    assert np.isinf(back[3])

    east = ProjPoint.from_vector([1, 0, 0])
    north = ProjPoint.from_vector([0, 0, 1])
    assert east.distance(north) == pytest.approx(np.pi / 2)


def test_random_points():
    """Uniform points average to the centre of the ball.
    """
    h = random_points(1, (100, 100))
    assert h.shape == (100, 100, 2)
    assert np.linalg.norm(to_vectors(h).reshape(-1, 3).mean(axis=0)) < 0.05
    assert np.allclose(random_points(2, 5), random_points(2, 5))


def test_cross_ratio():
    u = 0.3 - 1.2j
    points = [ProjPoint.infinity(), ProjPoint(0), ProjPoint(1), ProjPoint(u)]
    assert cross_ratio(*points) == pytest.approx(u)

    with pytest.raises(DegenerateConfiguration):
        cross_ratio(points[0], points[1], points[1], points[3])


def test_cross_ratio_identities():
    """Both identities behind the logarithmic forms, on random tuples.
    """
    h = random_points(3, (2000, 5))
    p = [h[:, k] for k in range(5)]
    u = cross_ratio_array(p[0], p[1], p[2], p[3])
    v = cross_ratio_array(p[0], p[1], p[2], p[4])
    assert np.allclose(u - 1, -cross_ratio_array(p[0], p[2], p[1], p[3]), rtol=1e-9, atol=1e-10)

    def l(a, b):
        return p[a][..., 0] * p[b][..., 1] - p[b][..., 0] * p[a][..., 1]

    rhs = l(0, 2) * l(0, 1) * l(4, 3) / (l(1, 2) * l(0, 3) * l(0, 4))
    assert np.allclose(u - v, rhs, rtol=1e-9, atol=1e-10)


def test_mobius():
    r = Mobius.rotation(np.pi / 2)
    assert r(ProjPoint(1)) == ProjPoint(1j)
    assert r.is_rotation
    assert Mobius.random_rotation(4).is_rotation
    assert not Mobius([[2, 0], [0, 1]]).is_rotation
    assert Mobius.rotation(np.pi, 'x')(ProjPoint(0)) == ProjPoint.infinity()

    m = Mobius.random(5)
    p = ProjPoint(0.4 + 0.1j)
    assert (m.inverse() @ m)(p) == p
    assert np.allclose((m @ Mobius.identity()).matrix, m.matrix)

    with pytest.raises(SphereError):
        Mobius([[1, 2], [2, 4]])
    with pytest.raises(SphereError):
        Mobius.rotation(1.0, 'w')


def test_mobius_invariance():
    """The moduli projection does not see Mobius maps; rotations keep
    distances.
    """
    h = random_points(6, (500, 6))
    m = Mobius.random(7)
    a, b = moduli_array(h), moduli_array(m(h))
    assert np.allclose(a, b, rtol=1e-8, atol=1e-8)

    r = Mobius.random_rotation(8)
    assert np.allclose(chordal(h[:, 0], h[:, 1]), chordal(r(h[:, 0]), r(h[:, 1])))


def test_moduli_projection():
    x = [ProjPoint(z) for z in (0, 1, 2j, -1, 3 + 1j)]
    coords = moduli_projection(x)
    assert len(coords) == 2
    h = np.array([p.h for p in x])
    assert np.allclose(coords, moduli_array(h))
    with pytest.raises(SphereError):
        moduli_projection(x[:3])


def test_separation():
    h = from_chart(np.array([0, 1, np.inf]))
    assert min_separation(h) == pytest.approx(chordal(h[0], h[1]))


def test_measure():
    """Total mass one, half of it in the unit disk.
    """
    assert disk_measure(1) == pytest.approx(0.5)
    assert disk_measure(np.inf) == 1
    assert height(1) == pytest.approx(0)
    assert height(0) == 1
    r = np.array([0.1, 1, 7])
    assert np.allclose(radius(height(r)), r)

    total, _ = quad(lambda s: 2 * np.pi * s * chart_measure_density(s), 0, np.inf)
    assert total == pytest.approx(1)


def test_tangent_vector():
    base = ProjPoint(1 + 1j)
    t = TangentVector(base, 3j)
    assert t.spherical_norm == pytest.approx(1)
    assert t.speed == pytest.approx(2)
    other = t.in_chart('inf')
    assert other.spherical_norm == pytest.approx(t.spherical_norm)
    assert other.in_chart('0').v == pytest.approx(t.v)

    h, hdot = t.lift()
    assert TangentVector.from_lift(h, hdot).spherical_norm == pytest.approx(1)
    with pytest.raises(SphereError):
        TangentVector(base, 1, chart='2')


def test_geodesic_path():
    arc = geodesic_path(ProjPoint(0), ProjPoint(1), 11)
    assert arc.length == pytest.approx(np.pi / 2)
    assert arc.points.shape == (11, 2)
    steps = great_circle(arc.points[:-1], arc.points[1:])
    assert np.allclose(steps, np.pi / 20)

    with pytest.raises(AntipodalPair):
        geodesic_path(ProjPoint(0), ProjPoint.infinity(), 5)
