"""
Geometry of the two-sphere as the complex projective line: homogeneous
coordinates, the two affine charts, the round metric and measure,
geodesics, cross-ratios and the moduli projection.

Points are stored as homogeneous pairs ``(z, w)`` normalized to unit length
with the first nonzero coordinate real and nonnegative. The chart at 0 is
``zeta = z / w`` and the point at infinity is ``[1, 0]``. Most functions
here also accept arrays of shape ``(..., 2)`` so that whole configurations
and trajectories can be processed at once.

:copyright: 2026 The spherebraid authors
:license: Apache 2.0
"""
from collections import namedtuple
from itertools import combinations

import numpy as np

from .defaults import CONVENTIONS
from .utils import rng as make_rng


class SphereError(Exception):
    """
    Generic error class.
    """
    pass


class DegenerateConfiguration(SphereError):
    pass


class AntipodalPair(SphereError):
    pass


Arc = namedtuple('Arc', ['s', 'points', 'length'])


def normalize(h):
    """
    Canonical representatives of an array of homogeneous pairs.

    Args:
        h (ndarray): Complex array of shape (..., 2).

    Returns:
        ndarray. Same shape, unit norm, phase fixed.
    """
    h = np.asarray(h, dtype=complex)
    norm = np.sqrt(np.sum(np.abs(h)**2, axis=-1, keepdims=True))
    if np.any(norm == 0):
        raise SphereError("The pair (0, 0) is not a point of the sphere.")
    h = h / norm
    lead = np.where(np.abs(h[..., 0]) > 0, h[..., 0], h[..., 1])
    phase = lead / np.abs(lead)
    return h * np.conj(phase)[..., None]


def from_chart(zeta):
    """
    Homogeneous coordinates of chart-0 values; ``inf`` maps to ``[1, 0]``.
    """
    zeta = np.asarray(zeta, dtype=complex)
    finite = np.isfinite(zeta)
    z = np.where(finite, zeta, 1)
    w = np.where(finite, 1, 0)
    return normalize(np.stack([z, w], axis=-1))


def to_chart(h):
    """
    Chart-0 values of homogeneous pairs; ``[1, 0]`` maps to ``inf``.
    """
    h = np.asarray(h, dtype=complex)
    w = h[..., 1]
    safe = np.where(w == 0, 1, w)
    return np.where(w == 0, np.inf, h[..., 0] / safe)


def to_vectors(h):
    """
    Unit vectors of R^3 for homogeneous pairs. The chart-0 origin is the
    north pole (0, 0, 1).
    """
    h = np.asarray(h, dtype=complex)
    z, w = h[..., 0], h[..., 1]
    n2 = np.abs(z)**2 + np.abs(w)**2
    xy = 2 * z * np.conj(w) / n2
    height = (np.abs(w)**2 - np.abs(z)**2) / n2
    return np.stack([xy.real, xy.imag, height], axis=-1)


def from_vectors(v):
    """
    Homogeneous pairs for unit vectors of R^3.
    """
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v, axis=-1, keepdims=True)
    x, y, height = v[..., 0], v[..., 1], v[..., 2]
    north = height >= 0
    # Two representatives of the same point, each well conditioned on one
    # hemisphere.
    z = np.where(north, x + 1j * y, 1 - height)
    w = np.where(north, 1 + height, x - 1j * y)
    return normalize(np.stack([z, w], axis=-1))


def antipode(h):
    """
    Antipodal points: ``[z, w] -> [-conj(w), conj(z)]``.
    """
    h = np.asarray(h, dtype=complex)
    return normalize(np.stack([-np.conj(h[..., 1]), np.conj(h[..., 0])], axis=-1))


def bracket(ha, hb):
    """
    The determinant ``z_a w_b - z_b w_a``.
    """
    return ha[..., 0] * hb[..., 1] - hb[..., 0] * ha[..., 1]


def chordal(ha, hb):
    """
    Chordal (straight-line) distance in R^3 between points of the unit
    sphere. Antipodal points are at distance 2.
    """
    ha, hb = normalize(ha), normalize(hb)
    return 2 * np.abs(bracket(ha, hb))


def great_circle(ha, hb):
    """
    Round distance on the unit sphere.
    """
    return 2 * np.arcsin(np.clip(chordal(ha, hb) / 2, 0, 1))


def min_separation(h):
    """
    Smallest pairwise chordal distance in a tuple of points.

    Args:
        h (ndarray): Shape (..., n, 2).

    Returns:
        ndarray. Shape (...).
    """
    h = normalize(h)
    n = h.shape[-2]
    i, j = np.triu_indices(n, k=1)
    d = 2 * np.abs(bracket(h[..., i, :], h[..., j, :]))
    return np.min(d, axis=-1)


def random_points(seed, size):
    """
    Points distributed by the normalized round measure.

    Args:
        seed: Anything ``utils.rng`` accepts.
        size (int or tuple): Output shape, without the trailing 2.
    """
    g = make_rng(seed)
    size = (size,) if np.isscalar(size) else tuple(size)
    v = g.standard_normal(size + (3,))
    return from_vectors(v)


def cross_ratio_array(h1, h2, h3, h4):
    """
    Vectorized cross-ratio without any checks.
    """
    return (bracket(h1, h3) * bracket(h2, h4)) / (bracket(h2, h3) * bracket(h1, h4))


def disk_measure(r):
    """
    Normalized measure of the chart disk ``|zeta| <= r``.
    """
    r = np.asarray(r, dtype=float)
    with np.errstate(invalid='ignore'):
        return np.where(np.isinf(r), 1.0, r**2 / (1 + r**2))


def height(r):
    """
    The height ``u = 1 - 2 a(r)`` of the circle ``|zeta| = r``; it is also
    the third coordinate of the point in R^3.
    """
    return 1 - 2 * disk_measure(r)


def radius(u):
    """
    Inverse of ``height``.
    """
    u = np.asarray(u, dtype=float)
    with np.errstate(divide='ignore'):
        return np.sqrt(np.where(u > -1, (1 - u) / np.where(u > -1, 1 + u, 1), np.inf))


def spherical_norm(h, hdot):
    """
    Norm of a tangent vector given by a homogeneous lift: for ``h = (zeta, 1)``
    and ``hdot = (v, 0)`` this is ``|v| / (1 + |zeta|^2)``.
    """
    h = np.asarray(h, dtype=complex)
    hdot = np.asarray(hdot, dtype=complex)
    n2 = np.sum(np.abs(h)**2, axis=-1)
    d2 = np.sum(np.abs(hdot)**2, axis=-1)
    inner = np.sum(np.conj(h) * hdot, axis=-1)
    return np.sqrt(np.maximum(d2 * n2 - np.abs(inner)**2, 0)) / n2


def chart_velocity(h, hdot, at_infinity):
    """
    Velocity in chart 0 (or in the chart at infinity where ``at_infinity``
    is true) of the tangent lift ``(h, hdot)``.
    """
    z, w = h[..., 0], h[..., 1]
    zd, wd = hdot[..., 0], hdot[..., 1]
    with np.errstate(divide='ignore', invalid='ignore'):
        v0 = (zd * w - z * wd) / w**2
        vinf = (wd * z - w * zd) / z**2
    return np.where(at_infinity, vinf, v0)


class ProjPoint:
    """
    A point of the complex projective line in canonical homogeneous
    coordinates.

    Args:
        z (complex): First homogeneous coordinate.
        w (complex): Second homogeneous coordinate. Default 1, so that
            ``ProjPoint(zeta)`` is the chart-0 point ``zeta``.
    """
    def __init__(self, z, w=1):
        self._h = normalize(np.array([z, w], dtype=complex))

    def __repr__(self):
        return "ProjPoint({:.6g}, {:.6g})".format(self.z, self.w)

    def __eq__(self, other):
        if not isinstance(other, ProjPoint):
            return False
        return self.isclose(other)

    def __hash__(self):
        return hash(tuple(np.round(self._h, 9)))

    @property
    def z(self):
        return complex(self._h[0])

    @property
    def w(self):
        return complex(self._h[1])

    @property
    def h(self):
        """
        The homogeneous pair as a (read-only) array.
        """
        h = self._h.copy()
        h.flags.writeable = False
        return h

    @classmethod
    def infinity(cls):
        return cls(1, 0)

    @classmethod
    def from_chart(cls, zeta):
        """
        The point with chart-0 coordinate ``zeta``; ``inf`` is allowed.
        """
        z, w = from_chart(zeta)
        return cls(z, w)

    @classmethod
    def from_array(cls, h):
        return cls(h[0], h[1])

    @classmethod
    def from_vector(cls, v):
        z, w = from_vectors(v)
        return cls(z, w)

    @property
    def chart_0(self):
        """
        The coordinate ``z / w``; defined away from infinity.
        """
        if abs(self.w) == 0:
            raise SphereError("chart_0 is not defined at infinity.")
        return self.z / self.w

    @property
    def chart_inf(self):
        """
        The coordinate ``w / z``; defined away from 0.
        """
        if abs(self.z) == 0:
            raise SphereError("chart_inf is not defined at 0.")
        return self.w / self.z

    @property
    def vector(self):
        return to_vectors(self._h)

    def antipode(self):
        z, w = antipode(self._h)
        return ProjPoint(z, w)

    def swap(self):
        """
        The isometry ``[z, w] -> [w, z]`` exchanging the two charts.
        """
        return ProjPoint(self.w, self.z)

    def chordal(self, other):
        return float(chordal(self._h, other._h))

    def distance(self, other):
        return float(great_circle(self._h, other._h))

    def isclose(self, other, tol=None):
        if tol is None:
            tol = CONVENTIONS['eps_pt']
        return self.chordal(other) < tol


class TangentVector:
    """
    A chart velocity at a point.

    Args:
        base (ProjPoint): The base point.
        v (complex): The velocity in the given chart, per unit time.
        chart (str): Either '0' or 'inf'.
    """
    def __init__(self, base, v, chart='0'):
        if chart not in ('0', 'inf'):
            raise SphereError("chart must be '0' or 'inf'.")
        self.base = base
        self.v = complex(v)
        self.chart = chart
        if chart == '0':
            self.zeta = base.chart_0
        else:
            self.zeta = base.chart_inf

    def __repr__(self):
        return "TangentVector({}, v={:.6g}, chart='{}')".format(self.base, self.v, self.chart)

    @property
    def spherical_norm(self):
        """
        ``|v| / (1 + |zeta|^2)``, the same in both charts.
        """
        return abs(self.v) / (1 + abs(self.zeta)**2)

    @property
    def speed(self):
        """
        Speed with respect to the round unit sphere.
        """
        return CONVENTIONS['metric_factor'] * self.spherical_norm

    def lift(self):
        """
        Homogeneous lift ``(h, hdot)`` of the vector.
        """
        if self.chart == '0':
            return np.array([self.zeta, 1]), np.array([self.v, 0])
        return np.array([1, self.zeta]), np.array([0, self.v])

    def in_chart(self, chart):
        """
        The same vector expressed in another chart.
        """
        if chart == self.chart:
            return self
        h, hdot = self.lift()
        v = chart_velocity(h, hdot, chart == 'inf')
        return TangentVector(self.base, complex(v), chart)

    @classmethod
    def from_lift(cls, h, hdot):
        """
        Build from a homogeneous lift, using the hemisphere chart of the base.
        """
        h = np.asarray(h, dtype=complex)
        at_inf = abs(h[0]) > abs(h[1])
        v = chart_velocity(h, np.asarray(hdot, dtype=complex), at_inf)
        return cls(ProjPoint(h[0], h[1]), complex(v), 'inf' if at_inf else '0')


class Mobius:
    """
    A fractional-linear map ``zeta -> (a zeta + b) / (c zeta + d)`` acting on
    homogeneous coordinates by the matrix ``[[a, b], [c, d]]``.
    """
    def __init__(self, matrix, normalize=True):
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.shape != (2, 2):
            raise SphereError("A Mobius map needs a 2x2 matrix.")
        det = np.linalg.det(matrix)
        if abs(det) < 1e-12:
            raise SphereError("Singular Mobius matrix.")
        self.matrix = matrix / np.sqrt(det) if normalize else matrix

    def __repr__(self):
        return "Mobius({})".format(self.matrix.tolist())

    def __call__(self, x):
        """
        Apply to a ProjPoint or to an array of homogeneous pairs.
        """
        if isinstance(x, ProjPoint):
            z, w = self.matrix @ x.h
            return ProjPoint(z, w)
        x = np.asarray(x, dtype=complex)
        return normalize(x @ self.matrix.T)

    def push(self, hdot):
        """
        Apply the linear part to homogeneous tangent lifts.
        """
        return np.asarray(hdot, dtype=complex) @ self.matrix.T

    def __matmul__(self, other):
        return Mobius(self.matrix @ other.matrix)

    def inverse(self):
        return Mobius(np.linalg.inv(self.matrix))

    @property
    def is_rotation(self):
        """
        True for the rigid rotations, i.e. unitary matrices.
        """
        m = self.matrix
        return np.allclose(m @ m.conj().T, np.eye(2), atol=1e-10)

    @classmethod
    def identity(cls):
        return cls(np.eye(2))

    @classmethod
    def random(cls, seed):
        g = make_rng(seed)
        return cls(g.standard_normal((2, 2)) + 1j * g.standard_normal((2, 2)))

    @classmethod
    def random_rotation(cls, seed):
        g = make_rng(seed)
        q = g.standard_normal(4)
        q /= np.linalg.norm(q)
        a, b = q[0] + 1j * q[1], q[2] + 1j * q[3]
        return cls([[a, b], [-np.conj(b), np.conj(a)]])

    @classmethod
    def rotation(cls, angle, axis='z'):
        """
        Rotation by ``angle`` (radians) about a coordinate axis of R^3.
        """
        c, s = np.cos(angle / 2), np.sin(angle / 2)
        if axis == 'z':
            return cls([[np.exp(0.5j * angle), 0], [0, np.exp(-0.5j * angle)]])
        if axis == 'x':
            return cls([[c, 1j * s], [1j * s, c]])
        if axis == 'y':
            return cls([[c, s], [-s, c]])
        raise SphereError("Unknown axis {}.".format(axis))


def _check_distinct(hs, eps):
    for (i, a), (j, b) in combinations(enumerate(hs), 2):
        if chordal(a, b) < eps:
            m = "Points {} and {} coincide (chordal distance {:.3g})."
            raise DegenerateConfiguration(m.format(i + 1, j + 1, float(chordal(a, b))))


def _as_h(x):
    if isinstance(x, ProjPoint):
        return x.h
    return normalize(x)


def cross_ratio(x1, x2, x3, x4, eps=None):
    """
    The cross-ratio of four distinct points, normalized so that
    ``cross_ratio(inf, 0, 1, u) == u``.

    Args:
        x1, x2, x3, x4 (ProjPoint): The points.
        eps (float): Chordal distance below which points coincide.

    Returns:
        complex.
    """
    if eps is None:
        eps = CONVENTIONS['eps_pt']
    hs = [_as_h(x) for x in (x1, x2, x3, x4)]
    _check_distinct(hs, eps)
    return complex(cross_ratio_array(*hs))


def moduli_projection(x, eps=None):
    """
    The coordinates ``(cr(x1, x2, x3, x4), ..., cr(x1, x2, x3, xn))``.

    Args:
        x (sequence): At least four distinct points.

    Returns:
        tuple. n - 3 complex numbers.
    """
    if eps is None:
        eps = CONVENTIONS['eps_pt']
    hs = [_as_h(p) for p in x]
    if len(hs) < 4:
        raise SphereError("The moduli projection needs at least four points.")
    _check_distinct(hs, eps)
    h1, h2, h3 = hs[:3]
    return tuple(complex(cross_ratio_array(h1, h2, h3, hk)) for hk in hs[3:])


def moduli_array(h):
    """
    Vectorized moduli projection of configurations of shape (..., n, 2).

    Returns:
        ndarray. Shape (..., n - 3).
    """
    h = np.asarray(h, dtype=complex)
    h1, h2, h3 = h[..., 0:1, :], h[..., 1:2, :], h[..., 2:3, :]
    return cross_ratio_array(h1, h2, h3, h[..., 3:, :])


def slerp(va, vb, s):
    """
    Great-circle interpolation between unit vectors.

    Args:
        va, vb (ndarray): Shape (..., 3).
        s (ndarray): Parameters, shape (S,).

    Returns:
        ndarray. Shape (S, ..., 3).
    """
    s = np.asarray(s, dtype=float).reshape((-1,) + (1,) * (np.ndim(va) - 1))
    cross = np.linalg.norm(np.cross(va, vb), axis=-1)
    dot = np.sum(va * vb, axis=-1)
    omega = np.arctan2(cross, dot)[..., None]
    small = omega < 1e-12
    sin_omega = np.where(small, 1, np.sin(omega))
    wa = np.where(small, 1 - s[..., None], np.sin((1 - s[..., None]) * omega) / sin_omega)
    wb = np.where(small, s[..., None], np.sin(s[..., None] * omega) / sin_omega)
    return wa * va + wb * vb


def geodesic_path(a, b, samples, eps=None):
    """
    The minimal great-circle arc from ``a`` to ``b``.

    Args:
        a (ProjPoint): Start.
        b (ProjPoint): End.
        samples (int): Number of samples, endpoints included.
        eps (float): Antipodality tolerance.

    Returns:
        Arc. Parameters, points as an array of shape (samples, 2) and the
            length on the unit sphere.
    """
    if eps is None:
        eps = CONVENTIONS['eps_anti']
    if samples < 1:
        raise SphereError("Need at least one sample.")
    ha, hb = _as_h(a), _as_h(b)
    if chordal(hb, antipode(ha)) < eps:
        raise AntipodalPair("The endpoints are antipodal; the geodesic is not unique.")
    va, vb = to_vectors(ha), to_vectors(hb)
    s = np.linspace(0, 1, samples)
    points = from_vectors(slerp(va, vb, s))
    points[0] = ha
    if samples > 1:
        points[-1] = hb
    return Arc(s, points, float(great_circle(ha, hb)))


def chart_measure_density(zeta):
    """
    Density of the normalized round measure in chart 0, with respect to
    Lebesgue measure. It integrates to 1 over the plane.
    """
    zeta = np.asarray(zeta, dtype=complex)
    return (1 / np.pi) / (1 + np.abs(zeta)**2)**2
