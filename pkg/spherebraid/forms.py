"""
Logarithmic 1-forms on the configuration space of the thrice-punctured
sphere, their pullbacks by the cross-ratio projection, and absolute path
integrals.

For moving coordinates ``u_1 .. u_k`` the forms are ``(1/2π) Im`` of
``du_i / u_i``, ``du_i / (u_i - 1)`` and ``d(u_i - u_j) / (u_i - u_j)``.
Every one of them is ``d arg(D) / 2π`` for some denominator ``D``, and after
pulling back, ``D`` is a ratio of brackets ``l_ab = z_a w_b - z_b w_a``.

:copyright: 2026 The spherebraid authors
:license: Apache 2.0
"""
from collections import namedtuple
import logging

import numpy as np
from scipy.integrate import quad

from .configuration import Configuration
from .configuration import ConfigurationError
from .configuration import NegligibleSetHit
from .configuration import basepoint
from .defaults import CONVENTIONS
from .quasimorphism import QMEstimate
from .sphere import normalize
from .sphere import random_points
from .utils import adaptive_midpoint
from .utils import mean_and_stderr
from .utils import rng
from .utils import run_parallel
from .utils import spawn_seeds

log = logging.getLogger(__name__)

KERNEL_BOUND = 8 * np.pi


class FormError(Exception):
    """
    Generic error class.
    """
    pass


class SingularPoint(FormError):
    pass


class FormIndex(namedtuple('FormIndex', ['kind', 'i', 'j'])):
    """
    One of the forms: kind 'zero' or 'one' with a coordinate ``i``, or
    kind 'pair' with coordinates ``i < j``. Coordinates count from 1.
    """
    __slots__ = ()

    def __str__(self):
        if self.kind == 'zero':
            return "({};0)".format(self.i)
        if self.kind == 'one':
            return "({};1)".format(self.i)
        return "({}{})".format(self.i, self.j)

    @classmethod
    def at_zero(cls, i):
        return cls('zero', int(i), None)

    @classmethod
    def at_one(cls, i):
        return cls('one', int(i), None)

    @classmethod
    def pair(cls, i, j):
        if i == j:
            raise FormError("A pair form needs two different coordinates.")
        i, j = sorted((int(i), int(j)))
        return cls('pair', i, j)

    @classmethod
    def from_string(cls, text):
        body = text.strip('()')
        if ';' in body:
            i, which = body.split(';')
            return cls.at_zero(i) if which == '0' else cls.at_one(i)
        if ',' in body:
            return cls.pair(*body.split(','))
        return cls.pair(body[0], body[1:])

    @classmethod
    def all_indices(cls, k):
        """
        The full index set for ``k`` moving coordinates.
        """
        out = [cls.at_zero(i) for i in range(1, k + 1)]
        out += [cls.at_one(i) for i in range(1, k + 1)]
        out += [cls.pair(i, j) for i in range(1, k + 1) for j in range(i + 1, k + 1)]
        return out

    def check(self, k):
        top = self.j if self.kind == 'pair' else self.i
        if self.i < 1 or top > k:
            raise FormError("Form {} needs more than {} coordinates.".format(self, k))

    def bracket_terms(self):
        """
        The pulled-back denominator as signed brackets of points
        (1-based): a list of (sign, a, b).
        """
        k = self.i + 3
        if self.kind == 'zero':
            return [(1, 1, 3), (1, 2, k), (-1, 2, 3), (-1, 1, k)]
        if self.kind == 'one':
            return [(1, 1, 2), (1, 3, k), (-1, 2, 3), (-1, 1, k)]
        kk = self.j + 3
        return [(1, 1, 3), (1, 1, 2), (1, kk, k), (-1, 2, 3), (-1, 1, k), (-1, 1, kk)]


def _denominator(nu, u, v):
    i = nu.i - 1
    if nu.kind == 'zero':
        return u[..., i], v[..., i]
    if nu.kind == 'one':
        return u[..., i] - 1, v[..., i]
    j = nu.j - 1
    return u[..., i] - u[..., j], v[..., i] - v[..., j]


def theta_eval(nu, u, v, eps=None):
    """
    Evaluate a form on a tangent vector.

    Args:
        nu (FormIndex): The form.
        u (array-like): Moving coordinates, shape (..., k).
        v (array-like): Tangent vector, same shape.
        eps (float): Distance to the singular locus below which the form
            is not evaluated.

    Returns:
        float or ndarray.
    """
    if eps is None:
        eps = CONVENTIONS['eps_planar']
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    nu.check(u.shape[-1])
    den, num = _denominator(nu, u, v)
    if np.any(np.abs(den) < eps):
        raise SingularPoint("Form {} evaluated on its singular locus.".format(nu))
    value = np.imag(num / den) / (2 * np.pi)
    return float(value) if np.ndim(value) == 0 else value


def abs_path_integral(nu, path, eps=None):
    """
    The integral of the absolute value of a form along a path.

    Args:
        nu (FormIndex): The form.
        path (callable or ndarray): Either a map from an array of parameters
            in [0, 1] to a pair (positions, velocities), each of shape
            (S, k), integrated by adaptive midpoint quadrature, or sampled
            positions of shape (T, k) read as a polygon, for which the
            integral is exact.

    Returns:
        float.
    """
    if eps is None:
        eps = CONVENTIONS['eps_planar']
    if callable(path):
        def integrand(s):
            u, v = path(s)
            return np.abs(theta_eval(nu, u, v, eps))
        return adaptive_midpoint(integrand)
    u = np.asarray(path, dtype=complex)
    nu.check(u.shape[-1])
    den, _ = _denominator(nu, u, u)
    if np.any(np.abs(den) < eps):
        raise SingularPoint("Path meets the singular locus of {}.".format(nu))
    return float(np.sum(np.abs(np.angle(den[1:] / den[:-1]))) / (2 * np.pi))


def _brackets(h, hdot, terms):
    """
    Values and derivatives of the brackets in ``terms``.
    """
    out = []
    for sign, a, b in terms:
        za, wa = h[..., a - 1, 0], h[..., a - 1, 1]
        zb, wb = h[..., b - 1, 0], h[..., b - 1, 1]
        dza, dwa = hdot[..., a - 1, 0], hdot[..., a - 1, 1]
        dzb, dwb = hdot[..., b - 1, 0], hdot[..., b - 1, 1]
        l = za * wb - zb * wa
        dl = dza * wb + za * dwb - dzb * wa - zb * dwa
        out.append((sign, l, dl))
    return out


def hemisphere_representatives(h, hdot):
    """
    Rescale every point to its hemisphere chart, ``(zeta, 1)`` or
    ``(1, 1/zeta)``, with the matching tangent lifts.
    """
    h = np.asarray(h, dtype=complex)
    hdot = np.asarray(hdot, dtype=complex)
    south = np.abs(h[..., 0]) > np.abs(h[..., 1])
    c = np.where(south, h[..., 0], h[..., 1])[..., None]
    dc = np.where(south, hdot[..., 0], hdot[..., 1])[..., None]
    return h / c, hdot / c - h * dc / c**2


def hemisphere_pattern(h):
    """
    The hemisphere of every point as a bit mask: bit k is set when point
    k + 1 lies in the hemisphere around infinity.
    """
    h = normalize(h)
    south = np.abs(h[..., 0]) > np.abs(h[..., 1])
    return np.sum(south * (1 << np.arange(h.shape[-2])), axis=-1)


def _chain_velocity(h, hdot):
    """
    Moduli coordinates and their velocities from chart-0 partial
    derivatives of the cross-ratio.
    """
    zeta = h[..., 0] / h[..., 1]
    dzeta = (hdot[..., 0] * h[..., 1] - h[..., 0] * hdot[..., 1]) / h[..., 1]**2
    z1, z2, z3 = zeta[..., 0:1], zeta[..., 1:2], zeta[..., 2:3]
    d1, d2, d3 = dzeta[..., 0:1], dzeta[..., 1:2], dzeta[..., 2:3]
    zk, dk = zeta[..., 3:], dzeta[..., 3:]
    u = (z1 - z3) * (z2 - zk) / ((z2 - z3) * (z1 - zk))
    dlog = ((d1 - d3) / (z1 - z3) + (d2 - dk) / (z2 - zk)
            - (d2 - d3) / (z2 - z3) - (d1 - dk) / (z1 - zk))
    return u, u * dlog


def pullback_eval(nu, x, xdot, method='chain', eps=None):
    """
    The pulled-back form at a configuration, on a tangent tuple.

    Args:
        nu (FormIndex): The form.
        x (Configuration or ndarray): The configuration, shape (..., n, 2).
        xdot (ndarray): Homogeneous tangent lifts, same shape.
        method (str): 'chain' pushes the vector through the derivative of
            the moduli projection in chart 0. 'hemisphere' sums the
            logarithmic derivatives of brackets of hemisphere
            representatives.

    Returns:
        float or ndarray.
    """
    if eps is None:
        eps = CONVENTIONS['eps_planar']
    h = x.h if isinstance(x, Configuration) else np.asarray(x, dtype=complex)
    hdot = np.asarray(xdot, dtype=complex)
    if h.shape[-2] < 4:
        raise FormError("Pullbacks need at least four points.")
    nu.check(h.shape[-2] - 3)

    if method == 'chain':
        with np.errstate(divide='ignore', invalid='ignore'):
            u, du = _chain_velocity(h, hdot)
        if not np.all(np.isfinite(u)) or not np.all(np.isfinite(du)):
            raise SingularPoint("Point at infinity or collision in the chart-0 chain rule.")
        return theta_eval(nu, u, du, eps)

    if method != 'hemisphere':
        raise FormError("Unknown method '{}'.".format(method))
    rep, drep = hemisphere_representatives(h, hdot)
    total = 0
    for sign, l, dl in _brackets(rep, drep, nu.bracket_terms()):
        if np.any(np.abs(l) < eps):
            raise SingularPoint("Collision while evaluating {}.".format(nu))
        total = total + sign * np.imag(dl / l)
    value = total / (2 * np.pi)
    return float(value) if np.ndim(value) == 0 else value


def _linear_variation(terms):
    """
    Total variation on [0, 1] of ``sum sign * arg(a + b s)``.

    The derivative is ``sum sign * c / |a + b s|^2`` with ``c = Im(b conj(a))``;
    its real roots split [0, 1] into pieces where the sum is monotone.
    """
    P = np.polynomial.polynomial
    quads = []
    for sign, a, b in terms:
        quads.append((sign * np.imag(b * np.conj(a)),
                      [abs(a)**2, 2 * np.real(a * np.conj(b)), abs(b)**2]))
    numer = np.zeros(1)
    for k, (c, _) in enumerate(quads):
        prod = np.array([c])
        for l, (_, q) in enumerate(quads):
            if l != k:
                prod = P.polymul(prod, q)
        numer = P.polyadd(numer, prod)
    cuts = [0.0, 1.0]
    if np.any(numer != 0):
        numer = np.trim_zeros(numer, 'b')
        if numer.size > 1:
            roots = P.polyroots(numer)
            scale = max(1.0, float(np.max(np.abs(roots))))
            real = roots[np.abs(roots.imag) < 1e-9 * scale].real
            cuts += [r for r in real if 0 < r < 1]
    s = np.array(sorted(cuts))
    total = 0.0
    for sign, a, b in terms:
        total = total + sign * np.angle((a + b * s[1:]) / (a + b * s[:-1]))
    return float(np.sum(np.abs(total)))


def short_path_form_bound(x, nu, q=None, eps=None):
    """
    The integral of ``|pullback of nu|`` along the affine short path from
    ``q`` to ``x``. Brackets of chart-0 points are linear along the path,
    so the integral is computed exactly from the turning points.

    Args:
        x (Configuration): The endpoint.
        nu (FormIndex): The form.
        q (Configuration): The basepoint. Default ``basepoint(n)``.

    Returns:
        float.
    """
    if eps is None:
        eps = CONVENTIONS['eps_planar']
    hx = x.h if isinstance(x, Configuration) else normalize(x)
    n = hx.shape[0]
    if q is None:
        q = basepoint(n)
    hq = q.h if isinstance(q, Configuration) else normalize(q)
    nu.check(n - 3)
    if np.any(np.abs(hx[:, 1]) < CONVENTIONS['eps_pt']) or np.any(np.abs(hq[:, 1]) < CONVENTIONS['eps_pt']):
        raise NegligibleSetHit("A point is at infinity; affine segments are undefined.")
    za, zb = hq[:, 0] / hq[:, 1], hx[:, 0] / hx[:, 1]
    terms = []
    for sign, a, b in nu.bracket_terms():
        start = za[a - 1] - za[b - 1]
        slope = (zb[a - 1] - zb[b - 1]) - start
        smin = np.clip(-np.real(start * np.conj(slope)) / max(abs(slope)**2, 1e-300), 0, 1)
        if abs(start + slope * smin) < eps:
            raise NegligibleSetHit("Affine segments of points {} and {} collide.".format(a, b))
        terms.append((sign, start, slope))
    value = _linear_variation(terms) / (2 * np.pi)
    if value > CONVENTIONS['short_path_bound'] + 1e-3:
        log.warning("Short-path integral %.6g exceeds the bound for %s.", value, nu)
    return value


def _form_action_sample(task):
    """
    One joint (t, x) sample of the time-first rewrite.
    """
    flow, nu, n, seed, hq = task
    g = rng(seed)
    q = Configuration(hq)
    resampled = 0
    for _ in range(CONVENTIONS['resample_budget']):
        h = random_points(g, n)
        t = g.uniform(0, flow.duration)
        try:
            x = Configuration(h)
            action = flow.duration * abs(pullback_eval(nu, h, flow.field(h, t), method='hemisphere'))
            short = short_path_form_bound(x, nu, q)
            return action + 2 * short, resampled, int(hemisphere_pattern(h))
        except (SingularPoint, ConfigurationError):
            resampled += 1
    raise FormError("Resample budget exhausted.")


def _form_action_values(flow, nu, n, samples, seed, workers):
    q = basepoint(n)
    tasks = [(flow, nu, n, s, q.h) for s in spawn_seeds(seed, samples)]
    results = run_parallel(_form_action_sample, tasks, workers)
    values = np.array([r[0] for r in results])
    resampled = sum(r[1] for r in results)
    patterns = np.array([r[2] for r in results])
    if resampled:
        log.info("Resampled %d singular draws for %s.", resampled, nu)
    return values, patterns


def average_form_action(flow, nu, n=4, mc_samples=None, seed=0, workers=1):
    """
    Monte Carlo estimate of the average over configurations of the
    integral of ``|pullback of nu|`` along the based loop of a flow.

    Time is sampled jointly with the configuration: because the flow
    preserves the measure, the configuration at time t is itself
    uniformly distributed. Both short paths contribute the affine
    short-path integral of a uniform configuration.

    Returns:
        QMEstimate.
    """
    if mc_samples is None:
        mc_samples = CONVENTIONS['samples']
    values, _ = _form_action_values(flow, nu, n, mc_samples, seed, workers)
    mean, stderr = mean_and_stderr(values)
    return QMEstimate(mean, stderr, mc_samples, seed, n)


def hemisphere_decomposition(flow, nu, n=4, mc_samples=None, seed=0, workers=1):
    """
    Contributions of each product of hemispheres to the average form
    action. They add up to ``average_form_action`` with the same seed.

    Returns:
        dict. Pattern bit mask to contribution.
    """
    if mc_samples is None:
        mc_samples = CONVENTIONS['samples']
    values, patterns = _form_action_values(flow, nu, n, mc_samples, seed, workers)
    return {int(p): float(np.sum(values[patterns == p]) / mc_samples)
            for p in np.unique(patterns)}


def disk_kernel_integral(a):
    """
    ``∫ dm(b) / |a - b|`` over the unit disk, in polar coordinates
    around ``a``.
    """
    a = complex(a)

    def chord(phi):
        p = (np.conj(a) * np.exp(1j * phi)).real
        disc = p * p - abs(a)**2 + 1
        if disc <= 0:
            return 0.0
        root = np.sqrt(disc)
        upper = -p + root
        lower = max(-p - root, 0.0)
        return max(upper - lower, 0.0)

    value, _ = quad(chord, 0, 2 * np.pi, limit=200)
    return value
