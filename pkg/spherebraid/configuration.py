"""
Configurations of distinct points on the sphere, the two short-path
systems joining them to a basepoint, and the based loops traced by a flow.

A loop is parametrized by [0, 1]: the first third is the short path from the
basepoint ``q`` to ``x``, the middle third is the flow applied to ``x`` and
the last third is the short path from the image ``y`` back to ``q``.

:copyright: 2026 The spherebraid authors
:license: Apache 2.0
"""
from collections import namedtuple
import hashlib
import logging
import os
import warnings

import numpy as np

from .conventions import Conventions
from .defaults import CACHE_ENV
from .defaults import CONVENTIONS
from .sphere import ProjPoint
from .sphere import antipode
from .sphere import chordal
from .sphere import from_vectors
from .sphere import min_separation
from .sphere import normalize
from .sphere import slerp
from .sphere import to_vectors
from .utils import rng

log = logging.getLogger(__name__)

SYSTEMS = ('geodesic', 'affine')
CACHE_FORMAT = 2

Path = namedtuple('Path', ['s', 'points'])


class ConfigurationError(Exception):
    """
    Generic error class.
    """
    pass


class SamplerStuck(ConfigurationError):
    pass


class NegligibleSetHit(ConfigurationError):
    pass


class DiagonalCrossing(ConfigurationError):
    pass


class Configuration:
    """
    An ordered tuple of pairwise distinct points.

    Args:
        points (list or ndarray): ProjPoints, or homogeneous pairs of shape
            (n, 2).
        eps (float): Smallest allowed chordal distance. Default ε_conf.
    """
    def __init__(self, points, eps=None):
        if eps is None:
            eps = CONVENTIONS['eps_conf']
        if isinstance(points, np.ndarray):
            h = normalize(points)
        else:
            h = normalize([p.h if isinstance(p, ProjPoint) else p for p in points])
        if h.ndim != 2 or h.shape[0] < 2:
            raise ConfigurationError("A configuration needs at least two points.")
        self.min_sep = float(min_separation(h))
        if self.min_sep < eps:
            m = "Points closer than {:.3g} (minimum chordal separation {:.3g})."
            raise ConfigurationError(m.format(eps, self.min_sep))
        h.flags.writeable = False
        self._h = h

    def __repr__(self):
        return "Configuration(n={}, min_sep={:.4g})".format(self.n, self.min_sep)

    def __len__(self):
        return self.n

    def __getitem__(self, key):
        return ProjPoint(*self._h[key])

    def __eq__(self, other):
        if not isinstance(other, Configuration) or other.n != self.n:
            return False
        return bool(np.all(chordal(self._h, other._h) < CONVENTIONS['eps_pt']))

    @property
    def n(self):
        return self._h.shape[0]

    @property
    def h(self):
        return self._h

    @property
    def points(self):
        return [ProjPoint(z, w) for z, w in self._h]

    @property
    def in_chart_0(self):
        return bool(np.all(np.abs(self._h[:, 1]) > CONVENTIONS['eps_pt']))

    def transformed(self, mobius):
        """
        The configuration moved by a Mobius map.
        """
        return Configuration(mobius(self._h), eps=0)

    @classmethod
    def from_chart(cls, zetas, eps=None):
        zetas = np.asarray(zetas, dtype=complex)
        return cls(np.stack([zetas, np.ones_like(zetas)], axis=-1), eps=eps)


def basepoint(n, seed=0):
    """
    A quasi-uniform generic basepoint: a Fibonacci spiral on the sphere,
    slightly jittered by ``seed`` to break its symmetries.

    Args:
        n (int): Number of points.
        seed (int): Jitter seed.

    Returns:
        Configuration.
    """
    k = np.arange(n)
    height = 1 - (2 * k + 1) / n
    phi = k * np.pi * (3 - np.sqrt(5))
    s = np.sqrt(1 - height**2)
    v = np.stack([s * np.cos(phi), s * np.sin(phi), height], axis=-1)
    v = v + 0.05 * rng(seed).standard_normal(v.shape) / np.sqrt(n)
    return Configuration(from_vectors(v))


def sample_configuration(n, seed, eps=None, max_rejections=None, system=None, q=None):
    """
    Draw a configuration with law the product of normalized round measures.

    Draws closer than ``eps`` are rejected, and so are draws whose short
    path from ``q`` is degenerate when ``system`` is given.

    Args:
        n (int): Number of points, at least 4.
        seed: Anything ``utils.rng`` accepts.
        eps (float): Minimum chordal separation. Default ε_conf.
        max_rejections (int): Rejection budget.
        system (str): Optional short-path system to check against.
        q (Configuration): Basepoint for the short-path check.

    Returns:
        Configuration.
    """
    if n < 4:
        raise ConfigurationError("Configurations need n >= 4.")
    if eps is None:
        eps = CONVENTIONS['eps_conf']
    if max_rejections is None:
        max_rejections = CONVENTIONS['max_rejections']
    if system is not None and q is None:
        raise ConfigurationError("A short-path check needs a basepoint.")
    g = rng(seed)
    for rejected in range(max_rejections + 1):
        h = from_vectors(g.standard_normal((n, 3)))
        if min_separation(h) < eps:
            continue
        if system is not None:
            try:
                short_path(system, q, h, samples=2)
            except NegligibleSetHit:
                continue
        if rejected:
            log.debug("Configuration accepted after %d rejections.", rejected)
        return Configuration(h, eps=eps)
    m = "No configuration found in {} draws; eps={:.3g} is probably too large."
    raise SamplerStuck(m.format(max_rejections + 1, eps))


def _as_array(x):
    if isinstance(x, Configuration):
        return x.h
    return normalize(x)


def _chart_0(h):
    if np.any(np.abs(h[..., 1]) < CONVENTIONS['eps_pt']):
        raise NegligibleSetHit("A point is at infinity; affine segments are undefined.")
    return h[..., 0] / h[..., 1]


def _short_path_points(system, hq, hx, s):
    """
    Points of the short path at parameters ``s``, shape (len(s), n, 2).
    """
    s = np.asarray(s, dtype=float)
    if system == 'geodesic':
        return from_vectors(slerp(to_vectors(hq), to_vectors(hx), s))
    a, b = _chart_0(hq), _chart_0(hx)
    zeta = (1 - s[:, None]) * a + s[:, None] * b
    return normalize(np.stack([zeta, np.ones_like(zeta)], axis=-1))


def _closest_affine_approach(a, b):
    """
    Smallest chordal distance between coordinates moving on straight chart
    segments ``(1 - s) a + s b``.
    """
    n = a.shape[0]
    i, j = np.triu_indices(n, k=1)
    d0, d1 = a[i] - a[j], b[i] - b[j]
    dd = d1 - d0
    with np.errstate(divide='ignore', invalid='ignore'):
        s = np.clip(-np.real(d0 * np.conj(dd)) / np.abs(dd)**2, 0, 1)
    s = np.where(np.isfinite(s), s, 0)
    zi = (1 - s) * a[i] + s * b[i]
    zj = (1 - s) * a[j] + s * b[j]
    dist = 2 * np.abs(zi - zj) / np.sqrt((1 + np.abs(zi)**2) * (1 + np.abs(zj)**2))
    return float(np.min(dist))


def short_path(system, q, x, samples=None):
    """
    The short path from the basepoint to a configuration.

    Args:
        system (str): 'geodesic' (coordinate-wise minimal great circles) or
            'affine' (coordinate-wise straight segments in chart 0).
        q (Configuration): Basepoint.
        x (Configuration): Target.
        samples (int): Number of samples, endpoints included.

    Returns:
        Path. Parameters in [0, 1] and points of shape (samples, n, 2).
    """
    if system not in SYSTEMS:
        raise ConfigurationError("Unknown short-path system '{}'.".format(system))
    if samples is None:
        samples = 64
    hq, hx = _as_array(q), _as_array(x)
    if hq.shape != hx.shape:
        raise ConfigurationError("Basepoint and target have different sizes.")
    floor = CONVENTIONS['eps_conf'] / 2
    if system == 'geodesic':
        anti = chordal(hx, antipode(hq))
        if np.any(anti < CONVENTIONS['eps_anti']):
            k = int(np.argmin(anti)) + 1
            raise NegligibleSetHit("Coordinate {} is antipodal to the basepoint.".format(k))
    else:
        if _closest_affine_approach(_chart_0(hq), _chart_0(hx)) < floor:
            raise NegligibleSetHit("Two affine segments collide.")
    s = np.linspace(0, 1, max(samples, 2))
    points = _short_path_points(system, hq, hx, s)
    points[0], points[-1] = hq, hx
    if np.min(min_separation(points)) < floor:
        raise NegligibleSetHit("Two coordinates of the short path collide.")
    return Path(s, points)


class Loop:
    """
    A sampled closed path in the configuration space, based at a basepoint.

    Args:
        times (ndarray): Increasing parameters in [0, 1], shape (T,).
        h (ndarray): Configurations, shape (T, n, 2).
        basepoint (Configuration): The basepoint.
        path_system (str): The short-path system used.
        evaluate (callable): Optional map from parameters to configurations,
            used to refine the sampling.
    """
    def __init__(self, times, h, basepoint, path_system, evaluate=None):
        times = np.asarray(times, dtype=float)
        h = np.asarray(h, dtype=complex)
        if times.ndim != 1 or h.shape[0] != times.size or h.ndim != 3:
            raise ConfigurationError("times and samples do not match.")
        if np.any(np.diff(times) <= 0):
            raise ConfigurationError("Loop parameters must increase.")
        times.flags.writeable = False
        h.flags.writeable = False
        self.times = times
        self.h = h
        self.basepoint = basepoint
        self.path_system = path_system
        self._evaluate = evaluate

    def __repr__(self):
        s = "Loop(n={}, samples={}, system='{}', closed={})"
        return s.format(self.n, len(self), self.path_system, self.closed)

    def __len__(self):
        return self.times.size

    @property
    def n(self):
        return self.h.shape[1]

    @property
    def closed(self):
        tol = 1e-9
        q = self.basepoint.h
        return bool(np.all(chordal(self.h[0], q) < tol) and np.all(chordal(self.h[-1], q) < tol))

    @property
    def samples(self):
        floor = CONVENTIONS['eps_conf'] / 2
        return [Configuration(hk, eps=floor) for hk in self.h]

    @property
    def min_sep(self):
        return float(np.min(min_separation(self.h)))

    @property
    def refinable(self):
        return self._evaluate is not None

    def at(self, s):
        """
        Configurations at arbitrary parameters, shape (len(s), n, 2).
        """
        if self._evaluate is None:
            raise ConfigurationError("This loop cannot be evaluated between samples.")
        return self._evaluate(np.atleast_1d(np.asarray(s, dtype=float)))

    def refined(self, s):
        """
        A new loop with extra samples at the parameters ``s``.
        """
        s = np.setdiff1d(np.atleast_1d(s), self.times)
        if s.size == 0:
            return self
        times = np.concatenate([self.times, s])
        h = np.concatenate([self.h, self.at(s)])
        order = np.argsort(times, kind='stable')
        return Loop(times[order], h[order], self.basepoint, self.path_system, self._evaluate)

    def reversed(self):
        """
        The loop traversed backwards.
        """
        evaluate = None
        if self._evaluate is not None:
            forward = self._evaluate

            def evaluate(s):
                return forward(1 - s)
        return Loop(1 - self.times[::-1], self.h[::-1], self.basepoint, self.path_system, evaluate)

    def transformed(self, mobius):
        """
        The loop moved by a Mobius map, applied to every sample.
        """
        evaluate = None
        if self._evaluate is not None:
            forward = self._evaluate

            def evaluate(s):
                return mobius(forward(s))
        q = self.basepoint.transformed(mobius)
        return Loop(self.times, mobius(self.h), q, self.path_system, evaluate)


def _assemble(flow, q, x, flow_times, traj, system, samples, dt):
    """
    Join the short path to x, the flow segment and the reversed short path
    from its end into one loop on [0, 1].
    """
    y = traj[-1]
    gx = short_path(system, q, x, samples)
    gy = short_path(system, q, y, samples)
    duration = flow.duration
    hq, hx = q.h, _as_array(x)

    def evaluate(s):
        out = np.empty((s.size,) + hq.shape, dtype=complex)
        first, last = s <= 1 / 3, s >= 2 / 3
        middle = ~(first | last)
        if np.any(first):
            out[first] = _short_path_points(system, hq, hx, 3 * s[first])
        if np.any(last):
            out[last] = _short_path_points(system, hq, y, 3 * (1 - s[last]))
        for k in np.nonzero(middle)[0]:
            t = (3 * s[k] - 1) * duration
            left = max(int(np.searchsorted(flow_times, t, side='right')) - 1, 0)
            out[k] = flow.advance(traj[left], flow_times[left], t, dt)
        return out

    times = np.concatenate([gx.s[:-1] / 3,
                            1 / 3 + flow_times / (3 * duration),
                            2 / 3 + (1 - gy.s[::-1][1:]) / 3])
    h = np.concatenate([gx.points[:-1], traj, gy.points[::-1][1:]])
    return Loop(times, h, q, system, evaluate)


def trace_loop(flow, x, q, system='geodesic', dt=None, samples=None, cache=None, seed=None):
    """
    The based loop of a configuration under a flow: the short path from
    ``q`` to ``x``, the trajectory of ``x`` and the reversed short path from
    the final configuration back to ``q``.

    Args:
        flow (FlowSpec): The flow.
        x (Configuration): The configuration to move.
        q (Configuration): The basepoint.
        system (str): 'geodesic' or 'affine'.
        dt (float): Integration step.
        samples (int): Samples per short path.
        cache (LoopCache): Optional trajectory cache.
        seed (int): Seed that produced ``x``, used as part of the cache key.

    Returns:
        Loop.
    """
    if system not in SYSTEMS:
        raise ConfigurationError("Unknown short-path system '{}'.".format(system))
    if dt is None:
        dt = flow.default_dt()
    hx = _as_array(x)

    traj = None
    if cache is not None and seed is not None:
        key = cache.key(flow, seed, hx.shape[0], dt, system)
        stored = cache.load(key)
        if stored is not None:
            flow_times, traj = stored['flow_times'], stored['traj']
    if traj is None:
        flow_times, traj = flow.trajectory(hx, 0, flow.duration, dt)
        if cache is not None and seed is not None:
            cache.store(key, flow_times=flow_times, traj=traj)

    floor = CONVENTIONS['eps_conf'] / 2
    sep = float(np.min(min_separation(traj)))
    if sep < floor:
        m = "Trajectory separation {:.3g} fell below {:.3g}; refine dt."
        raise DiagonalCrossing(m.format(sep, floor))
    return _assemble(flow, q, hx, flow_times, traj, system, samples, dt)


class LoopCache:
    """
    An on-disk cache of flow trajectories, keyed by the flow digest, seed,
    number of points, time step, short-path system and the digest of the
    conventions in force. The directory defaults to the ``SPHEREBRAID_CACHE``
    environment variable.
    """
    def __init__(self, directory=None):
        directory = directory or os.environ.get(CACHE_ENV)
        if not directory:
            raise ConfigurationError("No cache directory; set {}.".format(CACHE_ENV))
        os.makedirs(directory, exist_ok=True)
        self.directory = directory
        self.hits = 0
        self.misses = 0

    def __repr__(self):
        return "LoopCache('{}')".format(self.directory)

    @classmethod
    def from_env(cls):
        """
        The cache named by the environment, or None.
        """
        if os.environ.get(CACHE_ENV):
            return cls()
        return None

    @staticmethod
    def key(flow, seed, n, dt, system):
        parts = [flow.digest(), str(seed), str(n), repr(float(dt)), system,
                 Conventions(CONVENTIONS).digest()]
        return hashlib.sha1('|'.join(parts).encode('utf-8')).hexdigest()

    def _path(self, key):
        return os.path.join(self.directory, key + '.npz')

    def load(self, key):
        path = self._path(key)
        if not os.path.exists(path):
            self.misses += 1
            return None
        with np.load(path) as data:
            current = Conventions(CONVENTIONS).digest()
            if int(data['format']) != CACHE_FORMAT or str(data['conventions']) != current:
                warnings.warn("Stale cache entry {}; recomputing.".format(key), stacklevel=2)
                self.misses += 1
                return None
            self.hits += 1
            return {k: data[k] for k in data.files if k not in ('format', 'conventions')}

    def store(self, key, **arrays):
        np.savez(self._path(key), format=CACHE_FORMAT,
                 conventions=Conventions(CONVENTIONS).digest(), **arrays)
        log.debug("Cached %s.", key)
