"""
Time-dependent area-preserving flows on the sphere.

Two primitive kinds are provided: rotations ``zeta -> exp(2 pi i t w(|zeta|)) zeta``
about the axis through 0 and infinity, with ``w`` a radial profile, and
Hamiltonian flows whose generating function is sampled on a
longitude-height grid. Flows can be concatenated, inverted, conjugated by a
rigid rotation and reparametrized in time.

Velocities are exchanged as homogeneous tangent lifts: for a representative
``h`` of a point, ``field(h, t)`` returns ``hdot`` such that the chart
velocity is ``d(z / w)`` computed from ``(h, hdot)``.

:copyright: 2026 The spherebraid authors
:license: Apache 2.0
"""
from collections import namedtuple
import hashlib
import json
import math

import numpy as np

from .defaults import CONVENTIONS
from .sphere import Mobius
from .sphere import ProjPoint
from .sphere import TangentVector
from .sphere import normalize
from .sphere import radius
from .sphere import random_points
from .sphere import spherical_norm
from .sphere import to_vectors


class FlowError(Exception):
    """
    Generic error class.
    """
    pass


class IntegrationBlowup(FlowError):
    pass


class DomainError(FlowError):
    pass


INTERPOLATIONS = ('piecewise-constant', 'piecewise-linear', 'smooth-bump')

Trajectory = namedtuple('Trajectory', ['times', 'points'])
LpLength = namedtuple('LpLength', ['value', 'stderr'])


class RadialProfile:
    """
    A function of the chart radius, in turns per unit time, constant near 0
    and beyond the last breakpoint.

    Args:
        breakpoints (array-like): Increasing, nonnegative radii.
        values (array-like): The profile at each breakpoint.
        interpolation (str): One of 'piecewise-constant', 'piecewise-linear'
            or 'smooth-bump'. The last blends neighbouring values with a C1
            cubic.
    """
    def __init__(self, breakpoints, values, interpolation='piecewise-linear'):
        b = np.array(breakpoints, dtype=float).ravel()
        v = np.array(values, dtype=float).ravel()
        if b.size == 0 or b.size != v.size:
            raise FlowError("breakpoints and values must be non-empty and of equal length.")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(v))):
            raise FlowError("breakpoints and values must be finite.")
        if np.any(b < 0) or np.any(np.diff(b) <= 0):
            raise FlowError("breakpoints must be nonnegative and strictly increasing.")
        if interpolation not in INTERPOLATIONS:
            m = "interpolation must be one of {}.".format(', '.join(INTERPOLATIONS))
            raise FlowError(m)
        b.flags.writeable = False
        v.flags.writeable = False
        self.breakpoints = b
        self.values = v
        self.interpolation = interpolation

    def __repr__(self):
        s = "RadialProfile(breakpoints={}, values={}, interpolation='{}')"
        return s.format(self.breakpoints.tolist(), self.values.tolist(), self.interpolation)

    def __eq__(self, other):
        if not isinstance(other, RadialProfile):
            return False
        return self.to_dict() == other.to_dict()

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        b, v = self.breakpoints, self.values
        if b.size == 1:
            return np.full(r.shape, v[0]) if r.ndim else float(v[0])
        if self.interpolation == 'piecewise-constant':
            idx = np.clip(np.searchsorted(b, r, side='right') - 1, 0, b.size - 1)
            return v[idx]
        if self.interpolation == 'piecewise-linear':
            return np.interp(r, b, v)
        idx = np.clip(np.searchsorted(b, r, side='right') - 1, 0, b.size - 2)
        lo, hi = b[idx], b[idx + 1]
        with np.errstate(invalid='ignore'):
            s = np.clip((r - lo) / (hi - lo), 0, 1)
        s = np.where(np.isnan(s), 1.0, s)
        return v[idx] + (v[idx + 1] - v[idx]) * s * s * (3 - 2 * s)

    def transformed(self, u):
        """
        The profile as a function of the height ``u = 1 - 2 a(r)``.

        Args:
            u (float or array): Heights in [-1, 1].
        """
        u = np.asarray(u, dtype=float)
        if np.any(u < -1) or np.any(u > 1) or np.any(np.isnan(u)):
            raise DomainError("The height u must lie in [-1, 1].")
        return self(radius(u))

    @property
    def heights(self):
        """
        Heights of the breakpoints, in decreasing order.
        """
        return 1 - 2 * self.breakpoints**2 / (1 + self.breakpoints**2)

    @property
    def support(self):
        """
        Radial interval outside of which the profile is zero, or None if
        it is nonzero at 0 or at infinity.
        """
        if self.values[0] != 0 or self.values[-1] != 0:
            return None
        nz = np.nonzero(self.values)[0]
        if nz.size == 0:
            return (0.0, 0.0)
        lo = self.breakpoints[max(nz[0] - 1, 0)]
        hi = self.breakpoints[min(nz[-1] + 1, self.breakpoints.size - 1)]
        return (float(lo), float(hi))

    def negated(self):
        return self.scaled(-1)

    def scaled(self, c):
        return RadialProfile(self.breakpoints, c * self.values, self.interpolation)

    @classmethod
    def constant(cls, c):
        return cls([1.0], [c])

    @classmethod
    def bump(cls, inner, outer, height=1.0, ramp=0.2):
        """
        A smooth bump equal to ``height`` in the middle of [inner, outer]
        and zero outside it.

        Args:
            ramp (float): Fraction of the annulus used by each ramp.
        """
        if not 0 <= inner < outer:
            raise FlowError("A bump needs 0 <= inner < outer.")
        if not 0 < ramp <= 0.5:
            raise FlowError("ramp must be in (0, 0.5].")
        w = ramp * (outer - inner)
        b = [inner, inner + w, outer - w, outer]
        v = [0.0, height, height, 0.0]
        if ramp == 0.5:
            b, v = [inner, inner + w, outer], [0.0, height, 0.0]
        return cls(b, v, 'smooth-bump')

    @classmethod
    def from_height_function(cls, func, knots=400, margin=1e-3):
        """
        A piecewise-linear profile whose transformed version approximates
        ``func`` on [-1 + margin, 1 - margin].

        Args:
            func (callable): A vectorized function of the height u.
            knots (int): Number of breakpoints.
        """
        u = np.linspace(1 - margin, -1 + margin, knots)
        return cls(radius(u), func(u), 'piecewise-linear')

    def to_dict(self):
        return {'breakpoints': self.breakpoints.tolist(),
                'values': self.values.tolist(),
                'interpolation': self.interpolation,
                }

    @classmethod
    def from_dict(cls, d):
        return cls(d['breakpoints'], d['values'], d.get('interpolation', 'piecewise-linear'))


def profile_transform(omega):
    """
    The function ``u -> omega(r(u))`` on [-1, 1], with
    ``r(u) = sqrt((1 - u) / (1 + u))``.

    Args:
        omega (RadialProfile): The profile.

    Returns:
        callable. Raises DomainError outside [-1, 1].
    """
    return omega.transformed


def _from_chart(c, at_inf):
    one = np.ones_like(c)
    return np.stack([np.where(at_inf, one, c), np.where(at_inf, c, one)], axis=-1)


class FlowSpec:
    """
    Base class of all flows. A flow is defined on ``[0, duration]`` and is
    immutable after construction.
    """
    kind = None
    closed_form = False

    def __init__(self, duration=1.0):
        duration = float(duration)
        if not (math.isfinite(duration) and duration > 0):
            raise FlowError("duration must be positive and finite.")
        self.duration = duration

    def __repr__(self):
        return "{}(duration={})".format(self.__class__.__name__, self.duration)

    def __eq__(self, other):
        if not isinstance(other, FlowSpec):
            return False
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(self.digest())

    # Interface.
    def field(self, h, t):
        """
        Homogeneous tangent lift of the velocity at ``h`` and time ``t``.
        """
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError

    def inverse(self):
        """
        A path from the identity to the inverse of the time-1 map, generated
        by the reversed, negated field.
        """
        raise NotImplementedError

    # Derived operations.
    def default_dt(self):
        return CONVENTIONS['dt_fraction'] * self.duration

    def speed(self, h, t):
        """
        Speed on the round unit sphere at points ``h`` and time ``t``.
        """
        h = normalize(h)
        return CONVENTIONS['metric_factor'] * spherical_norm(h, self.field(h, t))

    def velocity(self, p, t):
        """
        The velocity at a point, as a TangentVector.
        """
        h = p.h
        return TangentVector.from_lift(h, self.field(h, t))

    def advance(self, h, t0, t1, dt=None):
        """
        Transport points from time ``t0`` to time ``t1``.

        Args:
            h (ndarray): Homogeneous points, shape (..., 2).
        """
        _, pts = self._integrate(h, t0, t1, dt or self.default_dt(), keep=False)
        return pts

    def trajectory(self, h, t0, t1, dt=None):
        """
        Sampled trajectories of points between ``t0`` and ``t1``.

        Returns:
            tuple. Times of shape (T,) and points of shape (T, ..., 2).
        """
        dt = dt or self.default_dt()
        if self.closed_form:
            times = _time_grid(t0, t1, dt)
            h = normalize(h)
            pts = np.stack([self.advance(h, t0, t) for t in times])
            return times, pts
        return self._integrate(h, t0, t1, dt, keep=True)

    def _chart_field(self, c, at_inf, t):
        h = _from_chart(c, at_inf)
        hdot = self.field(h, t)
        # With one coordinate equal to 1 the chart velocity is linear in hdot.
        return np.where(at_inf,
                        hdot[..., 1] - c * hdot[..., 0],
                        hdot[..., 0] - c * hdot[..., 1])

    def _integrate(self, h, t0, t1, dt, keep=False):
        """
        Classical fourth-order Runge-Kutta in chart coordinates, handing off
        to the other chart whenever ``|c| > 1``.
        """
        h = normalize(h)
        shape = h.shape
        h = h.reshape(-1, 2)
        at_inf = np.abs(h[:, 0]) > np.abs(h[:, 1])
        with np.errstate(divide='ignore', invalid='ignore'):
            c = np.where(at_inf, h[:, 1] / h[:, 0], h[:, 0] / h[:, 1])

        times = _time_grid(t0, t1, dt)
        tol = CONVENTIONS['integration_tol']
        out = [h.reshape(shape)] if keep else None
        for k in range(times.size - 1):
            t, step = times[k], times[k + 1] - times[k]
            k1 = self._chart_field(c, at_inf, t)
            k2 = self._chart_field(c + 0.5 * step * k1, at_inf, t + 0.5 * step)
            k3 = self._chart_field(c + 0.5 * step * k2, at_inf, t + 0.5 * step)
            k4 = self._chart_field(c + step * k3, at_inf, t + step)
            err = abs(step) * np.abs(k1 - k2 - k3 + k4) / 6
            if not np.all(np.isfinite(err)) or np.any(err > tol):
                m = "Step error estimate {:.3g} exceeds {:.3g} at t={:.6g}; reduce dt."
                raise IntegrationBlowup(m.format(float(np.nanmax(err)), tol, t))
            c = c + step * (k1 + 2 * k2 + 2 * k3 + k4) / 6
            swap = np.abs(c) > 1
            if np.any(swap):
                c = np.where(swap, 1 / np.where(swap, c, 1), c)
                at_inf = at_inf ^ swap
            if keep:
                out.append(normalize(_from_chart(c, at_inf)).reshape(shape))
        if keep:
            return times, np.stack(out)
        return times, normalize(_from_chart(c, at_inf)).reshape(shape)

    def then(self, other):
        """
        The flow that follows this one and then ``other``.
        """
        parts = []
        for f in (self, other):
            parts.extend(f.parts if isinstance(f, Concatenation) else [f])
        return Concatenation(parts)

    def power(self, k):
        """
        The flow repeated ``k`` times.
        """
        if k < 1:
            raise FlowError("power needs k >= 1.")
        if k == 1:
            return self
        return Concatenation([self] * int(k))

    def conjugated(self, frame):
        """
        The flow ``R phi_t R^-1`` for a rigid rotation ``R``.
        """
        return Conjugated(self, frame)

    def reparametrized(self, times, values):
        """
        The flow ``phi_tau(s)`` for the monotone piecewise-linear clock
        through the knots ``(times, values)``.
        """
        return Reparametrized(self, times, values)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def digest(self):
        return hashlib.sha1(self.to_json().encode('utf-8')).hexdigest()

    @classmethod
    def from_dict(cls, d):
        kinds = {c.kind: c for c in (RotationalFlow, HamiltonianFlow, Concatenation,
                                     Reparametrized, Conjugated)}
        try:
            return kinds[d['kind']]._from_dict(d)
        except KeyError:
            m = "Unknown or missing flow kind in {}.".format(sorted(d))
            raise FlowError(m)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_json_file(cls, filename):
        with open(filename, 'r') as fp:
            return cls.from_dict(json.load(fp))

    @classmethod
    def rotational(cls, profile, duration=1.0):
        return RotationalFlow(profile, duration)

    @classmethod
    def hamiltonian(cls, grid, duration=1.0):
        return HamiltonianFlow(grid, duration)

    @classmethod
    def identity(cls, duration=1.0):
        return RotationalFlow(RadialProfile.constant(0.0), duration)


def _time_grid(t0, t1, dt):
    if dt <= 0:
        raise FlowError("dt must be positive.")
    steps = max(1, int(math.ceil(abs(t1 - t0) / dt - 1e-9)))
    times = t0 + (t1 - t0) * np.arange(steps + 1) / steps
    times[-1] = t1
    return times


class RotationalFlow(FlowSpec):
    """
    The flow ``zeta -> exp(2 pi i t omega(|zeta|)) zeta``. It fixes 0 and
    infinity and preserves every circle ``|zeta| = r``.
    """
    kind = 'rotational'
    closed_form = True

    def __init__(self, profile, duration=1.0):
        super().__init__(duration)
        if not isinstance(profile, RadialProfile):
            raise FlowError("A rotational flow needs a RadialProfile.")
        self.profile = profile

    def __repr__(self):
        return "RotationalFlow({}, duration={})".format(self.profile, self.duration)

    def _omega(self, h):
        z, w = h[..., 0], h[..., 1]
        with np.errstate(divide='ignore', invalid='ignore'):
            r = np.where(w == 0, np.inf, np.abs(z) / np.abs(np.where(w == 0, 1, w)))
        return self.profile(r)

    def field(self, h, t):
        h = np.asarray(h, dtype=complex)
        hdot = np.zeros_like(h)
        hdot[..., 0] = 2j * np.pi * self._omega(h) * h[..., 0]
        return hdot

    def advance(self, h, t0, t1, dt=None):
        h = normalize(h)
        turn = np.exp(2j * np.pi * (t1 - t0) * self._omega(h))
        out = h.copy()
        out[..., 0] = h[..., 0] * turn
        return normalize(out)

    def trajectory(self, h, t0, t1, dt=None):
        times = _time_grid(t0, t1, dt or self.default_dt())
        h = normalize(h)
        omega = self._omega(h)
        dt_ = (times - t0).reshape((-1,) + (1,) * np.ndim(omega))
        pts = np.empty((times.size,) + h.shape, dtype=complex)
        pts[..., 0] = h[..., 0] * np.exp(2j * np.pi * dt_ * omega)
        pts[..., 1] = h[..., 1]
        return times, normalize(pts)

    def inverse(self):
        return RotationalFlow(self.profile.negated(), self.duration)

    def power(self, k):
        if k < 1:
            raise FlowError("power needs k >= 1.")
        return RotationalFlow(self.profile, self.duration * k)

    def scaled(self, t):
        """
        The flow run for ``t`` times as long.
        """
        return RotationalFlow(self.profile, self.duration * t)

    def to_dict(self):
        return {'kind': self.kind,
                'duration': self.duration,
                'profile': self.profile.to_dict(),
                }

    @classmethod
    def _from_dict(cls, d):
        return cls(RadialProfile.from_dict(d['profile']), d.get('duration', 1.0))


class HamiltonianFlow(FlowSpec):
    """
    The flow of a Hamiltonian sampled on a longitude-height grid.

    The grid has shape (keyframes, heights, longitudes). Heights run from
    -1 (the point at infinity) to 1 (the chart-0 origin) inclusive, so the
    first and last rows must be constant. Longitudes are periodic. Keyframes
    are spread evenly over the duration and interpolated linearly.

    The field is the exact symplectic gradient of the piecewise-bilinear
    interpolant with respect to the area form ``dphi ^ dz``, so it is
    divergence-free with continuous normal component across cells.
    """
    kind = 'hamiltonian'

    def __init__(self, grid, duration=1.0):
        super().__init__(duration)
        g = np.array(grid, dtype=float)
        if g.ndim == 2:
            g = g[None]
        if g.ndim != 3 or g.shape[1] < 2 or g.shape[2] < 3:
            raise FlowError("grid must have shape (keyframes, heights >= 2, longitudes >= 3).")
        if not np.all(np.isfinite(g)):
            raise FlowError("grid values must be finite.")
        scale = max(1.0, float(np.max(np.abs(g))))
        for row in (0, -1):
            if np.max(np.ptp(g[:, row, :], axis=-1)) > 1e-12 * scale:
                raise FlowError("The Hamiltonian must be constant on the pole rows.")
        g.flags.writeable = False
        self.grid = g

    def __repr__(self):
        return "HamiltonianFlow(grid shape {}, duration={})".format(self.grid.shape, self.duration)

    @property
    def keyframe_times(self):
        k = self.grid.shape[0]
        if k == 1:
            return np.array([0.0])
        return np.linspace(0, self.duration, k)

    def _corners(self, j, l, l1, t):
        g = self.grid
        if g.shape[0] == 1:
            frames, lam = (0, 0), 0.0
        else:
            pos = np.clip(t / self.duration, 0, 1) * (g.shape[0] - 1)
            k0 = min(int(math.floor(pos)), g.shape[0] - 2)
            frames, lam = (k0, k0 + 1), pos - k0

        def at(jj, ll):
            return (1 - lam) * g[frames[0], jj, ll] + lam * g[frames[1], jj, ll]
        return at(j, l), at(j, l1), at(j + 1, l), at(j + 1, l1)

    def gradient(self, phi, height, t):
        """
        Partial derivatives of the interpolated Hamiltonian.

        Returns:
            tuple. (dH/dphi, dH/dz)
        """
        nz, nphi = self.grid.shape[1:]
        dphi, dz = 2 * np.pi / nphi, 2 / (nz - 1)
        a_f = np.mod(phi, 2 * np.pi) / dphi
        l = np.minimum(np.floor(a_f).astype(int), nphi - 1)
        a = a_f - l
        l1 = (l + 1) % nphi
        b_f = (np.clip(height, -1, 1) + 1) / dz
        j = np.clip(np.floor(b_f).astype(int), 0, nz - 2)
        b = np.clip(b_f - j, 0, 1)
        h00, h10, h01, h11 = self._corners(j, l, l1, t)
        d_phi = ((1 - b) * (h10 - h00) + b * (h11 - h01)) / dphi
        d_z = ((1 - a) * (h01 - h00) + a * (h11 - h10)) / dz
        return d_phi, d_z

    def value(self, phi, height, t):
        """
        The interpolated Hamiltonian.
        """
        nz, nphi = self.grid.shape[1:]
        dphi, dz = 2 * np.pi / nphi, 2 / (nz - 1)
        a_f = np.mod(phi, 2 * np.pi) / dphi
        l = np.minimum(np.floor(a_f).astype(int), nphi - 1)
        a = a_f - l
        b_f = (np.clip(height, -1, 1) + 1) / dz
        j = np.clip(np.floor(b_f).astype(int), 0, nz - 2)
        b = np.clip(b_f - j, 0, 1)
        h00, h10, h01, h11 = self._corners(j, l, (l + 1) % nphi, t)
        return (1 - a) * (1 - b) * h00 + a * (1 - b) * h10 + (1 - a) * b * h01 + a * b * h11

    def field(self, h, t):
        h = np.asarray(h, dtype=complex)
        v = to_vectors(h)
        phi = np.arctan2(v[..., 1], v[..., 0])
        height = v[..., 2]
        d_phi, d_z = self.gradient(phi, height, t)
        phi_dot, z_dot = d_z, -d_phi
        den = 1 - height**2
        pole = den <= 1e-15
        rate = 1j * phi_dot - np.where(pole, 0, z_dot) / np.where(pole, 1, den)
        # (z A, 0) and (0, -w A) differ by a multiple of h; use the average.
        hdot = np.empty_like(h)
        hdot[..., 0] = 0.5 * rate * h[..., 0]
        hdot[..., 1] = -0.5 * rate * h[..., 1]
        return hdot

    def inverse(self):
        return HamiltonianFlow(-self.grid[::-1], self.duration)

    def to_dict(self):
        return {'kind': self.kind,
                'duration': self.duration,
                'grid': self.grid.tolist(),
                }

    @classmethod
    def _from_dict(cls, d):
        return cls(d['grid'], d.get('duration', 1.0))

    @classmethod
    def from_function(cls, func, heights=33, longitudes=64, keyframes=1, duration=1.0):
        """
        Sample ``func(phi, z, t)`` on a grid. Pole rows are replaced by their
        mean.
        """
        z = np.linspace(-1, 1, heights)
        phi = 2 * np.pi * np.arange(longitudes) / longitudes
        times = np.linspace(0, duration, keyframes) if keyframes > 1 else np.array([0.0])
        P, Z = np.meshgrid(phi, z)
        grid = np.stack([np.asarray(func(P, Z, t), dtype=float) * np.ones_like(P) for t in times])
        grid[:, 0, :] = grid[:, 0, :].mean(axis=-1, keepdims=True)
        grid[:, -1, :] = grid[:, -1, :].mean(axis=-1, keepdims=True)
        return cls(grid, duration)

    @classmethod
    def height_function(cls, c=1.0, duration=1.0):
        """
        ``H = c z``: the rigid rotation by ``c`` radians per unit time.
        """
        return cls.from_function(lambda p, z, t: c * z, heights=3, longitudes=4, duration=duration)

    @classmethod
    def random(cls, seed, heights=9, longitudes=16, keyframes=2, amplitude=1.0, duration=1.0):
        """
        A random smooth-ish Hamiltonian from a few low spherical modes. Each
        keyframe draws its own mode coefficients; time dependence comes from
        interpolating between keyframes.
        """
        rng = np.random.default_rng(seed)
        coef = amplitude * rng.standard_normal((keyframes, 6))

        z = np.linspace(-1, 1, heights)
        phi = 2 * np.pi * np.arange(longitudes) / longitudes
        P, Z = np.meshgrid(phi, z)
        S = np.sqrt(np.clip(1 - Z**2, 0, 1))
        modes = np.stack([Z, S * np.cos(P), S * np.sin(P), (3 * Z**2 - 1) / 2,
                          S * Z * np.cos(P), S**2 * np.sin(2 * P)])
        grid = np.tensordot(coef, modes, axes=1)
        grid[:, 0, :] = grid[:, 0, :].mean(axis=-1, keepdims=True)
        grid[:, -1, :] = grid[:, -1, :].mean(axis=-1, keepdims=True)
        return cls(grid, duration)


class Concatenation(FlowSpec):
    """
    Flows run one after the other.
    """
    kind = 'concatenation'

    def __init__(self, parts):
        parts = list(parts)
        if not parts or not all(isinstance(p, FlowSpec) for p in parts):
            raise FlowError("A concatenation needs at least one flow.")
        super().__init__(sum(p.duration for p in parts))
        self.parts = parts
        self.starts = np.concatenate([[0.0], np.cumsum([p.duration for p in parts])])
        self.closed_form = all(p.closed_form for p in parts)

    def __repr__(self):
        return "Concatenation({})".format(self.parts)

    def _locate(self, t):
        k = int(np.searchsorted(self.starts, t, side='right') - 1)
        return min(max(k, 0), len(self.parts) - 1)

    def field(self, h, t):
        k = self._locate(t)
        return self.parts[k].field(h, t - self.starts[k])

    def _pieces(self, t0, t1):
        """
        Yield (part index, local start, local end) covering [t0, t1].
        """
        for k, part in enumerate(self.parts):
            a, b = self.starts[k], self.starts[k + 1]
            lo, hi = max(t0, a), min(t1, b)
            if hi > lo or (t0 == t1 and a <= t0 <= b):
                yield k, lo - a, hi - a
                if t0 == t1:
                    return

    def advance(self, h, t0, t1, dt=None):
        h = normalize(h)
        if t1 < t0:
            pieces = list(self._pieces(t1, t0))[::-1]
            for k, lo, hi in pieces:
                h = self.parts[k].advance(h, hi, lo, dt)
            return h
        for k, lo, hi in self._pieces(t0, t1):
            h = self.parts[k].advance(h, lo, hi, dt)
        return h

    def trajectory(self, h, t0, t1, dt=None):
        h = normalize(h)
        times, pts = [], []
        for k, lo, hi in self._pieces(t0, t1):
            tt, pp = self.parts[k].trajectory(h, lo, hi, dt)
            h = pp[-1]
            skip = 1 if times else 0
            times.append(tt[skip:] + self.starts[k])
            pts.append(pp[skip:])
        return np.concatenate(times), np.concatenate(pts)

    def inverse(self):
        return Concatenation([p.inverse() for p in reversed(self.parts)])

    def to_dict(self):
        return {'kind': self.kind,
                'parts': [p.to_dict() for p in self.parts],
                }

    @classmethod
    def _from_dict(cls, d):
        return cls([FlowSpec.from_dict(p) for p in d['parts']])


class Reparametrized(FlowSpec):
    """
    The flow ``s -> phi_tau(s)`` for a monotone piecewise-linear clock
    ``tau`` with ``tau(0) = 0`` and ``tau(end) = base.duration``. Its field
    is ``tau'(s) X_tau(s)``.
    """
    kind = 'reparametrized'

    def __init__(self, base, times, values):
        s = np.array(times, dtype=float).ravel()
        tau = np.array(values, dtype=float).ravel()
        if s.size < 2 or s.size != tau.size:
            raise FlowError("A clock needs at least two knots.")
        if s[0] != 0 or np.any(np.diff(s) <= 0):
            raise FlowError("Clock times must start at 0 and increase.")
        if tau[0] != 0 or np.any(np.diff(tau) < 0) or not np.isclose(tau[-1], base.duration):
            raise FlowError("Clock values must run monotonically from 0 to the base duration.")
        super().__init__(s[-1])
        s.flags.writeable = False
        tau.flags.writeable = False
        self.base = base
        self.times = s
        self.values = tau
        self.closed_form = base.closed_form

    def clock(self, s):
        return np.interp(s, self.times, self.values)

    def rate(self, s):
        k = int(np.clip(np.searchsorted(self.times, s, side='right') - 1, 0, self.times.size - 2))
        return (self.values[k + 1] - self.values[k]) / (self.times[k + 1] - self.times[k])

    def field(self, h, t):
        return self.rate(t) * self.base.field(h, self.clock(t))

    def advance(self, h, t0, t1, dt=None):
        return self.base.advance(h, float(self.clock(t0)), float(self.clock(t1)), dt)

    def trajectory(self, h, t0, t1, dt=None):
        dt = dt or self.default_dt()
        times = _time_grid(t0, t1, dt)
        h = normalize(h)
        if self.closed_form:
            pts = [self.base.advance(h, float(self.clock(t0)), float(self.clock(t))) for t in times]
        else:
            pts = [h]
            for a, b in zip(times[:-1], times[1:]):
                pts.append(self.base.advance(pts[-1], float(self.clock(a)), float(self.clock(b)), dt))
        return times, np.stack(pts)

    def inverse(self):
        s = self.times[-1] - self.times[::-1]
        tau = self.base.duration - self.values[::-1]
        tau[0], tau[-1] = 0.0, self.base.duration
        return Reparametrized(self.base.inverse(), s, tau)

    def to_dict(self):
        return {'kind': self.kind,
                'base': self.base.to_dict(),
                'clock': {'times': self.times.tolist(), 'values': self.values.tolist()},
                }

    @classmethod
    def _from_dict(cls, d):
        clock = d['clock']
        return cls(FlowSpec.from_dict(d['base']), clock['times'], clock['values'])


class Conjugated(FlowSpec):
    """
    The flow ``R phi_t R^-1`` for a rigid rotation ``R``.
    """
    kind = 'conjugated'

    def __init__(self, base, frame):
        if not isinstance(frame, Mobius):
            frame = Mobius(frame, normalize=False)
        if not frame.is_rotation:
            raise FlowError("Flows can only be conjugated by rigid rotations.")
        super().__init__(base.duration)
        self.base = base
        self.frame = frame
        self._inv = frame.inverse()
        self.closed_form = base.closed_form

    def field(self, h, t):
        h = np.asarray(h, dtype=complex)
        h0 = h @ self._inv.matrix.T
        return self.frame.push(self.base.field(h0, t))

    def advance(self, h, t0, t1, dt=None):
        return self.frame(self.base.advance(self._inv(h), t0, t1, dt))

    def trajectory(self, h, t0, t1, dt=None):
        times, pts = self.base.trajectory(self._inv(h), t0, t1, dt)
        return times, self.frame(pts)

    def inverse(self):
        return Conjugated(self.base.inverse(), self.frame)

    def to_dict(self):
        m = self.frame.matrix
        return {'kind': self.kind,
                'base': self.base.to_dict(),
                'frame': [[[v.real, v.imag] for v in row] for row in m.tolist()],
                }

    @classmethod
    def _from_dict(cls, d):
        m = np.array([[complex(re, im) for re, im in row] for row in d['frame']])
        return cls(FlowSpec.from_dict(d['base']), Mobius(m, normalize=False))


def evolve(flow, p, t0, t1, dt=None):
    """
    Sampled trajectory of a point (or of an array of points) under a flow.

    Args:
        flow (FlowSpec): The flow.
        p (ProjPoint or ndarray): A point, or homogeneous points (..., 2).
        t0 (float): Start time.
        t1 (float): End time, at least ``t0``.
        dt (float): Time step. Default is a fixed fraction of the duration.

    Returns:
        Trajectory. Times of shape (T,) and points of shape (T, ..., 2).
    """
    if dt is None:
        dt = flow.default_dt()
    if dt <= 0:
        raise FlowError("dt must be positive.")
    slack = 1e-12 * flow.duration
    if not (-slack <= t0 <= t1 <= flow.duration + slack):
        m = "The interval [{}, {}] is not inside [0, {}]."
        raise FlowError(m.format(t0, t1, flow.duration))
    h = p.h if isinstance(p, ProjPoint) else p
    times, pts = flow.trajectory(h, t0, t1, dt)
    return Trajectory(times, pts)


def lp_length(flow, p, t_steps, mc_samples, seed):
    """
    The L^p length: the time integral of the p-th mean of the round speed
    against the normalized measure. Time is integrated by the midpoint rule
    and space by Monte Carlo with the same sample at every time.

    Args:
        flow (FlowSpec): The flow.
        p (float): Exponent, at least 1.
        t_steps (int): Number of time cells.
        mc_samples (int): Number of points.
        seed (int): Seed for the points.

    Returns:
        LpLength. The estimate and its standard error (delta method).
    """
    if p < 1:
        raise FlowError("p must be at least 1.")
    if t_steps < 1 or mc_samples < 2:
        raise FlowError("Need t_steps >= 1 and mc_samples >= 2.")
    x = random_points(seed, mc_samples)
    dt = flow.duration / t_steps
    tm = (np.arange(t_steps) + 0.5) * dt
    powered = np.stack([flow.speed(x, t)**p for t in tm])
    means = powered.mean(axis=1)
    value = float(dt * np.sum(means**(1 / p)))
    with np.errstate(divide='ignore'):
        weights = np.where(means > 0, dt * means**(1 / p - 1) / p, 0.0)
    per_point = weights @ powered
    stderr = float(np.std(per_point, ddof=1) / np.sqrt(mc_samples))
    return LpLength(value, stderr)
