"""
Averaged braid quasimorphisms of area-preserving flows.

A flow and a configuration give a based loop; its braid word, fed to an
invariant of pure braids and averaged over configurations, gives a
quasimorphism on flows. Estimates are homogenized by comparing the loops of
the flow run ``K`` and ``2K`` times.

:copyright: 2026 The spherebraid authors
:license: Apache 2.0
"""
from collections import namedtuple
import logging
import warnings

import numpy as np
from scipy.integrate import dblquad
from scipy.integrate import quad
from scipy.stats import beta

from .braid import BraidError
from .braid import NonGenericDirection
from .braid import extract_braid
from .braid import planarize
from .braid import word_norm_bound
from .configuration import Configuration
from .configuration import ConfigurationError
from .configuration import basepoint
from .configuration import sample_configuration
from .configuration import trace_loop
from .defaults import CONVENTIONS
from .flows import FlowSpec
from .flows import RadialProfile
from .flows import RotationalFlow
from .invariants import closure_signature
from .invariants import twist_coefficient
from .invariants import twist_s_value
from .utils import mean_and_stderr
from .utils import rng
from .utils import run_parallel
from .utils import spawn_seeds

log = logging.getLogger(__name__)

BASE_QMS = ('s', 'signature', 'lk')


class EstimateError(Exception):
    """
    Generic error class.
    """
    pass


class EstimateUnstable(EstimateError):
    pass


class SingularMatrix(EstimateError):
    pass


class QMEstimate(namedtuple('QMEstimate', ['mean', 'stderr', 'n_samples', 'seed', 'n_points'])):
    """
    A Monte Carlo estimate with its standard error.
    """
    __slots__ = ()

    def __str__(self):
        return "{:.6g} ± {:.2g} (n={}, samples={}, seed={})".format(
            self.mean, self.stderr, self.n_points, self.n_samples, self.seed)

    @property
    def unstable(self):
        return self.stderr > abs(self.mean)

    def agrees_with(self, value, sigmas=3, floor=0.0):
        """
        Whether ``value`` is within ``sigmas`` standard errors.
        """
        return abs(self.mean - value) <= sigmas * self.stderr + floor

    def as_dict(self):
        return dict(self._asdict())


EmbeddingSpec = namedtuple('EmbeddingSpec', ['d', 'profiles', 'matrix', 'coefficients', 'condition'])
DefectReport = namedtuple('DefectReport', ['rows', 'max_defect'])


def _raw_value(base_qm, word):
    if base_qm == 'lk':
        return float(word.exponent_sum)
    word = word.free_reduce()
    sig = closure_signature(word, exact=False)
    if base_qm == 'signature':
        return float(sig)
    return sig - twist_coefficient(word.strands) * word.exponent_sum


def _generic_word(planar, g):
    for _ in range(CONVENTIONS['direction_retries']):
        try:
            return extract_braid(planar, g.uniform(0, 2 * np.pi))
        except NonGenericDirection:
            continue
    raise NonGenericDirection("No generic direction found.")


def _gg_sample(task):
    """
    The per-configuration value of one Monte Carlo sample.
    """
    flow, base_qm, n, seed, hq, system, dt, periods = task
    g = rng(seed)
    q = Configuration(hq)
    powers = (periods, 2 * periods) if periods else (1,)
    resampled = 0
    for _ in range(CONVENTIONS['resample_budget']):
        x = sample_configuration(n, g, system=system, q=q)
        try:
            values = []
            for k in powers:
                loop = trace_loop(flow.power(k), x, q, system, dt)
                word = _generic_word(planarize(loop), g)
                if not word.is_pure:
                    raise EstimateError("Extracted a non-pure braid {}.".format(word))
                values.append(_raw_value(base_qm, word))
        except (ConfigurationError, BraidError):
            resampled += 1
            continue
        if periods:
            return (values[1] - values[0]) / periods, resampled
        return values[0], resampled
    raise EstimateError("Resample budget exhausted.")


def gg_estimate(flow, base_qm='s', n=4, samples=None, seed=0, periods=None,
                system='geodesic', dt=None, workers=1, strict=False):
    """
    Monte Carlo estimate of the averaged quasimorphism of a flow.

    Args:
        flow (FlowSpec): The flow.
        base_qm (str): 's' (signature corrected to vanish on the full
            twist), 'signature' or 'lk' (exponent sum).
        n (int): Number of points, at least 4.
        samples (int): Number of configurations.
        seed (int): Root seed; sample k always uses the k-th child seed.
        periods (int): Homogenization depth K. The value of a sample is
            ``(r(2K) - r(K)) / K`` where ``r(k)`` is the invariant of the
            loop of the flow run k times. 0 gives the raw, single-loop
            value.
        system (str): Short-path system.
        dt (float): Integration step of the flow.
        workers (int): Worker processes.
        strict (bool): Raise EstimateUnstable instead of warning.

    Returns:
        QMEstimate.
    """
    if base_qm not in BASE_QMS:
        raise EstimateError("base_qm must be one of {}.".format(', '.join(BASE_QMS)))
    if n < 4:
        raise EstimateError("Need n >= 4.")
    if samples is None:
        samples = CONVENTIONS['samples']
    if periods is None:
        periods = CONVENTIONS['loop_periods']
    if dt is None:
        dt = flow.default_dt()
    q = basepoint(n)
    tasks = [(flow, base_qm, n, s, q.h, system, dt, periods) for s in spawn_seeds(seed, samples)]
    results = run_parallel(_gg_sample, tasks, workers)
    values = np.array([r[0] for r in results])
    resampled = sum(r[1] for r in results)
    if resampled:
        log.info("Resampled %d degenerate configurations.", resampled)
    mean, stderr = mean_and_stderr(values)
    estimate = QMEstimate(mean, stderr, samples, seed, n)
    log.info("%s estimate: %s", base_qm, estimate)
    if estimate.unstable:
        m = "Standard error exceeds the mean: {}.".format(estimate)
        if strict:
            raise EstimateUnstable(m)
        warnings.warn(m, stacklevel=2)
    return estimate


def _height_profile(omega):
    """
    A callable of the height and the breakpoints to hand to quadrature.
    """
    if isinstance(omega, RotationalFlow):
        omega = omega.profile
    if isinstance(omega, RadialProfile):
        h = omega.heights
        return omega.transformed, sorted(set(h[(h > -1) & (h < 1)].tolist()))
    if callable(omega):
        return omega, []
    raise EstimateError("Expected a RadialProfile, a rotational flow or a callable.")


def _quad(func, points):
    value, _ = quad(func, -1, 1, points=points or None, epsabs=1e-13, epsrel=1e-12,
                    limit=max(200, 4 * len(points)))
    return value


def sign_qm_closed_form(omega, n, t=1.0):
    """
    The homogenized signature quasimorphism on 2n points of the rotation
    flow run for time ``t``:

        t (n / 2) ∫ (u^(2n-1) - u) ω̃(u) du   over [-1, 1].

    Args:
        omega (RadialProfile or RotationalFlow or callable): The profile,
            or a rotational flow (whose duration multiplies ``t``), or ω̃
            as a function of the height.
        n (int): Half the number of points, at least 2.
        t (float): Time.

    Returns:
        float.
    """
    if n < 2:
        raise EstimateError("Need n >= 2.")
    if isinstance(omega, RotationalFlow):
        t = t * omega.duration
    func, points = _height_profile(omega)
    value = _quad(lambda u: (u**(2 * n - 1) - u) * float(func(u)), points)
    return t * n / 2 * value


def twist_decomposition_value(omega, points, duration=1.0):
    """
    The same quantity from the braid side: a rotation flow is the product
    of full twists of the j innermost points, turned by the difference of
    the profile at the j-th and (j+1)-th radii. The expected difference is
    an integral against order-statistic densities.

    Args:
        omega: As for ``sign_qm_closed_form``.
        points (int): Number of points, at least 4.
        duration (float): Time.

    Returns:
        float.
    """
    if isinstance(omega, RotationalFlow):
        duration = duration * omega.duration
    func, breaks = _height_profile(omega)
    m = points - 1

    def expected(j):
        # The j-th largest height of `points` uniform heights.
        dist = beta(points + 1 - j, j)
        return _quad(lambda u: float(func(u)) * dist.pdf((u + 1) / 2) / 2, breaks)

    omega_j = [expected(j) for j in range(1, points + 1)]
    total = sum(twist_s_value(j, m) * (omega_j[j - 1] - omega_j[j]) for j in range(1, points))
    return duration * total


def lk_closed_form(omega, points, duration=1.0):
    """
    Homogenized exponent-sum quasimorphism of a rotation flow: the winding
    rate of every pair of points is the difference of their rotation rates,
    integrated over two independent uniform heights.

    The result is 0 up to quadrature error for every profile, since the
    exponent sum is a homomorphism on a perfect group.
    """
    if points < 4:
        raise EstimateError("Need at least four points.")
    func, _ = _height_profile(omega)
    value, _ = dblquad(lambda v, u: (float(func(u)) - float(func(v))) / 4, -1, 1, -1, 1,
                       epsabs=1e-12, epsrel=1e-10)
    pairs = points * (points - 1) // 2
    return duration * pairs * value


def _word_norm_sample(task):
    flow, n, seed, hq, system, dt, C = task
    g = rng(seed)
    q = Configuration(hq)
    for _ in range(CONVENTIONS['resample_budget']):
        x = sample_configuration(n, g, system=system, q=q)
        try:
            return float(word_norm_bound(trace_loop(flow, x, q, system, dt), C=C, seed=g))
        except (ConfigurationError, BraidError):
            continue
    raise EstimateError("Resample budget exhausted.")


def average_word_norm(flow, n=4, samples=None, seed=0, C=None, system='affine', dt=None, workers=1):
    """
    Monte Carlo average of the braid word-length bound of the loops of a
    flow.

    Returns:
        QMEstimate.
    """
    if samples is None:
        samples = CONVENTIONS['samples']
    if dt is None:
        dt = flow.default_dt()
    q = basepoint(n)
    tasks = [(flow, n, s, q.h, system, dt, C) for s in spawn_seeds(seed, samples)]
    values = run_parallel(_word_norm_sample, tasks, workers)
    mean, stderr = mean_and_stderr(values)
    return QMEstimate(mean, stderr, samples, seed, n)


def build_embedding(d, seed=0, retries=None):
    """
    Profiles supported on disjoint annuli and the linear combinations of
    signature quasimorphisms that are dual to them.

    Profile j is a bump on the annulus [j, j + 0.5]. Row k of the matrix
    holds the closed-form quasimorphism on 2k + 4 points, so that
    ``coefficients @ matrix`` is the identity.

    Args:
        d (int): Number of profiles.
        seed (int): Seed for the height jitter used after a bad draw.
        retries (int): Number of draws.

    Returns:
        EmbeddingSpec.
    """
    if d < 1:
        raise EstimateError("Need d >= 1.")
    if retries is None:
        retries = CONVENTIONS['embedding_retries']
    g = rng(seed)
    heights = np.ones(d)
    for attempt in range(retries):
        profiles = [RadialProfile.bump(j, j + 0.5, heights[j - 1]) for j in range(1, d + 1)]
        matrix = np.array([[sign_qm_closed_form(p, k + 2) for p in profiles] for k in range(d)])
        condition = float(np.linalg.cond(matrix))
        if np.isfinite(condition) and condition < CONVENTIONS['embedding_condition']:
            coefficients = np.linalg.inv(matrix)
            return EmbeddingSpec(d, profiles, matrix, coefficients, condition)
        log.debug("Embedding draw %d has condition %.3g.", attempt, condition)
        heights = g.uniform(0.5, 1.5, size=d)
    m = "No well-conditioned embedding matrix in {} draws."
    raise SingularMatrix(m.format(retries))


def validate_embedding(spec, samples=None, seed=0, workers=1):
    """
    Monte Carlo values of the dual quasimorphisms on the rotation flows of
    the embedding profiles.

    Returns:
        tuple. Means and standard errors, each of shape (d, d); entry
            (i, j) should be 1 when i == j and 0 otherwise.
    """
    d = spec.d
    means = np.zeros((d, d))
    errors = np.zeros((d, d))
    for j, profile in enumerate(spec.profiles):
        flow = RotationalFlow(profile)
        estimates = [gg_estimate(flow, 's', n=2 * k + 4, samples=samples, seed=seed, workers=workers)
                     for k in range(d)]
        sign = np.array([e.mean for e in estimates])
        se = np.array([e.stderr for e in estimates])
        means[:, j] = spec.coefficients @ sign
        errors[:, j] = np.sqrt((spec.coefficients**2) @ se**2)
    return means, errors


def qm_defect_probe(base_qm, flow_pairs, n=4, samples=None, seed=0, workers=1):
    """
    Empirical defect ``|Φ(φψ) - Φ(φ) - Φ(ψ)|`` on pairs of flows, using the
    same seed for all three estimates.

    Returns:
        DefectReport.
    """
    rows = []
    for phi, psi in flow_pairs:
        both = gg_estimate(phi.then(psi), base_qm, n, samples, seed, workers=workers)
        one = gg_estimate(phi, base_qm, n, samples, seed, workers=workers)
        two = gg_estimate(psi, base_qm, n, samples, seed, workers=workers)
        defect = abs(both.mean - one.mean - two.mean)
        stderr = float(np.sqrt(both.stderr**2 + one.stderr**2 + two.stderr**2))
        rows.append({'duration': phi.duration + psi.duration, 'defect': defect, 'stderr': stderr})
    max_defect = max((r['defect'] for r in rows), default=0.0)
    return DefectReport(rows, max_defect)
