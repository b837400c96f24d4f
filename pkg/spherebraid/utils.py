"""
Helper functions for the spherebraid package.

"""
from collections import namedtuple
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
import logging

import numpy as np
import scipy.stats

from .defaults import CONVENTIONS

log = logging.getLogger(__name__)

Fit = namedtuple('Fit', ['slope', 'intercept', 'residual', 'stderr'])
Trend = namedtuple('Trend', ['slope', 'stderr', 'tstat'])


class UtilsError(Exception):
    """
    Generic error class.
    """
    pass


def rng(seed):
    """
    Make a numpy Generator from an int, a SeedSequence or a Generator.

    Args:
        seed (int or SeedSequence or Generator): The seed.

    Returns:
        numpy.random.Generator
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_seeds(seed, count):
    """
    A per-sample seed schedule. Sample ``k`` always gets the same stream,
    whatever the number of workers.

    Args:
        seed (int): The root seed.
        count (int): How many child seeds.

    Returns:
        list. A list of ``SeedSequence``.
    """
    return np.random.SeedSequence(seed).spawn(count)


def _install_conventions(values):
    CONVENTIONS.update(values)


def run_parallel(func, tasks, workers=1):
    """
    Map ``func`` over ``tasks``, in order, optionally in worker processes.
    Worker processes start from the conventions active in the caller.

    Args:
        func (callable): A picklable, module-level function.
        tasks (list): Arguments, one per call.
        workers (int): Number of processes. 1 means run in-process.

    Returns:
        list. The results, in the order of ``tasks``.
    """
    if workers is None or workers <= 1 or len(tasks) < 2:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers, initializer=_install_conventions,
                             initargs=(dict(CONVENTIONS),)) as pool:
        return list(pool.map(func, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def mean_and_stderr(values):
    """
    Sample mean and its standard error.

    Args:
        values (array-like): The samples.

    Returns:
        tuple. (mean, stderr)
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    if n == 0:
        raise UtilsError("Cannot average an empty sample.")
    mean = float(np.mean(values))
    if n == 1:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / np.sqrt(n))


def affine_fit(x, y, through_origin=False):
    """
    Least-squares line through the points (x, y).

    Args:
        x (array-like): Abscissae.
        y (array-like): Ordinates.
        through_origin (bool): Whether to force a zero intercept.

    Returns:
        Fit. The slope, intercept, largest absolute residual and the
            standard error of the slope.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise UtilsError("Need at least two points to fit a line.")
    if through_origin:
        slope = float(np.dot(x, y) / np.dot(x, x))
        intercept = 0.0
        resid = y - slope * x
        dof = max(x.size - 1, 1)
        stderr = float(np.sqrt(np.dot(resid, resid) / dof / np.dot(x, x)))
    else:
        result = scipy.stats.linregress(x, y)
        slope, intercept = float(result.slope), float(result.intercept)
        resid = y - (slope * x + intercept)
        stderr = float(result.stderr) if x.size > 2 else 0.0
    return Fit(slope, intercept, float(np.max(np.abs(resid))), stderr)


def trend_test(x, y):
    """
    Slope of y against x with its t-statistic. A trend is 'absent' at
    ``k`` sigma when ``abs(tstat) < k``.

    Returns:
        Trend.
    """
    fit = affine_fit(x, y)
    if fit.stderr == 0:
        tstat = 0.0 if fit.slope == 0 else np.inf * np.sign(fit.slope)
    else:
        tstat = fit.slope / fit.stderr
    return Trend(fit.slope, fit.stderr, float(tstat))


def exact_signature(matrix):
    """
    Signature of a symmetric integer (or rational) matrix by congruence
    diagonalization over the rationals.

    Args:
        matrix (array-like): A square symmetric matrix.

    Returns:
        int. Number of positive minus number of negative eigenvalues.
    """
    a = [[Fraction(int(v)) if float(v).is_integer() else Fraction(v)
          for v in row] for row in np.asarray(matrix).tolist()]
    n = len(a)
    for i in range(n):
        for j in range(i):
            if a[i][j] != a[j][i]:
                raise UtilsError("Matrix is not symmetric.")

    alive = list(range(n))
    signature = 0
    while alive:
        pivot = next((i for i in alive if a[i][i] != 0), None)
        if pivot is None:
            pair = next(((i, j) for i in alive for j in alive
                         if i != j and a[i][j] != 0), None)
            if pair is None:
                break  # the rest is zero
            i, j = pair
            # Row and column operation r_i += r_j makes a[i][i] = 2 a[i][j].
            for k in alive:
                a[i][k] += a[j][k]
            for k in alive:
                a[k][i] += a[k][j]
            pivot = i
        p = a[pivot][pivot]
        signature += 1 if p > 0 else -1
        alive.remove(pivot)
        row = a[pivot]
        for r in alive:
            f = a[r][pivot]
            if f == 0:
                continue
            f = f / p
            ar = a[r]
            for c in alive:
                if row[c] != 0:
                    ar[c] -= f * row[c]
    return signature


def float_signature(matrix, tol=None):
    """
    Signature of a symmetric matrix from its eigenvalues.

    Args:
        matrix (array-like): A square symmetric matrix.
        tol (float): Relative threshold below which an eigenvalue counts as
            zero.

    Returns:
        int.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.size == 0:
        return 0
    if tol is None:
        tol = CONVENTIONS['signature_tol']
    eig = np.linalg.eigvalsh(matrix)
    cut = tol * max(1.0, float(np.max(np.abs(eig))))
    return int(np.sum(eig > cut) - np.sum(eig < -cut))


def adaptive_midpoint(func, a=0.0, b=1.0, n0=None, variation=None, rounds=None):
    """
    Integrate a vectorized function on [a, b] by the midpoint rule,
    bisecting every cell whose endpoint values differ by more than
    ``variation`` in relative terms.

    Args:
        func (callable): Maps an array of abscissae to an array of values.
        a (float): Lower limit.
        b (float): Upper limit.
        n0 (int): Initial number of cells.
        variation (float): Relative variation that triggers bisection.
        rounds (int): Maximum number of bisection rounds.

    Returns:
        float.
    """
    n0 = n0 or CONVENTIONS['quad_points']
    variation = variation or CONVENTIONS['quad_variation']
    rounds = rounds or CONVENTIONS['quad_rounds']

    edges = np.linspace(a, b, n0 + 1)
    values = np.asarray(func(edges), dtype=float)
    lo, hi = edges[:-1], edges[1:]
    flo, fhi = values[:-1], values[1:]

    total = 0.0
    for _ in range(rounds):
        scale = np.maximum(np.abs(flo), np.abs(fhi))
        bad = np.abs(flo - fhi) > variation * scale
        good = ~bad
        if np.any(good):
            total += _midpoint_sum(func, lo[good], hi[good])
        if not np.any(bad):
            return total
        lo, hi, flo, fhi = lo[bad], hi[bad], flo[bad], fhi[bad]
        mid = 0.5 * (lo + hi)
        fmid = np.asarray(func(mid), dtype=float)
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
        flo, fhi = np.concatenate([flo, fmid]), np.concatenate([fmid, fhi])

    log.debug("Adaptive quadrature stopped after %d rounds with %d open cells.",
              rounds, lo.size)
    return total + _midpoint_sum(func, lo, hi)


def _midpoint_sum(func, lo, hi):
    mid = 0.5 * (lo + hi)
    return float(np.sum((hi - lo) * np.asarray(func(mid), dtype=float)))
