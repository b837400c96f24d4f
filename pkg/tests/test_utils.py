"""
Define a suite a tests for the utils module.
"""
import pytest
import numpy as np

from spherebraid import Conventions
from spherebraid.utils import UtilsError
from spherebraid.utils import rng, spawn_seeds, run_parallel
from spherebraid.utils import mean_and_stderr
from spherebraid.utils import affine_fit, trend_test
from spherebraid.utils import exact_signature, float_signature
from spherebraid.utils import adaptive_midpoint


def square(x):
    return x * x


def test_seeds():
    """Child seeds do not depend on how many are drawn after them.
    """
    a = [rng(s).random() for s in spawn_seeds(3, 5)]
    b = [rng(s).random() for s in spawn_seeds(3, 8)]
    assert np.allclose(a, b[:5])
    g = rng(1)
    assert rng(g) is g


def test_run_parallel():
    tasks = list(range(10))
    assert run_parallel(square, tasks) == [t * t for t in tasks]
    assert run_parallel(square, tasks, workers=2) == [t * t for t in tasks]

    # Workers see the conventions in force in the caller.
    with Conventions({'samples': 77}).applied():
        made = run_parallel(Conventions, [{}, {}, {}], workers=2)
    assert [c.samples for c in made] == [77, 77, 77]


def test_mean_and_stderr():
    mean, stderr = mean_and_stderr([1, 2, 3, 4])
    assert mean == 2.5
    assert stderr == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert mean_and_stderr([5]) == (5.0, 0.0)
    with pytest.raises(UtilsError):
        mean_and_stderr([])


def test_affine_fit():
    x = np.arange(6)
    fit = affine_fit(x, 3 * x - 1)
    assert fit.slope == pytest.approx(3)
    assert fit.intercept == pytest.approx(-1)
    assert fit.residual < 1e-12

    fit = affine_fit(x, 2 * x, through_origin=True)
    assert fit.slope == pytest.approx(2)
    assert fit.intercept == 0

    with pytest.raises(UtilsError):
        affine_fit([1], [1])


def test_trend():
    x = np.arange(20)
    flat = trend_test(x, np.full(20, 4.0))
    assert flat.slope == pytest.approx(0)
    assert flat.tstat == 0
    noisy = 0.5 * x + np.random.default_rng(0).normal(0, 0.1, 20)
    assert trend_test(x, noisy).tstat > 10


def test_signatures():
    m = np.array([[2, 1, 0], [1, -3, 0], [0, 0, 0]])
    assert exact_signature(m) == 0
    assert float_signature(m) == 0
    assert exact_signature(np.diag([1, 1, -1])) == 1

    # Zero diagonal forces the pairing step.
    hyperbolic = np.array([[0, 1], [1, 0]])
    assert exact_signature(hyperbolic) == 0
    assert exact_signature(-2 * np.eye(3)) == -3
    assert float_signature(np.zeros((0, 0))) == 0

    with pytest.raises(UtilsError):
        exact_signature([[0, 1], [2, 0]])


def test_adaptive_midpoint():
    assert adaptive_midpoint(lambda x: x**2) == pytest.approx(1 / 3, abs=1e-4)
    value = adaptive_midpoint(lambda x: 1 / np.sqrt(x + 1e-6), 0, 1)
    assert value == pytest.approx(2, rel=1e-2)
