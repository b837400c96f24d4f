"""
Define a suite a tests for the forms module.
"""
import pytest
import numpy as np

from spherebraid import FormIndex
from spherebraid.configuration import basepoint, sample_configuration
from spherebraid.flows import RadialProfile, RotationalFlow
from spherebraid.forms import FormError, SingularPoint
from spherebraid.forms import theta_eval, abs_path_integral, pullback_eval
from spherebraid.forms import short_path_form_bound, average_form_action
from spherebraid.forms import hemisphere_decomposition, hemisphere_pattern
from spherebraid.forms import disk_kernel_integral
from spherebraid.sphere import random_points


def test_form_index():
    assert str(FormIndex.at_zero(1)) == "(1;0)"
    assert str(FormIndex.at_one(2)) == "(2;1)"
    assert str(FormIndex.pair(3, 1)) == "(13)"
    assert FormIndex.from_string("(2;1)") == FormIndex.at_one(2)
    assert FormIndex.from_string("(12)") == FormIndex.pair(1, 2)
    assert FormIndex.from_string("(1,12)") == FormIndex.pair(1, 12)

    indices = FormIndex.all_indices(3)
    assert len(indices) == 9
    assert len(set(indices)) == 9

    with pytest.raises(FormError):
        FormIndex.pair(2, 2)
    with pytest.raises(FormError):
        FormIndex.pair(1, 3).check(2)


def test_theta_eval():
    nu = FormIndex.at_zero(1)
    assert theta_eval(nu, [2], [2j]) == pytest.approx(1 / (2 * np.pi))
    assert theta_eval(FormIndex.at_one(1), [2], [1]) == pytest.approx(0)
    with pytest.raises(SingularPoint):
        theta_eval(nu, [0], [1])


def test_abs_path_integral():
    """A circle of radius 2 winds once around 0 and 1.
    """
    s = np.linspace(0, 1, 101)
    circle = 2 * np.exp(2j * np.pi * s)[:, None]
    assert abs_path_integral(FormIndex.at_zero(1), circle) == pytest.approx(1)
    assert abs_path_integral(FormIndex.at_one(1), circle) == pytest.approx(1)

    def path(s):
        u = 2 * np.exp(2j * np.pi * s)[:, None]
        return u, 2j * np.pi * u

    assert abs_path_integral(FormIndex.at_zero(1), path) == pytest.approx(1, rel=1e-6)

    # Back and forth along a ray does not wind.
    ray = np.concatenate([np.linspace(1j, 3j, 50), np.linspace(3j, 1j, 50)])[:, None]
    assert abs_path_integral(FormIndex.at_zero(1), ray) == pytest.approx(0)


def test_pullback_methods_agree():
    for seed in range(5):
        h = random_points(seed, 6)
        hdot = np.random.default_rng(seed).standard_normal((6, 2)) * (1 + 1j)
        for nu in FormIndex.all_indices(3):
            chain = pullback_eval(nu, h, hdot, method='chain')
            hemi = pullback_eval(nu, h, hdot, method='hemisphere')
            assert chain == pytest.approx(hemi, rel=1e-7, abs=1e-10)


def test_pullback_rotation():
    """Rotations leave every cross-ratio fixed.
    """
    h = random_points(7, 5)
    hdot = np.stack([0.5j * h[:, 0], -0.5j * h[:, 1]], axis=-1)
    for nu in FormIndex.all_indices(2):
        for method in ('chain', 'hemisphere'):
            assert abs(pullback_eval(nu, h, hdot, method=method)) < 1e-10


def test_pullback_errors():
    h = random_points(1, 3)
    with pytest.raises(FormError):
        pullback_eval(FormIndex.at_zero(1), h, np.zeros_like(h))
    h = random_points(1, 4)
    with pytest.raises(FormError):
        pullback_eval(FormIndex.at_zero(1), h, np.zeros_like(h), method='polar')
    with pytest.raises(FormError):
        pullback_eval(FormIndex.at_zero(2), h, np.zeros_like(h))


def test_hemisphere_pattern():
    h = np.array([[0, 1], [1, 0], [1, 2], [3, 1]], dtype=complex)
    assert hemisphere_pattern(h) == 2 + 8


def _affine_moduli(q, x, samples):
    s = np.linspace(0, 1, samples)[:, None]
    a = q.h[:, 0] / q.h[:, 1]
    b = x.h[:, 0] / x.h[:, 1]
    z = (1 - s) * a + s * b
    z1, z2, z3, zk = z[:, 0:1], z[:, 1:2], z[:, 2:3], z[:, 3:]
    return (z1 - z3) * (z2 - zk) / ((z2 - z3) * (z1 - zk))


def test_short_path_form_bound():
    """The exact integral matches a fine polygon and never exceeds 3.
    """
    q = basepoint(5)
    for nu in FormIndex.all_indices(2):
        assert short_path_form_bound(q, nu, q) == pytest.approx(0, abs=1e-12)

    for seed in range(4):
        x = sample_configuration(5, seed, system='affine', q=q)
        u = _affine_moduli(q, x, 20001)
        for nu in FormIndex.all_indices(2):
            exact = short_path_form_bound(x, nu, q)
            assert 0 <= exact <= 3
            assert exact == pytest.approx(abs_path_integral(nu, u), rel=1e-4, abs=1e-6)


def test_average_form_action():
    nu = FormIndex.at_zero(1)
    rigid = RotationalFlow(RadialProfile.constant(1.0))
    bump = RotationalFlow(RadialProfile.bump(0.2, 2.0, height=2.0))

    still = average_form_action(rigid, nu, n=4, mc_samples=40, seed=3)
    moving = average_form_action(bump, nu, n=4, mc_samples=40, seed=3)
    assert still.n_samples == 40
    assert 0 <= still.mean <= 6
    assert moving.mean >= still.mean - 1e-12

    parts = hemisphere_decomposition(bump, nu, n=4, mc_samples=40, seed=3)
    assert all(0 <= p < 16 for p in parts)
    assert sum(parts.values()) == pytest.approx(moving.mean)


def test_disk_kernel_integral():
    assert disk_kernel_integral(0) == pytest.approx(2 * np.pi)
    assert disk_kernel_integral(1) == pytest.approx(4, rel=1e-6)
    assert disk_kernel_integral(0.5j) < 8 * np.pi
