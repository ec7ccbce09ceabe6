import numpy as np
import pytest

from risksched.exceptions import ContractError
from risksched.statespace import Gaussian, StateSpace, transform_gaussian, wrap_angle


def test_compose_all_linear():
    sp = StateSpace.linear(2)
    assert np.allclose(sp.compose([0.0, 0.0], [1.0, 2.0]), [1.0, 2.0])


def test_compose_wraps_at_pi():
    sp = StateSpace(("ang",))
    out = sp.compose([np.pi - 0.1], [0.2])
    assert np.allclose(out, [-np.pi + 0.1])


def test_difference_identity():
    sp = StateSpace(("lin", "ang"))
    x = sp.wrap(np.array([0.3, -2.0]))
    assert np.allclose(sp.difference(x, x), 0.0)


def test_difference_shortest_arc():
    sp = StateSpace(("ang",))
    d = sp.difference([-np.pi + 0.05], [np.pi - 0.05])
    assert np.allclose(d, [0.1])


@pytest.mark.parametrize("seed", range(5))
def test_retraction_pair_round_trips(seed):
    rng = np.random.default_rng(seed)
    sp = StateSpace(("lin", "ang", "ang", "lin"))
    for _ in range(50):
        x = sp.wrap(rng.uniform(-4, 4, size=4))
        d = rng.uniform(-np.pi + 1e-6, np.pi, size=4)
        assert np.max(np.abs(sp.difference(sp.compose(x, d), x) - d)) < 1e-12
        y = sp.wrap(rng.uniform(-4, 4, size=4))
        assert np.max(np.abs(sp.compose(y, sp.difference(x, y)) - x)) < 1e-12


def test_wrap_idempotent():
    rng = np.random.default_rng(3)
    th = rng.uniform(-20, 20, size=100)
    w1 = wrap_angle(th)
    assert np.all(w1 > -np.pi) and np.all(w1 <= np.pi)
    assert np.array_equal(wrap_angle(w1), w1)


def test_wrap_boundary_maps_to_positive_pi():
    assert wrap_angle(np.pi) == np.pi
    assert wrap_angle(-np.pi) == np.pi


def test_dimension_mismatch_raises():
    sp = StateSpace.linear(3)
    with pytest.raises(ContractError):
        sp.compose([0.0, 0.0, 0.0], [1.0])
    with pytest.raises(ContractError):
        sp.difference([0.0, 0.0], [0.0, 0.0, 0.0])


def test_compose_rejects_nonfinite_tangent():
    sp = StateSpace.linear(2)
    with pytest.raises(ContractError):
        sp.compose([0.0, 0.0], [np.nan, 0.0])


def test_transform_gaussian_identity():
    g = Gaussian(np.zeros(2), np.eye(2))
    out = transform_gaussian(np.eye(2), np.zeros(2), g)
    assert np.allclose(out.mean, g.mean)
    assert np.allclose(out.cov, g.cov)


def test_transform_gaussian_degenerate():
    g = Gaussian([1.0, 2.0], np.eye(2))
    out = transform_gaussian(np.zeros((2, 2)), [3.0, 4.0], g)
    assert np.allclose(out.mean, [3.0, 4.0])
    assert np.allclose(out.cov, 0.0)


def test_transform_gaussian_sums_unit_variances():
    # z = x + y with x, y independent unit variance: var(z) = 2
    g = Gaussian(np.zeros(2), np.eye(2))
    out = transform_gaussian(np.array([[1.0, 1.0]]), [0.0], g)
    assert np.allclose(out.mean, [0.0])
    assert np.allclose(out.cov, [[2.0]])


def test_transform_gaussian_output_stays_psd():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = rng.integers(1, 5)
        root = rng.normal(size=(n, n))
        g = Gaussian(rng.normal(size=n), root @ root.T)
        m = rng.integers(1, 5)
        A = rng.normal(size=(m, n))
        out = transform_gaussian(A, rng.normal(size=m), g)
        w = np.linalg.eigvalsh(out.cov)
        assert w[0] >= -1e-10
        assert np.allclose(out.cov, out.cov.T)


def test_gaussian_rejects_asymmetric_cov():
    with pytest.raises(ContractError):
        Gaussian(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_gaussian_rejects_indefinite_cov():
    with pytest.raises(ContractError):
        Gaussian(np.zeros(2), np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_transform_dimension_mismatch():
    g = Gaussian(np.zeros(3), np.eye(3))
    with pytest.raises(ContractError):
        transform_gaussian(np.eye(2), np.zeros(2), g)
