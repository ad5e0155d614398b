import numpy as np
import pytest

from e2eso import _accel, kernels


def random_tilt_problems(rng, rows, m):
    P = rng.dirichlet(np.ones(m), size=rows)
    P[rng.random((rows, m)) < 0.15] = 0.0
    P[:, 0] += 1e-3
    P /= P.sum(axis=1, keepdims=True)
    L = rng.normal(0, 3, size=(rows, m))
    return P, L


@pytest.mark.parametrize("eps", [0.0, 1e-4, 0.025, 0.25, 2.0, 50.0])
def test_kl_tilt_backends_agree(eps):
    P, L = random_tilt_problems(np.random.default_rng(1), 300, 6)
    Qj, vj, lj = kernels.kl_tilt_batch_jit(P, L, eps)
    Qn, vn, ln_ = kernels.kl_tilt_batch_np(P, L, eps)
    assert np.allclose(Qj, Qn, atol=1e-9)
    assert np.allclose(vj, vn, atol=1e-9)


def test_kl_tilt_handles_ties_and_constant_losses():
    P = np.array([[0.25, 0.25, 0.5], [0.5, 0.5, 0.0]])
    L = np.array([[1.0, 1.0, 1.0], [2.0, 2.0, 7.0]])
    for fn in (kernels.kl_tilt_batch_jit, kernels.kl_tilt_batch_np):
        Q, v, _ = fn(P, L, 0.1)
        assert np.allclose(v, [1.0, 2.0])
        assert np.allclose(Q[1], [0.5, 0.5, 0.0])


def test_kl_tilt_is_shift_invariant_and_large_losses_are_safe():
    P, L = random_tilt_problems(np.random.default_rng(4), 50, 5)
    Q1, v1, _ = kernels.kl_tilt_batch(P, L, 0.1)
    Q2, v2, _ = kernels.kl_tilt_batch(P, L + 1e4, 0.1)
    assert np.allclose(Q1, Q2, atol=1e-8) and np.allclose(v1 + 1e4, v2, atol=1e-7)
    Q3, v3, _ = kernels.kl_tilt_batch(P, 1e3 * L, 0.1)
    assert np.all(np.isfinite(Q3)) and np.all(np.isfinite(v3))


def merit_order_reference(order, caps, demand, y):
    """Greedy fill in cost order, written as a plain loop."""
    a = np.zeros(caps.size)
    left = max(demand - max(y, 0.0), 0.0)
    for j in order:
        a[j] = min(caps[j], left)
        left -= a[j]
    return a


def test_merit_order_backends_agree_with_reference():
    rng = np.random.default_rng(7)
    caps = rng.uniform(0.2, 1.5, 6)
    order = np.argsort(rng.uniform(10, 40, 6), kind="stable")
    yhat = np.r_[rng.uniform(-1, 6, 400), 0.0, 4.0, caps.sum(), -0.5]
    Aj, dj = kernels.merit_order_batch_jit(order, caps, 4.0, yhat)
    An, dn = kernels.merit_order_batch_np(order, caps, 4.0, yhat)
    assert np.allclose(Aj, An, atol=1e-15) and np.array_equal(dj, dn)
    for a, y in zip(An, yhat):
        assert np.allclose(a, merit_order_reference(order, caps, 4.0, y), atol=1e-14)


def test_merit_order_derivative_matches_left_difference():
    caps = np.array([1.0, 0.5, 1.0, 1.0, 1.0, 0.5])
    order = np.argsort([15, 20, 15, 20, 30, 25], kind="stable")
    y = np.linspace(0.01, 3.99, 57)
    A, dA = kernels.merit_order_batch(order, caps, 4.0, y)
    h = 1e-7
    Al, _ = kernels.merit_order_batch(order, caps, 4.0, y - h)
    assert np.allclose(dA, (A - Al) / h, atol=1e-6)
    # clamp: nonpositive forecasts are treated as zero wind, derivative 0
    A0, d0 = kernels.merit_order_batch(order, caps, 4.0, np.array([-1.0, 0.0]))
    assert np.array_equal(A0[0], A0[1]) and np.all(d0 == 0)


def test_backend_flag_selects_implementation():
    assert _accel.USE_NUMBA in (True, False)
    if not _accel.NUMBA_AVAILABLE:
        assert not _accel.USE_NUMBA
