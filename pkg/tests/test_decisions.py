import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from e2eso import decisions as dc
from e2eso.errors import ConfigError, DomainError, ShapeError


def fd_jacobian(f, r, h=1e-6):
    cols = []
    for i in range(r.size):
        e = np.zeros_like(r)
        e[i] = h
        cols.append((f(r + e) - f(r - e)) / (2 * h))
    return np.array(cols).T


PRESCRIPTORS = [
    dc.Identity(3),
    dc.SigmoidCapacity([1.0, 0.5, 2.0]),
    dc.BallProjection(1.0, 3),
    dc.SoftmaxLevels(4),
    dc.SoftmaxLevels(4, logit_bound=2.0),
]


@pytest.mark.parametrize("p", PRESCRIPTORS, ids=lambda p: f"{p.kind}:{getattr(p, 'logit_bound', '')}")
def test_jacobian_and_vjp_match_finite_differences(p):
    rng = np.random.default_rng(0)
    for _ in range(5):
        r = rng.normal(0, 1.5, p.in_dim)
        J = p.jacobian(r)
        assert np.allclose(J, fd_jacobian(p, r), atol=1e-7)
        R = rng.normal(0, 1.5, (4, p.in_dim))
        dA = rng.normal(size=(4, p.out_dim))
        _, cache = p.forward(R)
        got = p.vjp(cache, dA)
        want = np.array([p.jacobian(R[i]).T @ dA[i] for i in range(4)])
        assert np.allclose(got, want, atol=1e-12)


def test_ball_projection_tangency_outside():
    p = dc.BallProjection(1.0, 2)
    rng = np.random.default_rng(1)
    for _ in range(100):
        r = rng.normal(size=2)
        r *= rng.uniform(1.01, 5.0) / np.linalg.norm(r)
        J = p.jacobian(r)
        assert np.allclose(J.T @ r, 0.0, atol=1e-12)
        n = np.linalg.norm(r)
        u = r / n
        assert np.allclose(J, (1 / n) * (np.eye(2) - np.outer(u, u)))
        assert abs(np.linalg.norm(p(r)) - 1.0) < 1e-12
    inside = np.array([0.3, -0.4])
    assert np.array_equal(p(inside), inside) and np.array_equal(p.jacobian(inside), np.eye(2))


def test_project_ball():
    assert np.allclose(dc.project_ball([3.0, 4.0]), [0.6, 0.8])
    assert np.allclose(dc.project_ball([0.1, 0.2], 2.0), [0.1, 0.2])


def test_sigmoid_capacity_stays_in_box():
    caps = np.array([1.0, 0.5, 1.0, 1.0, 1.0, 0.5])
    p = dc.SigmoidCapacity(caps)
    A = p(np.random.default_rng(0).normal(0, 50, (200, 6)))
    assert np.all(A >= 0) and np.all(A <= caps)
    assert p.lipschitz == 0.25


def test_softmax_levels_argmax_and_bound():
    p = dc.SoftmaxLevels(3, logit_bound=1.0)
    S = p(np.array([[100.0, 0.0, -100.0]]))
    # bounded logits keep every level's probability away from zero
    assert S.min() > np.exp(-2) / 3
    assert dc.SoftmaxLevels.levels(S)[0] == 1
    with pytest.raises(ConfigError):
        dc.SoftmaxLevels(3, logit_bound=0.0)


@pytest.mark.parametrize("p", PRESCRIPTORS + [dc.DispatchOPL(dc.GeneratorFleet.reference())],
                         ids=lambda p: p.kind)
def test_prescriptor_serialization_round_trip(p):
    q = dc.prescriptor_from_dict(p.to_dict())
    r = np.linspace(-1, 1, p.in_dim)
    assert np.array_equal(q(r), p(r))


def test_unknown_prescriptor_kind():
    with pytest.raises(ConfigError):
        dc.prescriptor_from_dict({"kind": "lp_layer"})


def test_prescriptor_shape_check():
    with pytest.raises(ShapeError):
        dc.BallProjection(1.0, 2).forward(np.zeros((3, 3)))
    with pytest.raises(ShapeError):
        dc.apply_prescriptor(dc.Identity(2), np.zeros((2, 2)))


def test_apply_prescriptor_returns_action_and_jacobian():
    a, J = dc.apply_prescriptor(dc.BallProjection(), [2.0, 0.0])
    assert np.allclose(a, [1.0, 0.0]) and np.allclose(J, [[0.0, 0.0], [0.0, 0.5]])


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

def test_reference_fleet_cost_at_zero_wind():
    fleet = dc.GeneratorFleet.reference()
    a, cost, da = dc.dispatch_solve(fleet, 4.0, 100.0, 0.0)
    assert cost == 72.5
    assert np.allclose(a, [1.0, 0.5, 1.0, 1.0, 0.0, 0.5])


def lp_dispatch_cost(fleet, demand, penalty, y):
    """Total cost of the dispatch LP with a shortfall slack (scipy oracle)."""
    J = fleet.count
    c = np.r_[fleet.costs, penalty]
    A_ub = -np.ones((1, J + 1))
    b_ub = [-(demand - y)]
    bounds = [(0, cap) for cap in fleet.capacities] + [(0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    assert res.status == 0
    return res.fun


def test_dispatch_matches_linear_program():
    rng = np.random.default_rng(5)
    for _ in range(200):
        J = rng.integers(1, 7)
        fleet = dc.GeneratorFleet(rng.uniform(5, 50, J), rng.uniform(0.1, 1.5, J))
        y = rng.uniform(0, 5)
        a, gen_cost, _ = dc.dispatch_solve(fleet, 4.0, 100.0, y)
        short = max(4.0 - y - a.sum(), 0.0)
        total = gen_cost + 100.0 * short
        assert abs(total - lp_dispatch_cost(fleet, 4.0, 100.0, y)) < 1e-7


def test_dispatch_requires_penalty_above_costs():
    with pytest.raises(ConfigError):
        dc.dispatch_solve(dc.GeneratorFleet.reference(), 4.0, 30.0, 1.0)
    with pytest.raises(ConfigError):
        dc.GeneratorFleet([1.0, 2.0], [1.0])
    with pytest.raises(ConfigError):
        dc.GeneratorFleet([1.0], [0.0])


def test_dispatch_loss_and_gradient():
    fleet = dc.GeneratorFleet.reference()
    a = np.array([1.0, 0.5, 1.0, 0.0, 0.0, 0.0])
    loss, grad = dc.dispatch_loss(fleet, 4.0, 100.0, 0.5, a)
    assert loss == pytest.approx(15 + 10 + 15 + 100 * 1.0)
    assert np.allclose(grad, fleet.costs - 100.0)
    loss, grad = dc.dispatch_loss(fleet, 4.0, 100.0, 2.0, a)
    assert loss == pytest.approx(40.0) and np.allclose(grad, fleet.costs)
    with pytest.raises(DomainError):
        dc.dispatch_loss(fleet, 4.0, 100.0, 1.0, a + 2.0)
    with pytest.raises(DomainError):
        dc.dispatch_loss(fleet, 4.0, 100.0, -1.0, a)
    with pytest.raises(ShapeError):
        dc.dispatch_loss(fleet, 4.0, 100.0, 1.0, a[:3])


def test_dispatch_task_matches_scalar_loss():
    fleet = dc.GeneratorFleet.reference()
    task = dc.DispatchTask(fleet)
    rng = np.random.default_rng(2)
    A = rng.uniform(0, 1, (5, 6)) * fleet.capacities
    Y = rng.uniform(0, 2, (5, 3))
    L, dL = task.outcome_losses(A, Y)
    for b in range(5):
        for m in range(3):
            l, g = dc.dispatch_loss(fleet, 4.0, 100.0, Y[b, m], A[b])
            assert L[b, m] == pytest.approx(l) and np.allclose(dL[b, m], g)


def test_opl_prescriptor_chain_rule():
    fleet = dc.GeneratorFleet.reference()
    p = dc.DispatchOPL(fleet)
    J = p.jacobian(np.array([0.7]))
    assert J.shape == (6, 1) and J.sum() == -1.0
    A, cache = p.forward(np.array([[0.7], [3.0]]))
    dR = p.vjp(cache, np.ones((2, 6)))
    assert np.allclose(dR, [[-1.0], [-1.0]])


# --------------------------------------------------------------------------
# newsvendor
# --------------------------------------------------------------------------

def test_newsvendor_loss_matrix_matches_scalar_loss():
    par = dc.NewsvendorParams()
    M = par.loss_matrix()
    for y in range(1, 12):
        for a in range(1, 12):
            assert M[y - 1, a - 1] == dc.newsvendor_loss(par, y, a)
    assert dc.newsvendor_loss(par, 3, 5) == 5 * 5 - 7 * 3


def test_newsvendor_validation():
    par = dc.NewsvendorParams()
    for y, a in ((0, 3), (3, 12), (2.5, 3)):
        with pytest.raises(DomainError):
            dc.newsvendor_loss(par, y, a)
    with pytest.raises(ConfigError):
        dc.NewsvendorParams(p_wholesale=8.0)
    odd = dc.NewsvendorParams.unchecked(11, 8.0, 7.0)
    # buying costs more than selling earns: ordering the minimum is optimal
    assert np.all(np.argmin(odd.loss_matrix(), axis=1) == 0)


def test_newsvendor_task_is_expected_loss_of_mixed_order():
    par = dc.NewsvendorParams()
    task = dc.NewsvendorTask(par)
    rng = np.random.default_rng(0)
    pi = rng.dirichlet(np.ones(11), size=4)
    Y = rng.integers(1, 12, size=(4, 6))
    L, dL = task.outcome_losses(pi, Y)
    M = par.loss_matrix()
    assert np.allclose(L, np.einsum("bma,ba->bm", M[Y - 1], pi))
    assert np.allclose(dL, M[Y - 1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2),
       st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_squared_loss_gradient(y, a):
    loss, grad = dc.squared_loss(y, a)
    assert loss == pytest.approx(sum((ai - yi) ** 2 for ai, yi in zip(a, y)))
    assert np.allclose(grad, 2 * (np.array(a) - np.array(y)))
