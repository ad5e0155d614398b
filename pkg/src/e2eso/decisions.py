"""Task losses and prescriptor layers.

A prescriptor maps features ``r`` to feasible actions ``a``.  Each one
works on batches ``(B, n_r) -> (B, n_a)`` through :meth:`forward` /
:meth:`vjp` (used in training) and exposes the dense Jacobian of a single
input through :meth:`jacobian`.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, DomainError, ShapeError

_FEAS_TOL = 1e-12


# --------------------------------------------------------------------------
# problem data
# --------------------------------------------------------------------------

class GeneratorFleet:
    """Conventional generators with linear costs and capacity limits."""

    def __init__(self, costs, capacities):
        self.costs = np.array(costs, dtype=np.float64).reshape(-1)
        self.capacities = np.array(capacities, dtype=np.float64).reshape(-1)
        if self.costs.shape != self.capacities.shape:
            raise ConfigError("costs and capacities must have equal length")
        if np.any(self.costs <= 0) or np.any(self.capacities <= 0):
            raise ConfigError("costs and capacities must be positive")
        # stable sort: cost ties go to the lower index
        self.order = np.argsort(self.costs, kind="stable")

    @classmethod
    def reference(cls):
        """The six-unit fleet of the dispatch benchmark."""
        return cls([15, 20, 15, 20, 30, 25], [1, 0.5, 1, 1, 1, 0.5])

    @property
    def count(self):
        return self.costs.size

    def to_dict(self):
        return {"costs": self.costs.tolist(), "capacities": self.capacities.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["costs"], d["capacities"])


@dataclass(frozen=True)
class NewsvendorParams:
    d: int = 11
    p_wholesale: float = 5.0
    q_retail: float = 7.0

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError("need at least one demand level")
        if not 0 < self.p_wholesale < self.q_retail:
            raise ConfigError("require 0 < wholesale price < retail price")

    @classmethod
    def unchecked(cls, d, p_wholesale, q_retail):
        """Build without validation (for what-if fixtures with q <= p)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "d", d)
        object.__setattr__(obj, "p_wholesale", p_wholesale)
        object.__setattr__(obj, "q_retail", q_retail)
        return obj

    def loss_matrix(self):
        """``M[y-1, a-1] = p*a - q*min(a, y)`` for all levels."""
        lv = np.arange(1, self.d + 1, dtype=np.float64)
        return self.p_wholesale * lv[None, :] - self.q_retail * np.minimum(lv[None, :], lv[:, None])


# --------------------------------------------------------------------------
# task losses
# --------------------------------------------------------------------------

def newsvendor_loss(params, y, a):
    """Cost ``p*a - q*min(a, y)`` of ordering ``a`` units when demand is ``y``."""
    for name, v in (("demand", y), ("order", a)):
        if int(v) != v or not 1 <= v <= params.d:
            raise DomainError(f"{name} level {v} outside 1..{params.d}")
    return params.p_wholesale * a - params.q_retail * min(a, y)


def dispatch_loss(fleet, demand, penalty, y, a):
    """Generation cost plus penalized shortfall, with its gradient in ``a``."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape != fleet.costs.shape:
        raise ShapeError(f"expected {fleet.count} dispatch levels, got {a.shape}")
    if np.any(a < -_FEAS_TOL) or np.any(a > fleet.capacities + _FEAS_TOL):
        raise DomainError("dispatch violates generator bounds")
    if y < 0:
        raise DomainError("wind output must be nonnegative")
    short = demand - y - a.sum()
    loss = float(fleet.costs @ a + penalty * max(short, 0.0))
    grad = fleet.costs - penalty * float(short > 0)
    return loss, grad


def squared_loss(y, a):
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    if y.shape != a.shape:
        raise DomainError(f"length mismatch {y.shape} vs {a.shape}")
    diff = a - y
    return float(diff @ diff), 2.0 * diff


def dispatch_solve(fleet, demand, penalty, y_hat):
    """Cheapest dispatch for a point forecast of the wind output.

    Returns ``(a, cost, da_dyhat)``; ``cost`` is the generation cost of ``a``.
    """
    if penalty <= fleet.costs.max():
        raise ConfigError("shortfall penalty must exceed every generation cost")
    A, dA = kernels.merit_order_batch(fleet.order, fleet.capacities, demand, [float(y_hat)])
    return A[0], float(fleet.costs @ A[0]), dA[0]


# --------------------------------------------------------------------------
# training-time task objects: losses over sets of outcomes
# --------------------------------------------------------------------------

class SquaredTask:
    """``l(y, a) = ||y - a||^2``; outcomes have shape (B, M, n) or (B, M) for n = 1."""

    name = "squared"

    def outcome_losses(self, A, Y):
        Y = np.asarray(Y, dtype=np.float64)
        if Y.ndim == 2:
            Y = Y[:, :, None]
        diff = A[:, None, :] - Y
        return np.sum(diff * diff, axis=-1), 2.0 * diff


class NewsvendorTask:
    """Expected newsvendor cost of a mixed order ``pi`` over levels 1..d."""

    name = "newsvendor"

    def __init__(self, params):
        self.params = params
        self.M = params.loss_matrix()

    def outcome_losses(self, A, Y):
        rows = self.M[np.asarray(Y, dtype=np.int64) - 1]        # (B, M, d)
        return np.einsum("bmd,bd->bm", rows, A), rows


class DispatchTask:
    name = "dispatch"

    def __init__(self, fleet, demand=4.0, penalty=100.0):
        self.fleet, self.demand, self.penalty = fleet, float(demand), float(penalty)

    def outcome_losses(self, A, Y):
        Y = np.asarray(Y, dtype=np.float64)
        short = self.demand - Y - A.sum(axis=1)[:, None]
        L = (A @ self.fleet.costs)[:, None] + self.penalty * np.maximum(short, 0.0)
        dL = self.fleet.costs[None, None, :] - self.penalty * (short > 0)[:, :, None]
        return L, dL


# --------------------------------------------------------------------------
# prescriptors
# --------------------------------------------------------------------------

def project_ball(r, radius=1.0):
    """Euclidean projection of ``r`` onto the ball of the given radius."""
    r = np.asarray(r, dtype=np.float64)
    n = np.linalg.norm(r)
    return r.copy() if n <= radius else r * (radius / n)


class Prescriptor:
    kind = None
    in_dim = None
    out_dim = None
    lipschitz = None

    def forward(self, R):
        raise NotImplementedError

    def vjp(self, cache, dA):
        raise NotImplementedError

    def jacobian(self, r):
        raise NotImplementedError

    def _check(self, R):
        R = np.asarray(R, dtype=np.float64)
        if R.ndim != 2 or (self.in_dim is not None and R.shape[1] != self.in_dim):
            raise ShapeError(f"{self.kind} expects features of dim {self.in_dim}, got {R.shape}")
        return R

    def __call__(self, r):
        r = np.asarray(r, dtype=np.float64)
        if r.ndim == 1:
            return self.forward(r[None, :])[0][0]
        return self.forward(r)[0]

    def to_dict(self):
        return {"kind": self.kind}


class Identity(Prescriptor):
    kind = "identity"
    lipschitz = 1.0

    def __init__(self, dim):
        self.in_dim = self.out_dim = int(dim)

    def forward(self, R):
        R = self._check(R)
        return R.copy(), None

    def vjp(self, cache, dA):
        return dA

    def jacobian(self, r):
        self._check(np.atleast_1d(r)[None, :])
        return np.eye(self.in_dim)

    def to_dict(self):
        return {"kind": self.kind, "dim": self.in_dim}


class SigmoidCapacity(Prescriptor):
    """``a_j = cap_j * sigmoid(r_j)``: output always inside the capacity box."""

    kind = "sigmoid_capacity"

    def __init__(self, capacities):
        self.capacities = np.array(capacities, dtype=np.float64).reshape(-1)
        if np.any(self.capacities <= 0):
            raise ConfigError("capacities must be positive")
        self.in_dim = self.out_dim = self.capacities.size
        self.lipschitz = float(self.capacities.max() / 4.0)

    def forward(self, R):
        R = self._check(R)
        s = 0.5 * (1.0 + np.tanh(0.5 * R))
        return self.capacities * s, s

    def vjp(self, s, dA):
        return dA * self.capacities * s * (1.0 - s)

    def jacobian(self, r):
        _, s = self.forward(np.atleast_1d(r)[None, :])
        return np.diag(self.capacities * s[0] * (1.0 - s[0]))

    def to_dict(self):
        return {"kind": self.kind, "capacities": self.capacities.tolist()}


class BallProjection(Prescriptor):
    kind = "ball_projection"
    lipschitz = 1.0

    def __init__(self, radius=1.0, dim=2):
        if not radius > 0:
            raise ConfigError("radius must be positive")
        self.radius = float(radius)
        self.in_dim = self.out_dim = int(dim)

    def forward(self, R):
        R = self._check(R)
        norms = np.linalg.norm(R, axis=1)
        scale = np.where(norms > self.radius, self.radius / np.where(norms > 0, norms, 1.0), 1.0)
        return R * scale[:, None], (R, norms)

    def vjp(self, cache, dA):
        R, norms = cache
        out = norms > self.radius
        dR = dA.copy()
        if out.any():
            Ro, no, Do = R[out], norms[out], dA[out]
            u = Ro / no[:, None]
            dR[out] = (self.radius / no)[:, None] * (Do - np.sum(Do * u, axis=1)[:, None] * u)
        return dR

    def jacobian(self, r):
        r = self._check(np.atleast_1d(r)[None, :])[0]
        n = np.linalg.norm(r)
        if n <= self.radius:
            return np.eye(r.size)
        u = r / n
        return (self.radius / n) * (np.eye(r.size) - np.outer(u, u))

    def to_dict(self):
        return {"kind": self.kind, "radius": self.radius, "dim": self.in_dim}


class DispatchOPL(Prescriptor):
    """Optimization layer: scalar wind forecast -> merit-order dispatch."""

    kind = "dispatch_opl"
    in_dim = 1

    def __init__(self, fleet, demand=4.0, penalty=100.0):
        if penalty <= fleet.costs.max():
            raise ConfigError("shortfall penalty must exceed every generation cost")
        self.fleet, self.demand, self.penalty = fleet, float(demand), float(penalty)
        self.out_dim = fleet.count
        self.lipschitz = float(np.sqrt(fleet.count))

    def forward(self, R):
        R = self._check(R)
        A, dAdy = kernels.merit_order_batch(self.fleet.order, self.fleet.capacities,
                                            self.demand, R[:, 0])
        return A, dAdy

    def vjp(self, dAdy, dA):
        return np.sum(dA * dAdy, axis=1, keepdims=True)

    def jacobian(self, r):
        return self.forward(np.atleast_1d(r)[None, :])[1][0][:, None]

    def to_dict(self):
        return {"kind": self.kind, "fleet": self.fleet.to_dict(),
                "demand": self.demand, "penalty": self.penalty}


class SoftmaxLevels(Prescriptor):
    """Softmax over discrete levels 1..d; the deployed action is the argmax.

    With ``logit_bound`` set, logits pass through ``b * tanh(r / b)`` first,
    which keeps every level's probability away from zero so that levels the
    map currently ignores still receive gradient.
    """

    kind = "softmax_levels"
    lipschitz = 1.0

    def __init__(self, d, logit_bound=None):
        self.in_dim = self.out_dim = int(d)
        if logit_bound is not None and not logit_bound > 0:
            raise ConfigError("logit_bound must be positive")
        self.logit_bound = None if logit_bound is None else float(logit_bound)

    def _logits(self, R):
        if self.logit_bound is None:
            return R, np.ones_like(R)
        t = np.tanh(R / self.logit_bound)
        return self.logit_bound * t, 1.0 - t * t

    def forward(self, R):
        R = self._check(R)
        G, dG = self._logits(R)
        Z = np.exp(G - G.max(axis=1, keepdims=True))
        S = Z / Z.sum(axis=1, keepdims=True)
        return S, (S, dG)

    def vjp(self, cache, dA):
        S, dG = cache
        return dG * S * (dA - np.sum(dA * S, axis=1, keepdims=True))

    def jacobian(self, r):
        s, dg = (c[0] for c in self.forward(np.atleast_1d(r)[None, :])[1])
        return (np.diag(s) - np.outer(s, s)) * dg[None, :]

    @staticmethod
    def levels(A):
        return np.argmax(A, axis=-1) + 1

    def to_dict(self):
        return {"kind": self.kind, "d": self.in_dim, "logit_bound": self.logit_bound}


def prescriptor_from_dict(d):
    kind = d["kind"]
    if kind == "identity":
        return Identity(d["dim"])
    if kind == "sigmoid_capacity":
        return SigmoidCapacity(d["capacities"])
    if kind == "ball_projection":
        return BallProjection(d["radius"], d.get("dim", 2))
    if kind == "dispatch_opl":
        return DispatchOPL(GeneratorFleet.from_dict(d["fleet"]), d["demand"], d["penalty"])
    if kind == "softmax_levels":
        return SoftmaxLevels(d["d"], d.get("logit_bound"))
    raise ConfigError(f"unknown prescriptor kind {kind!r}")


def apply_prescriptor(p, r):
    """Action and Jacobian ``da/dr`` of prescriptor ``p`` at a single feature vector."""
    r = np.atleast_1d(np.asarray(r, dtype=np.float64))
    if r.ndim != 1:
        raise ShapeError("apply_prescriptor takes a single feature vector")
    a = p.forward(r[None, :])[0][0]
    return a, p.jacobian(r)
