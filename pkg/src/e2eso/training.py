"""End-to-end training of decision maps ``m_w = p o f_w``.

All three trainers run the same loop: draw a batch, form a weighted loss
over a set of outcomes per observation, backpropagate, take an optimizer
step.  They differ only in the outcome set and its weights:

* Bayes: the sampled target ``Y`` (or a weighted outcome set), weight 1;
* ERM: the ``N`` samples inside the observation, weight ``1/N`` each;
* DRO: the same samples, weighted by the worst case in the KL ball around
  the empirical distribution, evaluated at the current weights and then
  held fixed while differentiating.
"""
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels, nnet
from .decisions import Identity, prescriptor_from_dict
from .errors import ConfigError, DivergenceError, DomainError
from .scenarios import ObservationSource, Scenario

DIVERGENCE_FACTOR = 1e6


class DecisionMap:
    """Feature extractor network followed by a prescriptor."""

    def __init__(self, extractor, prescriptor=None):
        self.extractor = extractor
        self.prescriptor = prescriptor or Identity(extractor.out_dim)
        if self.prescriptor.in_dim is not None and self.prescriptor.in_dim != extractor.out_dim:
            raise ConfigError(f"extractor outputs {extractor.out_dim} features, prescriptor "
                              f"{self.prescriptor.kind} expects {self.prescriptor.in_dim}")

    def forward(self, F):
        R, tape = nnet.forward(self.extractor, F)
        A, cache = self.prescriptor.forward(np.atleast_2d(R))
        return A, (tape, cache)

    def backward(self, ctx, dA):
        tape, cache = ctx
        dR = self.prescriptor.vjp(cache, dA)
        return nnet.backward(self.extractor, tape, dR)[0]

    def __call__(self, F):
        F = np.asarray(F, dtype=np.float64)
        A = self.forward(np.atleast_2d(F))[0]
        return A[0] if F.ndim == 1 else A

    def to_dict(self):
        return {"extractor": self.extractor.to_dict(), "prescriptor": self.prescriptor.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(nnet.Mlp.from_dict(d["extractor"]), prescriptor_from_dict(d["prescriptor"]))


# --------------------------------------------------------------------------
# stochastic gradients
# --------------------------------------------------------------------------

def _weighted(dmap, F, O, task, weigher):
    A, ctx = dmap.forward(F)
    L, dL = task.outcome_losses(A, O)
    W = weigher(L)
    per_sample = np.sum(W * L, axis=1)
    B = L.shape[0]
    dA = np.einsum("bm,bma->ba", W, dL) / B
    return float(per_sample.mean()), dmap.backward(ctx, dA)


def bayes_gradient(dmap, F, Y, task, W=None):
    """Batch-mean loss and gradient for targets ``Y``.

    ``Y`` holds one target per row; with ``W`` given, ``Y`` is (B, M) and
    each row is a set of outcomes weighted by the matching row of ``W``.
    """
    if W is None:
        O = np.asarray(Y)[:, None]
        return _weighted(dmap, F, O, task, lambda L: np.ones_like(L))
    W = np.asarray(W, dtype=np.float64)
    return _weighted(dmap, F, Y, task, lambda L: W)


def erm_gradient(dmap, F, O, task):
    return _weighted(dmap, F, O, task, lambda L: np.full_like(L, 1.0 / L.shape[1]))


def worst_case_weights(L, eps):
    n = L.shape[1]
    return kernels.kl_tilt_batch(np.full(L.shape, 1.0 / n), L, eps)[0]


def dro_gradient(dmap, F, O, task, eps):
    return _weighted(dmap, F, O, task, lambda L: worst_case_weights(L, eps))


def robust_objective(dmap, F, O, task, eps):
    """Mean worst-case loss over the batch (no gradient)."""
    A = dmap.forward(F)[0]
    L = task.outcome_losses(A, O)[0]
    n = L.shape[1]
    return float(kernels.kl_tilt_batch(np.full(L.shape, 1.0 / n), L, eps)[1].mean())


# --------------------------------------------------------------------------
# reports and the training loop
# --------------------------------------------------------------------------

@dataclass
class TrainReport:
    algorithm: str
    seed: int
    loss_curve: np.ndarray
    grad_norm_curve: np.ndarray
    step_sizes: np.ndarray
    iterate_index: np.ndarray          # 1-based iteration of each stored iterate
    iterates: np.ndarray = field(repr=False)   # (n_stored, n_params)
    iterate_steps: np.ndarray = field(repr=False)
    w_hat: np.ndarray = field(default=None, repr=False)
    w_hat_index: int = -1
    selection_probs: np.ndarray = field(default=None, repr=False)
    wall_clock: float = 0.0

    def summary(self, window=0.1):
        """Scalar digest; the window losses average the first and last ``window`` share of the curve."""
        w = max(1, int(self.loss_curve.size * window))
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "iterations": int(self.loss_curve.size),
            "final_loss": float(self.loss_curve[-1]),
            "initial_loss": float(self.loss_curve[0]),
            "initial_window_loss": float(self.loss_curve[:w].mean()),
            "trailing_window_loss": float(self.loss_curve[-w:].mean()),
            "stored_iterates": int(self.iterate_index.size),
            "w_hat_iteration": int(self.w_hat_index),
        }

    def to_json(self, path=None, include_timing=False):
        d = self.summary()
        d["loss_curve"] = self.loss_curve.tolist()
        d["grad_norm_curve"] = self.grad_norm_curve.tolist()
        d["iterate_index"] = self.iterate_index.tolist()
        d["selection_probs"] = None if self.selection_probs is None else self.selection_probs.tolist()
        d["w_hat"] = None if self.w_hat is None else self.w_hat.tolist()
        if include_timing:
            d["wall_clock"] = self.wall_clock
        text = json.dumps(d)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def save_loss_csv(self, path):
        with open(path, "w") as fh:
            fh.write("iteration,loss,grad_norm,step_size\n")
            for k, (l, g, s) in enumerate(zip(self.loss_curve, self.grad_norm_curve,
                                              self.step_sizes), start=1):
                fh.write(f"{k},{l!r},{g!r},{s!r}\n")


def selection_probabilities(step_sizes):
    inv = 1.0 / np.asarray(step_sizes, dtype=np.float64)
    return inv / inv.sum()


def select_iterate(report, seed):
    """Draw a stored iterate with probability proportional to ``1/eta_k``."""
    if report.iterates is None or len(report.iterate_index) == 0:
        raise DomainError("no stored iterates to select from")
    probs = selection_probabilities(report.iterate_steps)
    i = int(np.random.default_rng(seed).choice(len(probs), p=probs))
    report.selection_probs = probs
    report.w_hat_index = int(report.iterate_index[i])
    report.w_hat = report.iterates[i].copy()
    return report.w_hat


def _run(algorithm, dmap, draw, grad_fn, K, batch, opt, seed, max_stored, callback):
    if K < 1 or batch < 1:
        raise ConfigError("K and batch must be positive")
    opt = opt or nnet.OptimState()
    n_iter = math.ceil(K / batch)
    stride = math.ceil(n_iter / max_stored)
    net = dmap.extractor
    losses = np.empty(n_iter)
    gnorms = np.empty(n_iter)
    steps = np.empty(n_iter)
    kept_idx, kept, kept_steps = [], [], []
    t0 = time.perf_counter()
    ref = None
    for k in range(1, n_iter + 1):
        data = draw((k - 1) * batch, batch)
        loss, grads = grad_fn(data)
        gn = nnet.grad_norm(grads)
        if not (math.isfinite(loss) and math.isfinite(gn)):
            raise DivergenceError(f"{algorithm}: non-finite loss or gradient at iteration {k}", k)
        if ref is None:
            ref = max(abs(loss), 1e-12)
        elif abs(loss) > DIVERGENCE_FACTOR * ref:
            raise DivergenceError(
                f"{algorithm}: loss {loss:.3e} exceeds {DIVERGENCE_FACTOR:.0e} x initial "
                f"at iteration {k}", k)
        nnet.step(net, opt, grads)
        losses[k - 1], gnorms[k - 1], steps[k - 1] = loss, gn, opt.last_step
        if k % stride == 0 or k == n_iter:
            kept_idx.append(k)
            kept.append(net.get_flat())
            kept_steps.append(opt.last_step)
        if callback is not None:
            callback(k, loss, dmap)
    report = TrainReport(algorithm, int(seed), losses, gnorms, steps,
                         np.array(kept_idx), np.array(kept), np.array(kept_steps),
                         wall_clock=time.perf_counter() - t0)
    select_iterate(report, seed)
    return report


def train_bayes(dmap, scenario, task, K, batch=1, opt=None, seed=0, max_stored=1000, callback=None):
    """Train on ``(X, Y)`` draws (Algorithm "end-to-end learning").

    ``K`` counts training samples; the loop runs ``ceil(K / batch)`` updates.
    Rows carrying a ``W`` entry are generalized samples: ``Y`` is then a set
    of outcomes per row weighted by ``W``.
    """
    def draw(start, count):
        return scenario.sample(start, count)

    def grad_fn(data):
        F = scenario.features(data["X"])
        return bayes_gradient(dmap, F, data["Y"], task, data.get("W"))

    return _run("bayes", dmap, draw, grad_fn, K, batch, opt, seed, max_stored, callback)


def _as_source(source):
    if isinstance(source, Scenario):
        return source.observation_only()
    if not hasattr(source, "observations"):
        raise ConfigError("ERM/DRO training needs an observation-only source")
    return source


def train_erm(dmap, source, task, K, batch=1, opt=None, seed=0, max_stored=1000, callback=None):
    """Train on observations only, scoring each against its own samples."""
    source = _as_source(source)

    def grad_fn(X):
        return erm_gradient(dmap, source.features(X), source.obs_outcomes(X), task)

    return _run("erm", dmap, source.observations, grad_fn, K, batch, opt, seed, max_stored, callback)


def train_dro(dmap, source, task, eps, K, batch=1, opt=None, seed=0, max_stored=1000, callback=None):
    """Train on observations only against the KL worst case of radius ``eps``."""
    if eps < 0:
        raise ConfigError("ambiguity radius must be nonnegative")
    source = _as_source(source)

    def grad_fn(X):
        return dro_gradient(dmap, source.features(X), source.obs_outcomes(X), task, eps)

    return _run("dro", dmap, source.observations, grad_fn, K, batch, opt, seed, max_stored, callback)


# --------------------------------------------------------------------------
# finite observation spaces
# --------------------------------------------------------------------------

class GaussianCell:
    def __init__(self, mean, sd):
        self.mu, self.sd = float(mean), float(sd)

    def sample(self, rng, size):
        return rng.normal(self.mu, self.sd, size)

    def mean(self):
        return self.mu


class FiniteCell:
    def __init__(self, values, probs):
        self.values = np.asarray(values, dtype=np.float64)
        self.probs = np.asarray(probs, dtype=np.float64)

    def sample(self, rng, size):
        return rng.choice(self.values, size=size, p=self.probs)

    def mean(self):
        return float(self.values @ self.probs)


class _CellScenario(Scenario):
    def __init__(self, xs, cells, seed):
        super().__init__(seed)
        self.xs, self.cells = xs, cells

    def _draw_block(self, b):
        rc, ry = self._streams(b, 2)
        idx = rc.integers(0, len(self.cells), self.block_size)
        Y = np.empty(self.block_size)
        for i, c in enumerate(self.cells):
            m = idx == i
            Y[m] = c.sample(ry, int(m.sum()))
        return {"X": self.xs[idx], "Y": Y, "Z": idx.astype(np.float64)}


def lookup_table_check(finite_X, dist_Y_given_x, width=32, K=100_000, batch=64,
                       seed=0, opt=None):
    """Train on a finite observation space and compare to the exact Bayes actions.

    Uses the squared loss, whose Bayes action in each cell is the
    conditional mean.  Returns a dict with per-cell outputs, exact actions
    and the maximal deviation.
    """
    from .decisions import SquaredTask

    xs = np.atleast_2d(np.asarray(finite_X, dtype=np.float64))
    if xs.shape[0] != len(dist_Y_given_x):
        raise ConfigError("need one conditional distribution per observation")
    scen = _CellScenario(xs, list(dist_Y_given_x), seed)
    net = nnet.init_weights([xs.shape[1], width, 1], ["relu", "linear"], seed)
    dmap = DecisionMap(net)
    opt = opt or nnet.OptimState("adam", 0.01)
    report = train_bayes(dmap, scen, SquaredTask(), K, batch, opt, seed)
    out = dmap(xs)[:, 0]
    exact = np.array([c.mean() for c in dist_Y_given_x])
    return {"outputs": out, "exact": exact,
            "max_deviation": float(np.max(np.abs(out - exact))),
            "width": width, "cells": len(exact), "report": report}
