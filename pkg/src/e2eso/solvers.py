"""Exact decision oracles.

Closed-form posteriors for the Gaussian and Dirichlet models, the discrete
expected-loss minimizer behind the Bayes / ERM actions, and the KL-ball
worst case behind the DRO action.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import ConfigError, DomainError


class DiscreteDist:
    """Probability vector over levels 1..d."""

    def __init__(self, probs):
        probs = np.array(probs, dtype=np.float64).reshape(-1)
        if probs.size == 0 or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise DomainError("probabilities must be nonnegative and sum to 1")
        self.probs = probs

    @classmethod
    def empirical(cls, samples, d):
        counts = level_counts(samples, d)
        return cls(counts / counts.sum())

    @property
    def d(self):
        return self.probs.size

    def mean(self):
        return float(np.arange(1, self.d + 1) @ self.probs)

    def __repr__(self):
        return f"DiscreteDist({np.array2string(self.probs, precision=4)})"


def level_counts(samples, d):
    s = np.asarray(samples, dtype=np.int64).reshape(-1)
    if s.size == 0:
        raise DomainError("empty sample set")
    if s.min() < 1 or s.max() > d:
        raise DomainError(f"samples outside levels 1..{d}")
    return np.bincount(s - 1, minlength=d).astype(np.float64)


# --------------------------------------------------------------------------
# Gaussian model
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianHierarchy:
    """``Z ~ N(mu_z, var_z)``, observations and target i.i.d. ``N(Z, var_y)``."""

    mu_z: float = 2.0
    var_z: float = 0.25
    var_y: float = 4.0
    n: int = 20

    def __post_init__(self):
        if not self.var_z > 0 or self.var_y < 0 or self.n < 1:
            raise ConfigError("need var_z > 0, var_y >= 0 and n >= 1")


def gaussian_posterior(h, samples):
    """Posterior predictive mean and variance of Y given the samples.

    ``samples`` may be one observation (n,) or a batch (B, n).
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.shape[-1] != h.n:
        raise DomainError(f"expected {h.n} samples per observation, got {x.shape[-1]}")
    if h.var_y <= 0:
        raise DomainError("posterior undefined for var_y = 0")
    prec = 1.0 / h.var_z + h.n / h.var_y
    mu = (h.mu_z / h.var_z + x.sum(axis=-1) / h.var_y) / prec
    var = h.var_y + 1.0 / prec
    return mu, var


# --------------------------------------------------------------------------
# Dirichlet-categorical model and discrete actions
# --------------------------------------------------------------------------

class DirichletPrior:
    def __init__(self, alpha):
        self.alpha = np.array(alpha, dtype=np.float64).reshape(-1)
        if np.any(self.alpha <= 0):
            raise ConfigError("Dirichlet parameters must be positive")

    @classmethod
    def uniform(cls, d=11):
        return cls(np.ones(d))

    @classmethod
    def split(cls, n_first, first, rest, d=11):
        """``first`` on the ``n_first`` lowest levels, ``rest`` above."""
        return cls(np.r_[np.full(n_first, float(first)), np.full(d - n_first, float(rest))])

    @property
    def d(self):
        return self.alpha.size

    def mean(self):
        return DiscreteDist(self.alpha / self.alpha.sum())


NAMED_PRIORS = {
    "uniform": lambda d: DirichletPrior.uniform(d),
    # test shifts: too little / too much weight on low demand under training
    "shift_high": lambda d: DirichletPrior.split(5, 0.1, 2.0, d),
    "shift_low": lambda d: DirichletPrior.split(6, 2.0, 0.1, d),
    # the prior used for the decision-comparison scatter
    "decision_scatter": lambda d: DirichletPrior.split(7, 0.5, 2.0, d),
}


def named_prior(name, d=11):
    try:
        return NAMED_PRIORS[name](d)
    except KeyError:
        raise ConfigError(f"unknown prior {name!r}; choose from {sorted(NAMED_PRIORS)}") from None


def dirichlet_posterior_mean(prior, counts):
    counts = np.asarray(counts, dtype=np.float64)
    if counts.shape != prior.alpha.shape:
        raise DomainError("counts do not match the prior dimension")
    post = prior.alpha + counts
    return DiscreteDist(post / post.sum())


def expected_loss_action(dist, params):
    """Level minimizing ``sum_y probs[y] * l(y, a)``; ties go to the smaller level.

    Returns ``(a_star, values)`` with ``values[a-1]`` the expected loss of ``a``.
    """
    if dist.d != params.d:
        raise DomainError("distribution support does not match the number of levels")
    values = dist.probs @ params.loss_matrix()
    return int(np.argmin(values)) + 1, values


def batch_expected_loss_actions(probs, params):
    """Vectorized :func:`expected_loss_action` over rows of ``probs``."""
    values = np.asarray(probs) @ params.loss_matrix()
    return np.argmin(values, axis=1) + 1


def erm_action(samples, params):
    return expected_loss_action(DiscreteDist.empirical(samples, params.d), params)[0]


# --------------------------------------------------------------------------
# KL ambiguity
# --------------------------------------------------------------------------

class WorstCase(NamedTuple):
    q: DiscreteDist
    value: float


def kl_worst_case(p_hat, losses, eps):
    """Worst-case distribution in the KL ball of radius ``eps`` around ``p_hat``.

    The maximizer is the exponential tilt ``q_i ~ p_i exp(l_i / lam)``; once
    ``eps`` reaches ``-log P(argmax loss)`` it is ``p_hat`` conditioned on the
    maximal losses.
    """
    if eps < 0:
        raise DomainError("ambiguity radius must be nonnegative")
    p = p_hat.probs if isinstance(p_hat, DiscreteDist) else DiscreteDist(p_hat).probs
    losses = np.asarray(losses, dtype=np.float64).reshape(-1)
    if losses.shape != p.shape:
        raise DomainError("losses do not match the support")
    Q, values, _ = kernels.kl_tilt_batch(p[None, :], losses[None, :], eps)
    q = np.clip(Q[0], 0.0, None)
    return WorstCase(DiscreteDist(q / q.sum()), float(values[0]))


def kl_multiplier(p_hat, losses, eps):
    """Multiplier lambda of the worst-case tilt (inf at eps = 0, 0 in the limit)."""
    p = p_hat.probs if isinstance(p_hat, DiscreteDist) else np.asarray(p_hat, dtype=np.float64)
    return float(kernels.kl_tilt_batch(p[None, :], np.asarray(losses, dtype=np.float64)[None, :], eps)[2][0])


def kl_divergence(q, p):
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    m = q > 0
    if np.any(p[m] <= 0):
        return np.inf
    return float(np.sum(q[m] * np.log(q[m] / p[m])))


def batch_dro_actions(counts, params, eps):
    """DRO levels for many observations at once.  ``counts`` is (B, d)."""
    counts = np.asarray(counts, dtype=np.float64)
    B, d = counts.shape
    P = counts / counts.sum(axis=1, keepdims=True)
    M = params.loss_matrix()                               # (y, a)
    # one worst-case problem per (observation, action)
    Prep = np.repeat(P, d, axis=0)
    Lrep = np.tile(M.T, (B, 1))
    _, vals, _ = kernels.kl_tilt_batch(Prep, Lrep, eps)
    return np.argmin(vals.reshape(B, d), axis=1) + 1


def dro_action(samples, params, eps):
    if eps < 0:
        raise DomainError("ambiguity radius must be nonnegative")
    counts = level_counts(samples, params.d)
    return int(batch_dro_actions(counts[None, :], params, eps)[0])
