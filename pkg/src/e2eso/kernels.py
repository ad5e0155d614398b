"""Batched numeric kernels: KL exponential tilting and merit-order dispatch.

Every kernel exists twice: a loop version compiled with numba
(``*_jit``) and a vectorized pure-numpy version (``*_np``).  The public
names dispatch to one of them according to :data:`e2eso._accel.USE_NUMBA`.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

# bisection controls for the KL multiplier search
KL_TOL = 1e-12
KL_MAX_ITER = 200
_LO_FACTOR = 1e-8
_BRACKET_STEPS = 60


# --------------------------------------------------------------------------
# KL worst case
# --------------------------------------------------------------------------

@njit
def _kl_at(p, s, lam, q):
    """Fill q with the tilt at multiplier lam and return KL(q || p)."""
    n = p.shape[0]
    z = 0.0
    for i in range(n):
        if p[i] > 0.0:
            q[i] = p[i] * np.exp(s[i] / lam)
        else:
            q[i] = 0.0
        z += q[i]
    kl = 0.0
    for i in range(n):
        q[i] /= z
        if q[i] > 0.0:
            kl += q[i] * s[i] / lam
    return kl - np.log(z)


@njit
def _kl_tilt_row(p, s, eps, q):
    """Tilt one row in place.  ``s`` holds the losses shifted so that their
    max over the support is 0.  Returns the multiplier (inf for eps == 0,
    0 in the max-loss limit)."""
    n = p.shape[0]
    if eps <= 0.0:
        for i in range(n):
            q[i] = p[i]
        return np.inf
    pmax = 0.0
    smin = 0.0
    for i in range(n):
        if p[i] > 0.0:
            if s[i] == 0.0:
                pmax += p[i]
            if s[i] < smin:
                smin = s[i]
    if eps >= -np.log(pmax):
        for i in range(n):
            if p[i] > 0.0 and s[i] == 0.0:
                q[i] = p[i] / pmax
            else:
                q[i] = 0.0
        return 0.0

    # KL(lam) decreases in lam; bracket so that KL(lo) >= eps >= KL(hi)
    lo = -smin * _LO_FACTOR
    hi = -smin
    for _ in range(_BRACKET_STEPS):
        if _kl_at(p, s, lo, q) >= eps:
            break
        lo *= 1e-8
    for _ in range(_BRACKET_STEPS):
        if _kl_at(p, s, hi, q) <= eps:
            break
        hi *= 10.0
    llo = np.log(lo)
    lhi = np.log(hi)
    lam = hi
    for _ in range(KL_MAX_ITER):
        mid = 0.5 * (llo + lhi)
        lam = np.exp(mid)
        kl = _kl_at(p, s, lam, q)
        if abs(kl - eps) < KL_TOL or lhi - llo < 1e-15:
            break
        if kl > eps:
            llo = mid
        else:
            lhi = mid
    _kl_at(p, s, lam, q)
    return lam


@njit
def kl_tilt_batch_jit(P, L, eps):
    B, n = P.shape
    Q = np.empty((B, n))
    values = np.empty(B)
    lams = np.empty(B)
    s = np.empty(n)
    for b in range(B):
        lmax = -np.inf
        for i in range(n):
            if P[b, i] > 0.0 and L[b, i] > lmax:
                lmax = L[b, i]
        for i in range(n):
            s[i] = L[b, i] - lmax if P[b, i] > 0.0 else 0.0
        lams[b] = _kl_tilt_row(P[b], s, eps, Q[b])
        v = 0.0
        for i in range(n):
            if Q[b, i] > 0.0:
                v += Q[b, i] * L[b, i]
        values[b] = v
    return Q, values, lams


def kl_tilt_batch_np(P, L, eps):
    """Vectorized lockstep version of the KL tilt over the rows of (P, L)."""
    P = np.asarray(P, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    B, n = P.shape
    supp = P > 0.0
    lmax = np.where(supp, L, -np.inf).max(axis=1)
    S = np.where(supp, L - lmax[:, None], 0.0)
    if eps <= 0.0:
        Q = P.copy()
        return Q, np.einsum("bi,bi->b", Q, np.where(supp, L, 0.0)), np.full(B, np.inf)

    top = supp & (S == 0.0)
    pmax = np.where(top, P, 0.0).sum(axis=1)
    limit = eps >= -np.log(pmax)
    Q = np.empty((B, n))
    lams = np.zeros(B)
    Q[limit] = np.where(top[limit], P[limit], 0.0) / pmax[limit, None]

    act = ~limit
    if act.any():
        Pa, Sa, sa = P[act], S[act], supp[act]
        scale = -Sa.min(axis=1)

        def kl_at(lam):
            with np.errstate(divide="ignore", invalid="ignore"):
                W = np.where(sa, Pa * np.exp(Sa / lam[:, None]), 0.0)
                z = W.sum(axis=1)
                Qa = W / z[:, None]
                kl = np.where(Qa > 0.0, Qa * Sa / lam[:, None], 0.0).sum(axis=1) - np.log(z)
            return kl, Qa

        lo = scale * _LO_FACTOR
        hi = scale.copy()
        for _ in range(_BRACKET_STEPS):
            bad = kl_at(lo)[0] < eps
            if not bad.any():
                break
            lo = np.where(bad, lo * 1e-8, lo)
        for _ in range(_BRACKET_STEPS):
            bad = kl_at(hi)[0] > eps
            if not bad.any():
                break
            hi = np.where(bad, hi * 10.0, hi)
        llo, lhi = np.log(lo), np.log(hi)
        done = np.zeros(llo.shape, dtype=bool)
        lam = hi.copy()
        for _ in range(KL_MAX_ITER):
            mid = 0.5 * (llo + lhi)
            lam = np.where(done, lam, np.exp(mid))
            kl = kl_at(lam)[0]
            done |= (np.abs(kl - eps) < KL_TOL) | (lhi - llo < 1e-15)
            if done.all():
                break
            go_up = (kl > eps) & ~done
            go_dn = (kl <= eps) & ~done
            llo = np.where(go_up, mid, llo)
            lhi = np.where(go_dn, mid, lhi)
        Q[act] = kl_at(lam)[1]
        lams[act] = lam
    values = np.einsum("bi,bi->b", Q, np.where(supp, L, 0.0))
    return Q, values, lams


def kl_tilt_batch(P, L, eps):
    """Worst-case distributions over KL balls, one per row.

    Returns ``(Q, values, lambdas)`` where row b of Q maximizes
    ``Q @ L[b]`` subject to ``KL(Q || P[b]) <= eps``.
    """
    P = np.ascontiguousarray(P, dtype=np.float64)
    L = np.ascontiguousarray(L, dtype=np.float64)
    if USE_NUMBA:
        return kl_tilt_batch_jit(P, L, float(eps))
    return kl_tilt_batch_np(P, L, float(eps))


# --------------------------------------------------------------------------
# merit-order dispatch
# --------------------------------------------------------------------------

@njit
def merit_order_batch_jit(order, caps, demand, yhat):
    B = yhat.shape[0]
    J = caps.shape[0]
    A = np.zeros((B, J))
    dA = np.zeros((B, J))
    for b in range(B):
        clamped = yhat[b] <= 0.0
        y = 0.0 if clamped else yhat[b]
        resid = demand - y
        if resid <= 0.0:
            continue
        prev = 0.0
        for k in range(J):
            j = order[k]
            cap = caps[j]
            if resid >= prev + cap:
                A[b, j] = cap
            elif resid >= prev:
                # partially loaded unit; a residual exactly exhausting the
                # previous unit lands here with load 0 (left derivative)
                A[b, j] = resid - prev
                if not clamped:
                    dA[b, j] = -1.0
            prev += cap
    return A, dA


def merit_order_batch_np(order, caps, demand, yhat):
    yhat = np.asarray(yhat, dtype=np.float64)
    clamped = yhat <= 0.0
    yhat = np.maximum(yhat, 0.0)
    resid = np.maximum(demand - yhat, 0.0)
    cs = caps[order]
    prev = np.concatenate(([0.0], np.cumsum(cs)[:-1]))
    loads = np.clip(resid[:, None] - prev[None, :], 0.0, cs[None, :])
    marg = (resid[:, None] >= prev[None, :]) & (resid[:, None] < prev[None, :] + cs[None, :])
    marg &= ((resid > 0.0) & ~clamped)[:, None]
    A = np.zeros_like(loads)
    dA = np.zeros_like(loads)
    A[:, order] = loads
    dA[:, order] = -marg.astype(np.float64)
    return A, dA


def merit_order_batch(order, caps, demand, yhat):
    """Dispatch residual demand ``demand - yhat`` in merit order.

    ``order`` lists generator indices by ascending cost.  Returns the loads
    (B, J) and their derivative with respect to yhat (B, J), which is -1 on
    the partially loaded unit and 0 elsewhere.  Predictions at or below 0
    are clamped to 0, where the derivative is taken as 0.
    """
    order = np.ascontiguousarray(order, dtype=np.int64)
    caps = np.ascontiguousarray(caps, dtype=np.float64)
    yhat = np.ascontiguousarray(np.atleast_1d(yhat), dtype=np.float64)
    if USE_NUMBA:
        return merit_order_batch_jit(order, caps, float(demand), yhat)
    return merit_order_batch_np(order, caps, float(demand), yhat)
