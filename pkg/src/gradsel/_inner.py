"""Fused O(n^2) loops for the GMD inner iteration.

Each block update touches the full n x n margin matrix once: it applies the
previous block's change to the margins and, in the same sweep, accumulates
the loss-derivative sums needed by the next block's gradient (and, once per
cycle, the loss itself). Loops are single-threaded, so results do not depend
on the thread count.
"""

import math

from numba import njit

LOGISTIC = 0
SQUARED_HINGE = 1

LOSS_CODES = {"logistic": LOGISTIC, "squared_hinge": SQUARED_HINGE}


# Every block change has the form P_ij += ya_i z_j - y_i w_j: the intercept
# block uses a = 1, w = 0 and gradient block ell uses a = x_ell, w = x_ell * z.


@njit(cache=True, nogil=True, fastmath=True, error_model="numpy")
def _sweep_logistic(P, Wy, Wn, y, ya, z, w, xb, colsum, xg, with_loss):
    n = P.shape[0]
    total = 0.0
    for j in range(n):
        colsum[j] = 0.0
        xg[j] = 0.0
    for i in range(n):
        yi = y[i]
        yai = ya[i]
        xbi = xb[i]
        for j in range(n):
            pij = P[i, j] + yai * z[j] - yi * w[j]
            P[i, j] = pij
            e = math.exp(-abs(pij))
            d = -e / (1.0 + e) if pij >= 0.0 else -1.0 / (1.0 + e)
            g = Wy[i, j] * d
            colsum[j] += g
            xg[j] += xbi * g
            if with_loss:
                total += Wn[i, j] * (max(-pij, 0.0) + math.log(1.0 + e))
    return total


@njit(cache=True, nogil=True, fastmath=True, error_model="numpy")
def _sweep_sqhinge(P, Wy, Wn, y, ya, z, w, xb, colsum, xg, with_loss):
    n = P.shape[0]
    total = 0.0
    for j in range(n):
        colsum[j] = 0.0
        xg[j] = 0.0
    for i in range(n):
        yi = y[i]
        yai = ya[i]
        xbi = xb[i]
        for j in range(n):
            pij = P[i, j] + yai * z[j] - yi * w[j]
            P[i, j] = pij
            t = max(1.0 - pij, 0.0)
            g = -2.0 * Wy[i, j] * t
            colsum[j] += g
            xg[j] += xbi * g
            if with_loss:
                total += Wn[i, j] * t * t
    return total


_SWEEPS = (_sweep_logistic, _sweep_sqhinge)


def sweep(kind, P, Wy, Wn, y, ya, z, w, xb, colsum, xg, with_loss=False):
    """Apply one block change to ``P`` and accumulate the next residual sums.

    On exit ``colsum[j] = sum_i G_ij`` and ``xg[j] = sum_i xb_i G_ij`` with
    ``G_ij = Wy_ij L'(P_ij)``; returns ``sum_ij Wn_ij L(P_ij)`` when
    ``with_loss`` is set and 0 otherwise.
    """
    return _SWEEPS[kind](P, Wy, Wn, y, ya, z, w, xb, colsum, xg, with_loss)


@njit(cache=True)
def secular_norm(c, lam, thr):
    """Solve ``sum_k c_k^2 / (lam_k t + thr)^2 = 1`` for ``t > 0``.

    Requires ``|c| > thr``. Safeguarded Newton on ``1/sqrt(S(t)) - 1``,
    which is increasing in ``t``.
    """
    n = c.shape[0]
    cn = 0.0
    lmax = 0.0
    for k in range(n):
        cn += c[k] * c[k]
        if lam[k] > lmax:
            lmax = lam[k]
    cn = math.sqrt(cn)
    lo = (cn - thr) / lmax
    hi = lo
    # grow the bracket until the residual changes sign
    while True:
        s = 0.0
        for k in range(n):
            a = lam[k] * hi + thr
            s += (c[k] / a) ** 2
        if s <= 1.0:
            break
        hi = 2.0 * hi + 1e-300
    t = lo
    for _ in range(200):
        s = 0.0
        ds = 0.0
        for k in range(n):
            a = lam[k] * t + thr
            q = (c[k] / a) ** 2
            s += q
            ds += -2.0 * q * lam[k] / a
        f = 1.0 / math.sqrt(s) - 1.0
        if f < 0.0:
            lo = t
        else:
            hi = t
        if abs(f) <= 1e-15:
            break
        df = -0.5 * ds / (s * math.sqrt(s))
        t_new = t - f / df if df > 0.0 else 0.5 * (lo + hi)
        if not lo < t_new < hi:
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= 1e-15 * t:
            t = t_new
            break
        t = t_new
    return t
