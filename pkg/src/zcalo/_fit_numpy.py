"""Pure-numpy backend for the batch 1C mass fit.

Vectorised twin of _fit_numba.py: identical expressions in identical
evaluation order, with per-candidate state frozen once a row converges or
fails, so both backends agree to the last bit.
"""

import numpy as np


def _constraint(alpha, m2_target):
    e1, t1, p1 = alpha[:, 0], alpha[:, 1], alpha[:, 2]
    e2, t2, p2 = alpha[:, 3], alpha[:, 4], alpha[:, 5]
    st1 = np.sin(t1); ct1 = np.cos(t1)
    st2 = np.sin(t2); ct2 = np.cos(t2)
    dp = p1 - p2
    cdp = np.cos(dp); sdp = np.sin(dp)
    cpsi = st1 * st2 * cdp + ct1 * ct2
    omc = 1.0 - cpsi
    h = 2.0 * e1 * e2 * omc - m2_target
    d = np.empty_like(alpha)
    d[:, 0] = 2.0 * e2 * omc
    d[:, 3] = 2.0 * e1 * omc
    d[:, 1] = -2.0 * e1 * e2 * (ct1 * st2 * cdp - st1 * ct2)
    d[:, 4] = -2.0 * e1 * e2 * (st1 * ct2 * cdp - ct1 * st2)
    d[:, 2] = 2.0 * e1 * e2 * st1 * st2 * sdp
    d[:, 5] = -d[:, 2]
    return h, d


def _weighted_sum(d, v):
    return (d[:, 0] * d[:, 0] * v[:, 0] + d[:, 1] * d[:, 1] * v[:, 1]
            + d[:, 2] * d[:, 2] * v[:, 2] + d[:, 3] * d[:, 3] * v[:, 3]
            + d[:, 4] * d[:, 4] * v[:, 4] + d[:, 5] * d[:, 5] * v[:, 5])


def fit_batch(alpha0, var, m2_target, max_iter, tol_h, tol_dchi2):
    n = alpha0.shape[0]
    a0 = alpha0
    v = var
    cur = alpha0.copy()
    chi2_prev = np.zeros(n)
    ok = np.zeros(n, dtype=bool)
    failed = np.zeros(n, dtype=bool)
    d_fin = np.zeros((n, 6))
    iters = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)

    with np.errstate(all="ignore"):
        for it in range(1, max_iter + 1):
            if not active.any():
                break
            iters[active] = it

            h, d = _constraint(cur, m2_target)
            s = _weighted_sum(d, v)
            bad_s = active & ~(s > 0.0)
            failed |= bad_s
            active &= ~bad_s

            r = (h + d[:, 0] * (a0[:, 0] - cur[:, 0])
                 + d[:, 1] * (a0[:, 1] - cur[:, 1])
                 + d[:, 2] * (a0[:, 2] - cur[:, 2])
                 + d[:, 3] * (a0[:, 3] - cur[:, 3])
                 + d[:, 4] * (a0[:, 4] - cur[:, 4])
                 + d[:, 5] * (a0[:, 5] - cur[:, 5]))
            lam = r / s
            new = a0 - v * d * lam[:, None]

            for _ in range(10):
                bad_e = active & ((new[:, 0] <= 0.0) | (new[:, 3] <= 0.0))
                if not bad_e.any():
                    break
                new[bad_e] = 0.5 * (new[bad_e] + cur[bad_e])
            still_bad = active & ((new[:, 0] <= 0.0) | (new[:, 3] <= 0.0))
            failed |= still_bad
            active &= ~still_bad

            c2 = lam * s * lam
            hn, dn = _constraint(new, m2_target)

            conv_now = active & (np.abs(hn) < tol_h) \
                & (np.abs(c2 - chi2_prev) < tol_dchi2)

            upd = active
            cur[upd] = new[upd]
            chi2_prev[upd] = c2[upd]
            d_fin[upd] = dn[upd]
            ok |= conv_now
            active &= ~conv_now

        converged = ok & ~failed
        s_fin = _weighted_sum(d_fin, v)
        sq = np.sqrt(np.where(s_fin > 0.0, s_fin, 1.0))
        den = v * np.abs(d_fin) / sq[:, None]
        good = (s_fin > 0.0)[:, None] & (den > 0.0)
        pulls = np.where(good, (a0 - cur) / np.where(den > 0.0, den, 1.0), 0.0)

    return cur, chi2_prev, iters, converged, pulls
