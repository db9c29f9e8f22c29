"""Numba backend for the batch 1C mass fit.

Keep the arithmetic in lockstep with _fit_numpy.py: same expressions, same
evaluation order, so both backends produce identical results.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def fit_batch(alpha0, var, m2_target, max_iter, tol_h, tol_dchi2):
    n = alpha0.shape[0]
    alpha_fit = alpha0.copy()
    chi2 = np.zeros(n)
    n_iter = np.zeros(n, dtype=np.int64)
    converged = np.zeros(n, dtype=np.bool_)
    pulls = np.zeros((n, 6))

    for i in range(n):
        a0 = alpha0[i]
        v = var[i]
        cur = a0.copy()
        chi2_prev = 0.0
        ok = False
        failed = False
        d_fin = np.zeros(6)
        iters = 0

        for it in range(1, max_iter + 1):
            iters = it
            e1, t1, p1, e2, t2, p2 = cur[0], cur[1], cur[2], cur[3], cur[4], cur[5]
            st1 = np.sin(t1); ct1 = np.cos(t1)
            st2 = np.sin(t2); ct2 = np.cos(t2)
            dp = p1 - p2
            cdp = np.cos(dp); sdp = np.sin(dp)
            cpsi = st1 * st2 * cdp + ct1 * ct2
            omc = 1.0 - cpsi
            h = 2.0 * e1 * e2 * omc - m2_target
            d1 = 2.0 * e2 * omc
            d4 = 2.0 * e1 * omc
            d2 = -2.0 * e1 * e2 * (ct1 * st2 * cdp - st1 * ct2)
            d5 = -2.0 * e1 * e2 * (st1 * ct2 * cdp - ct1 * st2)
            d3 = 2.0 * e1 * e2 * st1 * st2 * sdp
            d6 = -d3

            s = (d1 * d1 * v[0] + d2 * d2 * v[1] + d3 * d3 * v[2]
                 + d4 * d4 * v[3] + d5 * d5 * v[4] + d6 * d6 * v[5])
            if s <= 0.0:
                failed = True
                break
            r = (h + d1 * (a0[0] - cur[0]) + d2 * (a0[1] - cur[1])
                 + d3 * (a0[2] - cur[2]) + d4 * (a0[3] - cur[3])
                 + d5 * (a0[4] - cur[4]) + d6 * (a0[5] - cur[5]))
            lam = r / s

            new = np.empty(6)
            new[0] = a0[0] - v[0] * d1 * lam
            new[1] = a0[1] - v[1] * d2 * lam
            new[2] = a0[2] - v[2] * d3 * lam
            new[3] = a0[3] - v[3] * d4 * lam
            new[4] = a0[4] - v[4] * d5 * lam
            new[5] = a0[5] - v[5] * d6 * lam

            for _ in range(10):
                if new[0] > 0.0 and new[3] > 0.0:
                    break
                for k in range(6):
                    new[k] = 0.5 * (new[k] + cur[k])
            if new[0] <= 0.0 or new[3] <= 0.0:
                failed = True
                break

            c2 = lam * s * lam

            ne1, nt1, np1 = new[0], new[1], new[2]
            ne2, nt2, np2 = new[3], new[4], new[5]
            nst1 = np.sin(nt1); nct1 = np.cos(nt1)
            nst2 = np.sin(nt2); nct2 = np.cos(nt2)
            ndp = np1 - np2
            ncdp = np.cos(ndp); nsdp = np.sin(ndp)
            ncpsi = nst1 * nst2 * ncdp + nct1 * nct2
            nomc = 1.0 - ncpsi
            hn = 2.0 * ne1 * ne2 * nomc - m2_target

            d_fin[0] = 2.0 * ne2 * nomc
            d_fin[3] = 2.0 * ne1 * nomc
            d_fin[1] = -2.0 * ne1 * ne2 * (nct1 * nst2 * ncdp - nst1 * nct2)
            d_fin[4] = -2.0 * ne1 * ne2 * (nst1 * nct2 * ncdp - nct1 * nst2)
            d_fin[2] = 2.0 * ne1 * ne2 * nst1 * nst2 * nsdp
            d_fin[5] = -d_fin[2]

            if abs(hn) < tol_h and abs(c2 - chi2_prev) < tol_dchi2:
                cur = new
                chi2_prev = c2
                ok = True
                break
            cur = new
            chi2_prev = c2

        alpha_fit[i] = cur
        chi2[i] = chi2_prev
        n_iter[i] = iters
        converged[i] = ok and not failed

        s_fin = (d_fin[0] * d_fin[0] * v[0] + d_fin[1] * d_fin[1] * v[1]
                 + d_fin[2] * d_fin[2] * v[2] + d_fin[3] * d_fin[3] * v[3]
                 + d_fin[4] * d_fin[4] * v[4] + d_fin[5] * d_fin[5] * v[5])
        if s_fin > 0.0:
            sq = np.sqrt(s_fin)
            for k in range(6):
                den = v[k] * abs(d_fin[k]) / sq
                if den > 0.0:
                    pulls[i, k] = (a0[k] - cur[k]) / den
                else:
                    pulls[i, k] = 0.0

    return alpha_fit, chi2, n_iter, converged, pulls
