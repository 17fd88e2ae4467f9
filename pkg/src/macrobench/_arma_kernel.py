"""Compiled Kalman-filter recursion for ARMA Gaussian likelihood terms.

The model for the (differenced, de-meaned) series w is

    w_t = phi_1 w_{t-1} + ... + phi_p w_{t-p} + e_t + theta_1 e_{t-1} + ...

in the state-space form with r = max(p, q+1) states: transition matrix T
carrying phi in its first column and an identity superdiagonal, shock
loading R = (1, theta_1, ..., theta_{r-1}), observation w_t = alpha_t[0].
The innovation variance is concentrated out, so the kernel returns
ssq = sum(v_t^2 / F_t) and sumlogf = sum(log F_t) plus the one-step-ahead
state after the final observation. The covariance recursion freezes once
it converges, which makes long stationary series cheap.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def arma_filter(w, phi, theta):
    n = w.shape[0]
    p = phi.shape[0]
    q = theta.shape[0]
    r = max(p, q + 1)

    tcol = np.zeros(r)
    for i in range(p):
        tcol[i] = phi[i]
    rvec = np.zeros(r)
    rvec[0] = 1.0
    for j in range(q):
        rvec[j + 1] = theta[j]

    T = np.zeros((r, r))
    for i in range(r):
        T[i, 0] = tcol[i]
        if i + 1 < r:
            T[i, i + 1] = 1.0
    RR = np.empty((r, r))
    for i in range(r):
        for j in range(r):
            RR[i, j] = rvec[i] * rvec[j]

    # stationary initial covariance: vec(P) = (I - T kron T)^{-1} vec(RR)
    r2 = r * r
    M = np.empty((r2, r2))
    for a in range(r):
        for b in range(r):
            for c in range(r):
                for e in range(r):
                    M[a * r + b, c * r + e] = -T[a, c] * T[b, e]
    for k in range(r2):
        M[k, k] += 1.0
    vecP = np.linalg.solve(M, RR.reshape(r2))
    P = np.empty((r, r))
    for i in range(r):
        for j in range(r):
            P[i, j] = 0.5 * (vecP[i * r + j] + vecP[j * r + i])

    state = np.zeros(r)
    K = np.empty(r)
    Mbuf = np.empty((r, r))
    Pnew = np.empty((r, r))

    ssq = 0.0
    sumlogf = 0.0
    steady = False
    n_steady = 0
    F = P[0, 0]
    if not np.isfinite(F) or F <= 0.0:
        return False, 0.0, 0.0, state

    for t in range(n):
        v = w[t] - state[0]
        ssq += v * v / F
        if steady:
            n_steady += 1
        else:
            sumlogf += np.log(F)

        c = v / F
        if steady:
            # K frozen; state update only
            a0 = state[0] + K[0] * c
            for i in range(r):
                nxt = state[i + 1] + K[i + 1] * c if i + 1 < r else 0.0
                Pnew[0, i] = tcol[i] * a0 + nxt  # reuse Pnew row 0 as scratch
            for i in range(r):
                state[i] = Pnew[0, i]
        else:
            for i in range(r):
                K[i] = P[i, 0]
            a0 = state[0] + K[0] * c
            for i in range(r):
                nxt = state[i + 1] + K[i + 1] * c if i + 1 < r else 0.0
                Pnew[0, i] = tcol[i] * a0 + nxt
            for i in range(r):
                state[i] = Pnew[0, i]

            for i in range(r):
                for j in range(r):
                    Mbuf[i, j] = P[i, j] - K[i] * K[j] / F
            maxdelta = 0.0
            for i in range(r):
                for j in range(r):
                    m00 = Mbuf[0, 0]
                    mi0 = Mbuf[i + 1, 0] if i + 1 < r else 0.0
                    m0j = Mbuf[0, j + 1] if j + 1 < r else 0.0
                    mij = Mbuf[i + 1, j + 1] if (i + 1 < r and j + 1 < r) else 0.0
                    val = tcol[i] * tcol[j] * m00 + tcol[i] * m0j + tcol[j] * mi0 + mij + RR[i, j]
                    delta = abs(val - P[i, j])
                    if delta > maxdelta:
                        maxdelta = delta
                    Pnew[i, j] = val
            for i in range(r):
                for j in range(r):
                    P[i, j] = Pnew[i, j]
            F = P[0, 0]
            if not np.isfinite(F) or F <= 0.0:
                return False, 0.0, 0.0, state
            if maxdelta < 1e-13 * (1.0 + abs(F)):
                steady = True
                for i in range(r):
                    K[i] = P[i, 0]

    sumlogf += n_steady * np.log(F)
    if not np.isfinite(ssq) or not np.isfinite(sumlogf):
        return False, 0.0, 0.0, state
    return True, ssq, sumlogf, state
