"""Compiled inner loops for the coordinate sweeps.

Residuals are held as an (L, n) matrix ``R`` and updated in place.  A
coordinate with working column ``c`` and current value ``b0`` sees the
scalar problem

    h(b) = (1/2n) sum_{l,i} w(R_li - c_i (b - b0)) * (R_li - c_i (b - b0))**2
           + rho(|b|; lam, r)

which is solved by refreshing the weight pattern and applying the closed-form
MCP step until the pattern is self-consistent.  Any step that would raise
``h`` is replaced by the exact minimizer from a breakpoint sweep.
"""

import numpy as np
from numba import njit

MAX_REFRESH = 50

# status codes returned by the sweeps
OK = 0
NONCONVEX = 1


@njit(cache=True)
def _mcp(a, lam, r):
    a = abs(a)
    if a <= r * lam:
        return lam * a - a * a / (2.0 * r)
    return 0.5 * r * lam * lam


@njit(cache=True)
def mcp_closed_form(phi, psi, lam, r):
    """argmin 0.5 psi b^2 - phi b + rho(|b|); global for any psi > 0."""
    if psi > 1.0 / r:
        if abs(phi) <= lam * r * psi:
            st = abs(phi) - lam
            if st <= 0.0:
                return 0.0
            return np.sign(phi) * st / (psi - 1.0 / r)
        return phi / psi
    # concave on [0, r lam]: compare 0, the kink r lam, and the outer stationary point
    best = 0.0
    best_val = 0.0
    s = 1.0 if phi >= 0.0 else -1.0
    b = s * r * lam
    val = 0.5 * psi * b * b - phi * b + 0.5 * r * lam * lam
    if val < best_val:
        best, best_val = b, val
    b = phi / psi
    if abs(b) > r * lam:
        val = 0.5 * psi * b * b - phi * b + 0.5 * r * lam * lam
        if val < best_val:
            best, best_val = b, val
    return best


@njit(cache=True)
def _coord_value(col, R, taus, delta, b, lam, r, inv_n):
    L, n = R.shape
    acc = 0.0
    for l in range(L):
        tau = taus[l]
        for i in range(n):
            u = R[l, i] - col[i] * delta
            if u >= 0.0:
                acc += tau * u * u
            else:
                acc += (1.0 - tau) * u * u
    return 0.5 * inv_n * acc + _mcp(b, lam, r)


@njit(cache=True)
def exact_coordinate_min(col, R, taus, b0, lam, r, inv_n):
    """Global minimizer of the scalar coordinate problem via a breakpoint sweep."""
    L, n = R.shape
    m = 0
    for i in range(n):
        if col[i] != 0.0:
            m += 1
    nb = m * L
    pts = np.empty(nb + 3)
    dA = np.zeros(nb + 3)
    dB = np.zeros(nb + 3)
    dC = np.zeros(nb + 3)
    A = 0.0
    B = 0.0
    C = 0.0
    k = 0
    for l in range(L):
        tau = taus[l]
        for i in range(n):
            c = col[i]
            if c == 0.0:
                continue
            e = R[l, i] + c * b0
            pts[k] = e / c
            if c > 0.0:
                w0 = tau
                dw = 1.0 - 2.0 * tau
            else:
                w0 = 1.0 - tau
                dw = 2.0 * tau - 1.0
            A += w0 * c * c
            B += w0 * c * e
            C += w0 * e * e
            dA[k] = dw * c * c
            dB[k] = dw * c * e
            dC[k] = dw * e * e
            k += 1
    rl = r * lam
    pts[nb] = -rl
    pts[nb + 1] = 0.0
    pts[nb + 2] = rl
    order = np.argsort(pts)
    best = b0
    best_val = np.inf
    lo = -np.inf
    idx = 0
    total = nb + 3
    while True:
        hi = np.inf if idx >= total else pts[order[idx]]
        if hi > lo:
            # penalty piece on (lo, hi)
            if hi == np.inf:
                mid = lo + 1.0
            elif lo == -np.inf:
                mid = hi - 1.0
            else:
                mid = 0.5 * (lo + hi)
            if mid <= -rl or mid >= rl:
                pa, pb, pc = 0.0, 0.0, 0.5 * r * lam * lam
            elif mid < 0.0:
                pa, pb, pc = -0.5 / r, -lam, 0.0
            else:
                pa, pb, pc = -0.5 / r, lam, 0.0
            qa = 0.5 * inv_n * A + pa
            qb = -inv_n * B + pb
            qc = 0.5 * inv_n * C + pc
            if lo > -np.inf:
                v = (qa * lo + qb) * lo + qc
                if v < best_val:
                    best, best_val = lo, v
            if hi < np.inf:
                v = (qa * hi + qb) * hi + qc
                if v < best_val:
                    best, best_val = hi, v
            if qa > 0.0:
                vx = -qb / (2.0 * qa)
                if lo < vx < hi:
                    v = (qa * vx + qb) * vx + qc
                    if v < best_val:
                        best, best_val = vx, v
        if idx >= total:
            break
        # cross every breakpoint located at hi
        while idx < total and pts[order[idx]] == hi:
            j = order[idx]
            A += dA[j]
            B += dB[j]
            C += dC[j]
            idx += 1
        lo = hi
    return best


@njit(cache=True)
def _pass(col, R, taus, delta, b, lam, r, inv_n):
    """phi, psi and h at value b (residual R - col * delta)."""
    L, n = R.shape
    phi = 0.0
    psi = 0.0
    acc = 0.0
    for l in range(L):
        tau = taus[l]
        for i in range(n):
            c = col[i]
            u = R[l, i] - c * delta
            w = tau if u >= 0.0 else 1.0 - tau
            wc = w * c
            phi += wc * (u + c * b)
            psi += wc * c
            acc += w * u * u
    return phi * inv_n, psi * inv_n, 0.5 * inv_n * acc + _mcp(b, lam, r)


@njit(cache=True)
def update_coordinate(col, R, taus, b0, lam, r, inv_n, strict):
    """Minimize over one coordinate; returns (new value, status, psi)."""
    L, n = R.shape
    ss = 0.0
    for i in range(n):
        ss += col[i] * col[i]
    if ss == 0.0:
        return 0.0, OK, 0.0
    b = b0
    phi, psi, h_b = _pass(col, R, taus, 0.0, b, lam, r, inv_n)
    for _ in range(MAX_REFRESH):
        if strict and psi <= 1.0 / r:
            return b0, NONCONVEX, psi
        cand = mcp_closed_form(phi, psi, lam, r)
        if cand == b:
            break
        phi_c, psi_c, h_c = _pass(col, R, taus, cand - b0, cand, lam, r, inv_n)
        if h_c <= h_b:
            stalled = h_c == h_b and abs(cand - b) <= 1e-15 * (1.0 + abs(b))
            b, h_b, phi, psi = cand, h_c, phi_c, psi_c
            if stalled:
                break
        else:
            cand = exact_coordinate_min(col, R, taus, b0, lam, r, inv_n)
            h_c = _coord_value(col, R, taus, cand - b0, cand, lam, r, inv_n)
            if h_c <= h_b:
                b = cand
            break
    delta = b - b0
    if delta != 0.0:
        for l in range(L):
            for i in range(n):
                R[l, i] -= col[i] * delta
    return b, OK, psi


@njit(cache=True)
def sweep_columns(A, B, scale, coef, active, R, taus, lam, r, inv_n, strict):
    """Coordinate sweep over columns ``A[:, j] * B[:, j] * scale[j]``.

    Inactive coordinates are skipped.  Returns (status, index, psi) of the
    first non-convex subproblem in strict mode, else (OK, -1, 0).
    """
    n, p = A.shape
    col = np.empty(n)
    for j in range(p):
        if not active[j]:
            continue
        s = scale[j]
        for i in range(n):
            col[i] = A[i, j] * B[i, j] * s
        new, status, psi = update_coordinate(col, R, taus, coef[j], lam, r, inv_n, strict)
        if status != OK:
            return status, j, psi
        coef[j] = new
    return OK, -1, 0.0
