"""Numba-compiled kernel backend.

Same contracts as the numpy backend (see _numpy.py for the reference
semantics and the GRU equations); bodies are explicit loops compiled with
@njit. Compiled artifacts are cached on disk, so only the first call in a
fresh environment pays compilation time.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_JIT = {"cache": True, "nogil": True, "fastmath": False}


@njit(**_JIT)
def _sigmoid_scalar(a):
    if a >= 0.0:
        return 1.0 / (1.0 + np.exp(-a))
    ea = np.exp(a)
    return ea / (1.0 + ea)


@njit(**_JIT)
def conv2d_fwd(x, w, b):
    ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    ho = h - kh + 1
    wo = wd - kw + 1
    y = np.empty((co, ho, wo))
    for o in range(co):
        for i in range(ho):
            for j in range(wo):
                acc = b[o]
                for c in range(ci):
                    for u in range(kh):
                        for v in range(kw):
                            acc += w[o, c, u, v] * x[c, i + u, j + v]
                y[o, i, j] = acc
    return y


@njit(**_JIT)
def conv2d_bwd(x, w, dy):
    ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    ho = dy.shape[1]
    wo = dy.shape[2]
    dx = np.zeros((ci, h, wd))
    dw = np.zeros((co, ci, kh, kw))
    db = np.zeros(co)
    for o in range(co):
        for i in range(ho):
            for j in range(wo):
                g = dy[o, i, j]
                db[o] += g
                for c in range(ci):
                    for u in range(kh):
                        for v in range(kw):
                            dw[o, c, u, v] += g * x[c, i + u, j + v]
                            dx[c, i + u, j + v] += g * w[o, c, u, v]
    return dx, dw, db


@njit(**_JIT)
def maxpool2_fwd(x):
    c, h, wd = x.shape
    h2 = h // 2
    w2 = wd // 2
    y = np.empty((c, h2, w2))
    arg = np.empty((c, h2, w2), dtype=np.int64)
    for ch in range(c):
        for i in range(h2):
            for j in range(w2):
                best = x[ch, 2 * i, 2 * j]
                best_k = 0
                k = 0
                for u in range(2):
                    for v in range(2):
                        val = x[ch, 2 * i + u, 2 * j + v]
                        if val > best:
                            best = val
                            best_k = k
                        k += 1
                y[ch, i, j] = best
                arg[ch, i, j] = best_k
    return y, arg


@njit(**_JIT)
def maxpool2_bwd(dy, arg, h, w):
    c, h2, w2 = dy.shape
    dx = np.zeros((c, h, w))
    for ch in range(c):
        for i in range(h2):
            for j in range(w2):
                k = arg[ch, i, j]
                dx[ch, 2 * i + k // 2, 2 * j + k % 2] += dy[ch, i, j]
    return dx


@njit(**_JIT)
def gru_fwd(x, wz, wr, wc, uz, ur, uc, bz, br, bc):
    t_len = x.shape[0]
    hdim = uz.shape[0]
    px = np.dot(x, wz)
    pr = np.dot(x, wr)
    pc = np.dot(x, wc)
    hs = np.zeros((t_len + 1, hdim))
    zs = np.empty((t_len, hdim))
    rs = np.empty((t_len, hdim))
    cs = np.empty((t_len, hdim))
    rh = np.empty(hdim)
    for t in range(t_len):
        h_prev = hs[t]
        az = px[t] + np.dot(h_prev, uz) + bz
        ar = pr[t] + np.dot(h_prev, ur) + br
        for j in range(hdim):
            zs[t, j] = _sigmoid_scalar(az[j])
            rs[t, j] = _sigmoid_scalar(ar[j])
            rh[j] = rs[t, j] * h_prev[j]
        ac = pc[t] + np.dot(rh, uc) + bc
        for j in range(hdim):
            cs[t, j] = np.tanh(ac[j])
            hs[t + 1, j] = zs[t, j] * h_prev[j] + (1.0 - zs[t, j]) * cs[t, j]
    return hs, zs, rs, cs


@njit(**_JIT)
def gru_bwd(x, hs, zs, rs, cs, wz, wr, wc, uz, ur, uc, dh_out):
    t_len, hdim = dh_out.shape
    d_in = x.shape[1]
    dx = np.zeros((t_len, d_in))
    dwz = np.zeros((d_in, hdim))
    dwr = np.zeros((d_in, hdim))
    dwc = np.zeros((d_in, hdim))
    duz = np.zeros((hdim, hdim))
    dur = np.zeros((hdim, hdim))
    duc = np.zeros((hdim, hdim))
    dbz = np.zeros(hdim)
    dbr = np.zeros(hdim)
    dbc = np.zeros(hdim)
    dh = np.zeros(hdim)
    daz = np.empty(hdim)
    dar = np.empty(hdim)
    dac = np.empty(hdim)
    rh = np.empty(hdim)
    for t in range(t_len - 1, -1, -1):
        h_prev = hs[t]
        for j in range(hdim):
            dh[j] += dh_out[t, j]
            z = zs[t, j]
            c = cs[t, j]
            dac[j] = dh[j] * (1.0 - z) * (1.0 - c * c)
            rh[j] = rs[t, j] * h_prev[j]
        drh = np.dot(uc, dac)
        for j in range(hdim):
            z = zs[t, j]
            r = rs[t, j]
            dz = dh[j] * (h_prev[j] - cs[t, j])
            dr = drh[j] * h_prev[j]
            daz[j] = dz * z * (1.0 - z)
            dar[j] = dr * r * (1.0 - r)
            dbz[j] += daz[j]
            dbr[j] += dar[j]
            dbc[j] += dac[j]
            # carried gradient: through h_t = z*h_prev + ..., and through r*h_prev
            dh[j] = dh[j] * z + drh[j] * r
        for i in range(d_in):
            xv = x[t, i]
            accx = 0.0
            for j in range(hdim):
                dwz[i, j] += xv * daz[j]
                dwr[i, j] += xv * dar[j]
                dwc[i, j] += xv * dac[j]
                accx += wz[i, j] * daz[j] + wr[i, j] * dar[j] + wc[i, j] * dac[j]
            dx[t, i] = accx
        for i in range(hdim):
            hv = h_prev[i]
            rhv = rh[i]
            for j in range(hdim):
                duz[i, j] += hv * daz[j]
                dur[i, j] += hv * dar[j]
                duc[i, j] += rhv * dac[j]
        dh += np.dot(uz, daz) + np.dot(ur, dar)
    return dx, dwz, dwr, dwc, duz, dur, duc, dbz, dbr, dbc
