"""Pure-numpy kernel backend.

Reference implementations of the model's hot inner loops: valid-mode 2-D
convolution, 2x2 max-pooling and a GRU recurrence, each with its backward
pass. The numba backend mirrors these semantics exactly, including max-pool
tie-breaking (first maximum in row-major window order).
"""

from __future__ import annotations

import numpy as np


def conv2d_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Valid convolution: x (Ci,H,W), w (Co,Ci,KH,KW), b (Co,) -> (Co,H',W')."""
    ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    ho, wo = h - kh + 1, wd - kw + 1
    y = np.empty((co, ho, wo))
    y[:] = b[:, None, None]
    for u in range(kh):
        for v in range(kw):
            # (Co,Ci) x (Ci,Ho,Wo) contracted over Ci
            y += np.tensordot(w[:, :, u, v], x[:, u : u + ho, v : v + wo], axes=([1], [0]))
    return y


def conv2d_bwd(x: np.ndarray, w: np.ndarray, dy: np.ndarray):
    ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    ho, wo = dy.shape[1], dy.shape[2]
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    db = dy.sum(axis=(1, 2))
    for u in range(kh):
        for v in range(kw):
            patch = x[:, u : u + ho, v : v + wo]
            dw[:, :, u, v] = np.tensordot(dy, patch, axes=([1, 2], [1, 2]))
            dx[:, u : u + ho, v : v + wo] += np.tensordot(w[:, :, u, v], dy, axes=([0], [0]))
    return dx, dw, db


def maxpool2_fwd(x: np.ndarray):
    """2x2 max-pool, stride 2, odd tail dropped. Returns (y, argmax in 0..3)."""
    c, h, wd = x.shape
    h2, w2 = h // 2, wd // 2
    windows = (
        x[:, : h2 * 2, : w2 * 2]
        .reshape(c, h2, 2, w2, 2)
        .transpose(0, 1, 3, 2, 4)
        .reshape(c, h2, w2, 4)
    )
    arg = windows.argmax(axis=3)
    y = np.take_along_axis(windows, arg[..., None], axis=3)[..., 0]
    return y, arg.astype(np.int64)


def maxpool2_bwd(dy: np.ndarray, arg: np.ndarray, h: int, w: int) -> np.ndarray:
    c, h2, w2 = dy.shape
    dx = np.zeros((c, h, w))
    rows = 2 * np.arange(h2)[None, :, None] + arg // 2
    cols = 2 * np.arange(w2)[None, None, :] + arg % 2
    chan = np.arange(c)[:, None, None]
    np.add.at(dx, (chan, rows, cols), dy)
    return dx


def gru_fwd(x, wz, wr, wc, uz, ur, uc, bz, br, bc):
    """GRU over a (T, D) sequence, initial state zero.

    z_t = sigmoid(x_t Wz + h_{t-1} Uz + bz)
    r_t = sigmoid(x_t Wr + h_{t-1} Ur + br)
    c_t = tanh(x_t Wc + (r_t * h_{t-1}) Uc + bc)
    h_t = z_t * h_{t-1} + (1 - z_t) * c_t

    Returns (hs, zs, rs, cs) with hs of shape (T+1, H), hs[0] = 0.
    """
    t_len = x.shape[0]
    hdim = uz.shape[0]
    px = x @ wz + bz
    pr = x @ wr + br
    pc = x @ wc + bc
    hs = np.zeros((t_len + 1, hdim))
    zs = np.empty((t_len, hdim))
    rs = np.empty((t_len, hdim))
    cs = np.empty((t_len, hdim))
    for t in range(t_len):
        h_prev = hs[t]
        z = _sigmoid(px[t] + h_prev @ uz)
        r = _sigmoid(pr[t] + h_prev @ ur)
        c = np.tanh(pc[t] + (r * h_prev) @ uc)
        hs[t + 1] = z * h_prev + (1.0 - z) * c
        zs[t], rs[t], cs[t] = z, r, c
    return hs, zs, rs, cs


def gru_bwd(x, hs, zs, rs, cs, wz, wr, wc, uz, ur, uc, dh_out):
    """Backward through time; dh_out[t] is the loss gradient w.r.t. h_{t+1}."""
    t_len, hdim = dh_out.shape
    dx = np.zeros_like(x)
    dwz, dwr, dwc = np.zeros_like(wz), np.zeros_like(wr), np.zeros_like(wc)
    duz, dur, duc = np.zeros_like(uz), np.zeros_like(ur), np.zeros_like(uc)
    dbz, dbr, dbc = np.zeros(hdim), np.zeros(hdim), np.zeros(hdim)
    dh = np.zeros(hdim)
    for t in range(t_len - 1, -1, -1):
        dh = dh + dh_out[t]
        h_prev = hs[t]
        z, r, c = zs[t], rs[t], cs[t]
        dz = dh * (h_prev - c)
        dc = dh * (1.0 - z)
        dh_prev = dh * z
        dac = dc * (1.0 - c * c)
        drh = uc @ dac  # grad w.r.t. (r * h_prev)
        dr = drh * h_prev
        dh_prev = dh_prev + drh * r
        daz = dz * z * (1.0 - z)
        dar = dr * r * (1.0 - r)
        dwz += np.outer(x[t], daz)
        dwr += np.outer(x[t], dar)
        dwc += np.outer(x[t], dac)
        duz += np.outer(h_prev, daz)
        dur += np.outer(h_prev, dar)
        duc += np.outer(r * h_prev, dac)
        dbz += daz
        dbr += dar
        dbc += dac
        dh_prev = dh_prev + uz @ daz + ur @ dar
        dx[t] = wz @ daz + wr @ dar + wc @ dac
        dh = dh_prev
    return dx, dwz, dwr, dwc, duz, dur, duc, dbz, dbr, dbc


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out
