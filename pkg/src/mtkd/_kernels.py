"""Hot numeric loops: gated-cell sequences and the CTC forward-backward.

Each kernel exists twice: a plain numpy reference and a numba-compiled
version. The compiled path is selected at import unless MTKD_NO_JIT is
set; tests assert both paths agree within floating-point round-off on
random inputs. All loops use a fixed iteration order so results are
reproducible run to run.

Cell conventions (row-vector states, T steps, hidden width H):

ugrnn   pre = x_t W + h_{t-1} U        (W, U pack [gate | candidate])
        z = sigmoid(pre[:H]); c = tanh(pre[H:])
        h_t = z * h_{t-1} + (1 - z) * c

mgu     f = sigmoid(x_t W_f + h_{t-1} U_f)
        c = tanh(x_t W_c + (f * h_{t-1}) U_c)
        h_t = (1 - f) * h_{t-1} + f * c

The input projections x_t W (+ bias) are precomputed outside as one
matrix product; kernels receive them as ``xp`` / ``xf`` / ``xc``.
"""

from __future__ import annotations

import math
import os

import numpy as np

_NEG_INF = -np.inf


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------


def _np_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def ugrnn_forward_np(xp, U, h0):
    T = xp.shape[0]
    H = h0.shape[0]
    h_all = np.empty((T, H), dtype=xp.dtype)
    zc = np.empty((T, 2 * H), dtype=xp.dtype)
    h = h0
    for t in range(T):
        pre = xp[t] + h @ U
        z = _np_sigmoid(pre[:H])
        c = np.tanh(pre[H:])
        h = z * h + (1.0 - z) * c
        zc[t, :H] = z
        zc[t, H:] = c
        h_all[t] = h
    return h_all, zc


def ugrnn_backward_np(dh_all, h_all, zc, U, h0):
    T, H = dh_all.shape
    dxp = np.empty((T, 2 * H), dtype=dh_all.dtype)
    dU = np.zeros_like(U)
    carry = np.zeros(H, dtype=dh_all.dtype)
    for t in range(T - 1, -1, -1):
        hprev = h_all[t - 1] if t > 0 else h0
        dh = dh_all[t] + carry
        z = zc[t, :H]
        c = zc[t, H:]
        da_z = dh * (hprev - c) * z * (1.0 - z)
        da_c = dh * (1.0 - z) * (1.0 - c * c)
        dxp[t, :H] = da_z
        dxp[t, H:] = da_c
        carry = dh * z + U @ dxp[t]
        dU += np.outer(hprev, dxp[t])
    return dxp, dU, carry


def mgu_forward_np(xf, xc, Uf, Uc, h0):
    T = xf.shape[0]
    H = h0.shape[0]
    h_all = np.empty((T, H), dtype=xf.dtype)
    f_st = np.empty((T, H), dtype=xf.dtype)
    c_st = np.empty((T, H), dtype=xf.dtype)
    h = h0
    for t in range(T):
        f = _np_sigmoid(xf[t] + h @ Uf)
        c = np.tanh(xc[t] + (f * h) @ Uc)
        h = (1.0 - f) * h + f * c
        f_st[t] = f
        c_st[t] = c
        h_all[t] = h
    return h_all, f_st, c_st


def mgu_backward_np(dh_all, h_all, f_st, c_st, Uf, Uc, h0):
    T, H = dh_all.shape
    dxf = np.empty((T, H), dtype=dh_all.dtype)
    dxc = np.empty((T, H), dtype=dh_all.dtype)
    dUf = np.zeros_like(Uf)
    dUc = np.zeros_like(Uc)
    carry = np.zeros(H, dtype=dh_all.dtype)
    for t in range(T - 1, -1, -1):
        hprev = h_all[t - 1] if t > 0 else h0
        dh = dh_all[t] + carry
        f = f_st[t]
        c = c_st[t]
        df = dh * (c - hprev)
        dhprev = dh * (1.0 - f)
        da_c = dh * f * (1.0 - c * c)
        dxc[t] = da_c
        dfh = Uc @ da_c
        dUc += np.outer(f * hprev, da_c)
        df = df + dfh * hprev
        dhprev = dhprev + dfh * f
        da_f = df * f * (1.0 - f)
        dxf[t] = da_f
        dhprev = dhprev + Uf @ da_f
        dUf += np.outer(hprev, da_f)
        carry = dhprev
    return dxf, dxc, dUf, dUc, carry


def ctc_alpha_np(lp, ext, skip_ok):
    """Log-space forward recursion over the blank-extended label sequence."""
    T = lp.shape[0]
    S = ext.shape[0]
    alpha = np.full((T, S), _NEG_INF, dtype=lp.dtype)
    alpha[0, 0] = lp[0, ext[0]]
    if S > 1:
        alpha[0, 1] = lp[0, ext[1]]
    for t in range(1, T):
        stay = alpha[t - 1]
        prev = np.full(S, _NEG_INF, dtype=lp.dtype)
        prev[1:] = alpha[t - 1, :-1]
        acc = np.logaddexp(stay, prev)
        skip = np.full(S, _NEG_INF, dtype=lp.dtype)
        skip[2:] = np.where(skip_ok[2:], alpha[t - 1, :-2], _NEG_INF)
        acc = np.logaddexp(acc, skip)
        alpha[t] = acc + lp[t, ext]
    if S > 1:
        log_z = np.logaddexp(alpha[T - 1, S - 1], alpha[T - 1, S - 2])
    else:
        log_z = alpha[T - 1, S - 1]
    return alpha, float(log_z)


def ctc_beta_np(lp, ext, skip_ok):
    T = lp.shape[0]
    S = ext.shape[0]
    beta = np.full((T, S), _NEG_INF, dtype=lp.dtype)
    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + lp[t + 1, ext]
        acc = nxt.copy()
        right = np.full(S, _NEG_INF, dtype=lp.dtype)
        right[:-1] = nxt[1:]
        acc = np.logaddexp(acc, right)
        skip = np.full(S, _NEG_INF, dtype=lp.dtype)
        skip[:-2] = np.where(skip_ok[2:], nxt[2:], _NEG_INF)
        beta[t] = np.logaddexp(acc, skip)
    return beta


def ctc_grid_grad_np(prob_grid, lp, ext, alpha, beta, log_z):
    """d(-log Z)/dP. Paths through (t, s) each carry one factor P[t, ext_s]."""
    T, V = prob_grid.shape
    S = ext.shape[0]
    grad = np.zeros((T, V), dtype=prob_grid.dtype)
    for s in range(S):
        g = alpha[:, s] + beta[:, s] - lp[:, ext[s]] - log_z
        contrib = np.where(np.isfinite(g), np.exp(g), 0.0)
        grad[:, ext[s]] -= contrib
    return grad


# ---------------------------------------------------------------------------
# numba versions
# ---------------------------------------------------------------------------

_USE_JIT = os.environ.get("MTKD_NO_JIT", "") != "1"

if _USE_JIT:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        _USE_JIT = False

if _USE_JIT:

    @njit(cache=True)
    def _ugrnn_forward_jit(xp, U, h0):
        T = xp.shape[0]
        H = h0.shape[0]
        h_all = np.empty((T, H), dtype=xp.dtype)
        zc = np.empty((T, 2 * H), dtype=xp.dtype)
        h = h0.copy()
        for t in range(T):
            pre = xp[t] + h @ U
            for j in range(H):
                z = 1.0 / (1.0 + math.exp(-pre[j]))
                c = math.tanh(pre[H + j])
                zc[t, j] = z
                zc[t, H + j] = c
                h_all[t, j] = z * h[j] + (1.0 - z) * c
            h = h_all[t]
        return h_all, zc

    @njit(cache=True)
    def _ugrnn_backward_jit(dh_all, h_all, zc, U, h0):
        T = dh_all.shape[0]
        H = dh_all.shape[1]
        dxp = np.empty((T, 2 * H), dtype=dh_all.dtype)
        dU = np.zeros(U.shape, dtype=dh_all.dtype)
        carry = np.zeros(H, dtype=dh_all.dtype)
        for t in range(T - 1, -1, -1):
            hprev = h_all[t - 1] if t > 0 else h0
            for j in range(H):
                dh = dh_all[t, j] + carry[j]
                z = zc[t, j]
                c = zc[t, H + j]
                dxp[t, j] = dh * (hprev[j] - c) * z * (1.0 - z)
                dxp[t, H + j] = dh * (1.0 - z) * (1.0 - c * c)
                carry[j] = dh * z
            dpre = dxp[t]
            carry += U @ dpre
            for i in range(H):
                hp = hprev[i]
                for k in range(2 * H):
                    dU[i, k] += hp * dpre[k]
        return dxp, dU, carry

    @njit(cache=True)
    def _mgu_forward_jit(xf, xc, Uf, Uc, h0):
        T = xf.shape[0]
        H = h0.shape[0]
        h_all = np.empty((T, H), dtype=xf.dtype)
        f_st = np.empty((T, H), dtype=xf.dtype)
        c_st = np.empty((T, H), dtype=xf.dtype)
        fh = np.empty(H, dtype=xf.dtype)
        h = h0.copy()
        for t in range(T):
            pf = xf[t] + h @ Uf
            for j in range(H):
                f = 1.0 / (1.0 + math.exp(-pf[j]))
                f_st[t, j] = f
                fh[j] = f * h[j]
            pc = xc[t] + fh @ Uc
            for j in range(H):
                f = f_st[t, j]
                c = math.tanh(pc[j])
                c_st[t, j] = c
                h_all[t, j] = (1.0 - f) * h[j] + f * c
            h = h_all[t]
        return h_all, f_st, c_st

    @njit(cache=True)
    def _mgu_backward_jit(dh_all, h_all, f_st, c_st, Uf, Uc, h0):
        T = dh_all.shape[0]
        H = dh_all.shape[1]
        dxf = np.empty((T, H), dtype=dh_all.dtype)
        dxc = np.empty((T, H), dtype=dh_all.dtype)
        dUf = np.zeros(Uf.shape, dtype=dh_all.dtype)
        dUc = np.zeros(Uc.shape, dtype=dh_all.dtype)
        carry = np.zeros(H, dtype=dh_all.dtype)
        df = np.empty(H, dtype=dh_all.dtype)
        dhprev = np.empty(H, dtype=dh_all.dtype)
        for t in range(T - 1, -1, -1):
            hprev = h_all[t - 1] if t > 0 else h0
            for j in range(H):
                dh = dh_all[t, j] + carry[j]
                f = f_st[t, j]
                c = c_st[t, j]
                df[j] = dh * (c - hprev[j])
                dhprev[j] = dh * (1.0 - f)
                dxc[t, j] = dh * f * (1.0 - c * c)
            dfh = Uc @ dxc[t]
            for j in range(H):
                f = f_st[t, j]
                df[j] += dfh[j] * hprev[j]
                dhprev[j] += dfh[j] * f
                dxf[t, j] = df[j] * f * (1.0 - f)
            dhprev += Uf @ dxf[t]
            for i in range(H):
                hp = hprev[i]
                fhp = f_st[t, i] * hp
                for k in range(H):
                    dUc[i, k] += fhp * dxc[t, k]
                    dUf[i, k] += hp * dxf[t, k]
            carry[:] = dhprev
        return dxf, dxc, dUf, dUc, carry

    @njit(cache=True, inline="always")
    def _lse2(a, b):
        if a < b:
            a, b = b, a
        if a == _NEG_INF:
            return _NEG_INF
        return a + math.log1p(math.exp(b - a))

    @njit(cache=True)
    def _ctc_alpha_jit(lp, ext, skip_ok):
        T = lp.shape[0]
        S = ext.shape[0]
        alpha = np.full((T, S), _NEG_INF, dtype=lp.dtype)
        alpha[0, 0] = lp[0, ext[0]]
        if S > 1:
            alpha[0, 1] = lp[0, ext[1]]
        for t in range(1, T):
            for s in range(S - 1, -1, -1):
                acc = alpha[t - 1, s]
                if s > 0:
                    acc = _lse2(acc, alpha[t - 1, s - 1])
                if s > 1 and skip_ok[s]:
                    acc = _lse2(acc, alpha[t - 1, s - 2])
                alpha[t, s] = acc + lp[t, ext[s]]
        if S > 1:
            log_z = _lse2(alpha[T - 1, S - 1], alpha[T - 1, S - 2])
        else:
            log_z = alpha[T - 1, S - 1]
        return alpha, float(log_z)

    @njit(cache=True)
    def _ctc_beta_jit(lp, ext, skip_ok):
        T = lp.shape[0]
        S = ext.shape[0]
        beta = np.full((T, S), _NEG_INF, dtype=lp.dtype)
        beta[T - 1, S - 1] = 0.0
        if S > 1:
            beta[T - 1, S - 2] = 0.0
        for t in range(T - 2, -1, -1):
            for s in range(S):
                acc = beta[t + 1, s] + lp[t + 1, ext[s]]
                if s + 1 < S:
                    acc = _lse2(acc, beta[t + 1, s + 1] + lp[t + 1, ext[s + 1]])
                if s + 2 < S and skip_ok[s + 2]:
                    acc = _lse2(acc, beta[t + 1, s + 2] + lp[t + 1, ext[s + 2]])
                beta[t, s] = acc
        return beta

    @njit(cache=True)
    def _ctc_grid_grad_jit(prob_grid, lp, ext, alpha, beta, log_z):
        T = prob_grid.shape[0]
        V = prob_grid.shape[1]
        S = ext.shape[0]
        grad = np.zeros((T, V), dtype=prob_grid.dtype)
        for t in range(T):
            for s in range(S):
                g = alpha[t, s] + beta[t, s]
                if g == _NEG_INF:
                    continue
                grad[t, ext[s]] -= math.exp(g - lp[t, ext[s]] - log_z)
        return grad

    ugrnn_forward = _ugrnn_forward_jit
    ugrnn_backward = _ugrnn_backward_jit
    mgu_forward = _mgu_forward_jit
    mgu_backward = _mgu_backward_jit
    ctc_alpha = _ctc_alpha_jit
    ctc_beta = _ctc_beta_jit
    ctc_grid_grad = _ctc_grid_grad_jit
else:
    ugrnn_forward = ugrnn_forward_np
    ugrnn_backward = ugrnn_backward_np
    mgu_forward = mgu_forward_np
    mgu_backward = mgu_backward_np
    ctc_alpha = ctc_alpha_np
    ctc_beta = ctc_beta_np
    ctc_grid_grad = ctc_grid_grad_np
