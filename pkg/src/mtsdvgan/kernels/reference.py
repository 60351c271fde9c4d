"""Pure NumPy implementation of the recurrent kernels.

This is the fallback backend: identical semantics to the compiled
extension, written with vectorized NumPy over the batch dimension and a
Python loop over timesteps.  The cache layout is shared by both backends
so the surrounding tape code never needs to know which one is active.

Gate blocks are stacked along the first axis of each weight matrix in the
fixed order (forget, input, candidate, output):

    W: (4h, in)   U: (4h, h)   b: (4h,)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class StackCache:
    x: np.ndarray            # (B, k, d_in) layer-1 input sequence
    layers: list             # [(W, U, b), ...]
    h0: np.ndarray           # (L, B, h)
    c0: np.ndarray           # (L, B, h)
    G: np.ndarray            # (L, B, k, 4h) activated gates
    C: np.ndarray            # (L, B, k, h) cell states
    TC: np.ndarray           # (L, B, k, h) tanh(cell)
    H: np.ndarray            # (L, B, k, h) hidden states


@dataclass
class DecoderCache:
    stack: StackCache        # layer-1 "input sequence" holds the fed-back outputs
    Wout: np.ndarray
    bout: np.ndarray
    Y: np.ndarray            # (B, k, d) emitted sequence


def _cell_batch(x_t, h_prev, c_prev, W, U, b, hidden):
    z = x_t @ W.T + h_prev @ U.T + b
    f = _sigmoid(z[:, :hidden])
    i = _sigmoid(z[:, hidden:2 * hidden])
    g = np.tanh(z[:, 2 * hidden:3 * hidden])
    o = _sigmoid(z[:, 3 * hidden:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    gates = np.concatenate([f, i, g, o], axis=1)
    return gates, c, tc, h


def lstm_stack_forward(x, layers, h0, c0):
    """Run a stacked LSTM over a full input sequence.

    x: (B, k, d_in); layers: [(W, U, b), ...]; h0, c0: (L, B, h).
    Returns (h_top (B, k, h), cache).
    """
    B, k, _ = x.shape
    L = len(layers)
    hidden = layers[0][1].shape[1]
    dt = x.dtype
    G = np.empty((L, B, k, 4 * hidden), dtype=dt)
    C = np.empty((L, B, k, hidden), dtype=dt)
    TC = np.empty((L, B, k, hidden), dtype=dt)
    H = np.empty((L, B, k, hidden), dtype=dt)

    inp = x
    for l, (W, U, b) in enumerate(layers):
        h = h0[l]
        c = c0[l]
        for t in range(k):
            gates, c, tc, h = _cell_batch(inp[:, t, :], h, c, W, U, b, hidden)
            G[l, :, t] = gates
            C[l, :, t] = c
            TC[l, :, t] = tc
            H[l, :, t] = h
        inp = H[l]
    cache = StackCache(x=x, layers=list(layers), h0=h0, c0=c0, G=G, C=C, TC=TC, H=H)
    return H[L - 1].copy(), cache


def _layer_backward(cache, l, d_h_ext, hidden):
    """BPTT through one layer; d_h_ext is (B, k, h)."""
    W, U, b = cache.layers[l]
    B, k = d_h_ext.shape[0], d_h_ext.shape[1]
    dZ = np.empty((B, k, 4 * hidden), dtype=d_h_ext.dtype)
    dh_carry = np.zeros((B, hidden), dtype=d_h_ext.dtype)
    dc_carry = np.zeros((B, hidden), dtype=d_h_ext.dtype)
    for t in range(k - 1, -1, -1):
        f = cache.G[l, :, t, :hidden]
        i = cache.G[l, :, t, hidden:2 * hidden]
        g = cache.G[l, :, t, 2 * hidden:3 * hidden]
        o = cache.G[l, :, t, 3 * hidden:]
        tc = cache.TC[l, :, t]
        dh = d_h_ext[:, t] + dh_carry
        do = dh * tc
        dc = dc_carry + dh * o * (1.0 - tc * tc)
        c_prev = cache.C[l, :, t - 1] if t > 0 else cache.c0[l]
        dZ[:, t, :hidden] = dc * c_prev * f * (1.0 - f)
        dZ[:, t, hidden:2 * hidden] = dc * g * i * (1.0 - i)
        dZ[:, t, 2 * hidden:3 * hidden] = dc * i * (1.0 - g * g)
        dZ[:, t, 3 * hidden:] = do * o * (1.0 - o)
        dh_carry = dZ[:, t] @ U
        dc_carry = dc * f
    return dZ, dh_carry, dc_carry


def _layer_param_grads(cache, l, dZ, hidden):
    x_in = cache.x if l == 0 else cache.H[l - 1]
    B, k = dZ.shape[0], dZ.shape[1]
    n = B * k
    h_prev = np.concatenate(
        [cache.h0[l][:, None, :], cache.H[l][:, :-1, :]], axis=1
    )
    flat_z = dZ.reshape(n, 4 * hidden)
    dW = flat_z.T @ x_in.reshape(n, -1)
    dU = flat_z.T @ h_prev.reshape(n, hidden)
    db = flat_z.sum(axis=0)
    return dW, dU, db


def lstm_stack_backward(cache, d_htop, need_x_grad=True, need_param_grads=True,
                        need_state_grads=False):
    """Reverse-mode pass matching lstm_stack_forward.

    Returns (dx, [(dW, dU, db), ...], dh0, dc0); entries not requested are
    None.
    """
    L = len(cache.layers)
    hidden = cache.layers[0][1].shape[1]
    param_grads = [None] * L if need_param_grads else None
    dh0 = np.zeros_like(cache.h0) if need_state_grads else None
    dc0 = np.zeros_like(cache.c0) if need_state_grads else None

    d_ext = d_htop
    dx = None
    for l in range(L - 1, -1, -1):
        dZ, dh_c, dc_c = _layer_backward(cache, l, d_ext, hidden)
        if need_param_grads:
            param_grads[l] = _layer_param_grads(cache, l, dZ, hidden)
        if need_state_grads:
            dh0[l] = dh_c
            dc0[l] = dc_c
        if l > 0 or need_x_grad:
            W = cache.layers[l][0]
            B, k = dZ.shape[0], dZ.shape[1]
            d_ext = (dZ.reshape(B * k, 4 * hidden) @ W).reshape(B, k, -1)
            if l == 0:
                dx = d_ext
    return dx, param_grads, dh0, dc0


def decoder_forward(h0, c0, layers, Wout, bout, k):
    """Autoregressive unroll: each step's output head feeds the next input.

    First input is the zero vector; h0/c0 give the initial per-layer state.
    Returns (y (B, k, d), cache).
    """
    L = len(layers)
    B = h0.shape[1]
    hidden = layers[0][1].shape[1]
    d = Wout.shape[0]
    dt = h0.dtype
    G = np.empty((L, B, k, 4 * hidden), dtype=dt)
    C = np.empty((L, B, k, hidden), dtype=dt)
    TC = np.empty((L, B, k, hidden), dtype=dt)
    H = np.empty((L, B, k, hidden), dtype=dt)
    X1 = np.zeros((B, k, d), dtype=dt)
    Y = np.empty((B, k, d), dtype=dt)

    h = [h0[l].copy() for l in range(L)]
    c = [c0[l].copy() for l in range(L)]
    inp = np.zeros((B, d), dtype=dt)
    for t in range(k):
        X1[:, t] = inp
        for l, (W, U, b) in enumerate(layers):
            gates, c[l], tc, h[l] = _cell_batch(inp if l == 0 else h[l - 1], h[l], c[l], W, U, b, hidden)
            G[l, :, t] = gates
            C[l, :, t] = c[l]
            TC[l, :, t] = tc
            H[l, :, t] = h[l]
        y_t = h[L - 1] @ Wout.T + bout
        Y[:, t] = y_t
        inp = y_t
    stack = StackCache(x=X1, layers=list(layers), h0=h0, c0=c0, G=G, C=C, TC=TC, H=H)
    return Y.copy(), DecoderCache(stack=stack, Wout=Wout, bout=bout, Y=Y)


def decoder_backward(cache, dY, need_param_grads=True, need_state_grads=True):
    """BPTT through the autoregressive decoder.

    The feedback path (output at t is input at t+1) forces a single
    time-major reverse loop across all layers.  Returns
    ([(dW, dU, db), ...], dWout, dbout, dh0, dc0).
    """
    st = cache.stack
    L = len(st.layers)
    hidden = st.layers[0][1].shape[1]
    B, k, d = dY.shape
    dt = dY.dtype

    dZ = np.empty((L, B, k, 4 * hidden), dtype=dt)
    dY_acc = np.empty((B, k, d), dtype=dt)
    dh_carry = [np.zeros((B, hidden), dtype=dt) for _ in range(L)]
    dc_carry = [np.zeros((B, hidden), dtype=dt) for _ in range(L)]
    dx_feedback = np.zeros((B, d), dtype=dt)

    for t in range(k - 1, -1, -1):
        dy = dY[:, t] + dx_feedback
        dY_acc[:, t] = dy
        d_from_above = dy @ cache.Wout
        for l in range(L - 1, -1, -1):
            f = st.G[l, :, t, :hidden]
            i = st.G[l, :, t, hidden:2 * hidden]
            g = st.G[l, :, t, 2 * hidden:3 * hidden]
            o = st.G[l, :, t, 3 * hidden:]
            tc = st.TC[l, :, t]
            dh = d_from_above + dh_carry[l]
            do = dh * tc
            dc = dc_carry[l] + dh * o * (1.0 - tc * tc)
            c_prev = st.C[l, :, t - 1] if t > 0 else st.c0[l]
            dZ[l, :, t, :hidden] = dc * c_prev * f * (1.0 - f)
            dZ[l, :, t, hidden:2 * hidden] = dc * g * i * (1.0 - i)
            dZ[l, :, t, 2 * hidden:3 * hidden] = dc * i * (1.0 - g * g)
            dZ[l, :, t, 3 * hidden:] = do * o * (1.0 - o)
            W, U, _ = st.layers[l]
            dh_carry[l] = dZ[l, :, t] @ U
            dc_carry[l] = dc * f
            d_from_above = dZ[l, :, t] @ W  # input grad: to layer below, or feedback
        dx_feedback = d_from_above

    param_grads = None
    dWout = dbout = None
    if need_param_grads:
        param_grads = []
        for l in range(L):
            dW, dU, db = _layer_param_grads(st, l, dZ[l], hidden)
            param_grads.append((dW, dU, db))
        n = B * k
        dWout = dY_acc.reshape(n, d).T @ st.H[L - 1].reshape(n, hidden)
        dbout = dY_acc.sum(axis=(0, 1))
    dh0 = np.stack(dh_carry) if need_state_grads else None
    dc0 = np.stack(dc_carry) if need_state_grads else None
    return param_grads, dWout, dbout, dh0, dc0
